// Command-line driver: instance generation, single runs, analysis and the
// four-series bit-width comparison.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "qprox/config.hpp"
#include "qprox/container.hpp"
#include "qprox/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitPrecondition = 3;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string bits;
  std::optional<int> outer;
  std::string out;
  bool force = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Config file (key = value lines) or a trace CSV");
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--bits", o.bits, "Bits per quantized scalar, or 'unquantized'");
  cmd->add_option("--outer", o.outer, "Outer iterations S");
  cmd->add_option("--out", o.out, "Output path");
  cmd->add_flag("--force", o.force, "Run even when the step-size precondition fails");
}

qprox::RunConfig resolve(const Overrides& o) {
  qprox::RunConfig cfg;
  if (!o.config.empty()) cfg = qprox::load_config(o.config);
  if (o.seed) cfg.master_seed = *o.seed;
  if (!o.bits.empty()) qprox::apply_setting(cfg, "bits", o.bits, "--bits " + o.bits);
  if (o.outer) cfg.outer_iters = *o.outer;
  if (!o.out.empty()) cfg.out = o.out;
  if (o.force) cfg.force = true;
  return cfg;
}

/// Writes through `fn` to cfg.out, or to stdout when no path is set.
template <typename Fn>
void emit(const std::string& path, Fn&& fn) {
  if (path.empty()) {
    fn(std::cout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  fn(out);
  if (!out) throw std::runtime_error("failed writing " + path);
}

int cmd_generate(const qprox::RunConfig& cfg, const std::string& truth_csv) {
  const qprox::ProblemInstance inst = qprox::generate_instance(cfg.instance_params());
  const std::string path = cfg.out.empty() ? "instance.qprx" : cfg.out;
  qprox::save_instance(inst, std::filesystem::path(path));
  if (!truth_csv.empty()) emit(truth_csv, [&](std::ostream& os) { qprox::export_truth_csv(inst, os); });
  const auto sm = qprox::smoothness(inst);
  std::cerr << "wrote " << path << " (N=" << inst.node_count() << ", P=" << inst.dimension()
            << ", L-bar=" << qprox::format_double(sm.max_lipschitz) << ", mu=" << qprox::format_double(sm.mu)
            << ")\n";
  return kExitOk;
}

int cmd_run_central(const qprox::RunConfig& cfg) {
  const auto run = qprox::prepare_run(cfg);
  const qprox::Trace trace = qprox::run_central(cfg, run);
  emit(cfg.out, [&](std::ostream& os) { qprox::write_run_csv(cfg, trace, os); });
  return kExitOk;
}

int cmd_run_distributed(const qprox::RunConfig& cfg) {
  const auto run = qprox::prepare_run(cfg);
  const bool save_log = cfg.save_log && cfg.bits != 0 && !cfg.out.empty();
  const auto result = qprox::run_distributed(cfg, run, save_log);
  emit(cfg.out, [&](std::ostream& os) { qprox::write_run_csv(cfg, result.trace, os); });
  if (!cfg.out.empty()) {
    emit(cfg.out + ".ledger.csv", [&](std::ostream& os) { qprox::write_ledger_csv(result.ledger, os); });
    if (save_log) qprox::save_quant_log(result.log, run.inst, std::filesystem::path(cfg.out + ".qlog"));
  }
  if (result.overflows > 0)
    std::cerr << "warning: " << result.overflows
              << " quantizer overflow events; the convergence envelope does not apply to this run\n";
  return kExitOk;
}

int cmd_analyze(const Overrides& o, const std::string& trace_path) {
  Overrides with_trace = o;
  if (with_trace.config.empty()) with_trace.config = trace_path;
  qprox::RunConfig cfg = resolve(with_trace);
  std::ifstream in(trace_path);
  if (!in) throw std::runtime_error("cannot open " + trace_path);
  const qprox::Trace trace = qprox::read_trace_csv(in);
  const auto run = qprox::prepare_run(cfg);
  const auto report = qprox::analyze_trace(cfg, run, trace);
  qprox::write_analysis_summary(report, std::cout);
  if (!o.out.empty()) emit(o.out, [&](std::ostream& os) { qprox::write_analysis_csv(report, os); });
  return kExitOk;
}

int cmd_fig1(const qprox::RunConfig& cfg) {
  const auto run = qprox::prepare_run(cfg);
  const auto fig = qprox::reproduce_fig1(cfg, run);
  emit(cfg.out, [&](std::ostream& os) { qprox::write_fig1_csv(cfg, fig, os); });
  for (const auto& series : fig.series) {
    std::cerr << series.label << ": floor " << qprox::format_double(qprox::noise_floor(series.trace.gaps()))
              << ", overflows " << series.overflows << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantized distributed Prox-SVRG simulator"};
  app.require_subcommand(1);

  Overrides o;
  std::string truth_csv;
  std::string trace_path;

  auto* generate = app.add_subcommand("generate", "Generate a problem instance file");
  add_common(generate, o);
  generate->add_option("--truth", truth_csv, "Also export the generating vector as CSV");
  auto* central = app.add_subcommand("run-central", "Centralized Prox-SVRG trace");
  add_common(central, o);
  auto* distributed = app.add_subcommand("run-distributed", "Distributed quantized run");
  add_common(distributed, o);
  auto* analyze = app.add_subcommand("analyze", "Constants, rate fits and envelope verdicts for a trace");
  add_common(analyze, o);
  analyze->add_option("trace", trace_path, "Trace CSV")->required();
  auto* fig1 = app.add_subcommand("reproduce-fig1", "n = 11, 13, 15 and unquantized on one instance");
  add_common(fig1, o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (analyze->parsed()) return cmd_analyze(o, trace_path);
    const qprox::RunConfig cfg = resolve(o);
    if (generate->parsed()) return cmd_generate(cfg, truth_csv);
    if (central->parsed()) return cmd_run_central(cfg);
    if (distributed->parsed()) return cmd_run_distributed(cfg);
    if (fig1->parsed()) return cmd_fig1(cfg);
  } catch (const qprox::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n  " << e.line() << '\n';
    return kExitConfig;
  } catch (const qprox::ParameterError& e) {
    std::cerr << "precondition violated: " << e.what() << '\n';
    return kExitPrecondition;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
