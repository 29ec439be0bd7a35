#include "qprox/experiment.hpp"

#include <cmath>
#include <ostream>

#include "qprox/container.hpp"

namespace qprox {

PreparedRun prepare_run(const RunConfig& cfg) {
  ProblemInstance inst = cfg.instance.empty() ? generate_instance(cfg.instance_params())
                                              : load_instance(std::filesystem::path(cfg.instance));
  SmoothnessReport sm = smoothness(inst);
  const double eta = cfg.step > 0.0 ? cfg.step : cfg.step_scale / sm.max_lipschitz;
  const int inner = cfg.inner_iters > 0 ? cfg.inner_iters : cfg.inner_scale * inst.node_count();
  if (cfg.outer_iters < 0) throw ParameterError("outer_iters must be >= 0");
  if (!cfg.force) check_step_size(eta, sm.max_lipschitz, inner);
  if (cfg.bits != 0) {
    if (cfg.bits < 2 || cfg.bits > 32) throw ParameterError("bits must satisfy 2 <= n <= 32");
    if (!(cfg.kappa > 0.0 && cfg.kappa < 1.0)) throw ParameterError("kappa must satisfy 0 < kappa < 1");
  }
  ReferenceSolution ref = exact_reference(inst, kReferenceTolerance);
  return PreparedRun{std::move(inst), std::move(sm), std::move(ref), eta, inner};
}

Trace run_central(const RunConfig& cfg, const PreparedRun& run) {
  SvrgOptions opts;
  opts.eta = run.eta;
  opts.inner = run.inner;
  opts.outer = cfg.outer_iters;
  opts.sampler_seed = cfg.resolved_sampler_seed();
  opts.force = cfg.force;
  return inexact_prox_svrg(run.inst, run.reference, opts, ErrorInjector::none()).trace;
}

DistributedResult run_distributed(const RunConfig& cfg, const PreparedRun& run, bool keep_log) {
  DistributedOptions opts;
  opts.eta = run.eta;
  opts.inner = run.inner;
  opts.outer = cfg.outer_iters;
  opts.sampler_seed = cfg.resolved_sampler_seed();
  opts.dither_seed = cfg.resolved_dither_seed();
  opts.quant = cfg.quantization();
  opts.force = cfg.force;
  opts.keep_log = keep_log;
  return run_distributed(run.inst, run.reference, opts);
}

void write_run_csv(const RunConfig& cfg, const Trace& trace, std::ostream& out) {
  write_trace_csv(trace, out, {provenance_row(cfg)});
}

void write_ledger_csv(const BitLedger& ledger, std::ostream& out) {
  static const char* kinds[] = {"state_outer", "grad_outer", "state_inner", "grad_inner"};
  out << "s,kind,messages,payload_bits,header_bits\n";
  const auto& rounds = ledger.rounds();
  for (std::size_t s = 0; s < rounds.size(); ++s) {
    const auto& r = rounds[s];
    std::uint64_t messages = 0;
    for (int k = 0; k < 4; ++k) {
      out << s << ',' << kinds[k] << ',' << r.messages_by_kind[k] << ',' << r.payload_by_kind[k]
          << ',' << r.messages_by_kind[k] * 8 * kFrameHeaderBytes << '\n';
      messages += r.messages_by_kind[k];
    }
    out << s << ",total," << messages << ',' << r.payload() << ',' << r.header_bits << '\n';
  }
}

Fig1Result reproduce_fig1(const RunConfig& cfg, const PreparedRun& run) {
  Fig1Result fig;
  for (int bits : {11, 13, 15, 0}) {
    RunConfig c = cfg;
    c.bits = bits;
    DistributedResult r = run_distributed(c, run, false);
    Fig1Series series;
    series.label = bits == 0 ? "unquantized" : "n" + std::to_string(bits);
    series.bits = bits;
    series.trace = std::move(r.trace);
    series.overflows = r.overflows;
    fig.series.push_back(std::move(series));
  }
  return fig;
}

void write_fig1_csv(const RunConfig& cfg, const Fig1Result& fig, std::ostream& out) {
  out << "# " << provenance_row(cfg) << '\n';
  out << "s";
  for (const auto& series : fig.series) out << ",gap_" << series.label << ",bits_" << series.label;
  out << '\n';
  const std::size_t rows = fig.series.empty() ? 0 : fig.series.front().trace.rows.size();
  for (std::size_t k = 0; k < rows; ++k) {
    out << fig.series.front().trace.rows[k].s;
    for (const auto& series : fig.series) {
      const TraceRow& row = series.trace.rows.at(k);
      out << ',' << format_double(row.gap) << ',' << row.bits_cum;
    }
    out << '\n';
  }
}

double noise_floor(const std::vector<double>& gaps) {
  return tail_mean(gaps, std::min<int>(10, static_cast<int>(gaps.size())));
}

AnalysisReport analyze_trace(const RunConfig& cfg, const PreparedRun& run, const Trace& trace) {
  AnalysisReport rep;
  rep.max_lipschitz = run.smooth.max_lipschitz;
  rep.mu = run.smooth.mu;
  rep.eta = run.eta;
  rep.inner = run.inner;
  if (rep.mu > 0.0) rep.theorem1 = theorem1_constants(rep.mu, rep.max_lipschitz, rep.eta, rep.inner);
  rep.overflows = trace.total_overflows();

  const std::vector<double> gaps = trace.gaps();
  try {
    rep.gap_fit = fit_linear_rate(gaps);
    rep.gap_fit_ok = true;
  } catch (const FitRefused&) {
  }

  rep.quantized = cfg.bits != 0;
  if (!rep.quantized || rep.mu <= 0.0 || gaps.empty()) return rep;
  const EnvelopeParams p = envelope_params(run.inst, run.smooth, run.eta, run.inner, cfg.quantization());
  rep.envelope = envelope_constants(p);

  std::vector<double> gammas = trace.gammas();
  if (!gammas.empty()) gammas.pop_back();  // the final row has no inner loop
  try {
    rep.gamma_fit = fit_linear_rate(gammas);
    rep.gamma_fit_ok = true;
  } catch (const FitRefused&) {
  }
  rep.gamma_violations = 0;
  for (std::size_t s = 0; s < gammas.size(); ++s)
    if (gammas[s] > 1.1 * rep.envelope.C * std::pow(p.kappa, static_cast<double>(s))) ++rep.gamma_violations;
  if (rep.envelope.applicable) {
    rep.envelope_violations = 0;
    for (std::size_t s = 0; s < gaps.size(); ++s)
      if (gaps[s] > envelope(p, static_cast<int>(s), gaps.front())) ++rep.envelope_violations;
  }
  return rep;
}

void write_analysis_summary(const AnalysisReport& r, std::ostream& out) {
  out << "L-bar              " << format_double(r.max_lipschitz) << '\n'
      << "mu                 " << format_double(r.mu) << '\n'
      << "eta                " << format_double(r.eta) << '\n'
      << "T                  " << r.inner << '\n';
  if (r.mu > 0.0) {
    out << "alpha              " << format_double(r.theorem1.alpha)
        << (r.theorem1.applicable ? "" : "  (alpha >= 1: linear rate not guaranteed)") << '\n'
        << "beta               " << format_double(r.theorem1.beta) << '\n';
  } else {
    out << "alpha              n/a (no strong convexity)\n";
  }
  if (r.gap_fit_ok) {
    out << "gap rate           " << format_double(r.gap_fit.rate) << " (R^2 " << format_double(r.gap_fit.r_squared)
        << ", " << r.gap_fit.count << " points)";
    if (r.mu > 0.0) out << (r.gap_fit.rate <= r.theorem1.alpha ? "  <= alpha" : "  > alpha");
    out << '\n';
  } else {
    out << "gap rate           refused (fewer than 5 points above the noise floor)\n";
  }
  if (!r.quantized) return;
  out << "overflows          " << r.overflows << '\n'
      << "C                  " << format_double(r.envelope.C) << '\n'
      << "envelope           " << (r.envelope.applicable ? "applicable" : "inapplicable (alpha >= kappa)") << '\n';
  if (r.gamma_fit_ok)
    out << "Gamma-hat rate     " << format_double(r.gamma_fit.rate) << " (R^2 "
        << format_double(r.gamma_fit.r_squared) << ")\n";
  if (r.envelope_violations >= 0)
    out << "gap > envelope     " << r.envelope_violations << " rows -> "
        << (r.envelope_violations == 0 && r.overflows == 0 ? "PASS" : "FAIL") << '\n';
  out << "Gamma-hat > 1.1Ck^s " << r.gamma_violations << " rows -> " << (r.gamma_violations == 0 ? "PASS" : "FAIL")
      << '\n';
}

void write_analysis_csv(const AnalysisReport& r, std::ostream& out) {
  out << "quantity,value\n"
      << "max_lipschitz," << format_double(r.max_lipschitz) << '\n'
      << "mu," << format_double(r.mu) << '\n'
      << "eta," << format_double(r.eta) << '\n'
      << "inner," << r.inner << '\n'
      << "alpha," << format_double(r.theorem1.alpha) << '\n'
      << "beta," << format_double(r.theorem1.beta) << '\n';
  if (r.gap_fit_ok)
    out << "gap_rate," << format_double(r.gap_fit.rate) << '\n'
        << "gap_r_squared," << format_double(r.gap_fit.r_squared) << '\n';
  if (!r.quantized) return;
  out << "overflows," << r.overflows << '\n'
      << "C," << format_double(r.envelope.C) << '\n'
      << "envelope_applicable," << (r.envelope.applicable ? 1 : 0) << '\n';
  if (r.gamma_fit_ok) out << "gamma_rate," << format_double(r.gamma_fit.rate) << '\n';
  if (r.envelope_violations >= 0) out << "envelope_violations," << r.envelope_violations << '\n';
  out << "gamma_violations," << r.gamma_violations << '\n';
}

}  // namespace qprox
