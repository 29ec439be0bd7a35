#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "qprox/analysis.hpp"
#include "qprox/central.hpp"
#include "qprox/config.hpp"
#include "qprox/distributed.hpp"
#include "qprox/problem.hpp"

namespace qprox {

/// An instance with its constants and reference solution, ready to run.
struct PreparedRun {
  ProblemInstance inst;
  SmoothnessReport smooth;
  ReferenceSolution reference;
  double eta = 0.0;
  int inner = 0;
};

/// Builds or loads the instance, resolves eta and T, and computes x*.
/// Throws ParameterError when eta violates 4 L-bar eta < 1 and force is off.
PreparedRun prepare_run(const RunConfig& cfg);

/// Reference solution tolerance used for all reported gaps.
inline constexpr double kReferenceTolerance = 1e-12;

Trace run_central(const RunConfig& cfg, const PreparedRun& run);
DistributedResult run_distributed(const RunConfig& cfg, const PreparedRun& run, bool keep_log);

/// Writes the trace with the provenance row first.
void write_run_csv(const RunConfig& cfg, const Trace& trace, std::ostream& out);

/// One line per outer round and message kind: payload bits and message
/// counts, plus header bits.
void write_ledger_csv(const BitLedger& ledger, std::ostream& out);

struct Fig1Series {
  std::string label;  // "n11", ..., "unquantized"
  int bits = 0;       // 0 for unquantized
  Trace trace;
  std::uint64_t overflows = 0;
};

struct Fig1Result {
  std::vector<Fig1Series> series;
};

/// n in {11, 13, 15} plus the unquantized run, all on one instance with the
/// same sampler and dither seeds.
Fig1Result reproduce_fig1(const RunConfig& cfg, const PreparedRun& run);

/// Columns s, then gap_<label>, bits_<label> for each series.
void write_fig1_csv(const RunConfig& cfg, const Fig1Result& fig, std::ostream& out);

/// Noise floor of a gap series: mean over its last 10 rows.
double noise_floor(const std::vector<double>& gaps);

struct AnalysisReport {
  double max_lipschitz = 0.0;
  double mu = 0.0;
  double eta = 0.0;
  int inner = 0;
  Theorem1Constants theorem1;
  bool quantized = false;
  EnvelopeConstants envelope;
  bool gap_fit_ok = false;
  RateFit gap_fit;
  bool gamma_fit_ok = false;
  RateFit gamma_fit;
  std::uint64_t overflows = 0;
  int envelope_violations = -1;  // rows above the envelope; -1 when not evaluated
  int gamma_violations = -1;     // rows with Gamma-hat > 1.1 C kappa^s
};

AnalysisReport analyze_trace(const RunConfig& cfg, const PreparedRun& run, const Trace& trace);
void write_analysis_summary(const AnalysisReport& report, std::ostream& out);
void write_analysis_csv(const AnalysisReport& report, std::ostream& out);

}  // namespace qprox
