#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "qprox/central.hpp"
#include "qprox/distributed.hpp"
#include "qprox/problem.hpp"

namespace qprox {

/// Inputs of the quantized convergence envelope.
struct EnvelopeParams {
  int nodes = 0;       // N
  int max_degree = 0;  // D = max |N(i)|
  int inner = 0;       // T
  int max_block = 0;   // m-bar
  int bits = 0;        // n
  double max_lipschitz = 0.0;
  double mu = 0.0;
  double eta = 0.0;
  double kappa = 0.0;
  IntervalConstants intervals{};  // C_a, C_b, C_c, C_d
};

/// Fills the structural fields from an instance and a run configuration.
EnvelopeParams envelope_params(const ProblemInstance& inst, const SmoothnessReport& sm, double eta,
                               int inner, const QuantizationParams& quant);

/// C = D T m-bar / (12 (2^n - 1)^2) * (2 L^2 (C_a + C_c) + 2 ((N + 1)/N) C_b + C_d).
double gamma_bound_C(const EnvelopeParams& p);

/// Derived constants of the envelope. `applicable` is alpha < kappa < 1.
struct EnvelopeConstants {
  double alpha = 0.0;
  double beta = 0.0;
  double C = 0.0;
  bool applicable = false;
};

EnvelopeConstants envelope_constants(const EnvelopeParams& p);

/// kappa^s (G0 + beta C / (1 - alpha/kappa)). Throws ParameterError when
/// alpha >= kappa.
double envelope(const EnvelopeParams& p, int s, double initial_gap);

/// Gamma-hat^(s): sum over the round of ||e^{s_t}||^2 rebuilt from the log.
double error_energy(const QuantLog& log, const ProblemInstance& inst, int s);

/// Per-step right-hand side of the second-moment bound on ||e^{s_t}||^2,
/// with logged squared errors standing in for expectations.
double lemma1_step_bound(const ProblemInstance& inst, const OuterErrors& outer,
                         const InnerErrors& inner, double max_lipschitz);

/// The series has too few usable points for a rate fit.
class FitRefused : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RateFit {
  double rate = 0.0;       // rho, per-step factor
  double log_rate = 0.0;   // slope of log(value) against index
  double r_squared = 0.0;
  int first = 0;           // window start index
  int count = 0;           // window length
};

/// Least-squares line through (k, log values[k]) for every k. All values
/// must be positive; needs at least 5 points.
RateFit fit_log_linear(std::span<const double> values, int first_index = 0);

/// Fits the decay phase only: the longest prefix whose values are positive
/// and exceed 10x the magnitude of the final value.
RateFit fit_linear_rate(std::span<const double> series);

/// Mean of the last `count` entries.
double tail_mean(std::span<const double> series, int count);

/// Elementwise mean of equally long series.
std::vector<double> mean_series(const std::vector<std::vector<double>>& runs);

}  // namespace qprox
