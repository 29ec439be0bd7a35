#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "qprox/problem.hpp"
#include "qprox/trace.hpp"

namespace qprox {

/// Deterministic proximal-gradient iteration exceeded its iteration budget.
class NonConvergenceError : public std::runtime_error {
 public:
  NonConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

struct ReferenceSolution {
  Vector x;
  double objective = 0.0;
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> history;  // G along the iterations, when requested
};

/// Largest Lipschitz constant max_i 2 sigma_max(H_i)^2.
double max_lipschitz(const ProblemInstance& inst);

/// Full proximal-gradient iteration x <- prox(x - eta grad F(x)) from x = 0
/// until ||x - x+|| / eta <= tol.
ReferenceSolution exact_reference(const ProblemInstance& inst, double eta, double tol, int max_iter,
                                  bool record_history = false);

/// Same with eta = 1 / lambda_max of the Hessian of F.
ReferenceSolution exact_reference(const ProblemInstance& inst, double tol = 1e-12,
                                  int max_iter = 1'000'000);

/// e^{s_t}[outer][inner], each of dimension P.
using ErrorSequence = std::vector<std::vector<Vector>>;

/// Additive gradient error for the inexact method.
struct ErrorInjector {
  enum class Kind { None, GaussianDecaying, Replay };

  Kind kind = Kind::None;
  double sigma0 = 0.0;  // per-coordinate standard deviation at s = 0
  double decay = 0.0;   // energy decays as decay^s
  std::uint64_t seed = 0;
  std::shared_ptr<const ErrorSequence> sequence;

  static ErrorInjector none() { return {}; }
  /// i.i.d. N(0, sigma0^2 decay^s) per coordinate, so Gamma^(s) is
  /// proportional to decay^s.
  static ErrorInjector gaussian_decaying(double sigma0, double decay, std::uint64_t seed);
  static ErrorInjector replay(std::shared_ptr<const ErrorSequence> sequence);

  /// Error for step (s, t); writes nothing and returns false for None.
  bool draw(int s, int t, int dimension, Vector& out) const;
};

struct SvrgOptions {
  double eta = 0.0;
  int inner = 1;  // T
  int outer = 1;  // S
  std::uint64_t sampler_seed = 0;
  bool force = false;  // run even when eta >= 1/(4 L-bar)
};

/// Called with (s, t, x^{s_t}) for t = 1..T after every inner update.
using IterateObserver = std::function<void(int s, int t, const Vector& x)>;

struct SvrgResult {
  Trace trace;
  Vector anchor;  // x~^(S)
};

/// Inexact Prox-SVRG: anchors x~^s, full gradient g^s, T semi-stochastic
/// proximal steps with v = grad f_l(x) - grad f_l(x~) + g + e, and
/// x~^{s+1} = mean of x^{s_1..s_T}.
SvrgResult inexact_prox_svrg(const ProblemInstance& inst, const ReferenceSolution& reference,
                             const SvrgOptions& opts, const ErrorInjector& injector,
                             const IterateObserver& observer = {});

struct Theorem1Constants {
  double alpha = 0.0;
  double beta = 0.0;
  bool applicable = false;  // alpha < 1
};

/// alpha = 1/(mu eta (1 - 4 L eta) T) + 4 L eta (T + 1) / ((1 - 4 L eta) T),
/// beta = eta / (T (1 - 4 L eta)).
Theorem1Constants theorem1_constants(double mu, double max_lipschitz, double eta, int inner);

/// Throws ParameterError unless 0 < eta < 1/(4 L-bar) and T >= 1.
void check_step_size(double eta, double max_lipschitz, int inner);

}  // namespace qprox
