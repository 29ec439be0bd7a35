#include "qprox/analysis.hpp"

#include <cmath>
#include <sstream>

namespace qprox {

EnvelopeParams envelope_params(const ProblemInstance& inst, const SmoothnessReport& sm, double eta,
                               int inner, const QuantizationParams& quant) {
  EnvelopeParams p;
  p.nodes = inst.node_count();
  p.max_degree = inst.graph().max_degree();
  p.inner = inner;
  p.max_block = inst.max_block_dim();
  p.bits = quant.bits;
  p.max_lipschitz = sm.max_lipschitz;
  p.mu = sm.mu;
  p.eta = eta;
  p.kappa = quant.kappa;
  p.intervals = quant.intervals;
  return p;
}

double gamma_bound_C(const EnvelopeParams& p) {
  if (p.nodes <= 0 || p.max_degree <= 0 || p.inner <= 0 || p.max_block <= 0 || p.bits <= 0)
    throw ParameterError("envelope parameters N, D, T, m-bar, n must be positive");
  for (double c : p.intervals)
    if (c < 0.0) throw ParameterError("interval constants must be non-negative");
  const double levels = std::ldexp(1.0, p.bits) - 1.0;
  const double n = static_cast<double>(p.nodes);
  const double l2 = p.max_lipschitz * p.max_lipschitz;
  const auto& c = p.intervals;
  const double mix = 2.0 * l2 * (c[0] + c[2]) + 2.0 * ((n + 1.0) / n) * c[1] + c[3];
  return static_cast<double>(p.max_degree) * p.inner * p.max_block / (12.0 * levels * levels) * mix;
}

EnvelopeConstants envelope_constants(const EnvelopeParams& p) {
  const Theorem1Constants t1 = theorem1_constants(p.mu, p.max_lipschitz, p.eta, p.inner);
  EnvelopeConstants e;
  e.alpha = t1.alpha;
  e.beta = t1.beta;
  e.C = gamma_bound_C(p);
  e.applicable = e.alpha < p.kappa && p.kappa < 1.0;
  return e;
}

double envelope(const EnvelopeParams& p, int s, double initial_gap) {
  const EnvelopeConstants e = envelope_constants(p);
  if (!e.applicable) {
    std::ostringstream os;
    os << "envelope inapplicable: requires alpha < kappa < 1, got alpha = " << e.alpha
       << ", kappa = " << p.kappa;
    throw ParameterError(os.str());
  }
  return std::pow(p.kappa, s) * (initial_gap + e.beta * e.C / (1.0 - e.alpha / p.kappa));
}

double error_energy(const QuantLog& log, const ProblemInstance& inst, int s) {
  if (s < 0 || s >= static_cast<int>(log.outer.size()) || s >= static_cast<int>(log.steps.size()))
    throw std::out_of_range("quantization log has no outer round " + std::to_string(s));
  ErrorReconstructor rec(inst);
  rec.begin_round(log.outer[s]);
  double total = 0.0;
  for (const auto& step : log.steps[s]) total += rec.step(log.outer[s], step).squaredNorm();
  return total;
}

double lemma1_step_bound(const ProblemInstance& inst, const OuterErrors& outer,
                         const InnerErrors& inner, double max_lipschitz) {
  const int l = inner.active;
  double a_energy = 0.0;
  for (int j : inst.graph().neighborhood(l))
    a_energy += outer.state.segment(inst.block_offset(j), inst.block_dim(j)).squaredNorm();
  double b_all = 0.0;
  for (const auto& b : outer.grad) b_all += b.squaredNorm();
  const double n = inst.node_count();
  const double l2 = max_lipschitz * max_lipschitz;
  return 2.0 * l2 * inner.state.squaredNorm() + 2.0 * l2 * a_energy + inner.grad.squaredNorm() +
         2.0 * outer.grad.at(l).squaredNorm() + 2.0 / (n * n) * b_all;
}

RateFit fit_log_linear(std::span<const double> values, int first_index) {
  const int k = static_cast<int>(values.size());
  if (k < 5) throw FitRefused("rate fit needs at least 5 points, got " + std::to_string(k));
  double sx = 0.0, sy = 0.0;
  std::vector<double> y(values.size());
  for (int i = 0; i < k; ++i) {
    if (!(values[i] > 0.0)) throw FitRefused("rate fit needs strictly positive values");
    y[i] = std::log(values[i]);
    sx += i;
    sy += y[i];
  }
  const double mx = sx / k, my = sy / k;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int i = 0; i < k; ++i) {
    sxx += (i - mx) * (i - mx);
    sxy += (i - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  RateFit fit;
  fit.log_rate = sxy / sxx;
  fit.rate = std::exp(fit.log_rate);
  // A perfectly flat series is a perfect fit with zero slope.
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  fit.first = first_index;
  fit.count = k;
  return fit;
}

RateFit fit_linear_rate(std::span<const double> series) {
  if (series.empty()) throw FitRefused("rate fit on an empty series");
  const double floor = 10.0 * std::abs(series.back());
  std::size_t end = 0;
  while (end < series.size() && series[end] > 0.0 && series[end] > floor) ++end;
  if (end < 5)
    throw FitRefused("fewer than 5 points above the noise floor (" + std::to_string(end) + ")");
  return fit_log_linear(series.first(end), 0);
}

double tail_mean(std::span<const double> series, int count) {
  if (count <= 0 || static_cast<std::size_t>(count) > series.size())
    throw ParameterError("tail length must lie in [1, series length]");
  double total = 0.0;
  for (std::size_t k = series.size() - count; k < series.size(); ++k) total += series[k];
  return total / count;
}

std::vector<double> mean_series(const std::vector<std::vector<double>>& runs) {
  if (runs.empty()) return {};
  std::vector<double> mean(runs.front().size(), 0.0);
  for (const auto& r : runs) {
    if (r.size() != mean.size()) throw DimensionError("series lengths differ");
    for (std::size_t k = 0; k < r.size(); ++k) mean[k] += r[k];
  }
  for (double& v : mean) v /= static_cast<double>(runs.size());
  return mean;
}

}  // namespace qprox
