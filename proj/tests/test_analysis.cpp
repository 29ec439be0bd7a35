#include <cmath>

#include "doctest.h"
#include "qprox/analysis.hpp"

using namespace qprox;

namespace {

EnvelopeParams experiment_params() {
  EnvelopeParams p;
  p.nodes = 40;
  p.max_degree = 9;
  p.inner = 80;
  p.max_block = 10;
  p.bits = 11;
  p.max_lipschitz = 1.0;
  p.mu = 1.0;
  p.eta = 0.1;
  p.kappa = 0.97;
  p.intervals = {50.0, 300.0, 50.0, 400.0};
  return p;
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("gamma bound constant") {
  EnvelopeParams p = experiment_params();
  // Exact rational value 729000 / 4190209.
  CHECK(gamma_bound_C(p) == doctest::Approx(729000.0 / 4190209.0).epsilon(1e-14));
  CHECK(gamma_bound_C(p) == doctest::Approx(0.17397700210180447).epsilon(1e-14));

  EnvelopeParams doubled = p;
  for (double& c : doubled.intervals) c *= 2.0;
  CHECK(gamma_bound_C(doubled) == doctest::Approx(2.0 * gamma_bound_C(p)).epsilon(1e-15));

  EnvelopeParams silent = p;
  silent.intervals = {0.0, 0.0, 0.0, 0.0};
  CHECK(gamma_bound_C(silent) == 0.0);

  // The state intervals enter as (C_a + C_c): swapping them changes nothing.
  EnvelopeParams swapped = p;
  swapped.intervals = {20.0, 300.0, 80.0, 400.0};
  CHECK(gamma_bound_C(swapped) == doctest::Approx(gamma_bound_C(p)).epsilon(1e-15));

  EnvelopeParams bad = p;
  bad.inner = 0;
  CHECK_THROWS_AS(gamma_bound_C(bad), ParameterError);
}

TEST_CASE("envelope") {
  const EnvelopeParams p = experiment_params();
  const EnvelopeConstants e = envelope_constants(p);
  CHECK(e.alpha == doctest::Approx(1.0 / 4.8 + 32.4 / 48.0));
  CHECK(e.applicable);
  CHECK(envelope(p, 0, 2.0) == doctest::Approx(2.0 + e.beta * e.C / (1.0 - e.alpha / p.kappa)).epsilon(1e-15));
  double prev = envelope(p, 0, 2.0);
  for (int s = 1; s < 300; ++s) {
    const double cur = envelope(p, s, 2.0);
    CHECK(cur < prev);
    prev = cur;
  }

  EnvelopeParams quiet = p;
  quiet.intervals = {0.0, 0.0, 0.0, 0.0};
  CHECK(envelope(quiet, 7, 3.0) == doctest::Approx(std::pow(0.97, 7) * 3.0).epsilon(1e-15));

  EnvelopeParams slow = p;
  slow.kappa = 0.85;  // below alpha
  CHECK_FALSE(envelope_constants(slow).applicable);
  CHECK_THROWS_AS(envelope(slow, 1, 1.0), ParameterError);
}

TEST_CASE("rate fits") {
  std::vector<double> geometric;
  for (int s = 0; s < 60; ++s) geometric.push_back(3.0 * std::pow(0.9, s));
  const RateFit f = fit_linear_rate(geometric);
  CHECK(f.rate == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(std::abs(f.r_squared - 1.0) <= 1e-12);
  CHECK(f.count >= 5);
  // Window stops where values reach 10x the final value.
  CHECK(geometric[f.count - 1] > 10.0 * geometric.back());
  CHECK(geometric[f.count] <= 10.0 * geometric.back());

  std::vector<double> plateau(geometric.begin(), geometric.begin() + 30);
  for (int k = 0; k < 30; ++k) plateau.push_back(plateau[29]);
  const RateFit g = fit_linear_rate(plateau);
  CHECK(g.rate == doctest::Approx(0.9).epsilon(1e-12));

  CHECK_THROWS_AS(fit_linear_rate(std::vector<double>(20, 1.0)), FitRefused);
  CHECK_THROWS_AS(fit_linear_rate(std::vector<double>{1.0, 0.1, 0.01, 0.001}), FitRefused);
  CHECK_THROWS_AS(fit_log_linear(std::vector<double>{1.0, 0.5, -0.1, 0.2, 0.1}), FitRefused);
}

TEST_CASE("series helpers") {
  const std::vector<double> v{1, 2, 3, 4, 5};
  CHECK(tail_mean(v, 2) == 4.5);
  CHECK_THROWS_AS(tail_mean(v, 6), ParameterError);
  const auto m = mean_series({{1, 2}, {3, 6}});
  CHECK(m == std::vector<double>{2, 4});
  CHECK_THROWS_AS(mean_series({{1}, {1, 2}}), DimensionError);
}

}  // TEST_SUITE
