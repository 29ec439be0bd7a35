#include <cmath>
#include <cstring>

#include "doctest.h"
#include "helpers.hpp"
#include "qprox/central.hpp"

using namespace qprox;
using namespace qprox::testing;

namespace {

/// Semi-stochastic direction for a fixed active node, assembled from the
/// instance primitives (no error term).
Vector direction(const ProblemInstance& inst, const Vector& x, const Vector& anchor, int l) {
  Vector v = inst.full_gradient(anchor);
  v += inst.lift(l, inst.local_gradient(l, inst.gather(x, l)));
  v -= inst.lift(l, inst.local_gradient(l, inst.gather(anchor, l)));
  return v;
}

SvrgOptions options_for(const ProblemInstance& inst, int inner, int outer, std::uint64_t seed) {
  SvrgOptions o;
  o.eta = 0.1 / max_lipschitz(inst);
  o.inner = inner;
  o.outer = outer;
  o.sampler_seed = seed;
  return o;
}

}  // namespace

TEST_SUITE("central") {

TEST_CASE("reference solver recovers least squares without regularization") {
  const Graph single = Graph::from_edges(1, {});
  Matrix h(3, 3);
  h << 2, 0.3, 0, -0.1, 1.5, 0.2, 0.4, 0, 1.8;
  Vector rhs(3);
  rhs << 1, -2, 0.5;
  const ProblemInstance inst(single, {3}, {h}, {rhs}, Regularizer::l1(0.0), Vector::Zero(3));
  const ReferenceSolution sol = exact_reference(inst, 1e-12);
  const Vector exact = h.fullPivLu().solve(rhs);
  CHECK((sol.x - exact).norm() <= 1e-11);
  CHECK(sol.residual <= 1e-12);
}

TEST_CASE("reference iteration is monotone and reports nonconvergence") {
  const ProblemInstance inst = small_instance(Regularizer::elastic_net(0.2, 0.05));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(inst.aggregate_hessian());
  const double eta = 1.0 / eig.eigenvalues().maxCoeff();
  const ReferenceSolution sol = exact_reference(inst, eta, 1e-12, 1'000'000, true);
  for (std::size_t k = 1; k < sol.history.size(); ++k) CHECK(sol.history[k] <= sol.history[k - 1] + 1e-15);
  try {
    exact_reference(inst, eta, 1e-12, 3);
    FAIL("expected nonconvergence");
  } catch (const NonConvergenceError& e) {
    CHECK(e.residual() > 1e-12);
  }
}

TEST_CASE("reference agrees with an independent long run at experiment size") {
  InstanceParams p;
  const ProblemInstance inst = generate_instance(p);
  const ReferenceSolution sol = exact_reference(inst, 1e-12);
  // Independent dense formulation: grad F(x) = Q x - c.
  const Matrix q = inst.aggregate_hessian();
  Vector c = Vector::Zero(inst.dimension());
  for (int i = 0; i < inst.node_count(); ++i)
    c += inst.lift(i, 2.0 * inst.design(i).transpose() * inst.response(i)) / inst.node_count();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(q, Eigen::EigenvaluesOnly);
  const double eta = 1.0 / eig.eigenvalues().maxCoeff();
  const Regularizer& reg = inst.regularizer();
  Vector x = Vector::Zero(inst.dimension());
  for (int it = 0; it < 10 * sol.iterations + 100; ++it) {
    const Vector v = x - eta * (q * x - c);
    for (int k = 0; k < v.size(); ++k) {
      const double soft = std::copysign(std::max(std::abs(v[k]) - eta * reg.lambda1, 0.0), v[k]);
      x[k] = soft / (1.0 + eta * reg.lambda2);
    }
  }
  CHECK((x - sol.x).norm() <= 1e-8);
}

TEST_CASE("contraction constants alpha and beta") {
  const Theorem1Constants c = theorem1_constants(1.0, 1.0, 0.1, 80);
  CHECK(c.alpha == doctest::Approx(1.0 / 4.8 + 32.4 / 48.0).epsilon(1e-14));
  CHECK(c.alpha == doctest::Approx(0.8833333333).epsilon(1e-9));
  CHECK(c.beta == doctest::Approx(0.1 / 48.0).epsilon(1e-14));
  CHECK(c.applicable);

  const Theorem1Constants edge = theorem1_constants(1.0, 1.0, 0.25 - 1e-9, 80);
  CHECK(edge.alpha > 1e6);
  CHECK_FALSE(edge.applicable);

  const Theorem1Constants longer = theorem1_constants(1.0, 1.0, 0.1, 100'000'000);
  CHECK(longer.alpha == doctest::Approx(0.4 / 0.6).epsilon(1e-6));

  CHECK_THROWS_AS(theorem1_constants(0.0, 1.0, 0.1, 80), ParameterError);
  CHECK_THROWS_AS(theorem1_constants(1.0, 1.0, 0.25, 80), ParameterError);
  CHECK_THROWS_AS(theorem1_constants(1.0, 1.0, 0.1, 0), ParameterError);
}

TEST_CASE("step-size precondition refuses unless forced") {
  const ProblemInstance inst = small_instance(Regularizer::elastic_net(0.1, 1.0));
  const ReferenceSolution ref = exact_reference(inst);
  SvrgOptions o = options_for(inst, 4, 1, 1);
  o.eta = 0.3 / max_lipschitz(inst);
  CHECK_THROWS_AS(inexact_prox_svrg(inst, ref, o, ErrorInjector::none()), ParameterError);
  o.force = true;
  CHECK_NOTHROW(inexact_prox_svrg(inst, ref, o, ErrorInjector::none()));
}

TEST_CASE("error-free run converges to the reference") {
  const ProblemInstance inst = small_instance(Regularizer::elastic_net(0.1, 2.0));
  const ReferenceSolution ref = exact_reference(inst);
  const SvrgResult r = inexact_prox_svrg(inst, ref, options_for(inst, 24, 150, 3), ErrorInjector::none());
  CHECK(r.trace.rows.size() == 151);
  CHECK(r.trace.rows.back().gap < 1e-8);
  for (const auto& row : r.trace.rows) CHECK(row.gap >= -1e-9);
}

TEST_CASE("single node, single inner step is gradient descent") {
  const Graph single = Graph::from_edges(1, {});
  Matrix h(2, 2);
  h << 1.0, 0.5, -0.3, 2.0;
  Vector rhs(2);
  rhs << 1.0, 1.0;
  const ProblemInstance inst(single, {2}, {h}, {rhs}, Regularizer::l1(0.0), Vector::Zero(2));
  const ReferenceSolution ref = exact_reference(inst);
  SvrgOptions o = options_for(inst, 1, 5, 8);
  const SvrgResult r = inexact_prox_svrg(inst, ref, o, ErrorInjector::none());
  Vector x = Vector::Zero(2);
  for (int s = 0; s < 5; ++s) x = x - o.eta * inst.full_gradient(x);
  CHECK((r.anchor - x).norm() <= 1e-15);
}

TEST_CASE("replaying zero errors is bit-identical to no errors") {
  const ProblemInstance inst = small_instance(Regularizer::elastic_net(0.1, 1.0));
  const ReferenceSolution ref = exact_reference(inst);
  const SvrgOptions o = options_for(inst, 12, 6, 21);
  auto zeros = std::make_shared<ErrorSequence>(6, std::vector<Vector>(12, Vector::Zero(inst.dimension())));
  const SvrgResult a = inexact_prox_svrg(inst, ref, o, ErrorInjector::none());
  const SvrgResult b = inexact_prox_svrg(inst, ref, o, ErrorInjector::replay(zeros));
  CHECK(a.trace.rows == b.trace.rows);
  CHECK(std::memcmp(a.anchor.data(), b.anchor.data(), sizeof(double) * a.anchor.size()) == 0);
  auto short_seq = std::make_shared<ErrorSequence>(1, std::vector<Vector>(12, Vector::Zero(inst.dimension())));
  CHECK_THROWS_AS(inexact_prox_svrg(inst, ref, o, ErrorInjector::replay(short_seq)), std::out_of_range);
}

TEST_CASE("runs are deterministic per seed") {
  const ProblemInstance inst = small_instance(Regularizer::elastic_net(0.1, 1.0));
  const ReferenceSolution ref = exact_reference(inst);
  const auto inj = ErrorInjector::gaussian_decaying(0.1, 0.8, 4);
  const SvrgResult a = inexact_prox_svrg(inst, ref, options_for(inst, 12, 8, 5), inj);
  const SvrgResult b = inexact_prox_svrg(inst, ref, options_for(inst, 12, 8, 5), inj);
  CHECK(a.trace.rows == b.trace.rows);
  const SvrgResult c = inexact_prox_svrg(inst, ref, options_for(inst, 12, 8, 6), inj);
  CHECK_FALSE(a.trace.rows == c.trace.rows);
}

TEST_CASE("the direction is unbiased over the active node") {
  const ProblemInstance inst = small_instance(Regularizer::elastic_net(0.1, 1.0), 17);
  Stream rng(5, Purpose::Test);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector x = random_vector(rng, inst.dimension());
    const Vector anchor = random_vector(rng, inst.dimension());
    Vector mean = Vector::Zero(inst.dimension());
    for (int l = 0; l < inst.node_count(); ++l) mean += direction(inst, x, anchor, l);
    mean /= inst.node_count();
    CHECK(relative_error(mean, inst.full_gradient(x)) <= 1e-13);
  }
}

TEST_CASE("the solver's step uses the sampled node's direction") {
  const ProblemInstance inst = small_instance(Regularizer::elastic_net(0.1, 1.0), 17);
  const ReferenceSolution ref = exact_reference(inst);
  SvrgOptions o = options_for(inst, 1, 1, 99);
  Vector first;
  inexact_prox_svrg(inst, ref, o, ErrorInjector::none(), [&](int, int, const Vector& x) { first = x; });
  Stream sampler(99, Purpose::Sampler);
  const int l = static_cast<int>(sampler.below(inst.node_count()));
  const Vector anchor = Vector::Zero(inst.dimension());
  const Vector expected = inst.prox(anchor - o.eta * direction(inst, anchor, anchor, l), o.eta);
  CHECK(relative_error(first, expected) <= 1e-14);
}

TEST_CASE("variance-reduction diagnostic holds on every step") {
  const ProblemInstance inst = small_instance(Regularizer::elastic_net(0.1, 1.0), 23);
  const ReferenceSolution ref = exact_reference(inst);
  const double lbar = max_lipschitz(inst);
  const SvrgOptions o = options_for(inst, 12, 4, 31);
  std::vector<std::vector<Vector>> iterates(o.outer);
  inexact_prox_svrg(inst, ref, o, ErrorInjector::none(),
                    [&](int s, int, const Vector& x) { iterates[s].push_back(x); });
  Vector anchor = Vector::Zero(inst.dimension());
  int checked = 0;
  for (int s = 0; s < o.outer; ++s) {
    Vector prev = anchor;
    for (const Vector& x : iterates[s]) {
      // Conditioned on the previous iterate, averaged over all active nodes.
      const Vector grad = inst.full_gradient(prev);
      double mean = 0.0;
      for (int l = 0; l < inst.node_count(); ++l) mean += (direction(inst, prev, anchor, l) - grad).squaredNorm();
      mean /= inst.node_count();
      const double bound =
          4.0 * lbar * (inst.objective(prev) - ref.objective + inst.objective(anchor) - ref.objective);
      CHECK(mean < bound);
      prev = x;
      ++checked;
    }
    Vector sum = Vector::Zero(inst.dimension());
    for (const Vector& x : iterates[s]) sum += x;
    anchor = sum / static_cast<double>(iterates[s].size());
  }
  CHECK(checked == o.inner * o.outer);
}

TEST_CASE("gaussian injector energy decays geometrically") {
  const auto inj = ErrorInjector::gaussian_decaying(2.0, 0.5, 1);
  Vector e;
  double e0 = 0, e4 = 0;
  for (int t = 0; t < 200; ++t) {
    inj.draw(0, t, 50, e);
    e0 += e.squaredNorm();
    inj.draw(4, t, 50, e);
    e4 += e.squaredNorm();
  }
  CHECK(e0 / (200 * 50) == doctest::Approx(4.0).epsilon(0.05));
  CHECK(e4 / e0 == doctest::Approx(std::pow(0.5, 4)).epsilon(0.1));
  CHECK_THROWS_AS(ErrorInjector::gaussian_decaying(1.0, 1.0, 1), ParameterError);
}

}  // TEST_SUITE
