#include "qprox/central.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qprox/rng.hpp"

namespace qprox {

double max_lipschitz(const ProblemInstance& inst) {
  double best = 0.0;
  for (int i = 0; i < inst.node_count(); ++i) {
    const Matrix& h = inst.design(i);
    const Matrix gram = h.rows() <= h.cols() ? Matrix(h * h.transpose()) : Matrix(h.transpose() * h);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
    best = std::max(best, 2.0 * eig.eigenvalues().maxCoeff());
  }
  return best;
}

ReferenceSolution exact_reference(const ProblemInstance& inst, double eta, double tol, int max_iter,
                                  bool record_history) {
  if (!(eta > 0.0)) throw ParameterError("reference step must be positive");
  if (!(tol > 0.0)) throw ParameterError("reference tolerance must be positive");
  ReferenceSolution sol;
  Vector x = Vector::Zero(inst.dimension());
  if (record_history) sol.history.push_back(inst.objective(x));
  double residual = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= max_iter; ++it) {
    Vector next = inst.prox(x - eta * inst.full_gradient(x), eta);
    residual = (x - next).norm() / eta;
    x = std::move(next);
    if (record_history) sol.history.push_back(inst.objective(x));
    if (residual <= tol) {
      sol.iterations = it;
      sol.residual = residual;
      sol.objective = inst.objective(x);
      sol.x = std::move(x);
      return sol;
    }
  }
  std::ostringstream os;
  os << "proximal gradient did not reach tolerance " << tol << " in " << max_iter
     << " iterations (last residual " << residual << ")";
  throw NonConvergenceError(os.str(), residual);
}

ReferenceSolution exact_reference(const ProblemInstance& inst, double tol, int max_iter) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(inst.aggregate_hessian(), Eigen::EigenvaluesOnly);
  const double lf = eig.eigenvalues().maxCoeff();
  if (!(lf > 0.0)) throw ParameterError("smooth part has no curvature; reference step undefined");
  return exact_reference(inst, 1.0 / lf, tol, max_iter);
}

ErrorInjector ErrorInjector::gaussian_decaying(double sigma0, double decay, std::uint64_t seed) {
  if (sigma0 < 0.0) throw ParameterError("injector sigma0 must be non-negative");
  if (!(decay > 0.0 && decay < 1.0)) throw ParameterError("injector decay must lie in (0, 1)");
  ErrorInjector inj;
  inj.kind = Kind::GaussianDecaying;
  inj.sigma0 = sigma0;
  inj.decay = decay;
  inj.seed = seed;
  return inj;
}

ErrorInjector ErrorInjector::replay(std::shared_ptr<const ErrorSequence> sequence) {
  if (!sequence) throw ParameterError("replay injector needs a sequence");
  ErrorInjector inj;
  inj.kind = Kind::Replay;
  inj.sequence = std::move(sequence);
  return inj;
}

bool ErrorInjector::draw(int s, int t, int dimension, Vector& out) const {
  switch (kind) {
    case Kind::None:
      return false;
    case Kind::GaussianDecaying: {
      Stream rng(seed, Purpose::Injector, {static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(t)});
      const double sigma = sigma0 * std::pow(decay, 0.5 * s);
      out.resize(dimension);
      for (int k = 0; k < dimension; ++k) out[k] = sigma * rng.normal();
      return true;
    }
    case Kind::Replay: {
      if (s >= static_cast<int>(sequence->size()) || t >= static_cast<int>((*sequence)[s].size()))
        throw std::out_of_range("replay sequence has no entry for this step");
      const Vector& e = (*sequence)[s][t];
      if (e.size() != dimension) throw DimensionError("replayed error has the wrong dimension");
      out = e;
      return true;
    }
  }
  return false;
}

void check_step_size(double eta, double max_lipschitz, int inner) {
  if (inner < 1) throw ParameterError("inner loop length T must be >= 1 (got T = " + std::to_string(inner) + ")");
  if (!(eta > 0.0) || !(4.0 * max_lipschitz * eta < 1.0)) {
    std::ostringstream os;
    os << "step size violates 0 < eta < 1/(4 L-bar): eta = " << eta << ", 4 L-bar eta = "
       << 4.0 * max_lipschitz * eta << " (must be < 1)";
    throw ParameterError(os.str());
  }
}

Theorem1Constants theorem1_constants(double mu, double max_lipschitz, double eta, int inner) {
  if (!(mu > 0.0)) throw ParameterError("strong convexity missing: mu must be > 0");
  check_step_size(eta, max_lipschitz, inner);
  const double slack = 1.0 - 4.0 * max_lipschitz * eta;
  const double t = static_cast<double>(inner);
  Theorem1Constants c;
  c.alpha = 1.0 / (mu * eta * slack * t) + 4.0 * max_lipschitz * eta * (t + 1.0) / (slack * t);
  c.beta = eta / (t * slack);
  c.applicable = c.alpha < 1.0;
  return c;
}

SvrgResult inexact_prox_svrg(const ProblemInstance& inst, const ReferenceSolution& reference,
                             const SvrgOptions& opts, const ErrorInjector& injector,
                             const IterateObserver& observer) {
  if (!opts.force) check_step_size(opts.eta, max_lipschitz(inst), opts.inner);
  if (opts.inner < 1) throw ParameterError("inner loop length T must be >= 1");
  if (opts.outer < 0) throw ParameterError("outer iteration count must be >= 0");

  const int n = inst.node_count();
  const int p = inst.dimension();
  const double eta = opts.eta;
  Stream sampler(opts.sampler_seed, Purpose::Sampler);

  SvrgResult result;
  Vector anchor = Vector::Zero(p);
  std::vector<Vector> anchor_grads(n);
  Vector error;

  auto row_for = [&](int s, const Vector& x) {
    TraceRow row;
    row.s = s;
    row.gap = inst.objective(x) - reference.objective;
    row.dist = (x - reference.x).norm();
    return row;
  };

  for (int s = 0; s < opts.outer; ++s) {
    TraceRow row = row_for(s, anchor);

    // g^s = (1/N) sum_i A_i^T grad f_i(x~^s), keeping the per-node terms.
    Vector full = Vector::Zero(p);
    for (int i = 0; i < n; ++i) {
      anchor_grads[i] = inst.local_gradient(i, inst.gather(anchor, i));
      inst.accumulate(full, i, anchor_grads[i]);
    }
    full *= 1.0 / n;

    Vector x = anchor;
    Vector sum = Vector::Zero(p);
    double gamma = 0.0;
    for (int t = 0; t < opts.inner; ++t) {
      const int active = static_cast<int>(sampler.below(static_cast<std::uint64_t>(n)));
      const Vector current = inst.local_gradient(active, inst.gather(x, active));
      // v = grad f_l(x) + (g - grad f_l(x~)) on the blocks of N(l), g elsewhere.
      Vector v = full;
      const Vector& stale = anchor_grads[active];
      int pos = 0;
      for (int j : inst.graph().neighborhood(active)) {
        const int off = inst.block_offset(j);
        const int m = inst.block_dim(j);
        v.segment(off, m) = current.segment(pos, m) + (full.segment(off, m) - stale.segment(pos, m));
        pos += m;
      }
      if (injector.draw(s, t, p, error)) {
        v += error;
        gamma += error.squaredNorm();
      }
      x = inst.prox(x - eta * v, eta);
      sum += x;
      if (observer) observer(s, t + 1, x);
    }
    anchor = sum * (1.0 / opts.inner);
    row.gamma = gamma;
    result.trace.rows.push_back(row);
  }
  result.trace.rows.push_back(row_for(opts.outer, anchor));
  result.anchor = std::move(anchor);
  return result;
}

}  // namespace qprox
