#include "qprox/problem.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <sstream>

#include "qprox/rng.hpp"

namespace qprox {

// ---------------------------------------------------------------------------
// Graph

Graph::Graph(std::vector<std::vector<int>> closed) : closed_(std::move(closed)) {
  for (const auto& nb : closed_) max_degree_ = std::max(max_degree_, static_cast<int>(nb.size()));
}

Graph Graph::from_edges(int node_count, std::span<const std::pair<int, int>> edges) {
  if (node_count < 1) throw ParameterError("graph needs at least one node");
  std::vector<std::vector<int>> closed(node_count);
  for (int i = 0; i < node_count; ++i) closed[i].push_back(i);
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= node_count || b >= node_count)
      throw ParameterError("edge endpoint out of range");
    if (a == b) throw ParameterError("self-loop in edge list");
    closed[a].push_back(b);
    closed[b].push_back(a);
  }
  for (auto& nb : closed) {
    std::sort(nb.begin(), nb.end());
    if (std::adjacent_find(nb.begin(), nb.end()) != nb.end())
      throw ParameterError("duplicate edge in edge list");
  }
  Graph g(std::move(closed));
  if (!g.connected()) throw ParameterError("graph is not connected");
  return g;
}

int Graph::position(int i, int j) const {
  const auto& nb = closed_.at(i);
  auto it = std::lower_bound(nb.begin(), nb.end(), j);
  if (it == nb.end() || *it != j) return -1;
  return static_cast<int>(it - nb.begin());
}

std::size_t Graph::edge_count() const {
  std::size_t twice = 0;
  for (const auto& nb : closed_) twice += nb.size() - 1;
  return twice / 2;
}

bool Graph::connected() const {
  if (closed_.empty()) return false;
  std::vector<char> seen(closed_.size(), 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v : closed_[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        frontier.push(v);
      }
    }
  }
  return reached == closed_.size();
}

namespace {

constexpr int kMaxGraphAttempts = 10'000;

// One pairing attempt. Returns false when the remaining stubs admit no legal
// pair.
bool pair_stubs(int n, int d, Stream& rng, std::vector<std::pair<int, int>>& edges) {
  std::vector<int> stubs;
  stubs.reserve(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) stubs.push_back(i);
  std::vector<std::vector<char>> adjacent(n, std::vector<char>(n, 0));
  edges.clear();

  auto legal = [&](int a, int b) { return a != b && !adjacent[a][b]; };

  while (!stubs.empty()) {
    const std::size_t count = stubs.size();
    bool found = false;
    std::size_t p = 0, q = 0;
    for (int tries = 0; tries < 64 && !found; ++tries) {
      p = rng.below(count);
      q = rng.below(count);
      found = p != q && legal(stubs[p], stubs[q]);
    }
    if (!found) {
      // Exhaustive scan decides whether the attempt is stuck.
      std::vector<std::pair<std::size_t, std::size_t>> options;
      for (std::size_t a = 0; a < count; ++a)
        for (std::size_t b = a + 1; b < count; ++b)
          if (legal(stubs[a], stubs[b])) options.emplace_back(a, b);
      if (options.empty()) return false;
      std::tie(p, q) = options[rng.below(options.size())];
    }
    const int u = stubs[p], v = stubs[q];
    adjacent[u][v] = adjacent[v][u] = 1;
    edges.emplace_back(std::min(u, v), std::max(u, v));
    if (p < q) std::swap(p, q);
    stubs[p] = stubs.back();
    stubs.pop_back();
    stubs[q] = stubs.back();
    stubs.pop_back();
  }
  return true;
}

}  // namespace

Graph generate_regular_graph(int n, int d, std::uint64_t seed) {
  if (n < 2) throw ParameterError("regular graph needs N >= 2");
  if (d < 1 || d >= n) throw ParameterError("regular graph needs 1 <= d < N");
  if ((static_cast<long long>(n) * d) % 2 != 0) throw ParameterError("N * d must be even");

  Stream rng(seed, Purpose::Graph);
  std::vector<std::pair<int, int>> edges;
  for (int attempt = 0; attempt < kMaxGraphAttempts; ++attempt) {
    if (!pair_stubs(n, d, rng, edges)) continue;
    // from_edges re-validates simplicity and connectivity.
    try {
      return Graph::from_edges(n, edges);
    } catch (const ParameterError&) {
      continue;
    }
  }
  throw GenerationError("regular graph generation exhausted its retry budget");
}

// ---------------------------------------------------------------------------
// Regularizer

double Regularizer::block_value(const Vector& block) const {
  switch (kind) {
    case Kind::L1:
      return lambda1 * block.lpNorm<1>();
    case Kind::SquaredL2:
      return 0.5 * lambda1 * block.squaredNorm();
    case Kind::ElasticNet:
      return lambda1 * block.lpNorm<1>() + 0.5 * lambda2 * block.squaredNorm();
    case Kind::GroupLasso:
      return lambda1 * block.norm();
  }
  return 0.0;
}

std::string Regularizer::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::L1: os << "l1(" << lambda1 << ")"; break;
    case Kind::SquaredL2: os << "squared_l2(" << lambda1 << ")"; break;
    case Kind::ElasticNet: os << "elastic_net(" << lambda1 << ", " << lambda2 << ")"; break;
    case Kind::GroupLasso: os << "group_lasso(" << lambda1 << ")"; break;
  }
  return os.str();
}

namespace {

double soft_threshold(double v, double t) {
  const double mag = std::abs(v) - t;
  if (mag <= 0.0) return 0.0;
  return v > 0.0 ? mag : -mag;
}

}  // namespace

Vector prox_block(const Regularizer& reg, const Vector& v, double eta) {
  if (!(eta > 0.0)) throw ParameterError("prox step must be positive");
  switch (reg.kind) {
    case Regularizer::Kind::L1:
      return v.unaryExpr([&](double z) { return soft_threshold(z, eta * reg.lambda1); });
    case Regularizer::Kind::SquaredL2:
      return v / (1.0 + eta * reg.lambda1);
    case Regularizer::Kind::ElasticNet: {
      const double shrink = 1.0 + eta * reg.lambda2;
      return v.unaryExpr([&](double z) { return soft_threshold(z, eta * reg.lambda1) / shrink; });
    }
    case Regularizer::Kind::GroupLasso: {
      const double norm = v.norm();
      const double t = eta * reg.lambda1;
      if (norm <= t) return Vector::Zero(v.size());
      return (1.0 - t / norm) * v;
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// ProblemInstance

ProblemInstance::ProblemInstance(Graph graph, std::vector<int> block_dims,
                                 std::vector<Matrix> designs, std::vector<Vector> responses,
                                 Regularizer reg, Vector truth)
    : graph_(std::move(graph)),
      dims_(std::move(block_dims)),
      designs_(std::move(designs)),
      responses_(std::move(responses)),
      reg_(reg),
      truth_(std::move(truth)) {
  const int n = graph_.node_count();
  if (static_cast<int>(dims_.size()) != n || static_cast<int>(designs_.size()) != n ||
      static_cast<int>(responses_.size()) != n)
    throw DimensionError("per-node data does not match the node count");
  offsets_.resize(n);
  for (int i = 0; i < n; ++i) {
    if (dims_[i] < 1) throw DimensionError("block dimension must be positive");
    offsets_[i] = dimension_;
    dimension_ += dims_[i];
  }
  stack_dims_.resize(n);
  for (int i = 0; i < n; ++i) {
    int s = 0;
    for (int j : graph_.neighborhood(i)) s += dims_[j];
    stack_dims_[i] = s;
    if (designs_[i].cols() != s) throw DimensionError("design column count != stack dimension");
    if (designs_[i].rows() != responses_[i].size())
      throw DimensionError("design row count != response length");
  }
  if (truth_.size() != 0 && truth_.size() != dimension_)
    throw DimensionError("generating vector has the wrong dimension");
}

int ProblemInstance::max_block_dim() const { return *std::max_element(dims_.begin(), dims_.end()); }

int ProblemInstance::stack_offset(int j, int i) const {
  const int pos = graph_.position(j, i);
  if (pos < 0) throw IndexError("node " + std::to_string(i) + " is not in N(" + std::to_string(j) + ")");
  int off = 0;
  auto nb = graph_.neighborhood(j);
  for (int k = 0; k < pos; ++k) off += dims_[nb[k]];
  return off;
}

ProblemInstance ProblemInstance::with_regularizer(const Regularizer& reg) const {
  ProblemInstance copy = *this;
  copy.reg_ = reg;
  return copy;
}

void ProblemInstance::check_global(const Vector& x) const {
  if (x.size() != dimension_)
    throw DimensionError("expected a vector of dimension " + std::to_string(dimension_) +
                         ", got " + std::to_string(x.size()));
}

void ProblemInstance::check_stack(int i, const Vector& stack) const {
  if (stack.size() != stack_dims_.at(i))
    throw DimensionError("expected a stack of dimension " + std::to_string(stack_dims_[i]) +
                         " for node " + std::to_string(i) + ", got " + std::to_string(stack.size()));
}

Vector ProblemInstance::gather(const Vector& x, int i) const {
  check_global(x);
  Vector out(stack_dims_.at(i));
  int pos = 0;
  for (int j : graph_.neighborhood(i)) {
    out.segment(pos, dims_[j]) = x.segment(offsets_[j], dims_[j]);
    pos += dims_[j];
  }
  return out;
}

Vector ProblemInstance::scatter_block(const Vector& stack, int j, int i) const {
  check_stack(j, stack);
  return stack.segment(stack_offset(j, i), dims_.at(i));
}

void ProblemInstance::accumulate(Vector& x, int i, const Vector& stack, double scale) const {
  check_global(x);
  check_stack(i, stack);
  int pos = 0;
  for (int j : graph_.neighborhood(i)) {
    if (scale == 1.0)
      x.segment(offsets_[j], dims_[j]) += stack.segment(pos, dims_[j]);
    else
      x.segment(offsets_[j], dims_[j]) += scale * stack.segment(pos, dims_[j]);
    pos += dims_[j];
  }
}

Vector ProblemInstance::lift(int i, const Vector& stack) const {
  Vector x = Vector::Zero(dimension_);
  accumulate(x, i, stack);
  return x;
}

double ProblemInstance::local_loss(int i, const Vector& x_stack) const {
  check_stack(i, x_stack);
  return (designs_[i] * x_stack - responses_[i]).squaredNorm();
}

Vector ProblemInstance::local_gradient(int i, const Vector& x_stack) const {
  check_stack(i, x_stack);
  const Vector residual = designs_[i] * x_stack - responses_[i];
  return 2.0 * (designs_[i].transpose() * residual);
}

Vector ProblemInstance::gradient_increment(int i, const Vector& delta) const {
  check_stack(i, delta);
  const Vector hd = designs_[i] * delta;
  return 2.0 * (designs_[i].transpose() * hd);
}

Vector ProblemInstance::full_gradient(const Vector& x) const {
  check_global(x);
  Vector g = Vector::Zero(dimension_);
  const int n = node_count();
  for (int i = 0; i < n; ++i) accumulate(g, i, local_gradient(i, gather(x, i)));
  g *= 1.0 / n;
  return g;
}

double ProblemInstance::smooth_objective(const Vector& x) const {
  check_global(x);
  double total = 0.0;
  const int n = node_count();
  for (int i = 0; i < n; ++i) total += local_loss(i, gather(x, i));
  return total / n;
}

double ProblemInstance::regularizer_value(const Vector& x) const {
  check_global(x);
  double total = 0.0;
  for (int i = 0; i < node_count(); ++i)
    total += reg_.block_value(x.segment(offsets_[i], dims_[i]));
  return total;
}

Vector ProblemInstance::prox(const Vector& x, double eta) const {
  check_global(x);
  Vector out(dimension_);
  for (int i = 0; i < node_count(); ++i)
    out.segment(offsets_[i], dims_[i]) = prox_block(reg_, x.segment(offsets_[i], dims_[i]), eta);
  return out;
}

Matrix ProblemInstance::aggregate_hessian() const {
  Matrix hess = Matrix::Zero(dimension_, dimension_);
  const int n = node_count();
  for (int i = 0; i < n; ++i) {
    const Matrix local = designs_[i].transpose() * designs_[i];
    auto nb = graph_.neighborhood(i);
    int pa = 0;
    for (int a : nb) {
      int pb = 0;
      for (int b : nb) {
        hess.block(offsets_[a], offsets_[b], dims_[a], dims_[b]) +=
            local.block(pa, pb, dims_[a], dims_[b]);
        pb += dims_[b];
      }
      pa += dims_[a];
    }
  }
  hess *= 2.0 / n;
  return hess;
}

// ---------------------------------------------------------------------------
// Generation and smoothness

ProblemInstance generate_instance_on(const Graph& graph, int block_dim, int rows,
                                     const Regularizer& reg, double truth_scale,
                                     std::uint64_t seed) {
  if (block_dim < 1) throw ParameterError("block dimension m must be >= 1");
  if (rows < 1) throw ParameterError("rows must be >= 1");
  const int n = graph.node_count();
  std::vector<int> dims(n, block_dim);
  const int p = n * block_dim;

  Stream truth_rng(seed, Purpose::Truth);
  Vector truth(p);
  for (int k = 0; k < p; ++k) truth[k] = truth_scale * truth_rng.normal();

  std::vector<Matrix> designs;
  std::vector<Vector> responses;
  designs.reserve(n);
  responses.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int cols = static_cast<int>(graph.neighborhood(i).size()) * block_dim;
    Stream rng(seed, Purpose::Matrix, {static_cast<std::uint64_t>(i)});
    Matrix h(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) h(r, c) = rng.normal();
    designs.push_back(std::move(h));
  }
  ProblemInstance shell(graph, dims, designs, std::vector<Vector>(n, Vector::Zero(rows)), reg, truth);
  for (int i = 0; i < n; ++i) responses.push_back(designs[i] * shell.gather(truth, i));
  return ProblemInstance(graph, std::move(dims), std::move(designs), std::move(responses), reg,
                         std::move(truth));
}

ProblemInstance generate_instance(const InstanceParams& params) {
  const Graph graph = generate_regular_graph(params.nodes, params.degree, params.seed);
  return generate_instance_on(graph, params.block_dim, params.rows, params.reg,
                              params.truth_scale, params.seed);
}

SmoothnessReport smoothness(const ProblemInstance& inst) {
  SmoothnessReport report;
  const int n = inst.node_count();
  report.lipschitz.resize(n);
  for (int i = 0; i < n; ++i) {
    const Matrix& h = inst.design(i);
    // sigma_max(H)^2 is the top eigenvalue of the smaller Gram matrix.
    const Matrix gram = h.rows() <= h.cols() ? Matrix(h * h.transpose()) : Matrix(h.transpose() * h);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
    report.lipschitz[i] = 2.0 * eig.eigenvalues().maxCoeff();
  }
  report.max_lipschitz = *std::max_element(report.lipschitz.begin(), report.lipschitz.end());

  Eigen::SelfAdjointEigenSolver<Matrix> eig(inst.aggregate_hessian(), Eigen::EigenvaluesOnly);
  report.hessian_min = eig.eigenvalues().minCoeff();
  report.hessian_max = eig.eigenvalues().maxCoeff();

  const Regularizer& reg = inst.regularizer();
  if (reg.kind == Regularizer::Kind::ElasticNet && reg.lambda2 > 0.0) {
    report.mu = reg.lambda2;
  } else if (reg.kind == Regularizer::Kind::SquaredL2 && reg.lambda1 > 0.0) {
    report.mu = reg.lambda1;
  } else {
    // Relative cut-off keeps round-off in a singular Hessian from reading as curvature.
    const double floor = 1e-10 * std::max(1.0, report.hessian_max);
    report.mu = report.hessian_min > floor ? report.hessian_min : 0.0;
  }
  report.strongly_convex = report.mu > 0.0;
  return report;
}

}  // namespace qprox
