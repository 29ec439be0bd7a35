#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace qprox {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Invalid parameter or violated precondition.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Random graph construction ran out of retries.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or matrix shape does not match the instance layout.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Node index outside the required neighborhood.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Undirected connected graph stored as closed neighborhoods: every list
/// contains the node itself and is sorted ascending.
class Graph {
 public:
  Graph() = default;

  /// Builds from an undirected edge list; rejects self-loops, duplicate
  /// edges, out-of-range ids and disconnected graphs.
  static Graph from_edges(int node_count, std::span<const std::pair<int, int>> edges);

  int node_count() const { return static_cast<int>(closed_.size()); }

  /// Closed neighborhood N(i) in ascending id order.
  std::span<const int> neighborhood(int i) const { return closed_.at(i); }

  /// D = max_i |N(i)|.
  int max_degree() const { return max_degree_; }

  /// Position of j inside N(i), or -1 when j is not a member.
  int position(int i, int j) const;
  bool contains(int i, int j) const { return position(i, j) >= 0; }

  std::size_t edge_count() const;

  /// Breadth-first connectivity check.
  bool connected() const;

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  explicit Graph(std::vector<std::vector<int>> closed);

  std::vector<std::vector<int>> closed_;
  int max_degree_ = 0;
};

/// Random d-regular simple connected graph on n nodes. Stubs are paired one
/// edge at a time, rejecting self-loops and repeated edges; a stuck or
/// disconnected outcome restarts the attempt (at most 10,000 attempts).
Graph generate_regular_graph(int n, int d, std::uint64_t seed);

/// Separable regularizer R(x) = sum over node blocks.
struct Regularizer {
  enum class Kind { L1, SquaredL2, ElasticNet, GroupLasso };

  Kind kind = Kind::ElasticNet;
  double lambda1 = 0.0;  // L1 weight, squared-L2 weight, or group weight
  double lambda2 = 0.0;  // ElasticNet quadratic weight only

  static Regularizer l1(double lambda) { return {Kind::L1, lambda, 0.0}; }
  /// (lambda / 2) * ||x||^2
  static Regularizer squared_l2(double lambda) { return {Kind::SquaredL2, lambda, 0.0}; }
  /// lambda1 * ||x||_1 + (lambda2 / 2) * ||x||^2
  static Regularizer elastic_net(double lambda1, double lambda2) {
    return {Kind::ElasticNet, lambda1, lambda2};
  }
  /// lambda * ||x_i||_2 summed over node blocks.
  static Regularizer group_lasso(double lambda) { return {Kind::GroupLasso, lambda, 0.0}; }

  /// Contribution of one node block.
  double block_value(const Vector& block) const;

  std::string describe() const;

  friend bool operator==(const Regularizer&, const Regularizer&) = default;
};

/// Proximal map of eta * R restricted to one node block:
/// argmin_y 0.5 * ||y - v||^2 + eta * R(y).
Vector prox_block(const Regularizer& reg, const Vector& v, double eta);

/// Networked least-squares problem: f_i(x_N(i)) = ||H_i x_N(i) - h_i||^2,
/// G(x) = (1/N) sum_i f_i + R(x). Immutable once constructed.
class ProblemInstance {
 public:
  ProblemInstance(Graph graph, std::vector<int> block_dims, std::vector<Matrix> designs,
                  std::vector<Vector> responses, Regularizer reg, Vector truth);

  const Graph& graph() const { return graph_; }
  int node_count() const { return graph_.node_count(); }
  int dimension() const { return dimension_; }
  int block_dim(int i) const { return dims_.at(i); }
  int block_offset(int i) const { return offsets_.at(i); }
  std::span<const int> block_dims() const { return dims_; }
  int max_block_dim() const;
  /// Length of the neighborhood stack x_N(i).
  int stack_dim(int i) const { return stack_dims_.at(i); }
  /// Offset of node i's block inside the stack of node j. Throws IndexError
  /// when i is not in N(j).
  int stack_offset(int j, int i) const;

  const Matrix& design(int i) const { return designs_.at(i); }
  const Vector& response(int i) const { return responses_.at(i); }
  const Regularizer& regularizer() const { return reg_; }
  const Vector& ground_truth() const { return truth_; }

  ProblemInstance with_regularizer(const Regularizer& reg) const;

  /// x_N(i) = A_i x.
  Vector gather(const Vector& x, int i) const;
  /// Block of node i taken from a stack laid out for N(j).
  Vector scatter_block(const Vector& stack, int j, int i) const;
  /// x += scale * A_i^T stack.
  void accumulate(Vector& x, int i, const Vector& stack, double scale = 1.0) const;
  /// A_i^T stack as a length-P vector.
  Vector lift(int i, const Vector& stack) const;

  double local_loss(int i, const Vector& x_stack) const;
  /// 2 H_i^T (H_i x_stack - h_i).
  Vector local_gradient(int i, const Vector& x_stack) const;
  /// 2 H_i^T H_i delta, the exact change of the affine local gradient.
  Vector gradient_increment(int i, const Vector& delta) const;

  /// (1/N) sum_i A_i^T grad f_i(A_i x).
  Vector full_gradient(const Vector& x) const;
  double smooth_objective(const Vector& x) const;
  double regularizer_value(const Vector& x) const;
  double objective(const Vector& x) const { return smooth_objective(x) + regularizer_value(x); }
  /// Blockwise prox of eta * R over the full vector.
  Vector prox(const Vector& x, double eta) const;

  /// (2/N) sum_i A_i^T H_i^T H_i A_i, the Hessian of F.
  Matrix aggregate_hessian() const;

 private:
  void check_global(const Vector& x) const;
  void check_stack(int i, const Vector& stack) const;

  Graph graph_;
  std::vector<int> dims_;
  std::vector<int> offsets_;
  std::vector<int> stack_dims_;
  std::vector<Matrix> designs_;
  std::vector<Vector> responses_;
  Regularizer reg_;
  Vector truth_;
  int dimension_ = 0;
};

struct InstanceParams {
  int nodes = 40;
  int degree = 8;
  int block_dim = 10;
  int rows = 80;
  Regularizer reg = Regularizer::elastic_net(0.1, 700.0);
  /// Standard deviation of the generating vector's entries.
  double truth_scale = 0.1;
  std::uint64_t seed = 1;
};

/// Regular graph plus i.i.d. standard normal designs; h_i = H_i A_i x_gen.
ProblemInstance generate_instance(const InstanceParams& params);

/// Same construction on a caller-supplied graph with uniform block size.
ProblemInstance generate_instance_on(const Graph& graph, int block_dim, int rows,
                                     const Regularizer& reg, double truth_scale,
                                     std::uint64_t seed);

struct SmoothnessReport {
  std::vector<double> lipschitz;  // L_i = 2 sigma_max(H_i)^2
  double max_lipschitz = 0.0;     // L-bar
  double mu = 0.0;                // strong convexity of G (0 if none certified)
  bool strongly_convex = false;
  double hessian_min = 0.0;  // extreme eigenvalues of the Hessian of F
  double hessian_max = 0.0;  // L_F
};

SmoothnessReport smoothness(const ProblemInstance& inst);

}  // namespace qprox
