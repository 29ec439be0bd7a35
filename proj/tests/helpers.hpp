#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "qprox/problem.hpp"
#include "qprox/rng.hpp"

namespace qprox::testing {

inline Vector random_vector(Stream& rng, int n, double scale = 1.0) {
  Vector v(n);
  for (int k = 0; k < n; ++k) v[k] = scale * rng.normal();
  return v;
}

/// Central differences of a scalar function, step h.
inline Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                               double h = 1e-6) {
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double saved = probe[k];
    probe[k] = saved + h;
    const double up = f(probe);
    probe[k] = saved - h;
    const double down = f(probe);
    probe[k] = saved;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const Vector& a, const Vector& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / scale;
}

/// Path 0 - 1 - 2.
inline Graph path3() {
  const std::pair<int, int> edges[] = {{0, 1}, {1, 2}};
  return Graph::from_edges(3, edges);
}

inline Graph triangle() {
  const std::pair<int, int> edges[] = {{0, 1}, {1, 2}, {0, 2}};
  return Graph::from_edges(3, edges);
}

/// Small instance used across suites: 6 nodes, 3-regular, m = 2.
inline ProblemInstance small_instance(const Regularizer& reg, std::uint64_t seed = 5, int rows = 6) {
  const Graph g = generate_regular_graph(6, 3, seed);
  return generate_instance_on(g, 2, rows, reg, 1.0, seed);
}

}  // namespace qprox::testing
