#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace qprox {

/// Purpose tags separate the random streams drawn from one master seed.
enum class Purpose : std::uint64_t {
  Graph = 1,
  Matrix = 2,
  Truth = 3,
  Sampler = 4,     // coordinator's choice of the active node per inner step
  Dither = 5,
  Injector = 6,
  Test = 7,
};

/// Mixes a master seed, a purpose tag and any number of indices into a
/// 64-bit stream key. Pure function of its inputs.
std::uint64_t derive_key(std::uint64_t seed, Purpose purpose,
                         std::initializer_list<std::uint64_t> indices);

/// Seedable random stream. Distributions are implemented here rather than
/// through <random> distribution objects so that draws are identical across
/// standard library implementations.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : engine_(key) {}
  Stream(std::uint64_t seed, Purpose purpose,
         std::initializer_list<std::uint64_t> indices = {})
      : engine_(derive_key(seed, purpose, indices)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform_open();

  /// Uniform on (lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_open(); }

  /// Standard normal (Box-Muller).
  double normal();

  /// Uniform integer in [0, n), unbiased.
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace qprox
