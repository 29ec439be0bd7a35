#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qprox/problem.hpp"
#include "qprox/rng.hpp"

namespace qprox {

/// The four quantizer families of the distributed method.
enum class Family : std::uint8_t {
  StateOuter = 0,  // x_i at outer rounds (a)
  GradOuter = 1,   // grad f_i at outer rounds (b)
  StateInner = 2,  // x_i at inner steps (c)
  GradInner = 3,   // grad f_l at inner steps (d)
};

inline constexpr int kFamilyCount = 4;

struct UniformLevel {
  std::int64_t level = 0;
  double value = 0.0;
};

/// Mid-tread uniform quantizer with half-away-from-zero rounding:
/// value = mid + sgn(z - mid) * step * floor(|z - mid| / step + 1/2).
UniformLevel uniform_quantize(double z, double mid, double step);

/// Interval, midpoint and resolution of one quantizer. Value type.
class QuantizerState {
 public:
  /// `base_interval` is C; the interval after k refinements is C * kappa^(k/2).
  QuantizerState(Family family, int bits, double base_interval, double kappa, Vector midpoint);

  Family family() const { return family_; }
  int bits() const { return bits_; }
  double base_interval() const { return base_; }
  double kappa() const { return kappa_; }
  int refinements() const { return refinements_; }
  double interval() const { return interval_; }
  /// Delta = U / (2^n - 1).
  double step() const { return step_; }
  const Vector& midpoint() const { return midpoint_; }

  /// Shrinks U by kappa^(1/2) and recentres on `new_midpoint`.
  QuantizerState refine(Vector new_midpoint) const;

  /// State reached after `refinements` calls to refine(), ending at
  /// `midpoint`. Recipients use this to mirror a sender's quantizer.
  static QuantizerState scheduled(Family family, int bits, double base_interval, double kappa,
                                  int refinements, Vector midpoint);

  std::int64_t min_level() const { return -(std::int64_t{1} << (bits_ - 1)); }
  std::int64_t max_level() const { return (std::int64_t{1} << (bits_ - 1)) - 1; }

 private:
  Family family_;
  int bits_;
  double base_;
  double kappa_;
  int refinements_ = 0;
  double interval_;
  double step_;
  Vector midpoint_;
};

/// Dither source shared by a sender and its recipients. Both sides build it
/// from the same (seed, family, sender, s, t) and therefore draw the same
/// sequence.
class DitherStream {
 public:
  DitherStream(std::uint64_t seed, Family family, int sender, int outer, int inner);

  /// Uniform on (-step/2, step/2).
  double next(double step) { return (stream_.uniform_open() - 0.5) * step; }

 private:
  Stream stream_;
};

struct CodewordBlock {
  std::vector<std::uint64_t> codes;
  int bits = 0;
  int edge_clamps = 0;  // in-interval inputs whose dithered level hit the code range edge
  int overflows = 0;    // inputs outside [mid - U/2, mid + U/2]

  friend bool operator==(const CodewordBlock&, const CodewordBlock&) = default;
};

struct EncodeResult {
  CodewordBlock block;
  Vector reconstruction;  // what every recipient decodes
};

/// Subtractively dithered quantization, componentwise with a vector midpoint
/// and scalar interval. Codes are level + 2^(n-1), clamped to n bits.
EncodeResult dithered_encode(const Vector& v, const QuantizerState& q, DitherStream& dither);

/// Inverse map; `dither` must be in the state the encoder started from.
Vector dithered_decode(const CodewordBlock& block, const QuantizerState& q, DitherStream& dither);

/// Lossless 64-bit passthrough used when quantization is disabled.
CodewordBlock encode_raw(const Vector& v);
Vector decode_raw(const CodewordBlock& block);

/// Packs codes contiguously, `bits` each, least significant bit first,
/// zero-padded to a byte boundary.
std::vector<std::uint8_t> pack_codes(std::span<const std::uint64_t> codes, int bits);
std::vector<std::uint64_t> unpack_codes(std::span<const std::uint8_t> bytes, std::size_t count,
                                        int bits);

}  // namespace qprox
