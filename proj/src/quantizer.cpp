#include "qprox/quantizer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace qprox {

UniformLevel uniform_quantize(double z, double mid, double step) {
  if (!(step > 0.0)) throw ParameterError("quantizer step must be positive");
  const double offset = z - mid;
  const double magnitude = std::floor(std::abs(offset) / step + 0.5);
  // Levels far outside any code range saturate before the integer cast.
  const double bounded = std::min(magnitude, 0x1.0p62);
  const std::int64_t k = static_cast<std::int64_t>(bounded);
  UniformLevel out;
  if (offset > 0.0) {
    out.level = k;
    out.value = mid + step * magnitude;
  } else if (offset < 0.0) {
    out.level = -k;
    out.value = mid - step * magnitude;
  } else {
    out.value = mid;
  }
  return out;
}

QuantizerState::QuantizerState(Family family, int bits, double base_interval, double kappa,
                               Vector midpoint)
    : family_(family),
      bits_(bits),
      base_(base_interval),
      kappa_(kappa),
      interval_(base_interval),
      midpoint_(std::move(midpoint)) {
  if (bits < 2 || bits > 32) throw ParameterError("quantizer bits must lie in [2, 32]");
  if (!(base_interval > 0.0)) throw ParameterError("quantizer interval must be positive");
  if (!(kappa > 0.0 && kappa < 1.0)) throw ParameterError("refinement rate kappa must lie in (0, 1)");
  step_ = interval_ / (std::ldexp(1.0, bits_) - 1.0);
}

QuantizerState QuantizerState::refine(Vector new_midpoint) const {
  QuantizerState next = *this;
  next.refinements_ = refinements_ + 1;
  // Closed form rather than repeated multiplication, so U carries no drift.
  next.interval_ = base_ * std::pow(kappa_, 0.5 * next.refinements_);
  next.step_ = next.interval_ / (std::ldexp(1.0, bits_) - 1.0);
  next.midpoint_ = std::move(new_midpoint);
  return next;
}

QuantizerState QuantizerState::scheduled(Family family, int bits, double base_interval,
                                         double kappa, int refinements, Vector midpoint) {
  if (refinements < 0) throw ParameterError("refinement count must be non-negative");
  QuantizerState q(family, bits, base_interval, kappa, std::move(midpoint));
  if (refinements > 0) {
    q.refinements_ = refinements;
    q.interval_ = base_interval * std::pow(kappa, 0.5 * refinements);
    q.step_ = q.interval_ / (std::ldexp(1.0, bits) - 1.0);
  }
  return q;
}

DitherStream::DitherStream(std::uint64_t seed, Family family, int sender, int outer, int inner)
    : stream_(seed, Purpose::Dither,
              {static_cast<std::uint64_t>(family), static_cast<std::uint64_t>(sender),
               static_cast<std::uint64_t>(outer), static_cast<std::uint64_t>(inner)}) {}

namespace {

double reconstruct(std::uint64_t code, double mid, double step, std::int64_t offset, double nu) {
  return mid + static_cast<double>(static_cast<std::int64_t>(code) - offset) * step - nu;
}

}  // namespace

EncodeResult dithered_encode(const Vector& v, const QuantizerState& q, DitherStream& dither) {
  if (v.size() != q.midpoint().size()) throw DimensionError("vector and midpoint dimensions differ");
  const double step = q.step();
  const double half = 0.5 * q.interval();
  const std::int64_t offset = -q.min_level();
  EncodeResult out;
  out.block.bits = q.bits();
  out.block.codes.resize(v.size());
  out.reconstruction.resize(v.size());
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    const double z = v[k];
    const double mid = q.midpoint()[k];
    const double nu = dither.next(step);
    const std::int64_t level = uniform_quantize(z + nu, mid, step).level;
    const std::int64_t clamped = std::clamp(level, q.min_level(), q.max_level());
    const bool inside = z >= mid - half && z <= mid + half;
    if (!inside)
      ++out.block.overflows;
    else if (clamped != level)
      ++out.block.edge_clamps;
    const auto code = static_cast<std::uint64_t>(clamped + offset);
    out.block.codes[k] = code;
    out.reconstruction[k] = reconstruct(code, mid, step, offset, nu);
  }
  return out;
}

Vector dithered_decode(const CodewordBlock& block, const QuantizerState& q, DitherStream& dither) {
  if (static_cast<Eigen::Index>(block.codes.size()) != q.midpoint().size())
    throw DimensionError("codeword count and midpoint dimensions differ");
  if (block.bits != q.bits()) throw DimensionError("codeword width and quantizer bits differ");
  const double step = q.step();
  const std::int64_t offset = -q.min_level();
  Vector out(q.midpoint().size());
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    const double nu = dither.next(step);
    out[k] = reconstruct(block.codes[k], q.midpoint()[k], step, offset, nu);
  }
  return out;
}

CodewordBlock encode_raw(const Vector& v) {
  CodewordBlock block;
  block.bits = 64;
  block.codes.resize(v.size());
  for (Eigen::Index k = 0; k < v.size(); ++k) block.codes[k] = std::bit_cast<std::uint64_t>(v[k]);
  return block;
}

Vector decode_raw(const CodewordBlock& block) {
  if (block.bits != 64) throw DimensionError("raw block must carry 64-bit codes");
  Vector v(static_cast<Eigen::Index>(block.codes.size()));
  for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = std::bit_cast<double>(block.codes[k]);
  return v;
}

std::vector<std::uint8_t> pack_codes(std::span<const std::uint64_t> codes, int bits) {
  if (bits < 1 || bits > 64) throw ParameterError("code width must lie in [1, 64]");
  const std::size_t total_bits = codes.size() * static_cast<std::size_t>(bits);
  std::vector<std::uint8_t> out((total_bits + 7) / 8, 0);
  std::size_t pos = 0;
  for (std::uint64_t code : codes) {
    if (bits < 64 && (code >> bits) != 0) throw ParameterError("code does not fit its width");
    for (int b = 0; b < bits; ++b, ++pos)
      if ((code >> b) & 1u) out[pos / 8] |= static_cast<std::uint8_t>(1u << (pos % 8));
  }
  return out;
}

std::vector<std::uint64_t> unpack_codes(std::span<const std::uint8_t> bytes, std::size_t count,
                                        int bits) {
  if (bits < 1 || bits > 64) throw ParameterError("code width must lie in [1, 64]");
  if (bytes.size() * 8 < count * static_cast<std::size_t>(bits))
    throw DimensionError("packed payload shorter than its codes");
  std::vector<std::uint64_t> out(count, 0);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < count; ++k)
    for (int b = 0; b < bits; ++b, ++pos)
      if ((bytes[pos / 8] >> (pos % 8)) & 1u) out[k] |= std::uint64_t{1} << b;
  return out;
}

}  // namespace qprox
