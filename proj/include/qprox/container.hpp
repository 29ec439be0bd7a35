#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "qprox/problem.hpp"

namespace qprox {

/// Malformed or truncated binary container.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace container {

inline constexpr char kMagic[4] = {'Q', 'P', 'R', 'X'};
inline constexpr std::uint16_t kVersion = 1;

/// Section tags following the fixed header.
inline constexpr std::uint8_t kInstanceSection = 'I';
inline constexpr std::uint8_t kQuantLogSection = 'L';

/// Fixed header: magic "QPRX", version u16, then N, d, m, rows as u32.
/// All integers and floats are little-endian.
struct Header {
  std::uint16_t version = kVersion;
  std::uint32_t nodes = 0;
  std::uint32_t degree = 0;     // max |N(i)| - 1
  std::uint32_t block_dim = 0;  // 0 when blocks are not uniform
  std::uint32_t rows = 0;       // 0 when row counts are not uniform
};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void u8(std::uint8_t v);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void vector(const Vector& v);  // u32 length + values
  void matrix(const Matrix& m);  // u32 rows, u32 cols, row-major values

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  Vector vector();
  Matrix matrix();

 private:
  void raw(unsigned char* dst, std::size_t n);
  std::istream& in_;
};

Header header_for(const ProblemInstance& inst);
void write_header(Writer& w, const Header& h);
Header read_header(Reader& r);

}  // namespace container

void save_instance(const ProblemInstance& inst, std::ostream& out);
void save_instance(const ProblemInstance& inst, const std::filesystem::path& path);
ProblemInstance load_instance(std::istream& in);
ProblemInstance load_instance(const std::filesystem::path& path);

/// One row per coordinate: index,node,value (value at 17 significant digits).
void export_truth_csv(const ProblemInstance& inst, std::ostream& out);

}  // namespace qprox
