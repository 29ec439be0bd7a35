#include "qprox/container.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

namespace qprox {
namespace container {

namespace {

template <typename U>
void put_le(std::ostream& out, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t k = 0; k < sizeof(U); ++k) buf[k] = static_cast<unsigned char>(v >> (8 * k));
  out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

}  // namespace

void Writer::u8(std::uint8_t v) { put_le(out_, v); }
void Writer::u16(std::uint16_t v) { put_le(out_, v); }
void Writer::u32(std::uint32_t v) { put_le(out_, v); }
void Writer::u64(std::uint64_t v) { put_le(out_, v); }
void Writer::f64(double v) { put_le(out_, std::bit_cast<std::uint64_t>(v)); }

void Writer::vector(const Vector& v) {
  u32(static_cast<std::uint32_t>(v.size()));
  for (Eigen::Index k = 0; k < v.size(); ++k) f64(v[k]);
}

void Writer::matrix(const Matrix& m) {
  u32(static_cast<std::uint32_t>(m.rows()));
  u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
}

void Reader::raw(unsigned char* dst, std::size_t n) {
  in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError("truncated container");
}

namespace {

template <typename U>
U get_le(const unsigned char* buf) {
  U v = 0;
  for (std::size_t k = 0; k < sizeof(U); ++k) v |= static_cast<U>(buf[k]) << (8 * k);
  return v;
}

}  // namespace

std::uint8_t Reader::u8() {
  unsigned char b[1];
  raw(b, 1);
  return b[0];
}
std::uint16_t Reader::u16() {
  unsigned char b[2];
  raw(b, 2);
  return get_le<std::uint16_t>(b);
}
std::uint32_t Reader::u32() {
  unsigned char b[4];
  raw(b, 4);
  return get_le<std::uint32_t>(b);
}
std::uint64_t Reader::u64() {
  unsigned char b[8];
  raw(b, 8);
  return get_le<std::uint64_t>(b);
}
double Reader::f64() { return std::bit_cast<double>(u64()); }

Vector Reader::vector() {
  const std::uint32_t n = u32();
  Vector v(n);
  for (std::uint32_t k = 0; k < n; ++k) v[k] = f64();
  return v;
}

Matrix Reader::matrix() {
  const std::uint32_t rows = u32();
  const std::uint32_t cols = u32();
  Matrix m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = f64();
  return m;
}

Header header_for(const ProblemInstance& inst) {
  Header h;
  const int n = inst.node_count();
  h.nodes = static_cast<std::uint32_t>(n);
  h.degree = static_cast<std::uint32_t>(inst.graph().max_degree() - 1);
  bool uniform_m = true, uniform_rows = true;
  for (int i = 1; i < n; ++i) {
    uniform_m = uniform_m && inst.block_dim(i) == inst.block_dim(0);
    uniform_rows = uniform_rows && inst.design(i).rows() == inst.design(0).rows();
  }
  h.block_dim = uniform_m ? static_cast<std::uint32_t>(inst.block_dim(0)) : 0;
  h.rows = uniform_rows ? static_cast<std::uint32_t>(inst.design(0).rows()) : 0;
  return h;
}

void write_header(Writer& w, const Header& h) {
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u16(h.version);
  w.u32(h.nodes);
  w.u32(h.degree);
  w.u32(h.block_dim);
  w.u32(h.rows);
}

Header read_header(Reader& r) {
  for (char c : kMagic)
    if (r.u8() != static_cast<std::uint8_t>(c)) throw FormatError("bad container magic");
  Header h;
  h.version = r.u16();
  if (h.version != kVersion) throw FormatError("unsupported container version " + std::to_string(h.version));
  h.nodes = r.u32();
  h.degree = r.u32();
  h.block_dim = r.u32();
  h.rows = r.u32();
  return h;
}

}  // namespace container

void save_instance(const ProblemInstance& inst, std::ostream& out) {
  container::Writer w(out);
  container::write_header(w, container::header_for(inst));
  w.u8(container::kInstanceSection);

  const Regularizer& reg = inst.regularizer();
  w.u8(static_cast<std::uint8_t>(reg.kind));
  w.f64(reg.lambda1);
  w.f64(reg.lambda2);

  const int n = inst.node_count();
  for (int i = 0; i < n; ++i) {
    w.u32(static_cast<std::uint32_t>(inst.block_dim(i)));
    auto nb = inst.graph().neighborhood(i);
    w.u32(static_cast<std::uint32_t>(nb.size()));
    for (int j : nb) w.u32(static_cast<std::uint32_t>(j));
  }
  for (int i = 0; i < n; ++i) {
    w.matrix(inst.design(i));
    w.vector(inst.response(i));
  }
  w.vector(inst.ground_truth());
  if (!out) throw FormatError("failed writing instance");
}

void save_instance(const ProblemInstance& inst, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  save_instance(inst, out);
}

ProblemInstance load_instance(std::istream& in) {
  container::Reader r(in);
  const container::Header h = container::read_header(r);
  if (r.u8() != container::kInstanceSection) throw FormatError("container does not hold an instance");

  Regularizer reg;
  const std::uint8_t kind = r.u8();
  if (kind > static_cast<std::uint8_t>(Regularizer::Kind::GroupLasso))
    throw FormatError("unknown regularizer kind");
  reg.kind = static_cast<Regularizer::Kind>(kind);
  reg.lambda1 = r.f64();
  reg.lambda2 = r.f64();

  const int n = static_cast<int>(h.nodes);
  std::vector<int> dims(n);
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    dims[i] = static_cast<int>(r.u32());
    const std::uint32_t count = r.u32();
    bool has_self = false;
    for (std::uint32_t k = 0; k < count; ++k) {
      const int j = static_cast<int>(r.u32());
      if (j >= n) throw FormatError("neighbor id out of range");
      if (j == i) has_self = true;
      if (j > i) edges.emplace_back(i, j);
    }
    if (!has_self) throw FormatError("closed neighborhood lacks its own node");
  }
  Graph graph;
  try {
    graph = Graph::from_edges(n, edges);
  } catch (const ParameterError& e) {
    throw FormatError(std::string("invalid graph in container: ") + e.what());
  }
  std::vector<Matrix> designs;
  std::vector<Vector> responses;
  for (int i = 0; i < n; ++i) {
    designs.push_back(r.matrix());
    responses.push_back(r.vector());
  }
  Vector truth = r.vector();
  try {
    return ProblemInstance(std::move(graph), std::move(dims), std::move(designs),
                           std::move(responses), reg, std::move(truth));
  } catch (const DimensionError& e) {
    throw FormatError(std::string("inconsistent instance container: ") + e.what());
  }
}

ProblemInstance load_instance(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return load_instance(in);
}

void export_truth_csv(const ProblemInstance& inst, std::ostream& out) {
  out << "index,node,value\n";
  const Vector& x = inst.ground_truth();
  char buf[64];
  for (int i = 0; i < inst.node_count(); ++i) {
    for (int k = 0; k < inst.block_dim(i); ++k) {
      const int idx = inst.block_offset(i) + k;
      auto res = std::to_chars(buf, buf + sizeof(buf), x[idx], std::chars_format::general, 17);
      out << idx << ',' << i << ',' << std::string_view(buf, res.ptr - buf) << '\n';
    }
  }
}

}  // namespace qprox
