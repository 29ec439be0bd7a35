#include "qprox/trace.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace qprox {

std::vector<double> Trace::gaps() const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.gap);
  return out;
}

std::vector<double> Trace::gammas() const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.gamma);
  return out;
}

std::uint64_t Trace::total_overflows() const {
  std::uint64_t total = 0;
  for (const auto& r : rows) total += r.overflows;
  return total;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_trace_csv(const Trace& trace, std::ostream& out, const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << "# " << c << '\n';
  out << kTraceColumns << '\n';
  for (const auto& r : trace.rows) {
    out << r.s << ',' << format_double(r.gap) << ',' << format_double(r.dist) << ','
        << format_double(r.gamma) << ',' << r.bits_cum << ',' << r.overflows << ','
        << r.edge_clamps << '\n';
  }
}

namespace {

template <typename T>
T parse_field(const std::string& text) {
  T value{};
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw std::runtime_error("malformed trace field '" + text + "'");
  return value;
}

}  // namespace

Trace read_trace_csv(std::istream& in, std::vector<std::string>* comments) {
  Trace trace;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("#", 0) == 0) {
      if (comments) comments->push_back(line.size() > 2 ? line.substr(2) : std::string());
      continue;
    }
    if (!header_seen) {
      if (line != kTraceColumns) throw std::runtime_error("unexpected trace header: " + line);
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string f[7];
    for (auto& field : f)
      if (!std::getline(ss, field, ',')) throw std::runtime_error("short trace row: " + line);
    TraceRow r;
    r.s = parse_field<int>(f[0]);
    r.gap = parse_field<double>(f[1]);
    r.dist = parse_field<double>(f[2]);
    r.gamma = parse_field<double>(f[3]);
    r.bits_cum = parse_field<std::uint64_t>(f[4]);
    r.overflows = parse_field<std::uint64_t>(f[5]);
    r.edge_clamps = parse_field<std::uint64_t>(f[6]);
    trace.rows.push_back(r);
  }
  if (!header_seen) throw std::runtime_error("trace has no header row");
  return trace;
}

}  // namespace qprox
