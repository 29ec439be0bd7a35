#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace qprox {

/// Metrics of one outer iteration. Row s describes the anchor iterate
/// x~^(s) and the inner loop that starts from it; the last row (s = S) has
/// no inner loop, so its per-round counters are zero.
struct TraceRow {
  int s = 0;
  double gap = 0.0;    // G(x~^s) - G(x*)
  double dist = 0.0;   // ||x~^s - x*||
  double gamma = 0.0;  // sum_t ||e^{s_t}||^2 over round s
  std::uint64_t bits_cum = 0;  // payload bits sent through the end of round s
  std::uint64_t overflows = 0;
  std::uint64_t edge_clamps = 0;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

struct Trace {
  std::vector<TraceRow> rows;
  /// Run metadata in insertion order (config hash, seeds, ...).
  std::vector<std::pair<std::string, std::string>> meta;

  std::vector<double> gaps() const;
  std::vector<double> gammas() const;
  std::uint64_t total_overflows() const;
};

inline constexpr const char* kTraceColumns = "s,gap,dist,gamma,bits_cum,overflows,edge_clamps";

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// Writes `comment` lines (each prefixed with "# ") then the header and rows.
void write_trace_csv(const Trace& trace, std::ostream& out,
                     const std::vector<std::string>& comments = {});

/// Parses rows written by write_trace_csv; comment lines are returned in
/// `comments` without the "# " prefix.
Trace read_trace_csv(std::istream& in, std::vector<std::string>* comments = nullptr);

}  // namespace qprox
