#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "qprox/central.hpp"
#include "qprox/problem.hpp"
#include "qprox/quantizer.hpp"
#include "qprox/trace.hpp"

namespace qprox {

/// Malformed frame, or a decoded payload that does not fit the protocol.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class MessageKind : std::uint8_t {
  StateOuter = 0,
  GradOuter = 1,
  StateInner = 2,
  GradInner = 3,
};

/// One wire message. Outer kinds carry inner index 0.
struct Message {
  MessageKind kind = MessageKind::StateOuter;
  std::uint16_t sender = 0;
  std::uint32_t outer = 0;
  std::uint32_t inner = 0;
  std::uint8_t bits = 0;
  std::vector<std::uint64_t> codes;

  friend bool operator==(const Message&, const Message&) = default;
};

inline constexpr std::uint8_t kFrameMagic = 0x51;
inline constexpr std::size_t kFrameHeaderBytes = 17;

/// Header (little-endian): magic 0x51, kind u8, sender u16, s u32, t u32,
/// scalar_count u32, n u8; then the codes packed n bits each.
std::vector<std::uint8_t> encode_message(const Message& msg);
Message decode_message(std::span<const std::uint8_t> frame);

/// Payload bits per round and per inner step; frame headers kept apart.
class BitLedger {
 public:
  struct Round {
    std::array<std::uint64_t, 4> payload_by_kind{};  // indexed by MessageKind
    std::array<std::uint64_t, 4> messages_by_kind{};
    std::uint64_t outer_payload = 0;
    std::vector<std::uint64_t> inner_payload;  // one entry per inner step
    std::uint64_t header_bits = 0;

    std::uint64_t payload() const;
  };

  void begin_round(int inner_steps);
  /// One delivery of a `scalars`-component message at `bits` per code.
  void record(MessageKind kind, int inner_step, std::uint64_t scalars, int bits);

  const std::vector<Round>& rounds() const { return rounds_; }
  std::uint64_t total_payload() const;
  std::uint64_t total_header() const;

 private:
  std::vector<Round> rounds_;
};

/// n * m-bar * (N + T) * (D + D^2).
std::uint64_t bit_upper_bound(std::uint64_t nodes, std::uint64_t inner, std::uint64_t max_degree,
                              std::uint64_t max_block, std::uint64_t bits);

/// Exact per-round payload: n * (sum_i |N(i)| (m_i + sum_{j in N(i)} m_j)
/// + sum_t (sum_{j in N(l_t)} m_j) (1 + |N(l_t)|)).
std::uint64_t exact_round_bits(const ProblemInstance& inst, std::span<const int> active_nodes,
                               int bits);

/// Realized quantization errors (quantized minus exact value).
struct OuterErrors {
  Vector state;             // a^(s), all nodes, dimension P
  std::vector<Vector> grad; // b_i^(s), neighborhood stacks
};

struct InnerErrors {
  int active = 0;     // l
  Vector state;       // c_j^(s_t) for j in N(l), stacked
  Vector grad;        // d_l^(s_t)
};

struct QuantLog {
  int nodes = 0;
  int inner = 0;
  std::vector<OuterErrors> outer;
  std::vector<std::vector<InnerErrors>> steps;  // [s][t]
};

void save_quant_log(const QuantLog& log, const ProblemInstance& inst, std::ostream& out);
void save_quant_log(const QuantLog& log, const ProblemInstance& inst, const std::filesystem::path& path);
QuantLog load_quant_log(std::istream& in);
QuantLog load_quant_log(const std::filesystem::path& path);

/// Assembles e^{s_t} from logged errors. The round-constant part
/// (1/N) sum_i A_i^T (grad f_i(x^(s)) - grad f_i(x~^(s)) + b_i) is computed
/// once per round.
class ErrorReconstructor {
 public:
  explicit ErrorReconstructor(const ProblemInstance& inst) : inst_(inst) {}

  void begin_round(const OuterErrors& outer);
  Vector step(const OuterErrors& outer, const InnerErrors& inner) const;

 private:
  const ProblemInstance& inst_;
  Vector round_term_;
};

/// e^{s_t} for a logged step. Throws std::out_of_range for missing entries.
Vector reconstruct_error(const QuantLog& log, const ProblemInstance& inst, int s, int t);

/// Interval constants C_a..C_d indexed by Family.
using IntervalConstants = std::array<double, kFamilyCount>;

struct QuantizationParams {
  bool enabled = true;  // false: lossless 64-bit passthrough
  int bits = 11;
  double kappa = 0.97;
  IntervalConstants intervals{50.0, 300.0, 50.0, 400.0};
};

struct DistributedOptions {
  double eta = 0.0;
  int inner = 1;
  int outer = 1;
  std::uint64_t sampler_seed = 0;
  std::uint64_t dither_seed = 0;
  QuantizationParams quant;
  bool force = false;
  bool keep_log = false;
};

struct DistributedResult {
  Trace trace;
  BitLedger ledger;
  QuantLog log;              // filled only with keep_log
  Vector anchor;             // x~^(S)
  std::uint64_t overflows = 0;
  std::uint64_t edge_clamps = 0;
  std::uint64_t dither_mismatches = 0;  // recipient decode != sender value
  std::uint64_t cache_mismatches = 0;   // cached h~/v != recomputed
  bool envelope_valid() const { return overflows == 0; }
};

/// Same observer contract as the centralized solver: (s, t, x^{s_t}).
using DistributedObserver = IterateObserver;

/// Synchronous message-passing simulation of the quantized distributed
/// method, one state machine per node.
DistributedResult run_distributed(const ProblemInstance& inst, const ReferenceSolution& reference,
                                  const DistributedOptions& opts,
                                  const DistributedObserver& observer = {});

}  // namespace qprox
