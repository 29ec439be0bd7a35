#include "qprox/distributed.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>

#include "qprox/container.hpp"
#include "qprox/rng.hpp"

namespace qprox {

// ---------------------------------------------------------------------------
// Wire codec

std::vector<std::uint8_t> encode_message(const Message& msg) {
  if (static_cast<std::uint8_t>(msg.kind) > static_cast<std::uint8_t>(MessageKind::GradInner))
    throw ProtocolError("unknown message kind");
  if (msg.bits < 1 || msg.bits > 64) throw ProtocolError("code width must lie in [1, 64]");
  std::vector<std::uint8_t> frame;
  frame.reserve(kFrameHeaderBytes + (msg.codes.size() * msg.bits + 7) / 8);
  auto put = [&](std::uint64_t v, int bytes) {
    for (int k = 0; k < bytes; ++k) frame.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  };
  put(kFrameMagic, 1);
  put(static_cast<std::uint8_t>(msg.kind), 1);
  put(msg.sender, 2);
  put(msg.outer, 4);
  put(msg.inner, 4);
  put(static_cast<std::uint32_t>(msg.codes.size()), 4);
  put(msg.bits, 1);
  const auto payload = pack_codes(msg.codes, msg.bits);
  frame.insert(frame.end(), payload.begin(), payload.end());
  return frame;
}

Message decode_message(std::span<const std::uint8_t> frame) {
  if (frame.size() < kFrameHeaderBytes) throw ProtocolError("truncated frame header");
  auto get = [&](std::size_t at, int bytes) {
    std::uint64_t v = 0;
    for (int k = 0; k < bytes; ++k) v |= static_cast<std::uint64_t>(frame[at + k]) << (8 * k);
    return v;
  };
  if (frame[0] != kFrameMagic) throw ProtocolError("bad frame magic");
  Message msg;
  const auto kind = static_cast<std::uint8_t>(get(1, 1));
  if (kind > static_cast<std::uint8_t>(MessageKind::GradInner)) throw ProtocolError("bad message kind");
  msg.kind = static_cast<MessageKind>(kind);
  msg.sender = static_cast<std::uint16_t>(get(2, 2));
  msg.outer = static_cast<std::uint32_t>(get(4, 4));
  msg.inner = static_cast<std::uint32_t>(get(8, 4));
  const auto count = static_cast<std::size_t>(get(12, 4));
  msg.bits = static_cast<std::uint8_t>(get(16, 1));
  if (msg.bits < 1 || msg.bits > 64) throw ProtocolError("bad code width");
  const std::size_t payload_bytes = (count * msg.bits + 7) / 8;
  if (frame.size() != kFrameHeaderBytes + payload_bytes) throw ProtocolError("truncated frame payload");
  msg.codes = unpack_codes(frame.subspan(kFrameHeaderBytes), count, msg.bits);
  return msg;
}

// ---------------------------------------------------------------------------
// Bit accounting

std::uint64_t BitLedger::Round::payload() const {
  std::uint64_t total = 0;
  for (auto v : payload_by_kind) total += v;
  return total;
}

void BitLedger::begin_round(int inner_steps) {
  Round r;
  r.inner_payload.assign(static_cast<std::size_t>(inner_steps), 0);
  rounds_.push_back(std::move(r));
}

void BitLedger::record(MessageKind kind, int inner_step, std::uint64_t scalars, int bits) {
  if (rounds_.empty()) throw std::logic_error("ledger record before begin_round");
  Round& r = rounds_.back();
  const std::uint64_t payload = scalars * static_cast<std::uint64_t>(bits);
  const auto k = static_cast<std::size_t>(kind);
  r.payload_by_kind[k] += payload;
  r.messages_by_kind[k] += 1;
  r.header_bits += 8 * kFrameHeaderBytes;
  if (inner_step < 0)
    r.outer_payload += payload;
  else
    r.inner_payload.at(static_cast<std::size_t>(inner_step)) += payload;
}

std::uint64_t BitLedger::total_payload() const {
  std::uint64_t total = 0;
  for (const auto& r : rounds_) total += r.payload();
  return total;
}

std::uint64_t BitLedger::total_header() const {
  std::uint64_t total = 0;
  for (const auto& r : rounds_) total += r.header_bits;
  return total;
}

std::uint64_t bit_upper_bound(std::uint64_t nodes, std::uint64_t inner, std::uint64_t max_degree,
                              std::uint64_t max_block, std::uint64_t bits) {
  return bits * max_block * (nodes + inner) * (max_degree + max_degree * max_degree);
}

std::uint64_t exact_round_bits(const ProblemInstance& inst, std::span<const int> active_nodes,
                               int bits) {
  std::uint64_t scalars = 0;
  for (int i = 0; i < inst.node_count(); ++i) {
    const auto deg = inst.graph().neighborhood(i).size();
    scalars += deg * static_cast<std::uint64_t>(inst.block_dim(i) + inst.stack_dim(i));
  }
  for (int l : active_nodes) {
    const auto deg = inst.graph().neighborhood(l).size();
    scalars += static_cast<std::uint64_t>(inst.stack_dim(l)) * (1 + deg);
  }
  return scalars * static_cast<std::uint64_t>(bits);
}

// ---------------------------------------------------------------------------
// Quantization log and error reconstruction

void save_quant_log(const QuantLog& log, const ProblemInstance& inst, std::ostream& out) {
  container::Writer w(out);
  container::write_header(w, container::header_for(inst));
  w.u8(container::kQuantLogSection);
  w.u32(static_cast<std::uint32_t>(log.nodes));
  w.u32(static_cast<std::uint32_t>(log.inner));
  w.u32(static_cast<std::uint32_t>(log.outer.size()));
  for (std::size_t s = 0; s < log.outer.size(); ++s) {
    w.vector(log.outer[s].state);
    for (const auto& g : log.outer[s].grad) w.vector(g);
    const auto& steps = log.steps.at(s);
    w.u32(static_cast<std::uint32_t>(steps.size()));
    for (const auto& st : steps) {
      w.u32(static_cast<std::uint32_t>(st.active));
      w.vector(st.state);
      w.vector(st.grad);
    }
  }
  if (!out) throw FormatError("failed writing quantization log");
}

void save_quant_log(const QuantLog& log, const ProblemInstance& inst, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  save_quant_log(log, inst, out);
}

QuantLog load_quant_log(std::istream& in) {
  container::Reader r(in);
  const auto header = container::read_header(r);
  if (r.u8() != container::kQuantLogSection) throw FormatError("container does not hold a quantization log");
  QuantLog log;
  log.nodes = static_cast<int>(r.u32());
  if (static_cast<std::uint32_t>(log.nodes) != header.nodes) throw FormatError("log node count disagrees with header");
  log.inner = static_cast<int>(r.u32());
  const std::uint32_t rounds = r.u32();
  log.outer.resize(rounds);
  log.steps.resize(rounds);
  for (std::uint32_t s = 0; s < rounds; ++s) {
    log.outer[s].state = r.vector();
    log.outer[s].grad.resize(static_cast<std::size_t>(log.nodes));
    for (auto& g : log.outer[s].grad) g = r.vector();
    const std::uint32_t steps = r.u32();
    log.steps[s].resize(steps);
    for (auto& st : log.steps[s]) {
      st.active = static_cast<int>(r.u32());
      if (st.active >= log.nodes) throw FormatError("logged active node out of range");
      st.state = r.vector();
      st.grad = r.vector();
    }
  }
  return log;
}

QuantLog load_quant_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return load_quant_log(in);
}

void ErrorReconstructor::begin_round(const OuterErrors& outer) {
  const int n = inst_.node_count();
  if (outer.state.size() != inst_.dimension() || static_cast<int>(outer.grad.size()) != n)
    throw DimensionError("outer error record does not match the instance");
  round_term_ = Vector::Zero(inst_.dimension());
  for (int i = 0; i < n; ++i) {
    const Vector term = inst_.gradient_increment(i, inst_.gather(outer.state, i)) + outer.grad[i];
    inst_.accumulate(round_term_, i, term);
  }
  round_term_ *= 1.0 / n;
}

Vector ErrorReconstructor::step(const OuterErrors& outer, const InnerErrors& inner) const {
  const int l = inner.active;
  // A_l^T [(grad f_l(x^_t) - grad f_l(x_t)) + d_l - (grad f_l(x^_s) - grad f_l(x~_s)) - b_l]
  const Vector local = inst_.gradient_increment(l, inner.state) + inner.grad -
                       inst_.gradient_increment(l, inst_.gather(outer.state, l)) - outer.grad.at(l);
  Vector e = round_term_;
  inst_.accumulate(e, l, local);
  return e;
}

Vector reconstruct_error(const QuantLog& log, const ProblemInstance& inst, int s, int t) {
  if (s < 0 || s >= static_cast<int>(log.outer.size()) || s >= static_cast<int>(log.steps.size()))
    throw std::out_of_range("quantization log has no outer round " + std::to_string(s));
  if (t < 0 || t >= static_cast<int>(log.steps[s].size()))
    throw std::out_of_range("quantization log has no inner step " + std::to_string(t));
  ErrorReconstructor rec(inst);
  rec.begin_round(log.outer[s]);
  return rec.step(log.outer[s], log.steps[s][t]);
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

/// Per-node protocol state. Snapshot vectors are indexed by position in the
/// node's closed neighborhood.
struct Node {
  int id = 0;
  Vector x;
  Vector anchor;
  Vector sum;
  std::array<std::optional<QuantizerState>, kFamilyCount> quantizers;
  std::vector<Vector> state_hat;       // x^_j^(s)
  std::vector<Vector> grad_hat;        // g^_j^(s)
  std::vector<Vector> prev_state_hat;  // x^_j^(s-1)
  std::vector<Vector> prev_grad_hat;   // g^_j^(s-1)
  Vector h_tilde;
  std::vector<Vector> v;  // v_ij
  int self_pos = 0;
};

struct Outgoing {
  std::vector<std::uint8_t> frame;
  Vector value_hat;
};

bool bit_equal(const Vector& a, const Vector& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

class Network {
 public:
  Network(const ProblemInstance& inst, const DistributedOptions& opts) : inst_(inst), opts_(opts) {}

  std::uint64_t overflows = 0;
  std::uint64_t edge_clamps = 0;
  std::uint64_t round_overflows = 0;
  std::uint64_t round_clamps = 0;

  Outgoing transmit(const Vector& value, MessageKind kind, int sender, int s, int t,
                    const QuantizerState* q) {
    Message msg;
    msg.kind = kind;
    msg.sender = static_cast<std::uint16_t>(sender);
    msg.outer = static_cast<std::uint32_t>(s);
    msg.inner = static_cast<std::uint32_t>(t);
    Outgoing out;
    if (q != nullptr) {
      DitherStream dither(opts_.dither_seed, static_cast<Family>(kind), sender, s, t);
      EncodeResult enc = dithered_encode(value, *q, dither);
      round_overflows += static_cast<std::uint64_t>(enc.block.overflows);
      round_clamps += static_cast<std::uint64_t>(enc.block.edge_clamps);
      msg.bits = static_cast<std::uint8_t>(enc.block.bits);
      msg.codes = std::move(enc.block.codes);
      out.value_hat = std::move(enc.reconstruction);
    } else {
      CodewordBlock raw = encode_raw(value);
      msg.bits = 64;
      msg.codes = std::move(raw.codes);
      out.value_hat = value;
    }
    out.frame = encode_message(msg);
    return out;
  }

  Vector receive(std::span<const std::uint8_t> frame, MessageKind kind, int sender, int s, int t,
                 Eigen::Index expected, const QuantizerState* q) const {
    Message msg = decode_message(frame);
    if (msg.kind != kind || msg.sender != sender || msg.outer != static_cast<std::uint32_t>(s) ||
        msg.inner != static_cast<std::uint32_t>(t))
      throw ProtocolError("frame does not match the expected protocol step");
    if (static_cast<Eigen::Index>(msg.codes.size()) != expected)
      throw ProtocolError("codec desync: decoded " + std::to_string(msg.codes.size()) +
                          " scalars, expected " + std::to_string(expected));
    CodewordBlock block;
    block.bits = msg.bits;
    block.codes = std::move(msg.codes);
    if (q == nullptr) return decode_raw(block);
    DitherStream dither(opts_.dither_seed, static_cast<Family>(kind), sender, s, t);
    try {
      return dithered_decode(block, *q, dither);
    } catch (const DimensionError& e) {
      throw ProtocolError(std::string("codec desync: ") + e.what());
    }
  }

  /// Mirror of the sender's quantizer as seen by a recipient.
  std::optional<QuantizerState> view(Family family, int s, const Vector& midpoint) const {
    if (!opts_.quant.enabled) return std::nullopt;
    const auto& qp = opts_.quant;
    return QuantizerState::scheduled(family, qp.bits, qp.intervals[static_cast<std::size_t>(family)],
                                     qp.kappa, s + 1, midpoint);
  }

 private:
  const ProblemInstance& inst_;
  const DistributedOptions& opts_;
};

const QuantizerState* ptr(const std::optional<QuantizerState>& q) { return q ? &*q : nullptr; }

}  // namespace

DistributedResult run_distributed(const ProblemInstance& inst, const ReferenceSolution& reference,
                                  const DistributedOptions& opts, const DistributedObserver& observer) {
  if (!opts.force) check_step_size(opts.eta, max_lipschitz(inst), opts.inner);
  if (opts.inner < 1) throw ParameterError("inner loop length T must be >= 1");
  if (opts.outer < 0) throw ParameterError("outer iteration count must be >= 0");
  const auto& qp = opts.quant;
  if (qp.enabled) {
    if (qp.bits < 2 || qp.bits > 32) throw ParameterError("quantizer bits n must lie in [2, 32]");
    if (!(qp.kappa > 0.0 && qp.kappa < 1.0)) throw ParameterError("kappa must lie in (0, 1)");
    for (double c : qp.intervals)
      if (!(c > 0.0)) throw ParameterError("interval constants C_a..C_d must be positive");
  }
  const int n = inst.node_count();
  if (n > 65535) throw ParameterError("node ids must fit the 16-bit sender field");
  const int p = inst.dimension();
  const int bits = qp.enabled ? qp.bits : 64;
  const double eta = opts.eta;
  const Regularizer& reg = inst.regularizer();
  const Graph& graph = inst.graph();

  std::vector<Node> nodes(n);
  for (int i = 0; i < n; ++i) {
    Node& node = nodes[i];
    node.id = i;
    const int m = inst.block_dim(i);
    node.x = Vector::Zero(m);
    node.anchor = Vector::Zero(m);
    node.self_pos = graph.position(i, i);
    auto nb = graph.neighborhood(i);
    for (int j : nb) {
      node.prev_state_hat.push_back(Vector::Zero(inst.block_dim(j)));
      node.prev_grad_hat.push_back(Vector::Zero(inst.stack_dim(j)));
    }
    node.state_hat = node.prev_state_hat;
    node.grad_hat = node.prev_grad_hat;
    node.v.resize(nb.size());
    if (qp.enabled) {
      for (int f = 0; f < kFamilyCount; ++f) {
        const auto family = static_cast<Family>(f);
        const bool state = family == Family::StateOuter || family == Family::StateInner;
        node.quantizers[f].emplace(family, qp.bits, qp.intervals[f], qp.kappa,
                                   Vector::Zero(state ? m : inst.stack_dim(i)));
      }
    }
  }

  Network net(inst, opts);
  Stream sampler(opts.sampler_seed, Purpose::Sampler);
  ErrorReconstructor reconstructor(inst);
  DistributedResult result;
  if (opts.keep_log) {
    result.log.nodes = n;
    result.log.inner = opts.inner;
  }

  auto global_anchor = [&] {
    Vector x(p);
    for (int i = 0; i < n; ++i) x.segment(inst.block_offset(i), inst.block_dim(i)) = nodes[i].anchor;
    return x;
  };
  auto global_iterate = [&] {
    Vector x(p);
    for (int i = 0; i < n; ++i) x.segment(inst.block_offset(i), inst.block_dim(i)) = nodes[i].x;
    return x;
  };
  auto row_for = [&](int s) {
    const Vector x = global_anchor();
    TraceRow row;
    row.s = s;
    row.gap = inst.objective(x) - reference.objective;
    row.dist = (x - reference.x).norm();
    row.bits_cum = result.ledger.total_payload();
    return row;
  };

  auto state_family_msg = [](Family f) { return static_cast<MessageKind>(f); };

  for (int s = 0; s < opts.outer; ++s) {
    TraceRow row = row_for(s);
    result.ledger.begin_round(opts.inner);
    net.round_overflows = 0;
    net.round_clamps = 0;
    OuterErrors outer_err;
    outer_err.state = Vector::Zero(p);
    outer_err.grad.resize(n);

    // Outer quantizers recentre on last round's broadcast values.
    if (qp.enabled) {
      for (Node& node : nodes) {
        auto& qa = node.quantizers[static_cast<int>(Family::StateOuter)];
        auto& qb = node.quantizers[static_cast<int>(Family::GradOuter)];
        qa = qa->refine(node.prev_state_hat[node.self_pos]);
        qb = qb->refine(node.prev_grad_hat[node.self_pos]);
      }
    }

    // Broadcast quantized states.
    for (int i = 0; i < n; ++i) {
      Node& sender = nodes[i];
      const Outgoing out = net.transmit(sender.anchor, state_family_msg(Family::StateOuter), i, s, 0,
                                        ptr(sender.quantizers[static_cast<int>(Family::StateOuter)]));
      outer_err.state.segment(inst.block_offset(i), inst.block_dim(i)) = out.value_hat - sender.anchor;
      for (int j : graph.neighborhood(i)) {
        Node& rcv = nodes[j];
        const int pos = graph.position(j, i);
        result.ledger.record(MessageKind::StateOuter, -1, static_cast<std::uint64_t>(inst.block_dim(i)), bits);
        const auto q = net.view(Family::StateOuter, s, rcv.prev_state_hat[pos]);
        Vector got = net.receive(out.frame, MessageKind::StateOuter, i, s, 0, inst.block_dim(i), ptr(q));
        if (!bit_equal(got, out.value_hat)) ++result.dither_mismatches;
        rcv.state_hat[pos] = std::move(got);
      }
    }

    // Local gradients on quantized neighborhoods, then broadcast them.
    for (int i = 0; i < n; ++i) {
      Node& sender = nodes[i];
      Vector stack(inst.stack_dim(i));
      int off = 0;
      auto nb = graph.neighborhood(i);
      for (std::size_t k = 0; k < nb.size(); ++k) {
        stack.segment(off, inst.block_dim(nb[k])) = sender.state_hat[k];
        off += inst.block_dim(nb[k]);
      }
      const Vector grad = inst.local_gradient(i, stack);
      const Outgoing out = net.transmit(grad, MessageKind::GradOuter, i, s, 0,
                                        ptr(sender.quantizers[static_cast<int>(Family::GradOuter)]));
      outer_err.grad[i] = out.value_hat - grad;
      for (int j : nb) {
        Node& rcv = nodes[j];
        const int pos = graph.position(j, i);
        result.ledger.record(MessageKind::GradOuter, -1, static_cast<std::uint64_t>(inst.stack_dim(i)), bits);
        const auto q = net.view(Family::GradOuter, s, rcv.prev_grad_hat[pos]);
        Vector got = net.receive(out.frame, MessageKind::GradOuter, i, s, 0, inst.stack_dim(i), ptr(q));
        if (!bit_equal(got, out.value_hat)) ++result.dither_mismatches;
        rcv.grad_hat[pos] = std::move(got);
      }
    }

    // h~_i = (1/N) sum_j B_ij g^_j and v_ij = -B_ij g^_j + h~_i.
    auto build_cache = [&](const Node& node, Vector& h, std::vector<Vector>& v) {
      const int i = node.id;
      auto nb = graph.neighborhood(i);
      h = Vector::Zero(inst.block_dim(i));
      for (std::size_t k = 0; k < nb.size(); ++k) h += inst.scatter_block(node.grad_hat[k], nb[k], i);
      h *= 1.0 / n;
      v.resize(nb.size());
      for (std::size_t k = 0; k < nb.size(); ++k) v[k] = -inst.scatter_block(node.grad_hat[k], nb[k], i) + h;
    };
    for (Node& node : nodes) build_cache(node, node.h_tilde, node.v);

    if (qp.enabled) {
      for (Node& node : nodes) {
        auto& qc = node.quantizers[static_cast<int>(Family::StateInner)];
        auto& qd = node.quantizers[static_cast<int>(Family::GradInner)];
        qc = qc->refine(node.state_hat[node.self_pos]);
        qd = qd->refine(node.grad_hat[node.self_pos]);
      }
      reconstructor.begin_round(outer_err);
    }

    for (Node& node : nodes) {
      node.x = node.anchor;
      node.sum = Vector::Zero(node.x.size());
    }

    std::vector<InnerErrors> step_log;
    double gamma = 0.0;
    for (int t = 0; t < opts.inner; ++t) {
      const int l = static_cast<int>(sampler.below(static_cast<std::uint64_t>(n)));
      Node& active = nodes[l];
      auto nbl = graph.neighborhood(l);
      InnerErrors inner_err;
      inner_err.active = l;
      inner_err.state = Vector::Zero(inst.stack_dim(l));

      // Neighbors send quantized states to l.
      Vector stack(inst.stack_dim(l));
      int off = 0;
      for (std::size_t k = 0; k < nbl.size(); ++k) {
        const int j = nbl[k];
        Node& sender = nodes[j];
        const int m = inst.block_dim(j);
        const Outgoing out = net.transmit(sender.x, MessageKind::StateInner, j, s, t,
                                          ptr(sender.quantizers[static_cast<int>(Family::StateInner)]));
        inner_err.state.segment(off, m) = out.value_hat - sender.x;
        result.ledger.record(MessageKind::StateInner, t, static_cast<std::uint64_t>(m), bits);
        const auto q = net.view(Family::StateInner, s, active.state_hat[k]);
        Vector got = net.receive(out.frame, MessageKind::StateInner, j, s, t, m, ptr(q));
        if (!bit_equal(got, out.value_hat)) ++result.dither_mismatches;
        stack.segment(off, m) = got;
        off += m;
      }

      // l computes, quantizes and sends its gradient to N(l).
      const Vector grad = inst.local_gradient(l, stack);
      const Outgoing out = net.transmit(grad, MessageKind::GradInner, l, s, t,
                                        ptr(active.quantizers[static_cast<int>(Family::GradInner)]));
      inner_err.grad = out.value_hat - grad;

      std::vector<char> touched(static_cast<std::size_t>(n), 0);
      for (int i : nbl) {
        Node& rcv = nodes[i];
        const int pos = graph.position(i, l);
        result.ledger.record(MessageKind::GradInner, t, static_cast<std::uint64_t>(inst.stack_dim(l)), bits);
        const auto q = net.view(Family::GradInner, s, rcv.grad_hat[pos]);
        const Vector got = net.receive(out.frame, MessageKind::GradInner, l, s, t, inst.stack_dim(l), ptr(q));
        if (!bit_equal(got, out.value_hat)) ++result.dither_mismatches;
        const Vector block = inst.scatter_block(got, l, i);
        rcv.x = prox_block(reg, rcv.x - eta * (block + rcv.v[pos]), eta);
        touched[i] = 1;
      }
      for (Node& node : nodes) {
        if (!touched[node.id]) node.x = prox_block(reg, node.x - eta * node.h_tilde, eta);
        node.sum += node.x;
      }

      if (qp.enabled) gamma += reconstructor.step(outer_err, inner_err).squaredNorm();
      if (observer) observer(s, t + 1, global_iterate());
      if (opts.keep_log) step_log.push_back(std::move(inner_err));
    }

    for (Node& node : nodes) node.anchor = node.sum * (1.0 / opts.inner);

    // Cached h~ and v must still match what the received snapshots imply.
    for (const Node& node : nodes) {
      Vector h;
      std::vector<Vector> v;
      build_cache(node, h, v);
      bool same = bit_equal(h, node.h_tilde);
      for (std::size_t k = 0; k < v.size(); ++k) same = same && bit_equal(v[k], node.v[k]);
      if (!same) ++result.cache_mismatches;
    }

    for (Node& node : nodes) {
      std::swap(node.prev_state_hat, node.state_hat);
      std::swap(node.prev_grad_hat, node.grad_hat);
    }

    row.gamma = gamma;
    row.bits_cum = result.ledger.total_payload();
    row.overflows = net.round_overflows;
    row.edge_clamps = net.round_clamps;
    result.overflows += net.round_overflows;
    result.edge_clamps += net.round_clamps;
    result.trace.rows.push_back(row);
    if (opts.keep_log) {
      result.log.outer.push_back(std::move(outer_err));
      result.log.steps.push_back(std::move(step_log));
    }
  }
  result.trace.rows.push_back(row_for(opts.outer));
  result.anchor = global_anchor();
  return result;
}

}  // namespace qprox
