#include <cstring>
#include <memory>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "qprox/analysis.hpp"
#include "qprox/distributed.hpp"

using namespace qprox;
using namespace qprox::testing;

namespace {

DistributedOptions options_for(const ProblemInstance& inst, int inner, int outer, int bits) {
  DistributedOptions o;
  o.eta = 0.1 / max_lipschitz(inst);
  o.inner = inner;
  o.outer = outer;
  o.sampler_seed = 41;
  o.dither_seed = 43;
  o.quant.enabled = bits > 0;
  o.quant.bits = bits > 0 ? bits : 11;
  return o;
}

std::vector<int> sampled_nodes(std::uint64_t seed, int nodes, int count) {
  Stream sampler(seed, Purpose::Sampler);
  std::vector<int> out;
  for (int k = 0; k < count; ++k) out.push_back(static_cast<int>(sampler.below(nodes)));
  return out;
}

}  // namespace

TEST_SUITE("distributed") {

TEST_CASE("frame codec round trip") {
  Stream rng(1, Purpose::Test);
  for (int k = 0; k < 10000; ++k) {
    Message m;
    m.kind = static_cast<MessageKind>(rng.below(4));
    m.sender = static_cast<std::uint16_t>(rng.below(65536));
    m.outer = static_cast<std::uint32_t>(rng.next());
    m.inner = static_cast<std::uint32_t>(rng.next());
    m.bits = static_cast<std::uint8_t>(1 + rng.below(64));
    m.codes.resize(rng.below(40));
    for (auto& c : m.codes) c = m.bits == 64 ? rng.next() : rng.next() & ((std::uint64_t{1} << m.bits) - 1);
    const auto frame = encode_message(m);
    REQUIRE(frame.size() == kFrameHeaderBytes + (m.codes.size() * m.bits + 7) / 8);
    REQUIRE(decode_message(frame) == m);
  }
}

TEST_CASE("frame layout and rejection of malformed frames") {
  Message m;
  m.kind = MessageKind::GradInner;
  m.sender = 0x0102;
  m.outer = 7;
  m.inner = 9;
  m.bits = 11;
  const auto empty = encode_message(m);
  CHECK(empty.size() == 17);
  CHECK(empty[0] == 0x51);
  CHECK(empty[1] == 3);
  CHECK(empty[2] == 0x02);
  CHECK(empty[3] == 0x01);
  CHECK(empty[4] == 7);
  CHECK(empty[8] == 9);
  CHECK(empty[16] == 11);

  m.codes = {5, 6, 7};
  auto frame = encode_message(m);
  auto bad = frame;
  bad[0] = 0x52;
  CHECK_THROWS_AS(decode_message(bad), ProtocolError);
  bad = frame;
  bad[1] = 9;
  CHECK_THROWS_AS(decode_message(bad), ProtocolError);
  bad = frame;
  bad.pop_back();
  CHECK_THROWS_AS(decode_message(bad), ProtocolError);
  CHECK_THROWS_AS(decode_message(std::span(frame).first(10)), ProtocolError);
}

TEST_CASE("ledger counts codeword bits, not padded bytes") {
  BitLedger ledger;
  ledger.begin_round(2);
  ledger.record(MessageKind::StateOuter, -1, 3, 11);  // 33 bits, 5 bytes on the wire
  ledger.record(MessageKind::GradInner, 1, 5, 13);
  CHECK(ledger.total_payload() == 33 + 65);
  CHECK(ledger.total_header() == 2 * 136);
  CHECK(ledger.rounds()[0].outer_payload == 33);
  CHECK(ledger.rounds()[0].inner_payload[1] == 65);
  CHECK(ledger.rounds()[0].messages_by_kind[3] == 1);
}

TEST_CASE("bit upper bound") {
  CHECK(bit_upper_bound(40, 80, 9, 10, 11) == 1'188'000);
  CHECK(bit_upper_bound(40, 80, 1, 10, 11) == 11ull * 10 * 120 * 2);
}

TEST_CASE("hand-enumerated message flow on three nodes") {
  struct Case {
    Graph graph;
    int outer_scalars;
    std::vector<int> inner_scalars;  // by active node
  };
  // Path 0-1-2: outer 7 state + 17 gradient scalars; inner |N(l)| + |N(l)|^2.
  // Triangle: 9 + 27 outer; every inner step 3 + 9.
  const Case cases[] = {{path3(), 24, {6, 12, 6}}, {triangle(), 36, {12, 12, 12}}};
  for (const auto& c : cases) {
    const ProblemInstance inst = generate_instance_on(c.graph, 1, 2, Regularizer::elastic_net(0.1, 1.0), 1.0, 2);
    const ReferenceSolution ref = exact_reference(inst);
    DistributedOptions o = options_for(inst, 7, 1, 11);
    const DistributedResult r = run_distributed(inst, ref, o);
    const auto& round = r.ledger.rounds().at(0);
    CHECK(round.outer_payload == 11u * c.outer_scalars);
    const auto active = sampled_nodes(o.sampler_seed, 3, 7);
    std::uint64_t expected = 11u * c.outer_scalars;
    for (int t = 0; t < 7; ++t) {
      CHECK(round.inner_payload[t] == 11u * c.inner_scalars[active[t]]);
      expected += 11u * c.inner_scalars[active[t]];
    }
    CHECK(round.payload() == expected);
    CHECK(exact_round_bits(inst, active, 11) == expected);
    int state_msgs = 0;
    for (int i = 0; i < 3; ++i) state_msgs += static_cast<int>(inst.graph().neighborhood(i).size());
    CHECK(round.messages_by_kind[0] == static_cast<std::uint64_t>(state_msgs));
    CHECK(round.messages_by_kind[1] == static_cast<std::uint64_t>(state_msgs));
    CHECK(round.payload() <= bit_upper_bound(3, 7, inst.graph().max_degree(), 1, 11));
    CHECK(round.header_bits == 136u * (round.messages_by_kind[0] + round.messages_by_kind[1] +
                                        round.messages_by_kind[2] + round.messages_by_kind[3]));
  }
}

TEST_CASE("unquantized mode reproduces the centralized solver bit for bit") {
  const ProblemInstance inst = small_instance(Regularizer::elastic_net(0.1, 1.0), 31);
  const ReferenceSolution ref = exact_reference(inst);
  DistributedOptions o = options_for(inst, 12, 10, 0);
  std::vector<Vector> dist_iterates, central_iterates;
  const DistributedResult d =
      run_distributed(inst, ref, o, [&](int, int, const Vector& x) { dist_iterates.push_back(x); });
  SvrgOptions so;
  so.eta = o.eta;
  so.inner = o.inner;
  so.outer = o.outer;
  so.sampler_seed = o.sampler_seed;
  const SvrgResult c = inexact_prox_svrg(inst, ref, so, ErrorInjector::none(),
                                         [&](int, int, const Vector& x) { central_iterates.push_back(x); });
  REQUIRE(dist_iterates.size() == central_iterates.size());
  for (std::size_t k = 0; k < dist_iterates.size(); ++k)
    REQUIRE(std::memcmp(dist_iterates[k].data(), central_iterates[k].data(),
                        sizeof(double) * inst.dimension()) == 0);
  for (std::size_t s = 0; s < c.trace.rows.size(); ++s) {
    CHECK(d.trace.rows[s].gap == c.trace.rows[s].gap);
    CHECK(d.trace.rows[s].dist == c.trace.rows[s].dist);
  }
  // Raw passthrough sends 64 bits per scalar.
  CHECK(d.ledger.rounds()[0].outer_payload % 64 == 0);
}

TEST_CASE("quantized run keeps dither and caches coherent and logs bounded errors") {
  const ProblemInstance inst = small_instance(Regularizer::elastic_net(0.1, 1.0), 31);
  const ReferenceSolution ref = exact_reference(inst);
  DistributedOptions o = options_for(inst, 12, 15, 9);
  o.quant.intervals = {20.0, 400.0, 20.0, 400.0};
  o.keep_log = true;
  const DistributedResult r = run_distributed(inst, ref, o);
  CHECK(r.dither_mismatches == 0);
  CHECK(r.cache_mismatches == 0);
  CHECK(r.overflows == 0);
  CHECK(r.envelope_valid());
  REQUIRE(r.log.outer.size() == 15);
  for (int s = 0; s < 15; ++s) {
    auto step_of = [&](int family) {
      return o.quant.intervals[family] * std::pow(o.quant.kappa, 0.5 * (s + 1)) /
             (std::ldexp(1.0, o.quant.bits) - 1.0);
    };
    CHECK(r.log.outer[s].state.cwiseAbs().maxCoeff() <= 1.5 * step_of(0));
    for (const auto& b : r.log.outer[s].grad) CHECK(b.cwiseAbs().maxCoeff() <= 1.5 * step_of(1));
    REQUIRE(r.log.steps[s].size() == 12);
    for (const auto& st : r.log.steps[s]) {
      CHECK(st.state.cwiseAbs().maxCoeff() <= 1.5 * step_of(2));
      CHECK(st.grad.cwiseAbs().maxCoeff() <= 1.5 * step_of(3));
    }
  }
  // Gamma in the trace is the reconstructed error energy.
  for (int s = 0; s < 15; ++s)
    CHECK(r.trace.rows[s].gamma == doctest::Approx(error_energy(r.log, inst, s)).epsilon(1e-12));
}

TEST_CASE("undersized intervals overflow without stopping the run") {
  const ProblemInstance inst = small_instance(Regularizer::elastic_net(0.1, 1.0), 31);
  const ReferenceSolution ref = exact_reference(inst);
  DistributedOptions o = options_for(inst, 12, 3, 8);
  o.quant.intervals = {1e-3, 1e-3, 1e-3, 1e-3};
  const DistributedResult r = run_distributed(inst, ref, o);
  CHECK(r.overflows > 0);
  CHECK_FALSE(r.envelope_valid());
  CHECK(r.trace.rows.size() == 4);
  CHECK(r.trace.total_overflows() == r.overflows);
}

TEST_CASE("invalid quantizer settings are refused") {
  const ProblemInstance inst = small_instance(Regularizer::elastic_net(0.1, 1.0), 31);
  const ReferenceSolution ref = exact_reference(inst);
  DistributedOptions o = options_for(inst, 4, 1, 11);
  o.quant.kappa = 1.0;
  CHECK_THROWS_AS(run_distributed(inst, ref, o), ParameterError);
  o = options_for(inst, 4, 1, 1);
  CHECK_THROWS_AS(run_distributed(inst, ref, o), ParameterError);
  o = options_for(inst, 4, 1, 11);
  o.quant.intervals[2] = 0.0;
  CHECK_THROWS_AS(run_distributed(inst, ref, o), ParameterError);
}

TEST_CASE("error reconstruction") {
  const ProblemInstance inst = small_instance(Regularizer::elastic_net(0.1, 1.0), 31);
  QuantLog zero;
  zero.nodes = inst.node_count();
  zero.inner = 1;
  OuterErrors oe;
  oe.state = Vector::Zero(inst.dimension());
  for (int i = 0; i < inst.node_count(); ++i) oe.grad.push_back(Vector::Zero(inst.stack_dim(i)));
  InnerErrors ie;
  ie.active = 2;
  ie.state = Vector::Zero(inst.stack_dim(2));
  ie.grad = Vector::Zero(inst.stack_dim(2));
  zero.outer.push_back(oe);
  zero.steps.push_back({ie});
  CHECK(reconstruct_error(zero, inst, 0, 0).isZero(0.0));
  CHECK_THROWS_AS(reconstruct_error(zero, inst, 1, 0), std::out_of_range);
  CHECK_THROWS_AS(reconstruct_error(zero, inst, 0, 1), std::out_of_range);

  // A lone gradient error d on the active node lifts to the neighborhood.
  Stream rng(3, Purpose::Test);
  zero.steps[0][0].grad = random_vector(rng, inst.stack_dim(2));
  const Vector e = reconstruct_error(zero, inst, 0, 0);
  CHECK(e == inst.lift(2, zero.steps[0][0].grad));
}

TEST_CASE("quantization log round trip") {
  const ProblemInstance inst = small_instance(Regularizer::elastic_net(0.1, 1.0), 31);
  const ReferenceSolution ref = exact_reference(inst);
  DistributedOptions o = options_for(inst, 6, 3, 10);
  o.keep_log = true;
  const DistributedResult r = run_distributed(inst, ref, o);
  std::stringstream buf;
  save_quant_log(r.log, inst, buf);
  const QuantLog back = load_quant_log(buf);
  REQUIRE(back.outer.size() == 3);
  for (int s = 0; s < 3; ++s) {
    CHECK(back.outer[s].state == r.log.outer[s].state);
    for (int t = 0; t < 6; ++t) {
      CHECK(back.steps[s][t].active == r.log.steps[s][t].active);
      CHECK(back.steps[s][t].grad == r.log.steps[s][t].grad);
    }
    CHECK(error_energy(back, inst, s) == error_energy(r.log, inst, s));
  }
}

TEST_CASE("replayed errors reproduce the distributed iterates") {
  const ProblemInstance inst = small_instance(Regularizer::elastic_net(0.1, 1.0), 37);
  const ReferenceSolution ref = exact_reference(inst);
  DistributedOptions o = options_for(inst, 12, 8, 9);
  o.quant.intervals = {8.0, 40.0, 8.0, 40.0};
  o.keep_log = true;
  std::vector<Vector> dist;
  const DistributedResult r = run_distributed(inst, ref, o, [&](int, int, const Vector& x) { dist.push_back(x); });
  auto seq = std::make_shared<ErrorSequence>();
  for (int s = 0; s < o.outer; ++s) {
    seq->emplace_back();
    for (int t = 0; t < o.inner; ++t) seq->back().push_back(reconstruct_error(r.log, inst, s, t));
  }
  SvrgOptions so;
  so.eta = o.eta;
  so.inner = o.inner;
  so.outer = o.outer;
  so.sampler_seed = o.sampler_seed;
  std::vector<Vector> central;
  inexact_prox_svrg(inst, ref, so, ErrorInjector::replay(seq), [&](int, int, const Vector& x) { central.push_back(x); });
  REQUIRE(central.size() == dist.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < dist.size(); ++k) worst = std::max(worst, relative_error(dist[k], central[k]));
  CHECK(worst <= 1e-9);
}

TEST_CASE("second-moment bound on the reconstructed error") {
  const ProblemInstance inst = small_instance(Regularizer::elastic_net(0.1, 1.0), 37);
  const ReferenceSolution ref = exact_reference(inst);
  DistributedOptions o = options_for(inst, 12, 6, 7);
  o.quant.intervals = {8.0, 40.0, 8.0, 40.0};
  o.keep_log = true;
  const DistributedResult r = run_distributed(inst, ref, o);
  const double lbar = max_lipschitz(inst);
  for (int s = 0; s < o.outer; ++s) {
    double bound = 0.0;
    for (const auto& st : r.log.steps[s]) bound += lemma1_step_bound(inst, r.log.outer[s], st, lbar);
    const double mean_energy = error_energy(r.log, inst, s) / o.inner;
    CHECK(mean_energy <= 1.1 * bound / o.inner);
  }
}

}  // TEST_SUITE
