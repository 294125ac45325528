// Copyright 2026 The svcid Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <memory>

#include <doctest.h>

#include "svcid/deduce.hpp"
#include "svcid/error.hpp"
#include "svcid/netsim.hpp"

using namespace svcid;
using namespace svcid::sim;

namespace {

const Ipv4 kScanner(192, 0, 2, 1);
const Ipv4 kHttp(10, 0, 0, 1);
const Ipv4 kClosed(10, 0, 0, 2);
const Ipv4 kZeroWindow(10, 0, 0, 3);
const Ipv4 kDropper(10, 0, 0, 4);
const Ipv4 kResetter(10, 0, 0, 5);
const Ipv4 kSilent(10, 0, 0, 6);

Scenario population() {
  Scenario sc;
  auto add = [&](Ipv4 ip, Behavior b, std::vector<std::uint16_t> ports) {
    EndpointScript s;
    s.behavior = std::move(b);
    s.ports = std::move(ports);
    sc.push_back({ip, s});
  };
  add(kHttp, HonestService{"http", {}}, {80});
  add(kClosed, HonestService{"ssh", {}}, {22});  // port 80 closed: RST to the SYN
  add(kZeroWindow, ZeroWindowMiddlebox{}, {});
  add(kDropper, MidHandshakeDropper{}, {});
  add(kResetter, RstAfterHandshake{}, {});
  add(kSilent, DynamicBlocker{false}, {});
  return sc;
}

StateVerdict run_one(Ipv4 ip, double timescale = 1.0) {
  SimOptions so;
  so.timescale = timescale;
  Simulator sim(population(), {}, so, std::make_shared<const Registry>(seed_registry()));
  DeduceConfig dc;
  dc.timescale = timescale;
  return deduce(sim, kScanner, {ip, 80}, dc);
}

EvidenceEntry in(std::uint8_t flags, std::uint16_t window = 65535, bool acks_probe = false) {
  EvidenceEntry e;
  e.direction = EvidenceDirection::kIn;
  e.flags = flags_of(flags);
  e.window = window;
  e.acks_probe = acks_probe;
  return e;
}

EvidenceEntry out(std::uint8_t flags) {
  EvidenceEntry e;
  e.direction = EvidenceDirection::kOut;
  e.flags = flags_of(flags);
  return e;
}

constexpr std::uint8_t kSA = TcpFlags::kSyn | TcpFlags::kAck;

// Drives a Deduction by hand: returns the state machine after the SYN-ACK.
struct Manual {
  FlowKey key{kScanner, 45000, Ipv4(10, 9, 0, 1), 80};
  DeduceConfig config;
  Deduction d{key, 7000, config};
  std::vector<TcpSegment> sent;

  TcpSegment from_peer(std::uint8_t flags, std::uint32_t ack) const {
    TcpSegment s;
    s.src_ip = key.dst_ip;
    s.src_port = key.dst_port;
    s.dst_ip = key.src_ip;
    s.dst_port = key.src_port;
    s.seq = 90000;
    s.ack = ack;
    s.flags = flags_of(flags);
    s.window = 1024;
    return s;
  }

  void establish() {
    sent = d.start(Nanos{0});
    auto reply = d.on_segment(from_peer(kSA, 7001), std::chrono::milliseconds(10));
    sent.insert(sent.end(), reply.begin(), reply.end());
  }
};

}  // namespace

TEST_CASE("honest http endpoint acknowledges the probe") {
  const auto v = run_one(kHttp);
  CHECK(v.outcome == Outcome::kAckHost);
  CHECK(v.refined_state == RefinedState::kAcknowledgesData);
  CHECK(v.data_transmissions == 1);
}

TEST_CASE("RST to the SYN means no acknowledgement") {
  const auto v = run_one(kClosed);
  CHECK(v.outcome == Outcome::kNoAckHost);
  CHECK(v.refined_state == RefinedState::kNeverSynAcked);
  CHECK(v.synack_count == 0);
}

TEST_CASE("zero-window middlebox never opens") {
  const auto v = run_one(kZeroWindow);
  CHECK(v.outcome == Outcome::kNoAckHost);
  CHECK(v.refined_state == RefinedState::kZeroWindowNeverOpened);
  CHECK(v.final_window == 0);
  // Original plus the full retransmission budget.
  CHECK(v.data_transmissions == 9);
}

TEST_CASE("SYN-ACK retransmission loop") {
  const auto v = run_one(kDropper);
  CHECK(v.outcome == Outcome::kNoAckHost);
  CHECK(v.refined_state == RefinedState::kSynAckRetransmitLoop);
  CHECK(v.synack_count == 9);
}

TEST_CASE("reset after the handshake") {
  const auto v = run_one(kResetter);
  CHECK(v.outcome == Outcome::kNoAckHost);
  CHECK(v.refined_state == RefinedState::kRstAfterHandshake);
}

TEST_CASE("established but silent through the timeout") {
  const auto v = run_one(kSilent);
  CHECK(v.outcome == Outcome::kNoAckHost);
  CHECK(v.refined_state == RefinedState::kEstablishedNoAck);
}

TEST_CASE("verdicts do not depend on the timescale") {
  for (Ipv4 ip : {kHttp, kClosed, kZeroWindow, kDropper, kResetter, kSilent}) {
    const auto base = run_one(ip, 1.0);
    for (double ts : {0.1, 0.001, 0.00001}) {
      const auto v = run_one(ip, ts);
      CHECK(v.refined_state == base.refined_state);
      CHECK(v.synack_count == base.synack_count);
      CHECK(v.data_transmissions == base.data_transmissions);
    }
  }
}

TEST_CASE("data retransmissions back off from T / 2^budget") {
  const auto v = run_one(kZeroWindow);
  std::vector<Nanos> data_times;
  for (const auto& e : v.evidence) {
    if (e.direction == EvidenceDirection::kOut && e.payload_len > 0) data_times.push_back(e.timestamp);
  }
  REQUIRE(data_times.size() == 9);
  // T = 100 s, budget 8: retransmission i leaves at start + T/256 * (2^i - 1).
  const double unit = 100.0 / 256.0;
  for (std::size_t i = 1; i < data_times.size(); ++i) {
    const double offset = std::chrono::duration<double>(data_times[i] - data_times[0]).count();
    CHECK(offset == doctest::Approx(unit * static_cast<double>((1u << i) - 1)).epsilon(1e-9));
  }
}

TEST_CASE("FIN after the handshake is treated like RST") {
  for (int close : {TcpFlags::kFin | TcpFlags::kAck, TcpFlags::kRst | TcpFlags::kAck,
                    int{TcpFlags::kRst}}) {
    Manual m;
    m.establish();
    m.d.on_segment(m.from_peer(static_cast<std::uint8_t>(close), 7001), std::chrono::milliseconds(20));
    REQUIRE(m.d.done());
    CHECK(m.d.verdict().refined_state == RefinedState::kRstAfterHandshake);
    CHECK(m.d.verdict().outcome == Outcome::kNoAckHost);
  }
}

TEST_CASE("FIN or RST to the SYN ends with NeverSynAcked") {
  for (int close : {TcpFlags::kFin | TcpFlags::kAck, TcpFlags::kRst | TcpFlags::kAck}) {
    Manual m;
    m.d.start(Nanos{0});
    m.d.on_segment(m.from_peer(static_cast<std::uint8_t>(close), 7001), std::chrono::milliseconds(5));
    REQUIRE(m.d.done());
    CHECK(m.d.verdict().refined_state == RefinedState::kNeverSynAcked);
  }
}

TEST_CASE("RST whose ack covers the probe counts as acknowledged") {
  Manual m;
  m.establish();
  const std::uint32_t covered = 7001 + static_cast<std::uint32_t>(m.config.probe_payload.size());
  m.d.on_segment(m.from_peer(TcpFlags::kRst | TcpFlags::kAck, covered),
                 std::chrono::milliseconds(20));
  REQUIRE(m.d.done());
  CHECK(m.d.verdict().outcome == Outcome::kAckHost);

  // One byte short is not an acknowledgement.
  Manual partial;
  partial.establish();
  partial.d.on_segment(partial.from_peer(TcpFlags::kAck, covered - 1), std::chrono::milliseconds(20));
  CHECK_FALSE(partial.d.done());
}

TEST_CASE("handshake ACK and probe follow the SYN-ACK") {
  Manual m;
  m.establish();
  REQUIRE(m.sent.size() == 3);
  CHECK(m.sent[0].flags == flags_of(TcpFlags::kSyn));
  CHECK(m.sent[1].flags == flags_of(TcpFlags::kAck));
  CHECK(m.sent[1].ack == 90001);
  CHECK(m.sent[1].payload.empty());
  CHECK(m.sent[2].payload == to_bytes("\n\n"));
  CHECK(m.sent[2].seq == 7001);
}

TEST_CASE("label_refined examples") {
  CHECK(label_refined(std::vector{out(TcpFlags::kSyn), in(kSA, 0), in(kSA, 0), in(kSA, 0)}) ==
        RefinedState::kZeroWindowNeverOpened);
  CHECK(label_refined(std::vector{out(TcpFlags::kSyn), in(kSA), in(TcpFlags::kRst)}) ==
        RefinedState::kRstAfterHandshake);
  CHECK(label_refined(std::vector{out(TcpFlags::kSyn), in(kSA), in(TcpFlags::kFin | TcpFlags::kAck)}) ==
        RefinedState::kRstAfterHandshake);
  CHECK(label_refined(std::vector{out(TcpFlags::kSyn), in(kSA)}) == RefinedState::kEstablishedNoAck);
  CHECK(label_refined(std::vector{out(TcpFlags::kSyn), out(TcpFlags::kSyn)}) ==
        RefinedState::kNeverSynAcked);
  CHECK(label_refined(std::vector{out(TcpFlags::kSyn), in(TcpFlags::kRst | TcpFlags::kAck)}) ==
        RefinedState::kNeverSynAcked);
  CHECK(label_refined(std::vector{in(kSA), in(TcpFlags::kRst | TcpFlags::kAck, 0, true)}) ==
        RefinedState::kAcknowledgesData);
}

TEST_CASE("label_refined priority with mixed evidence") {
  // Zero window beats the loop and the reset.
  CHECK(label_refined(std::vector{in(kSA, 0), in(kSA, 0), in(TcpFlags::kRst)}) ==
        RefinedState::kZeroWindowNeverOpened);
  // A window that opens is not zero-window; repeated SYN-ACKs make a loop.
  CHECK(label_refined(std::vector{in(kSA, 0), in(kSA, 0), in(kSA, 1024)}) ==
        RefinedState::kSynAckRetransmitLoop);
  // The loop beats a later reset.
  CHECK(label_refined(std::vector{in(kSA), in(kSA), in(TcpFlags::kRst)}) ==
        RefinedState::kSynAckRetransmitLoop);
}

TEST_CASE("label_refined is deterministic and rejects empty evidence") {
  const std::vector ev{out(TcpFlags::kSyn), in(kSA), in(TcpFlags::kRst)};
  CHECK(label_refined(ev) == label_refined(ev));
  try {
    label_refined(std::vector<EvidenceEntry>{});
    FAIL("accepted empty evidence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNoEvidence);
  }
}

TEST_CASE("outcome follows the refined state") {
  CHECK(outcome_of(RefinedState::kAcknowledgesData) == Outcome::kAckHost);
  for (auto s : {RefinedState::kNeverSynAcked, RefinedState::kZeroWindowNeverOpened,
                 RefinedState::kSynAckRetransmitLoop, RefinedState::kRstAfterHandshake,
                 RefinedState::kEstablishedNoAck}) {
    CHECK(outcome_of(s) == Outcome::kNoAckHost);
  }
}

TEST_CASE("config invariants") {
  DeduceConfig c;
  CHECK_NOTHROW(c.validate());
  c.total_timeout = Nanos{0};
  CHECK_THROWS_AS(c.validate(), Error);
  c = DeduceConfig{};
  c.retransmit_budget = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = DeduceConfig{};
  c.timescale = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

namespace {

class BrokenTransport : public Transport {
 public:
  Nanos now() const override { return Nanos{0}; }
  void send(ByteView) override { throw Error(ErrorCode::kTransport, "link down"); }
  std::optional<Bytes> receive(Nanos) override { return std::nullopt; }
};

}  // namespace

TEST_CASE("transport failure is an error, not a verdict") {
  BrokenTransport t;
  try {
    deduce(t, kScanner, {kHttp, 80}, DeduceConfig{});
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTransport);
  }
}

TEST_CASE("concurrent deductions match one-at-a-time runs") {
  Simulator sim(population(), {}, {}, std::make_shared<const Registry>(seed_registry()));
  std::vector<DeduceTarget> targets;
  for (Ipv4 ip : {kHttp, kClosed, kZeroWindow, kDropper, kResetter, kSilent}) targets.push_back({ip, 80});
  const auto all = deduce_all(sim, kScanner, targets, DeduceConfig{});
  REQUIRE(all.size() == targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    CHECK(all[i].target == targets[i].ip);
    CHECK(all[i].refined_state == run_one(targets[i].ip).refined_state);
  }
}
