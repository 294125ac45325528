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

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include <doctest.h>

#include "svcid/deduce.hpp"
#include "svcid/engine.hpp"
#include "svcid/error.hpp"
#include "svcid/netsim.hpp"
#include "svcid/scenario.hpp"

using namespace svcid;
using namespace svcid::sim;

namespace {

const Ipv4 kScanner(192, 0, 2, 1);
const Ipv4 kOther(192, 0, 2, 2);

std::shared_ptr<const Registry> registry() {
  static const auto r = std::make_shared<const Registry>(seed_registry());
  return r;
}

Scenario one(Ipv4 ip, Behavior b, std::vector<std::uint16_t> ports = {}) {
  EndpointScript s;
  s.behavior = std::move(b);
  s.ports = std::move(ports);
  return {{ip, s}};
}

// Minimal hand-driven client for poking scripts one segment at a time.
struct Client {
  Client(Simulator& s, Ipv4 t, std::uint16_t dst_port = 80, std::uint16_t src_port = 41000)
      : sim(s), target(t), sport(src_port), dport(dst_port) {}

  Simulator& sim;
  Ipv4 source = kScanner;
  Ipv4 target;
  std::uint16_t sport;
  std::uint16_t dport;
  std::uint32_t seq = 1000;
  std::uint32_t peer_next = 0;

  void send(std::uint8_t flags, Bytes payload = {}) {
    TcpSegment s;
    s.src_ip = source;
    s.dst_ip = target;
    s.src_port = sport;
    s.dst_port = dport;
    s.seq = seq;
    s.ack = (flags & TcpFlags::kAck) ? peer_next : 0;
    s.flags = flags_of(flags);
    s.window = 65535;
    s.payload = std::move(payload);
    send_segment(sim, s);
    seq += s.seq_length();
  }

  // Everything that arrives within `wait` of virtual time.
  std::vector<TcpSegment> drain(Nanos wait = std::chrono::seconds(30)) {
    std::vector<TcpSegment> got;
    const Nanos deadline = sim.now() + wait;
    while (auto s = receive_segment(sim, deadline)) {
      if (s->flags.synack()) peer_next = s->seq + 1;
      got.push_back(*s);
    }
    return got;
  }

  bool handshake() {
    send(TcpFlags::kSyn);
    auto got = drain(std::chrono::seconds(1));
    if (got.empty() || !got.front().flags.synack()) return false;
    send(TcpFlags::kAck);
    return true;
  }
};

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kParse;
}

}  // namespace

TEST_CASE("scenario invariants are enforced") {
  Scenario dup = one(Ipv4(10, 0, 0, 1), ZeroWindowMiddlebox{});
  dup.push_back(dup.front());
  CHECK(code_of([&] { Simulator(dup, {}, {}, registry()); }) == ErrorCode::kDuplicate);

  MidHandshakeDropper weak;
  weak.ttl_low = 60;
  weak.ttl_high = 119;
  CHECK(code_of([&] { Simulator(one(Ipv4(10, 0, 0, 1), weak), {}, {}, registry()); }) ==
        ErrorCode::kInvalidArgument);
  weak.ttl_high = 120;
  CHECK_NOTHROW(Simulator(one(Ipv4(10, 0, 0, 1), weak), {}, {}, registry()));

  NetConditions bad;
  bad.loss_probability = 1.5;
  CHECK(code_of([&] { Simulator(one(Ipv4(10, 0, 0, 1), ZeroWindowMiddlebox{}), bad, {}, registry()); }) ==
        ErrorCode::kInvalidArgument);
}

TEST_CASE("an honest ssh endpoint is identified as ssh") {
  Simulator sim(one(Ipv4(10, 0, 0, 1), HonestService{"ssh", {}}, {22}), {}, {}, registry());
  EngineConfig ec;
  ec.source = kScanner;
  Engine engine(sim, *registry(), ec);
  std::vector<ScanTask> tasks(1);
  tasks[0].ip = Ipv4(10, 0, 0, 1);
  tasks[0].port = 22;
  const auto records = engine.run(tasks);
  REQUIRE(records.size() == 1);
  CHECK(records[0].identified_protocol == std::optional<std::string>("ssh"));
}

TEST_CASE("zero-window middlebox answers every SYN with window 0") {
  Simulator sim(one(Ipv4(10, 0, 0, 2), ZeroWindowMiddlebox{}), {}, {}, registry());
  for (std::uint16_t port : {22, 80, 443, 8080, 50000}) {
    Client c(sim, Ipv4(10, 0, 0, 2), port, static_cast<std::uint16_t>(40000 + port % 1000));
    c.send(TcpFlags::kSyn);
    const auto got = c.drain(std::chrono::seconds(2));
    REQUIRE(got.size() == 1);
    CHECK(got[0].flags.synack());
    CHECK(got[0].window == 0);
  }
}

TEST_CASE("same seed and 2% loss give byte-identical logs") {
  auto run = [](std::uint64_t seed) {
    Scenario sc;
    for (int i = 0; i < 20; ++i) {
      EndpointScript s;
      s.behavior = HonestService{"http", {}};
      s.ports = {80};
      sc.push_back({Ipv4(10, 1, 0, static_cast<std::uint8_t>(i + 1)), s});
    }
    NetConditions nc;
    nc.loss_probability = 0.02;
    nc.latency_min = std::chrono::milliseconds(5);
    nc.latency_max = std::chrono::milliseconds(50);
    nc.seed = seed;
    Simulator sim(sc, nc, {}, registry());
    EngineConfig ec;
    ec.source = kScanner;
    Engine engine(sim, *registry(), ec);
    std::vector<ScanTask> tasks;
    for (const auto& [ip, script] : sc) {
      ScanTask t;
      t.ip = ip;
      t.port = 80;
      tasks.push_back(t);
    }
    engine.run(tasks);
    std::ostringstream log;
    sim.write_log(log);
    return log.str();
  };
  const std::string a = run(11);
  CHECK(a == run(11));
  CHECK(a != run(12));
}

TEST_CASE("rst-after-handshake resets once the handshake completes") {
  Simulator sim(one(Ipv4(10, 0, 0, 3), RstAfterHandshake{}), {}, {}, registry());
  Client c(sim, Ipv4(10, 0, 0, 3));
  REQUIRE(c.handshake());
  const auto got = c.drain();
  REQUIRE(got.size() == 1);
  CHECK(got[0].flags.rst());
}

TEST_CASE("option-sensitive pptp only answers the good cookie") {
  Simulator sim(one(Ipv4(10, 0, 0, 4), OptionSensitive{"pptp", "good_cookie"}, {1723}), {}, {},
                registry());
  Client bad(sim, Ipv4(10, 0, 0, 4), 1723);
  REQUIRE(bad.handshake());
  bad.send(TcpFlags::kAck | TcpFlags::kPsh, registry()->payload("pptp", "bad_cookie"));
  for (const auto& s : bad.drain()) CHECK(s.payload.empty());

  Client good(sim, Ipv4(10, 0, 0, 4), 1723, 41001);
  REQUIRE(good.handshake());
  good.send(TcpFlags::kAck | TcpFlags::kPsh, registry()->payload("pptp", "good_cookie"));
  bool answered = false;
  for (const auto& s : good.drain()) {
    if (!s.payload.empty()) {
      answered = true;
      CHECK(registry()->match(s.payload, "pptp").matched_protocol ==
            std::optional<std::string>("pptp"));
    }
  }
  CHECK(answered);
}

TEST_CASE("mid-handshake dropper keeps retransmitting the SYN-ACK") {
  MidHandshakeDropper d;  // 8 retransmissions, ttl 118 then 57
  Simulator sim(one(Ipv4(10, 0, 0, 5), d), {}, {}, registry());
  Client c(sim, Ipv4(10, 0, 0, 5));
  REQUIRE(c.handshake());
  const auto rest = c.drain(std::chrono::seconds(60));
  CHECK(rest.size() == 8);
  for (const auto& s : rest) {
    CHECK(s.flags.synack());
    CHECK(s.ttl == 57);
  }
  std::vector<std::uint8_t> ttls{118};
  for (const auto& s : rest) ttls.push_back(s.ttl);
  const bool mismatch = *std::max_element(ttls.begin(), ttls.end()) >=
                        2 * *std::min_element(ttls.begin(), ttls.end());
  CHECK(mismatch);
}

TEST_CASE("data-triggered shunner answers once, then ignores the source everywhere") {
  Shunner s;
  s.trigger = ShunTrigger::kOnData;
  Simulator sim(one(Ipv4(10, 0, 0, 6), s), {}, {}, registry());
  Client first(sim, Ipv4(10, 0, 0, 6));
  REQUIRE(first.handshake());
  first.send(TcpFlags::kAck | TcpFlags::kPsh, to_bytes("\n\n"));
  const auto acked = first.drain();
  REQUIRE_FALSE(acked.empty());
  CHECK(acked[0].ack == first.seq);

  Client again(sim, Ipv4(10, 0, 0, 6), 22, 41002);
  again.send(TcpFlags::kSyn);
  CHECK(again.drain().empty());

  Client fresh(sim, Ipv4(10, 0, 0, 6));
  fresh.source = kOther;
  CHECK(fresh.handshake());
}

TEST_CASE("dynamic blocker completes the handshake, never acks data, then ignores the source") {
  Simulator sim(one(Ipv4(10, 0, 0, 7), DynamicBlocker{true}), {}, {}, registry());
  Client c(sim, Ipv4(10, 0, 0, 7));
  REQUIRE(c.handshake());
  const std::uint32_t data_end = c.seq + 2;
  c.send(TcpFlags::kAck | TcpFlags::kPsh, to_bytes("\n\n"));
  for (const auto& s : c.drain()) {
    const bool acks_data = s.flags.ack() && seq_geq(s.ack, data_end);
    CHECK_FALSE(acks_data);
  }

  Client later(sim, Ipv4(10, 0, 0, 7), 80, 41003);
  later.send(TcpFlags::kSyn);
  CHECK(later.drain().empty());
}

TEST_CASE("wildcard acker acknowledges data on arbitrary ports except excluded ones") {
  WildcardAcker w;
  w.excluded_ports = {9999};
  Simulator sim(one(Ipv4(10, 0, 0, 8), w), {}, {}, registry());
  for (std::uint16_t port : {33000, 41234, 65000}) {
    Client c(sim, Ipv4(10, 0, 0, 8), port);
    REQUIRE(c.handshake());
    c.send(TcpFlags::kAck | TcpFlags::kPsh, to_bytes("\n\n"));
    const auto got = c.drain();
    REQUIRE(got.size() == 1);
    CHECK(got[0].ack == c.seq);
    CHECK(got[0].payload.empty());
  }
  Client excluded(sim, Ipv4(10, 0, 0, 8), 9999);
  excluded.send(TcpFlags::kSyn);
  const auto got = excluded.drain(std::chrono::seconds(1));
  REQUIRE(got.size() == 1);
  CHECK(got[0].flags.rst());
}

TEST_CASE("log conservation under loss") {
  Scenario sc;
  for (int i = 0; i < 50; ++i) {
    EndpointScript s;
    s.behavior = HonestService{"http", {}};
    s.ports = {80};
    sc.push_back({Ipv4(10, 2, 0, static_cast<std::uint8_t>(i + 1)), s});
  }
  NetConditions nc;
  nc.loss_probability = 0.1;
  nc.seed = 5;
  Simulator sim(sc, nc, {}, registry());
  EngineConfig ec;
  ec.source = kScanner;
  Engine engine(sim, *registry(), ec);
  std::vector<ScanTask> tasks;
  for (const auto& [ip, script] : sc) {
    ScanTask t;
    t.ip = ip;
    t.port = 80;
    tasks.push_back(t);
    // One frame to an address with no endpoint.
  }
  ScanTask nowhere;
  nowhere.ip = Ipv4(10, 9, 9, 9);
  nowhere.port = 80;
  tasks.push_back(nowhere);
  engine.run(tasks);

  std::size_t delivered = 0, lost = 0, no_route = 0;
  for (const auto& e : sim.log()) {
    delivered += e.fate == Fate::kDelivered;
    lost += e.fate == Fate::kLost;
    no_route += e.fate == Fate::kNoRoute;
    if (e.fate == Fate::kDelivered) CHECK(e.arrives_at >= e.emitted_at);
  }
  CHECK(delivered + lost + no_route == sim.log().size());
  CHECK(lost == sim.loss_draws());
  CHECK(no_route > 0);
  // Binomial sanity: the drop rate is near the configured probability.
  const double n = static_cast<double>(delivered + lost);
  const double sd = std::sqrt(n * 0.1 * 0.9);
  CHECK(std::abs(static_cast<double>(lost) - 0.1 * n) < 4 * sd);
}

TEST_CASE("honest hosts stay AckHost under 2% loss") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Scenario sc;
    std::vector<DeduceTarget> targets;
    for (int i = 0; i < 40; ++i) {
      EndpointScript s;
      s.behavior = HonestService{"http", {}};
      s.ports = {80};
      const Ipv4 ip(10, 3, static_cast<std::uint8_t>(seed), static_cast<std::uint8_t>(i + 1));
      sc.push_back({ip, s});
      targets.push_back({ip, 80});
    }
    NetConditions nc;
    nc.loss_probability = 0.02;
    nc.seed = seed;
    Simulator sim(sc, nc, {}, registry());
    DeduceConfig dc;
    dc.seed = seed;
    for (const auto& v : deduce_all(sim, kScanner, targets, dc)) {
      CHECK(v.outcome == Outcome::kAckHost);
    }
  }
}

TEST_CASE("canonical responses identify their own protocol") {
  for (const auto& spec : registry()->specs()) {
    if (spec.server_first || spec.matcher.empty()) continue;
    CAPTURE(spec.protocol_name);
    const auto reply = canonical_response(spec.protocol_name, spec.probe_payload, *registry());
    REQUIRE(reply.has_value());
    CHECK(registry()->match(*reply, spec.protocol_name).matched_protocol ==
          std::optional<std::string>(spec.protocol_name));
  }
}

TEST_CASE("frame channel keeps frame boundaries") {
  FrameChannel ch;
  ch.push(to_bytes("abc"));
  ch.push(Bytes{});
  ch.push(to_bytes("defgh"));
  CHECK(ch.pop() == std::optional<Bytes>(to_bytes("abc")));
  CHECK(ch.pop() == std::optional<Bytes>(Bytes{}));
  CHECK(ch.pop() == std::optional<Bytes>(to_bytes("defgh")));
  CHECK_FALSE(ch.pop().has_value());
  CHECK(ch.empty());
}

TEST_CASE("scenario files") {
  const char* text = R"(
seed = 9
loss = 0.02
latency_ms = [5, 25]
timescale = 0.001

[[endpoint]]
ip = "10.0.0.10"
count = 3
behavior = "honest"
protocol = "ssh"
ports = [22, 2222]

[[endpoint]]
ip = "10.0.1.1"
behavior = "mid_handshake_dropper"
synack_retx = 6
ttl_low = 50
ttl_high = 110   # trailing comment

[[endpoint]]
ip = "10.0.2.1"
behavior = "shunner"
trigger = "data"
respond = "rst"
ports = [80]
)";
  const ScenarioFile f = parse_scenario(text);
  CHECK(f.conditions.seed == 9);
  CHECK(f.conditions.loss_probability == doctest::Approx(0.02));
  CHECK(f.conditions.latency_min == std::chrono::milliseconds(5));
  CHECK(f.conditions.latency_max == std::chrono::milliseconds(25));
  CHECK(f.options.timescale == doctest::Approx(0.001));
  REQUIRE(f.endpoints.size() == 5);
  CHECK(f.endpoints[2].first == Ipv4(10, 0, 0, 12));
  CHECK(f.endpoints[2].second.ports == std::vector<std::uint16_t>{22, 2222});
  const auto& d = std::get<MidHandshakeDropper>(f.endpoints[3].second.behavior);
  CHECK(d.synack_retx == 6);
  CHECK(d.ttl_high == 110);
  const auto& s = std::get<Shunner>(f.endpoints[4].second.behavior);
  CHECK(s.trigger == ShunTrigger::kOnData);
  CHECK(s.response == BlockResponse::kRst);

  CHECK(code_of([] { parse_scenario("[[endpoint]]\nip = \"10.0.0.1\"\nbehavior = \"honest\"\nflavor = 1\n"); }) ==
        ErrorCode::kParse);
  CHECK(code_of([] { parse_scenario("seed = 1\nseed = 2\n"); }) == ErrorCode::kParse);
  CHECK(code_of([] { parse_scenario("[network]\n"); }) == ErrorCode::kParse);
  CHECK(code_of([] { parse_scenario("[[endpoint]]\nip = \"10.0.0.1\"\nbehavior = \"teapot\"\n"); }) ==
        ErrorCode::kParse);
}
