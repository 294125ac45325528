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
#include <bit>
#include <memory>
#include <random>
#include <set>

#include <doctest.h>

#include "svcid/classifier.hpp"
#include "svcid/deduce.hpp"
#include "svcid/error.hpp"
#include "svcid/netsim.hpp"
#include "svcid/registry.hpp"

using namespace svcid;
using namespace svcid::sim;

namespace {

const Ipv4 kUsed(192, 0, 2, 1);
const Ipv4 kFresh(192, 0, 2, 2);

using R = ProbeResponse;

Simulator make_sim(Scenario sc, NetConditions nc = {}) {
  return Simulator(sc, nc, {}, std::make_shared<const Registry>(seed_registry()));
}

Scenario one(Ipv4 ip, Behavior b, std::vector<std::uint16_t> ports = {}) {
  EndpointScript s;
  s.behavior = std::move(b);
  s.ports = std::move(ports);
  return {{ip, s}};
}

TwoSourceConfig two_sources() {
  TwoSourceConfig c;
  c.used_source = kUsed;
  c.fresh_source = kFresh;
  return c;
}

std::vector<Ipv4> range(Ipv4 first, std::uint32_t count) {
  std::vector<Ipv4> out;
  for (std::uint32_t i = 0; i < count; ++i) out.emplace_back(first.value() + i);
  return out;
}

// Independent model: a run of length L yields one /(32-k) block per set bit
// k of L below 2^24 and one /8 block per whole 2^24 chunk.
std::map<int, std::size_t> run_length_oracle(std::vector<std::uint32_t> addrs) {
  std::sort(addrs.begin(), addrs.end());
  std::map<int, std::size_t> hist;
  std::size_t i = 0;
  while (i < addrs.size()) {
    std::size_t j = i;
    while (j + 1 < addrs.size() && addrs[j + 1] == addrs[j] + 1) ++j;
    const std::uint64_t len = j - i + 1;
    if (len >> 24) hist[8] += len >> 24;
    for (int k = 0; k < 24; ++k) {
      if (len >> k & 1) ++hist[32 - k];
    }
    i = j + 1;
  }
  return hist;
}

}  // namespace

TEST_CASE("two-source decision rules") {
  CHECK(classify_shunning({R::kSilence, R::kSynAck}).kind == BehaviorKind::kConnectionShunning);
  CHECK(classify_shunning({R::kRst, R::kSynAck}).kind == BehaviorKind::kConnectionShunning);
  CHECK(classify_shunning({R::kSynAck, R::kSynAck}).kind == BehaviorKind::kNoDefenseObserved);
  CHECK(classify_shunning({R::kSilence, R::kSilence}).kind == BehaviorKind::kNoDefenseObserved);
  CHECK(classify_shunning({R::kSynAck, R::kSilence}).kind == BehaviorKind::kNoDefenseObserved);
  CHECK(classify_dynamic_block({R::kSilence, R::kSynAck}).kind ==
        BehaviorKind::kDynamicBlockAfterHandshake);
  CHECK(classify_dynamic_block({R::kRst, R::kRst}).kind == BehaviorKind::kNoDefenseObserved);
  CHECK(classify_shunning({R::kSilence, R::kSynAck}).supporting_probes ==
        min_supporting_probes(BehaviorKind::kConnectionShunning));
}

TEST_CASE("two-source probe refuses a single source") {
  auto sim = make_sim(one(Ipv4(10, 0, 0, 1), HonestService{"http", {}}, {80}));
  TwoSourceConfig c = two_sources();
  c.fresh_source = c.used_source;
  try {
    probe_two_sources(sim, Ipv4(10, 0, 0, 1), 80, c);
    FAIL("accepted equal sources");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidArgument);
  }
}

TEST_CASE("shunner is detected after a scan from the used source") {
  const Ipv4 target(10, 3, 0, 1);
  auto sim = make_sim(one(target, Shunner{}, {80}));
  deduce(sim, kUsed, {target, 80}, {});
  const auto label = detect_shunning(sim, target, 80, two_sources());
  CHECK(label.kind == BehaviorKind::kConnectionShunning);
}

TEST_CASE("honest host is not a shunner") {
  const Ipv4 target(10, 1, 0, 1);
  auto sim = make_sim(one(target, HonestService{"http", {}}, {80}));
  deduce(sim, kUsed, {target, 80}, {});
  CHECK(detect_shunning(sim, target, 80, two_sources()).kind == BehaviorKind::kNoDefenseObserved);
}

TEST_CASE("dynamic blocker is detected after data from the used source") {
  const Ipv4 target(10, 4, 0, 1);
  auto sim = make_sim(one(target, DynamicBlocker{}, {80}));
  const auto v = deduce(sim, kUsed, {target, 80}, {});
  CHECK(v.outcome == Outcome::kNoAckHost);
  CHECK(detect_dynamic_block(sim, target, 80, two_sources()).kind ==
        BehaviorKind::kDynamicBlockAfterHandshake);
}

TEST_CASE("ephemeral port draw") {
  const auto ports = pick_ephemeral_ports(200, 40000, 3);
  CHECK(ports.size() == 200);
  const std::set<std::uint16_t> distinct(ports.begin(), ports.end());
  CHECK(distinct.size() == ports.size());
  const auto& reg = registered_high_ports();
  for (auto p : ports) {
    CHECK(p >= 32768);
    CHECK(p != 40000);
    CHECK_FALSE(assigned_ports().contains(p));
    CHECK(std::find(reg.begin(), reg.end(), p) == reg.end());
  }
  CHECK(pick_ephemeral_ports(5, 80, 9) == pick_ephemeral_ports(5, 80, 9));
  CHECK(pick_ephemeral_ports(0, 80, 9).empty());
  CHECK_THROWS_AS(pick_ephemeral_ports(-1, 80, 9), Error);
}

TEST_CASE("wildcard acker acknowledges data on every probed port") {
  const Ipv4 target(10, 7, 0, 1);
  auto sim = make_sim(one(target, WildcardAcker{}));
  const auto r = detect_wildcard(sim, kUsed, target, 80, {});
  CHECK(r.wildcard);
  CHECK(r.acked_ports == 5);
  CHECK(r.ports.size() == 5);
}

TEST_CASE("honest host resets ephemeral ports") {
  const Ipv4 target(10, 1, 0, 1);
  auto sim = make_sim(one(target, HonestService{"http", {}}, {80}));
  const auto r = detect_wildcard(sim, kUsed, target, 80, {});
  CHECK_FALSE(r.wildcard);
  CHECK(r.acked_ports == 0);
}

TEST_CASE("partial acknowledgement and the threshold") {
  const Ipv4 target(10, 7, 0, 2);
  WildcardConfig config;
  const auto ports = pick_ephemeral_ports(config.ports, 80, config.seed);
  WildcardAcker acker;
  acker.excluded_ports = {ports[0], ports[1]};
  auto sim = make_sim(one(target, acker));
  const auto r = detect_wildcard(sim, kUsed, target, 80, config);
  CHECK(r.acked_ports == 3);
  CHECK_FALSE(r.wildcard);

  WildcardConfig lenient = config;
  lenient.threshold = 3;
  CHECK(wildcard_verdict(3, lenient));
  CHECK_FALSE(wildcard_verdict(2, lenient));
  // Raising the threshold never turns a negative into a positive.
  for (int acked = 0; acked <= 5; ++acked) {
    for (int t = 1; t < 5; ++t) {
      WildcardConfig lo = config, hi = config;
      lo.threshold = t;
      hi.threshold = t + 1;
      CHECK(static_cast<int>(wildcard_verdict(acked, hi)) <=
            static_cast<int>(wildcard_verdict(acked, lo)));
    }
  }
  WildcardConfig none = config;
  none.ports = 0;
  CHECK_FALSE(wildcard_verdict(0, none));
}

TEST_CASE("ttl mismatch") {
  const std::uint8_t same[] = {63, 63};
  const std::uint8_t split[] = {57, 118};
  const std::uint8_t close[] = {60, 119};
  const std::uint8_t single[] = {30};
  CHECK_FALSE(ttl_mismatch(std::span<const std::uint8_t>(same)));
  CHECK(ttl_mismatch(std::span<const std::uint8_t>(split)));
  CHECK_FALSE(ttl_mismatch(std::span<const std::uint8_t>(close)));
  CHECK_FALSE(ttl_mismatch(std::span<const std::uint8_t>(single)));
}

TEST_CASE("behavior implied by a verdict") {
  StateVerdict v;
  v.refined_state = RefinedState::kZeroWindowNeverOpened;
  CHECK(behavior_from_verdict(v).kind == BehaviorKind::kZeroWindowProtection);
  v.refined_state = RefinedState::kSynAckRetransmitLoop;
  CHECK(behavior_from_verdict(v).kind == BehaviorKind::kMidHandshakeDrop);
  v.refined_state = RefinedState::kRstAfterHandshake;
  CHECK(behavior_from_verdict(v).kind == BehaviorKind::kRstAfterHandshake);
  v.refined_state = RefinedState::kAcknowledgesData;
  CHECK(behavior_from_verdict(v).kind == BehaviorKind::kNoDefenseObserved);
}

TEST_CASE("granularity of consecutive addresses") {
  const auto eight = range(Ipv4(10, 0, 0, 4), 8);
  CHECK(network_granularity(eight) == std::map<int, std::size_t>{{29, 1}});
  for (const auto& [ip, prefix] : block_prefixes(eight)) CHECK(prefix == 29);

  CHECK(network_granularity(range(Ipv4(10, 0, 0, 0), 256)) == std::map<int, std::size_t>{{24, 1}});

  const auto twelve = range(Ipv4(10, 0, 0, 0), 12);
  CHECK(network_granularity(twelve) == std::map<int, std::size_t>{{29, 1}, {30, 1}});
  const auto prefixes = block_prefixes(twelve);
  CHECK(prefixes.at(Ipv4(10, 0, 0, 7)) == 29);
  CHECK(prefixes.at(Ipv4(10, 0, 0, 8)) == 30);

  const std::vector<Ipv4> scattered = {Ipv4(10, 0, 0, 1), Ipv4(10, 0, 0, 3), Ipv4(10, 0, 9, 9)};
  CHECK(network_granularity(scattered) == std::map<int, std::size_t>{{32, 3}});
  CHECK(network_granularity(std::vector<Ipv4>{}).empty());
}

TEST_CASE("granularity rejects repeated addresses") {
  const std::vector<Ipv4> dup = {Ipv4(10, 0, 0, 1), Ipv4(10, 0, 0, 1)};
  try {
    network_granularity(dup);
    FAIL("accepted a duplicate");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDuplicate);
  }
}

TEST_CASE("granularity agrees with the run-length model") {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    std::set<std::uint32_t> set;
    const int runs = std::uniform_int_distribution<int>(1, 6)(rng);
    for (int r = 0; r < runs; ++r) {
      const std::uint32_t base = std::uniform_int_distribution<std::uint32_t>(0x0a000000, 0x0a00ffff)(rng);
      const int len = std::uniform_int_distribution<int>(1, 700)(rng);
      for (int k = 0; k < len; ++k) set.insert(base + static_cast<std::uint32_t>(k));
    }
    std::vector<Ipv4> ips;
    for (auto a : set) ips.emplace_back(a);
    const std::vector<std::uint32_t> addrs(set.begin(), set.end());
    const auto hist = network_granularity(ips);
    CHECK(hist == run_length_oracle(addrs));
    std::uint64_t covered = 0;
    for (const auto& [prefix, n] : hist) covered += n << (32 - prefix);
    CHECK(covered == set.size());
    CHECK(block_prefixes(ips).size() == set.size());
  }
}

TEST_CASE("runs longer than a /8 are capped") {
  // 2^24 + 3 addresses: one /8, then a /31 and a /32.
  std::vector<Ipv4> ips = range(Ipv4(10, 0, 0, 0), (1u << 24) + 3);
  const auto hist = network_granularity(ips);
  CHECK(hist == std::map<int, std::size_t>{{8, 1}, {31, 1}, {32, 1}});
}
