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

// Defense-behavior detectors that need more than one flow: two-source
// probes, wildcard acknowledgement checks, TTL comparison and block sizing.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "svcid/deduce.hpp"
#include "svcid/packet.hpp"
#include "svcid/transport.hpp"

namespace svcid {

enum class BehaviorKind {
  kConnectionShunning,
  kDynamicBlockAfterHandshake,
  kZeroWindowProtection,
  kMidHandshakeDrop,
  kRstAfterHandshake,
  kWildcardAcker,
  kNoDefenseObserved,
};

enum class Granularity { kHost, kNetwork, kUnknown };

const char* to_string(BehaviorKind kind);
const char* to_string(Granularity g);
std::optional<BehaviorKind> parse_behavior(std::string_view name);

struct BehaviorLabel {
  BehaviorKind kind = BehaviorKind::kNoDefenseObserved;
  Granularity granularity_hint = Granularity::kUnknown;
  int supporting_probes = 0;

  friend bool operator==(const BehaviorLabel&, const BehaviorLabel&) = default;
};

/// Minimum probes behind a positive label of each kind.
int min_supporting_probes(BehaviorKind kind);

enum class ProbeResponse { kSynAck, kRst, kSilence };

const char* to_string(ProbeResponse r);
std::optional<ProbeResponse> parse_probe_response(std::string_view name);

struct TwoSourceProbeResult {
  ProbeResponse used_ip_response = ProbeResponse::kSilence;
  ProbeResponse fresh_ip_response = ProbeResponse::kSilence;
};

/// Decision rules on an already-collected two-source result. Positive iff
/// the fresh source got a SYN-ACK and the used one did not.
BehaviorLabel classify_shunning(const TwoSourceProbeResult& r);
BehaviorLabel classify_dynamic_block(const TwoSourceProbeResult& r);

/// Stateless SYN probing of many (source, target) pairs at once.
struct SynProbe {
  Ipv4 source;
  Ipv4 target;
  std::uint16_t port = 0;
};

struct SynProbeConfig {
  /// Rounds; a pair is re-probed only while it has stayed silent.
  int attempts = 4;
  Nanos timeout = std::chrono::seconds(1);
  double timescale = 1.0;
  std::uint64_t seed = 1;
};

/// Answers are aggregated across rounds: any SYN-ACK wins, then any RST.
/// Every SYN-ACK is answered with a RST so no state is left behind.
std::vector<ProbeResponse> syn_probe(Transport& transport, std::span<const SynProbe> probes,
                                     const SynProbeConfig& config);

struct TwoSourceConfig {
  Ipv4 used_source;
  Ipv4 fresh_source;
  SynProbeConfig probe;
};

/// Probes from both sources concurrently. Throws Error(kInvalidArgument)
/// if the sources are equal.
TwoSourceProbeResult probe_two_sources(Transport& transport, Ipv4 target, std::uint16_t port,
                                       const TwoSourceConfig& config);

BehaviorLabel detect_shunning(Transport& transport, Ipv4 target, std::uint16_t port,
                              const TwoSourceConfig& config);
BehaviorLabel detect_dynamic_block(Transport& transport, Ipv4 target, std::uint16_t port,
                                   const TwoSourceConfig& config);

// --- Wildcard acknowledgement -------------------------------------------

/// Registered services above 32767 that wildcard probes never touch.
const std::vector<std::uint16_t>& registered_high_ports();

/// Draws `n` distinct ports from 32768-65535, skipping `studied_port`,
/// registered_high_ports() and the built-in port table.
std::vector<std::uint16_t> pick_ephemeral_ports(int n, std::uint16_t studied_port,
                                                std::uint64_t seed);

struct WildcardConfig {
  int ports = 5;
  /// Acknowledged ports needed for a positive verdict; 0 means all.
  int threshold = 0;
  Bytes payload = to_bytes("\n\n");
  Nanos syn_timeout = std::chrono::seconds(1);
  Nanos data_timeout = std::chrono::seconds(3);
  double timescale = 1.0;
  std::uint64_t seed = 1;
};

/// Tests one ephemeral port: SYN, then data on the ACK, then waits for an
/// acknowledgement covering it. One SYN retry and one data retransmission.
class PortAckProbe {
 public:
  PortAckProbe(const FlowKey& key, std::uint32_t isn, const WildcardConfig& config);

  std::vector<TcpSegment> start(Nanos now);
  std::vector<TcpSegment> on_segment(const TcpSegment& inbound, Nanos now);
  std::vector<TcpSegment> on_deadline(Nanos now);

  Nanos deadline() const { return deadline_; }
  bool done() const { return done_; }
  bool acked() const { return acked_; }
  const FlowKey& key() const { return flow_.four_tuple; }
  std::uint64_t packets_sent() const { return flow_.packets_sent; }
  std::uint64_t packets_received() const { return flow_.packets_received; }

 private:
  enum class Phase { kSyn, kData };

  WildcardConfig config_;
  FlowState flow_;
  Phase phase_ = Phase::kSyn;
  bool retried_ = false;
  bool done_ = false;
  bool acked_ = false;
  std::uint32_t data_seq_ = 0;
  Nanos deadline_{};
};

struct WildcardResult {
  bool wildcard = false;
  int acked_ports = 0;
  std::vector<std::uint16_t> ports;
};

/// True iff at least `threshold` (default all) of the probed ephemeral
/// ports acknowledge data. Timeouts count as non-acknowledgement.
bool wildcard_verdict(int acked, const WildcardConfig& config);

WildcardResult detect_wildcard(Transport& transport, Ipv4 source, Ipv4 target,
                               std::uint16_t studied_port, const WildcardConfig& config);

// --- Evidence-only helpers -----------------------------------------------

/// True iff the largest TTL is at least twice the smallest. Needs two
/// values; fewer returns false.
bool ttl_mismatch(std::span<const std::uint8_t> ttls);
/// Same rule over the inbound segments of one flow's evidence.
bool ttl_mismatch(std::span<const EvidenceEntry> evidence);

/// Behavior implied by a single deduction, without multi-source probes.
BehaviorLabel behavior_from_verdict(const StateVerdict& verdict);

/// Splits a set of addresses into maximal runs of consecutive addresses and
/// cuts each run into power-of-two blocks, largest first (a run of 12 is one
/// /29 and one /30). Counts blocks per prefix length, 32 down to 8. Throws
/// Error(kDuplicate) if an address repeats.
std::map<int, std::size_t> network_granularity(std::span<const Ipv4> ips);

/// Prefix length of the block each address falls into, using the same
/// decomposition.
std::map<Ipv4, int> block_prefixes(std::span<const Ipv4> ips);

}  // namespace svcid
