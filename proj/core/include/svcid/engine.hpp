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

// Identification engine: for each target, walk a handshake plan, send each
// probe on the handshake ACK, drop hosts that never acknowledge data, and
// fingerprint whatever bytes come back.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "svcid/classifier.hpp"
#include "svcid/deduce.hpp"
#include "svcid/packet.hpp"
#include "svcid/registry.hpp"
#include "svcid/transport.hpp"

namespace svcid {

// --- Per-flow state machine ----------------------------------------------

enum class EnginePhase {
  kAwaitSynAck,
  kSynRetransmitted,
  kDataSent,
  kRetransmitted,
  kAwaitBanner,
};

struct EngineEvent {
  enum class Kind { kSynAckSeen, kDataArrived, kAckArrived, kRstOrFin, kTimeout };
  Kind kind = Kind::kTimeout;
  std::uint16_t window = 0;         // kSynAckSeen
  bool ack_covers_payload = false;  // kRstOrFin

  static EngineEvent syn_ack(std::uint16_t window) { return {Kind::kSynAckSeen, window, false}; }
  static EngineEvent data() { return {Kind::kDataArrived, 0, false}; }
  static EngineEvent ack() { return {Kind::kAckArrived, 0, false}; }
  static EngineEvent rst_or_fin(bool covers) { return {Kind::kRstOrFin, 0, covers}; }
  static EngineEvent timeout() { return {Kind::kTimeout, 0, false}; }
};

enum class AbortReason { kZeroWindow, kNoAck, kNoSynAck };

struct EngineAction {
  enum class Kind {
    kSendAckWithData,  // empty payload for wait-style handshakes
    kRetransmitSyn,
    kRetransmitWithPush,
    kFingerprint,
    kCloseThenNextHandshake,
    kFinish,
    kAbort,
    kIgnore,  // recorded as evidence only
  };
  Kind kind = Kind::kIgnore;
  AbortReason reason = AbortReason::kNoAck;

  friend bool operator==(const EngineAction&, const EngineAction&) = default;
};

const char* to_string(EnginePhase phase);
const char* to_string(EngineAction::Kind kind);
const char* to_string(AbortReason reason);

/// Pure transition function. `plan_remains` says whether another handshake
/// is left after the current one. Throws Error(kProtocolViolation) for
/// pairs that cannot occur.
EngineAction next_action(EnginePhase phase, const EngineEvent& event, bool plan_remains);

// --- Tasks and records ---------------------------------------------------

struct ScanTask {
  Ipv4 ip;
  std::uint16_t port = 0;
  /// Continue a connection begun by an external SYN scanner.
  std::optional<TcpSegment> adopted_synack;
  std::vector<HandshakeRef> handshake_plan;
  int wildcard_probe_count = 0;
};

struct ScanRecord {
  std::uint64_t seq = 0;  // completion order
  Ipv4 ip;
  std::uint16_t port = 0;
  Outcome outcome = Outcome::kNoAckHost;
  RefinedState refined_state = RefinedState::kNeverSynAcked;
  /// Refined state of the last handshake attempted.
  RefinedState last_attempt_state = RefinedState::kNeverSynAcked;
  BehaviorLabel behavior;
  std::optional<std::string> identified_protocol;
  std::optional<MatchedBy> matched_by;
  int handshakes_attempted = 0;
  std::uint64_t packets_sent = 0;
  std::uint64_t packets_received = 0;
  Nanos wall_time{};
  int synack_count = 0;
  bool ttl_mismatch = false;
  int data_segments_sent = 0;
  int wildcard_acked_ports = 0;
  std::optional<std::string> error;
  /// Every flow this record used, for cross-checking packet counters.
  std::vector<FlowKey> flows;
};

struct EngineConfig {
  Ipv4 source;
  /// How long to wait for an ACK or response after sending a probe.
  Nanos data_timeout = std::chrono::seconds(3);
  /// How long a wait-style handshake listens for a banner.
  Nanos banner_wait = std::chrono::seconds(3);
  Nanos syn_timeout = std::chrono::seconds(1);
  double timescale = 1.0;
  std::size_t max_in_flight = 1024;
  std::uint64_t seed = 1;
  /// Full plan against every target: no early stop, no fail-fast.
  bool naive = false;
  WildcardConfig wildcard;

  void validate() const;
};

/// Plan used when the task leaves it empty: the port's expected protocol
/// first (if any), then wait, http, tls, dns, pptp without duplicates.
std::vector<HandshakeRef> default_plan(std::uint16_t port);

/// The base plan for ports without an assigned service.
const std::vector<HandshakeRef>& unassigned_plan();

/// Throws Error(kUnknownProtocol) if an entry is not registered, and
/// Error(kInvalidArgument) if the plan is empty.
void check_plan(std::span<const HandshakeRef> plan, const Registry& registry);

struct RetryContext {
  bool strict = false;
  double timescale = 1.0;
};

/// Wait before a full follow-up handshake on an identified service.
Nanos retry_delay_policy(const RetryContext& context);

class Engine {
 public:
  using TaskSource = std::function<std::optional<ScanTask>()>;
  using RecordSink = std::function<void(ScanRecord)>;

  Engine(Transport& transport, const Registry& registry, EngineConfig config);
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  /// Pulls tasks while fewer than max_in_flight are active and emits
  /// records in completion order.
  void run(const TaskSource& tasks, const RecordSink& sink);
  std::vector<ScanRecord> run(std::span<const ScanTask> tasks);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace svcid
