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

// Server TCP state deduction: does an endpoint that answers SYNs ever
// acknowledge data we send it?

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "svcid/packet.hpp"
#include "svcid/transport.hpp"

namespace svcid {

enum class Outcome { kAckHost, kNoAckHost };

enum class RefinedState {
  kNeverSynAcked,
  kZeroWindowNeverOpened,
  kSynAckRetransmitLoop,
  kRstAfterHandshake,
  kEstablishedNoAck,
  kAcknowledgesData,
};

const char* to_string(Outcome outcome);
const char* to_string(RefinedState state);
Outcome outcome_of(RefinedState state);

enum class EvidenceDirection { kOut, kIn };

struct EvidenceEntry {
  Nanos timestamp{};
  EvidenceDirection direction = EvidenceDirection::kIn;
  TcpFlags flags;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::uint16_t window = 0;
  std::uint8_t ttl = 0;
  std::size_t payload_len = 0;
  /// Inbound only: ACK flag set and ack number covers the probe payload.
  bool acks_probe = false;
};

std::string summarize(const EvidenceEntry& e);

struct DeduceConfig {
  Bytes probe_payload = to_bytes("\n\n");
  Nanos total_timeout = std::chrono::seconds(100);
  int retransmit_budget = 8;
  /// Multiplies every duration in this config.
  double timescale = 1.0;
  /// SYN retransmission: first retry after syn_rto, doubling.
  Nanos syn_rto = std::chrono::seconds(1);
  int syn_retries = 2;
  std::uint16_t mss = 1460;
  /// Seeds source-port and ISN choice.
  std::uint64_t seed = 1;

  /// Throws Error(kInvalidArgument) when an invariant is broken.
  void validate() const;
};

struct StateVerdict {
  Ipv4 target;
  std::uint16_t port = 0;
  std::uint16_t source_port = 0;
  Outcome outcome = Outcome::kNoAckHost;
  RefinedState refined_state = RefinedState::kNeverSynAcked;
  std::vector<EvidenceEntry> evidence;
  int synack_count = 0;
  std::uint16_t final_window = 0;
  std::uint8_t synack_ttl = 0;
  /// Data segments sent, original included.
  int data_transmissions = 0;
};

/// Maps one run's evidence to a refined state. An inbound segment that
/// acknowledges the probe wins outright; otherwise the priority is
/// NeverSynAcked > ZeroWindowNeverOpened > SynAckRetransmitLoop >
/// RstAfterHandshake > EstablishedNoAck. Throws Error(kNoEvidence) on empty
/// input.
RefinedState label_refined(std::span<const EvidenceEntry> evidence);

/// One deduction as an explicit state machine, driven by the caller.
class Deduction {
 public:
  Deduction(const FlowKey& key, std::uint32_t isn, const DeduceConfig& config);

  /// Emits the first SYN.
  std::vector<TcpSegment> start(Nanos now);
  std::vector<TcpSegment> on_segment(const TcpSegment& inbound, Nanos now);
  /// Called at or after deadline().
  std::vector<TcpSegment> on_deadline(Nanos now);

  Nanos deadline() const { return deadline_; }
  bool done() const { return phase_ == Phase::kDone; }
  const FlowKey& key() const { return flow_.four_tuple; }
  StateVerdict verdict() const;

 private:
  enum class Phase { kSyn, kData, kDone };

  TcpSegment emit(TcpFlags flags, Bytes payload, Nanos now);
  void record(const TcpSegment& seg, EvidenceDirection dir, Nanos now, bool acks_probe);
  std::vector<TcpSegment> send_data(Nanos now, bool retransmission);

  DeduceConfig config_;
  FlowState flow_;
  Phase phase_ = Phase::kSyn;
  std::vector<EvidenceEntry> evidence_;
  int synack_count_ = 0;
  int syn_sent_ = 0;
  int data_sent_ = 0;
  std::uint32_t data_seq_ = 0;
  std::uint32_t data_end_ = 0;
  Nanos data_start_{};
  Nanos syn_start_{};
  Nanos deadline_{};
};

struct DeduceTarget {
  Ipv4 ip;
  std::uint16_t port = 0;
};

/// Runs one deduction to completion.
StateVerdict deduce(Transport& transport, Ipv4 source, const DeduceTarget& target,
                    const DeduceConfig& config);

/// Runs many deductions concurrently over one transport. Results are in
/// input order.
std::vector<StateVerdict> deduce_all(Transport& transport, Ipv4 source,
                                     std::span<const DeduceTarget> targets,
                                     const DeduceConfig& config,
                                     std::size_t max_in_flight = 1024);

}  // namespace svcid
