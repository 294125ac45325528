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

// Deterministic in-process network. Scripted endpoints caricature the
// defensive and service behaviors a scanner meets on the Internet; a logical
// clock lets multi-minute timeouts run in microseconds.

#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "svcid/packet.hpp"
#include "svcid/registry.hpp"
#include "svcid/transport.hpp"

namespace svcid::sim {

/// A real service. `protocol` names a registry entry, or "none" for a host
/// that acknowledges data but never says anything identifiable.
struct HonestService {
  std::string protocol;
  std::optional<Bytes> banner;  // overrides the canonical server-first banner
};

/// Answers every SYN with a zero-window SYN-ACK and never opens the window.
struct ZeroWindowMiddlebox {};

enum class ShunTrigger { kOnSynAck, kOnData };
enum class BlockResponse { kSilence, kRst };

/// Stops answering a source address (on every port) once triggered.
struct Shunner {
  ShunTrigger trigger = ShunTrigger::kOnSynAck;
  BlockResponse response = BlockResponse::kSilence;
};

/// Completes handshakes, never acknowledges data. With `block_source` it
/// also ignores a source entirely once that source has sent data; without
/// it the host is a consistent non-acker.
struct DynamicBlocker {
  bool block_source = true;
};

/// Keeps retransmitting the SYN-ACK and ignores the client's ACK. The first
/// SYN-ACK carries `ttl_high`, retransmissions carry `ttl_low`.
struct MidHandshakeDropper {
  int synack_retx = 8;
  std::uint8_t ttl_low = 57;
  std::uint8_t ttl_high = 118;
};

/// Resets the connection as soon as the client completes the handshake.
struct RstAfterHandshake {};

/// Acknowledges data on every port without speaking any protocol.
struct WildcardAcker {
  bool silent_after_ack = true;  // otherwise resets after acknowledging
  std::vector<std::uint16_t> excluded_ports;
};

/// A real service that only answers one payload variant of its protocol.
struct OptionSensitive {
  std::string protocol;
  std::string accept_variant;
};

using Behavior = std::variant<HonestService, ZeroWindowMiddlebox, Shunner, DynamicBlocker,
                              MidHandshakeDropper, RstAfterHandshake, WildcardAcker,
                              OptionSensitive>;

const char* behavior_name(const Behavior& b);

struct EndpointScript {
  Behavior behavior;
  /// Ports where the behavior is active; empty means every port.
  std::vector<std::uint16_t> ports;
  std::uint8_t ttl = 64;

  bool active_on(std::uint16_t port) const;
};

struct NetConditions {
  double loss_probability = 0.0;
  /// Nominal one-way latency, drawn uniformly from [min, max].
  Nanos latency_min = std::chrono::milliseconds(10);
  Nanos latency_max = std::chrono::milliseconds(10);
  std::uint64_t seed = 1;
};

struct SimOptions {
  /// Multiplies every nominal duration inside the simulator.
  double timescale = 1.0;
  /// Nominal spacing of a dropper's SYN-ACK retransmissions.
  Nanos synack_retx_interval = std::chrono::seconds(1);
  /// When set, frames carry real checksums and are verified on receipt.
  bool strict_checksums = false;
};

using Scenario = std::vector<std::pair<Ipv4, EndpointScript>>;

/// Canonical first bytes a simulated server-first service sends.
Bytes canonical_banner(std::string_view protocol);

/// What a simulated honest service of `protocol` answers to `probe`, if
/// anything. Returns nullopt for protocols that stay silent on foreign input.
std::optional<Bytes> canonical_response(std::string_view protocol, ByteView probe,
                                        const Registry& registry);

struct TimerRequest {
  Nanos delay{};
  FlowKey conn;  // endpoint-local key: src = endpoint
  int tag = 0;
};

struct StepOutput {
  std::vector<TcpSegment> segments;
  std::vector<TimerRequest> timers;
};

/// One scripted host. Pure with respect to time: delays are returned as
/// requests and the caller schedules them.
class Endpoint {
 public:
  Endpoint(Ipv4 ip, EndpointScript script, const Registry* registry, std::uint64_t seed,
           double timescale, Nanos synack_retx_interval);

  StepOutput step(const TcpSegment& inbound);
  StepOutput on_timer(const FlowKey& conn, int tag);

  Ipv4 ip() const { return ip_; }
  const EndpointScript& script() const { return script_; }
  bool is_blocked(Ipv4 source) const { return blocked_.contains(source); }

 private:
  enum class ConnPhase { kSynRcvd, kEstablished };
  struct Conn {
    ConnPhase phase = ConnPhase::kSynRcvd;
    std::uint32_t iss = 0;
    std::uint32_t snd_nxt = 0;
    std::uint32_t rcv_nxt = 0;
    Bytes last_response;
  };

  TcpSegment reply_to(const TcpSegment& in, TcpFlags flags) const;
  TcpSegment from_conn(const FlowKey& key, const Conn& c, TcpFlags flags, Bytes payload = {},
                       std::uint8_t ttl = 0) const;
  void handle_syn(const TcpSegment& in, StepOutput& out);
  void on_established(const FlowKey& key, Conn& c, StepOutput& out);
  /// Returns false when the connection was torn down.
  bool on_data(const FlowKey& key, Conn& c, const TcpSegment& in, StepOutput& out);
  std::uint16_t window() const;

  Ipv4 ip_;
  EndpointScript script_;
  const Registry* registry_;
  std::mt19937_64 rng_;
  double timescale_;
  Nanos synack_retx_interval_;
  std::map<FlowKey, Conn> conns_;
  std::set<Ipv4> blocked_;
};

/// Length-prefixed frame queue (4-byte big-endian length, then the frame).
class FrameChannel {
 public:
  void push(ByteView frame);
  std::optional<Bytes> pop();
  bool empty() const { return buffer_.empty(); }

 private:
  std::deque<std::uint8_t> buffer_;
};

enum class Direction { kToEndpoint, kToScanner };
enum class Fate { kDelivered, kLost, kNoRoute };

struct LogEntry {
  Nanos emitted_at{};
  Nanos arrives_at{};
  Direction direction = Direction::kToEndpoint;
  Fate fate = Fate::kDelivered;
  Bytes frame;
};

struct FlowCounters {
  std::uint64_t to_endpoint = 0;
  std::uint64_t to_scanner = 0;
};

class Simulator final : public Transport {
 public:
  /// Throws Error(kDuplicate) if an address appears twice and
  /// Error(kInvalidArgument) for scripts that break their invariants.
  Simulator(const Scenario& scenario, NetConditions conditions, SimOptions options,
            std::shared_ptr<const Registry> registry);

  Nanos now() const override { return now_; }
  void send(ByteView frame) override;
  std::optional<Bytes> receive(Nanos deadline) override;
  CraftOptions craft_options() const override;
  ParseOptions parse_options() const override;

  const std::vector<LogEntry>& log() const { return log_; }
  std::uint64_t loss_draws() const { return loss_draws_; }
  FlowCounters counters(const FlowKey& scanner_side) const;
  /// Packets the scanner sent to / received from one address, all flows.
  std::uint64_t sent_to(Ipv4 ip) const;
  std::uint64_t received_from(Ipv4 ip) const;
  const Endpoint* endpoint(Ipv4 ip) const;
  double timescale() const { return options_.timescale; }

  /// Human-readable log, one line per entry.
  void write_log(std::ostream& out) const;

 private:
  enum class EventKind { kToEndpoint, kToScanner, kTimer };
  struct Event {
    Nanos at{};
    std::uint64_t order = 0;
    EventKind kind = EventKind::kToEndpoint;
    Bytes frame;
    std::size_t endpoint = 0;
    FlowKey conn;
    int tag = 0;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.at != b.at ? a.at > b.at : a.order > b.order;
    }
  };

  Nanos draw_latency();
  bool draw_loss();
  void emit_from_endpoint(std::size_t index, const StepOutput& out);
  void push(Event ev);

  NetConditions conditions_;
  SimOptions options_;
  std::shared_ptr<const Registry> registry_;
  std::vector<Endpoint> endpoints_;
  std::map<Ipv4, std::size_t> by_ip_;
  std::mt19937_64 rng_;
  std::priority_queue<Event, std::vector<Event>, Later> events_;
  std::uint64_t next_order_ = 0;
  Nanos now_{0};
  FrameChannel inbox_;
  std::vector<LogEntry> log_;
  std::uint64_t loss_draws_ = 0;
  std::map<FlowKey, FlowCounters> counters_;
  std::map<Ipv4, FlowCounters> per_ip_;
};

}  // namespace svcid::sim
