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

// Raw TCP/IPv4 segments: crafting, parsing, and the small amount of per-flow
// bookkeeping a stateless-style scanner needs.

#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace svcid {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

Bytes to_bytes(std::string_view text);

/// An IPv4 address in host byte order.
class Ipv4 {
 public:
  constexpr Ipv4() = default;
  constexpr explicit Ipv4(std::uint32_t value) : value_(value) {}
  constexpr Ipv4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d)
      : value_((std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) |
               (std::uint32_t{c} << 8) | std::uint32_t{d}) {}

  /// Parses dotted-quad notation; throws Error(kParse) on anything else.
  static Ipv4 parse(std::string_view text);

  constexpr std::uint32_t value() const { return value_; }
  std::string to_string() const;

  friend constexpr auto operator<=>(Ipv4, Ipv4) = default;

 private:
  std::uint32_t value_ = 0;
};

struct TcpFlags {
  static constexpr std::uint8_t kFin = 0x01;
  static constexpr std::uint8_t kSyn = 0x02;
  static constexpr std::uint8_t kRst = 0x04;
  static constexpr std::uint8_t kPsh = 0x08;
  static constexpr std::uint8_t kAck = 0x10;

  std::uint8_t bits = 0;

  constexpr bool has(std::uint8_t mask) const { return (bits & mask) == mask; }
  constexpr bool any(std::uint8_t mask) const { return (bits & mask) != 0; }
  constexpr bool syn() const { return has(kSyn); }
  constexpr bool ack() const { return has(kAck); }
  constexpr bool rst() const { return has(kRst); }
  constexpr bool fin() const { return has(kFin); }
  constexpr bool psh() const { return has(kPsh); }
  constexpr bool synack() const { return has(kSyn | kAck); }

  std::string to_string() const;  // e.g. "SA", "PA", "R"

  friend constexpr bool operator==(TcpFlags, TcpFlags) = default;
};

constexpr TcpFlags flags_of(std::uint8_t bits) { return TcpFlags{bits}; }

struct TcpSegment {
  Ipv4 src_ip;
  Ipv4 dst_ip;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  TcpFlags flags;
  std::uint16_t window = 0;
  std::uint8_t ttl = 64;
  /// Only option ever emitted; other options are skipped on parse.
  std::optional<std::uint16_t> mss;
  Bytes payload;

  /// Sequence space consumed by this segment (SYN and FIN count as one).
  std::uint32_t seq_length() const;

  friend bool operator==(const TcpSegment&, const TcpSegment&) = default;
};

std::string summarize(const TcpSegment& seg);

struct CraftOptions {
  std::size_t mtu = 1500;
  /// Leave checksum bytes zero. Only the simulator path uses this.
  bool skip_checksums = false;
};

struct ParseOptions {
  bool strict_checksums = false;
};

constexpr std::size_t kIpHeaderLen = 20;
constexpr std::size_t kTcpHeaderLen = 20;

/// Largest payload that fits a single segment at the given MTU.
std::size_t max_payload(const CraftOptions& opts, bool with_mss);

Bytes craft(const TcpSegment& seg, const CraftOptions& opts = {});
TcpSegment parse(ByteView wire, const ParseOptions& opts = {});

/// RFC 1071 ones-complement sum over the given words, folded.
std::uint16_t internet_checksum(ByteView data, std::uint32_t initial = 0);

// Sequence-number comparisons modulo 2^32.
constexpr bool seq_lt(std::uint32_t a, std::uint32_t b) {
  return static_cast<std::int32_t>(a - b) < 0;
}
constexpr bool seq_geq(std::uint32_t a, std::uint32_t b) { return !seq_lt(a, b); }

/// Four-tuple as seen from the scanner: src is our address.
struct FlowKey {
  Ipv4 src_ip;
  std::uint16_t src_port = 0;
  Ipv4 dst_ip;
  std::uint16_t dst_port = 0;

  friend constexpr auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

/// Key of the flow an inbound segment belongs to.
constexpr FlowKey inbound_key(const TcpSegment& seg) {
  return FlowKey{seg.dst_ip, seg.dst_port, seg.src_ip, seg.src_port};
}
/// Key of the flow an outbound segment belongs to.
constexpr FlowKey outbound_key(const TcpSegment& seg) {
  return FlowKey{seg.src_ip, seg.src_port, seg.dst_ip, seg.dst_port};
}

enum class FlowPhase { kSynSent, kSynAckSeen, kAckSent, kDataSent, kClosed };

const char* to_string(FlowPhase phase);

struct FlowState {
  FlowKey four_tuple;
  std::uint32_t our_next_seq = 0;
  std::uint32_t their_next_seq = 0;
  std::uint16_t observed_window = 0;
  std::uint8_t synack_ttl = 0;
  std::uint32_t bytes_sent_unacked = 0;
  FlowPhase phase = FlowPhase::kSynSent;
  std::uint64_t packets_sent = 0;
  std::uint64_t packets_received = 0;

  /// Builds the next outbound segment on this flow (no bookkeeping).
  TcpSegment make_segment(TcpFlags flags, Bytes payload = {}) const;
  /// Records an outbound segment: advances our_next_seq and packets_sent.
  void on_sent(const TcpSegment& seg);
  /// Records an inbound segment: packets_received, window, their_next_seq.
  void on_received(const TcpSegment& seg);
};

/// Starts a flow from a SYN we originate with the given initial sequence.
FlowState originate(const FlowKey& key, std::uint32_t isn);

/// Continues a connection whose SYN was sent by someone else. Throws
/// Error(kNotSynAck) unless the segment carries both SYN and ACK.
FlowState adopt(const TcpSegment& synack);

/// Flow table keyed by exact four-tuple. Inbound segments are routed only to
/// the flow whose reversed tuple matches exactly.
template <typename T>
class FlowTable {
 public:
  T& insert(const FlowKey& key, T value) {
    auto [it, inserted] = flows_.insert_or_assign(key, std::move(value));
    return it->second;
  }
  T* find(const FlowKey& key) {
    auto it = flows_.find(key);
    return it == flows_.end() ? nullptr : &it->second;
  }
  T* route(const TcpSegment& inbound) { return find(inbound_key(inbound)); }
  std::optional<T> extract(const FlowKey& key) {
    auto node = flows_.extract(key);
    if (node.empty()) return std::nullopt;
    return std::move(node.mapped());
  }
  bool contains(const FlowKey& key) const { return flows_.contains(key); }
  std::size_t size() const { return flows_.size(); }
  bool empty() const { return flows_.empty(); }
  auto begin() { return flows_.begin(); }
  auto end() { return flows_.end(); }

 private:
  std::map<FlowKey, T> flows_;
};

}  // namespace svcid
