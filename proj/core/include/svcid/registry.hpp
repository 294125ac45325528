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

// Handshake registry: what to attach to the handshake ACK for each protocol
// and how to recognize that protocol in whatever bytes come back.

#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "svcid/packet.hpp"

namespace svcid {

/// One test against response bytes.
struct Condition {
  enum class Kind {
    kKeyword,  // ASCII, case-insensitive, anywhere
    kStart,    // ASCII, case-insensitive, at offset 0
    kBytes,    // exact bytes anywhere
    kAt,       // exact bytes at `offset`
    kMask,     // (data[offset + i] & mask[i]) == needle[i]
  };
  Kind kind = Kind::kKeyword;
  Bytes needle;
  Bytes mask;
  std::size_t offset = 0;

  /// Offset of the match, if any.
  std::optional<std::size_t> find(ByteView data) const;
};

/// Conjunction of conditions. Reports the offset of its first condition.
struct Pattern {
  std::vector<Condition> all;

  std::optional<std::size_t> find(ByteView data) const;
};

/// Parses the textual pattern form used in signature files, e.g.
/// `kw:ssh`, `prefix:1603`, `at4:1a2b3c4d&at8:0002`, `mask4:80/80`.
Pattern parse_pattern(std::string_view text);
std::string format_pattern(const Pattern& pattern);

/// Response predicate. Either a list of patterns (any may fire) or an
/// arbitrary function; both are total over arbitrary input.
class Matcher {
 public:
  using Fn = std::function<std::optional<std::size_t>(ByteView)>;

  Matcher() = default;
  explicit Matcher(std::vector<Pattern> patterns) : patterns_(std::move(patterns)) {}
  explicit Matcher(Fn fn) : fn_(std::move(fn)) {}

  std::optional<std::size_t> find(ByteView data) const;
  bool empty() const { return patterns_.empty() && !fn_; }
  bool serializable() const { return !fn_; }
  const std::vector<Pattern>& patterns() const { return patterns_; }

 private:
  std::vector<Pattern> patterns_;
  Fn fn_;
};

struct PayloadVariant {
  std::string name;
  Bytes bytes;
};

struct HandshakeSpec {
  std::string protocol_name;
  /// Attached to the handshake ACK. Empty for "wait" and server-first.
  Bytes probe_payload;
  std::vector<PayloadVariant> payload_variants;
  Matcher matcher;
  bool server_first = false;
};

enum class MatchedBy { kExpectedFirst, kRegistrySweep };

const char* to_string(MatchedBy by);

struct FingerprintResult {
  std::optional<std::string> matched_protocol;
  std::optional<MatchedBy> matched_by;
  std::size_t matched_offset = 0;
  /// Matchers evaluated, including the expected one.
  std::size_t matchers_tried = 0;

  bool matched() const { return matched_protocol.has_value(); }
};

/// A plan entry: protocol name plus optional payload variant ("http:options").
struct HandshakeRef {
  std::string protocol;
  std::optional<std::string> variant;

  std::string to_string() const;
  static HandshakeRef parse(std::string_view text);
  friend bool operator==(const HandshakeRef&, const HandshakeRef&) = default;
};

std::vector<HandshakeRef> parse_plan(std::string_view comma_separated);

class Registry {
 public:
  /// Appends a spec; sweep order is registration order. Throws
  /// Error(kDuplicate) if the name is taken.
  void register_handshake(HandshakeSpec spec);
  /// Replaces the spec with the same name, keeping its sweep position, or
  /// appends it if absent.
  void replace(HandshakeSpec spec);

  /// Tries `expected` first, then every other spec in registration order.
  FingerprintResult match(ByteView data, std::optional<std::string_view> expected = {}) const;

  /// Probe bytes for a protocol. A variant of "default" or nullopt returns
  /// the primary probe. Throws Error(kUnknownProtocol) for unknown names.
  const Bytes& payload(std::string_view protocol,
                       std::optional<std::string_view> variant = {}) const;
  const Bytes& payload(const HandshakeRef& ref) const {
    return payload(ref.protocol, ref.variant);
  }

  const HandshakeSpec* find(std::string_view protocol) const;
  bool contains(std::string_view protocol) const { return find(protocol) != nullptr; }
  const std::vector<HandshakeSpec>& specs() const { return specs_; }
  std::size_t size() const { return specs_.size(); }

  /// Reverse lookup used by simulated servers: which registered probe (and
  /// variant) is exactly this payload.
  std::optional<HandshakeRef> identify_probe(ByteView payload) const;

 private:
  std::vector<HandshakeSpec> specs_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Registry with one spec per built-in protocol.
Registry seed_registry();

/// Signature file: one protocol per line,
///   name server_first(0|1) probe_hex|- pattern... [@variant=hex ...]
/// '#' starts a comment. Lines for names already present replace that spec
/// in place when `override_existing` is set.
void load_signatures(std::istream& in, Registry& registry, bool override_existing = true);
void save_signatures(std::ostream& out, const Registry& registry);

/// Protocol expected on a well-known port, if any.
std::optional<std::string> expected_protocol(std::uint16_t port);

/// Ports with an assigned service in the built-in port table.
const std::map<std::uint16_t, std::string>& assigned_ports();

std::string to_hex(ByteView bytes);
Bytes from_hex(std::string_view hex);

}  // namespace svcid
