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

#include "svcid/registry.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include "svcid/error.hpp"

namespace svcid {
namespace {

std::uint8_t lower(std::uint8_t c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<std::uint8_t>(c + 32) : c;
}

bool equal_at(ByteView data, std::size_t at, const Bytes& needle, bool fold_case) {
  if (at + needle.size() > data.size()) return false;
  for (std::size_t i = 0; i < needle.size(); ++i) {
    std::uint8_t a = data[at + i];
    std::uint8_t b = needle[i];
    if (fold_case) {
      a = lower(a);
      b = lower(b);
    }
    if (a != b) return false;
  }
  return true;
}

std::optional<std::size_t> search(ByteView data, const Bytes& needle, bool fold_case) {
  if (needle.empty()) return 0;
  if (needle.size() > data.size()) return std::nullopt;
  for (std::size_t at = 0; at + needle.size() <= data.size(); ++at) {
    if (equal_at(data, at, needle, fold_case)) return at;
  }
  return std::nullopt;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

// Printable text with %XX escapes for whitespace, '%', '&', '#', and
// non-printable bytes.
std::string escape_text(const Bytes& bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (std::uint8_t c : bytes) {
    if (c > 0x20 && c < 0x7f && c != '%' && c != '&' && c != '#') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += kDigits[c >> 4];
      out += kDigits[c & 0xf];
    }
  }
  return out;
}

Bytes unescape_text(std::string_view text) {
  Bytes out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '%') {
      if (i + 2 >= text.size()) {
        throw Error(ErrorCode::kParse, "truncated escape in '" + std::string(text) + "'");
      }
      const int hi = hex_value(text[i + 1]);
      const int lo = hex_value(text[i + 2]);
      if (hi < 0 || lo < 0) throw Error(ErrorCode::kParse, "bad escape in '" + std::string(text) + "'");
      out.push_back(static_cast<std::uint8_t>(hi * 16 + lo));
      i += 2;
    } else {
      out.push_back(static_cast<std::uint8_t>(text[i]));
    }
  }
  return out;
}

std::size_t parse_offset(std::string_view digits, std::string_view whole) {
  std::size_t value = 0;
  auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc{} || p != digits.data() + digits.size()) {
    throw Error(ErrorCode::kParse, "bad offset in pattern '" + std::string(whole) + "'");
  }
  return value;
}

Condition parse_condition(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw Error(ErrorCode::kParse, "pattern needs 'kind:value': '" + std::string(text) + "'");
  }
  const std::string_view head = text.substr(0, colon);
  const std::string_view body = text.substr(colon + 1);
  Condition c;
  if (head == "kw") {
    c.kind = Condition::Kind::kKeyword;
    c.needle = unescape_text(body);
  } else if (head == "start") {
    c.kind = Condition::Kind::kStart;
    c.needle = unescape_text(body);
  } else if (head == "hex") {
    c.kind = Condition::Kind::kBytes;
    c.needle = from_hex(body);
  } else if (head == "prefix") {
    c.kind = Condition::Kind::kAt;
    c.needle = from_hex(body);
  } else if (head.starts_with("at")) {
    c.kind = Condition::Kind::kAt;
    c.offset = parse_offset(head.substr(2), text);
    c.needle = from_hex(body);
  } else if (head.starts_with("mask")) {
    c.kind = Condition::Kind::kMask;
    c.offset = parse_offset(head.substr(4), text);
    const auto slash = body.find('/');
    if (slash == std::string_view::npos) {
      throw Error(ErrorCode::kParse, "mask pattern needs value/mask: '" + std::string(text) + "'");
    }
    c.needle = from_hex(body.substr(0, slash));
    c.mask = from_hex(body.substr(slash + 1));
    if (c.mask.size() != c.needle.size()) {
      throw Error(ErrorCode::kParse, "mask length differs from value: '" + std::string(text) + "'");
    }
  } else {
    throw Error(ErrorCode::kParse, "unknown pattern kind '" + std::string(head) + "'");
  }
  if (c.needle.empty()) throw Error(ErrorCode::kParse, "empty pattern '" + std::string(text) + "'");
  return c;
}

std::string format_condition(const Condition& c) {
  switch (c.kind) {
    case Condition::Kind::kKeyword: return "kw:" + escape_text(c.needle);
    case Condition::Kind::kStart: return "start:" + escape_text(c.needle);
    case Condition::Kind::kBytes: return "hex:" + to_hex(c.needle);
    case Condition::Kind::kAt:
      if (c.offset == 0) return "prefix:" + to_hex(c.needle);
      return "at" + std::to_string(c.offset) + ":" + to_hex(c.needle);
    case Condition::Kind::kMask:
      return "mask" + std::to_string(c.offset) + ":" + to_hex(c.needle) + "/" + to_hex(c.mask);
  }
  return {};
}

}  // namespace

std::optional<std::size_t> Condition::find(ByteView data) const {
  switch (kind) {
    case Kind::kKeyword: return search(data, needle, true);
    case Kind::kStart:
      return equal_at(data, 0, needle, true) ? std::optional<std::size_t>(0) : std::nullopt;
    case Kind::kBytes: return search(data, needle, false);
    case Kind::kAt:
      return equal_at(data, offset, needle, false) ? std::optional(offset) : std::nullopt;
    case Kind::kMask:
      if (offset + needle.size() > data.size()) return std::nullopt;
      for (std::size_t i = 0; i < needle.size(); ++i) {
        if ((data[offset + i] & mask[i]) != needle[i]) return std::nullopt;
      }
      return offset;
  }
  return std::nullopt;
}

std::optional<std::size_t> Pattern::find(ByteView data) const {
  std::optional<std::size_t> first;
  for (const auto& cond : all) {
    auto at = cond.find(data);
    if (!at) return std::nullopt;
    if (!first) first = at;
  }
  return first;
}

Pattern parse_pattern(std::string_view text) {
  Pattern p;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto amp = text.find('&', start);
    if (amp == std::string_view::npos) amp = text.size();
    p.all.push_back(parse_condition(text.substr(start, amp - start)));
    start = amp + 1;
  }
  return p;
}

std::string format_pattern(const Pattern& pattern) {
  std::string out;
  for (const auto& c : pattern.all) {
    if (!out.empty()) out += '&';
    out += format_condition(c);
  }
  return out;
}

std::optional<std::size_t> Matcher::find(ByteView data) const {
  if (fn_) return fn_(data);
  for (const auto& p : patterns_) {
    if (auto at = p.find(data)) return at;
  }
  return std::nullopt;
}

const char* to_string(MatchedBy by) {
  return by == MatchedBy::kExpectedFirst ? "ExpectedFirst" : "RegistrySweep";
}

std::string HandshakeRef::to_string() const {
  return variant ? protocol + ":" + *variant : protocol;
}

HandshakeRef HandshakeRef::parse(std::string_view text) {
  HandshakeRef ref;
  const auto colon = text.find(':');
  ref.protocol = std::string(text.substr(0, colon));
  if (colon != std::string_view::npos) ref.variant = std::string(text.substr(colon + 1));
  if (ref.protocol.empty() || (ref.variant && ref.variant->empty())) {
    throw Error(ErrorCode::kParse, "bad handshake reference '" + std::string(text) + "'");
  }
  return ref;
}

std::vector<HandshakeRef> parse_plan(std::string_view comma_separated) {
  std::vector<HandshakeRef> plan;
  std::size_t start = 0;
  while (start < comma_separated.size()) {
    auto comma = comma_separated.find(',', start);
    if (comma == std::string_view::npos) comma = comma_separated.size();
    auto item = comma_separated.substr(start, comma - start);
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.front()))) item.remove_prefix(1);
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.back()))) item.remove_suffix(1);
    if (!item.empty()) plan.push_back(HandshakeRef::parse(item));
    start = comma + 1;
  }
  return plan;
}

void Registry::register_handshake(HandshakeSpec spec) {
  if (spec.protocol_name.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "handshake needs a protocol name");
  }
  if (index_.contains(spec.protocol_name)) {
    throw Error(ErrorCode::kDuplicate, "handshake '" + spec.protocol_name + "' already registered");
  }
  index_.emplace(spec.protocol_name, specs_.size());
  specs_.push_back(std::move(spec));
}

void Registry::replace(HandshakeSpec spec) {
  auto it = index_.find(spec.protocol_name);
  if (it == index_.end()) {
    register_handshake(std::move(spec));
    return;
  }
  specs_[it->second] = std::move(spec);
}

FingerprintResult Registry::match(ByteView data, std::optional<std::string_view> expected) const {
  FingerprintResult result;
  if (data.empty()) return result;
  std::optional<std::size_t> expected_index;
  if (expected) {
    if (auto it = index_.find(*expected); it != index_.end()) {
      expected_index = it->second;
      ++result.matchers_tried;
      if (auto at = specs_[it->second].matcher.find(data)) {
        result.matched_protocol = specs_[it->second].protocol_name;
        result.matched_by = MatchedBy::kExpectedFirst;
        result.matched_offset = *at;
        return result;
      }
    }
  }
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (expected_index && i == *expected_index) continue;
    ++result.matchers_tried;
    if (auto at = specs_[i].matcher.find(data)) {
      result.matched_protocol = specs_[i].protocol_name;
      result.matched_by = MatchedBy::kRegistrySweep;
      result.matched_offset = *at;
      return result;
    }
  }
  return result;
}

const Bytes& Registry::payload(std::string_view protocol,
                               std::optional<std::string_view> variant) const {
  const HandshakeSpec* spec = find(protocol);
  if (!spec) throw Error(ErrorCode::kUnknownProtocol, std::string(protocol));
  if (!variant || *variant == "default") return spec->probe_payload;
  for (const auto& v : spec->payload_variants) {
    if (v.name == *variant) return v.bytes;
  }
  throw Error(ErrorCode::kUnknownProtocol,
              std::string(protocol) + " has no variant '" + std::string(*variant) + "'");
}

const HandshakeSpec* Registry::find(std::string_view protocol) const {
  auto it = index_.find(protocol);
  return it == index_.end() ? nullptr : &specs_[it->second];
}

std::optional<HandshakeRef> Registry::identify_probe(ByteView payload) const {
  if (payload.empty()) return std::nullopt;
  auto same = [&](const Bytes& b) { return std::equal(b.begin(), b.end(), payload.begin(), payload.end()); };
  for (const auto& spec : specs_) {
    if (same(spec.probe_payload)) return HandshakeRef{spec.protocol_name, std::nullopt};
    for (const auto& v : spec.payload_variants) {
      if (same(v.bytes)) return HandshakeRef{spec.protocol_name, v.name};
    }
  }
  return std::nullopt;
}

void load_signatures(std::istream& in, Registry& registry, bool override_existing) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string name, flag, probe;
    if (!(fields >> name)) continue;
    if (!(fields >> flag >> probe) || (flag != "0" && flag != "1")) {
      throw Error(ErrorCode::kParse, "signature line " + std::to_string(lineno) +
                                         ": expected 'name server_first probe_hex patterns...'");
    }
    HandshakeSpec spec;
    spec.protocol_name = name;
    spec.server_first = flag == "1";
    if (probe != "-") spec.probe_payload = from_hex(probe);
    std::vector<Pattern> patterns;
    std::string token;
    while (fields >> token) {
      if (token.front() == '@') {
        const auto eq = token.find('=');
        if (eq == std::string::npos || eq == 1) {
          throw Error(ErrorCode::kParse, "signature line " + std::to_string(lineno) +
                                             ": variant needs '@name=hex'");
        }
        spec.payload_variants.push_back(
            {token.substr(1, eq - 1), from_hex(std::string_view(token).substr(eq + 1))});
      } else {
        patterns.push_back(parse_pattern(token));
      }
    }
    spec.matcher = Matcher(std::move(patterns));
    if (override_existing) {
      registry.replace(std::move(spec));
    } else {
      registry.register_handshake(std::move(spec));
    }
  }
}

void save_signatures(std::ostream& out, const Registry& registry) {
  out << "# name server_first probe_hex patterns... @variant=hex\n";
  for (const auto& spec : registry.specs()) {
    if (!spec.matcher.serializable()) {
      out << "# " << spec.protocol_name << ": custom matcher, not representable\n";
      continue;
    }
    out << spec.protocol_name << ' ' << (spec.server_first ? '1' : '0') << ' '
        << (spec.probe_payload.empty() ? std::string("-") : to_hex(spec.probe_payload));
    for (const auto& p : spec.matcher.patterns()) out << ' ' << format_pattern(p);
    for (const auto& v : spec.payload_variants) out << " @" << v.name << '=' << to_hex(v.bytes);
    out << '\n';
  }
}

std::string to_hex(ByteView bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out += kDigits[b >> 4];
    out += kDigits[b & 0xf];
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error(ErrorCode::kParse, "odd-length hex '" + std::string(hex) + "'");
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    const int hi = hex_value(hex[i]);
    const int lo = hex_value(hex[i + 1]);
    if (hi < 0 || lo < 0) throw Error(ErrorCode::kParse, "bad hex '" + std::string(hex) + "'");
    out.push_back(static_cast<std::uint8_t>(hi * 16 + lo));
  }
  return out;
}

}  // namespace svcid
