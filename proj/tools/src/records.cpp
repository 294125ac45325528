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

#include "svcid_cli/records.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>

#include "svcid/error.hpp"

namespace svcid::cli {

namespace {

// Milliseconds rounded to the microsecond so output is stable text.
double round_ms(Nanos d) {
  const double ms = std::chrono::duration<double, std::milli>(d).count();
  return std::round(ms * 1000.0) / 1000.0;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

template <typename T>
T parse_number(std::string_view text, std::size_t line, const char* what) {
  T value{};
  text = trim(text);
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || p != text.data() + text.size() || text.empty()) {
    throw Error(ErrorCode::kParse,
                "line " + std::to_string(line) + ": bad " + what + " '" + std::string(text) + "'");
  }
  return value;
}

Ipv4 parse_ip(std::string_view text, std::size_t line) {
  try {
    return Ipv4::parse(trim(text));
  } catch (const Error&) {
    throw Error(ErrorCode::kParse,
                "line " + std::to_string(line) + ": bad address '" + std::string(trim(text)) + "'");
  }
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      parts.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return parts;
}

const Json& field(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorCode::kParse, std::string("missing field '") + key + "'");
  return *it;
}

template <typename E>
E enum_field(const Json& j, const char* key, std::optional<E> (*parse)(std::string_view)) {
  const Json& v = field(j, key);
  if (!v.is_string()) throw Error(ErrorCode::kParse, std::string("field '") + key + "' not a string");
  auto parsed = parse(v.get<std::string>());
  if (!parsed) {
    throw Error(ErrorCode::kParse,
                std::string("field '") + key + "': unknown value '" + v.get<std::string>() + "'");
  }
  return *parsed;
}

std::uint16_t port_field(const Json& j) {
  const Json& v = field(j, "port");
  if (!v.is_number_unsigned() || v.get<std::uint64_t>() > 65535) {
    throw Error(ErrorCode::kParse, "field 'port' out of range");
  }
  return static_cast<std::uint16_t>(v.get<std::uint64_t>());
}

Ipv4 ip_field(const Json& j) {
  const Json& v = field(j, "ip");
  if (!v.is_string()) throw Error(ErrorCode::kParse, "field 'ip' not a string");
  return Ipv4::parse(v.get<std::string>());
}

std::optional<BehaviorKind> parse_behavior_opt(std::string_view s) { return parse_behavior(s); }

}  // namespace

std::optional<Outcome> parse_outcome(std::string_view name) {
  for (auto o : {Outcome::kAckHost, Outcome::kNoAckHost}) {
    if (name == to_string(o)) return o;
  }
  return std::nullopt;
}

std::optional<RefinedState> parse_refined_state(std::string_view name) {
  for (auto s : {RefinedState::kNeverSynAcked, RefinedState::kZeroWindowNeverOpened,
                 RefinedState::kSynAckRetransmitLoop, RefinedState::kRstAfterHandshake,
                 RefinedState::kEstablishedNoAck, RefinedState::kAcknowledgesData}) {
    if (name == to_string(s)) return s;
  }
  return std::nullopt;
}

std::optional<Granularity> parse_granularity(std::string_view name) {
  for (auto g : {Granularity::kHost, Granularity::kNetwork, Granularity::kUnknown}) {
    if (name == to_string(g)) return g;
  }
  return std::nullopt;
}

Json record_to_json(const ScanRecord& r) {
  Json j;
  j["seq"] = r.seq;
  j["ip"] = r.ip.to_string();
  j["port"] = r.port;
  j["outcome"] = to_string(r.outcome);
  j["refined_state"] = to_string(r.refined_state);
  j["behavior"] = to_string(r.behavior.kind);
  j["granularity"] = to_string(r.behavior.granularity_hint);
  j["protocol"] = r.identified_protocol ? Json(*r.identified_protocol) : Json(nullptr);
  j["matched_by"] = r.matched_by ? Json(to_string(*r.matched_by)) : Json(nullptr);
  j["attempts"] = r.handshakes_attempted;
  j["pkts_out"] = r.packets_sent;
  j["pkts_in"] = r.packets_received;
  j["ms"] = round_ms(r.wall_time);
  j["synack_count"] = r.synack_count;
  j["ttl_mismatch"] = r.ttl_mismatch;
  if (r.error) j["error"] = *r.error;
  return j;
}

std::string record_to_jsonl(const ScanRecord& record) { return record_to_json(record).dump(); }

ScanRecord record_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kParse, "record is not an object");
  ScanRecord r;
  r.ip = ip_field(j);
  r.port = port_field(j);
  r.outcome = enum_field<Outcome>(j, "outcome", &parse_outcome);
  r.refined_state = enum_field<RefinedState>(j, "refined_state", &parse_refined_state);
  r.last_attempt_state = r.refined_state;
  if (j.contains("behavior")) {
    r.behavior.kind = enum_field<BehaviorKind>(j, "behavior", &parse_behavior_opt);
  }
  if (j.contains("granularity")) {
    r.behavior.granularity_hint = enum_field<Granularity>(j, "granularity", &parse_granularity);
  }
  if (auto it = j.find("protocol"); it != j.end() && it->is_string()) {
    r.identified_protocol = it->get<std::string>();
  }
  if (auto it = j.find("seq"); it != j.end() && it->is_number_unsigned()) {
    r.seq = it->get<std::uint64_t>();
  }
  if (auto it = j.find("attempts"); it != j.end() && it->is_number_integer()) {
    r.handshakes_attempted = it->get<int>();
  }
  if (auto it = j.find("error"); it != j.end() && it->is_string()) r.error = it->get<std::string>();
  return r;
}

Json verdict_to_json(const StateVerdict& v, bool with_evidence) {
  Json j;
  j["ip"] = v.target.to_string();
  j["port"] = v.port;
  j["outcome"] = to_string(v.outcome);
  j["refined_state"] = to_string(v.refined_state);
  j["synack_count"] = v.synack_count;
  j["window"] = v.final_window;
  j["ttl"] = v.synack_ttl;
  j["data_segments"] = v.data_transmissions;
  if (with_evidence) {
    Json ev = Json::array();
    for (const auto& e : v.evidence) ev.push_back(summarize(e));
    j["evidence"] = std::move(ev);
  }
  return j;
}

StateVerdict verdict_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kParse, "verdict is not an object");
  StateVerdict v;
  v.target = ip_field(j);
  v.port = port_field(j);
  v.refined_state = enum_field<RefinedState>(j, "refined_state", &parse_refined_state);
  v.outcome = outcome_of(v.refined_state);
  if (auto it = j.find("synack_count"); it != j.end() && it->is_number_integer()) {
    v.synack_count = it->get<int>();
  }
  if (auto it = j.find("window"); it != j.end() && it->is_number_unsigned()) {
    v.final_window = static_cast<std::uint16_t>(it->get<unsigned>());
  }
  if (auto it = j.find("ttl"); it != j.end() && it->is_number_unsigned()) {
    v.synack_ttl = static_cast<std::uint8_t>(it->get<unsigned>());
  }
  return v;
}

std::vector<Target> read_targets(std::istream& in, std::optional<std::uint16_t> default_port) {
  std::vector<Target> targets;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::string_view s = line;
    if (auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto sep = s.find_first_of(",: \t");
    Target t;
    if (sep == std::string_view::npos) {
      if (!default_port) {
        throw Error(ErrorCode::kParse, "line " + std::to_string(n) + ": no port and no --port given");
      }
      t.ip = parse_ip(s, n);
      t.port = *default_port;
    } else {
      t.ip = parse_ip(s.substr(0, sep), n);
      t.port = parse_number<std::uint16_t>(s.substr(sep + 1), n, "port");
    }
    targets.push_back(t);
  }
  return targets;
}

std::vector<TcpSegment> read_adopt_csv(std::istream& in) {
  std::vector<TcpSegment> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::string_view s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    if (s.starts_with("saddr")) continue;
    const auto cols = split(s, ',');
    if (cols.size() != 7) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(n) + ": expected 7 columns");
    }
    TcpSegment seg;
    seg.src_ip = parse_ip(cols[0], n);
    seg.src_port = parse_number<std::uint16_t>(cols[1], n, "sport");
    seg.dst_ip = parse_ip(cols[2], n);
    seg.dst_port = parse_number<std::uint16_t>(cols[3], n, "dport");
    seg.seq = parse_number<std::uint32_t>(cols[4], n, "seqnum");
    seg.ack = parse_number<std::uint32_t>(cols[5], n, "acknum");
    seg.window = parse_number<std::uint16_t>(cols[6], n, "window");
    seg.flags = flags_of(TcpFlags::kSyn | TcpFlags::kAck);
    out.push_back(std::move(seg));
  }
  return out;
}

std::vector<Json> read_jsonl(std::istream& in) {
  std::vector<Json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void write_table(std::ostream& out, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size() && c < width.size(); ++c) {
      width[c] = std::max(width[c], row[c].size());
    }
  }
  auto emit = [&](const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      line += cells[c];
      if (c + 1 < cells.size()) line.append(width[c] - cells[c].size() + 2, ' ');
    }
    out << line << '\n';
  };
  emit(header);
  for (const auto& row : rows) emit(row);
}

std::vector<std::string> record_table_header() {
  return {"ip", "port", "outcome", "refined_state", "behavior", "protocol", "attempts", "ms"};
}

std::vector<std::string> record_table_row(const ScanRecord& r) {
  char ms[32];
  std::snprintf(ms, sizeof ms, "%.3f", round_ms(r.wall_time));
  return {r.ip.to_string(),
          std::to_string(r.port),
          to_string(r.outcome),
          to_string(r.refined_state),
          to_string(r.behavior.kind),
          r.identified_protocol.value_or("-"),
          std::to_string(r.handshakes_attempted),
          ms};
}

}  // namespace svcid::cli
