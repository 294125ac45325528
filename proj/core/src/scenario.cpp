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

#include "svcid/scenario.hpp"

#include <charconv>
#include <istream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "svcid/error.hpp"

namespace svcid::sim {
namespace {

using Scalar = std::variant<std::int64_t, double, bool, std::string>;
struct Value {
  bool is_array = false;
  std::vector<Scalar> items;  // exactly one item when !is_array
};


[[noreturn]] void fail(int line, const std::string& what) {
  throw Error(ErrorCode::kParse, "scenario line " + std::to_string(line) + ": " + what);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Strips a trailing comment, ignoring '#' inside strings.
std::string_view strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && in_string) {
      ++i;
    } else if (line[i] == '"') {
      in_string = !in_string;
    } else if (line[i] == '#' && !in_string) {
      return line.substr(0, i);
    }
  }
  return line;
}

class ValueParser {
 public:
  ValueParser(std::string_view text, int line) : s_(text), line_(line) {}

  Value parse() {
    Value v;
    skip_ws();
    if (peek() == '[') {
      ++pos_;
      v.is_array = true;
      skip_ws();
      while (peek() != ']') {
        v.items.push_back(scalar());
        skip_ws();
        if (peek() == ',') {
          ++pos_;
          skip_ws();
        } else if (peek() != ']') {
          fail(line_, "expected ',' or ']' in array");
        }
      }
      ++pos_;
    } else {
      v.items.push_back(scalar());
    }
    skip_ws();
    if (pos_ != s_.size()) fail(line_, "trailing characters after value");
    return v;
  }

 private:
  char peek() const {
    if (pos_ >= s_.size()) fail(line_, "unexpected end of value");
    return s_[pos_];
  }
  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  Scalar scalar() {
    const char c = peek();
    if (c == '"') return string();
    std::size_t end = pos_;
    while (end < s_.size() && s_[end] != ',' && s_[end] != ']' && s_[end] != ' ' && s_[end] != '\t') ++end;
    const std::string_view tok = s_.substr(pos_, end - pos_);
    pos_ = end;
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::string clean;
    for (char ch : tok) {
      if (ch != '_') clean.push_back(ch);
    }
    if (clean.find_first_of(".eE") == std::string::npos) {
      std::int64_t i = 0;
      auto [p, ec] = std::from_chars(clean.data(), clean.data() + clean.size(), i);
      if (ec == std::errc{} && p == clean.data() + clean.size()) return i;
    } else {
      try {
        std::size_t used = 0;
        const double d = std::stod(clean, &used);
        if (used == clean.size()) return d;
      } catch (const std::exception&) {
      }
    }
    fail(line_, "cannot parse value '" + std::string(tok) + "'");
  }

  std::string string() {
    ++pos_;
    std::string out;
    for (;;) {
      const char c = peek();
      ++pos_;
      if (c == '"') return out;
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      const char e = peek();
      ++pos_;
      switch (e) {
        case 'n': out.push_back('\n'); break;
        case 'r': out.push_back('\r'); break;
        case 't': out.push_back('\t'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case 'x': {
          if (pos_ + 2 > s_.size()) fail(line_, "truncated \\x escape");
          unsigned v = 0;
          auto [p, ec] = std::from_chars(s_.data() + pos_, s_.data() + pos_ + 2, v, 16);
          if (ec != std::errc{} || p != s_.data() + pos_ + 2) fail(line_, "bad \\x escape");
          out.push_back(static_cast<char>(v));
          pos_ += 2;
          break;
        }
        default: fail(line_, std::string("unknown escape \\") + e);
      }
    }
  }

  std::string_view s_;
  int line_;
  std::size_t pos_ = 0;
};

struct Entry {
  Value value;
  int line;
};
using Table = std::map<std::string, Entry, std::less<>>;

class Reader {
 public:
  Reader(Table table, int line) : t_(std::move(table)), line_(line) {}

  ~Reader() = default;

  void done() const {
    for (const auto& [k, e] : t_) {
      if (!used_.count(k)) fail(e.line, "unknown key '" + k + "'");
    }
  }

  bool has(std::string_view key) const { return t_.find(key) != t_.end(); }

  template <typename T>
  std::optional<T> get(std::string_view key) {
    auto it = t_.find(key);
    if (it == t_.end()) return std::nullopt;
    used_.insert(std::string(key));
    const Entry& e = it->second;
    if (e.value.is_array) fail(e.line, "'" + std::string(key) + "' must not be an array");
    return convert<T>(e.value.items.front(), e.line, key);
  }

  template <typename T>
  std::optional<std::vector<T>> get_array(std::string_view key) {
    auto it = t_.find(key);
    if (it == t_.end()) return std::nullopt;
    used_.insert(std::string(key));
    const Entry& e = it->second;
    std::vector<T> out;
    for (const auto& s : e.value.items) out.push_back(convert<T>(s, e.line, key));
    return out;
  }

  const Entry* raw(std::string_view key) {
    auto it = t_.find(key);
    if (it == t_.end()) return nullptr;
    used_.insert(std::string(key));
    return &it->second;
  }

  int line() const { return line_; }

  template <typename T>
  static T convert(const Scalar& s, int line, std::string_view key) {
    const std::string k(key);
    if constexpr (std::is_same_v<T, std::string>) {
      if (const auto* v = std::get_if<std::string>(&s)) return *v;
      fail(line, "'" + k + "' must be a string");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (const auto* v = std::get_if<bool>(&s)) return *v;
      fail(line, "'" + k + "' must be a boolean");
    } else if constexpr (std::is_same_v<T, double>) {
      if (const auto* v = std::get_if<double>(&s)) return *v;
      if (const auto* v = std::get_if<std::int64_t>(&s)) return static_cast<double>(*v);
      fail(line, "'" + k + "' must be a number");
    } else {
      if (const auto* v = std::get_if<std::int64_t>(&s)) return *v;
      fail(line, "'" + k + "' must be an integer");
    }
  }

 private:
  Table t_;
  int line_;
  std::set<std::string> used_;
};

std::int64_t in_range(std::int64_t v, std::int64_t lo, std::int64_t hi, int line, const char* key) {
  if (v < lo || v > hi) {
    fail(line, std::string("'") + key + "' out of range [" + std::to_string(lo) + ", " +
                   std::to_string(hi) + "]");
  }
  return v;
}

std::vector<std::uint16_t> ports_of(Reader& r, const char* key) {
  std::vector<std::uint16_t> out;
  if (auto v = r.get_array<std::int64_t>(key)) {
    for (auto p : *v) out.push_back(static_cast<std::uint16_t>(in_range(p, 1, 65535, r.line(), key)));
  }
  return out;
}

std::string need_string(Reader& r, const char* key) {
  auto v = r.get<std::string>(key);
  if (!v) fail(r.line(), std::string("missing '") + key + "'");
  return *v;
}

Behavior behavior_of(Reader& r) {
  const std::string kind = need_string(r, "behavior");
  if (kind == "honest") {
    HonestService h;
    h.protocol = need_string(r, "protocol");
    if (auto b = r.get<std::string>("banner")) h.banner = to_bytes(*b);
    return h;
  }
  if (kind == "zero_window") return ZeroWindowMiddlebox{};
  if (kind == "shunner") {
    Shunner s;
    const std::string trigger = r.get<std::string>("trigger").value_or("synack");
    if (trigger == "synack") {
      s.trigger = ShunTrigger::kOnSynAck;
    } else if (trigger == "data") {
      s.trigger = ShunTrigger::kOnData;
    } else {
      fail(r.line(), "trigger must be \"synack\" or \"data\"");
    }
    const std::string respond = r.get<std::string>("respond").value_or("silence");
    if (respond == "silence") {
      s.response = BlockResponse::kSilence;
    } else if (respond == "rst") {
      s.response = BlockResponse::kRst;
    } else {
      fail(r.line(), "respond must be \"silence\" or \"rst\"");
    }
    return s;
  }
  if (kind == "dynamic_blocker") {
    return DynamicBlocker{r.get<bool>("block_source").value_or(true)};
  }
  if (kind == "mid_handshake_dropper") {
    MidHandshakeDropper d;
    const int line = r.line();
    d.synack_retx = static_cast<int>(in_range(r.get<std::int64_t>("synack_retx").value_or(8), 1, 64, line, "synack_retx"));
    d.ttl_low = static_cast<std::uint8_t>(in_range(r.get<std::int64_t>("ttl_low").value_or(57), 1, 255, line, "ttl_low"));
    d.ttl_high = static_cast<std::uint8_t>(in_range(r.get<std::int64_t>("ttl_high").value_or(118), 1, 255, line, "ttl_high"));
    return d;
  }
  if (kind == "rst_after_handshake") return RstAfterHandshake{};
  if (kind == "wildcard_acker") {
    WildcardAcker w;
    w.silent_after_ack = r.get<bool>("silent_after_ack").value_or(true);
    w.excluded_ports = ports_of(r, "exclude_ports");
    return w;
  }
  if (kind == "option_sensitive") {
    OptionSensitive o;
    o.protocol = need_string(r, "protocol");
    o.accept_variant = need_string(r, "accept_variant");
    return o;
  }
  fail(r.line(), "unknown behavior '" + kind + "'");
}

void apply_globals(Reader& r, ScenarioFile& out) {
  if (auto seed = r.get<std::int64_t>("seed")) out.conditions.seed = static_cast<std::uint64_t>(*seed);
  if (auto loss = r.get<double>("loss")) {
    if (*loss < 0.0 || *loss > 1.0) fail(r.line(), "'loss' must be in [0, 1]");
    out.conditions.loss_probability = *loss;
  }
  if (const Entry* lat = r.raw("latency_ms")) {
    std::vector<double> ms;
    for (const auto& s : lat->value.items) ms.push_back(Reader::convert<double>(s, lat->line, "latency_ms"));
    if (ms.empty() || ms.size() > 2) fail(lat->line, "'latency_ms' takes one value or [lo, hi]");
    const double lo = ms.front(), hi = ms.back();
    if (lo < 0 || hi < lo) fail(lat->line, "'latency_ms' needs 0 <= lo <= hi");
    out.conditions.latency_min = seconds(lo / 1000.0);
    out.conditions.latency_max = seconds(hi / 1000.0);
  }
  if (auto ts = r.get<double>("timescale")) {
    if (!(*ts > 0.0)) fail(r.line(), "'timescale' must be > 0");
    out.options.timescale = *ts;
  }
  if (auto strict = r.get<bool>("strict_checksums")) out.options.strict_checksums = *strict;
  if (auto ms = r.get<double>("synack_retx_interval_ms")) {
    if (!(*ms > 0.0)) fail(r.line(), "'synack_retx_interval_ms' must be > 0");
    out.options.synack_retx_interval = seconds(*ms / 1000.0);
  }
  r.done();
}

void apply_endpoint(Reader& r, ScenarioFile& out) {
  const Ipv4 first = [&] {
    try {
      return Ipv4::parse(need_string(r, "ip"));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kParse) fail(r.line(), e.what());
      throw;
    }
  }();
  const auto count = in_range(r.get<std::int64_t>("count").value_or(1), 1, 1 << 24, r.line(), "count");
  EndpointScript script;
  script.behavior = behavior_of(r);
  script.ports = ports_of(r, "ports");
  script.ttl = static_cast<std::uint8_t>(in_range(r.get<std::int64_t>("ttl").value_or(64), 1, 255, r.line(), "ttl"));
  r.done();
  if (std::uint64_t{first.value()} + static_cast<std::uint64_t>(count) - 1 > 0xffffffffULL) {
    fail(r.line(), "address range overflows");
  }
  for (std::int64_t i = 0; i < count; ++i) {
    out.endpoints.emplace_back(Ipv4(first.value() + static_cast<std::uint32_t>(i)), script);
  }
}

}  // namespace

ScenarioFile parse_scenario(std::string_view text) {
  ScenarioFile out;
  Table current;
  int current_line = 0;
  bool in_endpoint = false;
  auto flush = [&] {
    Reader r(std::move(current), current_line);
    if (in_endpoint) {
      apply_endpoint(r, out);
    } else {
      apply_globals(r, out);
    }
    current = Table{};
  };

  int lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view raw = text.substr(start, end - start);
    start = end + 1;
    ++lineno;
    const std::string_view line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line != "[[endpoint]]") fail(lineno, "only [[endpoint]] tables are supported");
      flush();
      in_endpoint = true;
      current_line = lineno;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(lineno, "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) fail(lineno, "empty key");
    if (current.count(key)) fail(lineno, "duplicate key '" + key + "'");
    ValueParser vp(trim(line.substr(eq + 1)), lineno);
    current.emplace(key, Entry{vp.parse(), lineno});
    if (!in_endpoint && current_line == 0) current_line = lineno;
  }
  flush();
  return out;
}

ScenarioFile load_scenario(std::istream& in) {
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_scenario(text);
}

}  // namespace svcid::sim
