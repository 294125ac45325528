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

#include "svcid/netsim.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

#include "svcid/error.hpp"

namespace svcid::sim {
namespace {

constexpr std::uint16_t kOpenWindow = 65535;

void append(Bytes& out, std::string_view text) { out.insert(out.end(), text.begin(), text.end()); }

bool starts_with(ByteView data, std::string_view prefix) {
  return data.size() >= prefix.size() &&
         std::equal(prefix.begin(), prefix.end(), data.begin(),
                    [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; });
}

void put16(Bytes& b, std::size_t at, std::uint16_t v) {
  b[at] = static_cast<std::uint8_t>(v >> 8);
  b[at + 1] = static_cast<std::uint8_t>(v);
}

Bytes dns_answer(ByteView query) {
  Bytes resp(query.begin(), query.end());
  if (resp.size() < 14) return {};
  resp[4] = 0x81;
  resp[5] = 0x80;
  put16(resp, 8, 1);
  const Bytes answer = from_hex("c00c0001000100000e1000045db8d822");
  resp.insert(resp.end(), answer.begin(), answer.end());
  put16(resp, 0, static_cast<std::uint16_t>(resp.size() - 2));
  return resp;
}

Bytes pptp_reply() {
  Bytes out = from_hex("009c00011a2b3c4d00020000010001000000000300000003000000010000");
  Bytes host(64, 0), vendor(64, 0);
  const std::string_view h = "gateway", v = "linux";
  std::copy(h.begin(), h.end(), host.begin());
  std::copy(v.begin(), v.end(), vendor.begin());
  out.insert(out.end(), host.begin(), host.end());
  out.insert(out.end(), vendor.begin(), vendor.end());
  return out;
}

Bytes postgres_error() {
  Bytes body;
  static constexpr char kFields[] = "SFATAL\0VFATAL\0C28000\0Mno pg_hba.conf entry\0\0";
  append(body, std::string_view(kFields, sizeof kFields - 1));
  Bytes out{'E'};
  const std::uint32_t len = static_cast<std::uint32_t>(body.size() + 4);
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(len >> shift));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

Bytes amqp_start() {
  Bytes payload = from_hex("000a000a0009" "00000000");
  const std::string_view mech = "AMQPLAIN PLAIN", loc = "en_US";
  for (auto s : {mech, loc}) {
    const auto n = static_cast<std::uint32_t>(s.size());
    for (int shift = 24; shift >= 0; shift -= 8) payload.push_back(static_cast<std::uint8_t>(n >> shift));
    append(payload, s);
  }
  Bytes out = from_hex("010000");
  const auto n = static_cast<std::uint32_t>(payload.size());
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(n >> shift));
  out.insert(out.end(), payload.begin(), payload.end());
  out.push_back(0xce);
  return out;
}

Bytes mongodb_reply() {
  // OP_REPLY carrying {ismaster: true, ok: 1.0}.
  Bytes doc = from_hex("1c000000" "0869736d617374657200" "01" "016f6b00000000000000f03f" "00");
  Bytes out = from_hex("40000000" "07000000" "01000000" "01000000" "08000000"
                       "0000000000000000" "00000000" "01000000");
  out.insert(out.end(), doc.begin(), doc.end());
  return out;
}

Bytes smb_reply() {
  Bytes out = from_hex("00000044fe534d42400000000000000000000100");
  out.resize(0x48, 0);
  return out;
}

Bytes oracle_refuse() {
  const std::string_view text = "(DESCRIPTION=(TMP=)(VSNNUM=0)(ERR=12514)(ERROR_STACK=(ERROR=(CODE=12514))))";
  Bytes out = from_hex("00000000040000000101");
  out.push_back(static_cast<std::uint8_t>(text.size() >> 8));
  out.push_back(static_cast<std::uint8_t>(text.size()));
  append(out, text);
  put16(out, 0, static_cast<std::uint16_t>(out.size()));
  return out;
}

Bytes mysql_greeting() {
  Bytes body{0x0a};
  append(body, std::string_view("5.7.30-log\0", 11));
  const Bytes rest = from_hex("2a000000" "3a23552f3d6d2b41" "00" "fff7" "08" "0200" "ff81" "15"
                              "00000000000000000000" "6a425b6b2b7b4e2131355e3800");
  body.insert(body.end(), rest.begin(), rest.end());
  append(body, std::string_view("mysql_native_password\0", 22));
  Bytes out{static_cast<std::uint8_t>(body.size()), 0, 0, 0};
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

}  // namespace

const char* behavior_name(const Behavior& b) {
  static constexpr const char* kNames[] = {"honest",  "zero_window", "shunner",
                                           "dynamic_blocker", "mid_handshake_dropper",
                                           "rst_after_handshake", "wildcard_acker",
                                           "option_sensitive"};
  return kNames[b.index()];
}

bool EndpointScript::active_on(std::uint16_t port) const {
  if (const auto* w = std::get_if<WildcardAcker>(&behavior)) {
    return std::find(w->excluded_ports.begin(), w->excluded_ports.end(), port) ==
           w->excluded_ports.end();
  }
  return ports.empty() || std::find(ports.begin(), ports.end(), port) != ports.end();
}

Bytes canonical_banner(std::string_view protocol) {
  if (protocol == "ssh") return to_bytes("SSH-2.0-OpenSSH_7.4\r\n");
  if (protocol == "smtp") return to_bytes("220 mail.example.net ESMTP Postfix\r\n");
  if (protocol == "ftp") return to_bytes("220 (vsFTPd 3.0.3)\r\n");
  if (protocol == "pop3") return to_bytes("+OK Dovecot ready.\r\n");
  if (protocol == "imap") return to_bytes("* OK [CAPABILITY IMAP4rev1] Dovecot ready.\r\n");
  if (protocol == "mysql") return mysql_greeting();
  if (protocol == "vnc") return to_bytes("RFB 003.008\n");
  if (protocol == "telnet") return from_hex("fffd18fffd20fffd23fffd27");
  return {};
}

std::optional<Bytes> canonical_response(std::string_view protocol, ByteView probe,
                                        const Registry& registry) {
  if (probe.empty()) return std::nullopt;
  const auto id = registry.identify_probe(probe);
  const bool own = id && id->protocol == protocol;
  if (protocol == "http") {
    if (starts_with(probe, "GET ")) {
      return to_bytes("HTTP/1.1 200 OK\r\nServer: nginx\r\nContent-Type: text/html\r\n"
                      "Content-Length: 13\r\n\r\n<html></html>");
    }
    if (starts_with(probe, "OPTIONS ")) return to_bytes("HTTP/1.1 501 Not Implemented\r\n\r\n");
    return to_bytes("HTTP/1.1 400 Bad Request\r\nConnection: close\r\n\r\n");
  }
  if (protocol == "ipp") {
    if (own || starts_with(probe, "POST ") || starts_with(probe, "GET ")) {
      return to_bytes("HTTP/1.1 200 OK\r\nContent-Type: application/ipp\r\n"
                      "Content-Length: 8\r\n\r\n\x01\x01\x00\x00\x00\x00\x00\x01");
    }
    return std::nullopt;
  }
  if (protocol == "tls") {
    if (own) {
      Bytes hello = from_hex("160303002a0200002603036a");
      hello.resize(hello.size() + 31, 0x5a);
      const Bytes tail = from_hex("00c02f00");
      hello.insert(hello.end(), tail.begin(), tail.end());
      return hello;
    }
    return from_hex("15030100020232");
  }
  if (protocol == "redis") {
    if (own) return to_bytes("+PONG\r\n");
    if (id && id->protocol == "tls") return std::nullopt;
    return to_bytes("-ERR unknown command\r\n");
  }
  if (!own) return std::nullopt;
  if (protocol == "dns") return dns_answer(probe);
  if (protocol == "pptp") return pptp_reply();
  if (protocol == "rdp") return from_hex("030000130ed000001234000200080001000000");
  if (protocol == "s7") return from_hex("0300001611d00001000c00c0010ac1020100c2020102");
  if (protocol == "postgres") return postgres_error();
  if (protocol == "mqtt") return from_hex("20020000");
  if (protocol == "amqp") return amqp_start();
  if (protocol == "memcached") return to_bytes("STAT pid 4242\r\nSTAT uptime 60\r\nEND\r\n");
  if (protocol == "mongodb") return mongodb_reply();
  if (protocol == "mssql") return from_hex("0401002500000100000010000601001600010fff0007d0000002");
  if (protocol == "smb") return smb_reply();
  if (protocol == "oracle") return oracle_refuse();
  if (protocol == "dnp3") return from_hex("0564050b01000004e921");
  if (protocol == "modbus") return from_hex("12340000000e002b0e010100000100047376636400");
  return std::nullopt;
}

// ---------------------------------------------------------------------------

Endpoint::Endpoint(Ipv4 ip, EndpointScript script, const Registry* registry, std::uint64_t seed,
                   double timescale, Nanos synack_retx_interval)
    : ip_(ip),
      script_(std::move(script)),
      registry_(registry),
      rng_(seed),
      timescale_(timescale),
      synack_retx_interval_(synack_retx_interval) {}

std::uint16_t Endpoint::window() const {
  return std::holds_alternative<ZeroWindowMiddlebox>(script_.behavior) ? 0 : kOpenWindow;
}

TcpSegment Endpoint::reply_to(const TcpSegment& in, TcpFlags flags) const {
  TcpSegment s;
  s.src_ip = ip_;
  s.dst_ip = in.src_ip;
  s.src_port = in.dst_port;
  s.dst_port = in.src_port;
  s.seq = in.flags.ack() ? in.ack : 0;
  s.ack = in.seq + in.seq_length();
  s.flags = flags;
  s.window = 0;
  s.ttl = script_.ttl;
  return s;
}

TcpSegment Endpoint::from_conn(const FlowKey& key, const Conn& c, TcpFlags flags, Bytes payload,
                               std::uint8_t ttl) const {
  TcpSegment s;
  s.src_ip = ip_;
  s.src_port = key.src_port;
  s.dst_ip = key.dst_ip;
  s.dst_port = key.dst_port;
  s.seq = c.snd_nxt;
  s.ack = c.rcv_nxt;
  s.flags = flags;
  s.window = window();
  s.ttl = ttl != 0 ? ttl : script_.ttl;
  s.payload = std::move(payload);
  return s;
}

void Endpoint::handle_syn(const TcpSegment& in, StepOutput& out) {
  const FlowKey key{ip_, in.dst_port, in.src_ip, in.src_port};
  const auto* dropper = std::get_if<MidHandshakeDropper>(&script_.behavior);
  auto it = conns_.find(key);
  if (it != conns_.end() && it->second.phase == ConnPhase::kSynRcvd &&
      it->second.rcv_nxt == in.seq + 1) {
    // Retransmitted SYN: repeat the SYN-ACK.
    Conn tmp = it->second;
    tmp.snd_nxt = tmp.iss;
    TcpSegment sa = from_conn(key, tmp, TcpFlags{TcpFlags::kSyn | TcpFlags::kAck}, {},
                              dropper ? dropper->ttl_low : 0);
    sa.mss = 1460;
    out.segments.push_back(std::move(sa));
    return;
  }
  Conn c;
  c.iss = static_cast<std::uint32_t>(rng_());
  c.snd_nxt = c.iss;
  c.rcv_nxt = in.seq + 1;
  TcpSegment sa = from_conn(key, c, TcpFlags{TcpFlags::kSyn | TcpFlags::kAck}, {},
                            dropper ? dropper->ttl_high : 0);
  sa.mss = 1460;
  out.segments.push_back(std::move(sa));
  c.snd_nxt = c.iss + 1;
  conns_.insert_or_assign(key, c);
  if (dropper) {
    for (int k = 1; k <= dropper->synack_retx; ++k) {
      out.timers.push_back({scaled(synack_retx_interval_ * k, timescale_), key, k});
    }
  }
  if (const auto* s = std::get_if<Shunner>(&script_.behavior);
      s && s->trigger == ShunTrigger::kOnSynAck) {
    blocked_.insert(in.src_ip);
  }
}

void Endpoint::on_established(const FlowKey& key, Conn& c, StepOutput& out) {
  c.phase = ConnPhase::kEstablished;
  if (std::holds_alternative<RstAfterHandshake>(script_.behavior)) {
    TcpSegment rst = from_conn(key, c, TcpFlags{TcpFlags::kRst});
    rst.ack = 0;
    rst.window = 0;
    out.segments.push_back(std::move(rst));
    conns_.erase(key);
    return;
  }
  if (const auto* h = std::get_if<HonestService>(&script_.behavior)) {
    Bytes banner;
    if (h->banner) {
      banner = *h->banner;
    } else if (const auto* spec = registry_->find(h->protocol); spec && spec->server_first) {
      banner = canonical_banner(h->protocol);
    }
    if (!banner.empty()) {
      c.last_response = banner;
      const auto len = static_cast<std::uint32_t>(banner.size());
      out.segments.push_back(from_conn(key, c, TcpFlags{TcpFlags::kPsh | TcpFlags::kAck},
                                       std::move(banner)));
      c.snd_nxt += len;
    }
  }
}

bool Endpoint::on_data(const FlowKey& key, Conn& c, const TcpSegment& in, StepOutput& out) {
  const TcpFlags ack{TcpFlags::kAck};
  const TcpFlags push_ack{TcpFlags::kPsh | TcpFlags::kAck};
  const auto len = static_cast<std::uint32_t>(in.payload.size());
  if (std::holds_alternative<DynamicBlocker>(script_.behavior)) {
    if (std::get<DynamicBlocker>(script_.behavior).block_source) blocked_.insert(in.src_ip);
    return true;
  }
  if (seq_lt(in.seq, c.rcv_nxt)) {
    // Duplicate: acknowledge again and repeat whatever we last said.
    out.segments.push_back(from_conn(key, c, ack));
    if (!c.last_response.empty()) {
      Conn prev = c;
      prev.snd_nxt = c.snd_nxt - static_cast<std::uint32_t>(c.last_response.size());
      out.segments.push_back(from_conn(key, prev, push_ack, c.last_response));
    }
    return true;
  }
  if (in.seq != c.rcv_nxt) {
    out.segments.push_back(from_conn(key, c, ack));
    return true;
  }
  c.rcv_nxt += len;

  std::optional<Bytes> response;
  bool reset_after = false;
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, HonestService>) {
          const auto* spec = registry_->find(b.protocol);
          if (spec && !spec->server_first) response = canonical_response(b.protocol, in.payload, *registry_);
        } else if constexpr (std::is_same_v<T, OptionSensitive>) {
          if (registry_->contains(b.protocol)) {
            const Bytes& accepted = registry_->payload(b.protocol, b.accept_variant);
            if (std::equal(accepted.begin(), accepted.end(), in.payload.begin(), in.payload.end())) {
              response = canonical_response(b.protocol, in.payload, *registry_);
            }
          }
        } else if constexpr (std::is_same_v<T, Shunner>) {
          if (b.trigger == ShunTrigger::kOnData) blocked_.insert(in.src_ip);
        } else if constexpr (std::is_same_v<T, WildcardAcker>) {
          reset_after = !b.silent_after_ack;
        }
      },
      script_.behavior);

  if (response && !response->empty()) {
    c.last_response = *response;
    const auto rlen = static_cast<std::uint32_t>(response->size());
    out.segments.push_back(from_conn(key, c, push_ack, std::move(*response)));
    c.snd_nxt += rlen;
  } else {
    out.segments.push_back(from_conn(key, c, ack));
  }
  if (reset_after) {
    out.segments.push_back(from_conn(key, c, TcpFlags{TcpFlags::kRst | TcpFlags::kAck}));
    conns_.erase(key);
    return false;
  }
  return true;
}

StepOutput Endpoint::step(const TcpSegment& in) {
  StepOutput out;
  if (in.dst_ip != ip_) return out;
  if (blocked_.contains(in.src_ip)) {
    const auto* s = std::get_if<Shunner>(&script_.behavior);
    if (s && s->response == BlockResponse::kRst && !in.flags.rst()) {
      out.segments.push_back(reply_to(in, TcpFlags{TcpFlags::kRst | TcpFlags::kAck}));
    }
    return out;
  }
  const bool honest_like = std::holds_alternative<HonestService>(script_.behavior) ||
                           std::holds_alternative<OptionSensitive>(script_.behavior);
  if (!script_.active_on(in.dst_port)) {
    if (!in.flags.rst()) {
      out.segments.push_back(reply_to(in, TcpFlags{TcpFlags::kRst | TcpFlags::kAck}));
    }
    return out;
  }
  if (in.flags.syn() && !in.flags.ack()) {
    handle_syn(in, out);
    return out;
  }
  const FlowKey key{ip_, in.dst_port, in.src_ip, in.src_port};
  auto it = conns_.find(key);
  if (it == conns_.end()) {
    if (!in.flags.rst() && honest_like) {
      TcpSegment rst = reply_to(in, TcpFlags{TcpFlags::kRst});
      out.segments.push_back(std::move(rst));
    }
    return out;
  }
  Conn& c = it->second;
  if (in.flags.rst() || in.flags.fin()) {
    conns_.erase(it);
    return out;
  }
  if (std::holds_alternative<MidHandshakeDropper>(script_.behavior) ||
      std::holds_alternative<ZeroWindowMiddlebox>(script_.behavior)) {
    return out;
  }
  if (c.phase == ConnPhase::kSynRcvd) {
    if (!in.flags.ack() || in.ack != c.iss + 1) return out;
    on_established(key, c, out);
    if (!conns_.contains(key)) return out;
  }
  if (!in.payload.empty()) on_data(key, c, in, out);
  return out;
}

StepOutput Endpoint::on_timer(const FlowKey& conn, int /*tag*/) {
  StepOutput out;
  const auto* dropper = std::get_if<MidHandshakeDropper>(&script_.behavior);
  auto it = conns_.find(conn);
  if (!dropper || it == conns_.end() || it->second.phase != ConnPhase::kSynRcvd) return out;
  Conn tmp = it->second;
  tmp.snd_nxt = tmp.iss;
  TcpSegment sa = from_conn(conn, tmp, TcpFlags{TcpFlags::kSyn | TcpFlags::kAck}, {},
                            dropper->ttl_low);
  sa.mss = 1460;
  out.segments.push_back(std::move(sa));
  return out;
}

// ---------------------------------------------------------------------------

void FrameChannel::push(ByteView frame) {
  const auto n = static_cast<std::uint32_t>(frame.size());
  for (int shift = 24; shift >= 0; shift -= 8) buffer_.push_back(static_cast<std::uint8_t>(n >> shift));
  buffer_.insert(buffer_.end(), frame.begin(), frame.end());
}

std::optional<Bytes> FrameChannel::pop() {
  if (buffer_.size() < 4) return std::nullopt;
  std::uint32_t n = 0;
  for (int i = 0; i < 4; ++i) n = (n << 8) | buffer_[static_cast<std::size_t>(i)];
  if (buffer_.size() < 4 + std::size_t{n}) {
    throw Error(ErrorCode::kTransport, "truncated frame in channel");
  }
  Bytes frame(buffer_.begin() + 4, buffer_.begin() + 4 + n);
  buffer_.erase(buffer_.begin(), buffer_.begin() + 4 + n);
  return frame;
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void validate(const Ipv4& ip, const EndpointScript& script) {
  const auto where = "endpoint " + ip.to_string() + ": ";
  if (const auto* d = std::get_if<MidHandshakeDropper>(&script.behavior)) {
    if (d->synack_retx < 1) throw Error(ErrorCode::kInvalidArgument, where + "synack_retx must be >= 1");
    if (d->ttl_low == 0 || int{d->ttl_high} < 2 * int{d->ttl_low}) {
      throw Error(ErrorCode::kInvalidArgument, where + "ttl_high must be at least twice ttl_low");
    }
  }
}

}  // namespace

Simulator::Simulator(const Scenario& scenario, NetConditions conditions, SimOptions options,
                     std::shared_ptr<const Registry> registry)
    : conditions_(conditions),
      options_(options),
      registry_(std::move(registry)),
      rng_(splitmix(conditions.seed)) {
  if (!registry_) throw Error(ErrorCode::kInvalidArgument, "simulator needs a registry");
  if (!(conditions_.loss_probability >= 0.0 && conditions_.loss_probability <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "loss probability must be in [0, 1]");
  }
  if (conditions_.latency_min < Nanos{0} || conditions_.latency_max < conditions_.latency_min) {
    throw Error(ErrorCode::kInvalidArgument, "latency range must satisfy 0 <= min <= max");
  }
  if (!(options_.timescale > 0.0)) throw Error(ErrorCode::kInvalidArgument, "timescale must be > 0");
  endpoints_.reserve(scenario.size());
  for (const auto& [ip, script] : scenario) {
    if (by_ip_.contains(ip)) throw Error(ErrorCode::kDuplicate, "endpoint " + ip.to_string());
    validate(ip, script);
    by_ip_.emplace(ip, endpoints_.size());
    endpoints_.emplace_back(ip, script, registry_.get(),
                            splitmix(conditions_.seed ^ (std::uint64_t{ip.value()} << 16)),
                            options_.timescale, options_.synack_retx_interval);
  }
}

CraftOptions Simulator::craft_options() const {
  CraftOptions o;
  o.skip_checksums = !options_.strict_checksums;
  return o;
}

ParseOptions Simulator::parse_options() const {
  return ParseOptions{options_.strict_checksums};
}

Nanos Simulator::draw_latency() {
  const Nanos lo = scaled(conditions_.latency_min, options_.timescale);
  const Nanos hi = scaled(conditions_.latency_max, options_.timescale);
  if (lo == hi) return lo;
  std::uniform_int_distribution<Nanos::rep> dist(lo.count(), hi.count());
  return Nanos(dist(rng_));
}

bool Simulator::draw_loss() {
  if (conditions_.loss_probability <= 0.0) return false;
  std::bernoulli_distribution lost(conditions_.loss_probability);
  const bool drop = lost(rng_);
  if (drop) ++loss_draws_;
  return drop;
}

void Simulator::push(Event ev) {
  ev.order = next_order_++;
  events_.push(std::move(ev));
}

void Simulator::send(ByteView frame) {
  LogEntry entry;
  entry.emitted_at = now_;
  entry.arrives_at = now_;
  entry.direction = Direction::kToEndpoint;
  entry.frame.assign(frame.begin(), frame.end());
  std::optional<TcpSegment> seg;
  try {
    seg = parse(frame, ParseOptions{options_.strict_checksums});
  } catch (const Error&) {
    entry.fate = Fate::kNoRoute;
    log_.push_back(std::move(entry));
    return;
  }
  ++counters_[outbound_key(*seg)].to_endpoint;
  ++per_ip_[seg->dst_ip].to_endpoint;
  auto it = by_ip_.find(seg->dst_ip);
  if (draw_loss()) {
    entry.fate = Fate::kLost;
  } else if (it == by_ip_.end()) {
    entry.fate = Fate::kNoRoute;
  } else {
    entry.arrives_at = now_ + draw_latency();
    Event ev;
    ev.at = entry.arrives_at;
    ev.kind = EventKind::kToEndpoint;
    ev.frame = entry.frame;
    ev.endpoint = it->second;
    push(std::move(ev));
  }
  log_.push_back(std::move(entry));
}

void Simulator::emit_from_endpoint(std::size_t index, const StepOutput& out) {
  const CraftOptions copts = craft_options();
  for (const auto& seg : out.segments) {
    LogEntry entry;
    entry.emitted_at = now_;
    entry.arrives_at = now_;
    entry.direction = Direction::kToScanner;
    entry.frame = craft(seg, copts);
    if (draw_loss()) {
      entry.fate = Fate::kLost;
    } else {
      entry.arrives_at = now_ + draw_latency();
      Event ev;
      ev.at = entry.arrives_at;
      ev.kind = EventKind::kToScanner;
      ev.frame = entry.frame;
      ev.endpoint = index;
      push(std::move(ev));
    }
    log_.push_back(std::move(entry));
  }
  for (const auto& t : out.timers) {
    Event ev;
    ev.at = now_ + t.delay;
    ev.kind = EventKind::kTimer;
    ev.endpoint = index;
    ev.conn = t.conn;
    ev.tag = t.tag;
    push(std::move(ev));
  }
}

std::optional<Bytes> Simulator::receive(Nanos deadline) {
  for (;;) {
    if (auto frame = inbox_.pop()) return frame;
    if (events_.empty() || events_.top().at > deadline) {
      if (deadline != Nanos::max() && deadline > now_) now_ = deadline;
      return std::nullopt;
    }
    Event ev = events_.top();
    events_.pop();
    now_ = std::max(now_, ev.at);
    switch (ev.kind) {
      case EventKind::kToEndpoint: {
        TcpSegment seg;
        try {
          seg = parse(ev.frame, ParseOptions{options_.strict_checksums});
        } catch (const Error&) {
          break;
        }
        emit_from_endpoint(ev.endpoint, endpoints_[ev.endpoint].step(seg));
        break;
      }
      case EventKind::kTimer:
        emit_from_endpoint(ev.endpoint, endpoints_[ev.endpoint].on_timer(ev.conn, ev.tag));
        break;
      case EventKind::kToScanner: {
        const TcpSegment seg = parse(ev.frame, ParseOptions{});
        ++counters_[inbound_key(seg)].to_scanner;
        ++per_ip_[seg.src_ip].to_scanner;
        inbox_.push(ev.frame);
        break;
      }
    }
  }
}

FlowCounters Simulator::counters(const FlowKey& scanner_side) const {
  auto it = counters_.find(scanner_side);
  return it == counters_.end() ? FlowCounters{} : it->second;
}

std::uint64_t Simulator::sent_to(Ipv4 ip) const {
  auto it = per_ip_.find(ip);
  return it == per_ip_.end() ? 0 : it->second.to_endpoint;
}

std::uint64_t Simulator::received_from(Ipv4 ip) const {
  auto it = per_ip_.find(ip);
  return it == per_ip_.end() ? 0 : it->second.to_scanner;
}

const Endpoint* Simulator::endpoint(Ipv4 ip) const {
  auto it = by_ip_.find(ip);
  return it == by_ip_.end() ? nullptr : &endpoints_[it->second];
}

void Simulator::write_log(std::ostream& out) const {
  static constexpr const char* kFate[] = {"delivered", "lost", "no-route"};
  char stamp[64];
  for (const auto& e : log_) {
    std::snprintf(stamp, sizeof stamp, "%.9f %.9f", std::chrono::duration<double>(e.emitted_at).count(),
                  std::chrono::duration<double>(e.arrives_at).count());
    out << stamp << (e.direction == Direction::kToEndpoint ? " out " : " in  ");
    try {
      out << summarize(parse(e.frame, ParseOptions{}));
    } catch (const Error&) {
      out << "<malformed " << e.frame.size() << " bytes>";
    }
    out << ' ' << kFate[static_cast<int>(e.fate)] << '\n';
  }
}

}  // namespace svcid::sim
