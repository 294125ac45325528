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

// Built-in handshakes. Matchers are deliberately conservative first-response
// signatures; anything sharper belongs in a signature file loaded over them.

#include <array>
#include <initializer_list>

#include "svcid/registry.hpp"

namespace svcid {
namespace {

void append(Bytes& out, std::initializer_list<std::uint8_t> bytes) {
  out.insert(out.end(), bytes.begin(), bytes.end());
}

void append(Bytes& out, std::string_view text) { out.insert(out.end(), text.begin(), text.end()); }

void append_be16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void append_be32(Bytes& out, std::uint32_t v) {
  append_be16(out, static_cast<std::uint16_t>(v >> 16));
  append_be16(out, static_cast<std::uint16_t>(v));
}

void append_le32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void patch_be16(Bytes& out, std::size_t at, std::uint16_t v) {
  out[at] = static_cast<std::uint8_t>(v >> 8);
  out[at + 1] = static_cast<std::uint8_t>(v);
}

Matcher patterns(std::initializer_list<std::string_view> texts) {
  std::vector<Pattern> out;
  for (auto t : texts) out.push_back(parse_pattern(t));
  return Matcher(std::move(out));
}

Bytes http_request(std::string_view method) {
  Bytes out;
  append(out, method);
  append(out, " / HTTP/1.1\r\nHost: localhost\r\nUser-Agent: Mozilla/5.0 svcid\r\n"
              "Accept: */*\r\n\r\n");
  return out;
}

Bytes tls_client_hello(std::initializer_list<std::uint16_t> suites) {
  Bytes body;
  append(body, {0x03, 0x03});
  for (int i = 0; i < 32; ++i) body.push_back(static_cast<std::uint8_t>(i * 7 + 3));
  body.push_back(0x00);  // session id
  append_be16(body, static_cast<std::uint16_t>(suites.size() * 2));
  for (auto s : suites) append_be16(body, s);
  append(body, {0x01, 0x00});  // null compression
  Bytes ext;
  append(ext, {0x00, 0x0a, 0x00, 0x08, 0x00, 0x06, 0x00, 0x1d, 0x00, 0x17, 0x00, 0x18});
  append(ext, {0x00, 0x0b, 0x00, 0x02, 0x01, 0x00});
  append(ext, {0x00, 0x0d, 0x00, 0x08, 0x00, 0x06, 0x04, 0x03, 0x08, 0x04, 0x04, 0x01});
  append_be16(body, static_cast<std::uint16_t>(ext.size()));
  body.insert(body.end(), ext.begin(), ext.end());

  Bytes out;
  append(out, {0x16, 0x03, 0x01});
  append_be16(out, static_cast<std::uint16_t>(body.size() + 4));
  out.push_back(0x01);  // ClientHello
  out.push_back(0x00);
  append_be16(out, static_cast<std::uint16_t>(body.size()));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

Bytes dns_query() {
  Bytes msg;
  append(msg, {0x5a, 0x5a, 0x01, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00});
  append(msg, {0x07});
  append(msg, "example");
  append(msg, {0x03});
  append(msg, "com");
  append(msg, {0x00, 0x00, 0x01, 0x00, 0x01});
  Bytes out;
  append_be16(out, static_cast<std::uint16_t>(msg.size()));
  out.insert(out.end(), msg.begin(), msg.end());
  return out;
}

// Start-Control-Connection-Request, RFC 2637 section 2.1.
Bytes pptp_sccrq(std::uint32_t cookie) {
  Bytes out;
  append_be16(out, 156);
  append_be16(out, 1);       // control message
  append_be32(out, cookie);
  append_be16(out, 1);       // SCCRQ
  append_be16(out, 0);
  append_be16(out, 0x0100);  // protocol version 1.0
  append_be16(out, 0);
  append_be32(out, 1);       // framing: async
  append_be32(out, 1);       // bearer: analog
  append_be16(out, 0);       // max channels
  append_be16(out, 0);       // firmware
  Bytes host(64, 0);
  Bytes vendor(64, 0);
  const std::string_view v = "svcid";
  std::copy(v.begin(), v.end(), vendor.begin());
  out.insert(out.end(), host.begin(), host.end());
  out.insert(out.end(), vendor.begin(), vendor.end());
  return out;
}

Bytes postgres_startup() {
  Bytes out;
  append_be32(out, 0);
  append_be32(out, 196608);  // protocol 3.0
  append(out, std::string_view("user\0postgres\0database\0postgres\0\0", 33));
  patch_be16(out, 2, static_cast<std::uint16_t>(out.size()));
  return out;
}

Bytes mongodb_ismaster() {
  Bytes doc;
  append_le32(doc, 19);
  doc.push_back(0x10);
  append(doc, std::string_view("isMaster\0", 9));
  append_le32(doc, 1);
  doc.push_back(0x00);

  Bytes out;
  append_le32(out, 0);     // length, patched below
  append_le32(out, 1);     // request id
  append_le32(out, 0);     // response to
  append_le32(out, 2004);  // OP_QUERY
  append_le32(out, 0);     // flags
  append(out, std::string_view("admin.$cmd\0", 11));
  append_le32(out, 0);
  append_le32(out, 0xffffffffu);
  out.insert(out.end(), doc.begin(), doc.end());
  const auto n = static_cast<std::uint32_t>(out.size());
  for (int i = 0; i < 4; ++i) out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(n >> (8 * i));
  return out;
}

Bytes mssql_prelogin() {
  Bytes out;
  append(out, {0x12, 0x01, 0x00, 0x1a, 0x00, 0x00, 0x01, 0x00});
  append(out, {0x00, 0x00, 0x0b, 0x00, 0x06});  // VERSION
  append(out, {0x01, 0x00, 0x11, 0x00, 0x01});  // ENCRYPTION
  append(out, {0xff});
  append(out, {0x00, 0x00, 0x00, 0x00, 0x00, 0x00});
  append(out, {0x00});
  return out;
}

Bytes smb_negotiate() {
  Bytes smb;
  append(smb, {0xff, 'S', 'M', 'B', 0x72, 0x00, 0x00, 0x00, 0x00, 0x18, 0x53, 0xc8});
  smb.resize(smb.size() + 20, 0);  // pid high, signature, reserved, tid, pid, uid, mid
  smb.push_back(0x00);             // word count
  Bytes dialects;
  for (std::string_view d : {"NT LM 0.12", "SMB 2.002", "SMB 2.???"}) {
    dialects.push_back(0x02);
    append(dialects, d);
    dialects.push_back(0x00);
  }
  smb.push_back(static_cast<std::uint8_t>(dialects.size()));
  smb.push_back(static_cast<std::uint8_t>(dialects.size() >> 8));
  smb.insert(smb.end(), dialects.begin(), dialects.end());

  Bytes out;
  out.push_back(0x00);
  out.push_back(0x00);
  append_be16(out, static_cast<std::uint16_t>(smb.size()));
  out.insert(out.end(), smb.begin(), smb.end());
  return out;
}

Bytes oracle_connect() {
  const std::string_view data =
      "(DESCRIPTION=(CONNECT_DATA=(SERVICE_NAME=ORCL)(CID=(PROGRAM=svcid)))"
      "(ADDRESS=(PROTOCOL=TCP)(HOST=127.0.0.1)(PORT=1521)))";
  constexpr std::uint16_t kDataOffset = 58;
  Bytes out;
  append_be16(out, 0);  // length, patched below
  append(out, {0x00, 0x00, 0x01, 0x00, 0x00, 0x00});
  append_be16(out, 0x013a);  // version
  append_be16(out, 0x012c);  // compatible version
  append_be16(out, 0x0000);  // service options
  append_be16(out, 0x0800);  // SDU
  append_be16(out, 0x7fff);  // TDU
  append_be16(out, 0x7f08);  // NT protocol characteristics
  append_be16(out, 0x0000);  // line turnaround
  append_be16(out, 0x0001);  // value of one
  append_be16(out, static_cast<std::uint16_t>(data.size()));
  append_be16(out, kDataOffset);
  out.resize(kDataOffset, 0);
  append(out, data);
  patch_be16(out, 0, static_cast<std::uint16_t>(out.size()));
  return out;
}

std::uint16_t dnp3_crc(ByteView data) {
  std::uint16_t crc = 0;
  for (std::uint8_t b : data) {
    crc ^= b;
    for (int i = 0; i < 8; ++i) crc = (crc & 1) ? static_cast<std::uint16_t>((crc >> 1) ^ 0xa6bc) : crc >> 1;
  }
  return static_cast<std::uint16_t>(~crc);
}

Bytes dnp3_link_status() {
  Bytes out = {0x05, 0x64, 0x05, 0xc9, 0x01, 0x00, 0x00, 0x00};
  const std::uint16_t crc = dnp3_crc(out);
  out.push_back(static_cast<std::uint8_t>(crc));
  out.push_back(static_cast<std::uint8_t>(crc >> 8));
  return out;
}

Bytes ipp_request() {
  const Bytes ipp = {0x01, 0x01, 0x00, 0x0b, 0x00, 0x00, 0x00, 0x01, 0x03};
  Bytes out;
  append(out, "POST /ipp HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/ipp\r\n"
              "Content-Length: 9\r\n\r\n");
  out.insert(out.end(), ipp.begin(), ipp.end());
  return out;
}

HandshakeSpec spec(std::string name, Bytes probe, Matcher m, bool server_first = false,
                   std::vector<PayloadVariant> variants = {}) {
  HandshakeSpec s;
  s.protocol_name = std::move(name);
  s.probe_payload = std::move(probe);
  s.matcher = std::move(m);
  s.server_first = server_first;
  s.payload_variants = std::move(variants);
  return s;
}

}  // namespace

Registry seed_registry() {
  Registry r;
  // Pseudo-handshakes: connect and listen, or send two newlines.
  r.register_handshake(spec("wait", {}, Matcher{}));
  r.register_handshake(spec("agnostic", to_bytes("\n\n"), Matcher{}));

  // Most prevalent unexpected services first: sweep order is this order.
  r.register_handshake(spec("http", http_request("GET"), patterns({"start:HTTP/", "kw:<html"}),
                            false,
                            {{"get", http_request("GET")}, {"options", http_request("OPTIONS")}}));
  const Bytes secure = tls_client_hello({0xc02b, 0xc02f, 0xc02c, 0xc030, 0xcca9, 0xcca8, 0x1301,
                                         0x1302, 0x1303});
  r.register_handshake(spec("tls", secure, patterns({"prefix:1603", "prefix:1503"}), false,
                            {{"secure", secure}, {"insecure", tls_client_hello({0x0003})}}));

  // Server-first: empty probe, identified from the banner.
  r.register_handshake(spec("ssh", {}, patterns({"kw:ssh"}), true));
  r.register_handshake(spec("smtp", {}, patterns({"kw:smtp"}), true));
  r.register_handshake(spec("ftp", {}, patterns({"kw:ftp"}), true));
  r.register_handshake(spec("pop3", {}, patterns({"start:+OK", "kw:pop3"}), true));
  r.register_handshake(spec("imap", {}, patterns({"start:*%20OK", "kw:imap"}), true));
  r.register_handshake(spec("mysql", {}, patterns({"kw:mysql", "kw:mariadb"}), true));
  r.register_handshake(spec("vnc", {}, patterns({"start:RFB"}), true));

  // Client-first, mostly binary.
  r.register_handshake(spec("dns", dns_query(), patterns({"at2:5a5a&mask4:80/80"})));
  r.register_handshake(spec("pptp", pptp_sccrq(0x1a2b3c4d), patterns({"at4:1a2b3c4d&at8:0002"}),
                            false,
                            {{"good_cookie", pptp_sccrq(0x1a2b3c4d)},
                             {"bad_cookie", pptp_sccrq(0x11111111)}}));
  r.register_handshake(spec("rdp",
                            from_hex("030000130ee000000000000100080003000000"),
                            patterns({"prefix:03000013&at5:d0"})));
  r.register_handshake(spec("s7",
                            from_hex("0300001611e00000000100c1020100c2020102c0010a"),
                            patterns({"prefix:0300&at5:d0"})));
  r.register_handshake(spec("postgres", postgres_startup(),
                            patterns({"kw:SFATAL", "prefix:52000000"})));
  r.register_handshake(spec("mqtt", from_hex("101200044d5154540402003c0006737663696431"),
                            patterns({"prefix:2002"})));
  r.register_handshake(spec("amqp", from_hex("414d515000000901"), patterns({"kw:amqp"})));
  r.register_handshake(spec("redis", to_bytes("*1\r\n$4\r\nPING\r\n"),
                            patterns({"start:+PONG", "start:-NOAUTH", "start:-ERR",
                                      "start:-DENIED", "kw:redis"})));
  r.register_handshake(spec("memcached", to_bytes("stats\r\n"),
                            patterns({"start:STAT%20", "start:VERSION%20"})));
  r.register_handshake(spec("mongodb", mongodb_ismaster(),
                            patterns({"at12:01000000", "at12:dd070000", "kw:ismaster"})));
  r.register_handshake(spec("mssql", mssql_prelogin(), patterns({"prefix:0401"})));
  r.register_handshake(spec("smb", smb_negotiate(), patterns({"at4:ff534d42", "at4:fe534d42"})));
  r.register_handshake(spec("oracle", oracle_connect(),
                            patterns({"kw:(DESCRIPTION=", "at2:0000&at4:02&at5:00"})));
  r.register_handshake(spec("dnp3", dnp3_link_status(), patterns({"prefix:0564"})));
  r.register_handshake(spec("modbus", from_hex("123400000005002b0e0100"),
                            patterns({"prefix:12340000&mask7:2b/7f"})));
  r.register_handshake(spec("ipp", ipp_request(), patterns({"kw:application/ipp"})));

  // Telnet keywords are broad; keep it last so specific matchers win.
  r.register_handshake(spec("telnet", {},
                            patterns({"prefix:fffb", "prefix:fffd", "prefix:fffc", "prefix:fffe",
                                      "kw:login", "kw:user"}),
                            true));
  return r;
}

const std::map<std::uint16_t, std::string>& assigned_ports() {
  static const std::map<std::uint16_t, std::string> kPorts = {
      {21, "ftp"},       {22, "ssh"},       {23, "telnet"},    {25, "smtp"},
      {53, "dns"},       {80, "http"},      {102, "s7"},       {110, "pop3"},
      {143, "imap"},     {443, "tls"},      {445, "smb"},      {465, "smtp"},
      {502, "modbus"},   {587, "smtp"},     {631, "ipp"},      {993, "tls"},
      {995, "tls"},      {1433, "mssql"},   {1521, "oracle"},  {1723, "pptp"},
      {1883, "mqtt"},    {3306, "mysql"},   {3389, "rdp"},     {4567, "http"},
      {5432, "postgres"}, {5672, "amqp"},   {5900, "vnc"},     {6379, "redis"},
      {6443, "tls"},     {7547, "http"},    {8080, "http"},    {8443, "tls"},
      {8883, "mqtt"},    {11211, "memcached"}, {20000, "dnp3"}, {27017, "mongodb"},
  };
  return kPorts;
}

std::optional<std::string> expected_protocol(std::uint16_t port) {
  const auto& ports = assigned_ports();
  auto it = ports.find(port);
  if (it == ports.end()) return std::nullopt;
  return it->second;
}

}  // namespace svcid
