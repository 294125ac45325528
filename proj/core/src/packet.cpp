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

#include "svcid/packet.hpp"

#include <charconv>
#include <sstream>

#include "svcid/error.hpp"

namespace svcid {
namespace {

constexpr std::uint8_t kProtoTcp = 6;
constexpr std::uint8_t kOptEnd = 0;
constexpr std::uint8_t kOptNop = 1;
constexpr std::uint8_t kOptMss = 2;

void put16(Bytes& out, std::size_t at, std::uint16_t v) {
  out[at] = static_cast<std::uint8_t>(v >> 8);
  out[at + 1] = static_cast<std::uint8_t>(v);
}

void put32(Bytes& out, std::size_t at, std::uint32_t v) {
  out[at] = static_cast<std::uint8_t>(v >> 24);
  out[at + 1] = static_cast<std::uint8_t>(v >> 16);
  out[at + 2] = static_cast<std::uint8_t>(v >> 8);
  out[at + 3] = static_cast<std::uint8_t>(v);
}

std::uint16_t get16(ByteView in, std::size_t at) {
  return static_cast<std::uint16_t>((in[at] << 8) | in[at + 1]);
}

std::uint32_t get32(ByteView in, std::size_t at) {
  return (std::uint32_t{in[at]} << 24) | (std::uint32_t{in[at + 1]} << 16) |
         (std::uint32_t{in[at + 2]} << 8) | std::uint32_t{in[at + 3]};
}

std::uint32_t pseudo_header_sum(Ipv4 src, Ipv4 dst, std::size_t tcp_len) {
  std::uint32_t sum = 0;
  sum += src.value() >> 16;
  sum += src.value() & 0xffff;
  sum += dst.value() >> 16;
  sum += dst.value() & 0xffff;
  sum += kProtoTcp;
  sum += static_cast<std::uint32_t>(tcp_len);
  return sum;
}

[[noreturn]] void malformed(const char* why) {
  throw Error(ErrorCode::kMalformedSegment, why);
}

}  // namespace

Bytes to_bytes(std::string_view text) { return Bytes(text.begin(), text.end()); }

Ipv4 Ipv4::parse(std::string_view text) {
  std::uint32_t value = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int octet = 0; octet < 4; ++octet) {
    unsigned part = 0;
    auto [next, ec] = std::from_chars(p, end, part);
    if (ec != std::errc{} || next == p || part > 255 || next - p > 3) {
      throw Error(ErrorCode::kParse, "bad IPv4 address '" + std::string(text) + "'");
    }
    value = (value << 8) | part;
    p = next;
    if (octet < 3) {
      if (p == end || *p != '.') {
        throw Error(ErrorCode::kParse, "bad IPv4 address '" + std::string(text) + "'");
      }
      ++p;
    }
  }
  if (p != end) throw Error(ErrorCode::kParse, "bad IPv4 address '" + std::string(text) + "'");
  return Ipv4(value);
}

std::string Ipv4::to_string() const {
  std::ostringstream os;
  os << (value_ >> 24) << '.' << ((value_ >> 16) & 0xff) << '.' << ((value_ >> 8) & 0xff)
     << '.' << (value_ & 0xff);
  return os.str();
}

std::string TcpFlags::to_string() const {
  std::string out;
  if (syn()) out += 'S';
  if (fin()) out += 'F';
  if (rst()) out += 'R';
  if (psh()) out += 'P';
  if (ack()) out += 'A';
  if (out.empty()) out = "-";
  return out;
}

std::uint32_t TcpSegment::seq_length() const {
  return static_cast<std::uint32_t>(payload.size()) + (flags.syn() ? 1u : 0u) +
         (flags.fin() ? 1u : 0u);
}

std::string summarize(const TcpSegment& seg) {
  std::ostringstream os;
  os << seg.src_ip.to_string() << ':' << seg.src_port << " > " << seg.dst_ip.to_string()
     << ':' << seg.dst_port << " [" << seg.flags.to_string() << "] seq=" << seg.seq
     << " ack=" << seg.ack << " win=" << seg.window << " ttl=" << int{seg.ttl}
     << " len=" << seg.payload.size();
  return os.str();
}

std::uint16_t internet_checksum(ByteView data, std::uint32_t initial) {
  std::uint64_t sum = initial;
  std::size_t i = 0;
  for (; i + 1 < data.size(); i += 2) sum += (std::uint32_t{data[i]} << 8) | data[i + 1];
  if (i < data.size()) sum += std::uint32_t{data[i]} << 8;
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum & 0xffff);
}

std::size_t max_payload(const CraftOptions& opts, bool with_mss) {
  const std::size_t headers = kIpHeaderLen + kTcpHeaderLen + (with_mss ? 4 : 0);
  return opts.mtu > headers ? opts.mtu - headers : 0;
}

Bytes craft(const TcpSegment& seg, const CraftOptions& opts) {
  const bool with_mss = seg.mss.has_value();
  if (seg.payload.size() > max_payload(opts, with_mss)) {
    throw Error(ErrorCode::kPayloadTooLarge,
                std::to_string(seg.payload.size()) + " bytes exceeds " +
                    std::to_string(max_payload(opts, with_mss)));
  }
  const std::size_t tcp_hdr = kTcpHeaderLen + (with_mss ? 4 : 0);
  const std::size_t total = kIpHeaderLen + tcp_hdr + seg.payload.size();
  Bytes out(total, 0);

  out[0] = 0x45;
  put16(out, 2, static_cast<std::uint16_t>(total));
  put16(out, 4, static_cast<std::uint16_t>(seg.seq));  // IP id: low bits of seq
  put16(out, 6, 0x4000);                                // DF
  out[8] = seg.ttl;
  out[9] = kProtoTcp;
  put32(out, 12, seg.src_ip.value());
  put32(out, 16, seg.dst_ip.value());

  const std::size_t t = kIpHeaderLen;
  put16(out, t + 0, seg.src_port);
  put16(out, t + 2, seg.dst_port);
  put32(out, t + 4, seg.seq);
  put32(out, t + 8, seg.ack);
  out[t + 12] = static_cast<std::uint8_t>((tcp_hdr / 4) << 4);
  out[t + 13] = seg.flags.bits;
  put16(out, t + 14, seg.window);
  if (with_mss) {
    out[t + 20] = kOptMss;
    out[t + 21] = 4;
    put16(out, t + 22, *seg.mss);
  }
  std::copy(seg.payload.begin(), seg.payload.end(), out.begin() + static_cast<long>(t + tcp_hdr));

  if (!opts.skip_checksums) {
    put16(out, 10, internet_checksum(ByteView(out).first(kIpHeaderLen)));
    const std::size_t tcp_len = total - kIpHeaderLen;
    put16(out, t + 16,
          internet_checksum(ByteView(out).subspan(t),
                            pseudo_header_sum(seg.src_ip, seg.dst_ip, tcp_len)));
  }
  return out;
}

TcpSegment parse(ByteView wire, const ParseOptions& opts) {
  if (wire.size() < kIpHeaderLen + kTcpHeaderLen) malformed("shorter than minimal headers");
  if ((wire[0] >> 4) != 4) malformed("not IPv4");
  const std::size_t ihl = std::size_t{wire[0] & 0x0fu} * 4;
  if (ihl < kIpHeaderLen) malformed("bad IHL");
  const std::size_t total = get16(wire, 2);
  if (total > wire.size() || total < ihl + kTcpHeaderLen) malformed("bad total length");
  if (wire[9] != kProtoTcp) malformed("not TCP");

  TcpSegment seg;
  seg.ttl = wire[8];
  seg.src_ip = Ipv4(get32(wire, 12));
  seg.dst_ip = Ipv4(get32(wire, 16));

  ByteView tcp = wire.subspan(ihl, total - ihl);
  const std::size_t doff = static_cast<std::size_t>(tcp[12] >> 4) * 4;
  if (doff < kTcpHeaderLen || doff > tcp.size()) malformed("bad data offset");

  if (opts.strict_checksums) {
    if (internet_checksum(wire.first(ihl)) != 0) {
      throw Error(ErrorCode::kBadChecksum, "IPv4 header");
    }
    if (internet_checksum(tcp, pseudo_header_sum(seg.src_ip, seg.dst_ip, tcp.size())) != 0) {
      throw Error(ErrorCode::kBadChecksum, "TCP");
    }
  }

  seg.src_port = get16(tcp, 0);
  seg.dst_port = get16(tcp, 2);
  seg.seq = get32(tcp, 4);
  seg.ack = get32(tcp, 8);
  seg.flags = TcpFlags{static_cast<std::uint8_t>(tcp[13] & 0x1f)};
  seg.window = get16(tcp, 14);

  // Options: keep MSS, step over everything else.
  for (std::size_t i = kTcpHeaderLen; i < doff;) {
    const std::uint8_t kind = tcp[i];
    if (kind == kOptEnd) break;
    if (kind == kOptNop) {
      ++i;
      continue;
    }
    if (i + 1 >= doff) malformed("truncated option");
    const std::size_t len = tcp[i + 1];
    if (len < 2 || i + len > doff) malformed("bad option length");
    if (kind == kOptMss && len == 4) seg.mss = get16(tcp, i + 2);
    i += len;
  }
  seg.payload.assign(tcp.begin() + static_cast<long>(doff), tcp.end());
  return seg;
}

const char* to_string(FlowPhase phase) {
  switch (phase) {
    case FlowPhase::kSynSent: return "SynSent";
    case FlowPhase::kSynAckSeen: return "SynAckSeen";
    case FlowPhase::kAckSent: return "AckSent";
    case FlowPhase::kDataSent: return "DataSent";
    case FlowPhase::kClosed: return "Closed";
  }
  return "?";
}

TcpSegment FlowState::make_segment(TcpFlags flags, Bytes payload) const {
  TcpSegment seg;
  seg.src_ip = four_tuple.src_ip;
  seg.src_port = four_tuple.src_port;
  seg.dst_ip = four_tuple.dst_ip;
  seg.dst_port = four_tuple.dst_port;
  seg.seq = our_next_seq;
  seg.ack = flags.ack() ? their_next_seq : 0;
  seg.flags = flags;
  seg.window = 65535;
  seg.payload = std::move(payload);
  return seg;
}

void FlowState::on_sent(const TcpSegment& seg) {
  ++packets_sent;
  if (seq_geq(seg.seq, our_next_seq)) {
    our_next_seq = seg.seq + seg.seq_length();
    bytes_sent_unacked += static_cast<std::uint32_t>(seg.payload.size());
  }
  if (seg.flags.rst() || seg.flags.fin()) {
    phase = FlowPhase::kClosed;
  } else if (!seg.payload.empty()) {
    phase = FlowPhase::kDataSent;
  } else if (seg.flags.ack() && phase == FlowPhase::kSynAckSeen) {
    phase = FlowPhase::kAckSent;
  }
}

void FlowState::on_received(const TcpSegment& seg) {
  ++packets_received;
  if (seg.flags.synack() && phase == FlowPhase::kSynSent) {
    their_next_seq = seg.seq + 1;
    synack_ttl = seg.ttl;
    phase = FlowPhase::kSynAckSeen;
  }
  if (!seg.flags.rst()) observed_window = seg.window;
  if (seg.flags.ack()) {
    // Acked bytes leave the unacked count.
    const std::uint32_t outstanding_start = our_next_seq - bytes_sent_unacked;
    if (seq_lt(outstanding_start, seg.ack) && seq_geq(our_next_seq, seg.ack)) {
      bytes_sent_unacked -= seg.ack - outstanding_start;
    }
  }
  const std::uint32_t end = seg.seq + seg.seq_length() - (seg.flags.syn() ? 1u : 0u);
  if (!seg.flags.syn() && seg.seq == their_next_seq) their_next_seq = end;
  if (seg.flags.rst() || seg.flags.fin()) phase = FlowPhase::kClosed;
}

FlowState originate(const FlowKey& key, std::uint32_t isn) {
  FlowState st;
  st.four_tuple = key;
  st.our_next_seq = isn;
  st.phase = FlowPhase::kSynSent;
  return st;
}

FlowState adopt(const TcpSegment& synack) {
  if (!synack.flags.synack()) {
    throw Error(ErrorCode::kNotSynAck, "flags " + synack.flags.to_string());
  }
  FlowState st;
  st.four_tuple = inbound_key(synack);
  st.our_next_seq = synack.ack;
  st.their_next_seq = synack.seq + 1;
  st.observed_window = synack.window;
  st.synack_ttl = synack.ttl;
  st.phase = FlowPhase::kSynAckSeen;
  st.packets_received = 1;
  return st;
}

}  // namespace svcid
