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

#include "svcid/classifier.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "svcid/error.hpp"
#include "svcid/registry.hpp"

namespace svcid {

const char* to_string(BehaviorKind kind) {
  switch (kind) {
    case BehaviorKind::kConnectionShunning: return "ConnectionShunning";
    case BehaviorKind::kDynamicBlockAfterHandshake: return "DynamicBlockAfterHandshake";
    case BehaviorKind::kZeroWindowProtection: return "ZeroWindowProtection";
    case BehaviorKind::kMidHandshakeDrop: return "MidHandshakeDrop";
    case BehaviorKind::kRstAfterHandshake: return "RstAfterHandshake";
    case BehaviorKind::kWildcardAcker: return "WildcardAcker";
    case BehaviorKind::kNoDefenseObserved: return "NoDefenseObserved";
  }
  return "?";
}

const char* to_string(Granularity g) {
  switch (g) {
    case Granularity::kHost: return "Host";
    case Granularity::kNetwork: return "Network";
    case Granularity::kUnknown: return "Unknown";
  }
  return "?";
}

std::optional<BehaviorKind> parse_behavior(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(BehaviorKind::kNoDefenseObserved); ++i) {
    const auto k = static_cast<BehaviorKind>(i);
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

int min_supporting_probes(BehaviorKind kind) {
  switch (kind) {
    case BehaviorKind::kConnectionShunning:
    case BehaviorKind::kDynamicBlockAfterHandshake: return 2;
    case BehaviorKind::kWildcardAcker: return 5;
    default: return 1;
  }
}

const char* to_string(ProbeResponse r) {
  switch (r) {
    case ProbeResponse::kSynAck: return "SynAck";
    case ProbeResponse::kRst: return "Rst";
    case ProbeResponse::kSilence: return "Silence";
  }
  return "?";
}

std::optional<ProbeResponse> parse_probe_response(std::string_view name) {
  for (auto r : {ProbeResponse::kSynAck, ProbeResponse::kRst, ProbeResponse::kSilence}) {
    if (name == to_string(r)) return r;
  }
  return std::nullopt;
}

namespace {

BehaviorLabel two_source_rule(const TwoSourceProbeResult& r, BehaviorKind positive) {
  BehaviorLabel label;
  label.supporting_probes = 2;
  if (r.fresh_ip_response == ProbeResponse::kSynAck &&
      r.used_ip_response != ProbeResponse::kSynAck) {
    label.kind = positive;
  }
  return label;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

BehaviorLabel classify_shunning(const TwoSourceProbeResult& r) {
  return two_source_rule(r, BehaviorKind::kConnectionShunning);
}

BehaviorLabel classify_dynamic_block(const TwoSourceProbeResult& r) {
  return two_source_rule(r, BehaviorKind::kDynamicBlockAfterHandshake);
}

std::vector<ProbeResponse> syn_probe(Transport& transport, std::span<const SynProbe> probes,
                                     const SynProbeConfig& config) {
  if (config.attempts < 1) throw Error(ErrorCode::kInvalidArgument, "syn probe attempts must be >= 1");
  std::vector<ProbeResponse> result(probes.size(), ProbeResponse::kSilence);
  std::mt19937_64 rng(mix(config.seed));
  std::uniform_int_distribution<int> port_dist(32768, 65535);
  const Nanos timeout = scaled(config.timeout, config.timescale);

  for (int round = 0; round < config.attempts; ++round) {
    std::map<FlowKey, std::pair<std::size_t, std::uint32_t>> pending;  // key -> (index, isn)
    for (std::size_t i = 0; i < probes.size(); ++i) {
      if (result[i] != ProbeResponse::kSilence) continue;
      FlowKey key{probes[i].source, 0, probes[i].target, probes[i].port};
      do {
        key.src_port = static_cast<std::uint16_t>(port_dist(rng));
      } while (pending.contains(key));
      const auto isn = static_cast<std::uint32_t>(rng());
      pending.emplace(key, std::make_pair(i, isn));
      TcpSegment syn = originate(key, isn).make_segment(TcpFlags{TcpFlags::kSyn});
      syn.mss = 1460;
      send_segment(transport, syn);
    }
    if (pending.empty()) break;
    const Nanos deadline = transport.now() + timeout;
    while (!pending.empty()) {
      auto seg = receive_segment(transport, deadline);
      if (!seg) break;
      auto it = pending.find(inbound_key(*seg));
      if (it == pending.end()) continue;
      const auto [index, isn] = it->second;
      if (seg->flags.synack() && seg->ack == isn + 1) {
        result[index] = ProbeResponse::kSynAck;
        TcpSegment rst;
        rst.src_ip = it->first.src_ip;
        rst.src_port = it->first.src_port;
        rst.dst_ip = it->first.dst_ip;
        rst.dst_port = it->first.dst_port;
        rst.seq = isn + 1;
        rst.flags = TcpFlags{TcpFlags::kRst};
        send_segment(transport, rst);
        pending.erase(it);
      } else if (seg->flags.rst()) {
        result[index] = ProbeResponse::kRst;
        pending.erase(it);
      }
    }
  }
  return result;
}

TwoSourceProbeResult probe_two_sources(Transport& transport, Ipv4 target, std::uint16_t port,
                                       const TwoSourceConfig& config) {
  if (config.used_source == config.fresh_source) {
    throw Error(ErrorCode::kInvalidArgument, "two-source probe needs distinct source addresses");
  }
  const SynProbe probes[] = {{config.used_source, target, port}, {config.fresh_source, target, port}};
  const auto r = syn_probe(transport, probes, config.probe);
  return TwoSourceProbeResult{r[0], r[1]};
}

BehaviorLabel detect_shunning(Transport& transport, Ipv4 target, std::uint16_t port,
                              const TwoSourceConfig& config) {
  return classify_shunning(probe_two_sources(transport, target, port, config));
}

BehaviorLabel detect_dynamic_block(Transport& transport, Ipv4 target, std::uint16_t port,
                                   const TwoSourceConfig& config) {
  return classify_dynamic_block(probe_two_sources(transport, target, port, config));
}

// ---------------------------------------------------------------------------

const std::vector<std::uint16_t>& registered_high_ports() {
  // Curated, not exhaustive: services commonly seen above 32767.
  static const std::vector<std::uint16_t> kPorts = {
      32400, 32764, 33434, 34962, 34963, 34964, 37777, 41794, 44818, 47001,
      47808, 48899, 49152, 50000, 50070, 51235, 52869, 55442, 55443, 55553,
      60001, 61616, 62078, 64738};
  return kPorts;
}

std::vector<std::uint16_t> pick_ephemeral_ports(int n, std::uint16_t studied_port,
                                                std::uint64_t seed) {
  if (n < 0) throw Error(ErrorCode::kInvalidArgument, "port count must be >= 0");
  std::mt19937_64 rng(mix(seed));
  std::uniform_int_distribution<int> dist(32768, 65535);
  const auto& reg = registered_high_ports();
  const auto& table = assigned_ports();
  std::vector<std::uint16_t> out;
  while (static_cast<int>(out.size()) < n) {
    const auto p = static_cast<std::uint16_t>(dist(rng));
    if (p == studied_port || table.contains(p) ||
        std::find(reg.begin(), reg.end(), p) != reg.end() ||
        std::find(out.begin(), out.end(), p) != out.end()) {
      continue;
    }
    out.push_back(p);
  }
  return out;
}

bool wildcard_verdict(int acked, const WildcardConfig& config) {
  const int need = config.threshold > 0 ? config.threshold : config.ports;
  return config.ports > 0 && acked >= need;
}

PortAckProbe::PortAckProbe(const FlowKey& key, std::uint32_t isn, const WildcardConfig& config)
    : config_(config), flow_(originate(key, isn)) {}

std::vector<TcpSegment> PortAckProbe::start(Nanos now) {
  TcpSegment syn = flow_.make_segment(TcpFlags{TcpFlags::kSyn});
  syn.mss = 1460;
  flow_.on_sent(syn);
  deadline_ = now + scaled(config_.syn_timeout, config_.timescale);
  return {syn};
}

std::vector<TcpSegment> PortAckProbe::on_segment(const TcpSegment& in, Nanos now) {
  if (done_) return {};
  flow_.on_received(in);
  std::vector<TcpSegment> out;
  auto close = [&] {
    FlowState snapshot = flow_;
    TcpSegment rst = snapshot.make_segment(TcpFlags{TcpFlags::kRst});
    flow_.on_sent(rst);
    out.push_back(rst);
    done_ = true;
  };
  if (phase_ == Phase::kSyn) {
    if (in.flags.rst() || in.flags.fin()) {
      done_ = true;
    } else if (in.flags.synack() && in.ack == flow_.our_next_seq) {
      flow_.their_next_seq = in.seq + 1;
      data_seq_ = flow_.our_next_seq;
      TcpSegment data = flow_.make_segment(TcpFlags{TcpFlags::kAck}, config_.payload);
      flow_.on_sent(data);
      out.push_back(data);
      phase_ = Phase::kData;
      retried_ = false;
      deadline_ = now + scaled(config_.data_timeout, config_.timescale);
    }
    return out;
  }
  const std::uint32_t end = data_seq_ + static_cast<std::uint32_t>(config_.payload.size());
  if (in.flags.ack() && seq_geq(in.ack, end)) {
    acked_ = true;
    if (in.flags.rst() || in.flags.fin()) {
      done_ = true;
    } else {
      close();
    }
  } else if (in.flags.rst() || in.flags.fin()) {
    done_ = true;
  }
  return out;
}

std::vector<TcpSegment> PortAckProbe::on_deadline(Nanos now) {
  if (done_ || now < deadline_) return {};
  std::vector<TcpSegment> out;
  if (retried_) {
    if (phase_ == Phase::kData) {
      TcpSegment rst = flow_.make_segment(TcpFlags{TcpFlags::kRst});
      flow_.on_sent(rst);
      out.push_back(rst);
    }
    done_ = true;
    return out;
  }
  retried_ = true;
  if (phase_ == Phase::kSyn) {
    FlowState snapshot = flow_;
    snapshot.our_next_seq -= 1;
    TcpSegment syn = snapshot.make_segment(TcpFlags{TcpFlags::kSyn});
    syn.mss = 1460;
    flow_.on_sent(syn);
    out.push_back(syn);
    deadline_ = now + 2 * scaled(config_.syn_timeout, config_.timescale);
  } else {
    FlowState snapshot = flow_;
    snapshot.our_next_seq = data_seq_;
    TcpSegment data = snapshot.make_segment(TcpFlags{TcpFlags::kAck | TcpFlags::kPsh}, config_.payload);
    flow_.on_sent(data);
    out.push_back(data);
    deadline_ = now + scaled(config_.data_timeout, config_.timescale);
  }
  return out;
}

WildcardResult detect_wildcard(Transport& transport, Ipv4 source, Ipv4 target,
                               std::uint16_t studied_port, const WildcardConfig& config) {
  WildcardResult result;
  result.ports = pick_ephemeral_ports(config.ports, studied_port, config.seed);
  std::mt19937_64 rng(mix(config.seed ^ 0x5bd1e995ULL));
  std::uniform_int_distribution<int> port_dist(32768, 65535);
  FlowTable<PortAckProbe> flows;
  for (auto port : result.ports) {
    FlowKey key{source, 0, target, port};
    do {
      key.src_port = static_cast<std::uint16_t>(port_dist(rng));
    } while (flows.contains(key));
    auto& probe = flows.insert(key, PortAckProbe(key, static_cast<std::uint32_t>(rng()), config));
    for (const auto& s : probe.start(transport.now())) send_segment(transport, s);
  }
  auto live = [&] {
    for (auto& [k, p] : flows) {
      if (!p.done()) return true;
    }
    return false;
  };
  while (live()) {
    Nanos earliest = Nanos::max();
    for (auto& [k, p] : flows) {
      if (!p.done()) earliest = std::min(earliest, p.deadline());
    }
    if (auto seg = receive_segment(transport, earliest)) {
      if (auto* p = flows.route(*seg)) {
        for (const auto& s : p->on_segment(*seg, transport.now())) send_segment(transport, s);
      }
      continue;
    }
    const Nanos now = transport.now();
    for (auto& [k, p] : flows) {
      if (!p.done() && p.deadline() <= now) {
        for (const auto& s : p.on_deadline(now)) send_segment(transport, s);
      }
    }
  }
  for (auto& [k, p] : flows) result.acked_ports += p.acked() ? 1 : 0;
  result.wildcard = wildcard_verdict(result.acked_ports, config);
  return result;
}

// ---------------------------------------------------------------------------

bool ttl_mismatch(std::span<const std::uint8_t> ttls) {
  if (ttls.size() < 2) return false;
  const auto [lo, hi] = std::minmax_element(ttls.begin(), ttls.end());
  return int{*hi} >= 2 * int{*lo};
}

bool ttl_mismatch(std::span<const EvidenceEntry> evidence) {
  std::vector<std::uint8_t> ttls;
  for (const auto& e : evidence) {
    if (e.direction == EvidenceDirection::kIn) ttls.push_back(e.ttl);
  }
  return ttl_mismatch(ttls);
}

BehaviorLabel behavior_from_verdict(const StateVerdict& verdict) {
  BehaviorLabel label;
  label.supporting_probes = 1;
  switch (verdict.refined_state) {
    case RefinedState::kZeroWindowNeverOpened: label.kind = BehaviorKind::kZeroWindowProtection; break;
    case RefinedState::kSynAckRetransmitLoop: label.kind = BehaviorKind::kMidHandshakeDrop; break;
    case RefinedState::kRstAfterHandshake: label.kind = BehaviorKind::kRstAfterHandshake; break;
    default: break;
  }
  return label;
}

namespace {

// Calls emit(start, prefix_len) for each block of the decomposition. Each run
// of consecutive addresses is cut largest block first, so a run's blocks follow
// the binary digits of its length. Blocks need not start on a prefix boundary.
template <typename Emit>
void decompose(std::span<const Ipv4> ips, Emit emit) {
  std::vector<std::uint32_t> addrs;
  addrs.reserve(ips.size());
  for (auto ip : ips) addrs.push_back(ip.value());
  std::sort(addrs.begin(), addrs.end());
  if (std::adjacent_find(addrs.begin(), addrs.end()) != addrs.end()) {
    throw Error(ErrorCode::kDuplicate, "address repeated in granularity input");
  }
  std::size_t i = 0;
  while (i < addrs.size()) {
    std::size_t j = i;
    while (j + 1 < addrs.size() && addrs[j + 1] == addrs[j] + 1) ++j;
    std::uint64_t a = addrs[i];
    const std::uint64_t last = addrs[j];
    while (a <= last) {
      int prefix = 32;
      while (prefix > 8) {
        const std::uint64_t size = std::uint64_t{1} << (33 - prefix);
        if (a + size - 1 > last) break;
        --prefix;
      }
      emit(static_cast<std::uint32_t>(a), prefix);
      a += std::uint64_t{1} << (32 - prefix);
    }
    i = j + 1;
  }
}

}  // namespace

std::map<int, std::size_t> network_granularity(std::span<const Ipv4> ips) {
  std::map<int, std::size_t> hist;
  decompose(ips, [&](std::uint32_t, int prefix) { ++hist[prefix]; });
  return hist;
}

std::map<Ipv4, int> block_prefixes(std::span<const Ipv4> ips) {
  std::map<Ipv4, int> out;
  decompose(ips, [&](std::uint32_t start, int prefix) {
    const std::uint64_t size = std::uint64_t{1} << (32 - prefix);
    for (std::uint64_t k = 0; k < size; ++k) out.emplace(Ipv4(static_cast<std::uint32_t>(start + k)), prefix);
  });
  return out;
}

}  // namespace svcid
