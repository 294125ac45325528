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

#include "svcid/deduce.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

#include "svcid/error.hpp"

namespace svcid {

const char* to_string(Outcome outcome) {
  return outcome == Outcome::kAckHost ? "AckHost" : "NoAckHost";
}

const char* to_string(RefinedState state) {
  switch (state) {
    case RefinedState::kNeverSynAcked: return "NeverSynAcked";
    case RefinedState::kZeroWindowNeverOpened: return "ZeroWindowNeverOpened";
    case RefinedState::kSynAckRetransmitLoop: return "SynAckRetransmitLoop";
    case RefinedState::kRstAfterHandshake: return "RstAfterHandshake";
    case RefinedState::kEstablishedNoAck: return "EstablishedNoAck";
    case RefinedState::kAcknowledgesData: return "AcknowledgesData";
  }
  return "?";
}

Outcome outcome_of(RefinedState state) {
  return state == RefinedState::kAcknowledgesData ? Outcome::kAckHost : Outcome::kNoAckHost;
}

std::string summarize(const EvidenceEntry& e) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%.6f %s %s seq=%u ack=%u win=%u ttl=%u len=%zu%s",
                std::chrono::duration<double>(e.timestamp).count(),
                e.direction == EvidenceDirection::kOut ? "out" : "in", e.flags.to_string().c_str(),
                e.seq, e.ack, e.window, e.ttl, e.payload_len, e.acks_probe ? " acks-probe" : "");
  return buf;
}

void DeduceConfig::validate() const {
  if (total_timeout <= Nanos{0}) throw Error(ErrorCode::kInvalidArgument, "total_timeout must be > 0");
  if (retransmit_budget < 1) throw Error(ErrorCode::kInvalidArgument, "retransmit_budget must be >= 1");
  if (retransmit_budget > 30) throw Error(ErrorCode::kInvalidArgument, "retransmit_budget must be <= 30");
  if (!(timescale > 0.0)) throw Error(ErrorCode::kInvalidArgument, "timescale must be > 0");
  if (syn_rto <= Nanos{0}) throw Error(ErrorCode::kInvalidArgument, "syn_rto must be > 0");
  if (syn_retries < 0) throw Error(ErrorCode::kInvalidArgument, "syn_retries must be >= 0");
  if (probe_payload.empty()) throw Error(ErrorCode::kInvalidArgument, "probe payload must be nonempty");
}

RefinedState label_refined(std::span<const EvidenceEntry> evidence) {
  if (evidence.empty()) throw Error(ErrorCode::kNoEvidence, "deduction recorded nothing");
  bool synacked = false, all_zero = true, closed = false;
  int synacks = 0;
  for (const auto& e : evidence) {
    if (e.direction != EvidenceDirection::kIn) continue;
    if (e.acks_probe) return RefinedState::kAcknowledgesData;
    if (e.flags.synack()) {
      synacked = true;
      ++synacks;
    }
    if (e.flags.rst() || e.flags.fin()) {
      if (synacked) closed = true;
    } else if (e.window != 0) {
      all_zero = false;
    }
  }
  if (!synacked) return RefinedState::kNeverSynAcked;
  if (all_zero) return RefinedState::kZeroWindowNeverOpened;
  if (synacks >= 2) return RefinedState::kSynAckRetransmitLoop;
  if (closed) return RefinedState::kRstAfterHandshake;
  return RefinedState::kEstablishedNoAck;
}

// ---------------------------------------------------------------------------

Deduction::Deduction(const FlowKey& key, std::uint32_t isn, const DeduceConfig& config)
    : config_(config), flow_(originate(key, isn)) {
  config_.validate();
}

TcpSegment Deduction::emit(TcpFlags flags, Bytes payload, Nanos now) {
  TcpSegment seg = flow_.make_segment(flags, std::move(payload));
  if (flags.syn()) seg.mss = config_.mss;
  flow_.on_sent(seg);
  record(seg, EvidenceDirection::kOut, now, false);
  return seg;
}

void Deduction::record(const TcpSegment& seg, EvidenceDirection dir, Nanos now, bool acks_probe) {
  EvidenceEntry e;
  e.timestamp = now;
  e.direction = dir;
  e.flags = seg.flags;
  e.seq = seg.seq;
  e.ack = seg.ack;
  e.window = seg.window;
  e.ttl = seg.ttl;
  e.payload_len = seg.payload.size();
  e.acks_probe = acks_probe;
  evidence_.push_back(e);
}

std::vector<TcpSegment> Deduction::start(Nanos now) {
  syn_start_ = now;
  ++syn_sent_;
  deadline_ = now + scaled(config_.syn_rto, config_.timescale);
  return {emit(TcpFlags{TcpFlags::kSyn}, {}, now)};
}

std::vector<TcpSegment> Deduction::send_data(Nanos now, bool retransmission) {
  FlowState snapshot = flow_;
  snapshot.our_next_seq = data_seq_;
  TcpSegment seg = snapshot.make_segment(
      TcpFlags{static_cast<std::uint8_t>(TcpFlags::kAck | (retransmission ? TcpFlags::kPsh : 0))},
      config_.probe_payload);
  flow_.on_sent(seg);
  flow_.our_next_seq = data_end_;
  flow_.phase = FlowPhase::kDataSent;
  record(seg, EvidenceDirection::kOut, now, false);
  ++data_sent_;
  return {seg};
}

std::vector<TcpSegment> Deduction::on_segment(const TcpSegment& in, Nanos now) {
  std::vector<TcpSegment> out;
  if (phase_ == Phase::kDone) return out;
  const bool acks_probe =
      phase_ == Phase::kData && in.flags.ack() && seq_geq(in.ack, data_end_);
  flow_.on_received(in);
  record(in, EvidenceDirection::kIn, now, acks_probe);

  if (phase_ == Phase::kSyn) {
    if (in.flags.rst() || in.flags.fin()) {
      phase_ = Phase::kDone;
      return out;
    }
    if (!in.flags.synack() || in.ack != flow_.our_next_seq) return out;
    ++synack_count_;
    flow_.synack_ttl = in.ttl;
    flow_.their_next_seq = in.seq + 1;
    flow_.phase = FlowPhase::kSynAckSeen;
    out.push_back(emit(TcpFlags{TcpFlags::kAck}, {}, now));
    flow_.phase = FlowPhase::kAckSent;
    data_seq_ = flow_.our_next_seq;
    data_end_ = data_seq_ + static_cast<std::uint32_t>(config_.probe_payload.size());
    phase_ = Phase::kData;
    data_start_ = now;
    auto data = send_data(now, false);
    out.insert(out.end(), data.begin(), data.end());
    const Nanos first = scaled(config_.total_timeout, config_.timescale) / (1LL << config_.retransmit_budget);
    deadline_ = now + first;
    return out;
  }

  // Data phase.
  if (acks_probe || in.flags.rst() || in.flags.fin()) {
    phase_ = Phase::kDone;
    return out;
  }
  if (in.flags.synack()) {
    // The server never saw our ACK: acknowledge again, leave the data timer.
    ++synack_count_;
    FlowState snapshot = flow_;
    snapshot.our_next_seq = data_seq_;
    TcpSegment ack = snapshot.make_segment(TcpFlags{TcpFlags::kAck});
    flow_.on_sent(ack);
    record(ack, EvidenceDirection::kOut, now, false);
    out.push_back(ack);
  }
  return out;
}

std::vector<TcpSegment> Deduction::on_deadline(Nanos now) {
  if (phase_ == Phase::kDone || now < deadline_) return {};
  const Nanos rto = scaled(config_.syn_rto, config_.timescale);
  if (phase_ == Phase::kSyn) {
    if (syn_sent_ > config_.syn_retries) {
      phase_ = Phase::kDone;
      return {};
    }
    FlowState snapshot = flow_;
    snapshot.our_next_seq = flow_.our_next_seq - 1;
    TcpSegment syn = snapshot.make_segment(TcpFlags{TcpFlags::kSyn});
    syn.mss = config_.mss;
    flow_.packets_sent++;
    record(syn, EvidenceDirection::kOut, now, false);
    ++syn_sent_;
    // Backoff: rto, 2 rto, 4 rto, ... measured from the previous send.
    deadline_ = now + rto * (1LL << (syn_sent_ - 1));
    return {syn};
  }
  const Nanos total = scaled(config_.total_timeout, config_.timescale);
  const int retx_done = data_sent_ - 1;
  if (retx_done >= config_.retransmit_budget) {
    if (now >= data_start_ + total) {
      phase_ = Phase::kDone;
      return {};
    }
    deadline_ = data_start_ + total;
    return {};
  }
  auto out = send_data(now, true);
  const int i = retx_done + 1;  // retransmissions sent so far
  if (i >= config_.retransmit_budget) {
    deadline_ = data_start_ + total;
  } else {
    // Retransmission j leaves at total / 2^budget * (2^j - 1).
    const Nanos unit = total / (1LL << config_.retransmit_budget);
    deadline_ = data_start_ + unit * ((1LL << (i + 1)) - 1);
  }
  return out;
}

StateVerdict Deduction::verdict() const {
  StateVerdict v;
  v.target = flow_.four_tuple.dst_ip;
  v.port = flow_.four_tuple.dst_port;
  v.source_port = flow_.four_tuple.src_port;
  v.evidence = evidence_;
  v.refined_state = label_refined(evidence_);
  v.outcome = outcome_of(v.refined_state);
  v.synack_count = synack_count_;
  v.synack_ttl = flow_.synack_ttl;
  v.data_transmissions = data_sent_;
  for (const auto& e : evidence_) {
    if (e.direction == EvidenceDirection::kIn) v.final_window = e.window;
  }
  return v;
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<StateVerdict> deduce_all(Transport& transport, Ipv4 source,
                                     std::span<const DeduceTarget> targets,
                                     const DeduceConfig& config, std::size_t max_in_flight) {
  config.validate();
  if (max_in_flight == 0) max_in_flight = 1;
  std::mt19937_64 rng(mix(config.seed));
  std::uniform_int_distribution<int> port_dist(32768, 65535);

  std::vector<std::optional<StateVerdict>> results(targets.size());
  FlowTable<std::pair<std::size_t, Deduction>> flows;
  std::size_t next = 0;

  auto send_all = [&](const std::vector<TcpSegment>& segs) {
    for (const auto& s : segs) send_segment(transport, s);
  };
  auto finish = [&](const FlowKey& key) {
    auto entry = flows.extract(key);
    results[entry->first] = entry->second.verdict();
  };

  while (next < targets.size() || !flows.empty()) {
    while (next < targets.size() && flows.size() < max_in_flight) {
      FlowKey key{source, 0, targets[next].ip, targets[next].port};
      do {
        key.src_port = static_cast<std::uint16_t>(port_dist(rng));
      } while (flows.contains(key));
      const auto isn = static_cast<std::uint32_t>(rng());
      auto& [index, d] = flows.insert(key, {next, Deduction(key, isn, config)});
      send_all(d.start(transport.now()));
      ++next;
    }

    Nanos earliest = Nanos::max();
    for (auto& [key, entry] : flows) earliest = std::min(earliest, entry.second.deadline());
    if (auto seg = receive_segment(transport, earliest)) {
      if (auto* entry = flows.route(*seg)) {
        send_all(entry->second.on_segment(*seg, transport.now()));
        if (entry->second.done()) finish(inbound_key(*seg));
      }
      continue;
    }
    const Nanos now = transport.now();
    std::vector<FlowKey> finished;
    for (auto& [key, entry] : flows) {
      if (entry.second.deadline() <= now) {
        send_all(entry.second.on_deadline(now));
        if (entry.second.done()) finished.push_back(key);
      }
    }
    for (const auto& key : finished) finish(key);
  }

  std::vector<StateVerdict> out;
  out.reserve(results.size());
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

StateVerdict deduce(Transport& transport, Ipv4 source, const DeduceTarget& target,
                    const DeduceConfig& config) {
  return deduce_all(transport, source, std::span<const DeduceTarget>(&target, 1), config).front();
}

}  // namespace svcid
