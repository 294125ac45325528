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

#include "svcid/engine.hpp"

#include <algorithm>
#include <map>
#include <random>

#include "svcid/error.hpp"

namespace svcid {

const char* to_string(EnginePhase phase) {
  switch (phase) {
    case EnginePhase::kAwaitSynAck: return "AwaitSynAck";
    case EnginePhase::kSynRetransmitted: return "SynRetransmitted";
    case EnginePhase::kDataSent: return "DataSent";
    case EnginePhase::kRetransmitted: return "Retransmitted";
    case EnginePhase::kAwaitBanner: return "AwaitBanner";
  }
  return "?";
}

const char* to_string(EngineAction::Kind kind) {
  using K = EngineAction::Kind;
  switch (kind) {
    case K::kSendAckWithData: return "SendAckWithData";
    case K::kRetransmitSyn: return "RetransmitSyn";
    case K::kRetransmitWithPush: return "RetransmitWithPush";
    case K::kFingerprint: return "Fingerprint";
    case K::kCloseThenNextHandshake: return "CloseThenNextHandshake";
    case K::kFinish: return "Finish";
    case K::kAbort: return "Abort";
    case K::kIgnore: return "Ignore";
  }
  return "?";
}

const char* to_string(AbortReason reason) {
  switch (reason) {
    case AbortReason::kZeroWindow: return "ZeroWindow";
    case AbortReason::kNoAck: return "NoAck";
    case AbortReason::kNoSynAck: return "NoSynAck";
  }
  return "?";
}

EngineAction next_action(EnginePhase phase, const EngineEvent& event, bool plan_remains) {
  using A = EngineAction::Kind;
  using E = EngineEvent::Kind;
  const EngineAction move_on{plan_remains ? A::kCloseThenNextHandshake : A::kFinish};
  auto abort = [](AbortReason r) { return EngineAction{A::kAbort, r}; };
  switch (phase) {
    case EnginePhase::kAwaitSynAck:
    case EnginePhase::kSynRetransmitted:
      switch (event.kind) {
        case E::kSynAckSeen:
          return event.window == 0 ? abort(AbortReason::kZeroWindow)
                                   : EngineAction{A::kSendAckWithData};
        case E::kRstOrFin: return abort(AbortReason::kNoSynAck);
        case E::kTimeout:
          return phase == EnginePhase::kAwaitSynAck ? EngineAction{A::kRetransmitSyn}
                                                    : abort(AbortReason::kNoSynAck);
        default: break;
      }
      break;
    case EnginePhase::kDataSent:
    case EnginePhase::kRetransmitted:
      switch (event.kind) {
        case E::kSynAckSeen: return EngineAction{A::kIgnore};
        case E::kDataArrived: return EngineAction{A::kFingerprint};
        case E::kAckArrived: return move_on;
        case E::kRstOrFin: return event.ack_covers_payload ? move_on : abort(AbortReason::kNoAck);
        case E::kTimeout:
          return phase == EnginePhase::kDataSent ? EngineAction{A::kRetransmitWithPush}
                                                 : abort(AbortReason::kNoAck);
      }
      break;
    case EnginePhase::kAwaitBanner:
      switch (event.kind) {
        case E::kSynAckSeen: return EngineAction{A::kIgnore};
        case E::kDataArrived: return EngineAction{A::kFingerprint};
        case E::kTimeout: return move_on;
        case E::kRstOrFin: return abort(AbortReason::kNoAck);
        default: break;
      }
      break;
  }
  throw Error(ErrorCode::kProtocolViolation,
              std::string("no transition from ") + to_string(phase) + " on event " +
                  std::to_string(static_cast<int>(event.kind)));
}

// ---------------------------------------------------------------------------

const std::vector<HandshakeRef>& unassigned_plan() {
  static const std::vector<HandshakeRef> kPlan = {
      {"wait", std::nullopt}, {"http", std::nullopt}, {"tls", std::nullopt},
      {"dns", std::nullopt},  {"pptp", std::nullopt}};
  return kPlan;
}

std::vector<HandshakeRef> default_plan(std::uint16_t port) {
  std::vector<HandshakeRef> plan;
  if (auto expected = expected_protocol(port)) plan.push_back({*expected, std::nullopt});
  for (const auto& ref : unassigned_plan()) {
    if (std::find(plan.begin(), plan.end(), ref) == plan.end()) plan.push_back(ref);
  }
  return plan;
}

void check_plan(std::span<const HandshakeRef> plan, const Registry& registry) {
  if (plan.empty()) throw Error(ErrorCode::kInvalidArgument, "handshake plan is empty");
  for (const auto& ref : plan) (void)registry.payload(ref);
}

Nanos retry_delay_policy(const RetryContext& context) {
  const Nanos nominal = context.strict ? std::chrono::seconds(120) : std::chrono::seconds(5);
  return scaled(nominal, context.timescale);
}

void EngineConfig::validate() const {
  if (!(timescale > 0.0)) throw Error(ErrorCode::kInvalidArgument, "timescale must be > 0");
  if (data_timeout <= Nanos{0} || banner_wait <= Nanos{0} || syn_timeout <= Nanos{0}) {
    throw Error(ErrorCode::kInvalidArgument, "engine timeouts must be > 0");
  }
  if (max_in_flight == 0) throw Error(ErrorCode::kInvalidArgument, "max_in_flight must be >= 1");
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Attempt {
  HandshakeRef ref;
  Bytes payload;
  bool wait_style = false;
  FlowState flow;
  std::uint32_t isn = 0;
  EnginePhase phase = EnginePhase::kAwaitSynAck;
  Nanos deadline{};
  bool synacked = false;
  bool acked = false;
  bool peer_closed = false;
  bool answered = false;  // data came back
  std::uint32_t data_end = 0;
  int synack_count = 0;
  Bytes received;
  std::vector<EvidenceEntry> evidence;
};

struct Route {
  std::size_t job = 0;
  int which = -1;  // -1: main flow, otherwise wildcard probe index
};

}  // namespace

struct Engine::Impl {
  struct Job {
    std::size_t id = 0;
    ScanTask task;
    std::vector<HandshakeRef> plan;
    std::size_t next_index = 0;
    Ipv4 source;
    std::optional<Attempt> attempt;
    bool main_done = false;
    std::vector<PortAckProbe> wildcard;
    WildcardConfig wildcard_config;
    ScanRecord record;
    Nanos started{};
    bool any_ack = false;
    bool zero_window = false;
  };

  Impl(Transport& t, const Registry& r, EngineConfig c)
      : transport(t), registry(r), config(std::move(c)), rng(mix(config.seed)) {
    config.validate();
  }

  Transport& transport;
  const Registry& registry;
  EngineConfig config;
  std::mt19937_64 rng;
  std::map<std::size_t, Job> jobs;
  FlowTable<Route> routes;
  std::size_t next_job = 0;
  std::uint64_t next_seq = 0;

  Nanos scaled_(Nanos d) const { return scaled(d, config.timescale); }

  FlowKey fresh_key(Ipv4 src, Ipv4 dst, std::uint16_t dport) {
    std::uniform_int_distribution<int> dist(32768, 65535);
    FlowKey key{src, 0, dst, dport};
    do {
      key.src_port = static_cast<std::uint16_t>(dist(rng));
    } while (routes.contains(key));
    return key;
  }

  void send(Job& job, const TcpSegment& seg) {
    try {
      send_segment(transport, seg);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kTransport) throw;
      if (!job.record.error) job.record.error = e.what();
      return;
    }
    ++job.record.packets_sent;
    if (!seg.payload.empty()) ++job.record.data_segments_sent;
  }

  void record_evidence(Attempt& a, const TcpSegment& seg, EvidenceDirection dir, bool acks_probe) {
    EvidenceEntry e;
    e.timestamp = transport.now();
    e.direction = dir;
    e.flags = seg.flags;
    e.seq = seg.seq;
    e.ack = seg.ack;
    e.window = seg.window;
    e.ttl = seg.ttl;
    e.payload_len = seg.payload.size();
    e.acks_probe = acks_probe;
    a.evidence.push_back(e);
  }

  void send_on_attempt(Job& job, Attempt& a, const TcpSegment& seg) {
    a.flow.on_sent(seg);
    record_evidence(a, seg, EvidenceDirection::kOut, false);
    send(job, seg);
  }

  void start_job(ScanTask task) {
    if (task.wildcard_probe_count < 0) {
      throw Error(ErrorCode::kInvalidArgument, "wildcard probe count must be >= 0");
    }
    Job& job = jobs[next_job];
    job.id = next_job++;
    job.started = transport.now();
    job.plan = task.handshake_plan.empty() ? default_plan(task.port) : task.handshake_plan;
    check_plan(job.plan, registry);
    job.source = task.adopted_synack ? task.adopted_synack->dst_ip : config.source;
    job.record.ip = task.ip;
    job.record.port = task.port;
    job.task = std::move(task);

    if (job.task.wildcard_probe_count > 0) {
      job.wildcard_config = config.wildcard;
      job.wildcard_config.ports = job.task.wildcard_probe_count;
      job.wildcard_config.timescale = config.timescale;
      job.wildcard_config.seed = mix(config.seed ^ (std::uint64_t{job.task.ip.value()} << 16) ^
                                     job.task.port);
      const auto ports =
          pick_ephemeral_ports(job.task.wildcard_probe_count, job.task.port, job.wildcard_config.seed);
      for (std::size_t i = 0; i < ports.size(); ++i) {
        const FlowKey key = fresh_key(job.source, job.task.ip, ports[i]);
        job.wildcard.emplace_back(key, static_cast<std::uint32_t>(rng()), job.wildcard_config);
        routes.insert(key, Route{job.id, static_cast<int>(i)});
        job.record.flows.push_back(key);
        for (const auto& s : job.wildcard.back().start(transport.now())) send(job, s);
      }
    }
    start_handshake(job);
  }

  void start_handshake(Job& job) {
    Attempt a;
    a.ref = job.plan[job.next_index++];
    a.payload = registry.payload(a.ref);
    a.wait_style = a.payload.empty();
    ++job.record.handshakes_attempted;

    if (job.record.handshakes_attempted == 1 && job.task.adopted_synack) {
      const TcpSegment& sa = *job.task.adopted_synack;
      a.flow = adopt(sa);
      a.isn = sa.ack - 1;
      ++job.record.packets_received;
      routes.insert(a.flow.four_tuple, Route{job.id, -1});
      job.record.flows.push_back(a.flow.four_tuple);
      record_evidence(a, sa, EvidenceDirection::kIn, false);
      a.synacked = true;
      a.synack_count = 1;
      job.attempt = std::move(a);
      apply(job, next_action(EnginePhase::kAwaitSynAck, EngineEvent::syn_ack(sa.window),
                             job.next_index < job.plan.size()));
      return;
    }

    const FlowKey key = fresh_key(job.source, job.task.ip, job.task.port);
    a.isn = static_cast<std::uint32_t>(rng());
    a.flow = originate(key, a.isn);
    routes.insert(key, Route{job.id, -1});
    job.record.flows.push_back(key);
    TcpSegment syn = a.flow.make_segment(TcpFlags{TcpFlags::kSyn});
    syn.mss = 1460;
    a.phase = EnginePhase::kAwaitSynAck;
    a.deadline = transport.now() + scaled_(config.syn_timeout);
    job.attempt = std::move(a);
    send_on_attempt(job, *job.attempt, syn);
  }

  RefinedState attempt_state(const Attempt& a) const {
    if (a.answered) return RefinedState::kAcknowledgesData;
    return label_refined(a.evidence);
  }

  void end_handshake(Job& job, bool close_with_rst) {
    Attempt& a = *job.attempt;
    if (close_with_rst && a.synacked && !a.peer_closed) {
      FlowState snapshot = a.flow;
      TcpSegment rst = snapshot.make_segment(TcpFlags{TcpFlags::kRst});
      send_on_attempt(job, a, rst);
    }
    job.record.last_attempt_state = attempt_state(a);
    job.record.synack_count = a.synack_count;
    job.record.ttl_mismatch = ttl_mismatch(std::span<const EvidenceEntry>(a.evidence));
    if (a.acked || a.answered) job.any_ack = true;
    routes.extract(a.flow.four_tuple);
    job.attempt.reset();
  }

  void next_or_done(Job& job) {
    if (job.next_index < job.plan.size()) {
      start_handshake(job);
    } else {
      job.main_done = true;
    }
  }

  void apply(Job& job, const EngineAction& action) {
    using A = EngineAction::Kind;
    Attempt& a = *job.attempt;
    const Nanos now = transport.now();
    switch (action.kind) {
      case A::kIgnore: return;
      case A::kSendAckWithData: {
        a.synacked = true;
        if (a.wait_style) {
          send_on_attempt(job, a, a.flow.make_segment(TcpFlags{TcpFlags::kAck}));
          a.phase = EnginePhase::kAwaitBanner;
          a.deadline = now + scaled_(config.banner_wait);
        } else {
          TcpSegment data = a.flow.make_segment(TcpFlags{TcpFlags::kAck}, a.payload);
          a.data_end = data.seq + static_cast<std::uint32_t>(data.payload.size());
          send_on_attempt(job, a, data);
          a.phase = EnginePhase::kDataSent;
          a.deadline = now + scaled_(config.data_timeout);
        }
        return;
      }
      case A::kRetransmitSyn: {
        FlowState snapshot = a.flow;
        snapshot.our_next_seq = a.isn;
        TcpSegment syn = snapshot.make_segment(TcpFlags{TcpFlags::kSyn});
        syn.mss = 1460;
        send_on_attempt(job, a, syn);
        a.phase = EnginePhase::kSynRetransmitted;
        a.deadline = now + 2 * scaled_(config.syn_timeout);
        return;
      }
      case A::kRetransmitWithPush: {
        FlowState snapshot = a.flow;
        snapshot.our_next_seq = a.data_end - static_cast<std::uint32_t>(a.payload.size());
        send_on_attempt(job, a, snapshot.make_segment(TcpFlags{TcpFlags::kAck | TcpFlags::kPsh}, a.payload));
        a.phase = EnginePhase::kRetransmitted;
        a.deadline = now + scaled_(config.data_timeout);
        return;
      }
      case A::kFingerprint: {
        a.answered = true;
        std::optional<std::string_view> expected;
        std::optional<std::string> port_expected;
        if (a.ref.protocol != "wait" && a.ref.protocol != "agnostic") {
          expected = a.ref.protocol;
        } else if ((port_expected = expected_protocol(job.task.port))) {
          expected = *port_expected;
        }
        const FingerprintResult fp = registry.match(a.received, expected);
        const bool first_hit = fp.matched() && !job.record.identified_protocol;
        if (first_hit) {
          job.record.identified_protocol = fp.matched_protocol;
          job.record.matched_by = fp.matched_by;
        }
        end_handshake(job, true);
        if (fp.matched() && !config.naive) {
          job.main_done = true;
        } else {
          next_or_done(job);
        }
        return;
      }
      case A::kCloseThenNextHandshake:
        end_handshake(job, true);
        start_handshake(job);
        return;
      case A::kFinish:
        end_handshake(job, true);
        job.main_done = true;
        return;
      case A::kAbort:
        if (action.reason == AbortReason::kZeroWindow) {
          a.synacked = true;
          job.zero_window = true;
        }
        end_handshake(job, true);
        if (config.naive) {
          next_or_done(job);
        } else {
          job.main_done = true;
        }
        return;
    }
  }

  void on_main_segment(Job& job, const TcpSegment& seg) {
    Attempt& a = *job.attempt;
    a.flow.on_received(seg);
    ++job.record.packets_received;
    const bool data_phase = a.phase == EnginePhase::kDataSent || a.phase == EnginePhase::kRetransmitted;
    const bool covers = data_phase && seg.flags.ack() && seq_geq(seg.ack, a.data_end);
    record_evidence(a, seg, EvidenceDirection::kIn, covers);
    const bool plan_remains = job.next_index < job.plan.size();

    std::optional<EngineEvent> event;
    if (a.phase == EnginePhase::kAwaitSynAck || a.phase == EnginePhase::kSynRetransmitted) {
      if (seg.flags.rst() || seg.flags.fin()) {
        a.peer_closed = true;
        event = EngineEvent::rst_or_fin(false);
      } else if (seg.flags.synack() && seg.ack == a.isn + 1) {
        ++a.synack_count;
        a.flow.their_next_seq = seg.seq + 1;
        event = EngineEvent::syn_ack(seg.window);
      }
    } else if (seg.flags.synack()) {
      ++a.synack_count;
      event = EngineEvent::syn_ack(seg.window);
    } else if (!seg.payload.empty()) {
      a.received.insert(a.received.end(), seg.payload.begin(), seg.payload.end());
      if (covers) a.acked = true;
      if (seg.flags.rst() || seg.flags.fin()) a.peer_closed = true;
      event = EngineEvent::data();
    } else if (seg.flags.rst() || seg.flags.fin()) {
      a.peer_closed = true;
      if (covers) a.acked = true;
      event = EngineEvent::rst_or_fin(covers);
    } else if (covers) {
      // Wait for a response until the deadline, then report AckArrived.
      a.acked = true;
    }
    if (event) apply(job, next_action(a.phase, *event, plan_remains));
  }

  void on_main_deadline(Job& job) {
    Attempt& a = *job.attempt;
    const bool data_phase = a.phase == EnginePhase::kDataSent || a.phase == EnginePhase::kRetransmitted;
    const EngineEvent event = data_phase && a.acked ? EngineEvent::ack() : EngineEvent::timeout();
    apply(job, next_action(a.phase, event, job.next_index < job.plan.size()));
  }

  bool job_done(const Job& job) const {
    if (!job.main_done) return false;
    return std::all_of(job.wildcard.begin(), job.wildcard.end(),
                       [](const PortAckProbe& p) { return p.done(); });
  }

  void complete(std::size_t id, const RecordSink& sink) {
    auto node = jobs.extract(id);
    Job& job = node.mapped();
    for (auto& p : job.wildcard) routes.extract(p.key());
    ScanRecord& r = job.record;
    r.wall_time = transport.now() - job.started;
    r.refined_state = job.any_ack ? RefinedState::kAcknowledgesData : r.last_attempt_state;
    r.outcome = outcome_of(r.refined_state);

    int acked = 0;
    for (const auto& p : job.wildcard) acked += p.acked() ? 1 : 0;
    r.wildcard_acked_ports = acked;
    BehaviorLabel label;
    label.supporting_probes = 1;
    if (!job.wildcard.empty() && wildcard_verdict(acked, job.wildcard_config)) {
      label.kind = BehaviorKind::kWildcardAcker;
      label.supporting_probes = static_cast<int>(job.wildcard.size());
      r.identified_protocol.reset();
      r.matched_by.reset();
    } else if (job.zero_window) {
      label.kind = BehaviorKind::kZeroWindowProtection;
    } else if (!job.any_ack && r.last_attempt_state == RefinedState::kRstAfterHandshake) {
      label.kind = BehaviorKind::kRstAfterHandshake;
    } else if (!job.any_ack && r.last_attempt_state == RefinedState::kSynAckRetransmitLoop) {
      label.kind = BehaviorKind::kMidHandshakeDrop;
    }
    r.behavior = label;
    r.seq = next_seq++;
    sink(std::move(r));
  }

  void run(const TaskSource& tasks, const RecordSink& sink) {
    bool exhausted = false;
    for (;;) {
      while (!exhausted && jobs.size() < config.max_in_flight) {
        auto task = tasks();
        if (!task) {
          exhausted = true;
          break;
        }
        const std::size_t id = next_job;
        start_job(std::move(*task));
        if (job_done(jobs.at(id))) complete(id, sink);
      }
      if (jobs.empty()) return;

      Nanos earliest = Nanos::max();
      for (const auto& [id, job] : jobs) {
        if (job.attempt) earliest = std::min(earliest, job.attempt->deadline);
        for (const auto& p : job.wildcard) {
          if (!p.done()) earliest = std::min(earliest, p.deadline());
        }
      }

      if (auto seg = receive_segment(transport, earliest)) {
        const Route* route = routes.route(*seg);
        if (!route) continue;
        const std::size_t id = route->job;
        Job& job = jobs.at(id);
        if (route->which < 0) {
          if (job.attempt) on_main_segment(job, *seg);
        } else {
          auto& probe = job.wildcard[static_cast<std::size_t>(route->which)];
          ++job.record.packets_received;
          for (const auto& s : probe.on_segment(*seg, transport.now())) send(job, s);
        }
        if (job_done(job)) complete(id, sink);
        continue;
      }

      const Nanos now = transport.now();
      std::vector<std::size_t> finished;
      for (auto& [id, job] : jobs) {
        if (job.attempt && job.attempt->deadline <= now) on_main_deadline(job);
        for (auto& p : job.wildcard) {
          if (!p.done() && p.deadline() <= now) {
            for (const auto& s : p.on_deadline(now)) send(job, s);
          }
        }
        if (job_done(job)) finished.push_back(id);
      }
      for (auto id : finished) complete(id, sink);
    }
  }
};

Engine::Engine(Transport& transport, const Registry& registry, EngineConfig config)
    : impl_(std::make_unique<Impl>(transport, registry, std::move(config))) {}

Engine::~Engine() = default;

void Engine::run(const TaskSource& tasks, const RecordSink& sink) { impl_->run(tasks, sink); }

std::vector<ScanRecord> Engine::run(std::span<const ScanTask> tasks) {
  std::vector<ScanRecord> out;
  std::size_t i = 0;
  run([&]() -> std::optional<ScanTask> {
        if (i >= tasks.size()) return std::nullopt;
        return tasks[i++];
      },
      [&](ScanRecord r) { out.push_back(std::move(r)); });
  return out;
}

}  // namespace svcid
