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

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "svcid/analysis.hpp"
#include "svcid/error.hpp"
#include "svcid/netsim.hpp"
#include "svcid/pipeline.hpp"
#include "svcid/raw_socket.hpp"
#include "svcid/scenario.hpp"
#include "svcid_cli/cli.hpp"
#include "svcid_cli/records.hpp"

namespace svcid::cli {

namespace {

constexpr const char* kDefaultUsedSource = "192.0.2.1";
constexpr const char* kDefaultFreshSource = "192.0.2.2";
constexpr std::uint16_t kDefaultSimPort = 80;

// Raised when a result line cannot be written.
struct OutputFailure {};

class Sink {
 public:
  Sink(std::ostream& fallback, const std::string& path) : out_(&fallback) {
    if (path != "-") {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw Error(ErrorCode::kInvalidArgument, "cannot open output '" + path + "'");
      out_ = &file_;
    }
  }

  void line(const std::string& text) {
    *out_ << text << '\n';
    out_->flush();
    if (!*out_) throw OutputFailure{};
  }

  std::ostream& stream() { return *out_; }

  void check() {
    out_->flush();
    if (!*out_) throw OutputFailure{};
  }

 private:
  std::ofstream file_;
  std::ostream* out_;
};

// Opens a positional input; "-" is stdin.
class Input {
 public:
  explicit Input(const std::string& path) {
    if (path == "-") {
      in_ = &std::cin;
      return;
    }
    file_.open(path, std::ios::binary);
    if (!file_) throw Error(ErrorCode::kInvalidArgument, "cannot open input '" + path + "'");
    in_ = &file_;
  }
  std::istream& get() { return *in_; }

 private:
  std::ifstream file_;
  std::istream* in_;
};

Registry build_registry(const Config& c) {
  Registry registry = seed_registry();
  if (c.signatures) {
    Input in(*c.signatures);
    load_signatures(in.get(), registry, true);
  }
  return registry;
}

struct Network {
  std::unique_ptr<Transport> transport;
  sim::Simulator* simulator = nullptr;
  double timescale = 1.0;
};

Network open_network(const Config& c, bool needs_live_source) {
  Network net;
  if (c.scenario) {
    Input in(*c.scenario);
    sim::ScenarioFile file = sim::load_scenario(in.get());
    if (c.timescale) file.options.timescale = *c.timescale;
    if (c.strict_checksums) file.options.strict_checksums = true;
    auto registry = std::make_shared<const Registry>(seed_registry());
    auto simulator = std::make_unique<sim::Simulator>(file.endpoints, file.conditions,
                                                      file.options, registry);
    net.simulator = simulator.get();
    net.timescale = file.options.timescale;
    net.transport = std::move(simulator);
  } else {
    if (needs_live_source && !c.source_ip) {
      throw Error(ErrorCode::kInvalidArgument, "live mode needs --source-ip");
    }
    net.transport = std::make_unique<RawSocketTransport>(Ipv4::parse(*c.source_ip),
                                                         c.strict_checksums);
    net.timescale = c.timescale.value_or(1.0);
  }
  return net;
}

EngineConfig engine_config(const Config& c, Ipv4 source, double timescale) {
  EngineConfig ec;
  ec.source = source;
  ec.data_timeout = seconds(c.timeout_s);
  ec.banner_wait = seconds(c.banner_wait_s);
  ec.timescale = timescale;
  ec.max_in_flight = c.max_in_flight;
  ec.seed = c.seed;
  ec.naive = c.naive;
  ec.wildcard.timescale = timescale;
  ec.wildcard.seed = c.seed ^ 0x5bd1e995ULL;
  return ec;
}

std::vector<HandshakeRef> plan_from(const Config& c, const Registry& registry) {
  if (!c.handshakes) return {};
  auto plan = parse_plan(*c.handshakes);
  check_plan(plan, registry);
  return plan;
}

int exit_for(const std::vector<ScanRecord>& records) {
  for (const auto& r : records) {
    if (r.error) return kExitRuntime;
  }
  return kExitOk;
}

void write_discrepancy_table(Sink& sink, const std::vector<DiscrepancyRow>& rows) {
  std::vector<std::vector<std::string>> text;
  for (const auto& r : rows) {
    text.push_back({std::to_string(r.port), std::to_string(r.synack_count),
                    std::to_string(r.ack_data_count), std::to_string(r.l7_expected_count),
                    std::to_string(r.unexpected_count)});
  }
  write_table(sink.stream(), {"port", "synack", "ack_data", "l7_expected", "unexpected"}, text);
  sink.check();
}

// Table mode: one row per record, then the per-port L4/L7 aggregate.
int emit_records(const std::vector<ScanRecord>& records, const Config& c, Sink& sink) {
  if (c.format == Format::kTable) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : records) rows.push_back(record_table_row(r));
    write_table(sink.stream(), record_table_header(), rows);
    sink.stream() << '\n';
    write_discrepancy_table(sink, l4_l7_discrepancy(records));
  } else {
    for (const auto& r : records) sink.line(record_to_jsonl(r));
  }
  return exit_for(records);
}

int run_scan(const Config& c, Sink& sink) {
  const Registry registry = build_registry(c);
  const auto plan = plan_from(c, registry);

  Input in(c.input);
  std::vector<ScanTask> tasks;
  if (c.adopt) {
    for (auto& synack : read_adopt_csv(in.get())) {
      ScanTask task{};
      task.ip = synack.src_ip;
      task.port = synack.src_port;
      task.adopted_synack = std::move(synack);
      tasks.push_back(std::move(task));
    }
  } else {
    for (const auto& t : read_targets(in.get(), c.port)) {
      ScanTask task{};
      task.ip = t.ip;
      task.port = t.port;
      tasks.push_back(std::move(task));
    }
  }
  for (auto& task : tasks) {
    task.handshake_plan = plan.empty() ? default_plan(task.port) : plan;
    task.wildcard_probe_count = c.wildcard_ports;
  }

  if (c.plan_only) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& task : tasks) {
      Json j;
      j["ip"] = task.ip.to_string();
      j["port"] = task.port;
      Json names = Json::array();
      std::string joined;
      for (const auto& ref : task.handshake_plan) {
        names.push_back(ref.to_string());
        joined += (joined.empty() ? "" : ",") + ref.to_string();
      }
      j["plan"] = std::move(names);
      if (c.format == Format::kTable) {
        rows.push_back({task.ip.to_string(), std::to_string(task.port), joined});
      } else {
        sink.line(j.dump());
      }
    }
    if (c.format == Format::kTable) {
      write_table(sink.stream(), {"ip", "port", "plan"}, rows);
      sink.check();
    }
    return kExitOk;
  }

  Network net = open_network(c, true);
  const Ipv4 source = Ipv4::parse(c.source_ip.value_or(kDefaultUsedSource));
  const double timescale = c.timescale.value_or(net.timescale);

  if (c.fresh_source_ip) {
    PipelineConfig pc;
    pc.used_source = source;
    pc.fresh_source = Ipv4::parse(*c.fresh_source_ip);
    pc.engine = engine_config(c, source, timescale);
    pc.probe.timescale = timescale;
    pc.probe.seed = c.seed;
    pc.wildcard_probe_count = c.wildcard_ports;
    pc.plan = plan;
    std::vector<PipelineTarget> targets;
    for (const auto& t : tasks) targets.push_back({t.ip, t.port});
    return emit_records(run_pipeline(*net.transport, registry, targets, pc), c, sink);
  }

  // Records stream out as targets finish.
  Engine engine(*net.transport, registry, engine_config(c, source, timescale));
  std::size_t next = 0;
  bool failed = false;
  std::vector<ScanRecord> table;
  engine.run(
      [&]() -> std::optional<ScanTask> {
        if (next >= tasks.size()) return std::nullopt;
        return tasks[next++];
      },
      [&](ScanRecord record) {
        if (record.error) failed = true;
        if (c.format == Format::kTable) {
          table.push_back(std::move(record));
        } else {
          sink.line(record_to_jsonl(record));
        }
      });
  if (c.format == Format::kTable) emit_records(table, c, sink);
  return failed ? kExitRuntime : kExitOk;
}

int run_deduce(const Config& c, Sink& sink) {
  Input in(c.input);
  std::vector<DeduceTarget> targets;
  for (const auto& t : read_targets(in.get(), c.port)) targets.push_back({t.ip, t.port});

  Network net = open_network(c, true);
  DeduceConfig dc;
  dc.total_timeout = seconds(c.total_timeout_s);
  dc.retransmit_budget = c.retransmit_budget;
  dc.timescale = c.timescale.value_or(net.timescale);
  dc.seed = c.seed;
  dc.validate();
  const Ipv4 source = Ipv4::parse(c.source_ip.value_or(kDefaultUsedSource));
  const auto verdicts = deduce_all(*net.transport, source, targets, dc);

  if (c.format == Format::kTable) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& v : verdicts) {
      rows.push_back({v.target.to_string(), std::to_string(v.port), to_string(v.outcome),
                      to_string(v.refined_state), std::to_string(v.synack_count),
                      std::to_string(v.final_window), std::to_string(v.synack_ttl)});
    }
    write_table(sink.stream(),
                {"ip", "port", "outcome", "refined_state", "synacks", "window", "ttl"}, rows);
    sink.check();
  } else {
    for (const auto& v : verdicts) sink.line(verdict_to_json(v, c.evidence).dump());
  }
  return kExitOk;
}

int run_classify(const Config& c, Sink& sink) {
  Input in(c.input);
  std::vector<StateVerdict> verdicts;
  for (const auto& j : read_jsonl(in.get())) verdicts.push_back(verdict_from_json(j));

  std::map<std::pair<Ipv4, std::uint16_t>, TwoSourceProbeResult> probes;
  if (c.probes) {
    Input pin(*c.probes);
    for (const auto& j : read_jsonl(pin.get())) {
      auto response = [&](const char* key) {
        if (!j.contains(key) || !j[key].is_string()) {
          throw Error(ErrorCode::kParse, std::string("probe line lacks '") + key + "'");
        }
        auto r = parse_probe_response(j[key].get<std::string>());
        if (!r) throw Error(ErrorCode::kParse, "unknown probe response " + j[key].dump());
        return *r;
      };
      const unsigned port = j.value("port", 0u);
      if (port == 0 || port > 65535) throw Error(ErrorCode::kParse, "probe line has a bad port");
      probes[{Ipv4::parse(j.value("ip", "")), static_cast<std::uint16_t>(port)}] = {
          response("used"), response("fresh")};
    }
  }

  std::vector<BehaviorLabel> labels;
  std::vector<Ipv4> blocking;
  for (const auto& v : verdicts) {
    BehaviorLabel label = behavior_from_verdict(v);
    auto it = probes.find({v.target, v.port});
    if (label.kind == BehaviorKind::kNoDefenseObserved && it != probes.end()) {
      if (v.refined_state == RefinedState::kNeverSynAcked) {
        label = classify_shunning(it->second);
      } else if (v.refined_state == RefinedState::kEstablishedNoAck) {
        label = classify_dynamic_block(it->second);
      }
    }
    if ((label.kind == BehaviorKind::kConnectionShunning ||
         label.kind == BehaviorKind::kDynamicBlockAfterHandshake) &&
        std::find(blocking.begin(), blocking.end(), v.target) == blocking.end()) {
      blocking.push_back(v.target);
    }
    labels.push_back(label);
  }
  const auto prefixes = block_prefixes(blocking);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = prefixes.find(verdicts[i].target);
    if (it != prefixes.end()) {
      labels[i].granularity_hint = it->second == 32 ? Granularity::kHost : Granularity::kNetwork;
    }
  }

  if (c.format == Format::kTable) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      rows.push_back({verdicts[i].target.to_string(), std::to_string(verdicts[i].port),
                      to_string(labels[i].kind), to_string(labels[i].granularity_hint)});
    }
    write_table(sink.stream(), {"ip", "port", "behavior", "granularity"}, rows);
    sink.check();
  } else {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      Json j;
      j["ip"] = verdicts[i].target.to_string();
      j["port"] = verdicts[i].port;
      j["behavior"] = to_string(labels[i].kind);
      j["granularity_hint"] = to_string(labels[i].granularity_hint);
      j["supporting_probes"] = labels[i].supporting_probes;
      sink.line(j.dump());
    }
  }
  return kExitOk;
}

int run_order(const Config& c, Sink& sink) {
  Input in(c.input);
  const ResponseMatrix matrix = parse_matrix_csv(in.get());
  const auto steps = greedy_order(matrix, c.k.value_or(matrix.handshakes.size()));
  double cumulative = 0.0;
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    cumulative += steps[i].marginal;
    if (c.format == Format::kTable) {
      char m[32];
      char cum[32];
      std::snprintf(m, sizeof m, "%.4f", steps[i].marginal);
      std::snprintf(cum, sizeof cum, "%.4f", cumulative);
      rows.push_back({std::to_string(i + 1), steps[i].handshake,
                      std::to_string(steps[i].newly_covered), m, cum});
    } else {
      Json j;
      j["rank"] = i + 1;
      j["handshake"] = steps[i].handshake;
      j["newly_covered"] = steps[i].newly_covered;
      j["marginal"] = steps[i].marginal;
      j["cumulative"] = cumulative;
      sink.line(j.dump());
    }
  }
  if (c.format == Format::kTable) {
    write_table(sink.stream(), {"rank", "handshake", "new", "marginal", "cumulative"}, rows);
    sink.check();
  }
  return kExitOk;
}

std::vector<PortCount> read_port_counts(std::istream& in) {
  std::vector<PortCount> counts;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line[0] == '#' || line.starts_with("port")) continue;
    std::istringstream row(line);
    std::string port;
    std::string count;
    std::string expected;
    std::getline(row, port, ',');
    std::getline(row, count, ',');
    std::getline(row, expected, ',');
    try {
      PortCount pc;
      const unsigned long p = std::stoul(port);
      if (p > 65535) throw std::out_of_range("port");
      pc.port = static_cast<std::uint16_t>(p);
      pc.count = std::stod(count);
      if (!expected.empty()) pc.has_expected_service = std::stoi(expected) != 0;
      counts.push_back(pc);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(n) + ": expected port,count");
    }
  }
  return counts;
}

int run_stats(const Config& c, Sink& sink) {
  if (c.popularity) {
    Input in(*c.popularity);
    const auto counts = read_port_counts(in.get());
    const auto split = grubbs_split(counts, c.confidence);
    std::set<std::uint16_t> popular(split.popular.begin(), split.popular.end());
    std::vector<std::vector<std::string>> rows;
    for (const auto& pc : counts) {
      const bool is_popular = popular.contains(pc.port);
      if (c.format == Format::kTable) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.0f", pc.count);
        rows.push_back({std::to_string(pc.port), buf, is_popular ? "popular" : "unpopular"});
      } else {
        Json j;
        j["port"] = pc.port;
        j["count"] = pc.count;
        j["popular"] = is_popular;
        sink.line(j.dump());
      }
    }
    if (c.format == Format::kTable) {
      write_table(sink.stream(), {"port", "count", "class"}, rows);
      sink.check();
    }
    return kExitOk;
  }

  Input in(c.input);
  std::vector<ScanRecord> records;
  for (const auto& j : read_jsonl(in.get())) records.push_back(record_from_json(j));
  const auto rows = l4_l7_discrepancy(records);
  if (c.format == Format::kTable) {
    write_discrepancy_table(sink, rows);
  } else {
    for (const auto& r : rows) {
      Json j;
      j["port"] = r.port;
      j["synack"] = r.synack_count;
      j["ack_data"] = r.ack_data_count;
      j["l7_expected"] = r.l7_expected_count;
      j["unexpected"] = r.unexpected_count;
      sink.line(j.dump());
    }
  }
  return kExitOk;
}

int run_simulate(const Config& c, Sink& sink, std::ostream& err) {
  const Registry registry = build_registry(c);
  const auto plan = plan_from(c, registry);
  Network net = open_network(c, false);

  std::vector<PipelineTarget> targets;
  if (c.targets) {
    Input in(*c.targets);
    for (const auto& t : read_targets(in.get(), c.port)) targets.push_back({t.ip, t.port});
  } else {
    Input in(*c.scenario);
    const auto file = sim::load_scenario(in.get());
    for (const auto& [ip, script] : file.endpoints) {
      if (script.ports.empty()) {
        targets.push_back({ip, c.port.value_or(kDefaultSimPort)});
      } else {
        for (auto port : script.ports) targets.push_back({ip, port});
      }
    }
  }

  const double timescale = c.timescale.value_or(net.timescale);
  PipelineConfig pc;
  pc.used_source = Ipv4::parse(c.source_ip.value_or(kDefaultUsedSource));
  pc.fresh_source = Ipv4::parse(c.fresh_source_ip.value_or(kDefaultFreshSource));
  pc.engine = engine_config(c, pc.used_source, timescale);
  pc.probe.timescale = timescale;
  pc.probe.seed = c.seed;
  pc.wildcard_probe_count = c.wildcard_ports;
  pc.plan = plan;
  const auto records = run_pipeline(*net.transport, registry, targets, pc);
  const int status = emit_records(records, c, sink);

  const std::string log_path =
      c.log.value_or(c.output == "-" ? std::string("-") : c.output + ".segments");
  if (log_path == "-") {
    net.simulator->write_log(err);
  } else {
    std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
    if (!log) throw Error(ErrorCode::kInvalidArgument, "cannot open log '" + log_path + "'");
    net.simulator->write_log(log);
    if (!log) throw OutputFailure{};
  }
  return status;
}

int usage_error(std::ostream& err, const std::exception& e) {
  err << "svcid: " << e.what() << '\n';
  return kExitUsage;
}

}  // namespace

int run(const Config& config, std::ostream& out, std::ostream& err) {
  try {
    Sink sink(out, config.output);
    switch (config.command) {
      case Command::kScan: return run_scan(config, sink);
      case Command::kDeduce: return run_deduce(config, sink);
      case Command::kClassify: return run_classify(config, sink);
      case Command::kOrder: return run_order(config, sink);
      case Command::kStats: return run_stats(config, sink);
      case Command::kSimulate: return run_simulate(config, sink, err);
    }
    return kExitOk;
  } catch (const OutputFailure&) {
    err << "svcid: output stream failed\n";
    return kExitOutput;
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::kParse:
      case ErrorCode::kInvalidArgument:
      case ErrorCode::kUnknownProtocol:
      case ErrorCode::kDuplicate:
        return usage_error(err, e);
      default:
        err << "svcid: " << e.what() << '\n';
        return kExitRuntime;
    }
  } catch (const std::exception& e) {
    err << "svcid: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv + 1, argv + argc);
  ParseOutcome parsed = parse_args(args);
  if (!parsed.config) {
    out << parsed.out;
    err << parsed.err;
    out.flush();
    return parsed.exit_code;
  }
  return run(*parsed.config, out, err);
}

}  // namespace svcid::cli
