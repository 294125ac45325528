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

#include "svcid_cli/cli.hpp"

#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "svcid_cli/records.hpp"

namespace svcid::cli {

namespace {

const std::map<std::string, Format> kFormats{{"jsonl", Format::kJsonl},
                                             {"table", Format::kTable}};

void add_output(CLI::App* sub, Config& c) {
  sub->add_option("-o,--output", c.output, "Output file, - for stdout")->capture_default_str();
  sub->add_option("--format", c.format, "Output format (default: jsonl)")
      ->transform(CLI::CheckedTransformer(kFormats, CLI::ignore_case).description(""))
      ->option_text("jsonl|table");
}

void add_network(CLI::App* sub, Config& c) {
  sub->add_option("--sim", c.scenario, "Run against the simulator described by this scenario file")
      ->check(CLI::ExistingFile);
  sub->add_option("--source-ip", c.source_ip, "Scanner source address (required in live mode)");
  sub->add_flag("--strict-checksums", c.strict_checksums, "Verify checksums on every received frame");
  sub->add_option("--timescale", c.timescale,
                  "Multiply every timeout by this factor (default: scenario value, or 1)")
      ->check(CLI::PositiveNumber);
  sub->add_option("--seed", c.seed, "Seed for ports, sequence numbers and probe choices")
      ->capture_default_str();
}

void add_scan_tuning(CLI::App* sub, Config& c) {
  sub->add_option("--handshakes", c.handshakes,
                  "Comma-separated handshake plan, e.g. wait,http,tls (default: per-port)");
  sub->add_option("--wildcard-ports", c.wildcard_ports,
                  "Ephemeral ports probed for wildcard acknowledgement, 0 or >= 5 "
                  "(default: 0 for scan, 5 for simulate)")
      ->check([](const std::string& s) -> std::string {
        int n = 0;
        try {
          n = std::stoi(s);
        } catch (const std::exception&) {
          return "not an integer";
        }
        return n == 0 || n >= 5 ? std::string{} : std::string("must be 0 or at least 5");
      });
  sub->add_option("--timeout", c.timeout_s, "Seconds to wait for an acknowledgement or answer")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--banner-wait", c.banner_wait_s, "Seconds a wait handshake listens for a banner")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--signatures", c.signatures, "Signature file overriding built-in handshakes")
      ->check(CLI::ExistingFile);
}

}  // namespace

ParseOutcome parse_args(const std::vector<std::string>& args) {
  Config c;
  CLI::App app{"Identify services behind TCP ports and the defenses in front of them", "svcid"};
  app.set_version_flag("--version", std::string("svcid ") + kVersion + " (record schema " +
                                         std::to_string(kSchemaVersion) + ")");
  app.require_subcommand(1);
  app.fallthrough(false);

  auto* scan = app.add_subcommand("scan", "Identify services on a list of targets");
  scan->add_option("input", c.input, "Targets file (ip,port per line), - for stdin")->required();
  add_network(scan, c);
  add_scan_tuning(scan, c);
  scan->add_option("--port", c.port, "Port for target lines that carry only an address");
  auto* adopt = scan->add_flag("--adopt", c.adopt,
                               "Input is a SYN-ACK CSV from a stateless scanner; continue those "
                               "connections instead of opening new ones");
  scan->add_flag("--plan-only", c.plan_only, "Print each target's handshake plan and exit");
  scan->add_option("--fresh-source-ip", c.fresh_source_ip,
                   "Second source address; enables two-source shunning and blocking tests");
  scan->add_option("--max-in-flight", c.max_in_flight, "Concurrent targets")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  scan->add_flag("--naive", c.naive, "Try the whole plan on every target (no early stop)");
  add_output(scan, c);
  adopt->excludes("--sim");

  auto* deduce = app.add_subcommand("deduce", "Label targets as acknowledging data or not");
  deduce->add_option("input", c.input, "Targets file (ip,port per line), - for stdin")->required();
  add_network(deduce, c);
  deduce->add_option("--port", c.port, "Port for target lines that carry only an address");
  deduce->add_option("--timeout", c.total_timeout_s, "Seconds to observe after sending data")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  deduce->add_option("--budget", c.retransmit_budget, "Data retransmissions within the timeout")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  deduce->add_flag("--evidence", c.evidence, "Include the segment evidence in each result");
  add_output(deduce, c);

  auto* classify = app.add_subcommand("classify", "Attach behavior labels to deduce results");
  classify->add_option("input", c.input, "deduce output (JSONL), - for stdin")->required();
  classify->add_option("--probes", c.probes,
                       "Two-source SYN results, JSONL with ip, port, used, fresh")
      ->check(CLI::ExistingFile);
  add_output(classify, c);

  auto* order = app.add_subcommand("order", "Greedy handshake order from a response matrix");
  order->add_option("input", c.input, "Matrix CSV (services x handshakes, 0/1), - for stdin")
      ->required();
  order->add_option("-k,--k", c.k, "Handshakes to order (default: all)");
  add_output(order, c);

  auto* stats = app.add_subcommand("stats", "Aggregate scan records or split ports by popularity");
  stats->add_option("input", c.input, "Scan records (JSONL), - for stdin")->required();
  stats->add_option("--popularity", c.popularity,
                    "Per-port counts CSV (port,count[,has_expected 0|1]); print the outlier "
                    "split instead of the record aggregate")
      ->check(CLI::ExistingFile);
  stats->add_option("--confidence", c.confidence, "Confidence of the outlier test")
      ->check(CLI::Range(0.5, 0.999999))
      ->capture_default_str();
  add_output(stats, c);

  auto* simulate = app.add_subcommand("simulate", "Run the full pipeline against a scenario");
  simulate->add_option("input", c.input, "Scenario file")->required()->check(CLI::ExistingFile);
  simulate->add_option("--targets", c.targets,
                       "Targets file (default: every endpoint on its scripted ports)")
      ->check(CLI::ExistingFile);
  simulate->add_option("--port", c.port, "Port for endpoints scripted on every port (default 80)");
  simulate->add_option("--log", c.log, "Segment log file (default: <output>.segments, or stderr)");
  simulate->add_option("--source-ip", c.source_ip, "Scanning source address (default 192.0.2.1)");
  simulate->add_option("--fresh-source-ip", c.fresh_source_ip,
                       "Second source address (default 192.0.2.2)");
  simulate->add_option("--timescale", c.timescale, "Override the scenario timescale")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--seed", c.seed, "Scanner seed")->capture_default_str();
  add_scan_tuning(simulate, c);
  add_output(simulate, c);

  std::vector<const char*> argv{"svcid"};
  for (const auto& a : args) argv.push_back(a.c_str());

  ParseOutcome result;
  std::ostringstream out;
  std::ostringstream err;
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    result.exit_code = app.exit(e, out, err);
    if (result.exit_code != 0) result.exit_code = kExitUsage;
    result.out = out.str();
    result.err = err.str();
    return result;
  }

  auto usage = [&](const std::string& message) {
    result.exit_code = kExitUsage;
    result.err = "svcid: " + message + "\n";
    return result;
  };

  if (scan->parsed()) {
    c.command = Command::kScan;
    if (!c.scenario && !c.source_ip && !c.plan_only) {
      return usage("live mode needs --source-ip (or --sim SCENARIO for the simulator)");
    }
  } else if (deduce->parsed()) {
    c.command = Command::kDeduce;
    if (!c.scenario && !c.source_ip) {
      return usage("live mode needs --source-ip (or --sim SCENARIO for the simulator)");
    }
  } else if (classify->parsed()) {
    c.command = Command::kClassify;
  } else if (order->parsed()) {
    c.command = Command::kOrder;
  } else if (stats->parsed()) {
    c.command = Command::kStats;
  } else {
    c.command = Command::kSimulate;
    c.scenario = c.input;
    if (simulate->count("--wildcard-ports") == 0) c.wildcard_ports = 5;
  }
  result.config = c;
  return result;
}

}  // namespace svcid::cli
