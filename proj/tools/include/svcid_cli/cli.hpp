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

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace svcid::cli {

inline constexpr const char* kVersion = "0.1.0";

enum class Command { kScan, kDeduce, kClassify, kOrder, kStats, kSimulate };
enum class Format { kJsonl, kTable };

/// Exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;  // transport failure or a record carries an error
inline constexpr int kExitUsage = 2;    // bad flags, unreadable or malformed input
inline constexpr int kExitOutput = 3;   // output stream failed (e.g. broken pipe)

struct Config {
  Command command = Command::kScan;

  /// Positional input: targets, deduce results, a matrix, records or a
  /// scenario depending on the command. "-" is stdin.
  std::string input;
  std::string output = "-";
  Format format = Format::kJsonl;

  // Network side. A scenario path selects the simulator.
  std::optional<std::string> scenario;
  std::optional<std::string> source_ip;
  std::optional<std::string> fresh_source_ip;
  bool strict_checksums = false;
  std::optional<double> timescale;
  std::uint64_t seed = 1;

  // scan
  std::optional<std::string> handshakes;
  int wildcard_ports = 0;
  double timeout_s = 3.0;
  double banner_wait_s = 3.0;
  std::optional<std::uint16_t> port;
  bool adopt = false;
  bool plan_only = false;
  std::optional<std::string> signatures;
  std::size_t max_in_flight = 1024;
  bool naive = false;

  // deduce
  double total_timeout_s = 100.0;
  int retransmit_budget = 8;
  bool evidence = false;

  // classify
  std::optional<std::string> probes;

  // order
  std::optional<std::size_t> k;

  // stats
  std::optional<std::string> popularity;
  double confidence = 0.999;

  // simulate
  std::optional<std::string> log;
  std::optional<std::string> targets;
};

/// Either a runnable configuration or text to print and an exit status
/// (help, version, usage errors).
struct ParseOutcome {
  std::optional<Config> config;
  int exit_code = kExitOk;
  std::string out;
  std::string err;
};

/// `args` excludes the program name.
ParseOutcome parse_args(const std::vector<std::string>& args);

/// Runs a parsed command. Diagnostics go to `err`; results go to the
/// configured output, or `out` when that is "-".
int run(const Config& config, std::ostream& out, std::ostream& err);

/// Whole program: parse, run, map exceptions to exit statuses.
int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace svcid::cli
