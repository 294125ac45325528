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

// Line-oriented I/O for the command-line tool: JSONL record encoding,
// target lists and adoption CSVs.

#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "svcid/analysis.hpp"
#include "svcid/classifier.hpp"
#include "svcid/deduce.hpp"
#include "svcid/engine.hpp"

namespace svcid::cli {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// One scan record as a JSON object; key order is fixed.
Json record_to_json(const ScanRecord& record);
/// Single line, no trailing newline.
std::string record_to_jsonl(const ScanRecord& record);
/// Reads the fields the analysis commands need. Throws Error(kParse).
ScanRecord record_from_json(const Json& j);

Json verdict_to_json(const StateVerdict& verdict, bool with_evidence);
StateVerdict verdict_from_json(const Json& j);

std::optional<Outcome> parse_outcome(std::string_view name);
std::optional<RefinedState> parse_refined_state(std::string_view name);
std::optional<Granularity> parse_granularity(std::string_view name);

struct Target {
  Ipv4 ip;
  std::uint16_t port = 0;
};

/// "ip,port", "ip:port" or "ip port" per line; a bare address uses
/// `default_port` when given. Blank lines and '#' comments are skipped.
/// Throws Error(kParse) with the line number.
std::vector<Target> read_targets(std::istream& in, std::optional<std::uint16_t> default_port);

/// Stateless-scanner CSV: saddr,sport,daddr,dport,seqnum,acknum,window from
/// the responder's point of view. A header row is optional.
std::vector<TcpSegment> read_adopt_csv(std::istream& in);

/// Lines of JSON; blank lines skipped. Throws Error(kParse).
std::vector<Json> read_jsonl(std::istream& in);

/// Fixed-width text table.
void write_table(std::ostream& out, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows);

std::vector<std::string> record_table_header();
std::vector<std::string> record_table_row(const ScanRecord& record);

}  // namespace svcid::cli
