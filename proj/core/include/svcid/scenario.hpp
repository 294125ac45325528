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

// Scenario files for the simulator, written in a small TOML subset:
//
//   seed = 7
//   loss = 0.02
//   latency_ms = [5, 40]     # or a single number
//   timescale = 0.001
//
//   [[endpoint]]
//   ip = "10.0.0.1"
//   count = 4                # consecutive addresses
//   behavior = "honest"
//   protocol = "http"
//   ports = [80, 8080]
//
// Supported values: integers, floats, booleans, basic strings and
// single-line arrays of those. Unknown keys are errors.

#pragma once

#include <iosfwd>
#include <string_view>

#include "svcid/netsim.hpp"

namespace svcid::sim {

struct ScenarioFile {
  NetConditions conditions;
  SimOptions options;
  Scenario endpoints;
};

/// Throws Error(kParse) with a line number on malformed input.
ScenarioFile parse_scenario(std::string_view text);
ScenarioFile load_scenario(std::istream& in);

}  // namespace svcid::sim
