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

// End-to-end labeling: SYN discovery from the scanning address, the
// identification engine, two-source follow-up probes for hosts that went
// quiet, and block-size hints for the blocking labels.

#pragma once

#include <span>
#include <vector>

#include "svcid/classifier.hpp"
#include "svcid/engine.hpp"

namespace svcid {

struct PipelineTarget {
  Ipv4 ip;
  std::uint16_t port = 0;
};

struct PipelineConfig {
  Ipv4 used_source;
  Ipv4 fresh_source;
  /// `source` is replaced by used_source.
  EngineConfig engine;
  SynProbeConfig probe;
  int wildcard_probe_count = 5;
  /// Empty: per-port default plan.
  std::vector<HandshakeRef> plan;
  bool two_source = true;
};

/// Records come back in engine completion order with behavior and
/// granularity filled in. Packet counts cover the engine phase only.
std::vector<ScanRecord> run_pipeline(Transport& transport, const Registry& registry,
                                     std::span<const PipelineTarget> targets,
                                     const PipelineConfig& config);

}  // namespace svcid
