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

#include "svcid/pipeline.hpp"

#include <algorithm>
#include <map>

#include "svcid/error.hpp"

namespace svcid {

std::vector<ScanRecord> run_pipeline(Transport& transport, const Registry& registry,
                                     std::span<const PipelineTarget> targets,
                                     const PipelineConfig& config) {
  if (config.two_source && config.used_source == config.fresh_source) {
    throw Error(ErrorCode::kInvalidArgument, "two-source probing needs distinct source addresses");
  }
  if (config.wildcard_probe_count != 0 && config.wildcard_probe_count < 5) {
    throw Error(ErrorCode::kInvalidArgument, "wildcard probe count must be 0 or at least 5");
  }

  // Discovery: which targets answer a bare SYN from the scanning address.
  std::vector<SynProbe> discovery;
  discovery.reserve(targets.size());
  for (const auto& t : targets) discovery.push_back({config.used_source, t.ip, t.port});
  const auto seen = syn_probe(transport, discovery, config.probe);
  std::map<std::pair<Ipv4, std::uint16_t>, bool> responsive;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    responsive[{targets[i].ip, targets[i].port}] = seen[i] == ProbeResponse::kSynAck;
  }

  EngineConfig ec = config.engine;
  ec.source = config.used_source;
  std::vector<ScanTask> tasks;
  tasks.reserve(targets.size());
  for (const auto& t : targets) {
    ScanTask task;
    task.ip = t.ip;
    task.port = t.port;
    task.handshake_plan = config.plan;
    task.wildcard_probe_count = config.wildcard_probe_count;
    tasks.push_back(std::move(task));
  }
  Engine engine(transport, registry, ec);
  std::vector<ScanRecord> records = engine.run(tasks);

  if (config.two_source) {
    // Hosts that answered us once and then stopped: shunning candidates.
    // Hosts that completed handshakes but never took data: blocking or a
    // consistent non-acker; the fresh source tells them apart.
    enum class Test { kShunning, kDynamic };
    std::vector<std::pair<std::size_t, Test>> candidates;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const ScanRecord& r = records[i];
      if (r.behavior.kind != BehaviorKind::kNoDefenseObserved) continue;
      if (r.last_attempt_state == RefinedState::kNeverSynAcked && responsive[{r.ip, r.port}]) {
        candidates.push_back({i, Test::kShunning});
      } else if (r.refined_state == RefinedState::kEstablishedNoAck) {
        candidates.push_back({i, Test::kDynamic});
      }
    }
    std::vector<SynProbe> probes;
    for (const auto& [i, test] : candidates) {
      probes.push_back({config.used_source, records[i].ip, records[i].port});
      probes.push_back({config.fresh_source, records[i].ip, records[i].port});
    }
    SynProbeConfig pc = config.probe;
    pc.seed ^= 0xa5a5a5a5ULL;
    const auto answers = syn_probe(transport, probes, pc);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const TwoSourceProbeResult result{answers[2 * c], answers[2 * c + 1]};
      auto& r = records[candidates[c].first];
      const BehaviorLabel label = candidates[c].second == Test::kShunning
                                      ? classify_shunning(result)
                                      : classify_dynamic_block(result);
      if (label.kind != BehaviorKind::kNoDefenseObserved) r.behavior = label;
    }
  }

  std::vector<Ipv4> blocked;
  for (const auto& r : records) {
    if (r.behavior.kind == BehaviorKind::kConnectionShunning ||
        r.behavior.kind == BehaviorKind::kDynamicBlockAfterHandshake) {
      if (std::find(blocked.begin(), blocked.end(), r.ip) == blocked.end()) blocked.push_back(r.ip);
    }
  }
  const auto prefixes = block_prefixes(blocked);
  for (auto& r : records) {
    auto it = prefixes.find(r.ip);
    if (it != prefixes.end() && (r.behavior.kind == BehaviorKind::kConnectionShunning ||
                                 r.behavior.kind == BehaviorKind::kDynamicBlockAfterHandshake)) {
      r.behavior.granularity_hint = it->second == 32 ? Granularity::kHost : Granularity::kNetwork;
    }
  }
  return records;
}

}  // namespace svcid
