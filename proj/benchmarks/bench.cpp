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


#include <memory>
#include <random>

#include <benchmark/benchmark.h>

#include "svcid/analysis.hpp"
#include "svcid/engine.hpp"
#include "svcid/netsim.hpp"
#include "svcid/packet.hpp"
#include "svcid/registry.hpp"

namespace svcid {
namespace {

TcpSegment sample_segment(std::size_t payload) {
  TcpSegment s;
  s.src_ip = Ipv4(192, 0, 2, 1);
  s.dst_ip = Ipv4(10, 0, 0, 1);
  s.src_port = 40000;
  s.dst_port = 80;
  s.seq = 12345;
  s.ack = 67890;
  s.flags = TcpFlags{TcpFlags::kAck | TcpFlags::kPsh};
  s.window = 65535;
  s.payload = Bytes(payload, 0x41);
  return s;
}

void BM_Craft(benchmark::State& state) {
  const TcpSegment seg = sample_segment(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(craft(seg));
}
BENCHMARK(BM_Craft)->Arg(0)->Arg(512)->Arg(1400);

void BM_Parse(benchmark::State& state) {
  const Bytes wire = craft(sample_segment(static_cast<std::size_t>(state.range(0))));
  ParseOptions strict;
  strict.strict_checksums = true;
  for (auto _ : state) benchmark::DoNotOptimize(parse(wire, strict));
}
BENCHMARK(BM_Parse)->Arg(0)->Arg(512)->Arg(1400);

// Worst case for identification: no matcher fires, so every spec runs.
void BM_MatchSweep(benchmark::State& state) {
  const Registry registry = seed_registry();
  std::mt19937 rng(1);
  Bytes noise(static_cast<std::size_t>(state.range(0)));
  for (auto& b : noise) b = static_cast<std::uint8_t>(rng() % 26 + 'a');
  for (auto _ : state) benchmark::DoNotOptimize(registry.match(noise, "http"));
}
BENCHMARK(BM_MatchSweep)->Arg(64)->Arg(1024);

void BM_GreedyOrder(benchmark::State& state) {
  std::mt19937 rng(2);
  ResponseMatrix m;
  const auto services = static_cast<std::size_t>(state.range(0));
  for (int h = 0; h < 30; ++h) m.handshakes.push_back("h" + std::to_string(h));
  for (std::size_t s = 0; s < services; ++s) {
    m.services.push_back(std::to_string(s));
    std::vector<bool> row(30);
    for (std::size_t h = 0; h < row.size(); ++h) row[h] = rng() % 10 == 0;
    m.cells.push_back(std::move(row));
  }
  for (auto _ : state) benchmark::DoNotOptimize(greedy_order(m, 10));
}
BENCHMARK(BM_GreedyOrder)->Arg(1000)->Arg(10000);

// Full engine run over a simulated /24 of mixed honest and silent hosts.
void BM_SimulatedScan(benchmark::State& state) {
  const auto registry = std::make_shared<const Registry>(seed_registry());
  sim::Scenario sc;
  std::vector<ScanTask> tasks;
  for (int i = 0; i < 254; ++i) {
    sim::EndpointScript s;
    if (i % 4 == 0) {
      s.behavior = sim::DynamicBlocker{false};
    } else {
      s.behavior = sim::HonestService{i % 2 ? "http" : "ssh", {}};
    }
    s.ports = {80};
    const Ipv4 ip(10, 0, 0, static_cast<std::uint8_t>(i + 1));
    sc.push_back({ip, s});
    ScanTask t{};
    t.ip = ip;
    t.port = 80;
    tasks.push_back(t);
  }
  sim::SimOptions so;
  so.timescale = 0.001;
  for (auto _ : state) {
    sim::Simulator simulator(sc, {}, so, registry);
    EngineConfig ec;
    ec.source = Ipv4(192, 0, 2, 1);
    ec.timescale = 0.001;
    Engine engine(simulator, *registry, ec);
    benchmark::DoNotOptimize(engine.run(tasks));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(tasks.size()));
}
BENCHMARK(BM_SimulatedScan)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace svcid

BENCHMARK_MAIN();
