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


// Fixtures shared by the unit tests and the acceptance binary.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "svcid/analysis.hpp"

namespace svcid::fixtures {

// 37 ports: six dominant ones over a flat tail. Counts are synthetic; they
// are shaped so that the 99.9% one-sided Grubbs split removes exactly the
// first six (each with a margin of at least 0.13 over the critical value).
inline std::vector<PortCount> popularity() {
  std::vector<PortCount> out;
  for (auto [port, count] : {std::pair<std::uint16_t, double>{80, 9000}, {443, 7200}, {7547, 5600},
                             {22, 4300}, {21, 3600}, {25, 2900}}) {
    out.push_back({port, count, std::nullopt});
  }
  const std::uint16_t tail[] = {23,   53,   110,  143,  161,  445,  465,  587,  631,  993, 995,
                                1433, 1521, 1723, 1883, 2323, 3306, 3389, 5060, 5432, 5900, 6379,
                                8000, 8080, 8081, 8443, 8888, 9000, 9200, 11211, 27017};
  for (int i = 0; i < 31; ++i) {
    out.push_back({tail[i], static_cast<double>(300 + (i * 53) % 260), std::nullopt});
  }
  return out;
}

inline const std::vector<std::uint16_t>& popular_ports() {
  static const std::vector<std::uint16_t> kPorts = {80, 443, 7547, 22, 21, 25};
  return kPorts;
}

// 1000 services over five handshakes. Greedy marginals are 513, 290, 136,
// 34 and 18 services; the overlaps keep the raw column counts from giving
// the same order by themselves (http alone covers 436, tls 390).
inline ResponseMatrix handshake_order() {
  ResponseMatrix m;
  m.handshakes = {"dns", "http", "pptp", "tls", "wait"};
  auto col = [&](const std::string& name) {
    for (std::size_t i = 0; i < m.handshakes.size(); ++i) {
      if (m.handshakes[i] == name) return i;
    }
    return m.handshakes.size();
  };
  m.cells.assign(1000, std::vector<bool>(5, false));
  auto mark = [&](int from, int to, const std::string& h) {
    for (int s = from; s < to; ++s) m.cells[static_cast<std::size_t>(s)][col(h)] = true;
  };
  mark(0, 513, "wait");
  mark(0, 300, "http");
  mark(400, 500, "tls");
  mark(300, 500, "dns");
  mark(490, 500, "pptp");
  mark(513, 803, "tls");
  mark(803, 939, "http");
  mark(939, 973, "dns");
  mark(973, 991, "pptp");
  for (int s = 0; s < 1000; ++s) m.services.push_back("s" + std::to_string(s));
  return m;
}

}  // namespace svcid::fixtures
