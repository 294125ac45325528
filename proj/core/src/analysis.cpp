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

#include "svcid/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "svcid/error.hpp"

namespace svcid {

void ResponseMatrix::validate() const {
  if (services.empty() || handshakes.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "response matrix needs services and handshakes");
  }
  if (cells.size() != services.size()) {
    throw Error(ErrorCode::kInvalidArgument, "response matrix row count mismatch");
  }
  for (const auto& row : cells) {
    if (row.size() != handshakes.size()) {
      throw Error(ErrorCode::kInvalidArgument, "response matrix is not rectangular");
    }
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

ResponseMatrix parse_matrix_csv(std::istream& in) {
  ResponseMatrix m;
  std::string line;
  int lineno = 0;
  bool header = true, id_column = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    auto cells = split_csv(line);
    if (header) {
      if (!cells.empty() && (cells[0].empty() || cells[0] == "service")) {
        id_column = true;
        cells.erase(cells.begin());
      }
      m.handshakes = cells;
      header = false;
      continue;
    }
    std::string id = std::to_string(m.services.size() + 1);
    if (id_column) {
      if (cells.empty()) throw Error(ErrorCode::kParse, "matrix line " + std::to_string(lineno) + ": empty row");
      id = cells[0];
      cells.erase(cells.begin());
    }
    if (cells.size() != m.handshakes.size()) {
      throw Error(ErrorCode::kParse, "matrix line " + std::to_string(lineno) + ": expected " +
                                         std::to_string(m.handshakes.size()) + " cells");
    }
    std::vector<bool> row;
    for (const auto& c : cells) {
      if (c != "0" && c != "1") {
        throw Error(ErrorCode::kParse, "matrix line " + std::to_string(lineno) + ": cell '" + c + "' is not 0/1");
      }
      row.push_back(c == "1");
    }
    m.services.push_back(id);
    m.cells.push_back(std::move(row));
  }
  m.validate();
  return m;
}

std::vector<OrderStep> greedy_order(const ResponseMatrix& matrix, std::size_t k) {
  matrix.validate();
  if (k > matrix.handshakes.size()) {
    throw Error(ErrorCode::kInvalidArgument, "k exceeds the number of handshakes");
  }
  const std::size_t n = matrix.services.size();
  std::vector<bool> covered(n, false), chosen(matrix.handshakes.size(), false);
  std::vector<OrderStep> steps;
  for (std::size_t step = 0; step < k; ++step) {
    std::optional<std::size_t> best;
    std::size_t best_gain = 0;
    for (std::size_t h = 0; h < matrix.handshakes.size(); ++h) {
      if (chosen[h]) continue;
      std::size_t gain = 0;
      for (std::size_t s = 0; s < n; ++s) gain += (!covered[s] && matrix.cells[s][h]) ? 1 : 0;
      if (!best || gain > best_gain ||
          (gain == best_gain && matrix.handshakes[h] < matrix.handshakes[*best])) {
        best = h;
        best_gain = gain;
      }
    }
    chosen[*best] = true;
    for (std::size_t s = 0; s < n; ++s) {
      if (matrix.cells[s][*best]) covered[s] = true;
    }
    steps.push_back({matrix.handshakes[*best], best_gain,
                     static_cast<double>(best_gain) / static_cast<double>(n)});
  }
  return steps;
}

std::vector<double> coverage_curve(std::span<const std::optional<std::size_t>> identified,
                                   std::size_t plan_length) {
  std::vector<double> curve(plan_length, 0.0);
  if (identified.empty()) return curve;
  std::vector<std::size_t> at(plan_length + 1, 0);
  for (const auto& idx : identified) {
    if (!idx) continue;
    if (*idx < 1 || *idx > plan_length) {
      throw Error(ErrorCode::kInvalidArgument, "identification index outside the plan");
    }
    ++at[*idx];
  }
  std::size_t running = 0;
  for (std::size_t i = 1; i <= plan_length; ++i) {
    running += at[i];
    curve[i - 1] = static_cast<double>(running) / static_cast<double>(identified.size());
  }
  return curve;
}

double grubbs_critical(std::size_t n, double alpha) {
  if (n < 3) throw Error(ErrorCode::kInvalidArgument, "Grubbs test needs at least 3 samples");
  const double df = static_cast<double>(n - 2);
  const boost::math::students_t dist(df);
  const double t = boost::math::quantile(boost::math::complement(dist, alpha / static_cast<double>(n)));
  const double nn = static_cast<double>(n);
  return (nn - 1.0) / std::sqrt(nn) * std::sqrt(t * t / (df + t * t));
}

GrubbsSplit grubbs_split(std::span<const PortCount> counts, double confidence) {
  if (counts.size() < 3) throw Error(ErrorCode::kInvalidArgument, "Grubbs split needs at least 3 ports");
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "confidence must be in (0, 1)");
  }
  for (const auto& c : counts) {
    if (!(c.count >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "counts must be >= 0");
  }
  const double alpha = 1.0 - confidence;
  std::vector<std::size_t> remaining(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) remaining[i] = i;
  std::vector<bool> popular(counts.size(), false);
  GrubbsSplit out;

  while (remaining.size() >= 3) {
    const double n = static_cast<double>(remaining.size());
    double mean = 0.0;
    for (auto i : remaining) mean += counts[i].count;
    mean /= n;
    double ss = 0.0;
    for (auto i : remaining) ss += (counts[i].count - mean) * (counts[i].count - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (!(sd > 0.0)) break;
    auto top = std::max_element(remaining.begin(), remaining.end(), [&](std::size_t a, std::size_t b) {
      return counts[a].count < counts[b].count;
    });
    const double g = (counts[*top].count - mean) / sd;
    const double crit = grubbs_critical(remaining.size(), alpha);
    out.steps.push_back({remaining.size(), counts[*top].port, g, crit});
    if (!(g > crit)) break;
    if (counts[*top].has_expected_service.value_or(true)) {
      popular[*top] = true;
      out.popular.push_back(counts[*top].port);
    }
    remaining.erase(top);
  }
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (!popular[i]) out.unpopular.push_back(counts[i].port);
  }
  return out;
}

std::vector<DiscrepancyRow> l4_l7_discrepancy(std::span<const ScanRecord> records) {
  std::map<std::uint16_t, DiscrepancyRow> rows;
  for (const auto& r : records) {
    DiscrepancyRow& row = rows[r.port];
    row.port = r.port;
    if (r.refined_state != RefinedState::kNeverSynAcked) ++row.synack_count;
    if (r.outcome == Outcome::kAckHost) ++row.ack_data_count;
    if (r.identified_protocol) {
      const auto expected = expected_protocol(r.port);
      if (expected && *expected == *r.identified_protocol) {
        ++row.l7_expected_count;
      } else {
        ++row.unexpected_count;
      }
    }
  }
  std::vector<DiscrepancyRow> out;
  out.reserve(rows.size());
  for (auto& [port, row] : rows) out.push_back(row);
  return out;
}

}  // namespace svcid
