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

// Offline math over scan results: handshake ordering, coverage curves,
// popular-port outlier split and the L4/L7 discrepancy table.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "svcid/engine.hpp"

namespace svcid {

/// cells[s][h]: service s is identified when probed with handshake h.
struct ResponseMatrix {
  std::vector<std::string> services;
  std::vector<std::string> handshakes;
  std::vector<std::vector<bool>> cells;

  /// Throws Error(kInvalidArgument) unless rectangular with at least one
  /// service and one handshake.
  void validate() const;
};

/// CSV with a header row of handshake names. A first header cell named
/// "service" (or left empty) marks a leading column of service ids;
/// otherwise services are numbered from 1. Cells are 0 or 1.
ResponseMatrix parse_matrix_csv(std::istream& in);

struct OrderStep {
  std::string handshake;
  std::size_t newly_covered = 0;
  /// newly_covered / number of services.
  double marginal = 0.0;
};

/// Greedy maximum-coverage order of k handshakes. Ties go to the
/// lexicographically smallest name.
std::vector<OrderStep> greedy_order(const ResponseMatrix& matrix, std::size_t k);

/// identified[i] is the 1-based plan index at which service i was
/// identified, or nullopt. Returns the identified fraction for every prefix
/// length 1..plan_length.
std::vector<double> coverage_curve(std::span<const std::optional<std::size_t>> identified,
                                   std::size_t plan_length);

struct PortCount {
  std::uint16_t port = 0;
  double count = 0.0;
  /// When set to false the port can be an outlier but never popular.
  std::optional<bool> has_expected_service;
};

struct GrubbsStep {
  std::size_t n = 0;
  std::uint16_t port = 0;
  double g = 0.0;
  double critical = 0.0;
};

struct GrubbsSplit {
  std::vector<std::uint16_t> popular;    // in removal order
  std::vector<std::uint16_t> unpopular;  // in input order
  std::vector<GrubbsStep> steps;
};

/// Critical value of the one-sided maximum Grubbs statistic for n samples
/// at significance alpha.
double grubbs_critical(std::size_t n, double alpha);

/// Iterated one-sided Grubbs test for high outliers. Throws
/// Error(kInvalidArgument) for fewer than 3 ports or confidence outside
/// (0, 1).
GrubbsSplit grubbs_split(std::span<const PortCount> counts, double confidence = 0.999);

struct DiscrepancyRow {
  std::uint16_t port = 0;
  std::size_t synack_count = 0;
  std::size_t ack_data_count = 0;
  std::size_t l7_expected_count = 0;
  std::size_t unexpected_count = 0;

  friend bool operator==(const DiscrepancyRow&, const DiscrepancyRow&) = default;
};

/// Per-port aggregate, sorted by port.
std::vector<DiscrepancyRow> l4_l7_discrepancy(std::span<const ScanRecord> records);

}  // namespace svcid
