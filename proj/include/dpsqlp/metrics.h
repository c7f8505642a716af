//
// Copyright 2026 The DP-SQLP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef DPSQLP_METRICS_H_
#define DPSQLP_METRICS_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "dpsqlp/engine.h"
#include "dpsqlp/record.h"

namespace dpsqlp {

// Evaluation oracle: exact (non-private, unbounded, unclamped) cumulative
// per-key sums at every trigger, keyed by global trigger index under the
// same windowing the engines use.
std::map<int64_t, std::map<std::string, double>> GroundTruthPrefixes(
    std::span<const Record> stream, const WindowSpec& window,
    int64_t triggers_per_window);

// Same result computed by sort-and-merge instead of hashing; kept as an
// independent implementation for cross-checking the oracle itself.
std::map<int64_t, std::map<std::string, double>> GroundTruthPrefixesSorted(
    std::span<const Record> stream, const WindowSpec& window,
    int64_t triggers_per_window);

// Exact whole-stream per-key totals (the final-trigger truth for a
// single-window stream).
std::map<std::string, double> GroundTruthFinal(std::span<const Record> stream);

// Final DP histogram from a release stream: each key's last release wins
// (every engine emits running totals).
std::map<std::string, double> FinalHistogram(std::span<const Release> releases);

struct UtilityReport {
  int64_t released_keys = 0;  // L0 of the DP histogram
  int64_t truth_keys = 0;
  double l_inf = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;

  nlohmann::json ToJson() const;
};

// Error metrics over the union of released and truth keys; a truth key
// missing from the DP histogram contributes its full mass (and a released
// key absent from the truth contributes its full released value).
UtilityReport UtilityMetrics(const std::map<std::string, double>& dp,
                             const std::map<std::string, double>& truth);

}  // namespace dpsqlp

#endif  // DPSQLP_METRICS_H_
