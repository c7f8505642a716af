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

#ifndef DPSQLP_PERTURB_H_
#define DPSQLP_PERTURB_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "dpsqlp/accountant.h"
#include "dpsqlp/bounding.h"
#include "dpsqlp/record.h"
#include "dpsqlp/tree.h"

namespace dpsqlp {

// Hierarchical perturbation of one key's running sum. Bounded contributions
// accumulate in a buffer between releases; each release appends the buffered
// delta as the next leaf of the key's aggregation tree (leaf index =
// release ordinal) and emits the Honaker estimate of the running total.

class AggregationState {
 public:
  AggregationState() = default;
  AggregationState(uint64_t seed, double sigma, int64_t max_releases,
                   std::string column);

  // Folds a batch of already-bounded records into the buffer. A value
  // outside the clamp means bounding was bypassed: kContractViolation.
  void AccumulateDelta(std::span<const Record> records, double value_clamp);

  // Releases the running total at `trigger`; requires strictly increasing
  // triggers across releases and at most max_releases releases.
  Release ReleaseAt(int64_t trigger, const std::string& key);

  double buffered_delta() const { return buffered_; }
  int64_t last_release_trigger() const { return last_release_trigger_; }
  int64_t release_count() const { return release_count_; }
  double sigma() const { return sigma_; }
  bool has_tree() const { return tree_.has_value(); }
  const std::string& column() const { return column_; }

  nlohmann::json ToJson() const;
  static AggregationState FromJson(const nlohmann::json& j);

 private:
  uint64_t seed_ = 0;
  double sigma_ = 0.0;
  int64_t capacity_ = 1;
  std::string column_ = "value";
  double buffered_ = 0.0;
  int64_t last_release_trigger_ = 0;  // 0 = no release yet
  int64_t release_count_ = 0;
  std::optional<TreeState> tree_;     // created on first release
};

// Noise scale for aggregation trees: calibrated for `max_releases` potential
// releases with per-node L2 sensitivity C * clamp.
double PerturbationSigma(const SensitivityConfig& config, DpBudget budget,
                         int64_t max_releases);

}  // namespace dpsqlp

#endif  // DPSQLP_PERTURB_H_
