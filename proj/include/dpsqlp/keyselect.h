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

#ifndef DPSQLP_KEYSELECT_H_
#define DPSQLP_KEYSELECT_H_

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dpsqlp/tree.h"

namespace dpsqlp {

// Streaming private key selection. Per key and per selection round: a
// noiseless cumulative unique-user count gates tree creation (count > mu);
// once a round tree exists, its Honaker prefix estimate q-hat is compared
// against mu + tau[trigger] each trigger. A passing test selects the key and
// restarts the round; after max_rounds selections the key is permanently
// selected and bypasses the mechanism.

struct KeySelectionParams {
  double mu = 0.0;
  double sigma = 0.0;            // selection-tree noise scale
  int64_t leaf_capacity = 1;     // triggers per window (tree capacity)
  int64_t max_rounds = 1;        // C: selections before permanent status
};

struct SelectionOutcome {
  bool selected = false;
  double noisy_count = 0.0;
  int64_t trigger = 0;
};

// Noiseless pre-filter applied before any tree exists.
inline bool MuPrefilter(int64_t count, double mu) {
  return static_cast<double>(count) > mu;
}

// Round tree aligned to the window: leaves 1..trigger-1 are zero-filled so
// leaf i always corresponds to trigger i.
TreeState SpawnTreeAt(int64_t trigger, int64_t leaf_capacity, double sigma,
                      uint64_t seed);

class KeySelectionState {
 public:
  KeySelectionState() = default;
  explicit KeySelectionState(uint64_t seed_base) : seed_base_(seed_base) {}

  // Folds one trigger's user set into the round: deduplicates against users
  // already counted this round, spawns the round tree once the cumulative
  // count clears mu, and appends this trigger's leaf (zero-backfilling any
  // skipped triggers). Returns the users newly counted. Triggers must be
  // strictly increasing; permanently selected keys must not be observed.
  std::vector<std::string> Observe(int64_t trigger,
                                   std::span<const std::string> user_ids,
                                   const KeySelectionParams& params);

  // Threshold test at `trigger` (leaf must already be written):
  // selected iff q-hat > mu + tau_by_step[trigger]. Records a passing
  // outcome so RestartAfterSelection can be validated.
  SelectionOutcome TestThreshold(int64_t trigger, double mu,
                                 std::span<const double> tau_by_step);

  // Closes the round after a selection: drops the tree, clears the user set
  // and counters, and flips to permanently selected after max_rounds rounds.
  void RestartAfterSelection(const KeySelectionParams& params);

  // Earliest future trigger p in (current_trigger, T] at which the frozen
  // round tree, zero-extended, would pass the threshold test; nullopt if it
  // never does. T is tau_by_step.size() - 1. Pure read.
  std::optional<int64_t> PredictRelease(
      int64_t current_trigger, double mu,
      std::span<const double> tau_by_step) const;

  bool has_tree() const { return tree_.has_value(); }
  const TreeState& tree() const;
  bool permanently_selected() const { return permanent_; }
  int64_t rounds_completed() const { return rounds_completed_; }
  int64_t cumulative_count() const { return cumulative_count_; }
  int64_t last_observed_trigger() const { return last_observed_trigger_; }

  nlohmann::json ToJson() const;
  static KeySelectionState FromJson(const nlohmann::json& j);

 private:
  uint64_t seed_base_ = 0;
  int64_t rounds_completed_ = 0;
  bool permanent_ = false;
  int64_t last_observed_trigger_ = 0;   // 0 = nothing observed yet
  int64_t cumulative_count_ = 0;        // noiseless unique users this round
  int64_t inserted_total_ = 0;          // portion already inside the tree
  std::set<std::string> round_users_;
  std::optional<TreeState> tree_;
  bool selection_pending_ = false;      // set by a passing TestThreshold
};

}  // namespace dpsqlp

#endif  // DPSQLP_KEYSELECT_H_
