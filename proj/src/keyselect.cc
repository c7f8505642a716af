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

#include "dpsqlp/keyselect.h"

#include <string>

#include <nlohmann/json.hpp>

#include "dpsqlp/error.h"
#include "dpsqlp/noise.h"

namespace dpsqlp {

TreeState SpawnTreeAt(int64_t trigger, int64_t leaf_capacity, double sigma,
                      uint64_t seed) {
  Require(trigger >= 1 && trigger <= leaf_capacity,
          ErrorKind::kInvalidParameter,
          "spawn_tree_at: trigger outside [1, capacity]");
  TreeState t = TreeState::Create(leaf_capacity, sigma, seed);
  for (int64_t i = 1; i < trigger; ++i) t.Add(i, 0.0);
  return t;
}

std::vector<std::string> KeySelectionState::Observe(
    int64_t trigger, std::span<const std::string> user_ids,
    const KeySelectionParams& params) {
  Require(!permanent_, ErrorKind::kStateError,
          "key_selection: observe on a permanently selected key");
  Require(trigger >= 1 && trigger <= params.leaf_capacity,
          ErrorKind::kSequencing,
          "key_selection: trigger outside the window");
  Require(trigger > last_observed_trigger_, ErrorKind::kSequencing,
          "key_selection: trigger " + std::to_string(trigger) +
              " not after " + std::to_string(last_observed_trigger_));
  std::vector<std::string> novel;
  for (const std::string& uid : user_ids) {
    if (round_users_.insert(uid).second) novel.push_back(uid);
  }
  cumulative_count_ += static_cast<int64_t>(novel.size());
  last_observed_trigger_ = trigger;
  if (!tree_.has_value() && MuPrefilter(cumulative_count_, params.mu)) {
    tree_ = SpawnTreeAt(trigger, params.leaf_capacity, params.sigma,
                        Mix(seed_base_, static_cast<uint64_t>(rounds_completed_)));
  }
  if (tree_.has_value()) {
    while (tree_->next_leaf() < trigger) tree_->Add(tree_->next_leaf(), 0.0);
    // The leaf carries whatever cumulative mass is not yet in the tree, so a
    // round entered late deposits its full pre-entry count here and q-hat
    // stays an estimate of the cumulative unique-user count.
    tree_->Add(trigger,
               static_cast<double>(cumulative_count_ - inserted_total_));
    inserted_total_ = cumulative_count_;
  }
  return novel;
}

SelectionOutcome KeySelectionState::TestThreshold(
    int64_t trigger, double mu, std::span<const double> tau_by_step) {
  Require(tree_.has_value(), ErrorKind::kStateError,
          "key_selection: threshold test without a round tree");
  Require(trigger >= 1 &&
              trigger < static_cast<int64_t>(tau_by_step.size()),
          ErrorKind::kInvalidStep, "key_selection: trigger outside tau table");
  Require(trigger < tree_->next_leaf(), ErrorKind::kInvalidStep,
          "key_selection: leaf for this trigger not yet written");
  const double q_hat = tree_->TotalSum(trigger).value;
  SelectionOutcome out;
  out.trigger = trigger;
  out.noisy_count = q_hat;
  out.selected = q_hat > mu + tau_by_step[static_cast<size_t>(trigger)];
  if (out.selected) selection_pending_ = true;
  return out;
}

void KeySelectionState::RestartAfterSelection(
    const KeySelectionParams& params) {
  Require(selection_pending_, ErrorKind::kStateError,
          "key_selection: restart without a passing threshold test");
  selection_pending_ = false;
  ++rounds_completed_;
  round_users_.clear();
  cumulative_count_ = 0;
  inserted_total_ = 0;
  tree_.reset();
  if (rounds_completed_ >= params.max_rounds) permanent_ = true;
}

std::optional<int64_t> KeySelectionState::PredictRelease(
    int64_t current_trigger, double mu,
    std::span<const double> tau_by_step) const {
  if (!tree_.has_value()) return std::nullopt;
  const int64_t window_triggers =
      static_cast<int64_t>(tau_by_step.size()) - 1;
  // Future empty triggers only append zero leaves, which leave every node
  // untouched, so the frozen tree already determines all future estimates.
  const PrefixEstimator est(*tree_);
  for (int64_t p = current_trigger + 1; p <= window_triggers; ++p) {
    if (est.Value(p) > mu + tau_by_step[static_cast<size_t>(p)]) return p;
  }
  return std::nullopt;
}

const TreeState& KeySelectionState::tree() const {
  Require(tree_.has_value(), ErrorKind::kStateError,
          "key_selection: no round tree");
  return *tree_;
}

nlohmann::json KeySelectionState::ToJson() const {
  nlohmann::json j{
      {"v", 1},
      {"seed_base", seed_base_},
      {"rounds_completed", rounds_completed_},
      {"permanent", permanent_},
      {"last_trigger", last_observed_trigger_},
      {"cumulative_count", cumulative_count_},
      {"inserted_total", inserted_total_},
      {"round_users", round_users_},
  };
  if (tree_.has_value()) j["tree"] = tree_->ToJson();
  return j;
}

KeySelectionState KeySelectionState::FromJson(const nlohmann::json& j) {
  Require(j.is_object() && j.value("v", 0) == 1, ErrorKind::kStoreCorruption,
          "key_selection: unknown serialization version");
  KeySelectionState s;
  try {
    s.seed_base_ = j.at("seed_base").get<uint64_t>();
    s.rounds_completed_ = j.at("rounds_completed").get<int64_t>();
    s.permanent_ = j.at("permanent").get<bool>();
    s.last_observed_trigger_ = j.at("last_trigger").get<int64_t>();
    s.cumulative_count_ = j.at("cumulative_count").get<int64_t>();
    s.inserted_total_ = j.at("inserted_total").get<int64_t>();
    for (const auto& u : j.at("round_users")) {
      s.round_users_.insert(u.get<std::string>());
    }
    if (j.contains("tree")) s.tree_ = TreeState::FromJson(j.at("tree"));
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kStoreCorruption,
         std::string("key_selection: malformed state: ") + e.what());
  }
  return s;
}

}  // namespace dpsqlp
