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

#include "dpsqlp/perturb.h"

#include <cmath>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "dpsqlp/error.h"

namespace dpsqlp {

AggregationState::AggregationState(uint64_t seed, double sigma,
                                   int64_t max_releases, std::string column)
    : seed_(seed), sigma_(sigma), capacity_(max_releases),
      column_(std::move(column)) {
  Require(sigma >= 0.0, ErrorKind::kInvalidParameter,
          "aggregation: sigma must be >= 0");
  Require(max_releases >= 1, ErrorKind::kInvalidParameter,
          "aggregation: max releases must be >= 1");
}

void AggregationState::AccumulateDelta(std::span<const Record> records,
                                       double value_clamp) {
  for (const Record& r : records) {
    Require(std::abs(r.value) <= value_clamp, ErrorKind::kContractViolation,
            "aggregation: record value " + std::to_string(r.value) +
                " exceeds clamp " + std::to_string(value_clamp) +
                "; bounding was bypassed");
    buffered_ += r.value;
  }
}

Release AggregationState::ReleaseAt(int64_t trigger, const std::string& key) {
  Require(trigger > last_release_trigger_, ErrorKind::kSequencing,
          "aggregation: release trigger " + std::to_string(trigger) +
              " not after " + std::to_string(last_release_trigger_));
  Require(release_count_ < capacity_, ErrorKind::kCapacity,
          "aggregation: release capacity exhausted");
  if (!tree_.has_value()) {
    tree_ = TreeState::Create(capacity_, sigma_, seed_);
  }
  const int64_t leaf = release_count_ + 1;
  tree_->Add(leaf, buffered_);
  buffered_ = 0.0;
  ++release_count_;
  last_release_trigger_ = trigger;
  return Release{trigger, key, column_, tree_->TotalSum(leaf).value};
}

nlohmann::json AggregationState::ToJson() const {
  nlohmann::json j{
      {"v", 1},
      {"seed", seed_},
      {"sigma", sigma_},
      {"capacity", capacity_},
      {"column", column_},
      {"buffered", buffered_},
      {"last_release_trigger", last_release_trigger_},
      {"release_count", release_count_},
  };
  if (tree_.has_value()) j["tree"] = tree_->ToJson();
  return j;
}

AggregationState AggregationState::FromJson(const nlohmann::json& j) {
  Require(j.is_object() && j.value("v", 0) == 1, ErrorKind::kStoreCorruption,
          "aggregation: unknown serialization version");
  AggregationState s;
  try {
    s.seed_ = j.at("seed").get<uint64_t>();
    s.sigma_ = j.at("sigma").get<double>();
    s.capacity_ = j.at("capacity").get<int64_t>();
    s.column_ = j.at("column").get<std::string>();
    s.buffered_ = j.at("buffered").get<double>();
    s.last_release_trigger_ = j.at("last_release_trigger").get<int64_t>();
    s.release_count_ = j.at("release_count").get<int64_t>();
    if (j.contains("tree")) s.tree_ = TreeState::FromJson(j.at("tree"));
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kStoreCorruption,
         std::string("aggregation: malformed state: ") + e.what());
  }
  return s;
}

double PerturbationSigma(const SensitivityConfig& config, DpBudget budget,
                         int64_t max_releases) {
  return CalibrateSigma(max_releases, budget, config.L1()).sigma;
}

}  // namespace dpsqlp
