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

#include "dpsqlp/bounding.h"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "dpsqlp/error.h"

namespace dpsqlp {

int64_t UserBudgetTable::Used(const std::string& user_id) const {
  const auto it = used_.find(user_id);
  return it == used_.end() ? 0 : it->second;
}

bool UserBudgetTable::Admit(const std::string& user_id, int64_t max_records) {
  int64_t& used = used_[user_id];
  if (used >= max_records) return false;
  ++used;
  dirty_.insert(user_id);
  return true;
}

void UserBudgetTable::Set(const std::string& user_id, int64_t used) {
  Require(used >= 0, ErrorKind::kInvalidParameter,
          "user_budget: negative count");
  used_[user_id] = used;
  dirty_.insert(user_id);
}

std::set<std::string> UserBudgetTable::TakeDirty() {
  std::set<std::string> out;
  out.swap(dirty_);
  return out;
}

nlohmann::json UserBudgetTable::ToJson() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [user, used] : used_) j[user] = used;
  return j;
}

void UserBudgetTable::LoadJson(const nlohmann::json& j) {
  Require(j.is_object(), ErrorKind::kStoreCorruption,
          "user_budget: expected object");
  for (const auto& [user, used] : j.items()) {
    used_[user] = used.get<int64_t>();
  }
}

double ClampValue(double value, double limit) {
  Require(limit > 0.0, ErrorKind::kInvalidParameter,
          "clamp: limit must be positive");
  return std::clamp(value, -limit, limit);
}

std::vector<Record> BoundContributions(std::span<const Record> batch,
                                       UserBudgetTable& users,
                                       const SensitivityConfig& config) {
  Require(config.max_records_per_user >= 1, ErrorKind::kInvalidParameter,
          "bounding: max records per user must be >= 1");
  Require(config.value_clamp > 0.0, ErrorKind::kInvalidParameter,
          "bounding: clamp must be positive");
  std::vector<Record> kept;
  kept.reserve(batch.size());
  for (const Record& r : batch) {
    if (!users.Admit(r.user_id, config.max_records_per_user)) continue;
    Record out = r;
    out.value = ClampValue(out.value, config.value_clamp);
    kept.push_back(std::move(out));
  }
  return kept;
}

}  // namespace dpsqlp
