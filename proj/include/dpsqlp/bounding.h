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

#ifndef DPSQLP_BOUNDING_H_
#define DPSQLP_BOUNDING_H_

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dpsqlp/record.h"

namespace dpsqlp {

// Contribution bounds enforced ahead of everything private: at most
// `max_records_per_user` records per user across the whole stream, each
// value clamped into [-value_clamp, value_clamp]. Together they cap the
// L1 sensitivity of per-key sums at max_records_per_user * value_clamp.
struct SensitivityConfig {
  int64_t max_records_per_user = 1;  // C
  double value_clamp = 1.0;          // L_m

  double L1() const {
    return static_cast<double>(max_records_per_user) * value_clamp;
  }
};

// Lifetime per-user admission counts. Deterministically ordered so that
// serialization is canonical.
class UserBudgetTable {
 public:
  int64_t Used(const std::string& user_id) const;

  // Admits one record for the user if it still has budget; returns whether
  // the record was admitted. Touched users are tracked for incremental
  // persistence until TakeDirty() collects them.
  bool Admit(const std::string& user_id, int64_t max_records);

  void Set(const std::string& user_id, int64_t used);

  int64_t size() const { return static_cast<int64_t>(used_.size()); }

  std::set<std::string> TakeDirty();
  bool HasDirty() const { return !dirty_.empty(); }

  nlohmann::json ToJson() const;
  void LoadJson(const nlohmann::json& j);

 private:
  std::map<std::string, int64_t> used_;
  std::set<std::string> dirty_;
};

double ClampValue(double value, double limit);

// First-come-first-served bounding: keeps each record whose user still has
// admission budget, in input order, with the value clamped. Drops the rest.
std::vector<Record> BoundContributions(std::span<const Record> batch,
                                       UserBudgetTable& users,
                                       const SensitivityConfig& config);

}  // namespace dpsqlp

#endif  // DPSQLP_BOUNDING_H_
