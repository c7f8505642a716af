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

#ifndef DPSQLP_BENCH_H_
#define DPSQLP_BENCH_H_

#include <span>
#include <string>
#include <vector>

#include "dpsqlp/engine.h"
#include "dpsqlp/metrics.h"
#include "dpsqlp/record.h"

namespace dpsqlp {

// Engine names accepted on the command line and by the sweep harness.
inline constexpr char kEngineDpSqlp[] = "dpsqlp";
inline constexpr char kEngineBaselineRepeated[] = "baseline1";
inline constexpr char kEngineBaselineBatch[] = "baseline2";

// Dispatches to the streaming engine or one of the baselines.
RunResult RunEngine(std::span<const Record> stream,
                    const PipelineConfig& config, const std::string& engine);

struct SweepPoint {
  int64_t max_records_per_user = 0;
  UtilityReport utility;
  int64_t releases = 0;

  nlohmann::json ToJson() const;
};

// Runs the streaming engine once per contribution bound (fresh seed each),
// scoring final histograms against the exact final truth.
std::vector<SweepPoint> SweepContributionBound(
    std::span<const Record> stream, const PipelineConfig& base,
    std::span<const int64_t> c_values);

}  // namespace dpsqlp

#endif  // DPSQLP_BENCH_H_
