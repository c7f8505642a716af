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

#include "dpsqlp/bench.h"

#include "dpsqlp/baselines.h"
#include "dpsqlp/error.h"
#include "dpsqlp/noise.h"

namespace dpsqlp {

RunResult RunEngine(std::span<const Record> stream,
                    const PipelineConfig& config, const std::string& engine) {
  if (engine == kEngineDpSqlp) return RunPipeline(stream, config);
  if (engine == kEngineBaselineRepeated) {
    return RunBaselineRepeated(stream, config);
  }
  if (engine == kEngineBaselineBatch) return RunBaselineBatch(stream, config);
  Fail(ErrorKind::kInvalidParameter, "unknown engine: " + engine);
}

nlohmann::json SweepPoint::ToJson() const {
  return nlohmann::json{
      {"c", max_records_per_user},
      {"utility", utility.ToJson()},
      {"releases", releases},
  };
}

std::vector<SweepPoint> SweepContributionBound(
    std::span<const Record> stream, const PipelineConfig& base,
    std::span<const int64_t> c_values) {
  Require(!c_values.empty(), ErrorKind::kInvalidParameter,
          "sweep: no contribution bounds given");
  const std::map<std::string, double> truth = GroundTruthFinal(stream);
  std::vector<SweepPoint> out;
  for (const int64_t c : c_values) {
    Require(c >= 1, ErrorKind::kInvalidParameter,
            "sweep: contribution bound must be >= 1");
    PipelineConfig cfg = base;
    cfg.max_records_per_user = c;
    cfg.seed = Mix(base.seed, static_cast<uint64_t>(c));
    const RunResult result = RunPipeline(stream, cfg);
    SweepPoint p;
    p.max_records_per_user = c;
    p.utility = UtilityMetrics(FinalHistogram(result.releases), truth);
    p.releases = result.report.counters.releases;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace dpsqlp
