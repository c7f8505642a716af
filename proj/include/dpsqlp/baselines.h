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

#ifndef DPSQLP_BASELINES_H_
#define DPSQLP_BASELINES_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "dpsqlp/accountant.h"
#include "dpsqlp/bounding.h"
#include "dpsqlp/engine.h"
#include "dpsqlp/record.h"

namespace dpsqlp {

// One-shot DP histogram over bounded records with private key selection:
// a key is kept iff its noisy unique-user count clears a threshold
// calibrated so that keys owned by a single user survive with probability
// within the delta budget; kept keys release their noisy sum.

struct KeyAggregate {
  int64_t unique_users = 0;
  double sum = 0.0;
};

struct OneShotParams {
  DpBudget budget;  // the per-run budget this parameterization spends
  double count_sigma = 0.0;
  double sum_sigma = 0.0;
  double threshold = 0.0;
};

// Budget layout mirrors the streaming engine's split: the key-selection
// share buys the unique-count noise (L2 sensitivity sqrt(C), half its delta)
// and the survival threshold (the other half); the aggregation share buys
// the sum noise (L2 sensitivity C * clamp).
OneShotParams MakeOneShotParams(DpBudget per_run,
                                const SensitivityConfig& sensitivity,
                                SplitRatios ratios = {});

std::map<std::string, KeyAggregate> AggregateByKey(
    std::span<const Record> bounded);

std::map<std::string, double> OneShotDpHistogram(
    const std::map<std::string, KeyAggregate>& aggregates,
    const OneShotParams& params, uint64_t seed);

// Baseline 1: at every trigger, a fresh one-shot histogram over the bounded
// stream prefix; the trigger count's optimal composition stays within the
// global budget.
RunResult RunBaselineRepeated(std::span<const Record> stream,
                              const PipelineConfig& config);

// Baseline 2: each micro-batch is released one-shot at the full global
// budget (parallel composition across the disjoint batches of the bounded
// stream); emitted values are running sums so releases stay comparable.
RunResult RunBaselineBatch(std::span<const Record> stream,
                           const PipelineConfig& config);

}  // namespace dpsqlp

#endif  // DPSQLP_BASELINES_H_
