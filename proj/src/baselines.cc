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

#include "dpsqlp/baselines.h"

#include <cmath>
#include <set>
#include <vector>

#include "dpsqlp/error.h"
#include "dpsqlp/noise.h"

namespace dpsqlp {
namespace {

// Disjoint sub-streams for count and sum noise under one (seed, key).
constexpr uint64_t kCountChannel = 1;
constexpr uint64_t kSumChannel = 2;

}  // namespace

OneShotParams MakeOneShotParams(DpBudget per_run,
                                const SensitivityConfig& sensitivity,
                                SplitRatios ratios) {
  const BudgetSplit split = SplitBudget(per_run, ratios);
  const double c = static_cast<double>(sensitivity.max_records_per_user);
  OneShotParams p;
  p.budget = per_run;
  // Unique-count query: removing one user moves at most C per-key counts by
  // one each, so L2 sensitivity sqrt(C). Half the selection delta pays for
  // the noise, half for the threshold.
  const DpBudget count_budget{split.key_selection.epsilon,
                              split.key_selection.delta / 2.0};
  p.count_sigma = CalibrateSigma(1, count_budget, std::sqrt(c)).sigma;
  // Keys owned entirely by one user have true unique count 1; the threshold
  // keeps each of that user's <= C keys below the release bar except with
  // probability delta_threshold in total.
  const double delta_threshold = split.key_selection.delta / 2.0;
  p.threshold =
      1.0 + p.count_sigma * NormalQuantile(1.0 - delta_threshold / c);
  p.sum_sigma = CalibrateSigma(1, split.aggregation, sensitivity.L1()).sigma;
  return p;
}

std::map<std::string, KeyAggregate> AggregateByKey(
    std::span<const Record> bounded) {
  std::map<std::string, KeyAggregate> agg;
  std::map<std::string, std::set<std::string>> users;
  for (const Record& r : bounded) {
    KeyAggregate& a = agg[r.key];
    a.sum += r.value;
    if (users[r.key].insert(r.user_id).second) ++a.unique_users;
  }
  return agg;
}

std::map<std::string, double> OneShotDpHistogram(
    const std::map<std::string, KeyAggregate>& aggregates,
    const OneShotParams& params, uint64_t seed) {
  std::map<std::string, double> out;
  for (const auto& [key, agg] : aggregates) {
    const uint64_t key_seed = Mix(seed, HashString(key));
    const double noisy_count =
        static_cast<double>(agg.unique_users) +
        GaussianFromKey(Mix(key_seed, kCountChannel), params.count_sigma);
    if (noisy_count <= params.threshold) continue;
    out[key] = agg.sum +
               GaussianFromKey(Mix(key_seed, kSumChannel), params.sum_sigma);
  }
  return out;
}

namespace {

RunResult RunBaselineCommon(std::span<const Record> stream,
                            const PipelineConfig& cfg, bool repeated) {
  Require(cfg.triggers_per_window >= 1, ErrorKind::kInvalidParameter,
          "baseline: triggers per window must be >= 1");
  const SensitivityConfig sens{cfg.max_records_per_user, cfg.value_clamp};
  const int64_t T = cfg.triggers_per_window;
  const DpBudget total{cfg.epsilon, cfg.delta};
  const DpBudget per_run = repeated ? PerRunBudgetOptimal(total, T) : total;
  const OneShotParams params = MakeOneShotParams(per_run, sens, cfg.split);
  const uint64_t domain =
      repeated ? kSeedDomainBaselineRepeated : kSeedDomainBaselineBatch;

  const BucketedStream bucketed = AssignWindows(
      stream, cfg.window, T, cfg.allowed_delay_seconds);

  UserBudgetTable users;
  std::vector<Release> releases;
  EngineCounters counters;
  counters.late_dropped = bucketed.late_dropped;

  static const std::vector<Record> kEmptyBatch;
  int64_t ordinal = 0;
  for (const auto& [window_id, slots] : bucketed.batches) {
    // Per-window working state.
    std::map<std::string, KeyAggregate> prefix_agg;
    std::map<std::string, std::set<std::string>> prefix_users;
    std::map<std::string, double> cumulative;
    for (int64_t slot = 1; slot <= T; ++slot) {
      const int64_t g = ordinal * T + slot;
      const auto it = slots.find(slot);
      const std::vector<Record>& batch =
          it == slots.end() ? kEmptyBatch : it->second;
      counters.records_in += static_cast<int64_t>(batch.size());
      std::vector<Record> scoped;
      std::span<const Record> to_bound = batch;
      if (cfg.user_budget_per_window) {
        scoped.assign(batch.begin(), batch.end());
        for (Record& r : scoped) {
          r.user_id = "w" + std::to_string(window_id) + "|" + r.user_id;
        }
        to_bound = scoped;
      }
      const std::vector<Record> bounded =
          BoundContributions(to_bound, users, sens);
      counters.admitted += static_cast<int64_t>(bounded.size());
      counters.bound_dropped += static_cast<int64_t>(batch.size()) -
                                static_cast<int64_t>(bounded.size());

      std::map<std::string, double> hist;
      if (repeated) {
        for (const Record& r : bounded) {
          KeyAggregate& a = prefix_agg[r.key];
          a.sum += r.value;
          if (prefix_users[r.key].insert(r.user_id).second) ++a.unique_users;
        }
        hist = OneShotDpHistogram(
            prefix_agg, params,
            Mix(Mix(cfg.seed, domain), static_cast<uint64_t>(g)));
        for (const auto& [key, value] : hist) {
          releases.push_back({g, key, cfg.column, value});
        }
      } else {
        hist = OneShotDpHistogram(
            AggregateByKey(bounded), params,
            Mix(Mix(cfg.seed, domain), static_cast<uint64_t>(g)));
        for (const auto& [key, value] : hist) {
          cumulative[key] += value;
          releases.push_back({g, key, cfg.column, cumulative[key]});
        }
      }
      counters.releases += static_cast<int64_t>(hist.size());
      ++counters.triggers_processed;
    }
    ++ordinal;
  }

  RunResult result;
  result.releases = std::move(releases);
  result.report.counters = counters;
  result.report.budget = nlohmann::json{
      {"engine", repeated ? "baseline1" : "baseline2"},
      {"total", {{"epsilon", total.epsilon}, {"delta", total.delta}}},
      {"per_run",
       {{"epsilon", per_run.epsilon}, {"delta", per_run.delta}}},
      {"runs_composed", repeated ? T : int64_t{1}},
      {"count_sigma", params.count_sigma},
      {"sum_sigma", params.sum_sigma},
      {"threshold", params.threshold},
  };
  return result;
}

}  // namespace

RunResult RunBaselineRepeated(std::span<const Record> stream,
                              const PipelineConfig& config) {
  return RunBaselineCommon(stream, config, /*repeated=*/true);
}

RunResult RunBaselineBatch(std::span<const Record> stream,
                           const PipelineConfig& config) {
  return RunBaselineCommon(stream, config, /*repeated=*/false);
}

}  // namespace dpsqlp
