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

#ifndef DPSQLP_ENGINE_H_
#define DPSQLP_ENGINE_H_

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpsqlp/accountant.h"
#include "dpsqlp/record.h"
#include "dpsqlp/state_store.h"

namespace dpsqlp {

struct WindowSpec {
  int64_t origin = 0;              // epoch seconds of some window start
  int64_t length_seconds = 86400;  // fixed windows, half-open [start, end)
};

struct PipelineConfig {
  double epsilon = 6.0;
  double delta = 1e-9;
  double beta = 0.05;                // per-key false-release budget per window
  int64_t max_records_per_user = 1;  // C
  double mu = 0.0;
  double value_clamp = 1.0;          // L_m
  int64_t triggers_per_window = 100; // T
  WindowSpec window;
  uint64_t seed = 1;
  SplitRatios split;
  std::string state_path;            // empty = in-memory state
  bool enable_prediction = true;
  // Scope user contribution budgets per window instead of per stream.
  bool user_budget_per_window = false;
  double allowed_delay_seconds = std::numeric_limits<double>::infinity();
  std::string column = "value";

  // Test and debugging overrides; bypass budget calibration when set.
  std::optional<double> selection_sigma_override;
  std::optional<double> aggregation_sigma_override;
  std::optional<double> tau_override;
};

struct EngineCounters {
  int64_t records_in = 0;
  int64_t late_dropped = 0;
  int64_t bound_dropped = 0;
  int64_t admitted = 0;
  int64_t releases = 0;
  int64_t predictions_written = 0;
  int64_t predictions_fired = 0;
  int64_t predictions_superseded = 0;
  int64_t triggers_processed = 0;

  nlohmann::json ToJson() const;
  static EngineCounters FromJson(const nlohmann::json& j);
};

struct RunReport {
  EngineCounters counters;
  nlohmann::json budget;
  int64_t key_reads = 0;
  int64_t key_writes = 0;
  int64_t keys_tracked = 0;

  nlohmann::json ToJson() const;
};

struct RunResult {
  std::vector<Release> releases;
  RunReport report;
};

// Stream records bucketed into (window, trigger slot) micro-batches.
// Arrival order is file order; a record older than the watermark minus the
// allowed delay is dropped and counted.
struct BucketedStream {
  std::map<int64_t, std::map<int64_t, std::vector<Record>>> batches;
  int64_t late_dropped = 0;
};

BucketedStream AssignWindows(std::span<const Record> stream,
                             const WindowSpec& window,
                             int64_t triggers_per_window,
                             double allowed_delay_seconds);

// Per-user structural contribution accounting, for sensitivity checks: how
// many records each user landed after bounding, how many unique-count
// increments it caused (and at which selection-tree leaves), and how much
// value mass it deposited into aggregation buffers.
struct ContributionAudit {
  std::map<std::string, int64_t> admitted_records;
  std::map<std::string, int64_t> selection_increments;
  // (store key, round, trigger slot) leaves the user's count touched.
  std::map<std::string, std::set<std::tuple<std::string, int64_t, int64_t>>>
      selection_leaves;
  std::map<std::string, int64_t> value_records;
  std::map<std::string, double> value_mass;
};

// Called between engine steps: step 0 = trigger start, 1 = after bounding,
// 2 = after buffering, 3 = after selection, 4 = after perturbation,
// 5 = after commit. Tests throw from here to simulate crashes.
using FaultHook = std::function<void(int64_t trigger, int step)>;

class DpSqlpEngine {
 public:
  // Derives noise scales and thresholds from the global budget (unless
  // overridden) and validates the configuration. `store` must outlive the
  // engine.
  DpSqlpEngine(const PipelineConfig& config, StateStore* store);

  // Replays the stream through every trigger of every populated window,
  // committing once per trigger. Triggers already committed in `store` are
  // skipped, so rerunning after a crash resumes exactly where it stopped.
  RunResult Run(std::span<const Record> stream);

  double selection_sigma() const { return selection_sigma_; }
  double aggregation_sigma() const { return aggregation_sigma_; }
  std::span<const double> tau_table() const { return tau_; }
  const nlohmann::json& budget_report() const { return budget_; }

  void set_fault_hook(FaultHook hook) { hook_ = std::move(hook); }
  void set_audit(ContributionAudit* audit) { audit_ = audit; }

 private:
  void ProcessTrigger(int64_t global_trigger, int64_t window_id, int64_t slot,
                      int64_t window_base, std::span<const Record> batch);
  std::string StoreKey(int64_t window_id, const std::string& key) const;
  KeyState MakeKeyState(int64_t window_id, const std::string& key) const;
  void MaybeHook(int64_t global_trigger, int step);
  RunReport BuildReport() const;

  PipelineConfig cfg_;
  StateStore* store_;
  double selection_sigma_ = 0.0;
  double aggregation_sigma_ = 0.0;
  std::vector<double> tau_;  // slot-indexed, [0] unused
  nlohmann::json budget_;
  EngineCounters counters_;
  FaultHook hook_;
  ContributionAudit* audit_ = nullptr;
};

// Convenience wrapper: opens (or creates) the configured state store, runs
// the stream, closes the store.
RunResult RunPipeline(std::span<const Record> stream,
                      const PipelineConfig& config);

}  // namespace dpsqlp

#endif  // DPSQLP_ENGINE_H_
