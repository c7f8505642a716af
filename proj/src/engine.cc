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

#include "dpsqlp/engine.h"

#include <algorithm>
#include <utility>

#include "dpsqlp/bounding.h"
#include "dpsqlp/error.h"
#include "dpsqlp/noise.h"
#include "dpsqlp/tree.h"

namespace dpsqlp {
namespace {

int64_t FloorDiv(int64_t a, int64_t b) {
  int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

int64_t CeilLog2(int64_t n) {
  int64_t h = 0;
  while ((int64_t{1} << h) < n) ++h;
  return h;
}

void ValidateConfig(const PipelineConfig& cfg) {
  Require(cfg.triggers_per_window >= 1, ErrorKind::kInvalidParameter,
          "engine: triggers per window must be >= 1");
  Require(cfg.max_records_per_user >= 1, ErrorKind::kInvalidParameter,
          "engine: max records per user must be >= 1");
  Require(cfg.value_clamp > 0.0, ErrorKind::kInvalidParameter,
          "engine: clamp must be positive");
  Require(cfg.mu >= 0.0, ErrorKind::kInvalidParameter,
          "engine: mu must be >= 0");
  Require(cfg.beta > 0.0 && cfg.beta <= 0.5, ErrorKind::kInvalidParameter,
          "engine: beta outside (0, 0.5]");
  Require(cfg.window.length_seconds > 0, ErrorKind::kInvalidParameter,
          "engine: window length must be positive");
  Require(cfg.allowed_delay_seconds >= 0.0, ErrorKind::kInvalidParameter,
          "engine: allowed delay must be >= 0");
}

}  // namespace

nlohmann::json EngineCounters::ToJson() const {
  return nlohmann::json{
      {"records_in", records_in},
      {"late_dropped", late_dropped},
      {"bound_dropped", bound_dropped},
      {"admitted", admitted},
      {"releases", releases},
      {"predictions_written", predictions_written},
      {"predictions_fired", predictions_fired},
      {"predictions_superseded", predictions_superseded},
      {"triggers_processed", triggers_processed},
  };
}

EngineCounters EngineCounters::FromJson(const nlohmann::json& j) {
  EngineCounters c;
  if (!j.is_object() || j.empty()) return c;
  c.records_in = j.value("records_in", int64_t{0});
  c.late_dropped = j.value("late_dropped", int64_t{0});
  c.bound_dropped = j.value("bound_dropped", int64_t{0});
  c.admitted = j.value("admitted", int64_t{0});
  c.releases = j.value("releases", int64_t{0});
  c.predictions_written = j.value("predictions_written", int64_t{0});
  c.predictions_fired = j.value("predictions_fired", int64_t{0});
  c.predictions_superseded = j.value("predictions_superseded", int64_t{0});
  c.triggers_processed = j.value("triggers_processed", int64_t{0});
  return c;
}

nlohmann::json RunReport::ToJson() const {
  return nlohmann::json{
      {"counters", counters.ToJson()},
      {"budget", budget},
      {"key_reads", key_reads},
      {"key_writes", key_writes},
      {"keys_tracked", keys_tracked},
  };
}

BucketedStream AssignWindows(std::span<const Record> stream,
                             const WindowSpec& window,
                             int64_t triggers_per_window,
                             double allowed_delay_seconds) {
  Require(window.length_seconds > 0, ErrorKind::kInvalidParameter,
          "assign_windows: window length must be positive");
  Require(triggers_per_window >= 1, ErrorKind::kInvalidParameter,
          "assign_windows: triggers per window must be >= 1");
  BucketedStream out;
  double watermark = -std::numeric_limits<double>::infinity();
  for (const Record& r : stream) {
    const double ts = static_cast<double>(r.timestamp);
    if (ts < watermark - allowed_delay_seconds) {
      ++out.late_dropped;
      continue;
    }
    watermark = std::max(watermark, ts);
    const int64_t wid = FloorDiv(r.timestamp - window.origin,
                                 window.length_seconds);
    const int64_t offset =
        r.timestamp - (window.origin + wid * window.length_seconds);
    // slot = floor(offset * T / length) + 1, exact in 128-bit.
    const int64_t slot =
        static_cast<int64_t>(static_cast<__int128>(offset) *
                             triggers_per_window / window.length_seconds) +
        1;
    out.batches[wid][slot].push_back(r);
  }
  return out;
}

DpSqlpEngine::DpSqlpEngine(const PipelineConfig& config, StateStore* store)
    : cfg_(config), store_(store) {
  Require(store != nullptr, ErrorKind::kInvalidParameter,
          "engine: null state store");
  ValidateConfig(cfg_);
  const int64_t T = cfg_.triggers_per_window;
  const int64_t C = cfg_.max_records_per_user;

  BudgetSplit split;
  const bool need_budget = !cfg_.selection_sigma_override.has_value() ||
                           !cfg_.aggregation_sigma_override.has_value();
  if (need_budget) {
    split = SplitBudget({cfg_.epsilon, cfg_.delta}, cfg_.split);
  }
  budget_ = nlohmann::json::object();
  budget_["total"] = {{"epsilon", cfg_.epsilon}, {"delta", cfg_.delta}};

  if (cfg_.selection_sigma_override.has_value()) {
    selection_sigma_ = *cfg_.selection_sigma_override;
    Require(selection_sigma_ >= 0.0, ErrorKind::kInvalidParameter,
            "engine: selection sigma override must be >= 0");
    budget_["key_selection"] = {{"sigma", selection_sigma_},
                                {"overridden", true}};
  } else {
    // One unique-count contribution per user and round; C selection rounds
    // composed within the key-selection share.
    const DpBudget per_round = PerRoundBudget(split.key_selection, C);
    const CalibrationResult cal = CalibrateSigma(T, per_round, 1.0);
    selection_sigma_ = cal.sigma;
    budget_["key_selection"] = {
        {"epsilon", split.key_selection.epsilon},
        {"delta", split.key_selection.delta},
        {"rounds", C},
        {"per_round_epsilon", per_round.epsilon},
        {"per_round_delta", per_round.delta},
        {"sigma", selection_sigma_},
        {"compositions_charged", cal.tree_height},
    };
  }

  if (cfg_.aggregation_sigma_override.has_value()) {
    aggregation_sigma_ = *cfg_.aggregation_sigma_override;
    Require(aggregation_sigma_ >= 0.0, ErrorKind::kInvalidParameter,
            "engine: aggregation sigma override must be >= 0");
    budget_["aggregation"] = {{"sigma", aggregation_sigma_},
                              {"overridden", true}};
  } else {
    const SensitivityConfig sens{C, cfg_.value_clamp};
    const CalibrationResult cal = CalibrateSigma(T, split.aggregation,
                                                 sens.L1());
    aggregation_sigma_ = cal.sigma;
    budget_["aggregation"] = {
        {"epsilon", split.aggregation.epsilon},
        {"delta", split.aggregation.delta},
        {"sigma", aggregation_sigma_},
        {"node_sensitivity", sens.L1()},
        {"compositions_charged", cal.tree_height},
    };
  }

  // Per-trigger thresholds: a union bound spreads beta over the window's
  // triggers, so a never-qualifying key is falsely released with probability
  // at most beta per round.
  tau_.assign(static_cast<size_t>(T) + 1, 0.0);
  const int64_t height = CeilLog2(T);
  for (int64_t i = 1; i <= T; ++i) {
    if (cfg_.tau_override.has_value()) {
      tau_[static_cast<size_t>(i)] = *cfg_.tau_override;
    } else if (selection_sigma_ == 0.0) {
      tau_[static_cast<size_t>(i)] = 0.0;
    } else {
      tau_[static_cast<size_t>(i)] = CalibrateTau(
          PrefixVarianceFor(height, selection_sigma_, i),
          cfg_.beta / static_cast<double>(T));
    }
  }
  budget_["beta"] = cfg_.beta;
  budget_["mu"] = cfg_.mu;
}

std::string DpSqlpEngine::StoreKey(int64_t window_id,
                                   const std::string& key) const {
  return "w" + std::to_string(window_id) + "|" + key;
}

KeyState DpSqlpEngine::MakeKeyState(int64_t window_id,
                                    const std::string& key) const {
  const std::string skey = StoreKey(window_id, key);
  KeyState s;
  s.key = key;
  s.selection = KeySelectionState(
      Mix(Mix(cfg_.seed, kSeedDomainSelection), HashString(skey)));
  s.aggregation = AggregationState(
      Mix(Mix(cfg_.seed, kSeedDomainAggregation), HashString(skey)),
      aggregation_sigma_, cfg_.triggers_per_window, cfg_.column);
  return s;
}

void DpSqlpEngine::MaybeHook(int64_t global_trigger, int step) {
  if (hook_) hook_(global_trigger, step);
}

RunResult DpSqlpEngine::Run(std::span<const Record> stream) {
  counters_ = EngineCounters::FromJson(store_->counters());
  const BucketedStream bucketed = AssignWindows(
      stream, cfg_.window, cfg_.triggers_per_window,
      cfg_.allowed_delay_seconds);
  counters_.late_dropped = bucketed.late_dropped;

  const int64_t T = cfg_.triggers_per_window;
  static const std::vector<Record> kEmptyBatch;
  int64_t ordinal = 0;
  for (const auto& [window_id, slots] : bucketed.batches) {
    const int64_t window_base = ordinal * T;
    for (int64_t slot = 1; slot <= T; ++slot) {
      const int64_t g = window_base + slot;
      if (g <= store_->last_committed_trigger()) continue;
      const auto it = slots.find(slot);
      const std::vector<Record>& batch =
          it == slots.end() ? kEmptyBatch : it->second;
      ProcessTrigger(g, window_id, slot, window_base, batch);
    }
    ++ordinal;
  }
  return {store_->releases(), BuildReport()};
}

void DpSqlpEngine::ProcessTrigger(int64_t g, int64_t window_id, int64_t slot,
                                  int64_t window_base,
                                  std::span<const Record> batch) {
  const KeySelectionParams sel_params{cfg_.mu, selection_sigma_,
                                      cfg_.triggers_per_window,
                                      cfg_.max_records_per_user};
  const SensitivityConfig sens{cfg_.max_records_per_user, cfg_.value_clamp};

  MaybeHook(g, 0);

  // Step 1: contribution bounding (first served, per user, whole stream).
  counters_.records_in += static_cast<int64_t>(batch.size());
  std::vector<Record> scoped;
  std::span<const Record> to_bound = batch;
  if (cfg_.user_budget_per_window) {
    scoped.assign(batch.begin(), batch.end());
    for (Record& r : scoped) {
      r.user_id = "w" + std::to_string(window_id) + "|" + r.user_id;
    }
    to_bound = scoped;
  }
  const std::vector<Record> bounded =
      BoundContributions(to_bound, store_->users(), sens);
  counters_.admitted += static_cast<int64_t>(bounded.size());
  counters_.bound_dropped +=
      static_cast<int64_t>(batch.size()) - static_cast<int64_t>(bounded.size());
  MaybeHook(g, 1);

  // Step 2: group by key and fold values into aggregation buffers.
  struct Group {
    std::vector<Record> records;
    std::vector<std::string> users;
  };
  std::map<std::string, Group> groups;
  for (const Record& r : bounded) {
    Group& grp = groups[r.key];
    grp.users.push_back(r.user_id);
    grp.records.push_back(r);
  }
  std::map<std::string, KeyState*> loaded;  // raw key -> state
  for (auto& [key, grp] : groups) {
    KeyState& ks = store_->GetOrCreate(
        StoreKey(window_id, key),
        [&, this] { return MakeKeyState(window_id, key); });
    ks.aggregation.AccumulateDelta(grp.records, cfg_.value_clamp);
    loaded[key] = &ks;
    if (audit_) {
      for (const Record& r : grp.records) {
        ++audit_->admitted_records[r.user_id];
        ++audit_->value_records[r.user_id];
        audit_->value_mass[r.user_id] += std::abs(r.value);
      }
    }
  }
  MaybeHook(g, 2);

  // Step 3: key selection for batch keys, then prediction firings (or the
  // full scan when prediction is disabled).
  std::map<std::string, KeyState*> selected;  // store key -> state
  for (auto& [key, grp] : groups) {
    KeyState* ks = loaded[key];
    const std::string skey = StoreKey(window_id, key);
    if (ks->predicted_release.has_value()) {
      // Fresh data arrived at or before the predicted trigger; the batch
      // path takes over.
      store_->ClearPrediction(skey);
      ++counters_.predictions_superseded;
    }
    if (ks->selection.permanently_selected()) {
      selected.emplace(skey, ks);
      continue;
    }
    const int64_t round = ks->selection.rounds_completed();
    const std::vector<std::string> novel =
        ks->selection.Observe(slot, grp.users, sel_params);
    if (audit_) {
      for (const std::string& uid : novel) {
        ++audit_->selection_increments[uid];
        audit_->selection_leaves[uid].insert({skey, round, slot});
      }
    }
    if (!ks->selection.has_tree()) continue;  // still below mu
    const SelectionOutcome out =
        ks->selection.TestThreshold(slot, cfg_.mu, tau_);
    if (out.selected) {
      selected.emplace(skey, ks);
    } else if (cfg_.enable_prediction) {
      const std::optional<int64_t> p =
          ks->selection.PredictRelease(slot, cfg_.mu, tau_);
      if (p.has_value()) {
        store_->SetPrediction(skey, window_base + *p);
        ++counters_.predictions_written;
      }
    }
  }
  if (cfg_.enable_prediction) {
    // Keys whose predicted release falls due now; batch keys already cleared
    // their entries above.
    for (const std::string& skey : store_->DuePredictions(g)) {
      KeyState* ks = store_->Find(skey);
      Require(ks != nullptr, ErrorKind::kStateError,
              "engine: prediction index references unknown key " + skey);
      store_->ClearPrediction(skey);
      ks->selection.Observe(slot, {}, sel_params);
      const SelectionOutcome out =
          ks->selection.TestThreshold(slot, cfg_.mu, tau_);
      // The tree was frozen since the prediction, so the test must agree.
      Require(out.selected, ErrorKind::kStateError,
              "engine: predicted release did not pass its threshold test");
      selected.emplace(skey, ks);
      ++counters_.predictions_fired;
    }
  } else {
    for (const std::string& skey :
         store_->LiveTreeKeys("w" + std::to_string(window_id) + "|")) {
      KeyState* ks = store_->Find(skey);
      if (groups.count(ks->key) > 0) continue;  // already handled as batch
      ks->selection.Observe(slot, {}, sel_params);
      const SelectionOutcome out =
          ks->selection.TestThreshold(slot, cfg_.mu, tau_);
      if (out.selected) selected.emplace(skey, ks);
    }
  }
  MaybeHook(g, 3);

  // Step 4: hierarchical perturbation for the selected keys, then round
  // restarts and fresh predictions.
  std::vector<Release> trigger_releases;
  for (auto& [skey, ks] : selected) {
    trigger_releases.push_back(ks->aggregation.ReleaseAt(g, ks->key));
    ++counters_.releases;
    if (!ks->selection.permanently_selected()) {
      ks->selection.RestartAfterSelection(sel_params);
      if (cfg_.enable_prediction) {
        // A restarted round holds no tree, so this is always empty; kept as
        // the literal re-prediction step for symmetry.
        const std::optional<int64_t> p =
            ks->selection.PredictRelease(slot, cfg_.mu, tau_);
        if (p.has_value()) {
          store_->SetPrediction(skey, window_base + *p);
          ++counters_.predictions_written;
        }
      }
    }
  }
  MaybeHook(g, 4);

  ++counters_.triggers_processed;
  store_->CommitTrigger(g, trigger_releases, counters_.ToJson());
  MaybeHook(g, 5);
}

RunReport DpSqlpEngine::BuildReport() const {
  RunReport r;
  r.counters = counters_;
  r.budget = budget_;
  r.key_reads = store_->key_reads();
  r.key_writes = store_->key_writes();
  r.keys_tracked = store_->key_count();
  return r;
}

RunResult RunPipeline(std::span<const Record> stream,
                      const PipelineConfig& config) {
  StateStore store = config.state_path.empty()
                         ? StateStore()
                         : StateStore::Open(config.state_path);
  DpSqlpEngine engine(config, &store);
  RunResult result = engine.Run(stream);
  if (store.persistent()) store.Close();
  return result;
}

}  // namespace dpsqlp
