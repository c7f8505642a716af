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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpsqlp/engine.h"
#include "dpsqlp/error.h"
#include "dpsqlp/ingest.h"
#include "dpsqlp/metrics.h"
#include "dpsqlp/noise.h"

namespace dpsqlp {
namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("dpsqlp_engine_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

// --- independent noiseless oracle -----------------------------------------
// Reimplements, from the released-stream definition alone: fixed windows,
// first-come per-user admission with clamping, and a release of the exact
// per-key running sum at every trigger whose micro-batch contains at least
// one admitted record for the key. Written with different data structures
// than the engine on purpose.
std::vector<Release> NoiselessOracle(const std::vector<Record>& stream,
                                     const PipelineConfig& cfg) {
  const int64_t len = cfg.window.length_seconds;
  const int64_t T = cfg.triggers_per_window;
  // (window id, slot) -> records in file order.
  std::map<int64_t, std::map<int64_t, std::vector<Record>>> buckets;
  for (const Record& r : stream) {
    int64_t wid = (r.timestamp - cfg.window.origin) / len;
    if ((r.timestamp - cfg.window.origin) % len < 0) --wid;
    const int64_t off = r.timestamp - (cfg.window.origin + wid * len);
    const int64_t slot = off * T / len + 1;
    buckets[wid][slot].push_back(r);
  }
  std::map<std::string, int64_t> used;  // per user (or per window|user)
  std::vector<Release> out;
  int64_t ordinal = 0;
  for (const auto& [wid, slots] : buckets) {
    std::map<std::string, double> running;  // per key within this window
    for (int64_t slot = 1; slot <= T; ++slot) {
      const auto it = slots.find(slot);
      if (it == slots.end()) continue;
      std::map<std::string, double> batch_sum;
      std::map<std::string, bool> batch_has;
      for (const Record& r : it->second) {
        const std::string budget_key =
            cfg.user_budget_per_window
                ? "w" + std::to_string(wid) + "|" + r.user_id
                : r.user_id;
        if (used[budget_key] >= cfg.max_records_per_user) continue;
        ++used[budget_key];
        const double v =
            std::min(cfg.value_clamp, std::max(-cfg.value_clamp, r.value));
        batch_sum[r.key] += v;
        batch_has[r.key] = true;
      }
      for (const auto& [key, has] : batch_has) {
        if (!has) continue;
        running[key] += batch_sum[key];
        out.push_back(Release{ordinal * T + slot, key, cfg.column,
                              running[key]});
      }
    }
    ++ordinal;
  }
  return out;
}

// Random stream of dyadic values (exactly representable sums in any
// association order, so equality below is exact).
std::vector<Record> RandomStream(uint64_t seed, int64_t n, int64_t users,
                                 int64_t keys, int64_t window_seconds) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int64_t> ts(0, window_seconds - 1);
  std::uniform_int_distribution<int64_t> user(0, users - 1);
  std::uniform_int_distribution<int64_t> key(0, keys - 1);
  const double vals[] = {1.0, -1.0, 0.5, 2.0, -3.0, 0.0};
  std::uniform_int_distribution<int> val(0, 5);
  std::vector<Record> out;
  for (int64_t i = 0; i < n; ++i) {
    out.push_back(Record{"k" + std::to_string(key(gen)), vals[val(gen)],
                         ts(gen), "u" + std::to_string(user(gen))});
  }
  std::sort(out.begin(), out.end(), [](const Record& a, const Record& b) {
    return a.timestamp < b.timestamp;
  });
  return out;
}

PipelineConfig NoiselessConfig(int64_t T, int64_t C) {
  PipelineConfig cfg;
  cfg.triggers_per_window = T;
  cfg.max_records_per_user = C;
  cfg.value_clamp = 1.0;
  cfg.mu = 0.0;
  cfg.selection_sigma_override = 0.0;
  cfg.aggregation_sigma_override = 0.0;
  cfg.tau_override = 0.0;
  return cfg;
}

TEST_CASE("window assignment boundaries") {
  WindowSpec w{0, 86400};
  std::vector<Record> stream = {
      {"a", 1, 0, "u"},          // window 0, slot 1
      {"b", 1, 21599, "u"},      // window 0, slot 1 (T = 4: 21600 per slot)
      {"c", 1, 21600, "u"},      // window 0, slot 2
      {"d", 1, 86399, "u"},      // window 0, slot 4
      {"e", 1, 86400, "u"},      // window 1, slot 1
      {"f", 1, -1, "u"},         // window -1, slot 4
  };
  const BucketedStream b = AssignWindows(stream, w, 4,
                                         std::numeric_limits<double>::infinity());
  CHECK(b.late_dropped == 0);
  REQUIRE(b.batches.count(0) == 1);
  CHECK(b.batches.at(0).at(1).size() == 2);
  CHECK(b.batches.at(0).at(2).size() == 1);
  CHECK(b.batches.at(0).at(4).size() == 1);
  CHECK(b.batches.at(1).at(1).size() == 1);
  CHECK(b.batches.at(-1).at(4).size() == 1);
}

TEST_CASE("watermark drops records later than the allowed delay") {
  WindowSpec w{0, 1000};
  std::vector<Record> stream = {
      {"a", 1, 100, "u"},
      {"b", 1, 500, "u"},  // watermark now 500
      {"c", 1, 390, "u"},  // 390 < 500 - 100: dropped
      {"d", 1, 401, "u"},  // within delay: kept
  };
  const BucketedStream b = AssignWindows(stream, w, 10, 100.0);
  CHECK(b.late_dropped == 1);
  int64_t kept = 0;
  for (const auto& [wid, slots] : b.batches) {
    for (const auto& [slot, records] : slots) {
      kept += static_cast<int64_t>(records.size());
    }
  }
  CHECK(kept == 3);
}

TEST_CASE("noiseless runs equal the exact bounded running sums") {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    PipelineConfig cfg = NoiselessConfig(/*T=*/10, /*C=*/3);
    cfg.seed = seed;
    const std::vector<Record> stream =
        RandomStream(seed, 500, 40, 12, cfg.window.length_seconds);
    const RunResult run = RunPipeline(stream, cfg);
    const std::vector<Release> expected = NoiselessOracle(stream, cfg);
    CAPTURE(seed);
    CHECK(run.releases == expected);
  }
}

TEST_CASE("noiseless equivalence holds across multiple windows") {
  PipelineConfig cfg = NoiselessConfig(/*T=*/5, /*C=*/2);
  std::vector<Record> stream;
  std::mt19937_64 gen(77);
  std::uniform_int_distribution<int64_t> ts(0, 3 * 86400 - 1);
  std::uniform_int_distribution<int64_t> user(0, 9);
  std::uniform_int_distribution<int64_t> key(0, 4);
  for (int i = 0; i < 300; ++i) {
    stream.push_back(Record{"k" + std::to_string(key(gen)), 1.0, ts(gen),
                            "u" + std::to_string(user(gen))});
  }
  std::sort(stream.begin(), stream.end(),
            [](const Record& a, const Record& b) {
              return a.timestamp < b.timestamp;
            });
  const RunResult run = RunPipeline(stream, cfg);
  CHECK(run.releases == NoiselessOracle(stream, cfg));
  // Running sums reset between windows: the same key releases from zero in
  // a later window.
  CHECK(run.report.counters.triggers_processed == 15);  // 3 windows x T
}

TEST_CASE("per-window user budgets admit per window") {
  PipelineConfig cfg = NoiselessConfig(/*T=*/2, /*C=*/1);
  std::vector<Record> stream = {
      {"k", 1.0, 0, "u"},          // window 0
      {"k", 1.0, 86400 + 5, "u"},  // window 1, same user
  };
  const RunResult global = RunPipeline(stream, cfg);
  REQUIRE(global.releases.size() == 1);  // second record out of budget

  cfg.user_budget_per_window = true;
  const RunResult scoped = RunPipeline(stream, cfg);
  REQUIRE(scoped.releases.size() == 2);
  CHECK(scoped.releases == NoiselessOracle(stream, cfg));
  CHECK(scoped.report.counters.bound_dropped == 0);
  CHECK(global.report.counters.bound_dropped == 1);
}

PipelineConfig NoisyConfig(uint64_t seed) {
  PipelineConfig cfg;
  cfg.triggers_per_window = 32;
  cfg.max_records_per_user = 2;
  cfg.mu = 0.0;
  cfg.seed = seed;
  cfg.selection_sigma_override = 4.0;
  cfg.aggregation_sigma_override = 2.0;
  cfg.tau_override = 3.0;
  return cfg;
}

TEST_CASE("prediction and full scan release byte-identical streams") {
  int64_t total_fired = 0;
  for (uint64_t seed = 1; seed <= 15; ++seed) {
    // Sparse appearances over many keys so most threshold crossings happen
    // on noise alone, through the prediction path.
    const std::vector<Record> stream =
        RandomStream(Mix(900, seed), 120, 30, 50, 86400);
    PipelineConfig with_pred = NoisyConfig(seed);
    PipelineConfig no_pred = NoisyConfig(seed);
    no_pred.enable_prediction = false;

    const RunResult a = RunPipeline(stream, with_pred);
    const RunResult b = RunPipeline(stream, no_pred);
    CAPTURE(seed);
    CHECK(a.releases == b.releases);
    // Prediction must not read more keys than the exhaustive scan.
    CHECK(a.report.key_reads <= b.report.key_reads);
    total_fired += a.report.counters.predictions_fired;
  }
  // The equivalence is vacuous if the prediction path never fires.
  CHECK(total_fired > 0);
}

TEST_CASE("in-memory and persistent runs are identical") {
  TempDir dir("persist");
  const std::vector<Record> stream = RandomStream(5, 300, 25, 10, 86400);
  PipelineConfig mem_cfg = NoisyConfig(3);
  const RunResult mem = RunPipeline(stream, mem_cfg);

  PipelineConfig disk_cfg = NoisyConfig(3);
  disk_cfg.state_path = dir.str();
  const RunResult disk = RunPipeline(stream, disk_cfg);
  CHECK(mem.releases == disk.releases);

  // Re-running over the same store is a no-op: everything already
  // committed, so the release history is returned unchanged.
  const RunResult again = RunPipeline(stream, disk_cfg);
  CHECK(again.releases == disk.releases);
  CHECK(again.report.counters.triggers_processed ==
        disk.report.counters.triggers_processed);
}

struct InjectedCrash {};

TEST_CASE("crash at every step boundary resumes to the identical run") {
  const std::vector<Record> stream = RandomStream(9, 200, 20, 8, 86400);
  PipelineConfig base = NoisyConfig(11);
  base.triggers_per_window = 6;

  const RunResult reference = RunPipeline(stream, base);
  REQUIRE(!reference.releases.empty());

  for (int64_t crash_trigger = 1; crash_trigger <= 6; ++crash_trigger) {
    for (int step = 0; step <= 5; ++step) {
      TempDir dir("crash_" + std::to_string(crash_trigger) + "_" +
                  std::to_string(step));
      PipelineConfig cfg = base;
      cfg.state_path = dir.str();
      bool crashed = false;
      {
        StateStore store = StateStore::Open(dir.str());
        DpSqlpEngine engine(cfg, &store);
        engine.set_fault_hook([&](int64_t g, int s) {
          if (g == crash_trigger && s == step) throw InjectedCrash{};
        });
        try {
          engine.Run(stream);
        } catch (const InjectedCrash&) {
          crashed = true;
        }
        // The store goes out of scope without Close(): a hard crash.
      }
      CHECK(crashed);
      StateStore resumed_store = StateStore::Open(dir.str());
      DpSqlpEngine resumed(cfg, &resumed_store);
      const RunResult result = resumed.Run(stream);
      CAPTURE(crash_trigger);
      CAPTURE(step);
      CHECK(result.releases == reference.releases);
      // User budgets never overshoot across the crash.
      for (const Record& r : stream) {
        CHECK(resumed_store.users().Used(r.user_id) <=
              base.max_records_per_user);
      }
      resumed_store.Close();
    }
  }
}

TEST_CASE("audit bounds every user by the contribution cap") {
  const int64_t C = 3;
  const std::vector<Record> stream = RandomStream(13, 600, 15, 10, 86400);
  PipelineConfig cfg = NoisyConfig(7);
  cfg.max_records_per_user = C;
  StateStore store;
  DpSqlpEngine engine(cfg, &store);
  ContributionAudit audit;
  engine.set_audit(&audit);
  engine.Run(stream);

  REQUIRE(!audit.admitted_records.empty());
  for (const auto& [user, n] : audit.admitted_records) {
    CHECK(n <= C);
  }
  for (const auto& [user, n] : audit.selection_increments) {
    // Each admitted record can raise at most one unique-count leaf.
    CHECK(n <= C);
    CHECK(static_cast<int64_t>(audit.selection_leaves[user].size()) <= C);
  }
  for (const auto& [user, n] : audit.value_records) {
    CHECK(n <= C);
    CHECK(std::fabs(audit.value_mass[user]) <=
          static_cast<double>(C) * cfg.value_clamp + 1e-12);
  }
}

TEST_CASE("late records are dropped and counted") {
  PipelineConfig cfg = NoiselessConfig(4, 5);
  cfg.allowed_delay_seconds = 50.0;
  std::vector<Record> stream = {
      {"a", 1.0, 1000, "u1"},
      {"b", 1.0, 900, "u2"},  // 900 < 1000 - 50: dropped
      {"c", 1.0, 980, "u3"},  // kept
  };
  const RunResult run = RunPipeline(stream, cfg);
  CHECK(run.report.counters.late_dropped == 1);
  // records_in counts what survives the watermark and enters a batch.
  CHECK(run.report.counters.records_in == 2);
  CHECK(run.report.counters.admitted == 2);
}

TEST_CASE("engine validates its configuration") {
  StateStore store;
  const auto bad = [&](auto mutate) {
    PipelineConfig cfg;
    mutate(cfg);
    CHECK_THROWS_AS(DpSqlpEngine(cfg, &store), Error);
  };
  bad([](PipelineConfig& c) { c.epsilon = 0.0; });
  bad([](PipelineConfig& c) { c.delta = 0.0; });
  bad([](PipelineConfig& c) { c.delta = 1.0; });
  bad([](PipelineConfig& c) { c.max_records_per_user = 0; });
  bad([](PipelineConfig& c) { c.triggers_per_window = 0; });
  bad([](PipelineConfig& c) { c.value_clamp = 0.0; });
  bad([](PipelineConfig& c) { c.beta = 0.0; });
  bad([](PipelineConfig& c) { c.mu = -1.0; });
  bad([](PipelineConfig& c) { c.window.length_seconds = 0; });
  CHECK_THROWS_AS(DpSqlpEngine(PipelineConfig{}, nullptr), Error);
}

TEST_CASE("budget report charges both subsystems") {
  PipelineConfig cfg;
  cfg.epsilon = 6.0;
  cfg.delta = 1e-9;
  cfg.max_records_per_user = 4;
  cfg.triggers_per_window = 64;
  StateStore store;
  DpSqlpEngine engine(cfg, &store);
  const nlohmann::json& b = engine.budget_report();
  CHECK(b.at("key_selection").at("epsilon").get<double>() == 3.0);
  CHECK(b.at("aggregation").at("epsilon").get<double>() == 3.0);
  CHECK(b.at("key_selection").at("rounds").get<int64_t>() == 4);
  CHECK(b.at("aggregation").at("node_sensitivity").get<double>() == 4.0);
  CHECK(engine.selection_sigma() > 0.0);
  CHECK(engine.aggregation_sigma() > 0.0);
  // More selection rounds must demand more noise per round.
  PipelineConfig cfg1 = cfg;
  cfg1.max_records_per_user = 1;
  DpSqlpEngine engine1(cfg1, &store);
  CHECK(engine.selection_sigma() > engine1.selection_sigma());

  // Thresholds grow with the prefix variance profile and stay positive.
  const auto tau = engine.tau_table();
  REQUIRE(tau.size() == 65);
  for (size_t i = 1; i < tau.size(); ++i) CHECK(tau[i] > 0.0);
}

TEST_CASE("releases flow through files unchanged") {
  TempDir dir("io");
  const std::vector<Record> stream = RandomStream(3, 150, 12, 6, 86400);
  const RunResult run = RunPipeline(stream, NoisyConfig(5));
  const std::string path = (fs::path(dir.str()) / "rel.jsonl").string();
  WriteReleasesJsonl(path, run.releases);
  CHECK(ReadReleasesJsonl(path) == run.releases);
}

}  // namespace
}  // namespace dpsqlp
