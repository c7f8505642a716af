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

// Command-line front end: `run` replays a record stream through one of the
// engines, `generate` produces synthetic streams, `evaluate` scores releases
// against exact truth, `sweep` scans contribution bounds.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11/CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dpsqlp/baselines.h"
#include "dpsqlp/bench.h"
#include "dpsqlp/engine.h"
#include "dpsqlp/error.h"
#include "dpsqlp/ingest.h"
#include "dpsqlp/metrics.h"
#include "dpsqlp/synthetic.h"

namespace {

using dpsqlp::PipelineConfig;
using dpsqlp::Record;
using dpsqlp::StreamFormat;

struct RunOptions {
  std::string input;
  std::string format = "csv";
  std::string state;
  std::string engine = dpsqlp::kEngineDpSqlp;
  std::string output = "releases.jsonl";
  std::string report = "report.json";
  bool no_prediction = false;
  bool skip_bad = false;
  bool user_budget_per_window = false;
  double allowed_delay = -1.0;  // <0 = unlimited
  PipelineConfig cfg;
  double window_days = 1.0;
};

StreamFormat ParseFormat(const std::string& name) {
  if (name == "csv") return StreamFormat::kCsv;
  if (name == "jsonl") return StreamFormat::kJsonl;
  dpsqlp::Fail(dpsqlp::ErrorKind::kInvalidParameter,
               "unknown format: " + name);
}

void AddBudgetFlags(CLI::App* app, RunOptions* opt) {
  app->add_option("--epsilon", opt->cfg.epsilon, "Total privacy epsilon");
  app->add_option("--delta", opt->cfg.delta, "Total privacy delta");
  app->add_option("--beta", opt->cfg.beta,
                  "Per-key false-release budget per window");
  app->add_option("--c", opt->cfg.max_records_per_user,
                  "Max records per user (contribution bound)");
  app->add_option("--mu", opt->cfg.mu, "Noiseless tracking pre-filter");
  app->add_option("--clamp", opt->cfg.value_clamp, "Per-record value clamp");
  app->add_option("--triggers", opt->cfg.triggers_per_window,
                  "Triggers per window");
  app->add_option("--window-days", opt->window_days, "Window length in days");
  app->add_option("--seed", opt->cfg.seed, "Noise derivation seed");
}

void FinishConfig(RunOptions* opt) {
  opt->cfg.window.length_seconds =
      static_cast<int64_t>(opt->window_days * 86400.0);
  opt->cfg.enable_prediction = !opt->no_prediction;
  opt->cfg.state_path = opt->state;
  opt->cfg.user_budget_per_window = opt->user_budget_per_window;
  if (opt->allowed_delay >= 0.0) {
    opt->cfg.allowed_delay_seconds = opt->allowed_delay;
  }
}

int DoRun(const RunOptions& opt) {
  const std::vector<Record> stream =
      dpsqlp::ReadRecords(opt.input, ParseFormat(opt.format), opt.skip_bad);
  const dpsqlp::RunResult result =
      dpsqlp::RunEngine(stream, opt.cfg, opt.engine);
  dpsqlp::WriteReleasesJsonl(opt.output, result.releases);
  nlohmann::json report = result.report.ToJson();
  report["engine"] = opt.engine;
  dpsqlp::WriteJsonFile(opt.report, report);
  std::cout << "records_in=" << result.report.counters.records_in
            << " releases=" << result.releases.size() << " output="
            << opt.output << " report=" << opt.report << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming differentially private histograms"};
  app.require_subcommand(1);

  // --- run ---
  RunOptions run_opt;
  CLI::App* run = app.add_subcommand("run", "Replay a stream through an engine");
  run->add_option("--input", run_opt.input, "Input record stream")->required();
  run->add_option("--input-format", run_opt.format, "csv or jsonl");
  run->add_option("--state", run_opt.state,
                  "State directory (omit for in-memory)");
  run->add_option("--engine", run_opt.engine, "dpsqlp, baseline1 or baseline2")
      ->check(CLI::IsMember({dpsqlp::kEngineDpSqlp,
                             dpsqlp::kEngineBaselineRepeated,
                             dpsqlp::kEngineBaselineBatch}));
  run->add_option("--output", run_opt.output, "Releases (JSON lines)");
  run->add_option("--report", run_opt.report, "Run report (JSON)");
  run->add_flag("--no-prediction", run_opt.no_prediction,
                "Disable empty-key release prediction (full scan)");
  run->add_flag("--skip-bad-records", run_opt.skip_bad,
                "Skip malformed input lines instead of aborting");
  run->add_flag("--user-budget-per-window", run_opt.user_budget_per_window,
                "Scope user contribution budgets per window");
  run->add_option("--allowed-delay-seconds", run_opt.allowed_delay,
                  "Drop records later than this behind the watermark");
  AddBudgetFlags(run, &run_opt);

  // --- generate ---
  dpsqlp::SyntheticConfig gen_cfg;
  std::string gen_out = "stream.csv";
  double gen_window_days = 1.0;
  CLI::App* gen = app.add_subcommand("generate", "Generate a synthetic stream");
  gen->add_option("--users", gen_cfg.users, "Number of users");
  gen->add_option("--key-space", gen_cfg.key_space, "Number of distinct keys");
  gen->add_option("--record-q", gen_cfg.record_q, "Records/user shift");
  gen->add_option("--record-s", gen_cfg.record_s, "Records/user exponent");
  gen->add_option("--record-support", gen_cfg.record_support,
                  "Records/user support");
  gen->add_option("--key-q", gen_cfg.key_q, "Key popularity shift");
  gen->add_option("--key-s", gen_cfg.key_s, "Key popularity exponent");
  gen->add_option("--seed", gen_cfg.seed, "Generator seed");
  gen->add_option("--window-days", gen_window_days, "Window length in days");
  gen->add_option("--out", gen_out, "Output CSV path");

  // --- evaluate ---
  std::string eval_dp, eval_truth, eval_out = "metrics.json";
  std::string eval_truth_kind = "records";
  std::string eval_truth_format = "csv";
  CLI::App* eval = app.add_subcommand(
      "evaluate", "Score releases against exact ground truth");
  eval->add_option("--dp", eval_dp, "DP releases (JSON lines)")->required();
  eval->add_option("--truth", eval_truth,
                   "Truth source: record stream or histogram JSON")
      ->required();
  eval->add_option("--truth-kind", eval_truth_kind, "records or histogram");
  eval->add_option("--truth-format", eval_truth_format,
                   "csv or jsonl (for --truth-kind records)");
  eval->add_option("--out", eval_out, "Metrics output (JSON)");

  // --- sweep ---
  RunOptions sweep_opt;
  std::vector<int64_t> sweep_c = {1, 2, 5, 10, 17, 25, 32, 50};
  std::string sweep_out = "sweep.json";
  CLI::App* sweep = app.add_subcommand(
      "sweep", "Scan contribution bounds with the streaming engine");
  sweep->add_option("--input", sweep_opt.input, "Input record stream")
      ->required();
  sweep->add_option("--input-format", sweep_opt.format, "csv or jsonl");
  sweep->add_option("--c-values", sweep_c, "Contribution bounds to scan")
      ->delimiter(',');
  sweep->add_option("--out", sweep_out, "Sweep results (JSON)");
  AddBudgetFlags(sweep, &sweep_opt);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      FinishConfig(&run_opt);
      return DoRun(run_opt);
    }
    if (gen->parsed()) {
      gen_cfg.window_seconds = static_cast<int64_t>(gen_window_days * 86400.0);
      const std::vector<Record> stream = dpsqlp::GenerateSynthetic(gen_cfg);
      dpsqlp::WriteRecordsCsv(gen_out, stream);
      std::cout << "records=" << stream.size() << " output=" << gen_out
                << "\n";
      return 0;
    }
    if (eval->parsed()) {
      const std::vector<dpsqlp::Release> releases =
          dpsqlp::ReadReleasesJsonl(eval_dp);
      std::map<std::string, double> truth;
      if (eval_truth_kind == "records") {
        const std::vector<Record> stream =
            dpsqlp::ReadRecords(eval_truth, ParseFormat(eval_truth_format));
        truth = dpsqlp::GroundTruthFinal(stream);
      } else if (eval_truth_kind == "histogram") {
        truth = dpsqlp::ReadHistogramJson(eval_truth);
      } else {
        dpsqlp::Fail(dpsqlp::ErrorKind::kInvalidParameter,
                     "unknown truth kind: " + eval_truth_kind);
      }
      const dpsqlp::UtilityReport report =
          dpsqlp::UtilityMetrics(dpsqlp::FinalHistogram(releases), truth);
      dpsqlp::WriteJsonFile(eval_out, report.ToJson());
      std::cout << report.ToJson().dump() << "\n";
      return 0;
    }
    if (sweep->parsed()) {
      FinishConfig(&sweep_opt);
      const std::vector<Record> stream = dpsqlp::ReadRecords(
          sweep_opt.input, ParseFormat(sweep_opt.format), sweep_opt.skip_bad);
      const std::vector<dpsqlp::SweepPoint> points =
          dpsqlp::SweepContributionBound(stream, sweep_opt.cfg, sweep_c);
      nlohmann::json out = nlohmann::json::array();
      for (const dpsqlp::SweepPoint& p : points) out.push_back(p.ToJson());
      dpsqlp::WriteJsonFile(sweep_out, out);
      std::cout << "points=" << points.size() << " output=" << sweep_out
                << "\n";
      return 0;
    }
  } catch (const dpsqlp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
