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

#ifndef DPSQLP_ACCOUNTANT_H_
#define DPSQLP_ACCOUNTANT_H_

#include <cstdint>

namespace dpsqlp {

// Budget bookkeeping for the pipeline: zero-concentrated DP for the Gaussian
// tree mechanisms, approximate DP at the interfaces, plus the composition
// theorems the baselines and the key-selection rounds need.

struct ZcdpBudget {
  double rho = 0.0;  // >= 0
};

struct DpBudget {
  double epsilon = 0.0;  // >= 0
  double delta = 0.0;    // in [0, 1)
};

// How the global budget is divided between the two private subsystems.
// Epsilon is split by fraction; delta gives `delta_key_selection` of the
// total to key selection and the rest to aggregation.
struct SplitRatios {
  double epsilon_key_selection = 0.5;
  double delta_key_selection = 2.0 / 3.0;
};

struct BudgetSplit {
  DpBudget key_selection;
  DpBudget aggregation;
};

struct CalibrationResult {
  double sigma = 0.0;
  // Number of Gaussian compositions charged: max(1, ceil(log2(triggers))),
  // one per tree level actually paid for.
  int64_t tree_height = 0;
};

// rho of one Gaussian release with the given L2 sensitivity:
// rho = sensitivity^2 / (2 sigma^2).
ZcdpBudget ZcdpOfGaussian(double l2_sensitivity, double sigma);

// zCDP composes additively.
ZcdpBudget ComposeZcdp(ZcdpBudget a, ZcdpBudget b);

// Closed-form conversion rho -> epsilon at fixed delta:
// epsilon = rho + 2 sqrt(rho ln(1/delta)). Valid upper bound, never smaller
// than the tight conversion.
double ZcdpToDpClosed(ZcdpBudget budget, double delta);

// Tight numeric conversion: the smallest epsilon such that
//   min_{alpha > 1} exp((alpha-1)(alpha rho - epsilon)) (1 - 1/alpha)^alpha
//                   / (alpha - 1)  <= delta.
// Inner minimization over the Renyi order by bisection on the stationarity
// condition, outer bisection on epsilon.
double ZcdpToDpTight(ZcdpBudget budget, double delta);

// Per-record guarantee -> per-user guarantee when one user owns at most
// `group_size` records: (C eps, (e^{C eps}-1)/(e^eps-1) delta).
DpBudget GroupPrivacy(DpBudget per_record, int64_t group_size);

// Advanced composition of `k` identical (eps, delta) mechanisms with slack
// delta_slack, taking the min with naive composition:
//   eps_total = min(k eps, eps sqrt(2k ln(1/slack)) + k eps (e^eps - 1))
//   delta_total = k delta + slack.
DpBudget AdvancedComposition(DpBudget per_round, int64_t k,
                             double delta_slack);

// Optimal homogeneous composition of `k` identical (eps, delta) mechanisms
// with slack delta_slack: eps_total = (k - 2i*) eps for the largest i* whose
// composition tail (a binomial sum over e^{j eps} terms, evaluated in
// log-space) stays within the slack; delta_total = 1-(1-delta)^k (1-slack).
// Never worse than AdvancedComposition at the same slack.
DpBudget OptimalComposition(DpBudget per_round, int64_t k,
                            double delta_slack);

// Smallest sigma such that a height-max(1, ceil(log2 triggers)) stack of
// Gaussians with the given per-node L2 sensitivity satisfies `target`
// end-to-end under the tight zCDP conversion. Bisection over
// [1e-6, 1e12]; raises kCalibration if the bracket fails.
CalibrationResult CalibrateSigma(int64_t triggers, DpBudget target,
                                 double node_l2_sensitivity);

// One-sided threshold at false-positive rate beta for a statistic with the
// given variance: tau = sqrt(variance) * Phi^{-1}(1 - beta).
double CalibrateTau(double variance, double beta);

// Divide a total budget between key selection and aggregation.
BudgetSplit SplitBudget(DpBudget total, SplitRatios ratios = {});

// Largest per-round budget whose `rounds`-fold advanced composition (slack
// total.delta/2, per-round delta total.delta/(2*rounds)) stays within
// `total`. rounds == 1 returns `total` unchanged.
DpBudget PerRoundBudget(DpBudget total, int64_t rounds);

// Largest per-run budget whose `runs`-fold optimal composition (slack
// total.delta/2, per-run delta chosen so the composed delta equals
// total.delta) stays within `total`.
DpBudget PerRunBudgetOptimal(DpBudget total, int64_t runs);

// Standard normal quantile / CDF (shared by calibration, thresholds, tests).
double NormalQuantile(double p);
double NormalCdf(double x);

}  // namespace dpsqlp

#endif  // DPSQLP_ACCOUNTANT_H_
