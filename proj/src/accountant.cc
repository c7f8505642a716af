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

#include "dpsqlp/accountant.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "dpsqlp/error.h"

namespace dpsqlp {
namespace {

constexpr double kSigmaLo = 1e-6;
constexpr double kSigmaHi = 1e12;

int64_t CeilLog2(int64_t n) {
  int64_t h = 0;
  while ((int64_t{1} << h) < n) ++h;
  return h;
}

// log(delta) achieved by rho-zCDP at a given epsilon, minimized over the
// Renyi order alpha. The objective
//   g(alpha) = (alpha-1)(alpha rho - eps) + alpha log(1 - 1/alpha)
//              - log(alpha - 1)
// has derivative (2 alpha - 1) rho - eps + log(1 - 1/alpha), which is
// strictly increasing, so the stationary point is found by bisection.
double LogDeltaForEpsilon(double rho, double eps) {
  if (rho == 0.0) return -std::numeric_limits<double>::infinity();
  auto deriv = [&](double alpha) {
    return (2.0 * alpha - 1.0) * rho - eps + std::log1p(-1.0 / alpha);
  };
  double lo = 1.0 + 1e-12;
  double hi = std::max(2.0, (eps + 1.0) / (2.0 * rho) + 2.0);
  while (deriv(hi) < 0.0) hi *= 2.0;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    (deriv(mid) < 0.0 ? lo : hi) = mid;
  }
  const double alpha = 0.5 * (lo + hi);
  return (alpha - 1.0) * (alpha * rho - eps) +
         alpha * std::log1p(-1.0 / alpha) - std::log(alpha - 1.0);
}

// log(1 + e^x) without overflow.
double Log1pExp(double x) {
  return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// log of the optimal-composition tail for slack index i: the probability mass
// by which k-fold composition at (k-2i) eps fails, as a binomial sum
// evaluated entirely in log-space.
double LogOptimalTail(double eps, int64_t k, int64_t i) {
  if (i <= 0) return -std::numeric_limits<double>::infinity();
  const double log_kfact = std::lgamma(static_cast<double>(k) + 1.0);
  const double log_denom = static_cast<double>(k) * Log1pExp(eps);
  double max_term = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(static_cast<size_t>(i));
  for (int64_t l = 0; l < i; ++l) {
    const double log_binom = log_kfact -
                             std::lgamma(static_cast<double>(l) + 1.0) -
                             std::lgamma(static_cast<double>(k - l) + 1.0);
    // e^{(k-l)eps} - e^{(k-2i+l)eps} = e^{(k-l)eps} (1 - e^{(2l-2i)eps}).
    const double log_diff =
        static_cast<double>(k - l) * eps +
        std::log1p(-std::exp(static_cast<double>(2 * l - 2 * i) * eps));
    const double t = log_binom + log_diff;
    terms.push_back(t);
    max_term = std::max(max_term, t);
  }
  if (!std::isfinite(max_term)) return -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - max_term);
  return max_term + std::log(sum) - log_denom;
}

void RequireBudget(const DpBudget& b, const char* who) {
  Require(b.epsilon >= 0.0 && std::isfinite(b.epsilon),
          ErrorKind::kInvalidParameter, std::string(who) + ": epsilon < 0");
  Require(b.delta >= 0.0 && b.delta < 1.0, ErrorKind::kInvalidParameter,
          std::string(who) + ": delta outside [0, 1)");
}

}  // namespace

ZcdpBudget ZcdpOfGaussian(double l2_sensitivity, double sigma) {
  Require(l2_sensitivity >= 0.0, ErrorKind::kInvalidParameter,
          "zcdp_of_gaussian: negative sensitivity");
  Require(sigma > 0.0, ErrorKind::kInvalidParameter,
          "zcdp_of_gaussian: sigma must be positive");
  return {l2_sensitivity * l2_sensitivity / (2.0 * sigma * sigma)};
}

ZcdpBudget ComposeZcdp(ZcdpBudget a, ZcdpBudget b) {
  Require(a.rho >= 0.0 && b.rho >= 0.0, ErrorKind::kInvalidParameter,
          "compose_zcdp: negative rho");
  return {a.rho + b.rho};
}

double ZcdpToDpClosed(ZcdpBudget budget, double delta) {
  Require(budget.rho >= 0.0, ErrorKind::kInvalidParameter,
          "zcdp_to_dp: negative rho");
  Require(delta > 0.0 && delta < 1.0, ErrorKind::kInvalidParameter,
          "zcdp_to_dp: delta outside (0, 1)");
  return budget.rho + 2.0 * std::sqrt(budget.rho * std::log(1.0 / delta));
}

double ZcdpToDpTight(ZcdpBudget budget, double delta) {
  Require(budget.rho >= 0.0, ErrorKind::kInvalidParameter,
          "zcdp_to_dp: negative rho");
  Require(delta > 0.0 && delta < 1.0, ErrorKind::kInvalidParameter,
          "zcdp_to_dp: delta outside (0, 1)");
  if (budget.rho == 0.0) return 0.0;
  const double log_delta = std::log(delta);
  if (LogDeltaForEpsilon(budget.rho, 0.0) <= log_delta) return 0.0;
  double lo = 0.0;
  double hi = ZcdpToDpClosed(budget, delta);  // always feasible
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    (LogDeltaForEpsilon(budget.rho, mid) > log_delta ? lo : hi) = mid;
  }
  return hi;
}

DpBudget GroupPrivacy(DpBudget per_record, int64_t group_size) {
  RequireBudget(per_record, "group_privacy");
  Require(group_size >= 1, ErrorKind::kInvalidParameter,
          "group_privacy: group size must be >= 1");
  if (group_size == 1) return per_record;
  const double c = static_cast<double>(group_size);
  const double eps = c * per_record.epsilon;
  double delta;
  if (per_record.epsilon == 0.0) {
    delta = c * per_record.delta;  // limit of (e^{C eps}-1)/(e^eps-1)
  } else {
    delta = per_record.delta * std::expm1(eps) / std::expm1(per_record.epsilon);
  }
  return {eps, std::min(delta, 1.0)};
}

DpBudget AdvancedComposition(DpBudget per_round, int64_t k,
                             double delta_slack) {
  RequireBudget(per_round, "advanced_composition");
  Require(k >= 1, ErrorKind::kInvalidParameter,
          "advanced_composition: k must be >= 1");
  Require(delta_slack > 0.0 && delta_slack < 1.0, ErrorKind::kInvalidParameter,
          "advanced_composition: slack outside (0, 1)");
  const double kd = static_cast<double>(k);
  const double eps = per_round.epsilon;
  const double naive = kd * eps;
  const double adv = eps * std::sqrt(2.0 * kd * std::log(1.0 / delta_slack)) +
                     kd * eps * std::expm1(eps);
  return {std::min(naive, adv), kd * per_round.delta + delta_slack};
}

DpBudget OptimalComposition(DpBudget per_round, int64_t k,
                            double delta_slack) {
  RequireBudget(per_round, "optimal_composition");
  Require(k >= 1, ErrorKind::kInvalidParameter,
          "optimal_composition: k must be >= 1");
  Require(delta_slack > 0.0 && delta_slack < 1.0, ErrorKind::kInvalidParameter,
          "optimal_composition: slack outside (0, 1)");
  const double eps = per_round.epsilon;
  const double log_slack = std::log(delta_slack);
  // The tail is nondecreasing in i; find the largest i within the slack.
  int64_t lo = 0, hi = k / 2;
  while (lo < hi) {
    const int64_t mid = (lo + hi + 1) / 2;
    if (LogOptimalTail(eps, k, mid) <= log_slack) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  const double eps_total = static_cast<double>(k - 2 * lo) * eps;
  const double delta_total =
      -std::expm1(static_cast<double>(k) * std::log1p(-per_round.delta) +
                  std::log1p(-delta_slack));
  return {eps_total, delta_total};
}

CalibrationResult CalibrateSigma(int64_t triggers, DpBudget target,
                                 double node_l2_sensitivity) {
  Require(triggers >= 1, ErrorKind::kInvalidParameter,
          "calibrate_sigma: triggers must be >= 1");
  Require(target.epsilon > 0.0, ErrorKind::kInvalidParameter,
          "calibrate_sigma: epsilon must be positive");
  Require(target.delta > 0.0 && target.delta < 1.0,
          ErrorKind::kInvalidParameter,
          "calibrate_sigma: delta outside (0, 1)");
  Require(node_l2_sensitivity > 0.0, ErrorKind::kInvalidParameter,
          "calibrate_sigma: sensitivity must be positive");
  const int64_t height = std::max<int64_t>(1, CeilLog2(triggers));
  auto eps_at = [&](double sigma) {
    const double rho = static_cast<double>(height) * node_l2_sensitivity *
                       node_l2_sensitivity / (2.0 * sigma * sigma);
    return ZcdpToDpTight({rho}, target.delta);
  };
  Require(eps_at(kSigmaHi) <= target.epsilon, ErrorKind::kCalibration,
          "calibrate_sigma: no sigma in range satisfies the target");
  if (eps_at(kSigmaLo) <= target.epsilon) return {kSigmaLo, height};
  double lo = kSigmaLo, hi = kSigmaHi;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (eps_at(mid) > target.epsilon ? lo : hi) = mid;
  }
  return {hi, height};
}

double CalibrateTau(double variance, double beta) {
  Require(variance > 0.0, ErrorKind::kInvalidParameter,
          "calibrate_tau: variance must be positive");
  Require(beta > 0.0 && beta <= 0.5, ErrorKind::kInvalidParameter,
          "calibrate_tau: beta outside (0, 0.5]");
  return std::sqrt(variance) * NormalQuantile(1.0 - beta);
}

BudgetSplit SplitBudget(DpBudget total, SplitRatios ratios) {
  Require(total.epsilon > 0.0, ErrorKind::kInvalidParameter,
          "split_budget: epsilon must be positive");
  Require(total.delta > 0.0 && total.delta < 1.0,
          ErrorKind::kInvalidParameter,
          "split_budget: delta outside (0, 1)");
  Require(ratios.epsilon_key_selection > 0.0 &&
              ratios.epsilon_key_selection < 1.0 &&
              ratios.delta_key_selection > 0.0 &&
              ratios.delta_key_selection < 1.0,
          ErrorKind::kInvalidParameter, "split_budget: ratios outside (0, 1)");
  BudgetSplit split;
  split.key_selection = {total.epsilon * ratios.epsilon_key_selection,
                         total.delta * ratios.delta_key_selection};
  split.aggregation = {total.epsilon - split.key_selection.epsilon,
                       total.delta - split.key_selection.delta};
  return split;
}

DpBudget PerRoundBudget(DpBudget total, int64_t rounds) {
  Require(rounds >= 1, ErrorKind::kInvalidParameter,
          "per_round_budget: rounds must be >= 1");
  Require(total.epsilon > 0.0 && total.delta > 0.0 && total.delta < 1.0,
          ErrorKind::kInvalidParameter, "per_round_budget: bad total budget");
  if (rounds == 1) return total;
  const double slack = total.delta / 2.0;
  const double delta_round = total.delta / (2.0 * static_cast<double>(rounds));
  auto composed_eps = [&](double e) {
    return AdvancedComposition({e, delta_round}, rounds, slack).epsilon;
  };
  double lo = 0.0, hi = total.epsilon;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (composed_eps(mid) <= total.epsilon ? lo : hi) = mid;
  }
  return {lo, delta_round};
}

DpBudget PerRunBudgetOptimal(DpBudget total, int64_t runs) {
  Require(runs >= 1, ErrorKind::kInvalidParameter,
          "per_run_budget: runs must be >= 1");
  Require(total.epsilon > 0.0 && total.delta > 0.0 && total.delta < 1.0,
          ErrorKind::kInvalidParameter, "per_run_budget: bad total budget");
  if (runs == 1) return total;
  const double slack = total.delta / 2.0;
  // (1 - delta_run)^runs (1 - slack) = 1 - delta exactly.
  const double delta_run =
      -std::expm1((std::log1p(-total.delta) - std::log1p(-slack)) /
                  static_cast<double>(runs));
  auto composed_eps = [&](double e) {
    return OptimalComposition({e, delta_run}, runs, slack).epsilon;
  };
  double hi = total.epsilon;
  while (composed_eps(hi) <= total.epsilon && hi < 1e6) hi *= 2.0;
  double lo = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (composed_eps(mid) <= total.epsilon ? lo : hi) = mid;
  }
  return {lo, delta_run};
}

double NormalQuantile(double p) {
  Require(p > 0.0 && p < 1.0, ErrorKind::kInvalidParameter,
          "normal_quantile: p outside (0, 1)");
  static const boost::math::normal_distribution<double> kStdNormal(0.0, 1.0);
  return boost::math::quantile(kStdNormal, p);
}

double NormalCdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

}  // namespace dpsqlp
