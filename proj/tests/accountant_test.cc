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

#include <cmath>
#include <random>

#include "dpsqlp/accountant.h"
#include "dpsqlp/error.h"

namespace dpsqlp {
namespace {

// Reference values below were computed with an independent high-precision
// implementation (direct golden-section minimization over the Renyi order,
// exact binomial sums for optimal composition) rather than with this
// library's own log-space evaluation.

TEST_CASE("gaussian zcdp and additive composition") {
  CHECK(ZcdpOfGaussian(1.0, 2.0).rho == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(ZcdpOfGaussian(3.0, 3.0).rho == doctest::Approx(0.5).epsilon(1e-15));
  const ZcdpBudget c = ComposeZcdp({0.125}, {0.5});
  CHECK(c.rho == doctest::Approx(0.625).epsilon(1e-15));
  CHECK_THROWS_AS(ZcdpOfGaussian(1.0, 0.0), Error);
  CHECK_THROWS_AS(ZcdpOfGaussian(-1.0, 1.0), Error);
}

TEST_CASE("closed-form conversion matches hand computation") {
  // rho + 2 sqrt(rho ln(1/delta)), evaluated independently.
  CHECK(ZcdpToDpClosed({0.1}, 1e-6) ==
        doctest::Approx(2.4507880004767997).epsilon(1e-12));
  CHECK(ZcdpToDpClosed({0.125}, 1e-9) ==
        doctest::Approx(3.3439490394340208).epsilon(1e-12));
  CHECK(ZcdpToDpClosed({0.5}, 1e-6) ==
        doctest::Approx(5.756521769756932).epsilon(1e-12));
  CHECK(ZcdpToDpClosed({0.0}, 1e-6) == doctest::Approx(0.0));
}

TEST_CASE("tight conversion matches independent minimization") {
  CHECK(ZcdpToDpTight({0.1}, 1e-6) ==
        doctest::Approx(2.1419389283854737).epsilon(1e-9));
  CHECK(ZcdpToDpTight({0.125}, 1e-9) ==
        doctest::Approx(3.058122166845913).epsilon(1e-9));
  CHECK(ZcdpToDpTight({0.5}, 1e-6) ==
        doctest::Approx(5.2215344445301691).epsilon(1e-9));
  CHECK(ZcdpToDpTight({0.01}, 1e-9) ==
        doctest::Approx(0.81017446786753417).epsilon(1e-9));
}

TEST_CASE("tight conversion never exceeds the closed form") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> log_rho(std::log(1e-4), std::log(4.0));
  std::uniform_real_distribution<double> log_delta(std::log(1e-12),
                                                   std::log(1e-3));
  for (int i = 0; i < 100; ++i) {
    const double rho = std::exp(log_rho(gen));
    const double delta = std::exp(log_delta(gen));
    const double tight = ZcdpToDpTight({rho}, delta);
    const double closed = ZcdpToDpClosed({rho}, delta);
    CAPTURE(rho);
    CAPTURE(delta);
    CHECK(tight <= closed + 1e-9);
    CHECK(tight >= 0.0);
  }
}

TEST_CASE("tight conversion round-trips through its own delta") {
  // eps(rho, delta) must be monotone in both arguments.
  CHECK(ZcdpToDpTight({0.2}, 1e-6) > ZcdpToDpTight({0.1}, 1e-6));
  CHECK(ZcdpToDpTight({0.1}, 1e-9) > ZcdpToDpTight({0.1}, 1e-6));
}

TEST_CASE("group privacy") {
  const DpBudget g = GroupPrivacy({0.1, 1e-9}, 2);
  CHECK(g.epsilon == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(g.delta == doctest::Approx(2.1051709180756476e-9).epsilon(1e-13));
  CHECK(std::fabs(g.delta - 2.1052e-9) < 1e-13);

  const DpBudget g3 = GroupPrivacy({0.2, 1e-8}, 3);
  CHECK(g3.epsilon == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(g3.delta == doctest::Approx(3.7132274558014402e-8).epsilon(1e-12));

  // Identity at group size 1.
  const DpBudget g1 = GroupPrivacy({0.37, 1e-7}, 1);
  CHECK(g1.epsilon == doctest::Approx(0.37));
  CHECK(g1.delta == doctest::Approx(1e-7));

  // eps = 0 limit: the delta ratio degenerates to the group size.
  const DpBudget g0 = GroupPrivacy({0.0, 1e-9}, 5);
  CHECK(g0.epsilon == doctest::Approx(0.0));
  CHECK(g0.delta == doctest::Approx(5e-9).epsilon(1e-12));

  // Delta is a probability; large groups saturate at 1.
  const DpBudget big = GroupPrivacy({5.0, 0.5}, 20);
  CHECK(big.delta == doctest::Approx(1.0));

  CHECK_THROWS_AS(GroupPrivacy({0.1, 1e-9}, 0), Error);
}

TEST_CASE("advanced composition") {
  const DpBudget a = AdvancedComposition({0.1, 1e-9}, 100, 1e-6);
  CHECK(a.epsilon == doctest::Approx(6.3082309505134086).epsilon(1e-12));
  CHECK(a.delta == doctest::Approx(100 * 1e-9 + 1e-6).epsilon(1e-12));

  CHECK(AdvancedComposition({0.05, 0.0}, 100, 1e-6).epsilon ==
        doctest::Approx(2.8846163667585864).epsilon(1e-12));

  // Small k or large eps: the naive k*eps bound wins.
  CHECK(AdvancedComposition({0.3, 0.0}, 25, 1e-9).epsilon ==
        doctest::Approx(7.5).epsilon(1e-12));
  CHECK(AdvancedComposition({1.0, 0.0}, 2, 1e-9).epsilon ==
        doctest::Approx(2.0).epsilon(1e-12));

  // k = 1 composes to itself plus slack.
  const DpBudget one = AdvancedComposition({0.2, 1e-9}, 1, 1e-7);
  CHECK(one.epsilon == doctest::Approx(0.2));
}

TEST_CASE("optimal composition matches exact binomial-sum oracle") {
  CHECK(OptimalComposition({0.1, 0.0}, 100, 1e-6).epsilon ==
        doctest::Approx(4.8).epsilon(1e-12));
  CHECK(OptimalComposition({0.05, 0.0}, 100, 1e-6).epsilon ==
        doctest::Approx(2.3).epsilon(1e-12));
  CHECK(OptimalComposition({0.5, 0.0}, 10, 1e-6).epsilon ==
        doctest::Approx(5.0).epsilon(1e-12));
  // Slack so tiny that no reduction is admissible.
  CHECK(OptimalComposition({0.3, 0.0}, 25, 1e-9).epsilon ==
        doctest::Approx(7.5).epsilon(1e-12));
  // Single mechanism: identity.
  CHECK(OptimalComposition({0.1, 0.0}, 1, 1e-6).epsilon ==
        doctest::Approx(0.1).epsilon(1e-12));

  const DpBudget d = OptimalComposition({0.1, 1e-9}, 100, 1e-6);
  CHECK(d.delta == doctest::Approx(1.0999998950500051e-6).epsilon(1e-12));
}

TEST_CASE("optimal composition is never worse than advanced composition") {
  const double epsilons[] = {0.01, 0.05, 0.1, 0.2, 0.5};
  const int64_t ks[] = {2, 5, 10, 50, 100, 250};
  for (double eps : epsilons) {
    for (int64_t k : ks) {
      const double opt = OptimalComposition({eps, 0.0}, k, 1e-6).epsilon;
      const double adv = AdvancedComposition({eps, 0.0}, k, 1e-6).epsilon;
      CAPTURE(eps);
      CAPTURE(k);
      CHECK(opt <= adv + 1e-9);
      CHECK(opt >= 0.0);
    }
  }
}

TEST_CASE("sigma calibration round-trips to the target epsilon") {
  const double targets[] = {0.1, 0.5, 1.0, 3.0, 6.0};
  const int64_t trigger_counts[] = {1, 2, 64, 100, 1000};
  for (double eps : targets) {
    for (int64_t T : trigger_counts) {
      const CalibrationResult r = CalibrateSigma(T, {eps, 1e-9}, 1.0);
      const int64_t expected_height =
          T == 1 ? 1
                 : static_cast<int64_t>(
                       std::ceil(std::log2(static_cast<double>(T))));
      CHECK(r.tree_height == expected_height);
      const double rho = static_cast<double>(r.tree_height) /
                         (2.0 * r.sigma * r.sigma);
      const double achieved = ZcdpToDpTight({rho}, 1e-9);
      CAPTURE(eps);
      CAPTURE(T);
      CHECK(achieved == doctest::Approx(eps).epsilon(1e-6));
      CHECK(achieved <= eps * (1.0 + 1e-9));
    }
  }
}

TEST_CASE("sigma calibration scales linearly with node sensitivity") {
  const CalibrationResult unit = CalibrateSigma(64, {1.0, 1e-9}, 1.0);
  const CalibrationResult scaled = CalibrateSigma(64, {1.0, 1e-9}, 7.0);
  CHECK(scaled.sigma == doctest::Approx(7.0 * unit.sigma).epsilon(1e-9));
}

TEST_CASE("single release calibration is the plain gaussian mechanism") {
  const CalibrationResult r = CalibrateSigma(1, {1.0, 1e-9}, 1.0);
  const double rho = 1.0 / (2.0 * r.sigma * r.sigma);
  CHECK(ZcdpToDpTight({rho}, 1e-9) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("tau calibration") {
  // sqrt(var) * Phi^-1(1 - beta); quantiles frozen from an independent
  // implementation.
  CHECK(CalibrateTau(1.0, 0.05) ==
        doctest::Approx(1.6448536269514722).epsilon(1e-9));
  CHECK(CalibrateTau(4.0, 0.05) ==
        doctest::Approx(2.0 * 1.6448536269514722).epsilon(1e-9));
  CHECK(CalibrateTau(1.0, 0.01) ==
        doctest::Approx(2.3263478740408408).epsilon(1e-9));
  CHECK(CalibrateTau(1.0, 0.05 / 100.0) ==
        doctest::Approx(3.2905267314919255).epsilon(1e-9));
  // beta = 1/2 sits exactly at the median: no margin.
  CHECK(CalibrateTau(9.0, 0.5) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("normal quantile and cdf agree with reference values") {
  CHECK(NormalQuantile(0.75) ==
        doctest::Approx(0.6744897501960817).epsilon(1e-12));
  CHECK(NormalQuantile(0.975) ==
        doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(NormalCdf(2.33) ==
        doctest::Approx(0.9900969244408357).epsilon(1e-12));
  CHECK(NormalCdf(-1.5) ==
        doctest::Approx(0.06680720126885807).epsilon(1e-12));
  // Inverse relationship.
  for (double p : {0.01, 0.2, 0.5, 0.9, 0.999}) {
    CHECK(NormalCdf(NormalQuantile(p)) == doctest::Approx(p).epsilon(1e-10));
  }
}

TEST_CASE("budget split") {
  const BudgetSplit s = SplitBudget({6.0, 1e-9});
  CHECK(s.key_selection.epsilon == doctest::Approx(3.0));
  CHECK(s.aggregation.epsilon == doctest::Approx(3.0));
  CHECK(s.key_selection.delta == doctest::Approx(2e-9 / 3.0).epsilon(1e-12));
  CHECK(s.aggregation.delta == doctest::Approx(1e-9 / 3.0).epsilon(1e-12));
  CHECK(s.key_selection.epsilon + s.aggregation.epsilon ==
        doctest::Approx(6.0));
  CHECK(s.key_selection.delta + s.aggregation.delta ==
        doctest::Approx(1e-9).epsilon(1e-15));

  const BudgetSplit w = SplitBudget({1.0, 1e-6}, {0.25, 0.5});
  CHECK(w.key_selection.epsilon == doctest::Approx(0.25));
  CHECK(w.aggregation.epsilon == doctest::Approx(0.75));
  CHECK(w.key_selection.delta == doctest::Approx(5e-7));
}

TEST_CASE("per-round budget composes back within the total") {
  const DpBudget total{6.0, 1e-9};
  for (int64_t rounds : {1, 2, 5, 17, 32}) {
    const DpBudget r = PerRoundBudget(total, rounds);
    if (rounds == 1) {
      CHECK(r.epsilon == doctest::Approx(total.epsilon));
      CHECK(r.delta == doctest::Approx(total.delta));
      continue;
    }
    const DpBudget composed =
        AdvancedComposition(r, rounds, total.delta / 2.0);
    CAPTURE(rounds);
    CHECK(composed.epsilon <= total.epsilon * (1.0 + 1e-9));
    CHECK(composed.epsilon == doctest::Approx(total.epsilon).epsilon(1e-6));
    CHECK(composed.delta <= total.delta * (1.0 + 1e-9));
    CHECK(r.epsilon < total.epsilon);
  }
}

TEST_CASE("per-run optimal budget composes back within the total") {
  const DpBudget total{6.0, 1e-9};
  for (int64_t runs : {1, 10, 100}) {
    const DpBudget r = PerRunBudgetOptimal(total, runs);
    if (runs == 1) {
      CHECK(r.epsilon == doctest::Approx(total.epsilon));
      continue;
    }
    const DpBudget composed = OptimalComposition(r, runs, total.delta / 2.0);
    CAPTURE(runs);
    CHECK(composed.epsilon <= total.epsilon * (1.0 + 1e-9));
    CHECK(composed.delta <= total.delta * (1.0 + 1e-6));
    CHECK(r.epsilon < total.epsilon);
    // More runs must shrink the per-run budget.
  }
  CHECK(PerRunBudgetOptimal(total, 100).epsilon <
        PerRunBudgetOptimal(total, 10).epsilon);
}

TEST_CASE("parameter validation raises kInvalidParameter") {
  const auto kind = [](auto fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kIo;  // sentinel: not thrown
  };
  CHECK(kind([] { ZcdpToDpClosed({-0.1}, 1e-6); }) ==
        ErrorKind::kInvalidParameter);
  CHECK(kind([] { ZcdpToDpTight({0.1}, 0.0); }) ==
        ErrorKind::kInvalidParameter);
  CHECK(kind([] { ZcdpToDpTight({0.1}, 1.5); }) ==
        ErrorKind::kInvalidParameter);
  CHECK(kind([] { AdvancedComposition({0.1, 0.0}, 0, 1e-6); }) ==
        ErrorKind::kInvalidParameter);
  CHECK(kind([] { OptimalComposition({-0.1, 0.0}, 2, 1e-6); }) ==
        ErrorKind::kInvalidParameter);
  CHECK(kind([] { CalibrateSigma(0, {1.0, 1e-9}, 1.0); }) ==
        ErrorKind::kInvalidParameter);
  CHECK(kind([] { CalibrateSigma(4, {0.0, 1e-9}, 1.0); }) ==
        ErrorKind::kInvalidParameter);
  CHECK(kind([] { CalibrateTau(-1.0, 0.05); }) ==
        ErrorKind::kInvalidParameter);
  CHECK(kind([] { NormalQuantile(0.0); }) == ErrorKind::kInvalidParameter);
  CHECK(kind([] { PerRoundBudget({1.0, 1e-9}, 0); }) ==
        ErrorKind::kInvalidParameter);
}

}  // namespace
}  // namespace dpsqlp
