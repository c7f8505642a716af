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

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpsqlp/error.h"
#include "dpsqlp/keyselect.h"
#include "dpsqlp/noise.h"
#include "dpsqlp/tree.h"

namespace dpsqlp {
namespace {

std::vector<std::string> Users(std::initializer_list<const char*> ids) {
  return std::vector<std::string>(ids.begin(), ids.end());
}

std::vector<double> FlatTau(int64_t T, double tau) {
  return std::vector<double>(static_cast<size_t>(T) + 1, tau);
}

TEST_CASE("spawned trees align leaves with triggers") {
  // Spawning at trigger 4 zero-fills leaves 1..3, so leaf i = trigger i.
  TreeState t = SpawnTreeAt(4, 8, 0.0, 9);
  CHECK(t.next_leaf() == 4);
  t.Add(4, 5.0);
  CHECK(t.TotalSum(4).value == 5.0);
  CHECK(t.TotalSum(3).value == 0.0);
  CHECK_THROWS_AS(SpawnTreeAt(0, 8, 0.0, 9), Error);
  CHECK_THROWS_AS(SpawnTreeAt(9, 8, 0.0, 9), Error);
}

TEST_CASE("observe counts unique users per round") {
  KeySelectionState s(1);
  const KeySelectionParams p{/*mu=*/0.0, /*sigma=*/0.0, /*leaf_capacity=*/8,
                             /*max_rounds=*/2};
  auto novel = s.Observe(1, Users({"a", "b", "a"}), p);
  CHECK(novel == Users({"a", "b"}));
  CHECK(s.cumulative_count() == 2);
  // The same users later in the round are not novel.
  novel = s.Observe(2, Users({"b", "c"}), p);
  CHECK(novel == Users({"c"}));
  CHECK(s.cumulative_count() == 3);
}

TEST_CASE("mu gates tree creation; late spawn deposits the full count") {
  KeySelectionState s(7);
  const KeySelectionParams p{/*mu=*/2.5, /*sigma=*/0.0, /*leaf_capacity=*/8,
                             /*max_rounds=*/1};
  s.Observe(1, Users({"a"}), p);
  CHECK(!s.has_tree());  // 1 <= 2.5
  s.Observe(2, Users({"b"}), p);
  CHECK(!s.has_tree());  // 2 <= 2.5
  s.Observe(5, Users({"c"}), p);
  REQUIRE(s.has_tree());  // 3 > 2.5, spawned at trigger 5
  // The first leaf carries the whole cumulative count (3), not just this
  // trigger's increment, so q-hat estimates the cumulative count.
  CHECK(s.tree().TotalSum(5).value == 3.0);
  CHECK(s.tree().TotalSum(4).value == 0.0);
}

TEST_CASE("noiseless threshold test fires exactly at the first crossing") {
  KeySelectionState s(3);
  const KeySelectionParams p{/*mu=*/3.0, /*sigma=*/0.0, /*leaf_capacity=*/16,
                             /*max_rounds=*/1};
  const auto tau = FlatTau(16, 0.0);
  int64_t fired_at = 0;
  int64_t next_user = 0;
  for (int64_t trig = 1; trig <= 16 && fired_at == 0; ++trig) {
    // Two new users per trigger: count hits 4 (> mu = 3) at trigger 2.
    std::vector<std::string> batch = {"u" + std::to_string(next_user++),
                                      "u" + std::to_string(next_user++)};
    s.Observe(trig, batch, p);
    if (!s.has_tree()) continue;
    const SelectionOutcome out = s.TestThreshold(trig, p.mu, tau);
    CHECK(out.noisy_count == static_cast<double>(s.cumulative_count()));
    if (out.selected) fired_at = trig;
  }
  CHECK(fired_at == 2);
  // Strictness: a count exactly at mu + tau must not fire.
  KeySelectionState exact(4);
  const KeySelectionParams pe{3.0, 0.0, 8, 1};
  exact.Observe(1, Users({"a", "b", "c"}), pe);
  CHECK(!exact.has_tree());  // 3 > 3 is false: prefilter already blocks
}

TEST_CASE("restart clears the round and eventually turns permanent") {
  KeySelectionState s(5);
  const KeySelectionParams p{0.0, 0.0, 8, /*max_rounds=*/2};
  const auto tau = FlatTau(8, 0.0);

  s.Observe(1, Users({"a"}), p);
  CHECK(s.TestThreshold(1, p.mu, tau).selected);
  s.RestartAfterSelection(p);
  CHECK(s.rounds_completed() == 1);
  CHECK(!s.permanently_selected());
  CHECK(!s.has_tree());
  CHECK(s.cumulative_count() == 0);

  // Round 2: the same user is novel again after the restart.
  s.Observe(2, Users({"a"}), p);
  CHECK(s.cumulative_count() == 1);
  CHECK(s.TestThreshold(2, p.mu, tau).selected);
  s.RestartAfterSelection(p);
  CHECK(s.permanently_selected());

  // Permanently selected keys bypass the mechanism entirely.
  CHECK_THROWS_AS(s.Observe(3, Users({"b"}), p), Error);
}

TEST_CASE("restart requires a passing test") {
  KeySelectionState s(5);
  const KeySelectionParams p{0.0, 0.0, 8, 2};
  try {
    s.RestartAfterSelection(p);
    FAIL("expected kStateError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kStateError);
  }
  // A failing test does not arm the restart either.
  const auto tau = FlatTau(8, 10.0);
  s.Observe(1, Users({"a"}), p);
  CHECK(!s.TestThreshold(1, p.mu, tau).selected);
  CHECK_THROWS_AS(s.RestartAfterSelection(p), Error);
}

TEST_CASE("sequencing violations") {
  KeySelectionState s(5);
  const KeySelectionParams p{0.0, 0.0, 8, 1};
  s.Observe(3, Users({"a"}), p);
  const auto kind = [](auto fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kIo;  // sentinel
  };
  CHECK(kind([&] { s.Observe(3, Users({"b"}), p); }) ==
        ErrorKind::kSequencing);
  CHECK(kind([&] { s.Observe(2, Users({"b"}), p); }) ==
        ErrorKind::kSequencing);
  CHECK(kind([&] { s.Observe(9, Users({"b"}), p); }) ==
        ErrorKind::kSequencing);
  // Threshold test on a trigger whose leaf is not written yet.
  const auto tau = FlatTau(8, 0.0);
  CHECK(kind([&] { s.TestThreshold(4, 0.0, tau); }) ==
        ErrorKind::kInvalidStep);
  // Threshold test with no tree at all.
  KeySelectionState empty(1);
  CHECK(kind([&] { empty.TestThreshold(1, 0.0, tau); }) ==
        ErrorKind::kStateError);
}

TEST_CASE("prediction equals brute-force simulation of empty triggers") {
  // Property: PredictRelease returns exactly the first future trigger at
  // which the zero-extended estimate crosses mu + tau, computed here by
  // direct simulation. 200 random frozen trees.
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> sigma_d(0.3, 4.0);
  std::uniform_int_distribution<int64_t> data_d(0, 5);
  const int64_t T = 32;
  for (int rep = 0; rep < 200; ++rep) {
    const double sigma = sigma_d(gen);
    const double mu = (rep % 3 == 0) ? 2.0 : 0.0;
    KeySelectionState s(Mix(77, rep));
    const KeySelectionParams p{mu, sigma, T, 1};
    // Random sparse observation history up to a random current trigger.
    std::uniform_int_distribution<int64_t> cur_d(1, T - 1);
    const int64_t current = cur_d(gen);
    int64_t uid = 0;
    for (int64_t trig = 1; trig <= current; ++trig) {
      if (trig != current && gen() % 3 != 0) continue;  // sparse
      std::vector<std::string> users;
      const int64_t n = data_d(gen) + (trig == current ? 1 : 0);
      for (int64_t i = 0; i < n; ++i) {
        users.push_back("u" + std::to_string(uid++));
      }
      if (!users.empty()) s.Observe(trig, users, p);
    }
    if (!s.has_tree()) continue;

    // The engine's tau table is per-slot; use a varying one.
    std::vector<double> tau(T + 1, 0.0);
    for (int64_t i = 1; i <= T; ++i) {
      tau[static_cast<size_t>(i)] =
          sigma * (1.0 + 0.1 * static_cast<double>(i % 5));
    }

    const std::optional<int64_t> predicted =
        s.PredictRelease(current, mu, tau);

    // Brute force on a copy of the frozen tree: zero-extended estimates.
    std::optional<int64_t> expected;
    for (int64_t f = current + 1; f <= T; ++f) {
      const double q = s.tree().ZeroExtendedTotalSum(f).value;
      if (q > mu + tau[static_cast<size_t>(f)]) {
        expected = f;
        break;
      }
    }
    CAPTURE(rep);
    CHECK(predicted == expected);
  }
}

TEST_CASE("prediction is a pure read") {
  KeySelectionState s(3);
  const KeySelectionParams p{0.0, 1.0, 16, 1};
  s.Observe(2, Users({"a", "b"}), p);
  const nlohmann::json before = s.ToJson();
  const auto tau = FlatTau(16, 0.5);
  (void)s.PredictRelease(2, 0.0, tau);
  (void)s.PredictRelease(2, 0.0, tau);
  CHECK(s.ToJson() == before);
}

TEST_CASE("no tree means no prediction") {
  KeySelectionState s(3);
  CHECK(s.PredictRelease(1, 0.0, FlatTau(8, 0.0)) == std::nullopt);
}

TEST_CASE("json round trip preserves behavior") {
  KeySelectionState s(11);
  const KeySelectionParams p{1.0, 0.7, 16, 3};
  s.Observe(1, Users({"a", "b"}), p);
  s.Observe(4, Users({"c", "a"}), p);
  const auto tau = FlatTau(16, 0.25);

  KeySelectionState back = KeySelectionState::FromJson(s.ToJson());
  CHECK(back.cumulative_count() == s.cumulative_count());
  CHECK(back.rounds_completed() == s.rounds_completed());
  CHECK(back.last_observed_trigger() == s.last_observed_trigger());
  CHECK(back.has_tree() == s.has_tree());
  CHECK(back.PredictRelease(4, 1.0, tau) == s.PredictRelease(4, 1.0, tau));

  // Future observations evolve identically: the dedup set survived.
  auto n1 = s.Observe(5, Users({"a", "d"}), p);
  auto n2 = back.Observe(5, Users({"a", "d"}), p);
  CHECK(n1 == n2);
  CHECK(n1 == Users({"d"}));
  CHECK(back.tree().TotalSum(5).value == s.tree().TotalSum(5).value);

  CHECK_THROWS_AS(KeySelectionState::FromJson(nlohmann::json{{"v", 99}}),
                  Error);
}

TEST_CASE("tree seed depends on the round") {
  // After a restart the next round's tree must draw fresh noise.
  KeySelectionState s(13);
  const KeySelectionParams p{0.0, 2.0, 8, 5};
  const auto tau = FlatTau(8, -100.0);  // always fire
  s.Observe(1, Users({"a"}), p);
  const double round0 = s.tree().NodeValue(1);
  CHECK(s.TestThreshold(1, 0.0, tau).selected);
  s.RestartAfterSelection(p);
  s.Observe(2, Users({"a"}), p);
  const double round1 = s.tree().NodeValue(1);
  CHECK(round0 != round1);
}

}  // namespace
}  // namespace dpsqlp
