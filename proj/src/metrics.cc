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

#include "dpsqlp/metrics.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

namespace dpsqlp {

std::map<int64_t, std::map<std::string, double>> GroundTruthPrefixes(
    std::span<const Record> stream, const WindowSpec& window,
    int64_t triggers_per_window) {
  const BucketedStream bucketed =
      AssignWindows(stream, window, triggers_per_window,
                    std::numeric_limits<double>::infinity());
  std::map<int64_t, std::map<std::string, double>> out;
  int64_t ordinal = 0;
  for (const auto& [wid, slots] : bucketed.batches) {
    std::map<std::string, double> running;
    for (int64_t slot = 1; slot <= triggers_per_window; ++slot) {
      const auto it = slots.find(slot);
      if (it != slots.end()) {
        for (const Record& r : it->second) running[r.key] += r.value;
      }
      out[ordinal * triggers_per_window + slot] = running;
    }
    ++ordinal;
  }
  return out;
}

std::map<int64_t, std::map<std::string, double>> GroundTruthPrefixesSorted(
    std::span<const Record> stream, const WindowSpec& window,
    int64_t triggers_per_window) {
  const BucketedStream bucketed =
      AssignWindows(stream, window, triggers_per_window,
                    std::numeric_limits<double>::infinity());
  std::map<int64_t, std::map<std::string, double>> out;
  int64_t ordinal = 0;
  for (const auto& [wid, slots] : bucketed.batches) {
    // Flatten to (key, slot, value), sort, and scan per key, accumulating
    // per-slot subtotals in slot order.
    struct Entry {
      std::string key;
      int64_t slot;
      double value;
    };
    std::vector<Entry> entries;
    for (const auto& [slot, records] : slots) {
      for (const Record& r : records) entries.push_back({r.key, slot, r.value});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a,
                                                 const Entry& b) {
      return std::tie(a.key, a.slot) < std::tie(b.key, b.slot);
    });
    // Per-key per-slot totals, then broadcast cumulative values to every
    // later slot of the window.
    std::map<std::string, std::map<int64_t, double>> per_key_slot;
    for (size_t i = 0; i < entries.size();) {
      size_t j = i;
      double total = 0.0;
      while (j < entries.size() && entries[j].key == entries[i].key &&
             entries[j].slot == entries[i].slot) {
        total += entries[j].value;
        ++j;
      }
      per_key_slot[entries[i].key][entries[i].slot] = total;
      i = j;
    }
    for (int64_t slot = 1; slot <= triggers_per_window; ++slot) {
      std::map<std::string, double>& hist =
          out[ordinal * triggers_per_window + slot];
      for (const auto& [key, slot_totals] : per_key_slot) {
        double cum = 0.0;
        for (const auto& [s, v] : slot_totals) {
          if (s > slot) break;
          cum += v;
        }
        if (slot_totals.begin()->first <= slot) hist[key] = cum;
      }
    }
    ++ordinal;
  }
  return out;
}

std::map<std::string, double> GroundTruthFinal(
    std::span<const Record> stream) {
  std::map<std::string, double> out;
  for (const Record& r : stream) out[r.key] += r.value;
  return out;
}

std::map<std::string, double> FinalHistogram(
    std::span<const Release> releases) {
  std::map<std::string, std::pair<int64_t, double>> latest;
  for (const Release& r : releases) {
    auto it = latest.find(r.key);
    if (it == latest.end() || r.trigger >= it->second.first) {
      latest[r.key] = {r.trigger, r.value};
    }
  }
  std::map<std::string, double> out;
  for (const auto& [key, tv] : latest) out[key] = tv.second;
  return out;
}

nlohmann::json UtilityReport::ToJson() const {
  return nlohmann::json{
      {"released_keys", released_keys}, {"truth_keys", truth_keys},
      {"l_inf", l_inf},                 {"l1", l1},
      {"l2", l2},
  };
}

UtilityReport UtilityMetrics(const std::map<std::string, double>& dp,
                             const std::map<std::string, double>& truth) {
  UtilityReport r;
  r.released_keys = static_cast<int64_t>(dp.size());
  r.truth_keys = static_cast<int64_t>(truth.size());
  double sum_sq = 0.0;
  auto fold = [&](double err) {
    r.l_inf = std::max(r.l_inf, err);
    r.l1 += err;
    sum_sq += err * err;
  };
  for (const auto& [key, value] : dp) {
    const auto it = truth.find(key);
    fold(std::abs(value - (it == truth.end() ? 0.0 : it->second)));
  }
  for (const auto& [key, value] : truth) {
    if (dp.count(key) == 0) fold(std::abs(value));
  }
  r.l2 = std::sqrt(sum_sq);
  return r;
}

}  // namespace dpsqlp
