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

#include "dpsqlp/tree.h"

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "dpsqlp/error.h"
#include "dpsqlp/noise.h"

namespace dpsqlp {
namespace {

int64_t CeilLog2(int64_t n) {
  int64_t h = 0;
  while ((int64_t{1} << h) < n) ++h;
  return h;
}

}  // namespace

std::vector<DecompositionNode> PrefixDecomposition(int64_t step,
                                                   int64_t height) {
  Require(height >= 0, ErrorKind::kInvalidParameter,
          "prefix_decomposition: negative height");
  const int64_t leaves = int64_t{1} << height;
  Require(step >= 1 && step <= leaves, ErrorKind::kInvalidStep,
          "prefix_decomposition: step " + std::to_string(step) +
              " outside [1, " + std::to_string(leaves) + "]");
  std::vector<DecompositionNode> out;
  int64_t node = 1, lo = 1, hi = leaves, levels = height + 1;
  while (true) {
    if (step == hi) {
      // This subtree is covered entirely.
      out.push_back({node, levels});
      break;
    }
    const int64_t mid = lo + (hi - lo) / 2;
    if (step > mid) {
      // Left child covered entirely; continue into the right child.
      out.push_back({2 * node, levels - 1});
      node = 2 * node + 1;
      lo = mid + 1;
    } else {
      node = 2 * node;
      hi = mid;
    }
    --levels;
  }
  return out;
}

std::vector<double> HonakerWeights(int64_t levels) {
  Require(levels >= 1, ErrorKind::kInvalidParameter,
          "honaker_weights: levels must be >= 1");
  // sum_{j<levels} 2^-j = 2 - 2^{1-levels}, exact in binary floating point.
  const double denom = 2.0 - std::ldexp(1.0, static_cast<int>(1 - levels));
  std::vector<double> w(static_cast<size_t>(levels));
  for (int64_t j = 0; j < levels; ++j) {
    w[static_cast<size_t>(j)] = std::ldexp(1.0, static_cast<int>(-j)) / denom;
  }
  return w;
}

double HonakerNodeVariance(int64_t levels, double sigma) {
  Require(levels >= 1, ErrorKind::kInvalidParameter,
          "honaker_node_variance: levels must be >= 1");
  return sigma * sigma /
         (2.0 * (1.0 - std::ldexp(1.0, static_cast<int>(-levels))));
}

double PrefixVarianceFor(int64_t height, double sigma, int64_t step) {
  double v = 0.0;
  for (const DecompositionNode& d : PrefixDecomposition(step, height)) {
    v += HonakerNodeVariance(d.levels, sigma);
  }
  return v;
}

TreeState TreeState::Create(int64_t capacity, double sigma, uint64_t seed) {
  Require(capacity >= 1, ErrorKind::kInvalidParameter,
          "tree: capacity must be >= 1");
  Require(sigma >= 0.0, ErrorKind::kInvalidParameter,
          "tree: sigma must be >= 0");
  TreeState t;
  t.height_ = CeilLog2(capacity);
  t.sigma_ = sigma;
  t.seed_ = seed;
  t.values_.assign(static_cast<size_t>(t.node_count()) + 1, 0.0);
  if (sigma > 0.0) {
    for (int64_t nid = 1; nid <= t.node_count(); ++nid) {
      t.values_[static_cast<size_t>(nid)] =
          GaussianFromKey(Mix(seed, static_cast<uint64_t>(nid)), sigma);
    }
  }
  return t;
}

void TreeState::Add(int64_t leaf_index, double value) {
  Require(leaf_index <= leaf_count(), ErrorKind::kCapacity,
          "tree: leaf " + std::to_string(leaf_index) + " past capacity " +
              std::to_string(leaf_count()));
  Require(leaf_index == next_leaf_, ErrorKind::kOutOfOrder,
          "tree: expected leaf " + std::to_string(next_leaf_) + ", got " +
              std::to_string(leaf_index));
  Require(leaf_index >= 1, ErrorKind::kOutOfOrder, "tree: leaf must be >= 1");
  int64_t nid = leaf_count() + leaf_index - 1;
  while (nid >= 1) {
    values_[static_cast<size_t>(nid)] += value;
    nid /= 2;
  }
  ++next_leaf_;
}

PrefixEstimate TreeState::TotalSum(int64_t step) const {
  Require(step >= 1 && step < next_leaf_, ErrorKind::kInvalidStep,
          "tree: prefix step " + std::to_string(step) +
              " not yet written (next leaf " + std::to_string(next_leaf_) +
              ")");
  const PrefixEstimator est(*this);
  return {est.Value(step), PrefixVariance(step), step};
}

PrefixEstimate TreeState::ZeroExtendedTotalSum(int64_t step) const {
  // Unwritten leaves hold their noise and no data, which is exactly what
  // appending zero-valued leaves would produce; no copy needed.
  const PrefixEstimator est(*this);
  return {est.Value(step), PrefixVariance(step), step};
}

double TreeState::PrefixVariance(int64_t step) const {
  return PrefixVarianceFor(height_, sigma_, step);
}

double TreeState::NodeValue(int64_t node_id) const {
  Require(node_id >= 1 && node_id <= node_count(), ErrorKind::kInvalidStep,
          "tree: node id out of range");
  return values_[static_cast<size_t>(node_id)];
}

nlohmann::json TreeState::ToJson() const {
  return nlohmann::json{
      {"v", 1},
      {"height", height_},
      {"next_leaf", next_leaf_},
      {"sigma", sigma_},
      {"seed", seed_},
      {"nodes", std::vector<double>(values_.begin() + 1, values_.end())},
  };
}

TreeState TreeState::FromJson(const nlohmann::json& j) {
  Require(j.is_object() && j.value("v", 0) == 1, ErrorKind::kStoreCorruption,
          "tree: unknown serialization version");
  TreeState t;
  try {
    t.height_ = j.at("height").get<int64_t>();
    t.next_leaf_ = j.at("next_leaf").get<int64_t>();
    t.sigma_ = j.at("sigma").get<double>();
    t.seed_ = j.at("seed").get<uint64_t>();
    const auto& nodes = j.at("nodes");
    t.values_.assign(1, 0.0);
    t.values_.insert(t.values_.end(), nodes.begin(), nodes.end());
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kStoreCorruption,
         std::string("tree: malformed state: ") + e.what());
  }
  Require(t.height_ >= 0 && t.height_ < 62, ErrorKind::kStoreCorruption,
          "tree: height out of range");
  Require(static_cast<int64_t>(t.values_.size()) == t.node_count() + 1,
          ErrorKind::kStoreCorruption, "tree: node array size mismatch");
  Require(t.next_leaf_ >= 1 && t.next_leaf_ <= t.leaf_count() + 1,
          ErrorKind::kStoreCorruption, "tree: next_leaf out of range");
  Require(t.sigma_ >= 0.0, ErrorKind::kStoreCorruption,
          "tree: negative sigma");
  return t;
}

PrefixEstimator::PrefixEstimator(const TreeState& tree) : tree_(&tree) {
  const int64_t n = tree.node_count();
  node_estimate_.assign(static_cast<size_t>(n) + 1, 0.0);
  if (tree.sigma_ == 0.0) {
    // Without noise the weighted estimate equals the raw node value; use it
    // directly so noiseless prefix sums are exact (the weights would cost a
    // final ulp or two).
    for (int64_t v = 1; v <= n; ++v) {
      node_estimate_[static_cast<size_t>(v)] =
          tree.values_[static_cast<size_t>(v)];
    }
    return;
  }
  // Per-level weights, shared across nodes with the same subtree depth.
  std::vector<std::vector<double>> weights(
      static_cast<size_t>(tree.height_) + 2);
  for (int64_t l = 1; l <= tree.height_ + 1; ++l) {
    weights[static_cast<size_t>(l)] = HonakerWeights(l);
  }
  // level_sums[v][j] = sum of descendants of v exactly j levels below it.
  // Built bottom-up; children combine as left + right, which keeps the
  // floating-point evaluation order identical no matter how the estimate is
  // later consumed.
  std::vector<std::vector<double>> level_sums(static_cast<size_t>(n) + 1);
  for (int64_t v = n; v >= 1; --v) {
    std::vector<double>& s = level_sums[static_cast<size_t>(v)];
    if (2 * v > n) {
      s = {tree.values_[static_cast<size_t>(v)]};
    } else {
      const auto& left = level_sums[static_cast<size_t>(2 * v)];
      const auto& right = level_sums[static_cast<size_t>(2 * v + 1)];
      s.resize(left.size() + 1);
      s[0] = tree.values_[static_cast<size_t>(v)];
      for (size_t j = 0; j < left.size(); ++j) s[j + 1] = left[j] + right[j];
    }
    const auto& w = weights[s.size()];
    double est = 0.0;
    for (size_t j = 0; j < s.size(); ++j) est += w[j] * s[j];
    node_estimate_[static_cast<size_t>(v)] = est;
  }
}

double PrefixEstimator::Value(int64_t step) const {
  double total = 0.0;
  for (const DecompositionNode& d :
       PrefixDecomposition(step, tree_->height())) {
    total += node_estimate_[static_cast<size_t>(d.node_id)];
  }
  return total;
}

}  // namespace dpsqlp
