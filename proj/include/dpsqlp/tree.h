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

#ifndef DPSQLP_TREE_H_
#define DPSQLP_TREE_H_

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace dpsqlp {

// Binary tree over a stream of at most `capacity` leaf values. Every node
// carries Gaussian noise derived deterministically from (seed, node id), and
// prefix sums are estimated from the dyadic decomposition of the prefix with
// Honaker's below-variance-reduction estimate per node. Heap layout: root is
// node 1, node v has children 2v and 2v+1; leaf i (1-based) is node
// 2^height + i - 1.

// One node of a prefix decomposition: the node id plus the number of levels
// in its subtree (kappa; a leaf has 1 level, the root of a height-h tree has
// h+1).
struct DecompositionNode {
  int64_t node_id = 0;
  int64_t levels = 0;
};

// Dyadic decomposition of prefix [1, step] in a tree of the given height:
// the unique antichain of maximal subtrees exactly covering those leaves,
// ordered from the root side down. step must lie in [1, 2^height].
std::vector<DecompositionNode> PrefixDecomposition(int64_t step,
                                                   int64_t height);

// Honaker below-estimate weights for a node with `levels` subtree levels:
// weight of level j (0 = the node itself) is 2^-j normalized to sum 1.
std::vector<double> HonakerWeights(int64_t levels);

// Variance of the Honaker below estimate for one node:
// sigma^2 / (2 (1 - 2^-levels)).
double HonakerNodeVariance(int64_t levels, double sigma);

// Variance of the prefix estimate at `step` in a height-`height` tree, i.e.
// the sum of the node variances along the decomposition. Structural: depends
// only on (height, sigma, step).
double PrefixVarianceFor(int64_t height, double sigma, int64_t step);

struct PrefixEstimate {
  double value = 0.0;
  double variance = 0.0;
  int64_t step = 0;
};

class TreeState {
 public:
  TreeState() = default;

  // Tree sized for `capacity` leaves (rounded up to a power of two; height 0
  // for capacity 1). Node noise is populated eagerly from `seed`.
  static TreeState Create(int64_t capacity, double sigma, uint64_t seed);

  int64_t height() const { return height_; }
  int64_t leaf_count() const { return int64_t{1} << height_; }
  int64_t node_count() const { return (int64_t{2} << height_) - 1; }
  int64_t next_leaf() const { return next_leaf_; }
  double sigma() const { return sigma_; }
  uint64_t seed() const { return seed_; }

  // Adds `value` at leaf `leaf_index`, updating the h+1 ancestors. Leaves
  // must be appended in order: leaf_index != next_leaf() raises kOutOfOrder,
  // and appending past leaf_count() raises kCapacity.
  void Add(int64_t leaf_index, double value);

  // Honaker prefix estimate for [1, step]; requires 1 <= step < next_leaf().
  PrefixEstimate TotalSum(int64_t step) const;

  // Same estimate treating unwritten leaves as zero; step may range over
  // [1, leaf_count()]. Used by release prediction, where future empty
  // triggers would append zero leaves that change nothing.
  PrefixEstimate ZeroExtendedTotalSum(int64_t step) const;

  double PrefixVariance(int64_t step) const;

  // Raw node content (data plus noise) for inspection and tests.
  double NodeValue(int64_t node_id) const;

  nlohmann::json ToJson() const;
  static TreeState FromJson(const nlohmann::json& j);

 private:
  friend class PrefixEstimator;

  int64_t height_ = 0;
  int64_t next_leaf_ = 1;
  double sigma_ = 0.0;
  uint64_t seed_ = 0;
  std::vector<double> values_;  // 1-based; index 0 unused
};

// Precomputed per-node Honaker estimates for one frozen tree. Building costs
// O(n log n); each prefix query then costs O(height). TreeState::TotalSum
// routes through this class so that one-shot queries and repeated scans
// produce bit-identical floating-point results.
class PrefixEstimator {
 public:
  explicit PrefixEstimator(const TreeState& tree);

  // Estimate for prefix [1, step], step in [1, leaf_count].
  double Value(int64_t step) const;

 private:
  const TreeState* tree_;
  std::vector<double> node_estimate_;  // 1-based
};

}  // namespace dpsqlp

#endif  // DPSQLP_TREE_H_
