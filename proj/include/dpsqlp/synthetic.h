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

#ifndef DPSQLP_SYNTHETIC_H_
#define DPSQLP_SYNTHETIC_H_

#include <cstdint>
#include <map>
#include <vector>

#include "dpsqlp/noise.h"
#include "dpsqlp/record.h"

namespace dpsqlp {

// Zipf-Mandelbrot distribution over {1, ..., n}: P(x) proportional to
// (x + q)^{-s}. Exact inverse-CDF sampling from cumulative tables; mass is
// precomputed per fixed-size block (one O(n) pass) and within-block tables
// materialize lazily, so large supports do not hold n doubles resident.
class ZipfMandelbrot {
 public:
  static ZipfMandelbrot Create(double q, double s, int64_t n);

  int64_t Sample(Rng& rng) const;

  double Pmf(int64_t x) const;
  // P(X <= x), exact summation over the same tables sampling uses.
  double CdfUpTo(int64_t x) const;
  double Mean() const { return mean_; }
  int64_t support() const { return n_; }

 private:
  double Weight(int64_t x) const;
  const std::vector<double>& BlockTable(int64_t block) const;

  double q_ = 0.0;
  double s_ = 0.0;
  int64_t n_ = 0;
  int64_t block_size_ = 0;
  double total_ = 0.0;
  double mean_ = 0.0;
  std::vector<double> block_cum_;  // unnormalized mass through each block
  mutable std::map<int64_t, std::vector<double>> block_cache_;
};

struct SyntheticConfig {
  int64_t users = 10000;
  int64_t key_space = 1000;
  // Records-per-user distribution.
  double record_q = 26.0;
  double record_s = 6.738;
  int64_t record_support = 100000;
  // Key popularity distribution over [1, key_space].
  double key_q = 1.0;
  double key_s = 1.4;
  uint64_t seed = 1;
  // All timestamps fall uniformly inside this window.
  int64_t window_start = 0;
  int64_t window_seconds = 86400;
};

// Deterministic synthetic stream: each user draws a record count and keys
// from the configured distributions (all values are 1), timestamps uniform
// in the window; the result is sorted by time.
std::vector<Record> GenerateSynthetic(const SyntheticConfig& config);

}  // namespace dpsqlp

#endif  // DPSQLP_SYNTHETIC_H_
