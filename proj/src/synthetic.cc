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

#include "dpsqlp/synthetic.h"

#include <algorithm>
#include <cmath>

#include "dpsqlp/error.h"

namespace dpsqlp {
namespace {

constexpr int64_t kBlockSize = 1 << 16;

}  // namespace

double ZipfMandelbrot::Weight(int64_t x) const {
  return std::pow(static_cast<double>(x) + q_, -s_);
}

ZipfMandelbrot ZipfMandelbrot::Create(double q, double s, int64_t n) {
  Require(n >= 1, ErrorKind::kInvalidParameter,
          "zipf_mandelbrot: support must be >= 1");
  Require(q >= 0.0, ErrorKind::kInvalidParameter,
          "zipf_mandelbrot: q must be >= 0");
  Require(s > 0.0, ErrorKind::kInvalidParameter,
          "zipf_mandelbrot: s must be positive");
  ZipfMandelbrot z;
  z.q_ = q;
  z.s_ = s;
  z.n_ = n;
  z.block_size_ = std::min<int64_t>(kBlockSize, n);
  const int64_t blocks = (n + z.block_size_ - 1) / z.block_size_;
  z.block_cum_.reserve(static_cast<size_t>(blocks));
  double running = 0.0;
  double mean_num = 0.0;
  for (int64_t b = 0; b < blocks; ++b) {
    const int64_t lo = b * z.block_size_ + 1;
    const int64_t hi = std::min(n, lo + z.block_size_ - 1);
    double mass = 0.0;
    for (int64_t x = lo; x <= hi; ++x) {
      const double w = z.Weight(x);
      mass += w;
      mean_num += static_cast<double>(x) * w;
    }
    running += mass;
    z.block_cum_.push_back(running);
  }
  z.total_ = running;
  z.mean_ = mean_num / running;
  return z;
}

const std::vector<double>& ZipfMandelbrot::BlockTable(int64_t block) const {
  auto it = block_cache_.find(block);
  if (it != block_cache_.end()) return it->second;
  const int64_t lo = block * block_size_ + 1;
  const int64_t hi = std::min(n_, lo + block_size_ - 1);
  std::vector<double> cum;
  cum.reserve(static_cast<size_t>(hi - lo + 1));
  double running = 0.0;
  for (int64_t x = lo; x <= hi; ++x) {
    running += Weight(x);
    cum.push_back(running);
  }
  return block_cache_.emplace(block, std::move(cum)).first->second;
}

int64_t ZipfMandelbrot::Sample(Rng& rng) const {
  const double u = rng.U01() * total_;
  const auto bit = std::lower_bound(block_cum_.begin(), block_cum_.end(), u,
                                    [](double cum, double v) { return cum <= v; });
  const int64_t block = std::min<int64_t>(
      static_cast<int64_t>(bit - block_cum_.begin()),
      static_cast<int64_t>(block_cum_.size()) - 1);
  const double base = block == 0 ? 0.0 : block_cum_[static_cast<size_t>(block - 1)];
  const double r = u - base;
  const std::vector<double>& table = BlockTable(block);
  const auto it = std::lower_bound(table.begin(), table.end(), r,
                                   [](double cum, double v) { return cum <= v; });
  const int64_t offset = std::min<int64_t>(
      static_cast<int64_t>(it - table.begin()),
      static_cast<int64_t>(table.size()) - 1);
  return block * block_size_ + offset + 1;
}

double ZipfMandelbrot::Pmf(int64_t x) const {
  Require(x >= 1 && x <= n_, ErrorKind::kInvalidParameter,
          "zipf_mandelbrot: x outside support");
  return Weight(x) / total_;
}

double ZipfMandelbrot::CdfUpTo(int64_t x) const {
  Require(x >= 1 && x <= n_, ErrorKind::kInvalidParameter,
          "zipf_mandelbrot: x outside support");
  const int64_t block = (x - 1) / block_size_;
  const double before =
      block == 0 ? 0.0 : block_cum_[static_cast<size_t>(block - 1)];
  const int64_t offset = (x - 1) % block_size_;
  return (before + BlockTable(block)[static_cast<size_t>(offset)]) / total_;
}

std::vector<Record> GenerateSynthetic(const SyntheticConfig& config) {
  Require(config.users >= 1, ErrorKind::kInvalidParameter,
          "synthetic: users must be >= 1");
  Require(config.window_seconds >= 1, ErrorKind::kInvalidParameter,
          "synthetic: window must be at least one second");
  const ZipfMandelbrot records = ZipfMandelbrot::Create(
      config.record_q, config.record_s, config.record_support);
  const ZipfMandelbrot keys =
      ZipfMandelbrot::Create(config.key_q, config.key_s, config.key_space);
  std::vector<Record> out;
  const uint64_t base = Mix(config.seed, kSeedDomainSynthetic);
  for (int64_t u = 0; u < config.users; ++u) {
    Rng rng(Mix(base, static_cast<uint64_t>(u)));
    const int64_t count = records.Sample(rng);
    const std::string user = "u" + std::to_string(u);
    for (int64_t i = 0; i < count; ++i) {
      Record r;
      r.key = "k" + std::to_string(keys.Sample(rng));
      r.value = 1.0;
      r.timestamp = config.window_start + static_cast<int64_t>(rng.Below(
                        static_cast<uint64_t>(config.window_seconds)));
      r.user_id = user;
      out.push_back(std::move(r));
    }
  }
  std::sort(out.begin(), out.end(), [](const Record& a, const Record& b) {
    return std::tie(a.timestamp, a.user_id, a.key, a.value) <
           std::tie(b.timestamp, b.user_id, b.key, b.value);
  });
  return out;
}

}  // namespace dpsqlp
