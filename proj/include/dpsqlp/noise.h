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

#ifndef DPSQLP_NOISE_H_
#define DPSQLP_NOISE_H_

#include <cmath>
#include <cstdint>
#include <string_view>

namespace dpsqlp {

// Every Gaussian drawn anywhere in the system is a pure function of a 64-bit
// key assembled from the run seed, a domain tag and structural coordinates
// (key hash, round, node id, ...). Rebuilding a tree from its seed therefore
// reproduces identical noise, which release prediction and crash recovery
// depend on. Quality requirements are those of splitmix64, which is plenty
// for noise derivation (not a cryptographic PRF; seeds are not secret here).

inline uint64_t SplitMix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Order-dependent combiner: Mix(a, b) != Mix(b, a).
inline uint64_t Mix(uint64_t a, uint64_t b) {
  uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  SplitMix64(s);
  return s;
}

// FNV-1a, used to fold string keys into seed material.
inline uint64_t HashString(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace internal {
inline constexpr double kTwoPi = 6.283185307179586476925286766559;

inline double UniformOpenClosed(uint64_t bits) {
  // (0, 1]; safe under log().
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

inline double UniformHalfOpen(uint64_t bits) {
  // [0, 1).
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}
}  // namespace internal

// N(0, sigma^2) as a pure function of `key`. Box-Muller on two splitmix
// outputs; the cosine branch only, so one key -> one deviate.
inline double GaussianFromKey(uint64_t key, double sigma) {
  if (sigma == 0.0) return 0.0;
  uint64_t s = key;
  const uint64_t r1 = SplitMix64(s);
  const uint64_t r2 = SplitMix64(s);
  const double u1 = internal::UniformOpenClosed(r1);
  const double u2 = internal::UniformHalfOpen(r2);
  return sigma * std::sqrt(-2.0 * std::log(u1)) *
         std::cos(internal::kTwoPi * u2);
}

// Small sequential generator for the synthetic-data side (sampling, not
// privacy noise).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t Next() { return SplitMix64(state_); }

  double U01() { return internal::UniformHalfOpen(Next()); }

  // Uniform in [0, n) without modulo bias worth caring about here.
  uint64_t Below(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<__uint128_t>(Next()) * n) >> 64);
  }

  double Gaussian(double sigma) {
    const double u1 = internal::UniformOpenClosed(Next());
    const double u2 = internal::UniformHalfOpen(Next());
    return sigma * std::sqrt(-2.0 * std::log(u1)) *
           std::cos(internal::kTwoPi * u2);
  }

 private:
  uint64_t state_;
};

// Domain tags keeping noise streams disjoint across subsystems.
inline constexpr uint64_t kSeedDomainSelection = 0xA1;
inline constexpr uint64_t kSeedDomainAggregation = 0xB2;
inline constexpr uint64_t kSeedDomainBaselineRepeated = 0xC3;
inline constexpr uint64_t kSeedDomainBaselineBatch = 0xD4;
inline constexpr uint64_t kSeedDomainSynthetic = 0xE5;

}  // namespace dpsqlp

#endif  // DPSQLP_NOISE_H_
