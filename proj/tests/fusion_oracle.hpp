/*
 * Copyright 2026 The TUNA-CIL Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "tuna/random.hpp"

namespace tuna::testing {

/// Straight per-dimension evaluation of sign vote, consensus magnitude and
/// their product. Only valid when the plain sum is exact, which holds for
/// the dyadic values produced by random_dyadic_lists.
inline std::vector<double> brute_force_fuse(const std::vector<std::vector<double>>& vs) {
  const std::size_t n = vs.front().size();
  std::vector<double> out(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0, hi = vs[0][j], lo = vs[0][j];
    for (const auto& v : vs) {
      s += v[j];
      if (v[j] > hi) hi = v[j];
      if (v[j] < lo) lo = v[j];
    }
    if (s > 0) out[j] = std::fabs(hi);
    else if (s < 0) out[j] = -std::fabs(lo);
  }
  return out;
}

/// Largest |v| among the entries whose sign agrees with the elected sign.
inline double consensus_magnitude(const std::vector<std::vector<double>>& vs, std::size_t j, int sign) {
  double best = 0.0;
  for (const auto& v : vs)
    if ((sign > 0 && v[j] > 0) || (sign < 0 && v[j] < 0)) best = std::max(best, std::fabs(v[j]));
  return best;
}

/// t vectors of length n with entries k * 2^-20, |k| < 2^24, about a fifth
/// of them exactly zero and with frequent sign conflicts. Sums of up to 8
/// such values are exact in double precision.
inline std::vector<std::vector<double>> random_dyadic_lists(Rng& rng, std::size_t t, std::size_t n) {
  std::vector<std::vector<double>> vs(t, std::vector<double>(n));
  for (auto& v : vs) {
    for (auto& x : v) {
      const auto r = rng.below(10);
      if (r < 2) {
        x = 0.0;
      } else {
        const auto k = static_cast<std::int64_t>(rng.below(1u << 24)) - (1 << 23);
        x = std::ldexp(static_cast<double>(k), -20);
      }
    }
  }
  // Force some exact cancellations.
  if (t >= 2) {
    for (std::size_t j = 0; j < n; j += 7) vs[1][j] = -vs[0][j];
    for (std::size_t j = 3; j < n; j += 11) {
      double s = 0.0;
      for (std::size_t i = 0; i + 1 < t; ++i) s += vs[i][j];
      vs[t - 1][j] = -s;
    }
  }
  return vs;
}

}  // namespace tuna::testing
