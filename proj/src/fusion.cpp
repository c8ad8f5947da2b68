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
#include "tuna/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "tuna/errors.hpp"

namespace tuna {

namespace {

void check_compatible(std::span<const TaskVector> vectors, const char* op) {
  if (vectors.empty()) throw ShapeError(std::string(op) + ": no task vectors");
  const auto& ref = vectors.front();
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].manifest != ref.manifest || vectors[i].values.size() != ref.values.size()) {
      throw ShapeError(std::string(op) + ": task vector " + std::to_string(i) +
                       " has a different layout than task vector 0");
    }
  }
}

/// Sign of the exact real sum of `values`, independent of their order.
/// Keeps a non-overlapping expansion of partial sums (Shewchuk two-sum);
/// the most significant non-zero partial carries the sign.
std::int8_t exact_sum_sign(const std::vector<double>& values, std::vector<double>& partials) {
  partials.clear();
  for (double x : values) {
    std::size_t k = 0;
    for (double y : partials) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[k++] = lo;
      x = hi;
    }
    partials.resize(k);
    partials.push_back(x);
  }
  for (auto it = partials.rbegin(); it != partials.rend(); ++it) {
    if (*it > 0.0) return 1;
    if (*it < 0.0) return -1;
  }
  return 0;
}

}  // namespace

std::vector<std::int8_t> sign_vector(std::span<const TaskVector> vectors) {
  check_compatible(vectors, "sign_vector");
  const std::size_t n = vectors.front().values.size();
  std::vector<std::int8_t> sign(n, 0);
  std::vector<double> column(vectors.size()), partials;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < vectors.size(); ++i) column[i] = vectors[i].values[j];
    sign[j] = exact_sum_sign(column, partials);
  }
  return sign;
}

std::vector<double> magnitude_vector(std::span<const TaskVector> vectors, std::span<const std::int8_t> sign) {
  check_compatible(vectors, "magnitude_vector");
  const std::size_t n = vectors.front().values.size();
  if (sign.size() != n) {
    throw ShapeError("magnitude_vector: sign length " + std::to_string(sign.size()) + " vs " + std::to_string(n));
  }
  std::vector<double> mag(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (sign[j] == 0) continue;
    double hi = vectors.front().values[j], lo = hi;
    for (const auto& v : vectors) {
      hi = std::max(hi, v.values[j]);
      lo = std::min(lo, v.values[j]);
    }
    mag[j] = sign[j] > 0 ? std::abs(hi) : std::abs(lo);
  }
  return mag;
}

FusionResult fuse_vectors(std::span<const TaskVector> vectors) {
  FusionResult r;
  r.sign = sign_vector(vectors);
  r.magnitude = magnitude_vector(vectors, r.sign);
  r.universal.manifest = vectors.front().manifest;
  r.universal.values.resize(r.sign.size());
  for (std::size_t j = 0; j < r.sign.size(); ++j) {
    // Zero-sum entries map to +0.0.
    r.universal.values[j] = r.sign[j] == 0 ? 0.0 : (r.sign[j] > 0 ? r.magnitude[j] : -r.magnitude[j]);
  }
  return r;
}

AdapterSet fuse(std::span<const AdapterSet> adapter_sets) {
  if (adapter_sets.empty()) throw ShapeError("fuse: no adapter sets");
  std::vector<TaskVector> vectors;
  vectors.reserve(adapter_sets.size());
  for (const auto& a : adapter_sets) vectors.push_back(flatten_adapter(a));
  return unflatten(fuse_vectors(vectors).universal, AdapterSet::kUniversal);
}

}  // namespace tuna
