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

#include <cstdint>
#include <span>
#include <vector>

#include "tuna/model.hpp"

namespace tuna {

/// Merging of task-specific adapters into one universal adapter.
///
/// For task vectors v^1..v^t (flattened adapters) and each parameter j:
///   sign_j      = sgn(sum_i v^i_j)   (exact sum; 0 when it is exactly 0)
///   magnitude_j = |max_i v^i_j|  if sign_j > 0
///                 |min_i v^i_j|  if sign_j < 0
///                 0              if sign_j == 0
///   universal_j = magnitude_j * sign_j
///
/// When sign_j > 0 at least one v^i_j is positive, so |max_i v^i_j| is also
/// the largest magnitude among the entries that agree with the elected sign
/// (and symmetrically for sign_j < 0). The universal value therefore never
/// exceeds max_i |v^i_j| and never opposes the summed direction.

struct FusionResult {
  std::vector<std::int8_t> sign;
  std::vector<double> magnitude;
  TaskVector universal;
};

/// Throws ShapeError if the vectors are empty or their manifests differ.
std::vector<std::int8_t> sign_vector(std::span<const TaskVector> vectors);
std::vector<double> magnitude_vector(std::span<const TaskVector> vectors, std::span<const std::int8_t> sign);
FusionResult fuse_vectors(std::span<const TaskVector> vectors);

/// Flatten, vote, select, unflatten. The result is tagged universal.
AdapterSet fuse(std::span<const AdapterSet> adapter_sets);

}  // namespace tuna
