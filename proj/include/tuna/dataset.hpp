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

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "tuna/tensor.hpp"

namespace tuna {

/// One instance: seq_len tokens of token_dim features, row-major, plus its
/// original class id.
struct Instance {
  std::vector<double> tokens;
  int label = 0;
};

/// Training and test data of one incremental task. `classes` is Y_t.
struct TaskData {
  std::vector<Instance> train;
  std::vector<Instance> test;
  std::vector<int> classes;
};

struct IncrementalStream {
  std::size_t seq_len = 0;
  std::size_t token_dim = 0;
  std::vector<TaskData> tasks;
  /// Cross-task near-duplicate class pairs (synthetic streams only).
  std::vector<std::pair<int, int>> confusable_pairs;
};

/// Stacks the tokens of `items` into a (items.size()*seq_len) x token_dim
/// tensor without gradient tracking.
Tensor stack_tokens(std::span<const Instance* const> items, std::size_t seq_len,
                    std::size_t token_dim);
Tensor stack_tokens(std::span<const Instance> items, std::size_t seq_len, std::size_t token_dim);

}  // namespace tuna
