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
#include <cstdint>
#include <vector>

namespace tuna {

/// "B-m Inc-n": m classes in the first task (none when m == 0), then n per
/// task.
struct ProtocolSpec {
  std::size_t total_classes = 50;
  std::size_t base = 0;
  std::size_t increment = 10;
  std::uint64_t shuffle_seed = 1993;

  /// Throws ConfigError when the classes do not divide into whole tasks.
  void validate() const;
  std::size_t num_tasks() const;
};

/// Shuffles 0..total_classes-1 with Rng(shuffle_seed) (SplitMix64 +
/// Fisher-Yates, see random.hpp) and cuts the order into tasks.
std::vector<std::vector<int>> split_classes(const ProtocolSpec& spec);

}  // namespace tuna
