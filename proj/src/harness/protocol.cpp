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
#include "tuna/harness/protocol.hpp"

#include <numeric>
#include <span>
#include <string>

#include "tuna/errors.hpp"
#include "tuna/random.hpp"

namespace tuna {

void ProtocolSpec::validate() const {
  if (total_classes == 0) throw ConfigError("protocol.total_classes must be >= 1");
  if (increment == 0) throw ConfigError("protocol.increment must be >= 1");
  if (base > total_classes) throw ConfigError("protocol.base exceeds total_classes");
  const std::size_t rest = total_classes - base;
  if (rest % increment != 0) {
    throw ConfigError("protocol: " + std::to_string(rest) + " classes after the base task do not split into tasks of " +
                      std::to_string(increment));
  }
  if (base == 0 && rest == 0) throw ConfigError("protocol: no tasks");
}

std::size_t ProtocolSpec::num_tasks() const {
  return (base > 0 ? 1 : 0) + (total_classes - base) / increment;
}

std::vector<std::vector<int>> split_classes(const ProtocolSpec& spec) {
  spec.validate();
  std::vector<int> order(spec.total_classes);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.shuffle_seed);
  rng.shuffle(std::span<int>(order));

  std::vector<std::vector<int>> tasks;
  std::size_t pos = 0;
  if (spec.base > 0) {
    tasks.emplace_back(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(spec.base));
    pos = spec.base;
  }
  while (pos < order.size()) {
    tasks.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                       order.begin() + static_cast<std::ptrdiff_t>(pos + spec.increment));
    pos += spec.increment;
  }
  return tasks;
}

}  // namespace tuna
