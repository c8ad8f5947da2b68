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
#include "tuna/dataset.hpp"

#include <algorithm>

#include "tuna/errors.hpp"

namespace tuna {

Tensor stack_tokens(std::span<const Instance* const> items, std::size_t seq_len,
                    std::size_t token_dim) {
  const std::size_t per = seq_len * token_dim;
  std::vector<double> data(items.size() * per);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i]->tokens.size() != per) {
      throw ShapeError("stack_tokens: instance has " + std::to_string(items[i]->tokens.size()) +
                       " values, expected " + std::to_string(per));
    }
    std::copy(items[i]->tokens.begin(), items[i]->tokens.end(), data.begin() + i * per);
  }
  return Tensor::from({items.size() * seq_len, token_dim}, std::move(data));
}

Tensor stack_tokens(std::span<const Instance> items, std::size_t seq_len, std::size_t token_dim) {
  std::vector<const Instance*> ptrs;
  ptrs.reserve(items.size());
  for (const auto& it : items) ptrs.push_back(&it);
  return stack_tokens(std::span<const Instance* const>(ptrs), seq_len, token_dim);
}

}  // namespace tuna
