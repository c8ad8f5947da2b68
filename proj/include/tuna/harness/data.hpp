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
#include <filesystem>
#include <span>
#include <vector>

#include "tuna/dataset.hpp"
#include "tuna/harness/protocol.hpp"

namespace tuna {

struct SyntheticConfig {
  std::size_t num_classes = 50;
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 50;
  std::size_t token_dim = 16;
  std::size_t seq_len = 8;
  double noise_std = 0.3;
  std::size_t confusable_pairs = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Class prototypes are uniform on the unit sphere of R^token_dim; every
/// token of an instance is its prototype plus N(0, noise_std^2) noise.
/// Each confusable pair joins two classes of different tasks: the second
/// prototype is the first plus an N(0, (0.3 noise_std)^2) offset.
IncrementalStream make_synthetic_stream(const SyntheticConfig& config, const ProtocolSpec& spec);

/// Auxiliary class universe for backbone pre-training: `num_classes`
/// classes, ids 0..num_classes-1, drawn from a stream independent of every
/// incremental stream.
std::vector<Instance> make_auxiliary_data(const SyntheticConfig& config, std::size_t num_classes,
                                          std::uint64_t seed);

/// Delimited text: a header `label,x0_0,x0_1,...` naming token s / dim j as
/// x{s}_{j}, then one instance per line. Values are written with 17
/// significant digits, so a reload is bit-exact.
void write_feature_dataset(const std::filesystem::path& path, std::span<const Instance> items,
                           std::size_t seq_len, std::size_t token_dim);

struct FeatureDataset {
  std::size_t seq_len = 0;
  std::size_t token_dim = 0;
  std::vector<Instance> items;
};

/// Parses the format above; shapes are taken from the header. Throws
/// DataError naming the offending line on malformed input.
FeatureDataset load_feature_dataset(const std::filesystem::path& path);

/// Partitions file-backed train/test sets into tasks with split_classes.
/// Labels must lie in [0, total_classes).
IncrementalStream stream_from_datasets(const FeatureDataset& train, const FeatureDataset& test,
                                       const ProtocolSpec& spec);

}  // namespace tuna
