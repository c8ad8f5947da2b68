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

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tuna/inference.hpp"
#include "tuna/model.hpp"

namespace tuna {

/// Checkpoint layout: `<path>` holds a JSON manifest
///
///   {"format": "tuna-checkpoint", "version": 1, "kind": ...,
///    "blob": "<file name>", "blob_bytes": N,
///    "tensors": [{"name", "shape", "offset", "count"}, ...], ...}
///
/// and `<path>.bin` holds every tensor as little-endian IEEE-754 float64,
/// concatenated in manifest order; `offset` is in bytes.
inline constexpr int kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Archive {
  nlohmann::json meta;
  std::vector<NamedTensor> tensors;

  /// Throws DataError if absent.
  const Tensor& get(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const std::string& kind, nlohmann::json meta,
                   std::span<const NamedTensor> tensors);
/// Throws DataError on a missing file, unknown format/version, truncated or
/// oversized blob, or a manifest/blob mismatch.
Archive read_archive(const std::filesystem::path& path, const std::string& expected_kind = "");

nlohmann::json to_json(const BackboneConfig& config);
BackboneConfig backbone_config_from_json(const nlohmann::json& j);

void save_backbone(const Backbone& backbone, const std::filesystem::path& path);
Backbone load_backbone(const std::filesystem::path& path);

void save_adapter(const AdapterSet& adapters, const std::filesystem::path& path);
AdapterSet load_adapter(const std::filesystem::path& path);

/// Writes backbone, adapters, universal adapter, classifier, statistics and
/// a free-form config echo.
void save_checkpoint(const ModelState& state, const std::filesystem::path& path,
                     const nlohmann::json& config_echo = nlohmann::json::object());

struct LoadedCheckpoint {
  ModelState state;
  nlohmann::json config;
};

/// When `expected` is given, a checkpoint built for other backbone
/// dimensions is rejected with DataError.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const BackboneConfig* expected = nullptr);

}  // namespace tuna
