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
#include <string>

#include <json.hpp>

#include "tuna/harness/experiment.hpp"

namespace tuna {

/// Inverse of to_json(RunReport). Throws DataError on a malformed report.
RunReport report_from_json(const nlohmann::json& doc);
RunReport load_report(const std::filesystem::path& path);

/// Accuracy (y, percent) against classes seen (x), one polyline per
/// strategy. Self-contained SVG 1.1.
std::string accuracy_svg(const RunReport& report, const std::string& title = "Accuracy per stage");

/// Mean entropy of each adapter on each task's test data as a heat map.
std::string entropy_svg(const EntropyProfile& profile);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace tuna
