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
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tuna/harness/data.hpp"
#include "tuna/harness/protocol.hpp"
#include "tuna/inference.hpp"
#include "tuna/trainer.hpp"

namespace tuna {

struct PretrainSettings {
  std::size_t aux_classes = 5;
  std::size_t per_class = 100;
  PretrainConfig train;
  std::string checkpoint;  // load instead of training when set
};

/// Everything a run needs. Every field has a default; see README for the
/// JSON layout. When `seed` is set it replaces synthetic.seed and
/// train.seed.
struct ExperimentConfig {
  ProtocolSpec protocol;
  SyntheticConfig synthetic;
  BackboneConfig backbone;
  PretrainSettings pretrain;
  TrainConfig train;
  std::vector<Strategy> strategies = all_strategies();
  std::string train_file;
  std::string test_file;
  std::optional<std::uint64_t> seed;

  /// Collects every violation and throws one ConfigError listing them all.
  void validate() const;
  /// Seed actually used for data and training.
  void apply_seed();
};

/// Unknown keys anywhere in the document are rejected with ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

struct StageReport {
  std::size_t stage = 0;
  std::size_t classes_seen = 0;
  std::map<std::string, double> accuracy;  // strategy -> A_b
  double selection_accuracy = 0.0;
  double orth_gram_l1 = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
};

struct RunReport {
  std::vector<std::string> strategies;
  std::vector<StageReport> stages;
  std::map<std::string, double> average;  // mean of A_b over stages
  std::map<std::string, double> last;     // A_B
  nlohmann::json config;
  double wall_clock_seconds = 0.0;
};

/// Arithmetic mean of a per-stage series, summed in stage order.
double average_accuracy(std::span<const double> per_stage);

nlohmann::json to_json(const RunReport& report, bool include_timing = true);
/// Flat per-stage table: stage,classes_seen,<strategy...>,selection_accuracy
std::string stage_table_csv(const RunReport& report);

struct StageEvaluation {
  std::map<std::string, double> accuracy;
  double selection_accuracy = 0.0;
};

/// Top-1 accuracy on the union of test sets 1..stage using the first
/// `stage` adapters (and the universal adapter fused from them). Throws
/// std::out_of_range when stage is 0 or beyond the trained tasks.
StageEvaluation evaluate_stage_all(const ModelState& model, const IncrementalStream& stream, std::size_t stage,
                                   std::span<const Strategy> strategies);
double evaluate_stage(const ModelState& model, const IncrementalStream& stream, std::size_t stage,
                      Strategy strategy);

/// Sum over ordered task pairs i < j and blocks of |W_up^j W_up^i^T|_1.
double cross_task_gram_l1(std::span<const AdapterSet> adapters);

struct EntropyProfile {
  /// mean_entropy[b][i]: mean entropy of adapter i on task b's test data.
  std::vector<std::vector<double>> mean_entropy;
  /// Every (adapter, test instance) pair: entropy and whether that adapter
  /// alone predicts the right class.
  std::vector<double> entropies;
  std::vector<char> correct;
};

EntropyProfile entropy_profile(const ModelState& model, const IncrementalStream& stream);

struct ConfusionSummary {
  double pair_error = 0.0;     // error rate on classes that belong to a confusable pair
  double nonpair_error = 0.0;  // error rate on the remaining classes
  double pair_swap_rate = 0.0; // fraction of pair-class instances predicted as their partner
};

ConfusionSummary confusion_summary(const ModelState& model, const IncrementalStream& stream, Strategy strategy);

struct ExperimentResult {
  RunReport report;
  ModelState model;
  IncrementalStream stream;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Builds the stream from `config`, i.e. the synthetic generator or the
/// configured files.
IncrementalStream build_stream(const ExperimentConfig& config);

/// Pre-trains (or loads) the backbone described by `config`.
Backbone prepare_backbone(const ExperimentConfig& config, const ProgressFn& progress = {});

/// Full incremental loop: per task train, collect statistics, calibrate,
/// re-fuse and evaluate every requested strategy. Bitwise reproducible for
/// a fixed config. `backbone` overrides pre-training when given.
ExperimentResult run_experiment(const ExperimentConfig& config, const Backbone* backbone = nullptr,
                                const ProgressFn& progress = {});

/// report.json, stages.csv, model.ckpt(+.bin) and one adapter checkpoint
/// per task plus universal.ckpt under `dir`.
void write_outputs(const ExperimentResult& result, const std::filesystem::path& dir);

}  // namespace tuna
