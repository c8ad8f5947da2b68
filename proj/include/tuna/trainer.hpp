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
#include <span>
#include <string>
#include <vector>

#include "tuna/dataset.hpp"
#include "tuna/model.hpp"
#include "tuna/tensor.hpp"

namespace tuna {

/// Which projection the cross-task orthogonality penalty acts on.
enum class OrthMode { Up, Down, Both };

std::string to_string(OrthMode mode);
/// Parses "up" / "down" / "both"; throws ConfigError otherwise.
OrthMode parse_orth_mode(const std::string& text);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 48;
  double lr0 = 0.01;
  double momentum = 0.9;
  double lambda0 = 1e-3;
  double lambda_decay = 0.9;
  OrthMode orth_mode = OrthMode::Up;
  std::size_t adapter_rank = 16;
  std::size_t replay_samples_per_class = 100;
  std::size_t replay_epochs = 5;
  double replay_lr = 0.01;
  std::uint64_t seed = 0;

  /// Throws ConfigError on out-of-range fields.
  void validate() const;
};

/// Lower bound applied to every per-class variance entry.
inline constexpr double kVarianceFloor = 1e-4;

/// Diagonal Gaussian summary of one class's features.
struct ClassStatistics {
  int class_id = 0;
  int task_id = 0;
  std::vector<double> mean;
  std::vector<double> variance;
  std::size_t count = 0;
};

/// Mean softmax cross-entropy of features(batch; adapters) * weight against
/// `targets` (column indices of weight). Throws std::out_of_range if a
/// target is not a column.
Tensor cls_loss(const Backbone& backbone, std::span<const Instance* const> batch,
                const AdapterSet& adapters, const Tensor& weight, std::span<const int> targets);

/// Sum over previous sets and blocks of |W^t W^{i T}|_1 for the selected
/// projections. Empty `previous` gives 0.
Tensor orth_loss(const AdapterSet& current, std::span<const AdapterSet> previous, OrthMode mode);

/// cls_loss + lambda * orth_loss.
Tensor total_loss(const Backbone& backbone, std::span<const Instance* const> batch,
                  const AdapterSet& adapters, const Tensor& weight, std::span<const int> targets,
                  std::span<const AdapterSet> previous, OrthMode mode, double lambda);

/// lambda0 * decay^epoch.
double lambda_at(double lambda0, double decay, std::size_t epoch);

/// Per-class mean and population variance (floored) of already-computed
/// features. Throws DataError when a class in `classes` has no instances.
std::vector<ClassStatistics> statistics_from_features(const std::vector<std::vector<double>>& features,
                                                      std::span<const int> labels,
                                                      std::span<const int> classes, int task_id);

/// Statistics of phi(x; adapters) over `items`, one entry per class in
/// `classes`, reduced in instance order.
std::vector<ClassStatistics> collect_statistics(const Backbone& backbone, std::span<const Instance> items,
                                                std::span<const int> classes,
                                                const AdapterSet& adapters, int task_id);

/// Draws `count` pseudo-features from N(mean, diag(variance)).
std::vector<std::vector<double>> sample_pseudo_features(const ClassStatistics& stats, std::size_t count,
                                                        Rng& rng);

/// Fine-tunes every classifier column on pseudo-features replayed from
/// `stats`. A zero replay count leaves the classifier untouched. Throws
/// std::invalid_argument if a classifier class has no statistics.
void replay_calibrate(Classifier& classifier, std::span<const ClassStatistics> stats,
                      const TrainConfig& config, Rng& rng);

struct TaskOutcome {
  AdapterSet adapters;
  std::vector<ClassStatistics> stats;  // classes of this task only
  double final_epoch_loss = 0.0;
  double train_accuracy = 0.0;
};

/// Trains a fresh adapter (and new classifier columns) on one task with the
/// frozen backbone, collects its class statistics, appends them to
/// `stats_so_far` and, from the second task on, replay-calibrates the head.
/// Throws std::invalid_argument if the task reuses a known class and
/// NumericalError on a non-finite loss.
TaskOutcome train_task(const Backbone& backbone, const TaskData& task, int task_id,
                       std::span<const AdapterSet> previous, Classifier& classifier,
                       std::vector<ClassStatistics>& stats_so_far, const TrainConfig& config);

struct PretrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 48;
  double lr0 = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 7;
};

/// Trains every backbone weight with a temporary linear head on an auxiliary
/// class universe, then freezes the backbone. Returns final train accuracy.
double pretrain_backbone(Backbone& backbone, std::span<const Instance> data, std::span<const int> classes,
                         const PretrainConfig& config);

/// Top-1 accuracy of the argmax of features * weight over `items`, using
/// the given adapters for every item.
double accuracy_with_adapter(const Backbone& backbone, std::span<const Instance> items,
                             const AdapterSet* adapters, const Classifier& classifier);

}  // namespace tuna
