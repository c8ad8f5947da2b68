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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tuna/model.hpp"
#include "tuna/trainer.hpp"

namespace tuna {

/// Inference variants compared in the ablations.
enum class Strategy {
  TunaEnsemble,     // entropy-selected task adapter + universal adapter
  EntropyOnly,      // entropy-selected task adapter alone
  UniversalOnly,    // universal adapter alone
  MaxLogitBaseline  // every task adapter, largest raw logit wins
};

std::string to_string(Strategy strategy);
/// Accepts "tuna", "entropy", "universal", "maxlogit"; throws ConfigError.
Strategy parse_strategy(const std::string& text);
std::vector<Strategy> all_strategies();
bool needs_universal(Strategy strategy);

/// Everything needed to predict: a frozen backbone, the task adapters in
/// task order, the (optional) universal adapter, the head and the replay
/// statistics. Immutable during inference.
struct ModelState {
  Backbone backbone;
  std::vector<AdapterSet> adapters;
  std::optional<AdapterSet> universal;
  Classifier classifier;
  std::vector<ClassStatistics> stats;
};

struct Prediction {
  int class_id = 0;
  std::size_t class_index = 0;
  int selected_task = 0;  // AdapterSet::kUniversal for UniversalOnly
  std::vector<double> per_adapter_entropy;
  /// For the ensemble this is the mean of the two distributions, which has
  /// the same argmax as their sum.
  std::vector<double> combined_probs;
};

std::vector<double> softmax_probs(std::span<const double> logits);

/// softmax(W^T phi(x; adapters)) over every class the head knows.
std::vector<double> predict_probs(const Backbone& backbone, std::span<const double> tokens,
                                  const AdapterSet& adapters, const Classifier& classifier);

/// Shannon entropy in nats; 0 log 0 = 0. Throws std::invalid_argument on a
/// negative entry.
double entropy(std::span<const double> probs);

/// Index of the first maximum.
std::size_t argmax(std::span<const double> values);

struct Selection {
  std::size_t index = 0;  // position in the adapter list
  std::vector<double> entropies;
};

/// Minimum-entropy distribution; ties go to the lowest index.
Selection select_by_entropy(std::span<const std::vector<double>> probs_per_adapter);

Selection select_adapter(const Backbone& backbone, std::span<const double> tokens,
                         std::span<const AdapterSet> adapters, const Classifier& classifier);

/// Applies a strategy to precomputed logits: one row per task adapter (in
/// task order) plus the universal adapter's logits when available. This is
/// the decision rule shared by predict() and batch evaluation.
Prediction decide(Strategy strategy, std::span<const std::vector<double>> task_logits,
                  const std::vector<double>* universal_logits, const Classifier& classifier,
                  std::span<const int> task_ids);

/// Throws std::invalid_argument if the strategy needs the universal adapter
/// and the model has none, or if the model has no task adapters.
Prediction predict(std::span<const double> tokens, const ModelState& model, Strategy strategy);

}  // namespace tuna
