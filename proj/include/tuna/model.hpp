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
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tuna/dataset.hpp"
#include "tuna/random.hpp"
#include "tuna/tensor.hpp"

namespace tuna {

enum class Readout { ClassToken, MeanPool };

struct BackboneConfig {
  std::size_t num_blocks = 2;
  std::size_t embed_dim = 32;
  std::size_t num_heads = 4;
  std::size_t mlp_hidden = 64;
  std::size_t seq_len = 8;
  std::size_t token_dim = 16;
  Readout readout = Readout::ClassToken;

  /// Throws ConfigError if a dimension is zero or heads do not divide d.
  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

/// Weights of one pre-LN transformer block.
struct BlockWeights {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_bias;
  Tensor w1, b1, w2, b2;  // MLP: d -> mlp_hidden -> d
};

/// Per-block bottleneck adapters for one task (or the fused universal one).
/// down[l] is d x r and up[l] is r x d.
struct AdapterSet {
  static constexpr int kUniversal = -1;

  int task_id = 1;
  std::size_t rank = 0;
  std::vector<Tensor> down;
  std::vector<Tensor> up;

  /// W_down ~ N(0, init_std^2), W_up = 0, so the residual starts at zero.
  static AdapterSet init(std::size_t num_blocks, std::size_t embed_dim, std::size_t rank, int task_id,
                         Rng& rng, double init_std = 0.02);
  static AdapterSet zeros(std::size_t num_blocks, std::size_t embed_dim, std::size_t rank, int task_id);

  std::size_t num_blocks() const { return down.size(); }
  std::size_t embed_dim() const { return down.empty() ? 0 : down.front().rows(); }
  bool is_universal() const { return task_id == kUniversal; }

  /// Checks that every block has d x r / r x d matrices of the same r.
  void validate(std::size_t num_blocks, std::size_t embed_dim) const;
  std::vector<Tensor> parameters() const;
  void set_trainable(bool flag);
  /// Deep copy with no gradient tracking.
  AdapterSet clone() const;
};

bool bitwise_equal(const AdapterSet& a, const AdapterSet& b);

class Backbone {
 public:
  Backbone() = default;
  /// Random initialization (scaled Gaussian weights, unit LN gains).
  static Backbone init(const BackboneConfig& config, Rng& rng);

  const BackboneConfig& config() const { return config_; }

  /// Stable (name, tensor) list in checkpoint order.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  void set_trainable(bool flag);
  bool frozen() const { return frozen_; }
  void freeze() { set_trainable(false); }

  /// MLP(x_i) + ReLU(x_i W_down[block]) W_up[block]; the adapter term is
  /// omitted when `adapters` is null. x_i is rows x d.
  Tensor adapter_forward(const Tensor& x, std::size_t block, const AdapterSet* adapters) const;

  /// Features for a batch: tokens is (batch*seq_len) x token_dim, result is
  /// batch x d. Gradients flow wherever weights or adapters track them.
  Tensor forward(const Tensor& tokens, std::size_t batch, const AdapterSet* adapters) const;

  /// phi(x; A) for one instance of seq_len x token_dim tokens.
  std::vector<double> embed(std::span<const double> tokens, const AdapterSet* adapters) const;

  /// Gradient-free features of many instances, batch x d, row i = items[i].
  std::vector<std::vector<double>> embed_all(std::span<const Instance> items,
                                             const AdapterSet* adapters,
                                             std::size_t chunk = 256) const;

  BlockWeights& block(std::size_t i) { return blocks_.at(i); }
  const BlockWeights& block(std::size_t i) const { return blocks_.at(i); }

 private:
  Tensor block_forward(const Tensor& x, std::size_t block, std::size_t groups,
                       const AdapterSet* adapters) const;

  BackboneConfig config_;
  Tensor w_in_, b_in_, cls_token_;
  std::vector<BlockWeights> blocks_;
  Tensor lnf_gain_, lnf_bias_;
  bool frozen_ = false;
};

/// Growing linear head f(x) = W^T phi(x). Column j scores class_ids[j], which
/// was introduced by task class_tasks[j].
struct Classifier {
  Tensor weight;  // d x K
  std::vector<int> class_ids;
  std::vector<int> class_tasks;

  explicit Classifier(std::size_t embed_dim = 0) : weight(Tensor::zeros({embed_dim, 0})) {}

  std::size_t embed_dim() const { return weight.rows(); }
  std::size_t num_classes() const { return class_ids.size(); }
  /// Column index of an original class id; throws std::out_of_range.
  std::size_t column_of(int class_id) const;
  /// Appends zero-initialized columns for the classes of `task_id`.
  /// Throws std::invalid_argument if a class is already present.
  void add_classes(std::span<const int> classes, int task_id);
  void validate() const;
};

/// W^T feature. Throws ShapeError on dimension mismatch.
std::vector<double> logits(std::span<const double> feature, const Classifier& classifier);

struct ManifestEntry {
  std::size_t block = 0;
  std::string matrix;  // "down" or "up"
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool operator==(const ManifestEntry&) const = default;
};

/// Flattened adapter parameters together with the layout needed to undo the
/// flattening.
struct TaskVector {
  std::vector<double> values;
  std::vector<ManifestEntry> manifest;

  std::size_t expected_size() const;
};

/// Block order, W_down before W_up, row-major within each matrix.
TaskVector flatten_adapter(const AdapterSet& adapters);
/// Inverse of flatten_adapter; throws ShapeError on a length/manifest
/// mismatch.
AdapterSet unflatten(const TaskVector& vector, int task_id = AdapterSet::kUniversal);

}  // namespace tuna
