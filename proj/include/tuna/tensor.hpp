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
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tuna {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient arrives
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

/// Dense row-major float64 tensor with optional reverse-mode gradient
/// tracking. Copies are shallow: two Tensor handles may share one node, which
/// is how parameters are updated in place by the optimizer.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  /// Rows/cols of a 2-D tensor (a 1-D tensor is treated as a single row).
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  const std::vector<double>& values() const { return node_->data; }
  double at(std::size_t i) const { return node_->data.at(i); }
  double at(std::size_t r, std::size_t c) const { return node_->data.at(r * cols() + c); }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return node_->grad.size() == node_->data.size() && !node_->data.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad();

  /// Same values, fresh leaf node, no gradient tracking.
  Tensor detach() const;
  /// Deep copy into a new leaf with the given requires_grad flag.
  Tensor clone(bool requires_grad = false) const;

  /// Reverse pass from this scalar. Every reachable leaf with requires_grad
  /// accumulates d(this)/d(leaf) into its grad.
  void backward() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  // Used by op implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Free-function spelling of Tensor::backward.
inline void backward(const Tensor& loss) { loss.backward(); }

// ---------------------------------------------------------------------------
// Differentiable primitives. All operate on 2-D (rows x cols) tensors unless
// noted; shape mismatches throw ShapeError naming both shapes, non-finite
// inputs throw NumericalError.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
/// a (M x N) + bias broadcast over rows; bias has N elements.
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
/// Row-wise layer normalization with affine gain/bias of length cols.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-6);
/// Row-wise softmax.
Tensor softmax(const Tensor& x);
/// Multi-head scaled dot-product self-attention applied independently to
/// `groups` consecutive blocks of rows. q, k, v are (groups*seq) x d with d
/// divisible by heads; the result has the same shape.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t groups,
                 std::size_t heads);
/// Mean over axis 0 (result 1 x cols) or axis 1 (result rows x 1).
Tensor mean(const Tensor& x, int axis);
Tensor sum(const Tensor& x);
/// Entrywise L1 norm, sum |x|. Subgradient 0 at exact zeros.
Tensor l1_norm(const Tensor& x);
/// Mean natural-log softmax cross-entropy of logits (B x K) against labels.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);
/// Selects rows by index; gradient scatters back.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
/// Inserts `token` (1 x d) before each of the `groups` blocks of `seq` rows
/// in x ((groups*seq) x d), producing (groups*(seq+1)) x d.
Tensor prepend_token(const Tensor& x, const Tensor& token, std::size_t seq);
/// Horizontal concatenation [a | b].
Tensor concat_cols(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

/// SGD with heavy-ball momentum: v <- mu*v + g; w <- w - lr*v.
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Tensor> params, double momentum);

  /// Applies one update with the externally scheduled learning rate.
  /// Throws std::logic_error if any parameter has no gradient.
  void step(double lr);
  void zero_grad();

  std::span<const std::vector<double>> velocity() const { return velocity_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  double momentum_;
};

/// lr(s) = lr0 * 0.5 * (1 + cos(pi * s / total)); s is clamped to [0, total].
double cosine_lr(double lr0, std::size_t step, std::size_t total_steps);

}  // namespace tuna
