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
#include "tuna/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "tuna/errors.hpp"

namespace tuna {

namespace {

Tensor gaussian(Shape shape, double stddev, Rng& rng) {
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from(std::move(shape), std::move(v));
}

bool same_bits(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// BackboneConfig
// ---------------------------------------------------------------------------

void BackboneConfig::validate() const {
  if (num_blocks == 0 || embed_dim == 0 || num_heads == 0 || mlp_hidden == 0 || seq_len == 0 ||
      token_dim == 0) {
    throw ConfigError("backbone: every dimension must be >= 1");
  }
  if (embed_dim % num_heads != 0) {
    throw ConfigError("backbone: num_heads " + std::to_string(num_heads) +
                      " does not divide embed_dim " + std::to_string(embed_dim));
  }
}

// ---------------------------------------------------------------------------
// AdapterSet
// ---------------------------------------------------------------------------

AdapterSet AdapterSet::init(std::size_t num_blocks, std::size_t embed_dim, std::size_t rank,
                            int task_id, Rng& rng, double init_std) {
  AdapterSet a;
  a.task_id = task_id;
  a.rank = rank;
  for (std::size_t l = 0; l < num_blocks; ++l) {
    a.down.push_back(gaussian({embed_dim, rank}, init_std, rng));
    a.up.push_back(Tensor::zeros({rank, embed_dim}));
  }
  return a;
}

AdapterSet AdapterSet::zeros(std::size_t num_blocks, std::size_t embed_dim, std::size_t rank,
                             int task_id) {
  AdapterSet a;
  a.task_id = task_id;
  a.rank = rank;
  for (std::size_t l = 0; l < num_blocks; ++l) {
    a.down.push_back(Tensor::zeros({embed_dim, rank}));
    a.up.push_back(Tensor::zeros({rank, embed_dim}));
  }
  return a;
}

void AdapterSet::validate(std::size_t blocks, std::size_t d) const {
  if (rank == 0) throw ShapeError("adapter: rank must be >= 1");
  if (down.size() != blocks || up.size() != blocks) {
    throw ShapeError("adapter: expected " + std::to_string(blocks) + " blocks, got " +
                     std::to_string(down.size()) + "/" + std::to_string(up.size()));
  }
  for (std::size_t l = 0; l < blocks; ++l) {
    if (down[l].shape() != Shape{d, rank}) {
      throw ShapeError("adapter: W_down[" + std::to_string(l) + "] is " + shape_str(down[l].shape()) +
                       ", expected " + shape_str({d, rank}));
    }
    if (up[l].shape() != Shape{rank, d}) {
      throw ShapeError("adapter: W_up[" + std::to_string(l) + "] is " + shape_str(up[l].shape()) +
                       ", expected " + shape_str({rank, d}));
    }
  }
}

std::vector<Tensor> AdapterSet::parameters() const {
  std::vector<Tensor> p;
  for (std::size_t l = 0; l < down.size(); ++l) {
    p.push_back(down[l]);
    p.push_back(up[l]);
  }
  return p;
}

void AdapterSet::set_trainable(bool flag) {
  for (auto& t : down) t.set_requires_grad(flag);
  for (auto& t : up) t.set_requires_grad(flag);
}

AdapterSet AdapterSet::clone() const {
  AdapterSet a;
  a.task_id = task_id;
  a.rank = rank;
  for (const auto& t : down) a.down.push_back(t.clone());
  for (const auto& t : up) a.up.push_back(t.clone());
  return a;
}

bool bitwise_equal(const AdapterSet& a, const AdapterSet& b) {
  if (a.rank != b.rank || a.down.size() != b.down.size() || a.up.size() != b.up.size()) return false;
  for (std::size_t l = 0; l < a.down.size(); ++l) {
    if (!same_bits(a.down[l], b.down[l]) || !same_bits(a.up[l], b.up[l])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Backbone
// ---------------------------------------------------------------------------

Backbone Backbone::init(const BackboneConfig& config, Rng& rng) {
  config.validate();
  Backbone b;
  b.config_ = config;
  const std::size_t d = config.embed_dim, h = config.mlp_hidden;
  const double s_in = 1.0 / std::sqrt(static_cast<double>(config.token_dim));
  const double s_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double s_h = 1.0 / std::sqrt(static_cast<double>(h));
  b.w_in_ = gaussian({config.token_dim, d}, s_in, rng);
  b.b_in_ = Tensor::zeros({d});
  b.cls_token_ = gaussian({1, d}, 0.02, rng);
  for (std::size_t l = 0; l < config.num_blocks; ++l) {
    BlockWeights w;
    w.ln1_gain = Tensor::full({d}, 1.0);
    w.ln1_bias = Tensor::zeros({d});
    w.wq = gaussian({d, d}, s_d, rng);
    w.bq = Tensor::zeros({d});
    w.wk = gaussian({d, d}, s_d, rng);
    w.bk = Tensor::zeros({d});
    w.wv = gaussian({d, d}, s_d, rng);
    w.bv = Tensor::zeros({d});
    w.wo = gaussian({d, d}, s_d, rng);
    w.bo = Tensor::zeros({d});
    w.ln2_gain = Tensor::full({d}, 1.0);
    w.ln2_bias = Tensor::zeros({d});
    w.w1 = gaussian({d, h}, s_d, rng);
    w.b1 = Tensor::zeros({h});
    w.w2 = gaussian({h, d}, s_h, rng);
    w.b2 = Tensor::zeros({d});
    b.blocks_.push_back(std::move(w));
  }
  b.lnf_gain_ = Tensor::full({d}, 1.0);
  b.lnf_bias_ = Tensor::zeros({d});
  b.frozen_ = true;
  return b;
}

std::vector<std::pair<std::string, Tensor>> Backbone::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("token_proj.weight", w_in_);
  out.emplace_back("token_proj.bias", b_in_);
  out.emplace_back("cls_token", cls_token_);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const auto& w = blocks_[l];
    const std::string p = "blocks." + std::to_string(l) + ".";
    out.emplace_back(p + "ln1.gain", w.ln1_gain);
    out.emplace_back(p + "ln1.bias", w.ln1_bias);
    out.emplace_back(p + "attn.wq", w.wq);
    out.emplace_back(p + "attn.bq", w.bq);
    out.emplace_back(p + "attn.wk", w.wk);
    out.emplace_back(p + "attn.bk", w.bk);
    out.emplace_back(p + "attn.wv", w.wv);
    out.emplace_back(p + "attn.bv", w.bv);
    out.emplace_back(p + "attn.wo", w.wo);
    out.emplace_back(p + "attn.bo", w.bo);
    out.emplace_back(p + "ln2.gain", w.ln2_gain);
    out.emplace_back(p + "ln2.bias", w.ln2_bias);
    out.emplace_back(p + "mlp.w1", w.w1);
    out.emplace_back(p + "mlp.b1", w.b1);
    out.emplace_back(p + "mlp.w2", w.w2);
    out.emplace_back(p + "mlp.b2", w.b2);
  }
  out.emplace_back("final_ln.gain", lnf_gain_);
  out.emplace_back("final_ln.bias", lnf_bias_);
  return out;
}

std::vector<Tensor> Backbone::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void Backbone::set_trainable(bool flag) {
  for (auto& [name, t] : named_parameters()) {
    Tensor handle = t;
    handle.set_requires_grad(flag);
  }
  frozen_ = !flag;
}

Tensor Backbone::adapter_forward(const Tensor& x, std::size_t block, const AdapterSet* adapters) const {
  if (block >= blocks_.size()) {
    throw std::out_of_range("adapter_forward: block " + std::to_string(block) + " of " +
                            std::to_string(blocks_.size()));
  }
  const auto& w = blocks_[block];
  Tensor out = add_bias(matmul(relu(add_bias(matmul(x, w.w1), w.b1)), w.w2), w.b2);
  if (adapters != nullptr) {
    if (block >= adapters->num_blocks()) {
      throw std::out_of_range("adapter_forward: adapter set has no block " + std::to_string(block));
    }
    Tensor residual = matmul(relu(matmul(x, adapters->down[block])), adapters->up[block]);
    out = add(out, residual);
  }
  return out;
}

Tensor Backbone::block_forward(const Tensor& x, std::size_t block, std::size_t groups,
                               const AdapterSet* adapters) const {
  const auto& w = blocks_[block];
  Tensor a = layer_norm(x, w.ln1_gain, w.ln1_bias);
  Tensor q = add_bias(matmul(a, w.wq), w.bq);
  Tensor k = add_bias(matmul(a, w.wk), w.bk);
  Tensor v = add_bias(matmul(a, w.wv), w.bv);
  Tensor att = attention(q, k, v, groups, config_.num_heads);
  Tensor h = add(x, add_bias(matmul(att, w.wo), w.bo));
  Tensor m = layer_norm(h, w.ln2_gain, w.ln2_bias);
  return add(h, adapter_forward(m, block, adapters));
}

Tensor Backbone::forward(const Tensor& tokens, std::size_t batch, const AdapterSet* adapters) const {
  const auto& c = config_;
  if (tokens.dim() != 2 || tokens.cols() != c.token_dim || tokens.rows() != batch * c.seq_len) {
    throw ShapeError("embed: token matrix " + shape_str(tokens.shape()) + " does not match " +
                     shape_str({batch * c.seq_len, c.token_dim}));
  }
  if (adapters != nullptr) adapters->validate(c.num_blocks, c.embed_dim);
  Tensor x = prepend_token(add_bias(matmul(tokens, w_in_), b_in_), cls_token_, c.seq_len);
  for (std::size_t l = 0; l < blocks_.size(); ++l) x = block_forward(x, l, batch, adapters);
  const std::size_t span = c.seq_len + 1;
  Tensor pooled;
  if (c.readout == Readout::ClassToken) {
    std::vector<std::size_t> rows(batch);
    for (std::size_t g = 0; g < batch; ++g) rows[g] = g * span;
    pooled = gather_rows(x, rows);
  } else {
    // Average the non-class tokens of each instance.
    std::vector<double> avg(batch * batch * span, 0.0);
    for (std::size_t g = 0; g < batch; ++g)
      for (std::size_t j = 1; j < span; ++j)
        avg[g * batch * span + g * span + j] = 1.0 / static_cast<double>(c.seq_len);
    pooled = matmul(Tensor::from({batch, batch * span}, std::move(avg)), x);
  }
  return layer_norm(pooled, lnf_gain_, lnf_bias_);
}

std::vector<double> Backbone::embed(std::span<const double> tokens, const AdapterSet* adapters) const {
  const auto& c = config_;
  if (tokens.size() != c.seq_len * c.token_dim) {
    throw ShapeError("embed: got " + std::to_string(tokens.size()) + " token values, expected " +
                     shape_str({c.seq_len, c.token_dim}));
  }
  Tensor t = Tensor::from({c.seq_len, c.token_dim}, std::vector<double>(tokens.begin(), tokens.end()));
  return forward(t, 1, adapters).values();
}

std::vector<std::vector<double>> Backbone::embed_all(std::span<const Instance> items,
                                                     const AdapterSet* adapters,
                                                     std::size_t chunk) const {
  std::vector<std::vector<double>> out;
  out.reserve(items.size());
  const std::size_t d = config_.embed_dim;
  for (std::size_t start = 0; start < items.size(); start += chunk) {
    const std::size_t n = std::min(chunk, items.size() - start);
    Tensor f = forward(stack_tokens(items.subspan(start, n), config_.seq_len, config_.token_dim), n,
                       adapters);
    for (std::size_t i = 0; i < n; ++i) {
      out.emplace_back(f.data().begin() + static_cast<std::ptrdiff_t>(i * d),
                       f.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

std::size_t Classifier::column_of(int class_id) const {
  auto it = std::find(class_ids.begin(), class_ids.end(), class_id);
  if (it == class_ids.end()) throw std::out_of_range("classifier: unknown class " + std::to_string(class_id));
  return static_cast<std::size_t>(it - class_ids.begin());
}

void Classifier::add_classes(std::span<const int> classes, int task_id) {
  for (int c : classes) {
    if (std::find(class_ids.begin(), class_ids.end(), c) != class_ids.end()) {
      throw std::invalid_argument("classifier: class " + std::to_string(c) + " already present");
    }
  }
  const std::size_t d = embed_dim(), add = classes.size();
  weight = concat_cols(weight.detach(), Tensor::zeros({d, add})).detach();
  for (int c : classes) {
    class_ids.push_back(c);
    class_tasks.push_back(task_id);
  }
}

void Classifier::validate() const {
  if (weight.dim() != 2 || weight.cols() != class_ids.size() || class_tasks.size() != class_ids.size()) {
    throw ShapeError("classifier: weight " + shape_str(weight.shape()) + " vs " +
                     std::to_string(class_ids.size()) + " classes");
  }
}

std::vector<double> logits(std::span<const double> feature, const Classifier& classifier) {
  const std::size_t d = classifier.embed_dim(), k = classifier.num_classes();
  if (feature.size() != d) {
    throw ShapeError("logits: feature length " + std::to_string(feature.size()) +
                     " vs classifier " + shape_str(classifier.weight.shape()));
  }
  std::vector<double> out(k, 0.0);
  const double* w = classifier.weight.data().data();
  for (std::size_t i = 0; i < d; ++i) {
    const double f = feature[i];
    for (std::size_t j = 0; j < k; ++j) out[j] += w[i * k + j] * f;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Task vectors
// ---------------------------------------------------------------------------

std::size_t TaskVector::expected_size() const {
  std::size_t n = 0;
  for (const auto& e : manifest) n += e.rows * e.cols;
  return n;
}

TaskVector flatten_adapter(const AdapterSet& adapters) {
  TaskVector v;
  for (std::size_t l = 0; l < adapters.num_blocks(); ++l) {
    for (const auto* name : {"down", "up"}) {
      const Tensor& t = std::string_view(name) == "down" ? adapters.down[l] : adapters.up[l];
      v.manifest.push_back({l, name, t.rows(), t.cols()});
      v.values.insert(v.values.end(), t.data().begin(), t.data().end());
    }
  }
  return v;
}

AdapterSet unflatten(const TaskVector& vector, int task_id) {
  if (vector.values.size() != vector.expected_size()) {
    throw ShapeError("unflatten: " + std::to_string(vector.values.size()) +
                     " values but manifest describes " + std::to_string(vector.expected_size()));
  }
  if (vector.manifest.size() % 2 != 0) throw ShapeError("unflatten: manifest must pair down/up");
  AdapterSet a;
  a.task_id = task_id;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < vector.manifest.size(); ++i) {
    const auto& e = vector.manifest[i];
    const std::size_t block = i / 2;
    const char* expect = (i % 2 == 0) ? "down" : "up";
    if (e.block != block || e.matrix != expect) {
      throw ShapeError("unflatten: manifest entry " + std::to_string(i) + " is (" +
                       std::to_string(e.block) + "," + e.matrix + "), expected (" +
                       std::to_string(block) + "," + expect + ")");
    }
    std::vector<double> vals(vector.values.begin() + static_cast<std::ptrdiff_t>(offset),
                             vector.values.begin() + static_cast<std::ptrdiff_t>(offset + e.rows * e.cols));
    offset += e.rows * e.cols;
    Tensor t = Tensor::from({e.rows, e.cols}, std::move(vals));
    if (i % 2 == 0) {
      a.down.push_back(std::move(t));
    } else {
      a.up.push_back(std::move(t));
    }
  }
  if (!a.down.empty()) {
    a.rank = a.down.front().cols();
    a.validate(a.down.size(), a.down.front().rows());
  }
  return a;
}

}  // namespace tuna
