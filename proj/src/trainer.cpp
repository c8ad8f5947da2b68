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
#include "tuna/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tuna/errors.hpp"

namespace tuna {

std::string to_string(OrthMode mode) {
  switch (mode) {
    case OrthMode::Up: return "up";
    case OrthMode::Down: return "down";
    case OrthMode::Both: return "both";
  }
  return "up";
}

OrthMode parse_orth_mode(const std::string& text) {
  if (text == "up") return OrthMode::Up;
  if (text == "down") return OrthMode::Down;
  if (text == "both") return OrthMode::Both;
  throw ConfigError("unknown orth_mode '" + text + "' (expected up, down or both)");
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw ConfigError("train.lr0 must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must lie in [0,1)");
  if (!(lambda0 >= 0.0) || !std::isfinite(lambda0)) throw ConfigError("train.lambda0 must be >= 0");
  if (!(lambda_decay > 0.0 && lambda_decay <= 1.0)) throw ConfigError("train.lambda_decay must lie in (0,1]");
  if (adapter_rank == 0) throw ConfigError("train.adapter_rank must be >= 1");
  if (!(replay_lr > 0.0) || !std::isfinite(replay_lr)) throw ConfigError("train.replay_lr must be positive");
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

Tensor cls_loss(const Backbone& backbone, std::span<const Instance* const> batch,
                const AdapterSet& adapters, const Tensor& weight, std::span<const int> targets) {
  const auto& c = backbone.config();
  Tensor features = backbone.forward(stack_tokens(batch, c.seq_len, c.token_dim), batch.size(), &adapters);
  return cross_entropy(matmul(features, weight), targets);
}

Tensor orth_loss(const AdapterSet& current, std::span<const AdapterSet> previous, OrthMode mode) {
  Tensor total = Tensor::scalar(0.0);
  const bool use_up = mode == OrthMode::Up || mode == OrthMode::Both;
  const bool use_down = mode == OrthMode::Down || mode == OrthMode::Both;
  for (const auto& prev : previous) {
    if (prev.num_blocks() != current.num_blocks()) {
      throw ShapeError("orth_loss: block count " + std::to_string(current.num_blocks()) + " vs " +
                       std::to_string(prev.num_blocks()));
    }
    for (std::size_t l = 0; l < current.num_blocks(); ++l) {
      if (use_up) {
        if (prev.up[l].shape() != current.up[l].shape()) {
          throw ShapeError("orth_loss: W_up " + shape_str(current.up[l].shape()) + " vs " +
                           shape_str(prev.up[l].shape()));
        }
        total = add(total, l1_norm(matmul(current.up[l], transpose(prev.up[l]))));
      }
      if (use_down) {
        if (prev.down[l].shape() != current.down[l].shape()) {
          throw ShapeError("orth_loss: W_down " + shape_str(current.down[l].shape()) + " vs " +
                           shape_str(prev.down[l].shape()));
        }
        total = add(total, l1_norm(matmul(current.down[l], transpose(prev.down[l]))));
      }
    }
  }
  return total;
}

Tensor total_loss(const Backbone& backbone, std::span<const Instance* const> batch,
                  const AdapterSet& adapters, const Tensor& weight, std::span<const int> targets,
                  std::span<const AdapterSet> previous, OrthMode mode, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("total_loss: lambda must be >= 0");
  Tensor loss = cls_loss(backbone, batch, adapters, weight, targets);
  if (previous.empty() || lambda == 0.0) return loss;
  return add(loss, scale(orth_loss(adapters, previous, mode), lambda));
}

double lambda_at(double lambda0, double decay, std::size_t epoch) {
  return lambda0 * std::pow(decay, static_cast<double>(epoch));
}

// ---------------------------------------------------------------------------
// Class statistics and replay
// ---------------------------------------------------------------------------

std::vector<ClassStatistics> statistics_from_features(const std::vector<std::vector<double>>& features,
                                                      std::span<const int> labels,
                                                      std::span<const int> classes, int task_id) {
  if (features.size() != labels.size()) {
    throw ShapeError("statistics: " + std::to_string(features.size()) + " features vs " +
                     std::to_string(labels.size()) + " labels");
  }
  std::vector<ClassStatistics> out;
  for (int cls : classes) {
    ClassStatistics s;
    s.class_id = cls;
    s.task_id = task_id;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != cls) continue;
      if (s.count == 0) {
        s.mean.assign(features[i].size(), 0.0);
        s.variance.assign(features[i].size(), 0.0);
      }
      for (std::size_t j = 0; j < features[i].size(); ++j) s.mean[j] += features[i][j];
      ++s.count;
    }
    if (s.count == 0) throw DataError("statistics: class " + std::to_string(cls) + " has no instances");
    const double n = static_cast<double>(s.count);
    for (auto& m : s.mean) m /= n;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != cls) continue;
      for (std::size_t j = 0; j < features[i].size(); ++j) {
        const double dev = features[i][j] - s.mean[j];
        s.variance[j] += dev * dev;
      }
    }
    for (auto& v : s.variance) v = std::max(v / n, kVarianceFloor);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ClassStatistics> collect_statistics(const Backbone& backbone, std::span<const Instance> items,
                                                std::span<const int> classes,
                                                const AdapterSet& adapters, int task_id) {
  const auto features = backbone.embed_all(items, &adapters);
  std::vector<int> labels;
  labels.reserve(items.size());
  for (const auto& it : items) labels.push_back(it.label);
  return statistics_from_features(features, labels, classes, task_id);
}

std::vector<std::vector<double>> sample_pseudo_features(const ClassStatistics& stats, std::size_t count,
                                                        Rng& rng) {
  std::vector<std::vector<double>> out(count, std::vector<double>(stats.mean.size()));
  for (auto& f : out) {
    for (std::size_t j = 0; j < f.size(); ++j) f[j] = rng.normal(stats.mean[j], std::sqrt(stats.variance[j]));
  }
  return out;
}

void replay_calibrate(Classifier& classifier, std::span<const ClassStatistics> stats,
                      const TrainConfig& config, Rng& rng) {
  classifier.validate();
  std::vector<const ClassStatistics*> by_column(classifier.num_classes(), nullptr);
  for (const auto& s : stats) {
    auto it = std::find(classifier.class_ids.begin(), classifier.class_ids.end(), s.class_id);
    if (it != classifier.class_ids.end()) by_column[static_cast<std::size_t>(it - classifier.class_ids.begin())] = &s;
  }
  for (std::size_t j = 0; j < by_column.size(); ++j) {
    if (by_column[j] == nullptr) {
      throw std::invalid_argument("replay_calibrate: no statistics for class " +
                                  std::to_string(classifier.class_ids[j]));
    }
  }
  if (config.replay_samples_per_class == 0 || config.replay_epochs == 0) return;

  const std::size_t d = classifier.embed_dim();
  std::vector<double> pool;
  std::vector<int> targets;
  for (std::size_t j = 0; j < by_column.size(); ++j) {
    if (by_column[j]->mean.size() != d) {
      throw ShapeError("replay_calibrate: statistics of dimension " + std::to_string(by_column[j]->mean.size()) +
                       " for a " + std::to_string(d) + "-d classifier");
    }
    for (auto& f : sample_pseudo_features(*by_column[j], config.replay_samples_per_class, rng)) {
      pool.insert(pool.end(), f.begin(), f.end());
      targets.push_back(static_cast<int>(j));
    }
  }

  Tensor weight = classifier.weight.clone(true);
  SgdMomentum opt({weight}, config.momentum);
  const std::size_t n = targets.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.replay_epochs;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.replay_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t m = std::min(config.batch_size, n - start);
      std::vector<double> x(m * d);
      std::vector<int> y(m);
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t src = order[start + i];
        std::copy_n(pool.begin() + static_cast<std::ptrdiff_t>(src * d), d, x.begin() + static_cast<std::ptrdiff_t>(i * d));
        y[i] = targets[src];
      }
      Tensor loss = cross_entropy(matmul(Tensor::from({m, d}, std::move(x)), weight), y);
      if (!std::isfinite(loss.item())) throw NumericalError("replay_calibrate: non-finite loss");
      opt.zero_grad();
      loss.backward();
      opt.step(cosine_lr(config.replay_lr, step++, total_steps));
    }
  }
  classifier.weight = weight.detach();
}

// ---------------------------------------------------------------------------
// Task training
// ---------------------------------------------------------------------------

TaskOutcome train_task(const Backbone& backbone, const TaskData& task, int task_id,
                       std::span<const AdapterSet> previous, Classifier& classifier,
                       std::vector<ClassStatistics>& stats_so_far, const TrainConfig& config) {
  config.validate();
  const auto& bc = backbone.config();
  if (task.train.empty()) throw DataError("train_task: task " + std::to_string(task_id) + " has no training data");
  for (int c : task.classes) {
    if (std::find(classifier.class_ids.begin(), classifier.class_ids.end(), c) != classifier.class_ids.end()) {
      throw std::invalid_argument("train_task: class " + std::to_string(c) +
                                  " already belongs to an earlier task");
    }
  }
  for (const auto& inst : task.train) {
    if (std::find(task.classes.begin(), task.classes.end(), inst.label) == task.classes.end()) {
      throw DataError("train_task: label " + std::to_string(inst.label) + " is not in the task's class set");
    }
  }

  Rng rng = Rng(config.seed).fork(static_cast<std::uint64_t>(task_id));
  AdapterSet adapters = AdapterSet::init(bc.num_blocks, bc.embed_dim, config.adapter_rank, task_id, rng);
  adapters.set_trainable(true);

  const std::size_t old_k = classifier.num_classes();
  classifier.add_classes(task.classes, task_id);
  const std::size_t new_k = task.classes.size();
  const Tensor old_weight = Tensor::from({bc.embed_dim, old_k}, [&] {
    std::vector<double> w(bc.embed_dim * old_k);
    for (std::size_t i = 0; i < bc.embed_dim; ++i)
      for (std::size_t j = 0; j < old_k; ++j) w[i * old_k + j] = classifier.weight.at(i, j);
    return w;
  }());
  Tensor new_weight = Tensor::zeros({bc.embed_dim, new_k}, true);

  std::vector<Tensor> params = adapters.parameters();
  params.push_back(new_weight);
  SgdMomentum opt(params, config.momentum);

  const std::size_t n = task.train.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TaskOutcome outcome;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lambda = lambda_at(config.lambda0, config.lambda_decay, epoch);
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t m = std::min(config.batch_size, n - start);
      std::vector<const Instance*> batch(m);
      std::vector<int> targets(m);
      for (std::size_t i = 0; i < m; ++i) {
        batch[i] = &task.train[order[start + i]];
        targets[i] = static_cast<int>(classifier.column_of(batch[i]->label));
      }
      const Tensor weight = old_k == 0 ? new_weight : concat_cols(old_weight, new_weight);
      Tensor loss = total_loss(backbone, batch, adapters, weight, targets, previous, config.orth_mode, lambda);
      if (!std::isfinite(loss.item())) {
        throw NumericalError("train_task: non-finite loss at task " + std::to_string(task_id) + ", epoch " +
                             std::to_string(epoch));
      }
      opt.zero_grad();
      loss.backward();
      opt.step(cosine_lr(config.lr0, step++, total_steps));
      epoch_loss += loss.item() * static_cast<double>(m);
    }
    outcome.final_epoch_loss = epoch_loss / static_cast<double>(n);
  }

  adapters.set_trainable(false);
  new_weight.set_requires_grad(false);
  classifier.weight = concat_cols(old_weight, new_weight).detach();

  outcome.train_accuracy = accuracy_with_adapter(backbone, task.train, &adapters, classifier);
  outcome.stats = collect_statistics(backbone, task.train, task.classes, adapters, task_id);
  stats_so_far.insert(stats_so_far.end(), outcome.stats.begin(), outcome.stats.end());
  if (!previous.empty()) {
    Rng replay_rng = rng.fork(0x5eed);
    replay_calibrate(classifier, stats_so_far, config, replay_rng);
  }
  outcome.adapters = std::move(adapters);
  return outcome;
}

// ---------------------------------------------------------------------------
// Backbone pre-training
// ---------------------------------------------------------------------------

double pretrain_backbone(Backbone& backbone, std::span<const Instance> data, std::span<const int> classes,
                         const PretrainConfig& config) {
  if (data.empty() || classes.empty()) throw DataError("pretrain: empty data");
  if (config.epochs == 0 || config.batch_size == 0 || !(config.lr0 > 0.0)) {
    throw ConfigError("pretrain: epochs, batch_size and lr0 must be positive");
  }
  const auto& bc = backbone.config();
  Rng rng(config.seed);
  Classifier head(bc.embed_dim);
  head.add_classes(classes, 0);
  {
    std::vector<double> w(bc.embed_dim * classes.size());
    for (auto& x : w) x = rng.normal(0.0, 0.02);
    head.weight = Tensor::from({bc.embed_dim, classes.size()}, std::move(w), true);
  }
  backbone.set_trainable(true);
  std::vector<Tensor> params = backbone.parameters();
  params.push_back(head.weight);
  SgdMomentum opt(params, config.momentum);

  const std::size_t n = data.size();
  const std::size_t total_steps = ((n + config.batch_size - 1) / config.batch_size) * config.epochs;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t m = std::min(config.batch_size, n - start);
      std::vector<const Instance*> batch(m);
      std::vector<int> targets(m);
      for (std::size_t i = 0; i < m; ++i) {
        batch[i] = &data[order[start + i]];
        targets[i] = static_cast<int>(head.column_of(batch[i]->label));
      }
      Tensor f = backbone.forward(stack_tokens(batch, bc.seq_len, bc.token_dim), m, nullptr);
      Tensor loss = cross_entropy(matmul(f, head.weight), targets);
      if (!std::isfinite(loss.item())) throw NumericalError("pretrain: non-finite loss");
      opt.zero_grad();
      loss.backward();
      opt.step(cosine_lr(config.lr0, step++, total_steps));
    }
  }
  backbone.freeze();
  head.weight = head.weight.detach();
  return accuracy_with_adapter(backbone, data, nullptr, head);
}

double accuracy_with_adapter(const Backbone& backbone, std::span<const Instance> items,
                             const AdapterSet* adapters, const Classifier& classifier) {
  if (items.empty()) return 0.0;
  const auto features = backbone.embed_all(items, adapters);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto z = logits(features[i], classifier);
    const auto best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    if (classifier.class_ids[best] == items[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(items.size());
}

}  // namespace tuna
