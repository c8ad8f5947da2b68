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
#include "tuna/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tuna/errors.hpp"

namespace tuna {

std::string to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::TunaEnsemble: return "tuna";
    case Strategy::EntropyOnly: return "entropy";
    case Strategy::UniversalOnly: return "universal";
    case Strategy::MaxLogitBaseline: return "maxlogit";
  }
  return "tuna";
}

Strategy parse_strategy(const std::string& text) {
  for (auto s : all_strategies()) {
    if (to_string(s) == text) return s;
  }
  throw ConfigError("unknown strategy '" + text + "' (expected tuna, entropy, universal or maxlogit)");
}

std::vector<Strategy> all_strategies() {
  return {Strategy::TunaEnsemble, Strategy::EntropyOnly, Strategy::UniversalOnly, Strategy::MaxLogitBaseline};
}

bool needs_universal(Strategy strategy) {
  return strategy == Strategy::TunaEnsemble || strategy == Strategy::UniversalOnly;
}

std::vector<double> softmax_probs(std::span<const double> logits) {
  if (logits.empty()) return {};
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

std::vector<double> predict_probs(const Backbone& backbone, std::span<const double> tokens,
                                  const AdapterSet& adapters, const Classifier& classifier) {
  return softmax_probs(logits(backbone.embed(tokens, &adapters), classifier));
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p < 0.0 || std::isnan(p)) throw std::invalid_argument("entropy: negative probability");
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax: empty input");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

Selection select_by_entropy(std::span<const std::vector<double>> probs_per_adapter) {
  if (probs_per_adapter.empty()) throw std::invalid_argument("select_adapter: no adapters");
  Selection s;
  s.entropies.reserve(probs_per_adapter.size());
  for (const auto& p : probs_per_adapter) s.entropies.push_back(entropy(p));
  s.index = static_cast<std::size_t>(std::min_element(s.entropies.begin(), s.entropies.end()) - s.entropies.begin());
  return s;
}

Selection select_adapter(const Backbone& backbone, std::span<const double> tokens,
                         std::span<const AdapterSet> adapters, const Classifier& classifier) {
  std::vector<std::vector<double>> probs;
  probs.reserve(adapters.size());
  for (const auto& a : adapters) probs.push_back(predict_probs(backbone, tokens, a, classifier));
  return select_by_entropy(probs);
}

Prediction decide(Strategy strategy, std::span<const std::vector<double>> task_logits,
                  const std::vector<double>* universal_logits, const Classifier& classifier,
                  std::span<const int> task_ids) {
  if (task_logits.empty()) throw std::invalid_argument("predict: model has no task adapters");
  if (task_ids.size() != task_logits.size()) throw std::invalid_argument("predict: task id count mismatch");
  if (needs_universal(strategy) && universal_logits == nullptr) {
    throw std::invalid_argument("predict: strategy '" + to_string(strategy) + "' needs the universal adapter");
  }
  std::vector<std::vector<double>> probs;
  probs.reserve(task_logits.size());
  for (const auto& z : task_logits) probs.push_back(softmax_probs(z));
  Selection sel = select_by_entropy(probs);

  Prediction out;
  out.per_adapter_entropy = std::move(sel.entropies);
  switch (strategy) {
    case Strategy::TunaEnsemble: {
      const auto uni = softmax_probs(*universal_logits);
      const auto& chosen = probs[sel.index];
      out.combined_probs.resize(chosen.size());
      for (std::size_t c = 0; c < chosen.size(); ++c) out.combined_probs[c] = 0.5 * (chosen[c] + uni[c]);
      out.selected_task = task_ids[sel.index];
      break;
    }
    case Strategy::EntropyOnly:
      out.combined_probs = probs[sel.index];
      out.selected_task = task_ids[sel.index];
      break;
    case Strategy::UniversalOnly:
      out.combined_probs = softmax_probs(*universal_logits);
      out.selected_task = AdapterSet::kUniversal;
      break;
    case Strategy::MaxLogitBaseline: {
      std::vector<double> best = task_logits.front();
      std::vector<std::size_t> owner(best.size(), 0);
      for (std::size_t i = 1; i < task_logits.size(); ++i) {
        for (std::size_t c = 0; c < best.size(); ++c) {
          if (task_logits[i][c] > best[c]) {
            best[c] = task_logits[i][c];
            owner[c] = i;
          }
        }
      }
      out.combined_probs = softmax_probs(best);
      out.selected_task = task_ids[owner[argmax(best)]];
      break;
    }
  }
  out.class_index = argmax(out.combined_probs);
  out.class_id = classifier.class_ids.at(out.class_index);
  return out;
}

Prediction predict(std::span<const double> tokens, const ModelState& model, Strategy strategy) {
  if (model.adapters.empty()) throw std::invalid_argument("predict: model has no task adapters");
  if (needs_universal(strategy) && !model.universal) {
    throw std::invalid_argument("predict: strategy '" + to_string(strategy) + "' needs the universal adapter");
  }
  std::vector<std::vector<double>> task_logits;
  std::vector<int> ids;
  for (const auto& a : model.adapters) {
    task_logits.push_back(logits(model.backbone.embed(tokens, &a), model.classifier));
    ids.push_back(a.task_id);
  }
  std::optional<std::vector<double>> uni;
  if (model.universal) uni = logits(model.backbone.embed(tokens, &*model.universal), model.classifier);
  return decide(strategy, task_logits, uni ? &*uni : nullptr, model.classifier, ids);
}

}  // namespace tuna
