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
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tuna/errors.hpp"
#include "tuna/fusion.hpp"
#include "tuna/inference.hpp"
#include "tuna/random.hpp"

namespace tuna {
namespace {

std::vector<double> log_of(std::vector<double> p) {
  for (auto& x : p) x = std::log(x);
  return p;
}

Classifier three_classes() {
  Classifier c(2);
  const std::vector<int> ids{10, 11, 12};
  c.add_classes(ids, 1);
  return c;
}

std::vector<double> random_probs(Rng& rng, std::size_t k) {
  std::vector<double> z(k);
  for (auto& x : z) x = rng.normal(0.0, 2.0);
  return softmax_probs(z);
}

TEST(Entropy, UniformOverFour) { EXPECT_NEAR(entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}), std::log(4.0), 1e-15); }

TEST(Entropy, OneHotIsZero) { EXPECT_EQ(entropy(std::vector<double>{0.0, 1.0, 0.0}), 0.0); }

TEST(Entropy, TwoPointDistributions) {
  EXPECT_NEAR(entropy(std::vector<double>{0.9, 0.1}), 0.3250829733914482, 1e-15);
  EXPECT_NEAR(entropy(std::vector<double>{0.5, 0.5}), std::log(2.0), 1e-15);
}

TEST(Entropy, RejectsNegativeEntry) {
  EXPECT_THROW(entropy(std::vector<double>{1.1, -0.1}), std::invalid_argument);
}

TEST(Entropy, BoundedByLogK) {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 1 + rng.below(20);
    const auto p = random_probs(rng, k);
    const double h = entropy(p);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(static_cast<double>(k)) + 1e-12);
  }
}

TEST(SoftmaxProbs, KnownValues) {
  const auto p = softmax_probs(std::vector<double>{0.0, 3.0});
  EXPECT_NEAR(p[0], 0.04742587317756678, 1e-15);
  EXPECT_NEAR(p[1], 0.9525741268224334, 1e-15);
}

TEST(SoftmaxProbs, LargeLogitsStayFinite) {
  const auto p = softmax_probs(std::vector<double>{1000.0, 1001.0, -1000.0});
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_EQ(p[2], 0.0);
}

TEST(Argmax, FirstMaximumWins) {
  EXPECT_EQ(argmax(std::vector<double>{1.0, 3.0, 3.0}), 1u);
  EXPECT_THROW(argmax(std::vector<double>{}), std::invalid_argument);
}

TEST(Selection, LowerEntropyAdapterIsChosen) {
  const std::vector<std::vector<double>> probs{{0.9, 0.1}, {0.5, 0.5}};
  const auto s = select_by_entropy(probs);
  EXPECT_EQ(s.index, 0u);
  EXPECT_NEAR(s.entropies[0], 0.3250829733914482, 1e-15);
  EXPECT_NEAR(s.entropies[1], 0.6931471805599453, 1e-15);
}

TEST(Selection, TiesGoToLowestIndex) {
  const std::vector<std::vector<double>> probs(4, std::vector<double>{0.2, 0.3, 0.5});
  EXPECT_EQ(select_by_entropy(probs).index, 0u);
}

TEST(Selection, EmptyListRejected) {
  EXPECT_THROW(select_by_entropy(std::span<const std::vector<double>>{}), std::invalid_argument);
}

TEST(Selection, PermutingAdaptersPermutesTheIndex) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t t = 1 + rng.below(8);
    std::vector<std::vector<double>> probs;
    for (std::size_t i = 0; i < t; ++i) probs.push_back(random_probs(rng, 5));
    // Duplicate one distribution now and then to exercise ties.
    if (t > 1 && trial % 4 == 0) probs[t - 1] = probs[0];
    std::vector<std::size_t> perm(t);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<std::size_t>(perm));
    std::vector<std::vector<double>> permuted;
    for (auto i : perm) permuted.push_back(probs[i]);

    const auto base = select_by_entropy(probs);
    const auto moved = select_by_entropy(permuted);
    EXPECT_EQ(entropy(permuted[moved.index]), base.entropies[base.index]);
    // Lowest permuted position among all minimisers.
    std::size_t expected = t;
    for (std::size_t pos = 0; pos < t && expected == t; ++pos) {
      if (entropy(permuted[pos]) == base.entropies[base.index]) expected = pos;
    }
    EXPECT_EQ(moved.index, expected);
  }
}

class DecideTest : public ::testing::Test {
 protected:
  Classifier head = three_classes();
  // Adapter 0 is confident in class 10, adapter 1 is near uniform.
  std::vector<std::vector<double>> tasks{log_of({0.6, 0.05, 0.35}), log_of({0.34, 0.33, 0.33})};
  std::vector<double> universal = log_of({0.1, 0.3, 0.6});
  std::vector<int> ids{1, 2};
};

TEST_F(DecideTest, EnsembleSumsProbabilities) {
  const auto p = decide(Strategy::TunaEnsemble, tasks, &universal, head, ids);
  EXPECT_EQ(p.class_index, 2u);
  EXPECT_EQ(p.class_id, 12);
  EXPECT_EQ(p.selected_task, 1);
  EXPECT_NEAR(p.combined_probs[0], 0.35, 1e-12);
  EXPECT_NEAR(p.combined_probs[1], 0.175, 1e-12);
  EXPECT_NEAR(p.combined_probs[2], 0.475, 1e-12);
}

TEST_F(DecideTest, EntropyOnlyUsesSelectedAdapter) {
  const auto p = decide(Strategy::EntropyOnly, tasks, &universal, head, ids);
  EXPECT_EQ(p.class_id, 10);
  EXPECT_EQ(p.selected_task, 1);
}

TEST_F(DecideTest, UniversalOnlyIgnoresTaskAdapters) {
  const auto p = decide(Strategy::UniversalOnly, tasks, &universal, head, ids);
  EXPECT_EQ(p.class_id, 12);
  EXPECT_EQ(p.selected_task, AdapterSet::kUniversal);
}

TEST_F(DecideTest, MaxLogitTakesLargestRawLogit) {
  const std::vector<std::vector<double>> raw{{1.0, 5.0, 0.0}, {4.0, 2.0, 6.0}};
  const auto p = decide(Strategy::MaxLogitBaseline, raw, nullptr, head, ids);
  EXPECT_EQ(p.class_id, 12);
  EXPECT_EQ(p.selected_task, 2);
}

TEST_F(DecideTest, MissingUniversalRejected) {
  EXPECT_THROW(decide(Strategy::TunaEnsemble, tasks, nullptr, head, ids), std::invalid_argument);
  EXPECT_THROW(decide(Strategy::UniversalOnly, tasks, nullptr, head, ids), std::invalid_argument);
  EXPECT_NO_THROW(decide(Strategy::EntropyOnly, tasks, nullptr, head, ids));
  EXPECT_NO_THROW(decide(Strategy::MaxLogitBaseline, tasks, nullptr, head, ids));
}

TEST_F(DecideTest, MalformedInputsRejected) {
  EXPECT_THROW(decide(Strategy::EntropyOnly, std::span<const std::vector<double>>{}, nullptr, head, {}),
               std::invalid_argument);
  const std::vector<int> short_ids{1};
  EXPECT_THROW(decide(Strategy::EntropyOnly, tasks, nullptr, head, short_ids), std::invalid_argument);
}

TEST_F(DecideTest, IdenticalDistributionsAgreeWithSingleAdapter) {
  const std::vector<std::vector<double>> one{universal};
  const std::vector<int> one_id{1};
  const auto ens = decide(Strategy::TunaEnsemble, one, &universal, head, one_id);
  const auto single = decide(Strategy::EntropyOnly, one, nullptr, head, one_id);
  EXPECT_EQ(ens.class_index, single.class_index);
}

TEST_F(DecideTest, ArgmaxTiesGoToLowestClass) {
  const std::vector<std::vector<double>> flat{{2.0, 2.0, 2.0}};
  const std::vector<int> one_id{1};
  for (auto s : all_strategies()) {
    EXPECT_EQ(decide(s, flat, &flat[0], head, one_id).class_index, 0u) << to_string(s);
  }
}

TEST(Decide, PredictionInvariantsOnRandomLogits) {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = 2 + rng.below(9);
    const std::size_t t = 1 + rng.below(6);
    Classifier head(1);
    std::vector<int> classes(k);
    std::iota(classes.begin(), classes.end(), 100);
    head.add_classes(classes, 1);
    std::vector<std::vector<double>> tasks(t, std::vector<double>(k));
    for (auto& row : tasks)
      for (auto& x : row) x = rng.normal(0.0, 3.0);
    std::vector<double> uni(k);
    for (auto& x : uni) x = rng.normal(0.0, 3.0);
    std::vector<int> ids(t);
    std::iota(ids.begin(), ids.end(), 1);
    for (auto s : all_strategies()) {
      const auto p = decide(s, tasks, &uni, head, ids);
      ASSERT_EQ(p.combined_probs.size(), k);
      for (double q : p.combined_probs) EXPECT_GE(q, 0.0);
      EXPECT_EQ(p.class_index, argmax(p.combined_probs));
      EXPECT_EQ(p.class_id, head.class_ids[p.class_index]);
      ASSERT_EQ(p.per_adapter_entropy.size(), t);
      for (double h : p.per_adapter_entropy) {
        EXPECT_GE(h, 0.0);
        EXPECT_LE(h, std::log(static_cast<double>(k)) + 1e-12);
      }
    }
  }
}

TEST(Strategies, NamesRoundTrip) {
  for (auto s : all_strategies()) EXPECT_EQ(parse_strategy(to_string(s)), s);
  EXPECT_THROW(parse_strategy("oracle"), ConfigError);
  EXPECT_TRUE(needs_universal(Strategy::TunaEnsemble));
  EXPECT_TRUE(needs_universal(Strategy::UniversalOnly));
  EXPECT_FALSE(needs_universal(Strategy::EntropyOnly));
  EXPECT_FALSE(needs_universal(Strategy::MaxLogitBaseline));
}

class PredictTest : public ::testing::Test {
 protected:
  void SetUp() override {
    BackboneConfig c;
    c.num_blocks = 1;
    c.embed_dim = 8;
    c.num_heads = 2;
    c.mlp_hidden = 12;
    c.seq_len = 4;
    c.token_dim = 6;
    Rng rng(21);
    model.backbone = Backbone::init(c, rng);
    auto a = AdapterSet::init(1, 8, 3, 1, rng, 0.3);
    for (auto& u : a.up)
      for (auto& x : u.mutable_data()) x = rng.normal(0.0, 0.3);
    model.adapters.push_back(a);
    model.classifier = Classifier(8);
    const std::vector<int> ids{0, 1, 2, 3};
    model.classifier.add_classes(ids, 1);
    for (auto& x : model.classifier.weight.mutable_data()) x = rng.normal();
    for (int i = 0; i < 40; ++i) {
      std::vector<double> x(c.seq_len * c.token_dim);
      for (auto& v : x) v = rng.normal();
      inputs.push_back(std::move(x));
    }
  }
  ModelState model;
  std::vector<std::vector<double>> inputs;
};

TEST_F(PredictTest, SingleTaskStrategiesCoincide) {
  model.universal = fuse(model.adapters);
  for (const auto& x : inputs) {
    const auto ref = predict(x, model, Strategy::EntropyOnly);
    for (auto s : all_strategies()) {
      const auto p = predict(x, model, s);
      EXPECT_EQ(p.class_id, ref.class_id) << to_string(s);
    }
  }
}

TEST_F(PredictTest, MissingUniversalRejected) {
  EXPECT_THROW(predict(inputs[0], model, Strategy::TunaEnsemble), std::invalid_argument);
  EXPECT_THROW(predict(inputs[0], model, Strategy::UniversalOnly), std::invalid_argument);
  model.adapters.clear();
  EXPECT_THROW(predict(inputs[0], model, Strategy::EntropyOnly), std::invalid_argument);
}

TEST_F(PredictTest, SelectionMatchesPredictEntropies) {
  Rng rng(8);
  auto second = AdapterSet::init(1, 8, 3, 2, rng, 0.5);
  for (auto& u : second.up)
    for (auto& x : u.mutable_data()) x = rng.normal(0.0, 0.5);
  model.adapters.push_back(second);
  for (const auto& x : inputs) {
    const auto s = select_adapter(model.backbone, x, model.adapters, model.classifier);
    const auto p = predict(x, model, Strategy::EntropyOnly);
    EXPECT_EQ(p.per_adapter_entropy, s.entropies);
    EXPECT_EQ(p.selected_task, model.adapters[s.index].task_id);
  }
}

}  // namespace
}  // namespace tuna
