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

#include "tuna/errors.hpp"
#include "tuna/model.hpp"

namespace tuna {
namespace {

BackboneConfig tiny_config(std::size_t d = 4) {
  BackboneConfig c;
  c.num_blocks = 2;
  c.embed_dim = d;
  c.num_heads = 2;
  c.mlp_hidden = 6;
  c.seq_len = 3;
  c.token_dim = 5;
  return c;
}

std::vector<double> random_tokens(const BackboneConfig& c, Rng& rng) {
  std::vector<double> t(c.seq_len * c.token_dim);
  for (auto& x : t) x = rng.normal();
  return t;
}

AdapterSet one_block(std::vector<double> down, std::vector<double> up, std::size_t d, std::size_t r) {
  AdapterSet a;
  a.rank = r;
  a.down.push_back(Tensor::from({d, r}, std::move(down)));
  a.up.push_back(Tensor::from({r, d}, std::move(up)));
  return a;
}

TEST(Adapter, ZeroUpProjectionLeavesMlp) {
  Rng rng(1);
  auto c = tiny_config();
  const auto bb = Backbone::init(c, rng);
  auto a = AdapterSet::init(c.num_blocks, c.embed_dim, 3, 1, rng);
  const auto x = Tensor::from({2, 4}, {0.1, -0.3, 0.7, 1.2, -0.5, 0.4, 0.2, 0.0});
  EXPECT_EQ(bb.adapter_forward(x, 0, &a).values(), bb.adapter_forward(x, 0, nullptr).values());
}

TEST(Adapter, HandComputedResidual) {
  Rng rng(2);
  auto c = tiny_config(2);
  c.num_heads = 1;
  c.num_blocks = 1;
  const auto bb = Backbone::init(c, rng);
  const auto a = one_block({1.0, 0.0}, {2.0, 0.0}, 2, 1);
  const auto x = Tensor::from({1, 2}, {1.0, -1.0});
  const auto plain = bb.adapter_forward(x, 0, nullptr);
  const auto with = bb.adapter_forward(x, 0, &a);
  EXPECT_DOUBLE_EQ(with.at(0), plain.at(0) + 2.0);
  EXPECT_DOUBLE_EQ(with.at(1), plain.at(1));
}

TEST(Adapter, DeadReluGivesNoResidual) {
  Rng rng(3);
  auto c = tiny_config(2);
  c.num_heads = 1;
  c.num_blocks = 1;
  const auto bb = Backbone::init(c, rng);
  const auto a = one_block({1.0, 1.0}, {5.0, -7.0}, 2, 1);
  const auto x = Tensor::from({1, 2}, {-1.0, -2.0});
  EXPECT_EQ(bb.adapter_forward(x, 0, &a).values(), bb.adapter_forward(x, 0, nullptr).values());
}

TEST(Backbone, ZeroAdapterEquivalence) {
  Rng rng(4);
  const auto c = tiny_config();
  const auto bb = Backbone::init(c, rng);
  const auto zero = AdapterSet::zeros(c.num_blocks, c.embed_dim, 3, 1);
  for (int i = 0; i < 5; ++i) {
    const auto t = random_tokens(c, rng);
    EXPECT_EQ(bb.embed(t, &zero), bb.embed(t, nullptr));
  }
}

TEST(Backbone, EmbeddingHasLengthD) {
  Rng rng(5);
  for (auto readout : {Readout::ClassToken, Readout::MeanPool}) {
    auto c = tiny_config();
    c.readout = readout;
    const auto bb = Backbone::init(c, rng);
    EXPECT_EQ(bb.embed(random_tokens(c, rng), nullptr).size(), c.embed_dim);
  }
}

TEST(Backbone, BatchedForwardMatchesSingleInstances) {
  Rng rng(6);
  const auto c = tiny_config();
  const auto bb = Backbone::init(c, rng);
  auto a = AdapterSet::init(c.num_blocks, c.embed_dim, 2, 1, rng, 0.5);
  for (auto& u : a.up)
    for (auto& x : u.mutable_data()) x = rng.normal();
  std::vector<Instance> items(4);
  for (auto& it : items) it.tokens = random_tokens(c, rng);
  const auto batch = bb.embed_all(items, &a, 3);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto single = bb.embed(items[i].tokens, &a);
    for (std::size_t j = 0; j < c.embed_dim; ++j) EXPECT_NEAR(batch[i][j], single[j], 1e-13);
  }
}

TEST(Backbone, InitIsFrozenAndNamed) {
  Rng rng(7);
  const auto bb = Backbone::init(tiny_config(), rng);
  EXPECT_TRUE(bb.frozen());
  for (const auto& t : bb.parameters()) EXPECT_FALSE(t.requires_grad());
  const auto named = bb.named_parameters();
  ASSERT_FALSE(named.empty());
  bool saw = false;
  for (const auto& [name, t] : named) saw = saw || name == "blocks.0.attn.wq";
  EXPECT_TRUE(saw);
}

TEST(Backbone, ConfigValidation) {
  auto c = tiny_config();
  c.num_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.embed_dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Backbone, InputShapeChecked) {
  Rng rng(8);
  const auto bb = Backbone::init(tiny_config(), rng);
  std::vector<double> wrong(7, 0.0);
  EXPECT_THROW((void)bb.embed(wrong, nullptr), ShapeError);
}

TEST(Classifier, Logits) {
  Classifier head(2);
  const int cls[] = {10, 11};
  head.add_classes(cls, 1);
  head.weight = Tensor::from({2, 2}, {1, 1, 0, 1});  // columns [1,0] and [1,1]
  const double f[] = {2.0, 3.0};
  EXPECT_EQ(logits(f, head), (std::vector<double>{2.0, 5.0}));
  const double zero[] = {0.0, 0.0};
  EXPECT_EQ(logits(zero, head), (std::vector<double>{0.0, 0.0}));
}

TEST(Classifier, IdentityWeights) {
  Classifier head(3);
  const int cls[] = {0, 1, 2};
  head.add_classes(cls, 1);
  head.weight = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const double e2[] = {0.0, 1.0, 0.0};
  EXPECT_EQ(logits(e2, head), (std::vector<double>{0.0, 1.0, 0.0}));
}

TEST(Classifier, AddClassesAppendsZeroColumns) {
  Classifier head(2);
  const int a[] = {4, 7};
  head.add_classes(a, 1);
  head.weight = Tensor::from({2, 2}, {1, 2, 3, 4});
  const int b[] = {1};
  head.add_classes(b, 2);
  EXPECT_EQ(head.weight.values(), (std::vector<double>{1, 2, 0, 3, 4, 0}));
  EXPECT_EQ(head.column_of(1), 2u);
  EXPECT_EQ(head.class_tasks, (std::vector<int>{1, 1, 2}));
  EXPECT_THROW(head.add_classes(b, 3), std::invalid_argument);
  EXPECT_THROW((void)head.column_of(99), std::out_of_range);
  const double f[] = {1.0, 1.0, 1.0};
  EXPECT_THROW((void)logits(f, head), ShapeError);
}

TEST(TaskVector, FlattenLayout) {
  const auto a = one_block({1.0, 2.0}, {3.0, 4.0}, 2, 1);
  const auto v = flatten_adapter(a);
  EXPECT_EQ(v.values, (std::vector<double>{1, 2, 3, 4}));
  ASSERT_EQ(v.manifest.size(), 2u);
  EXPECT_EQ(v.manifest[0].matrix, "down");
  EXPECT_EQ(v.manifest[1].matrix, "up");
  EXPECT_EQ(v.expected_size(), 4u);
}

TEST(TaskVector, ZeroAdapterFlattensToZeros) {
  const auto v = flatten_adapter(AdapterSet::zeros(2, 4, 3, 1));
  EXPECT_EQ(v.values.size(), 2u * (4 * 3 + 3 * 4));
  for (double x : v.values) EXPECT_EQ(x, 0.0);
}

TEST(TaskVector, RoundTripIsBitwise) {
  Rng rng(9);
  auto a = AdapterSet::init(3, 4, 2, 5, rng, 0.3);
  for (auto& u : a.up)
    for (auto& x : u.mutable_data()) x = rng.normal();
  const auto back = unflatten(flatten_adapter(a), 5);
  EXPECT_TRUE(bitwise_equal(a, back));
  EXPECT_EQ(back.task_id, 5);
}

TEST(TaskVector, UnflattenFusedValues) {
  auto v = flatten_adapter(AdapterSet::zeros(1, 2, 1, 1));
  v.values = {3.0, -2.0, 0.0, 0.0};
  const auto a = unflatten(v);
  EXPECT_EQ(a.down[0].at(0), 3.0);
  EXPECT_EQ(a.down[0].at(1), -2.0);
  EXPECT_TRUE(a.is_universal());
}

TEST(TaskVector, TruncatedValuesRejected) {
  auto v = flatten_adapter(AdapterSet::zeros(2, 4, 3, 1));
  v.values.pop_back();
  EXPECT_THROW((void)unflatten(v), ShapeError);
}

}  // namespace
}  // namespace tuna
