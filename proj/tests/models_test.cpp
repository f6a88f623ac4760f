// Copyright 2026 The mobaxai Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mobaxai/models.hpp"

#include <gtest/gtest.h>

#include "gradient_check.hpp"

namespace mobaxai {
namespace {

FeatureSchema tiny_schema() {
  FeatureSchema s;
  s.add_categorical(Category::hero, 0, "hero_id", 5);
  s.add_numeric(Category::hero, 0, "hp");
  s.add_numeric(Category::hero, 0, "gold");
  s.add_categorical(Category::hero, 0, "camp", 2);
  s.add_numeric(Category::global, 0, "game_time");
  return s;
}

constexpr LstmConfig kTinyLstm{2, true, 3, 0.2, 4};
constexpr TransformerConfig kTinyTransformer{2, 2, 0.1, 4, 6, 4};

Model tiny_model(Architecture a, std::uint64_t seed = 7, std::size_t window = 3, std::size_t classes = 2) {
  return init_model(a, tiny_schema(), window, classes, seed, kTinyLstm, kTinyTransformer);
}

/// A window with valid one-hot spans and uniform numerics.
ad::Tensor random_window(const FeatureSchema& s, std::size_t l, Rng& rng) {
  ad::Tensor x({l, s.input_width()});
  for (std::size_t r = 0; r < l; ++r)
    for (const FeatureGroup& g : s.groups()) {
      if (g.kind == FeatureKind::numeric) x.at(r, g.offset) = rng.uniform();
      else x.at(r, g.offset + static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(g.cardinality) - 1))) = 1.0;
    }
  return x;
}

double eval_loss(const Model& m, const ad::Tensor& x, std::span<const int> y) {
  ad::Tape tape;
  BoundParams p(tape, m.params, false);
  return cross_entropy(logits(m, p, tape.constant(x), y.size()), y).value()[0];
}

class BothArchitectures : public ::testing::TestWithParam<Architecture> {};

TEST_P(BothArchitectures, OutputIsADistributionAndDeterministic) {
  const Model m = tiny_model(GetParam());
  Rng rng(1);
  const ad::Tensor x = random_window(m.schema, 3, rng);
  const ad::Tensor p = predict(m, x);
  ASSERT_EQ(p.shape(), (ad::Shape{1, 2}));
  EXPECT_NEAR(p[0] + p[1], 1.0, 1e-9);
  EXPECT_EQ(predict(m, x), p);
}

TEST_P(BothArchitectures, PerturbingHeadParametersChangesOutput) {
  Model m = tiny_model(GetParam());
  Rng rng(2);
  const ad::Tensor x = random_window(m.schema, 3, rng);
  const ad::Tensor before = predict(m, x);
  ad::Tensor& w = m.params.at("head.fc.weight");
  std::swap(w[0], w[w.size() - 1]);
  EXPECT_NE(predict(m, x), before);
}

TEST_P(BothArchitectures, WidthMismatchIsRejected) {
  const Model m = tiny_model(GetParam());
  EXPECT_THROW(predict(m, ad::Tensor({3, 4})), ad::ShapeError);
  EXPECT_THROW(predict(m, ad::Tensor({2, m.schema.input_width()})), ad::ShapeError);
}

TEST_P(BothArchitectures, ParameterCountMatchesClosedForm) {
  const Model tiny = tiny_model(GetParam(), 1, 3, 10);
  EXPECT_EQ(parameter_count(tiny.params),
            expected_parameter_count(GetParam(), tiny.schema, 10, kTinyLstm, kTinyTransformer));
  const Model mini = init_model(GetParam(), mini_schema(), 5, 2, 1);
  EXPECT_EQ(parameter_count(mini.params), expected_parameter_count(GetParam(), mini_schema(), 2));
}

TEST_P(BothArchitectures, LossGradientMatchesFiniteDifferences) {
  Model m = tiny_model(GetParam(), 11);
  Rng rng(5);
  const ad::Tensor a = random_window(m.schema, 3, rng), b = random_window(m.schema, 3, rng);
  const std::vector<ad::Tensor> xs{a, b};
  const std::vector<std::size_t> idx{0, 1};
  const ad::Tensor x = stack_inputs(xs, idx);
  const std::vector<int> y{0, 1};
  const auto [loss, grads] = loss_and_gradients(m, x, y, nullptr);
  EXPECT_NEAR(loss, eval_loss(m, x, y), 1e-12);
  for (auto& [name, w] : m.params) {
    const auto r = testing::check_gradient([&] { return eval_loss(m, x, y); }, w.values(), grads.at(name).values());
    EXPECT_LT(r.max_rel_error, 1e-4) << name << " index " << r.worst_index;
  }
}

TEST_P(BothArchitectures, InputGradientMatchesFiniteDifferences) {
  const Model m = tiny_model(GetParam(), 3);
  Rng rng(8);
  ad::Tensor x = random_window(m.schema, 3, rng);
  const std::vector<int> y{1};
  const InputGradient g = probability_gradient(m, x, y);
  EXPECT_NEAR(g.probability[0], predict(m, x)[1], 1e-12);
  const auto r = testing::check_gradient([&] { return predict(m, x)[1]; }, x.values(), g.gradient.values());
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_THROW(probability_gradient(m, x, std::vector<int>{2}), std::invalid_argument);
}

TEST_P(BothArchitectures, OneBatchOverfits) {
  Model m = tiny_model(GetParam(), 21);
  m.lstm.dropout = m.transformer.dropout = 0.0;
  Rng rng(9);
  LabeledSet data;
  for (int i = 0; i < 32; ++i) {
    data.inputs.push_back(random_window(m.schema, 3, rng));
    data.labels.push_back(rng.uniform_int(0, 1));
  }
  TrainConfig cfg;
  cfg.max_epochs = 600;
  cfg.batch_size = 32;
  cfg.learning_rate = 1e-2;
  cfg.patience = 600;
  const Model trained = train_model(m, data, data, cfg);
  EXPECT_EQ(evaluate(trained, data).accuracy, 1.0);
}

INSTANTIATE_TEST_SUITE_P(Models, BothArchitectures,
                         ::testing::Values(Architecture::lstm, Architecture::transformer),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Lstm, BidirectionalOutputDependsOnRowOrder) {
  const Model m = tiny_model(Architecture::lstm, 13);
  Rng rng(4);
  int changed = 0;
  for (int i = 0; i < 10; ++i) {
    const ad::Tensor x = random_window(m.schema, 3, rng);
    ad::Tensor rev(x.shape());
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t j = 0; j < x.cols(); ++j) rev.at(r, j) = x.at(2 - r, j);
    changed += predict(m, x) != predict(m, rev);
  }
  EXPECT_GE(changed, 9);
}

TEST(Transformer, AttentionRowsSumToOne) {
  const Model m = tiny_model(Architecture::transformer, 5);
  Rng rng(6);
  const std::vector<ad::Tensor> xs{random_window(m.schema, 3, rng), random_window(m.schema, 3, rng)};
  const std::vector<std::size_t> idx{0, 1};
  ad::Tape tape;
  BoundParams p(tape, m.params, false);
  std::vector<ad::Tensor> probes;
  logits(m, p, tape.constant(stack_inputs(xs, idx)), 2, {nullptr, &probes});
  ASSERT_EQ(probes.size(), 2u);
  for (const ad::Tensor& w : probes) {
    ASSERT_EQ(w.shape(), (ad::Shape{2 * 2 * 3, 3}));
    for (std::size_t r = 0; r < w.rows(); ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 3; ++c) s += w.at(r, c);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Training, SelectsBestValidationEpochAndWarnsOnAbsentClasses) {
  Model m = tiny_model(Architecture::lstm, 17, 3, 3);
  Rng rng(10);
  LabeledSet train, val;
  // Label is 1 when the first numeric of the last row is large, else 0;
  // class 2 never occurs.
  for (int i = 0; i < 160; ++i) {
    ad::Tensor x = random_window(m.schema, 3, rng);
    const int y = x.at(2, 5) > 0.5 ? 1 : 0;
    (i < 128 ? train : val).inputs.push_back(std::move(x));
    (i < 128 ? train : val).labels.push_back(y);
  }
  TrainConfig cfg;
  cfg.max_epochs = 15;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-2;
  cfg.seed = 3;
  const Model a = train_model(m, train, val, cfg);
  ASSERT_EQ(a.warnings.size(), 1u);
  EXPECT_NE(a.warnings[0].find("class 2"), std::string::npos);
  ASSERT_GE(a.history.size(), 2u);
  EXPECT_EQ(a.history.front().epoch, 0);
  const EpochMetrics& chosen = a.history.at(static_cast<std::size_t>(a.selected_epoch));
  EXPECT_LT(chosen.validation_loss, a.history.front().validation_loss);
  EXPECT_DOUBLE_EQ(evaluate(a, val).loss, chosen.validation_loss);
  // Same seed and data give the same parameters.
  EXPECT_EQ(train_model(m, train, val, cfg).params, a.params);
  LabeledSet bad = train;
  bad.labels[0] = 3;
  EXPECT_THROW(train_model(m, bad, val, cfg), std::invalid_argument);
}

}  // namespace
}  // namespace mobaxai
