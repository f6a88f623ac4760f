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

#include "mobaxai/encoding.hpp"

#include <gtest/gtest.h>

#include "gradient_check.hpp"

namespace mobaxai {
namespace {

FeatureSchema toy_schema() {
  FeatureSchema s;
  s.add_categorical(Category::hero, 0, "hero_id", 20);
  s.add_numeric(Category::hero, 0, "level");
  s.add_numeric(Category::hero, 0, "hp");
  s.add_categorical(Category::hero, 0, "camp", 2);
  s.add_numeric(Category::global, 0, "game_time");
  return s;
}

TEST(Encoding, SchemaSpansAreContiguous) {
  const FeatureSchema s = toy_schema();
  EXPECT_EQ(s.input_width(), 20u + 1 + 1 + 2 + 1);
  EXPECT_EQ(s.embedding_width(), 5u + 1 + 1 + 2 + 1);
  EXPECT_EQ(s.groups()[3].offset, 22u);
  EXPECT_EQ(s.groups()[3].embed_offset, 7u);
  EXPECT_EQ(s.dimension_name(7), "hero_0.hero_id=7");
  EXPECT_EQ(s.dimension_name(21), "hero_0.hp");
  EXPECT_EQ(s.dimension_name(24), "global.game_time");
  EXPECT_THROW(s.dimension_name(25), std::out_of_range);
}

TEST(Encoding, EmbeddingWidthRule) {
  EXPECT_EQ(embedding_width_for(2), 2u);
  EXPECT_EQ(embedding_width_for(4), 2u);
  EXPECT_EQ(embedding_width_for(10), 4u);
  EXPECT_EQ(embedding_width_for(20), 5u);
}

TEST(Encoding, MiniSchemaWidths) {
  const FeatureSchema s = mini_schema();
  EXPECT_EQ(s.input_width(), 360u);
  EXPECT_EQ(s.embedding_width(), 210u);
}

TEST(Encoding, OneHotAndNormalisation) {
  FeatureSchema s = toy_schema();
  s.mutable_groups()[1].min = 1;
  s.mutable_groups()[1].max = 15;
  s.mutable_groups()[2].min = 0;
  s.mutable_groups()[2].max = 1;
  s.mutable_groups()[4].min = 5;
  s.mutable_groups()[4].max = 5;  // constant column
  Frame f;
  f.game_time = 5;
  f.global.game_time = 5;
  f.heroes[0].hero_id = 13;
  f.heroes[0].camp = Camp::blue;
  f.heroes[0].level = 8;
  f.heroes[0].hp = 0.25;
  const std::vector<double> v = encode_frame(f, s);
  ASSERT_EQ(v.size(), s.input_width());
  for (std::size_t j = 0; j < 20; ++j) EXPECT_EQ(v[j], j == 13 ? 1.0 : 0.0);
  EXPECT_DOUBLE_EQ(v[20], 0.5);
  EXPECT_DOUBLE_EQ(v[21], 0.25);
  EXPECT_EQ(v[22], 0.0);
  EXPECT_EQ(v[23], 1.0);
  EXPECT_EQ(v[24], 0.0);
  f.heroes[0].level = 99;  // out of fitted range clamps
  EXPECT_EQ(encode_frame(f, s)[20], 1.0);
}

TEST(Encoding, OutOfRangeCategoryNamesItsGroup) {
  const FeatureSchema s = toy_schema();
  Frame f;
  f.heroes[0].hero_id = 20;
  try {
    encode_frame(f, s);
    FAIL() << "expected EncodingError";
  } catch (const EncodingError& e) {
    EXPECT_NE(std::string(e.what()).find("hero_0.hero_id"), std::string::npos) << e.what();
  }
}

TEST(Encoding, FittedRangesCoverTrainingFrames) {
  GeneratorConfig cfg;
  cfg.min_length = cfg.max_length = 300;
  const std::vector<GameRecord> train = {generate_game(1, cfg), generate_game(2, cfg)};
  const FeatureSchema s = fit_normalization(train, mini_schema());
  for (const GameRecord& r : train)
    for (const Frame& f : r.frames)
      for (double v : encode_frame(f, s)) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
      }
  const auto w = build_window_matrix(train[0], s, 60, 5);
  EXPECT_EQ(w.shape(), (ad::Shape{5, 360}));
  const std::vector<double> last = encode_frame(train[0].at_time(60), s);
  for (std::size_t j = 0; j < 360; ++j) EXPECT_EQ(w.at(4, j), last[j]);
  EXPECT_THROW(build_window_matrix(train[0], s, 3, 5), std::out_of_range);
}

TEST(Encoding, SchemaJsonRoundTrip) {
  GeneratorConfig cfg;
  cfg.min_length = cfg.max_length = 300;
  const FeatureSchema s = fit_normalization({generate_game(4, cfg)}, mini_schema());
  const FeatureSchema back = FeatureSchema::from_json(nlohmann::json::parse(s.to_json().dump()));
  EXPECT_EQ(back, s);
  auto j = s.to_json();
  j["input_width"] = 7;
  EXPECT_THROW(FeatureSchema::from_json(j), std::invalid_argument);
}

TEST(Embedding, OutputLayoutAndGradient) {
  FeatureSchema s = toy_schema();
  Rng rng(3);
  ParameterSet params;
  init_embedding(s, rng, params);
  EXPECT_EQ(params.size(), 4u);
  ad::Tensor x({3, s.input_width()});
  for (double& v : x.data()) v = rng.uniform();
  {
    ad::Tape tape;
    BoundParams bp(tape, params, false);
    const ad::Tensor y = embed(tape.constant(x), s, bp).value();
    ASSERT_EQ(y.shape(), (ad::Shape{3, s.embedding_width()}));
    // Numerics are copied through unchanged.
    for (std::size_t r = 0; r < 3; ++r) {
      EXPECT_EQ(y.at(r, 5), x.at(r, 20));
      EXPECT_EQ(y.at(r, 6), x.at(r, 21));
      EXPECT_EQ(y.at(r, 9), x.at(r, 24));
    }
    // Categorical span equals the explicit product with the weight.
    const ad::Tensor& W = params.at("embed.hero_0.hero_id.weight");
    for (std::size_t c = 0; c < 5; ++c) {
      double ref = 0;
      for (std::size_t k = 0; k < 20; ++k) ref += x.at(1, k) * W.at(k, c);
      EXPECT_NEAR(y.at(1, c), ref, 1e-12);
    }
  }
  auto loss = [&](const ad::Tensor& in, ad::Tensor* grad) {
    ad::Tape tape;
    BoundParams bp(tape, params, false);
    ad::Var xv = tape.leaf(in);
    ad::Var out = ad::sum(ad::tanh(embed(xv, s, bp)));
    if (grad) *grad = tape.backward(out, {xv}).at(xv.id);
    return out.value()[0];
  };
  ad::Tensor analytic;
  loss(x, &analytic);
  const auto res = testing::check_gradient([&] { return loss(x, nullptr); }, x.values(), analytic.values());
  EXPECT_LT(res.max_rel_error, 1e-6);
}

TEST(Embedding, RejectsWrongWidth) {
  const FeatureSchema s = toy_schema();
  ParameterSet params;
  Rng rng(1);
  init_embedding(s, rng, params);
  ad::Tape tape;
  BoundParams bp(tape, params, false);
  EXPECT_THROW(embed(tape.constant(ad::Tensor({2, 7})), s, bp), ad::ShapeError);
}

}  // namespace
}  // namespace mobaxai
