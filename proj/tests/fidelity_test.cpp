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

#include "mobaxai/fidelity.hpp"

#include <gtest/gtest.h>

#include <limits>

namespace mobaxai {
namespace {

TEST(Mask, KeepsSelectedColumnsInEveryRow) {
  const ad::Tensor x({3, 4}, 1.0);
  const std::vector<double> avg{5, 0.1, -4, 0.2};
  const ad::Tensor m = mask_top_k(x, avg, 2);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(m.at(i, j), (j == 0 || j == 2) ? 1.0 : 0.0);
  EXPECT_EQ(mask_top_k(x, avg, 4), x);
}

TEST(Mask, NonzeroCountBoundedByRowsTimesK) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    ad::Tensor x({5, 20});
    for (double& v : x.data()) v = rng.uniform(-1, 1);
    std::vector<double> avg(20);
    for (double& v : avg) v = rng.normal();
    const std::size_t k = 1 + static_cast<std::size_t>(rng.uniform_int(0, 19));
    const ad::Tensor m = mask_top_k(x, avg, k);
    const auto nz = std::count_if(m.data().begin(), m.data().end(), [](double v) { return v != 0.0; });
    EXPECT_LE(static_cast<std::size_t>(nz), 5 * k);
  }
}

FeatureSchema small_schema() {
  FeatureSchema s;
  s.add_categorical(Category::hero, 0, "camp", 2);
  s.add_numeric(Category::hero, 0, "hp");
  s.add_numeric(Category::hero, 0, "gold");
  s.add_numeric(Category::global, 0, "gold_diff");
  s.add_numeric(Category::global, 0, "game_time");
  return s;
}

/// Label = gold_diff column of the last row > 0.5, with 10% flips.
LabeledSet planted(std::size_t n, Rng& rng) {
  LabeledSet d;
  for (std::size_t i = 0; i < n; ++i) {
    ad::Tensor x({3, 6});
    for (std::size_t r = 0; r < 3; ++r) {
      x.at(r, static_cast<std::size_t>(rng.uniform_int(0, 1))) = 1.0;
      for (std::size_t j = 2; j < 6; ++j) x.at(r, j) = rng.uniform();
    }
    int y = x.at(2, 4) > 0.5 ? 1 : 0;
    if (rng.bernoulli(0.1)) y = 1 - y;
    d.inputs.push_back(std::move(x));
    d.labels.push_back(y);
  }
  return d;
}

struct TrainedModel : ::testing::Test {
  void SetUp() override {
    Rng rng(2);
    train = planted(240, rng);
    test = planted(80, rng);
    Model m = init_model(Architecture::lstm, small_schema(), 3, 2, 4, LstmConfig{1, true, 4, 0.0, 6});
    m.task = "win";
    TrainConfig cfg;
    cfg.max_epochs = 40;
    cfg.batch_size = 32;
    cfg.learning_rate = 1e-2;
    f = train_model(m, train, test, cfg);
    proxy = cfg;
  }
  LabeledSet train, test;
  Model f;
  TrainConfig proxy;
};

TEST_F(TrainedModel, MaskedSetsCarryTheModelsPredictions) {
  const std::vector<int> pred = predict_labels(f, test.inputs);
  AttributionSpec spec;
  spec.ig.steps = 20;
  const auto attr = attribute_all(f, test.inputs, pred, spec);
  const MaskedSet w = build_masked_set(test.inputs, pred, attr, 3);
  ASSERT_EQ(w.data.size(), test.size());
  EXPECT_EQ(w.dropped, 0u);
  std::size_t agree = 0, disagree = 0;
  for (std::size_t i = 0; i < w.data.size(); ++i) {
    EXPECT_EQ(w.data.labels[i], pred[i]);
    agree += w.data.labels[i] == test.labels[i];
    disagree += w.data.labels[i] != test.labels[i];
  }
  EXPECT_GT(disagree, 0u);  // the flipped labels F cannot follow
  EXPECT_DOUBLE_EQ(static_cast<double>(agree) / static_cast<double>(test.size()), evaluate(f, test).accuracy);
}

TEST_F(TrainedModel, FailedAttributionsAreDroppedAndCounted) {
  std::vector<ad::Tensor> inputs = test.inputs;
  inputs[3].at(0, 2) = std::numeric_limits<double>::quiet_NaN();
  const std::vector<int> pred(inputs.size(), 0);
  AttributionSpec spec;
  spec.ig.steps = 5;
  const auto attr = attribute_all(f, inputs, pred, spec, 3);
  EXPECT_FALSE(attr[3].has_value());
  const MaskedSet w = build_masked_set(inputs, pred, attr, 2);
  EXPECT_EQ(w.dropped, 1u);
  EXPECT_EQ(w.data.size(), inputs.size() - 1);
  EXPECT_EQ(std::find(w.source.begin(), w.source.end(), 3u), w.source.end());
}

TEST_F(TrainedModel, FullWidthFidelityIsHighAndReportIsWellFormed) {
  FidelityJob job{&f, &train, &test, {}, small_schema().input_width(), proxy, 9, 1};
  job.attribution.ig.steps = 10;
  const FidelityReport r = run_fidelity(job);
  EXPECT_FALSE(r.failed);
  EXPECT_GE(r.fidelity, 0.9);
  EXPECT_LE(r.fidelity, 1.0);
  EXPECT_EQ(r.train_size, train.size());
  EXPECT_EQ(r.test_size, test.size());
  EXPECT_EQ(r.steps, 10);
  const auto j = r.to_json();
  EXPECT_EQ(j["method"], "ig");
  EXPECT_EQ(j["k"], small_schema().input_width());
  job.k = 0;
  EXPECT_THROW(run_fidelity(job), std::invalid_argument);
}

TEST_F(TrainedModel, WorkerCountDoesNotChangeAttributions) {
  const std::vector<int> pred = predict_labels(f, test.inputs);
  AttributionSpec spec;
  spec.method = Method::sg;
  spec.sg.steps = 8;
  EXPECT_EQ(attribute_all(f, test.inputs, pred, spec, 1), attribute_all(f, test.inputs, pred, spec, 4));
}

TEST(ModalRate, CountsTheMostFrequentLabel) {
  const std::vector<int> y{0, 1, 1, 2, 1};
  EXPECT_DOUBLE_EQ(modal_rate(y, 3), 0.6);
}

}  // namespace
}  // namespace mobaxai
