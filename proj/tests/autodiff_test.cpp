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

#include "mobaxai/autodiff.hpp"

#include <gtest/gtest.h>

#include <random>

#include "gradient_check.hpp"

namespace mobaxai::ad {
namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Builds a scalar from a list of input tensors; the projection onto fixed
// random weights keeps every output element's gradient distinct.
using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

double project(Tape& tape, Var out, const Tensor& weights) {
  (void)tape;
  double s = 0;
  for (std::size_t i = 0; i < out.value().size(); ++i) s += out.value()[i] * weights[i];
  return s;
}

double max_fd_error(const Builder& build, std::vector<Tensor> inputs, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  Tensor weights;
  {
    Tape probe;
    std::vector<Var> vs;
    for (const Tensor& t : inputs) vs.push_back(probe.leaf(t));
    weights = random_tensor(build(probe, vs).shape(), rng);
  }
  auto scalar_of = [&](Tape& tape, const std::vector<Var>& vs) {
    Var out = build(tape, vs);
    return sum(mul(out, tape.constant(weights)));
  };
  double worst = 0;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    Tape tape;
    std::vector<Var> vs;
    for (const Tensor& t : inputs) vs.push_back(tape.leaf(t));
    auto grads = tape.backward(scalar_of(tape, vs), {vs[which]});
    const Tensor analytic = grads.at(vs[which].id);
    auto f = [&]() {
      Tape t2;
      std::vector<Var> v2;
      for (const Tensor& t : inputs) v2.push_back(t2.leaf(t));
      return project(t2, build(t2, v2), weights);
    };
    auto r = testing::check_gradient(f, inputs[which].values(), analytic.values());
    worst = std::max(worst, r.max_rel_error);
  }
  return worst;
}

TEST(Autodiff, TanhAtOriginIsZeroWithUnitSlope) {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(0.0));
  Var y = tanh(x);
  EXPECT_EQ(y.value()[0], 0.0);
  auto g = tape.backward(y, {x});
  EXPECT_EQ(g.at(x.id)[0], 1.0);
}

TEST(Autodiff, SoftmaxOfEqualLogitsIsUniform) {
  Tape tape;
  Var x = tape.leaf(Tensor({3}, std::vector<double>{0.7, 0.7, 0.7}));
  Var y = softmax(x);
  for (double v : y.value().data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Autodiff, MatmulMatchesTripleLoop) {
  const Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const Tensor b = Tensor::matrix(3, 2, {7, 8, 9, 10, 11, 12});
  Tensor expected({2, 2});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 3; ++k) expected.at(i, j) += a.at(i, k) * b.at(k, j);
  Tape tape;
  Var c = matmul(tape.leaf(a), tape.leaf(b));
  EXPECT_EQ(c.value(), expected);
  EXPECT_EQ(c.value().values(), (std::vector<double>{58, 64, 139, 154}));
}

TEST(Autodiff, ShapeMismatchNamesShapes) {
  Tape tape;
  Var a = tape.leaf(Tensor({2, 3}));
  Var b = tape.leaf(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2,3] x [2,3]"), std::string::npos) << e.what();
  }
  EXPECT_THROW(add(a, tape.leaf(Tensor({4}))), ShapeError);
  EXPECT_THROW(mul(a, tape.leaf(Tensor({3, 2}))), ShapeError);
  EXPECT_THROW(slice(a, 1, 2, 5), ShapeError);
}

TEST(Autodiff, BackwardRequiresScalarOutputAndLeafTargets) {
  Tape tape;
  Var x = tape.leaf(Tensor({2, 2}, 1.0));
  Var y = tanh(x);
  EXPECT_THROW(tape.backward(y, {x}), ShapeError);
  Var s = sum(y);
  EXPECT_THROW(tape.backward(s, {y}), std::invalid_argument);
}

TEST(Autodiff, ConstantOutputHasZeroGradient) {
  Tape tape;
  Var x = tape.leaf(Tensor({2, 2}, 0.5));
  Var c = tape.constant(Tensor({2, 2}, 3.0));
  Var s = sum(tanh(c));
  auto g = tape.backward(s, {x});
  for (double v : g.at(x.id).data()) EXPECT_EQ(v, 0.0);
}

TEST(Autodiff, UnreachedLeafGetsZeros) {
  Tape tape;
  Var x = tape.leaf(Tensor({3}, 0.5));
  Var unused = tape.leaf(Tensor({2, 2}, 1.0));
  auto g = tape.backward(sum(sigmoid(x)), {x, unused});
  EXPECT_EQ(g.at(unused.id), Tensor({2, 2}, 0.0));
}

TEST(Autodiff, SumSigmoidWxMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const Tensor W = random_tensor({4, 5}, rng);
  const Tensor x = random_tensor({5, 1}, rng);
  Builder b = [](Tape&, const std::vector<Var>& v) { return sum(sigmoid(matmul(v[0], v[1]))); };
  EXPECT_LE(max_fd_error(b, {W, x}), 1e-4);
}

struct PrimitiveCase {
  const char* name;
  Builder build;
  std::vector<Shape> shapes;
};

class PrimitiveGradient : public ::testing::TestWithParam<PrimitiveCase> {};

TEST_P(PrimitiveGradient, AgreesWithCentralDifferences) {
  const PrimitiveCase& c = GetParam();
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    std::mt19937_64 rng(seed * 101);
    std::vector<Tensor> inputs;
    for (const Shape& s : c.shapes) inputs.push_back(random_tensor(s, rng, 0.1, 1.0));
    EXPECT_LE(max_fd_error(c.build, inputs, seed), 1e-4) << c.name << " seed " << seed;
  }
}

Tensor fixed_mask() { return Tensor::matrix(3, 4, {1.25, 0, 1.25, 1.25, 0, 1.25, 1.25, 0, 1.25, 1.25, 1.25, 0}); }

INSTANTIATE_TEST_SUITE_P(
    AllPrimitives, PrimitiveGradient,
    ::testing::Values(
        PrimitiveCase{"matmul", [](Tape&, const std::vector<Var>& v) { return matmul(v[0], v[1]); }, {{3, 4}, {4, 2}}},
        PrimitiveCase{"add", [](Tape&, const std::vector<Var>& v) { return add(v[0], v[1]); }, {{3, 4}, {3, 4}}},
        PrimitiveCase{"add_bias", [](Tape&, const std::vector<Var>& v) { return add(v[0], v[1]); }, {{3, 4}, {4}}},
        PrimitiveCase{"mul", [](Tape&, const std::vector<Var>& v) { return mul(v[0], v[1]); }, {{3, 4}, {3, 4}}},
        PrimitiveCase{"scale", [](Tape&, const std::vector<Var>& v) { return scale(v[0], -2.5); }, {{3, 4}}},
        PrimitiveCase{"concat0", [](Tape&, const std::vector<Var>& v) { return concat({v[0], v[1]}, 0); }, {{2, 3}, {1, 3}}},
        PrimitiveCase{"concat1", [](Tape&, const std::vector<Var>& v) { return concat({v[0], v[1]}, 1); }, {{2, 3}, {2, 2}}},
        PrimitiveCase{"slice0", [](Tape&, const std::vector<Var>& v) { return slice(v[0], 0, 1, 3); }, {{4, 3}}},
        PrimitiveCase{"slice1", [](Tape&, const std::vector<Var>& v) { return slice(v[0], 1, 0, 2); }, {{4, 3}}},
        PrimitiveCase{"transpose", [](Tape&, const std::vector<Var>& v) { return transpose(v[0]); }, {{2, 3}}},
        PrimitiveCase{"reshape", [](Tape&, const std::vector<Var>& v) { return reshape(v[0], {3, 2}); }, {{2, 3}}},
        PrimitiveCase{"sigmoid", [](Tape&, const std::vector<Var>& v) { return sigmoid(v[0]); }, {{3, 4}}},
        PrimitiveCase{"tanh", [](Tape&, const std::vector<Var>& v) { return tanh(v[0]); }, {{3, 4}}},
        PrimitiveCase{"relu", [](Tape&, const std::vector<Var>& v) { return relu(scale(v[0], -1.0)); }, {{3, 4}}},
        PrimitiveCase{"relu_pos", [](Tape&, const std::vector<Var>& v) { return relu(v[0]); }, {{3, 4}}},
        PrimitiveCase{"log", [](Tape&, const std::vector<Var>& v) { return log(v[0]); }, {{3, 4}}},
        PrimitiveCase{"softmax", [](Tape&, const std::vector<Var>& v) { return softmax(v[0]); }, {{3, 4}}},
        PrimitiveCase{"log_softmax", [](Tape&, const std::vector<Var>& v) { return log_softmax(v[0]); }, {{3, 4}}},
        PrimitiveCase{"layer_norm",
                      [](Tape&, const std::vector<Var>& v) { return layer_norm(v[0], v[1], v[2]); },
                      {{3, 5}, {5}, {5}}},
        PrimitiveCase{"dropout_with_mask",
                      [](Tape&, const std::vector<Var>& v) { return dropout_with_mask(v[0], fixed_mask()); }, {{3, 4}}},
        PrimitiveCase{"sum", [](Tape&, const std::vector<Var>& v) { return sum(v[0]); }, {{3, 4}}},
        PrimitiveCase{"mean", [](Tape&, const std::vector<Var>& v) { return mean(v[0]); }, {{3, 4}}},
        PrimitiveCase{"segment_mean", [](Tape&, const std::vector<Var>& v) { return segment_mean(v[0], 3); }, {{6, 2}}},
        PrimitiveCase{"gather_rows", [](Tape&, const std::vector<Var>& v) { return gather_rows(v[0], {2, 0, 2}); }, {{3, 4}}},
        PrimitiveCase{"gather_columns",
                      [](Tape&, const std::vector<Var>& v) { return gather_columns(v[0], {1, 3, 0}); }, {{3, 4}}},
        PrimitiveCase{"attention",
                      [](Tape&, const std::vector<Var>& v) { return attention(v[0], v[1], v[2], 3, 2); },
                      {{6, 4}, {6, 4}, {6, 4}}}),
    [](const ::testing::TestParamInfo<PrimitiveCase>& info) { return std::string(info.param.name); });

TEST(Autodiff, DropoutGradientEqualsMask) {
  Tape tape;
  Var x = tape.leaf(Tensor({3, 4}, 0.3));
  auto g = tape.backward(sum(dropout_with_mask(x, fixed_mask())), {x});
  EXPECT_EQ(g.at(x.id), fixed_mask());
}

TEST(Autodiff, BackwardIsBitIdenticalAcrossRuns) {
  std::mt19937_64 rng(11);
  const Tensor W = random_tensor({6, 6}, rng);
  const Tensor x = random_tensor({4, 6}, rng);
  auto run = [&]() {
    Tape tape;
    Var w = tape.leaf(W);
    Var in = tape.leaf(x);
    Var h = tanh(matmul(in, w));
    Var out = sum(softmax(attention(h, h, h, 2, 3)));
    out = add(out, mean(layer_norm(h, tape.constant(Tensor({6}, 1.0)), tape.constant(Tensor({6}, 0.0)))));
    auto g = tape.backward(out, {w, in});
    return std::make_pair(g.at(w.id), g.at(in.id));
  };
  EXPECT_EQ(run(), run());
}

TEST(Autodiff, AttentionRowsSumToOne) {
  std::mt19937_64 rng(5);
  Tape tape;
  Var q = tape.leaf(random_tensor({10, 8}, rng));
  Tensor probe;
  attention(q, q, q, 5, 4, &probe);
  ASSERT_EQ(probe.shape(), (Shape{2 * 4 * 5, 5}));
  for (std::size_t r = 0; r < probe.rows(); ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 5; ++c) s += probe.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Autodiff, NonFiniteForwardValueIsRejected) {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, 0.0));
  EXPECT_THROW(log(x), std::domain_error);
}

}  // namespace
}  // namespace mobaxai::ad
