/*
 * Copyright 2026 The hetfed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"

namespace hetfed {
namespace {

ModelSpec softmax_spec(std::size_t d, std::size_t c) {
  return {ModelKind::Softmax, d, 0, c};
}

ModelSpec mlp_spec(std::size_t d, std::size_t h, std::size_t c) {
  return {ModelKind::MLP, d, h, c};
}

Batch random_batch(const ModelSpec& spec, std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> label(0, static_cast<int>(spec.num_classes) - 1);
  Batch b;
  b.features = Matrix(n, spec.input_dim);
  for (double& v : b.features.data) v = nd(rng);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(label(rng));
  return b;
}

TEST(ModelTest, ParameterCountMatchesLayout) {
  EXPECT_EQ(parameter_count(softmax_spec(16, 23)), 16u * 23 + 23);
  EXPECT_EQ(parameter_count(mlp_spec(4, 5, 3)), 4u * 5 + 5 + 5 * 3 + 3);
}

TEST(ModelTest, ZeroWeightsGiveLogC) {
  for (std::size_t c : {2u, 4u, 23u}) {
    WeightVector w(softmax_spec(3, c));
    Batch b;
    b.features = Matrix(5, 3, 0.7);
    b.labels = {0, 1, 0, 1, 1};
    EXPECT_NEAR(forward_loss(w, b), std::log(static_cast<double>(c)), 1e-12);
  }
}

TEST(ModelTest, LossMatchesIndependentCrossEntropy) {
  std::mt19937_64 rng(11);
  for (const auto& spec : {softmax_spec(6, 5), mlp_spec(6, 7, 5)}) {
    for (int trial = 0; trial < 10; ++trial) {
      auto w = init_weights(spec, rng());
      for (double& v : w.values) v += 0.1;  // non-zero biases too
      auto b = random_batch(spec, 9, rng);
      EXPECT_NEAR(forward_loss(w, b), oracle::cross_entropy(w, b.features, b.labels), 1e-12);
    }
  }
}

TEST(ModelTest, LargeLogitsStayFinite) {
  WeightVector w(softmax_spec(1, 3));
  w.values = {1000, -1000, 0, 0, 0, 0};
  Batch b;
  b.features = Matrix(1, 1, 1.0);
  b.labels = {0};
  EXPECT_NEAR(forward_loss(w, b), 0.0, 1e-12);
  b.labels = {1};
  EXPECT_NEAR(forward_loss(w, b), 2000.0, 1e-9);
}

TEST(ModelTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (const auto& spec : {softmax_spec(4, 3), mlp_spec(4, 6, 3)}) {
    auto w = init_weights(spec, 3);
    auto b = random_batch(spec, 7, rng);
    auto g = gradient(w, b);
    auto fd = oracle::finite_difference_gradient(w, b.features, b.labels);
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_NEAR(g.values[i], fd[i], 1e-7 + 1e-5 * std::fabs(fd[i])) << "param " << i;
    }
  }
}

TEST(ModelTest, GradientIsZeroAtPerfectFitLimit) {
  // With huge separation the softmax saturates and the gradient vanishes.
  WeightVector w(softmax_spec(1, 2));
  w.values = {500, -500, 0, 0};
  Batch b;
  b.features = Matrix(1, 1, 1.0);
  b.labels = {0};
  for (double v : gradient(w, b).values) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(ModelTest, FeatureDimensionMismatchNamesBothSizes) {
  WeightVector w(softmax_spec(4, 3));
  Batch b;
  b.features = Matrix(2, 5);
  b.labels = {0, 1};
  try {
    forward_loss(w, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("expected 4, got 5"), std::string::npos) << e.what();
  }
}

TEST(ModelTest, LabelOutOfRangeRejected) {
  WeightVector w(softmax_spec(2, 3));
  Batch b;
  b.features = Matrix(1, 2);
  b.labels = {3};
  EXPECT_THROW(forward_loss(w, b), Error);
}

TEST(ModelTest, SgdStepIsExact) {
  WeightVector w(softmax_spec(1, 2));
  w.values = {1, 2, 3, 4};
  WeightVector g(w.spec);
  g.values = {1, -1, 0.5, 0};
  auto out = sgd_step(w, g, 0.5);
  EXPECT_EQ(out.values, (std::vector<double>{0.5, 2.5, 2.75, 4}));
  EXPECT_THROW(sgd_step(w, g, 0.0), InvalidArgument);
  EXPECT_THROW(sgd_step(w, g, -1.0), InvalidArgument);
  g.values[0] = INFINITY;
  EXPECT_THROW(sgd_step(w, g, 0.1), NumericalError);
}

TEST(ModelTest, SgdStepDecreasesLossForSmallStep) {
  std::mt19937_64 rng(2);
  auto spec = softmax_spec(5, 4);
  auto w = init_weights(spec, 1);
  auto b = random_batch(spec, 20, rng);
  const double before = forward_loss(w, b);
  const double after = forward_loss(sgd_step(w, gradient(w, b), 1e-3), b);
  EXPECT_LT(after, before);
}

TEST(ModelTest, InitIsDeterministicGlorotWithZeroBias) {
  auto spec = mlp_spec(8, 4, 3);
  auto a = init_weights(spec, 9);
  EXPECT_EQ(a, init_weights(spec, 9));
  EXPECT_NE(a, init_weights(spec, 10));
  const double r1 = std::sqrt(6.0 / 12.0);
  for (std::size_t i = 0; i < 32; ++i) EXPECT_LE(std::fabs(a.values[i]), r1);
  for (std::size_t i = 32; i < 36; ++i) EXPECT_EQ(a.values[i], 0.0);
  for (std::size_t i = parameter_count(spec) - 3; i < parameter_count(spec); ++i) {
    EXPECT_EQ(a.values[i], 0.0);
  }
}

TEST(ModelTest, PredictTiesGoToLowestIndex) {
  WeightVector w(softmax_spec(1, 3));
  Matrix x(1, 1, 1.0);
  EXPECT_EQ(predict(w, x), std::vector<Label>{0});
  w.values = {0, 1, 1, 0, 0, 0};
  EXPECT_EQ(predict(w, x), std::vector<Label>{1});
}

TEST(ModelTest, InvalidSpecRejected) {
  EXPECT_THROW(validate(softmax_spec(3, 1)), InvalidArgument);
  EXPECT_THROW(validate(mlp_spec(3, 0, 2)), InvalidArgument);
  EXPECT_THROW(init_weights(softmax_spec(0, 2), 1), InvalidArgument);
}

}  // namespace
}  // namespace hetfed
