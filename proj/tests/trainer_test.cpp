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

#include <random>

#include "oracles.hpp"

namespace hetfed {
namespace {

Dataset blobs(std::size_t per_class, std::uint64_t seed) {
  TaskSpec t;
  t.local_num_classes = 3;
  t.feature_dim = 4;
  t.samples_per_class = per_class;
  t.generator = GaussianBlobs{3.0, 1.0};
  return generate_task(t, seed);
}

ModelSpec spec3() { return {ModelKind::Softmax, 4, 0, 3}; }

// Runs train_dynamic with an injected curve and returns the outcome.
TrainingOutcome run_curve(const std::vector<double>& curve, int strip, int z, int max_epochs,
                          double eps = 1e-4) {
  DynamicConfig cfg;
  cfg.z = z;
  cfg.plateau_eps = eps;
  cfg.max_epochs = max_epochs;
  cfg.lr = 0.01;
  cfg.batch_size = 16;
  auto train = blobs(5, 1);
  auto w = init_weights(spec3(), 1);
  ValEvaluator eval = [&](const WeightVector&, int epoch) {
    return curve[static_cast<std::size_t>(epoch - 1)];
  };
  return train_dynamic(w, train, Dataset{}, cfg, strip, 3, eval);
}

std::vector<double> curve_of(int n, const std::function<double(int)>& f) {
  std::vector<double> c(static_cast<std::size_t>(n));
  for (int e = 1; e <= n; ++e) c[static_cast<std::size_t>(e - 1)] = f(e);
  return c;
}

TEST(TrainerTest, IncreasingCurveStopsAtFourthStrip) {
  auto out = run_curve(curve_of(100, [](int e) { return 1.0 + e; }), 7, 3, 100);
  EXPECT_EQ(out.epochs_trained, 28);
  EXPECT_EQ(out.stop_reason, StopReason::ValIncrease);
  ASSERT_EQ(out.val_curve.size(), 4u);
  EXPECT_EQ(out.val_curve.front().epoch, 7);
  EXPECT_EQ(out.best_val_loss(), 8.0);
}

TEST(TrainerTest, DecreasingCurveRunsToCap) {
  auto out = run_curve(curve_of(100, [](int e) { return 10.0 / e; }), 7, 3, 100);
  EXPECT_EQ(out.epochs_trained, 100);
  EXPECT_EQ(out.stop_reason, StopReason::MaxEpochs);
  // Evaluations at 7..98 plus the cap.
  EXPECT_EQ(out.val_curve.size(), 15u);
  EXPECT_EQ(out.val_curve.back().epoch, 100);
}

TEST(TrainerTest, FlatCurvePlateaus) {
  auto out = run_curve(curve_of(100, [](int) { return 0.5; }), 10, 3, 100);
  EXPECT_EQ(out.epochs_trained, 40);
  EXPECT_EQ(out.stop_reason, StopReason::Plateau);
}

TEST(TrainerTest, BestWeightsComeFromMinimumEvaluation) {
  // Curve dips at epoch 14 then rises; best weights are the epoch-14 snapshot.
  DynamicConfig cfg;
  cfg.z = 2;
  cfg.lr = 0.05;
  cfg.batch_size = 4;
  auto train = blobs(4, 2);
  auto w0 = init_weights(spec3(), 2);
  std::map<int, WeightVector> seen;
  ValEvaluator eval = [&](const WeightVector& w, int epoch) {
    seen[epoch] = w;
    return epoch == 14 ? 0.1 : 1.0 + epoch;
  };
  auto out = train_dynamic(w0, train, Dataset{}, cfg, 7, 5, eval);
  EXPECT_EQ(out.stop_reason, StopReason::ValIncrease);
  EXPECT_EQ(out.epochs_trained, 28);
  EXPECT_EQ(out.best_weights, seen.at(14));
}

TEST(TrainerTest, StopRuleMatchesOracleOnRandomCurves) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const int strip = trial % 2 ? 7 : 10;
    const int z = trial % 3 ? 3 : 1;
    const int cap = std::uniform_int_distribution<int>(5, 80)(rng);
    std::vector<double> curve(static_cast<std::size_t>(cap));
    // Random walk with occasional exact repeats to exercise the plateau rule.
    double v = 1.0;
    for (double& c : curve) {
      const int kind = std::uniform_int_distribution<int>(0, 3)(rng);
      if (kind == 1) v += 0.1;
      if (kind == 2) v -= 0.05;
      c = v;
    }
    auto out = run_curve(curve, strip, z, cap);
    auto want = oracle::simulate_stop(curve, strip, z, 1e-4, cap);
    EXPECT_EQ(out.epochs_trained, want.epoch) << "trial " << trial;
    EXPECT_EQ(out.stop_reason, want.reason) << "trial " << trial;
  }
}

TEST(TrainerTest, FixedTrainingIsDeterministicAndCounts) {
  DynamicConfig cfg;
  cfg.lr = 0.05;
  cfg.batch_size = 7;
  auto train = blobs(10, 3);  // 30 rows -> 5 batches per epoch, last one partial
  auto w = init_weights(spec3(), 4);
  auto a = train_fixed(w, train, 3, cfg, 77);
  auto b = train_fixed(w, train, 3, cfg, 77);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.epochs_trained, 3);
  EXPECT_EQ(a.trace.values.size(), 15u);
  EXPECT_NE(a.best_weights, train_fixed(w, train, 3, cfg, 78).best_weights);
}

TEST(TrainerTest, FixedTrainingReducesLoss) {
  DynamicConfig cfg;
  cfg.lr = 0.1;
  cfg.batch_size = 8;
  auto train = blobs(20, 5);
  auto w = init_weights(spec3(), 4);
  auto out = train_fixed(w, train, 20, cfg, 1);
  EXPECT_LT(evaluate_val_loss(out.best_weights, train), evaluate_val_loss(w, train));
  EXPECT_LT(loss_slope(out.trace), 0.0);
}

TEST(TrainerTest, MonitorNeedsZPlusOneObservations) {
  ConvergenceMonitor m(3, 1e-4);
  EXPECT_FALSE(m.observe(1.0));
  EXPECT_FALSE(m.observe(2.0));
  EXPECT_FALSE(m.observe(3.0));
  EXPECT_EQ(m.observe(4.0), StopReason::ValIncrease);
  ConvergenceMonitor one(1, 1e-4);
  EXPECT_FALSE(one.observe(1.0));
  EXPECT_EQ(one.observe(1.0), StopReason::Plateau);
}

TEST(TrainerTest, InvalidArgumentsRejected) {
  DynamicConfig cfg;
  auto train = blobs(3, 1);
  auto w = init_weights(spec3(), 1);
  EXPECT_THROW(train_fixed(w, train, 0, cfg, 1), InvalidArgument);
  EXPECT_THROW(train_fixed(w, Dataset{}, 1, cfg, 1), InvalidArgument);
  EXPECT_THROW(train_dynamic(w, train, Dataset{}, cfg, 7, 1), InvalidArgument);
  EXPECT_THROW(train_dynamic(w, train, train, cfg, 0, 1), InvalidArgument);
  cfg.z = 0;
  EXPECT_THROW(train_fixed(w, train, 1, cfg, 1), InvalidArgument);
}

TEST(TrainerTest, EpochsNeverExceedCap) {
  DynamicConfig cfg;
  cfg.lr = 0.05;
  cfg.batch_size = 8;
  auto train = blobs(10, 2);
  auto val = blobs(4, 3);
  auto w = init_weights(spec3(), 1);
  for (int cap : {1, 6, 13}) {
    cfg.max_epochs = cap;
    auto out = train_dynamic(w, train, val, cfg, 3, 2);
    EXPECT_LE(out.epochs_trained, cap);
    EXPECT_FALSE(out.val_curve.empty());
  }
}

TEST(TrainerTest, ProximalStepWithHugeMuStaysAtAnchor) {
  DynamicConfig cfg;
  cfg.lr = 0.1;
  cfg.batch_size = 8;
  auto train = blobs(10, 2);
  auto w = init_weights(spec3(), 1);
  Proximal prox{&w, 1e6};
  auto out = train_fixed(w, train, 3, cfg, 2, &prox);
  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_NEAR(out.best_weights.values[i], w.values[i], 1e-3);
  }
}

TEST(TrainerTest, ZeroMuProximalIsPlainSgd) {
  DynamicConfig cfg;
  cfg.lr = 0.1;
  cfg.batch_size = 8;
  auto train = blobs(10, 2);
  auto w = init_weights(spec3(), 1);
  Proximal prox{&w, 0.0};
  EXPECT_EQ(train_fixed(w, train, 2, cfg, 2, &prox), train_fixed(w, train, 2, cfg, 2));
}

}  // namespace
}  // namespace hetfed
