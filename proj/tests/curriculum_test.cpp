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

TEST(CurriculumTest, SlopeExamples) {
  const std::vector<double> down = {3, 2, 1};
  EXPECT_EQ(loss_slope(down), -1.0);
  const std::vector<double> flat = {2, 2, 2, 2};
  EXPECT_EQ(loss_slope(flat), 0.0);
  // Sxy = 4, Sxx = 5.
  const std::vector<double> zigzag = {1, 3, 2, 4};
  EXPECT_NEAR(loss_slope(zigzag), 0.8, 1e-15);
}

TEST(CurriculumTest, SinglePointIsDegenerate) {
  bool degenerate = false;
  const std::vector<double> one = {5.0};
  EXPECT_EQ(loss_slope(one, &degenerate), 0.0);
  EXPECT_TRUE(degenerate);
  const std::vector<double> two = {5.0, 4.0};
  EXPECT_EQ(loss_slope(two, &degenerate), -1.0);
  EXPECT_FALSE(degenerate);
}

TEST(CurriculumTest, SlopeRejectsBadTraces) {
  EXPECT_THROW(loss_slope(std::vector<double>{}), InvalidArgument);
  EXPECT_THROW(loss_slope(std::vector<double>{1.0, NAN}), NumericalError);
  EXPECT_THROW(loss_slope(std::vector<double>{1.0, INFINITY}), NumericalError);
}

TEST(CurriculumPropertyTest, SlopeMatchesNormalEquations) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = std::uniform_int_distribution<std::size_t>(2, 300)(rng);
    std::vector<double> y(n);
    for (double& v : y) v = std::uniform_real_distribution<double>(0, 5)(rng);
    EXPECT_NEAR(loss_slope(y), oracle::normal_equation_slope(y), 1e-12);
  }
}

TEST(CurriculumPropertyTest, SlopeIsShiftInvariantAndScales) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = std::uniform_int_distribution<std::size_t>(2, 50)(rng);
    std::vector<double> y(n), shifted(n), scaled(n);
    const double c = std::uniform_real_distribution<double>(-10, 10)(rng);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = std::uniform_real_distribution<double>(0, 3)(rng);
      shifted[i] = y[i] + c;
      scaled[i] = 2.5 * y[i];
    }
    EXPECT_NEAR(loss_slope(shifted), loss_slope(y), 1e-9);
    EXPECT_NEAR(loss_slope(scaled), 2.5 * loss_slope(y), 1e-9);
  }
}

TEST(CurriculumTest, OrderAscendingAndDescending) {
  std::vector<ComplexityScore> s = {{0, -0.5, 3, false}, {1, -0.1, 3, false},
                                    {2, -0.9, 3, false}};
  EXPECT_EQ(order_hospitals(s), (std::vector<HospitalId>{2, 0, 1}));
  EXPECT_EQ(order_hospitals(s, OrderDirection::Descending),
            (std::vector<HospitalId>{1, 0, 2}));
}

TEST(CurriculumTest, TiesBreakById) {
  std::vector<ComplexityScore> s = {{5, -0.2, 3, false}, {3, -0.2, 3, false},
                                    {4, -0.2, 3, false}};
  EXPECT_EQ(order_hospitals(s), (std::vector<HospitalId>{3, 4, 5}));
  EXPECT_EQ(order_hospitals(s, OrderDirection::Descending),
            (std::vector<HospitalId>{3, 4, 5}));
}

TEST(CurriculumTest, OrderRejectsDuplicatesAndMissing) {
  std::vector<ComplexityScore> dup = {{1, 0.1, 3, false}, {1, 0.2, 3, false}};
  EXPECT_THROW(order_hospitals(dup), InvalidArgument);
  std::vector<ComplexityScore> s = {{0, 0.1, 3, false}, {1, 0.2, 3, false}};
  const std::vector<HospitalId> expected = {0, 1, 2};
  EXPECT_THROW(order_hospitals(s, expected), InvalidArgument);
}

TEST(CurriculumPropertyTest, OrderIsSortedPermutation) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = std::uniform_int_distribution<int>(1, 30)(rng);
    std::vector<ComplexityScore> s;
    for (int i = 0; i < n; ++i) {
      // Few distinct values so ties are common.
      const double slope = std::uniform_int_distribution<int>(-3, 3)(rng) * 0.1;
      s.push_back({i * 7 % 31, slope, 2, false});
    }
    auto order = order_hospitals(s);
    ASSERT_EQ(order.size(), s.size());
    std::map<HospitalId, double> slope_of;
    for (const auto& x : s) slope_of[x.hospital_id] = x.slope;
    for (std::size_t i = 1; i < order.size(); ++i) {
      const double a = slope_of[order[i - 1]], b = slope_of[order[i]];
      EXPECT_TRUE(a < b || (a == b && order[i - 1] < order[i]));
    }
  }
}

}  // namespace
}  // namespace hetfed
