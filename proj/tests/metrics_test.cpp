/*
 * Copyright 2026 The DERM Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "derm/metrics.hpp"

#include <cmath>
#include <vector>

#include "derm/numeric.hpp"
#include "gtest/gtest.h"
#include "support/oracles.hpp"

namespace derm {
namespace {

TEST(Auc, PerfectSeparation) {
  EXPECT_EQ(auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}), 1.0);
}

TEST(Auc, PairwiseCountExample) {
  // 3 of 4 anomaly/normal pairs ordered correctly.
  EXPECT_EQ(auc(std::vector<double>{0.9, 0.1, 0.8, 0.2}, std::vector<int>{1, 0, 0, 1}), 0.75);
}

TEST(Auc, AllTiesGiveHalf) {
  EXPECT_EQ(auc(std::vector<double>(6, 3.0), std::vector<int>{1, 0, 1, 0, 0, 0}), 0.5);
}

TEST(Auc, Errors) {
  EXPECT_THROW(auc(std::vector<double>{1, 2}, std::vector<int>{0, 0}), UndefinedMetricError);
  EXPECT_THROW(auc(std::vector<double>{1, 2}, std::vector<int>{1, 1}), UndefinedMetricError);
  EXPECT_THROW(auc(std::vector<double>{1}, std::vector<int>{1, 0}), ShapeError);
  EXPECT_THROW(auc(std::vector<double>{1, 2}, std::vector<int>{2, 0}), DomainError);
}

struct Sample {
  std::vector<double> scores;
  std::vector<int> labels;
};

Sample random_sample(Rng& rng, std::size_t n, std::size_t levels) {
  Sample s{std::vector<double>(n), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    s.scores[i] = static_cast<double>(rng.below(levels));  // coarse values force ties
    s.labels[i] = rng.uniform() < 0.3 ? 1 : 0;
  }
  s.labels[0] = 1;
  s.labels[1] = 0;
  return s;
}

TEST(Auc, NegatingScoresGivesComplement) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = random_sample(rng, 2 + rng.below(100), 10);
    const double a = auc(s.scores, s.labels);
    for (double& v : s.scores) v = -v;
    EXPECT_NEAR(auc(s.scores, s.labels), 1.0 - a, 1e-15);
  }
}

TEST(Auc, InvariantUnderMonotoneTransform) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = random_sample(rng, 2 + rng.below(100), 20);
    const double a = auc(s.scores, s.labels);
    for (double& v : s.scores) v = std::exp(0.3 * v) - 4.0;
    EXPECT_EQ(auc(s.scores, s.labels), a);
  }
}

TEST(Auc, DuplicatingEveryPairLeavesAucUnchanged) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = random_sample(rng, 2 + rng.below(100), 15);
    const double a = auc(s.scores, s.labels);
    const auto n = s.scores.size();
    for (std::size_t i = 0; i < n; ++i) {
      s.scores.push_back(s.scores[i]);
      s.labels.push_back(s.labels[i]);
    }
    EXPECT_EQ(auc(s.scores, s.labels), a);
  }
}

TEST(Auc, EqualsPairwiseOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_sample(rng, 2 + rng.below(400), 1 + rng.below(50));
    EXPECT_EQ(auc(s.scores, s.labels), oracle::pairwise_auc(s.scores, s.labels));
  }
}

TEST(SummarizeRuns, Examples) {
  const auto one = summarize_runs(std::vector<double>{0.8});
  EXPECT_EQ(one.auc_mean, 0.8);
  EXPECT_EQ(one.auc_std, 0.0);
  const auto two = summarize_runs(std::vector<double>{0.7, 0.9});
  EXPECT_NEAR(two.auc_mean, 0.8, 1e-15);
  EXPECT_NEAR(two.auc_std, 0.1, 1e-15);
  EXPECT_THROW(summarize_runs(std::vector<double>{}), ShapeError);
}

TEST(SummarizeRuns, MatchesExternalComputation) {
  // Expected values from numpy: mean() and std(ddof=0).
  const std::vector<double> v{0.61, 0.72, 0.83, 0.94, 0.55, 0.66, 0.77, 0.88, 0.99, 0.5,
                              0.73, 0.81, 0.69, 0.92, 0.58, 0.64, 0.87, 0.79, 0.71, 0.85};
  const auto r = summarize_runs(v);
  EXPECT_NEAR(r.auc_mean, 0.752, 1e-14);
  EXPECT_NEAR(r.auc_std, 0.13295111883696203, 1e-14);
  EXPECT_EQ(r.per_run_auc, v);
}

}  // namespace
}  // namespace derm
