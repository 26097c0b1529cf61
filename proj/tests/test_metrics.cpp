/*
 * Copyright 2026 The KGLN Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "kgln/metrics.hpp"

namespace kgln {
namespace {

// O(P*N) definition: wins plus half ties over all positive/negative pairs.
double pairwise_auc(const std::vector<ScoredLabel>& items) {
  std::uint64_t doubled = 0, pairs = 0;
  for (const auto& p : items) {
    if (!p.label) continue;
    for (const auto& n : items) {
      if (n.label) continue;
      ++pairs;
      if (p.score > n.score) doubled += 2;
      else if (p.score == n.score) doubled += 1;
    }
  }
  return double(doubled) / (2.0 * double(pairs));
}

TEST(Auc, Examples) {
  const std::vector<ScoredLabel> perfect{{0.9, 1}, {0.8, 1}, {0.2, 0}, {0.1, 0}};
  EXPECT_EQ(auc(perfect), 1.0);
  const std::vector<ScoredLabel> ties{{0.5, 1}, {0.5, 0}, {0.5, 1}, {0.5, 0}, {0.5, 0}};
  EXPECT_EQ(auc(ties), 0.5);
  const std::vector<ScoredLabel> hand{{0.9, 1}, {0.8, 0}, {0.7, 1}, {0.6, 0}};
  EXPECT_EQ(auc(hand), 0.75);
}

TEST(Auc, SingleClassIsDistinctError) {
  const std::vector<ScoredLabel> pos{{0.9, 1}, {0.1, 1}};
  EXPECT_THROW(auc(pos), SingleClassError);
  EXPECT_THROW(auc(std::vector<ScoredLabel>{}), SingleClassError);
  const std::vector<ScoredLabel> nan{{std::nan(""), 1}, {0.1, 0}};
  EXPECT_THROW(auc(nan), std::invalid_argument);
}

TEST(Auc, EqualsPairwiseOracleWithTies) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng() % 49;
    std::vector<ScoredLabel> items(n);
    const int levels = 1 + int(rng() % 10);  // coarse scores force ties
    for (auto& it : items) {
      it.score = double(rng() % levels) / levels;
      it.label = std::uint8_t(rng() % 2);
    }
    items[0].label = 1;
    items[1].label = 0;
    EXPECT_EQ(auc(items), pairwise_auc(items)) << "trial " << trial;
  }
}

TEST(Auc, MonotoneInvarianceAndComplement) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ScoredLabel> items(20);
    for (auto& it : items) {
      it.score = std::round(u(rng) * 8) / 8;
      it.label = std::uint8_t(rng() % 2);
    }
    items[0].label = 1;
    items[1].label = 0;
    auto transformed = items, flipped = items;
    for (auto& it : transformed) it.score = std::exp(3 * it.score) - 7;
    for (auto& it : flipped) it.label = std::uint8_t(1 - it.label);
    EXPECT_EQ(auc(items), auc(transformed));
    EXPECT_NEAR(auc(items) + auc(flipped), 1.0, 1e-12);
  }
}

TEST(F1, Examples) {
  const std::vector<ScoredLabel> perfect{{0.9, 1}, {0.6, 1}, {0.4, 0}};
  EXPECT_EQ(f1(perfect), 1.0);
  const std::vector<ScoredLabel> none{{0.1, 1}, {0.2, 0}};
  EXPECT_EQ(f1(none), 0.0);
  // TP=2, FP=1, FN=1
  std::vector<ScoredLabel> mixed{{0.9, 1}, {0.8, 1}, {0.7, 0}, {0.2, 1}, {0.1, 0}};
  EXPECT_NEAR(f1(mixed), 2.0 / 3.0, 1e-15);
  std::reverse(mixed.begin(), mixed.end());
  EXPECT_NEAR(f1(mixed), 2.0 / 3.0, 1e-15);
  const std::vector<ScoredLabel> no_pos_labels{{0.9, 0}, {0.1, 0}};
  EXPECT_EQ(f1(no_pos_labels), 0.0);
}

TEST(F1, ThresholdIsInclusive) {
  const std::vector<ScoredLabel> at{{0.5, 1}, {0.4, 0}};
  EXPECT_EQ(f1(at, 0.5), 1.0);
}

TEST(MetricReport, CountsAndMeanStd) {
  const std::vector<ScoredLabel> items{{0.9, 1}, {0.8, 0}, {0.7, 1}, {0.6, 0}};
  const auto r = metric_report(items);
  EXPECT_EQ(r.positives, 2u);
  EXPECT_EQ(r.negatives, 2u);
  EXPECT_EQ(r.auc, 0.75);
  const std::vector<double> xs{1, 2, 3, 4};
  const auto ms = mean_std(xs);
  EXPECT_DOUBLE_EQ(ms.mean, 2.5);
  EXPECT_NEAR(ms.std, std::sqrt(5.0 / 3.0), 1e-15);
  const std::vector<double> one{0.7};
  EXPECT_EQ(mean_std(one).std, 0.0);
}

}  // namespace
}  // namespace kgln
