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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "kgln/errors.hpp"

namespace kgln {

struct ScoredLabel {
  double score = 0.0;
  std::uint8_t label = 0;
};

/// Raised when AUC is requested for a set without both classes.
class SingleClassError : public DataError {
 public:
  using DataError::DataError;
};

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Midrank statistic; exact in the sense that for
/// integer-valued counts the result equals the pairwise definition.
inline double auc(std::span<const ScoredLabel> items) {
  std::size_t n_pos = 0;
  for (const auto& it : items) {
    if (!std::isfinite(it.score)) throw std::invalid_argument("auc: non-finite score");
    n_pos += it.label ? 1 : 0;
  }
  const std::size_t n_neg = items.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw SingleClassError("auc: need at least one positive and one negative (got " + std::to_string(n_pos) +
                           " positives, " + std::to_string(n_neg) + " negatives)");
  }
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return items[a].score < items[b].score; });

  // Sum of doubled midranks (integers) over positives, so ties stay exact.
  std::uint64_t doubled_rank_sum = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && items[order[j]].score == items[order[i]].score) ++j;
    // ranks i+1 .. j, doubled midrank = i + 1 + j
    const std::uint64_t doubled_mid = std::uint64_t(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (items[order[k]].label) doubled_rank_sum += doubled_mid;
    i = j;
  }
  // U = R_pos - n_pos (n_pos + 1) / 2 ; doubled to stay integral.
  const std::uint64_t doubled_u = doubled_rank_sum - std::uint64_t(n_pos) * (n_pos + 1);
  return double(doubled_u) / (2.0 * double(n_pos) * double(n_neg));
}

/// F1 of (score >= threshold) against the labels. Zero when there is no
/// predicted positive or no actual positive.
inline double f1(std::span<const ScoredLabel> items, double threshold = 0.5) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& it : items) {
    const bool pred = it.score >= threshold;
    if (pred && it.label) ++tp;
    else if (pred) ++fp;
    else if (it.label) ++fn;
  }
  if (tp + fp == 0 || tp + fn == 0 || tp == 0) return 0.0;
  const double precision = double(tp) / double(tp + fp);
  const double recall = double(tp) / double(tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

struct MetricReport {
  double auc = 0.0;
  double f1 = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double threshold = 0.5;
};

inline MetricReport metric_report(std::span<const ScoredLabel> items, double threshold = 0.5) {
  MetricReport r;
  r.threshold = threshold;
  for (const auto& it : items) (it.label ? r.positives : r.negatives)++;
  r.auc = auc(items);
  r.f1 = f1(items, threshold);
  return r;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd out;
  if (xs.empty()) return out;
  out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / double(xs.size() - 1));
  }
  return out;
}

}  // namespace kgln
