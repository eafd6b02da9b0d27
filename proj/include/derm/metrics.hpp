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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "derm/errors.hpp"

namespace derm {

// Area under the ROC curve: P(score of a random anomaly > score of a random
// normal), ties counting one half. Computed from average ranks
// (Mann-Whitney U) in O(n log n).
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("auc: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(labels.size()) + " labels");
  }
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DomainError("auc: labels must be 0 or 1");
    if (std::isnan(scores[i])) throw DomainError("auc: NaN score");
    n_pos += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw UndefinedMetricError("auc: both normal and anomalous instances are required");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of 1-based average ranks of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) rank_sum += avg_rank;
    }
    i = j;
  }
  const double p = static_cast<double>(n_pos);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(n_neg));
}

// AUC of one or more runs of an experiment.
struct EvalReport {
  std::string dataset;
  std::string aggregator;
  double t = 0.0;
  std::size_t k = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> per_run_auc;
  double auc_mean = 0.0;
  double auc_std = 0.0;
  std::size_t n_test = 0;
  std::size_t n_anomalies = 0;
};

// Arithmetic mean and population standard deviation of per-run AUCs.
inline EvalReport summarize_runs(std::span<const double> aucs) {
  if (aucs.empty()) throw ShapeError("summarize_runs: no values");
  const auto n = static_cast<double>(aucs.size());
  double mean = 0.0;
  for (double v : aucs) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : aucs) ss += (v - mean) * (v - mean);
  EvalReport report;
  report.per_run_auc.assign(aucs.begin(), aucs.end());
  report.auc_mean = mean;
  report.auc_std = std::sqrt(ss / n);
  return report;
}

}  // namespace derm
