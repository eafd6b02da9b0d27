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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "derm/errors.hpp"

namespace derm {

// Per-sample reconstruction losses of one mini-batch.
using LossVector = std::vector<double>;
// Per-sample gradient coefficients, index-aligned with a LossVector.
using WeightVector = std::vector<double>;

// Losses below this are raised to it before DERM takes their logarithm.
inline constexpr double kLossFloor = 1e-12;

enum class AggregatorKind { kErm, kDerm, kTerm };

// How per-sample losses of a batch are combined into one objective.
//
//   ERM   mean(f)
//   DERM  exp(mean(log(t f)))         = t * geometric_mean(f),  t > 0
//   TERM  (1/t) log(mean(exp(t f))),  t < 0 for anomaly detection
//
// Each objective's gradient is sum_i w_i grad f_i with closed-form w_i, which
// is what gradient_weights() returns.
class Aggregator {
 public:
  static Aggregator erm() { return Aggregator(AggregatorKind::kErm, 0.0); }

  static Aggregator derm(double t) {
    if (!(t > 0.0) || !std::isfinite(t)) {
      throw ParameterError("DERM requires finite t > 0, got " + std::to_string(t));
    }
    return Aggregator(AggregatorKind::kDerm, t);
  }

  static Aggregator term(double t) {
    if (!(t < 0.0) || !std::isfinite(t)) {
      throw ParameterError("TERM for anomaly detection requires finite t < 0, got " +
                           std::to_string(t));
    }
    return Aggregator(AggregatorKind::kTerm, t);
  }

  // Parses "erm" | "derm" | "term"; t is ignored for ERM.
  static Aggregator from_name(std::string_view name, double t) {
    if (name == "erm") return erm();
    if (name == "derm") return derm(t);
    if (name == "term") return term(t);
    throw ParameterError("unknown aggregator '" + std::string(name) +
                         "' (expected erm, derm or term)");
  }

  AggregatorKind kind() const noexcept { return kind_; }
  double t() const noexcept { return t_; }

  std::string_view name() const noexcept {
    switch (kind_) {
      case AggregatorKind::kErm:
        return "erm";
      case AggregatorKind::kDerm:
        return "derm";
      case AggregatorKind::kTerm:
        return "term";
    }
    return "?";
  }

  friend bool operator==(const Aggregator&, const Aggregator&) = default;

 private:
  Aggregator(AggregatorKind kind, double t) : kind_(kind), t_(t) {}

  AggregatorKind kind_;
  double t_;
};

namespace detail {

inline void check_losses(std::span<const double> losses) {
  if (losses.empty()) throw ShapeError("loss vector is empty");
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (!std::isfinite(losses[i])) {
      throw DomainError("loss " + std::to_string(i) + " is not finite");
    }
    if (losses[i] < 0.0) {
      throw DomainError("loss " + std::to_string(i) + " is negative (" +
                        std::to_string(losses[i]) + ")");
    }
  }
}

inline double floored(double f) { return std::max(f, kLossFloor); }

// log(R_DERM) = log t + mean(log max(f, floor)).
inline double derm_log_aggregate(double t, std::span<const double> losses) {
  double sum_log = 0.0;
  for (double f : losses) sum_log += std::log(floored(f));
  return std::log(t) + sum_log / static_cast<double>(losses.size());
}

// R_TERM through a max-shifted log-sum-exp.
inline double term_aggregate(double t, std::span<const double> losses) {
  double shift = t * losses[0];
  for (double f : losses) shift = std::max(shift, t * f);
  double acc = 0.0;
  for (double f : losses) acc += std::exp(t * f - shift);
  const double log_mean = shift + std::log(acc / static_cast<double>(losses.size()));
  return log_mean / t;
}

}  // namespace detail

inline double aggregate(const Aggregator& agg, std::span<const double> losses) {
  detail::check_losses(losses);
  const auto n = static_cast<double>(losses.size());
  switch (agg.kind()) {
    case AggregatorKind::kErm: {
      double sum = 0.0;
      for (double f : losses) sum += f;
      return sum / n;
    }
    case AggregatorKind::kDerm:
      return std::exp(detail::derm_log_aggregate(agg.t(), losses));
    case AggregatorKind::kTerm:
      return detail::term_aggregate(agg.t(), losses);
  }
  throw ParameterError("aggregate: unknown aggregator kind");
}

// Coefficients w_i such that grad aggregate = sum_i w_i grad f_i:
//   ERM   1/N
//   DERM  R_DERM / (N f_i)
//   TERM  exp(t (f_i - R_TERM)) / N
inline WeightVector gradient_weights(const Aggregator& agg,
                                     std::span<const double> losses) {
  detail::check_losses(losses);
  const auto n = static_cast<double>(losses.size());
  WeightVector w(losses.size());
  switch (agg.kind()) {
    case AggregatorKind::kErm:
      std::fill(w.begin(), w.end(), 1.0 / n);
      break;
    case AggregatorKind::kDerm: {
      // Ratio taken in the log domain: exp(log R - log f_i) / N.
      const double log_r = detail::derm_log_aggregate(agg.t(), losses);
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(log_r - std::log(detail::floored(losses[i]))) / n;
      }
      break;
    }
    case AggregatorKind::kTerm: {
      const double r = detail::term_aggregate(agg.t(), losses);
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(agg.t() * (losses[i] - r)) / n;
      }
      break;
    }
  }
  return w;
}

// sum_i w_i f_i. With w from gradient_weights() held fixed, its gradient in the
// model parameters equals the gradient of the aggregate objective.
inline double weighted_total(std::span<const double> losses,
                             std::span<const double> weights) {
  if (losses.size() != weights.size()) {
    throw ShapeError("weighted_total: " + std::to_string(losses.size()) +
                     " losses vs " + std::to_string(weights.size()) + " weights");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) total += weights[i] * losses[i];
  return total;
}

}  // namespace derm
