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

// Slow reference implementations used only by tests. None of them call into
// the code paths they check: forward passes are plain loops, aggregates use
// the textbook formulas, and AUC counts pairs.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "derm/autoencoder.hpp"
#include "derm/collaborative.hpp"
#include "derm/numeric.hpp"

namespace derm::oracle {

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

// ||x - mlp(x)||^2 for a single row, one neuron at a time.
inline double recon_loss(const MlpParams& mlp, std::span<const double> x) {
  std::vector<double> a(x.begin(), x.end());
  for (const auto& layer : mlp.layers) {
    std::vector<double> next(layer.out_dim());
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      double z = layer.bias[o];
      for (std::size_t i = 0; i < layer.in_dim(); ++i) z += a[i] * layer.weights(i, o);
      next[o] = layer.activation == Activation::kRelu ? std::max(z, 0.0) : z;
    }
    a = std::move(next);
  }
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) s += (x[j] - a[j]) * (x[j] - a[j]);
  return s;
}

inline std::vector<double> recon_losses(const MlpParams& mlp, const Matrix& batch) {
  std::vector<double> out(batch.rows());
  for (std::size_t i = 0; i < batch.rows(); ++i) out[i] = recon_loss(mlp, batch.row(i));
  return out;
}

inline std::vector<double> collab_losses(const CollabModel& model, const Matrix& batch) {
  std::vector<double> out(batch.rows(), 0.0);
  for (const auto& ae : model.autoencoders) {
    const auto l = recon_losses(ae, batch);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += l[i];
  }
  return out;
}

// Textbook objectives, no log-domain tricks.
inline double objective(const Aggregator& agg, const std::vector<double>& f) {
  const auto n = static_cast<double>(f.size());
  double acc = 0.0;
  switch (agg.kind()) {
    case AggregatorKind::kErm:
      for (double v : f) acc += v;
      return acc / n;
    case AggregatorKind::kDerm:
      for (double v : f) acc += std::log(agg.t() * v);
      return std::exp(acc / n);
    case AggregatorKind::kTerm:
      for (double v : f) acc += std::exp(agg.t() * v);
      return std::log(acc / n) / agg.t();
  }
  return 0.0;
}

// Central differences of objective(agg, collab losses) with respect to every
// parameter of every autoencoder, concatenated in flatten() order.
inline std::vector<double> finite_difference_gradient(const CollabModel& model, const Matrix& batch,
                                                      const Aggregator& agg, double h = 1e-5) {
  std::vector<double> grad;
  CollabModel probe = model;
  for (std::size_t j = 0; j < model.k(); ++j) {
    auto theta = flatten(model.autoencoders[j]);
    for (std::size_t p = 0; p < theta.size(); ++p) {
      auto shifted = theta;
      shifted[p] = theta[p] + h;
      unflatten(shifted, probe.autoencoders[j]);
      const double up = objective(agg, collab_losses(probe, batch));
      shifted[p] = theta[p] - h;
      unflatten(shifted, probe.autoencoders[j]);
      const double down = objective(agg, collab_losses(probe, batch));
      grad.push_back((up - down) / (2.0 * h));
    }
    unflatten(theta, probe.autoencoders[j]);
  }
  return grad;
}

// Smallest |pre-activation| over all ReLU units for the batch. Central
// differences are only meaningful when this is well above the step size.
inline double relu_margin(const CollabModel& model, const Matrix& batch) {
  double margin = INFINITY;
  for (const auto& ae : model.autoencoders) {
    for (std::size_t r = 0; r < batch.rows(); ++r) {
      std::vector<double> a(batch.row(r).begin(), batch.row(r).end());
      for (const auto& layer : ae.layers) {
        std::vector<double> next(layer.out_dim());
        for (std::size_t o = 0; o < layer.out_dim(); ++o) {
          double z = layer.bias[o];
          for (std::size_t i = 0; i < layer.in_dim(); ++i) z += a[i] * layer.weights(i, o);
          if (layer.activation == Activation::kRelu) margin = std::min(margin, std::abs(z));
          next[o] = layer.activation == Activation::kRelu ? std::max(z, 0.0) : z;
        }
        a = std::move(next);
      }
    }
  }
  return margin;
}

// ||a - b|| / max(||a||, ||b||), Euclidean norms; 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

// Exhaustive pairwise AUC: wins + ties / 2 over all anomaly/normal pairs.
inline double pairwise_auc(std::span<const double> scores, std::span<const int> labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

}  // namespace derm::oracle
