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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "derm/aggregation.hpp"
#include "derm/autoencoder.hpp"
#include "derm/data.hpp"
#include "derm/errors.hpp"
#include "derm/numeric.hpp"

namespace derm {

// k autoencoders of identical shape, each with its own initialization. The
// loss of a sample is the sum of its k reconstruction errors.
struct CollabModel {
  std::vector<MlpParams> autoencoders;

  std::size_t k() const noexcept { return autoencoders.size(); }
  std::size_t dim() const { return autoencoders.empty() ? 0 : autoencoders.front().input_dim(); }

  void validate() const {
    if (autoencoders.empty()) throw ShapeError("CollabModel: k must be >= 1");
    const auto dims = autoencoders.front().dims();
    for (const auto& ae : autoencoders) {
      ae.validate();
      if (ae.dims() != dims) throw ShapeError("CollabModel: autoencoders differ in shape");
    }
  }

  friend bool operator==(const CollabModel&, const CollabModel&) = default;
};

// Each autoencoder is initialized from its own child stream of `rng`.
inline CollabModel init_collab_model(std::span<const std::size_t> dims, std::size_t k,
                                     ActivationSpec acts, Rng& rng) {
  if (k == 0) throw ParameterError("init_collab_model: k must be >= 1");
  CollabModel model;
  model.autoencoders.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    Rng child = rng.fork();
    model.autoencoders.push_back(init_mlp(dims, acts, child));
  }
  return model;
}

struct CollabForward {
  LossVector losses;                 // summed over autoencoders
  std::vector<ForwardCache> caches;  // one per autoencoder
};

// One forward pass per autoencoder.
inline CollabForward collab_loss(const CollabModel& model, const Matrix& batch) {
  model.validate();
  if (batch.cols() != model.dim()) {
    throw ShapeError("collab_loss: batch has " + std::to_string(batch.cols()) +
                     " columns, model expects " + std::to_string(model.dim()));
  }
  CollabForward out;
  out.losses.assign(batch.rows(), 0.0);
  out.caches.reserve(model.k());
  for (const auto& ae : model.autoencoders) {
    auto fwd = per_sample_recon_loss(ae, batch);
    for (std::size_t i = 0; i < batch.rows(); ++i) out.losses[i] += fwd.losses[i];
    out.caches.push_back(std::move(fwd.cache));
  }
  return out;
}

// Per-autoencoder gradients of sum_i weights[i] * f_i. The same weight vector
// applies to every autoencoder because f_i is their summed loss.
inline std::vector<Gradients> collab_gradients(const CollabModel& model,
                                               const CollabForward& forward,
                                               const Matrix& batch,
                                               std::span<const double> weights) {
  if (forward.caches.size() != model.k()) {
    throw ContractError("collab_gradients: forward pass does not match the model");
  }
  std::vector<Gradients> grads;
  grads.reserve(model.k());
  for (std::size_t j = 0; j < model.k(); ++j) {
    grads.push_back(backward_weighted(model.autoencoders[j], forward.caches[j], batch, weights));
  }
  return grads;
}

struct TrainConfig {
  Aggregator aggregator = Aggregator::derm(0.01);
  double lr = 1e-3;
  std::size_t max_epochs = 100;
  std::size_t batch_size = 128;  // capped at the training set size
  std::size_t k = 2;
  std::uint64_t seed = 0;
  bool trace_weights = false;
  std::vector<std::size_t> hidden;  // empty: autoencoder_dims() defaults
  ActivationSpec activations;

  void validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ParameterError("learning rate must be > 0");
    if (max_epochs == 0) throw ParameterError("max_epochs must be >= 1");
    if (batch_size == 0) throw ParameterError("batch_size must be >= 1");
    if (k == 0) throw ParameterError("k must be >= 1");
    for (std::size_t h : hidden) {
      if (h == 0) throw ParameterError("hidden widths must be >= 1");
    }
  }
};

// Per-epoch class means of the gradient weights. For each mini-batch the mean
// weight of its normal and of its anomalous members is taken; an epoch record
// averages those batch means over the batches where the class occurs (NaN if
// it never does). aggregate_loss is the epoch mean of the batch objectives.
struct WeightTrace {
  struct Record {
    std::size_t epoch = 0;
    double mean_weight_normal = 0.0;
    double mean_weight_anomalous = 0.0;
    double aggregate_loss = 0.0;
  };
  std::vector<Record> records;

  void write_csv(std::ostream& out) const {
    out << "epoch,mean_weight_normal,mean_weight_anomalous,aggregate_loss\n";
    for (const auto& r : records) {
      out << r.epoch << ',' << detail::format_double(r.mean_weight_normal) << ','
          << detail::format_double(r.mean_weight_anomalous) << ','
          << detail::format_double(r.aggregate_loss) << '\n';
    }
  }
};

struct TrainResult {
  CollabModel model;
  WeightTrace trace;
  std::size_t updates = 0;  // optimizer steps per autoencoder
};

// Maps a batch's losses to gradient weights. Defaults to
// gradient_weights(config.aggregator, .).
using WeightFunction = std::function<WeightVector(std::span<const double>)>;

// Mini-batch training of all k autoencoders on `features`. Labels are only
// consulted to build the weight trace and never influence the parameters.
inline TrainResult train(const Matrix& features, const TrainConfig& config,
                         std::span<const int> trace_labels = {},
                         const WeightFunction& weight_fn = {}) {
  config.validate();
  const std::size_t n = features.rows();
  if (n == 0 || features.cols() == 0) throw ShapeError("train: empty training set");
  if (!features.all_finite()) throw DomainError("train: non-finite feature");
  if (config.trace_weights && trace_labels.size() != n) {
    throw UndefinedMetricError("train: weight tracing needs one label per training row");
  }

  Rng rng(config.seed);
  const auto dims = autoencoder_dims(features.cols(), config.hidden);
  TrainResult result{init_collab_model(dims, config.k, config.activations, rng), {}, 0};
  std::vector<AdamState> optim;
  for (const auto& ae : result.model.autoencoders) optim.push_back(AdamState::for_params(ae));

  const std::size_t batch_size = std::min(config.batch_size, n);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto order = permutation(rng, n);
    double sum_normal = 0.0, sum_anomalous = 0.0, sum_aggregate = 0.0;
    std::size_t batches_normal = 0, batches_anomalous = 0, batches = 0;

    for (std::size_t start = 0, b = 1; start < n; start += batch_size, ++b) {
      const std::size_t stop = std::min(start + batch_size, n);
      const std::span<const std::size_t> index(order.data() + start, stop - start);
      const Matrix batch = gather_rows(features, index);

      const auto forward = collab_loss(result.model, batch);
      for (double f : forward.losses) {
        if (!std::isfinite(f)) throw TrainingDivergedError(epoch, b);
      }
      const WeightVector weights =
          weight_fn ? weight_fn(forward.losses) : gradient_weights(config.aggregator, forward.losses);
      const auto grads = collab_gradients(result.model, forward, batch, weights);
      for (std::size_t j = 0; j < result.model.k(); ++j) {
        if (!grads[j].all_finite()) throw TrainingDivergedError(epoch, b);
        adam_step(result.model.autoencoders[j], grads[j], optim[j], config.lr);
      }
      ++result.updates;

      if (config.trace_weights) {
        double wn = 0.0, wa = 0.0;
        std::size_t cn = 0, ca = 0;
        for (std::size_t i = 0; i < index.size(); ++i) {
          if (trace_labels[index[i]] == 1) {
            wa += weights[i];
            ++ca;
          } else {
            wn += weights[i];
            ++cn;
          }
        }
        if (cn) {
          sum_normal += wn / static_cast<double>(cn);
          ++batches_normal;
        }
        if (ca) {
          sum_anomalous += wa / static_cast<double>(ca);
          ++batches_anomalous;
        }
        sum_aggregate += aggregate(config.aggregator, forward.losses);
        ++batches;
      }
    }

    if (config.trace_weights) {
      result.trace.records.push_back(
          {epoch, batches_normal ? sum_normal / static_cast<double>(batches_normal) : nan,
           batches_anomalous ? sum_anomalous / static_cast<double>(batches_anomalous) : nan,
           sum_aggregate / static_cast<double>(batches)});
    }
  }
  return result;
}

inline TrainResult train(const Dataset& trainset, const TrainConfig& config) {
  std::span<const int> labels;
  if (config.trace_weights) {
    if (!trainset.labels) {
      throw UndefinedMetricError("train: weight tracing requires a labeled dataset");
    }
    labels = *trainset.labels;
  }
  return train(trainset.features, config, labels);
}

// Anomaly score of each row: its summed reconstruction loss.
inline std::vector<double> score(const CollabModel& model, const Matrix& x) {
  return collab_loss(model, x).losses;
}

inline std::vector<double> score(const CollabModel& model, const Dataset& testset) {
  return score(model, testset.features);
}

}  // namespace derm
