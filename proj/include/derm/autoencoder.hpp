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

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "derm/aggregation.hpp"
#include "derm/errors.hpp"
#include "derm/numeric.hpp"

namespace derm {

enum class Activation { kRelu, kLinear };

inline std::string_view activation_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "linear";
}

inline Activation activation_from_name(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "linear") return Activation::kLinear;
  throw ParameterError("unknown activation '" + std::string(name) + "'");
}

// Activation used on hidden layers and on the reconstruction layer.
struct ActivationSpec {
  Activation hidden = Activation::kRelu;
  Activation output = Activation::kLinear;
};

// One dense layer: out = act(in * weights + bias), weights is in_dim x out_dim.
struct LayerParams {
  Matrix weights;
  std::vector<double> bias;
  Activation activation = Activation::kLinear;

  std::size_t in_dim() const noexcept { return weights.rows(); }
  std::size_t out_dim() const noexcept { return weights.cols(); }

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

// Encoder layers followed by decoder layers; input and output width match.
struct MlpParams {
  std::vector<LayerParams> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

  // Layer widths including input and output: [d, h1, ..., d].
  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> out;
    if (layers.empty()) return out;
    out.push_back(layers.front().in_dim());
    for (const auto& l : layers) out.push_back(l.out_dim());
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }

  // Throws ShapeError unless layers chain and form an autoencoder.
  void validate() const {
    if (layers.size() < 2) throw ShapeError("MlpParams: need at least two layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& l = layers[k];
      if (l.bias.size() != l.out_dim()) {
        throw ShapeError("MlpParams: layer " + std::to_string(k) +
                         " bias length does not match out_dim");
      }
      if (k + 1 < layers.size() && l.out_dim() != layers[k + 1].in_dim()) {
        throw ShapeError("MlpParams: layer " + std::to_string(k) +
                         " does not chain into the next");
      }
    }
    if (input_dim() != output_dim()) {
      throw ShapeError("MlpParams: input and output widths differ");
    }
  }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

struct LayerGradients {
  Matrix weights;
  std::vector<double> bias;

  friend bool operator==(const LayerGradients&, const LayerGradients&) = default;
};

// Shaped like MlpParams.
struct Gradients {
  std::vector<LayerGradients> layers;

  static Gradients zeros_like(const MlpParams& mlp) {
    Gradients g;
    g.layers.reserve(mlp.layers.size());
    for (const auto& l : mlp.layers) {
      g.layers.push_back({Matrix(l.in_dim(), l.out_dim()),
                          std::vector<double>(l.out_dim(), 0.0)});
    }
    return g;
  }

  bool all_finite() const {
    for (const auto& l : layers) {
      if (!l.weights.all_finite()) return false;
      for (double b : l.bias)
        if (!std::isfinite(b)) return false;
    }
    return true;
  }

  friend bool operator==(const Gradients&, const Gradients&) = default;
};

// Parameters in layer order, each layer as weights (row-major) then bias.
inline std::vector<double> flatten(const MlpParams& mlp) {
  std::vector<double> out;
  out.reserve(mlp.parameter_count());
  for (const auto& l : mlp.layers) {
    out.insert(out.end(), l.weights.data().begin(), l.weights.data().end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

inline std::vector<double> flatten(const Gradients& g) {
  std::vector<double> out;
  for (const auto& l : g.layers) {
    out.insert(out.end(), l.weights.data().begin(), l.weights.data().end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

// Inverse of flatten(const MlpParams&); shapes come from `mlp`.
inline void unflatten(std::span<const double> flat, MlpParams& mlp) {
  if (flat.size() != mlp.parameter_count()) {
    throw ShapeError("unflatten: expected " + std::to_string(mlp.parameter_count()) +
                     " values, got " + std::to_string(flat.size()));
  }
  std::size_t pos = 0;
  for (auto& l : mlp.layers) {
    for (double& w : l.weights.data()) w = flat[pos++];
    for (double& b : l.bias) b = flat[pos++];
  }
}

// Default widths [d, h1, h2, h1, d] with h1 = max(2, ceil(d/2)) and
// h2 = max(1, ceil(d/4)). `hidden`, when non-empty, replaces [h1, h2] and is
// mirrored for the decoder.
inline std::vector<std::size_t> autoencoder_dims(std::size_t d,
                                                 std::span<const std::size_t> hidden = {}) {
  if (d == 0) throw ShapeError("autoencoder_dims: data dimension must be >= 1");
  std::vector<std::size_t> enc;
  if (hidden.empty()) {
    enc = {std::max<std::size_t>(2, (d + 1) / 2), std::max<std::size_t>(1, (d + 3) / 4)};
  } else {
    enc.assign(hidden.begin(), hidden.end());
  }
  std::vector<std::size_t> dims{d};
  dims.insert(dims.end(), enc.begin(), enc.end());
  for (std::size_t i = enc.size() - 1; i-- > 0;) dims.push_back(enc[i]);
  dims.push_back(d);
  return dims;
}

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
inline MlpParams init_mlp(std::span<const std::size_t> dims, ActivationSpec acts,
                          Rng& rng) {
  if (dims.size() < 3) throw ShapeError("init_mlp: need at least 3 layer widths");
  if (dims.front() != dims.back()) {
    throw ShapeError("init_mlp: first and last widths must match (autoencoder)");
  }
  for (std::size_t w : dims) {
    if (w == 0) throw ShapeError("init_mlp: layer widths must be >= 1");
  }
  MlpParams mlp;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const std::size_t in = dims[k];
    const std::size_t out = dims[k + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    LayerParams layer{Matrix(in, out), std::vector<double>(out, 0.0),
                      k + 2 == dims.size() ? acts.output : acts.hidden};
    for (double& w : layer.weights.data()) w = rng.uniform(-limit, limit);
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

namespace detail {

inline std::uint64_t fingerprint(std::uint64_t h, std::span<const double> values) {
  for (double v : values) {
    h ^= std::bit_cast<std::uint64_t>(v);
    h *= 0x100000001b3ULL;
    h ^= h >> 29;
  }
  return h;
}

inline std::uint64_t fingerprint(const MlpParams& mlp) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& l : mlp.layers) {
    h = fingerprint(h, l.weights.data());
    h = fingerprint(h, l.bias);
    h ^= static_cast<std::uint64_t>(l.activation) + 0x9e37;
  }
  return h;
}

inline std::uint64_t fingerprint(const Matrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ (m.rows() * 0x9e3779b97f4a7c15ULL) ^ m.cols();
  return fingerprint(h, m.data());
}

inline double activate(Activation a, double z) {
  return a == Activation::kRelu ? (z > 0.0 ? z : 0.0) : z;
}

inline double activation_slope(Activation a, double z) {
  return a == Activation::kRelu ? (z > 0.0 ? 1.0 : 0.0) : 1.0;
}

}  // namespace detail

// Intermediate values of one forward pass, tied to the exact parameters and
// batch that produced them.
struct ForwardCache {
  std::vector<Matrix> pre_activations;  // one per layer
  std::vector<Matrix> activations;      // input batch first, then one per layer
  std::uint64_t params_fingerprint = 0;
  std::uint64_t batch_fingerprint = 0;

  const Matrix& output() const { return activations.back(); }
};

struct ForwardResult {
  LossVector losses;
  ForwardCache cache;
};

// Loss of row i is ||x_i - mlp(x_i)||^2, summed over features.
inline ForwardResult per_sample_recon_loss(const MlpParams& mlp, const Matrix& batch) {
  mlp.validate();
  if (batch.cols() != mlp.input_dim()) {
    throw ShapeError("per_sample_recon_loss: batch has " + std::to_string(batch.cols()) +
                     " columns, model expects " + std::to_string(mlp.input_dim()));
  }
  ForwardResult result;
  auto& cache = result.cache;
  cache.activations.reserve(mlp.layers.size() + 1);
  cache.pre_activations.reserve(mlp.layers.size());
  cache.activations.push_back(batch);
  for (const auto& layer : mlp.layers) {
    Matrix z = add_row_broadcast(matmul(cache.activations.back(), layer.weights), layer.bias);
    Matrix a = map(z, [act = layer.activation](double v) { return detail::activate(act, v); });
    cache.pre_activations.push_back(std::move(z));
    cache.activations.push_back(std::move(a));
  }
  cache.params_fingerprint = detail::fingerprint(mlp);
  cache.batch_fingerprint = detail::fingerprint(batch);

  const Matrix& out = cache.output();
  result.losses.assign(batch.rows(), 0.0);
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    auto x = batch.row(i);
    auto y = out.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double r = y[j] - x[j];
      s += r * r;
    }
    result.losses[i] = s;
  }
  return result;
}

// Gradient of sum_i weights[i] * ||x_i - mlp(x_i)||^2 with the weights held
// constant. Fed with gradient_weights() this is the exact gradient of the
// aggregate objective. Every sample shares a single backward pass: its output
// error is scaled by its weight before propagation.
inline Gradients backward_weighted(const MlpParams& mlp, const ForwardCache& cache,
                                   const Matrix& batch, std::span<const double> weights) {
  if (cache.activations.size() != mlp.layers.size() + 1 ||
      cache.params_fingerprint != detail::fingerprint(mlp) ||
      cache.batch_fingerprint != detail::fingerprint(batch)) {
    throw ContractError("backward_weighted: cache was not produced by these parameters and batch");
  }
  if (weights.size() != batch.rows()) {
    throw ShapeError("backward_weighted: " + std::to_string(weights.size()) +
                     " weights for " + std::to_string(batch.rows()) + " rows");
  }

  Gradients grads = Gradients::zeros_like(mlp);
  // d(objective)/d(output) = 2 w_i (y_i - x_i)
  Matrix delta = cache.output();
  for (std::size_t i = 0; i < delta.rows(); ++i) {
    auto d = delta.row(i);
    auto x = batch.row(i);
    const double w2 = 2.0 * weights[i];
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = w2 * (d[j] - x[j]);
  }

  for (std::size_t k = mlp.layers.size(); k-- > 0;) {
    const auto& layer = mlp.layers[k];
    const Matrix& z = cache.pre_activations[k];
    for (std::size_t i = 0; i < delta.rows(); ++i) {
      auto d = delta.row(i);
      auto zr = z.row(i);
      for (std::size_t j = 0; j < d.size(); ++j) {
        d[j] *= detail::activation_slope(layer.activation, zr[j]);
      }
    }
    const Matrix& input = cache.activations[k];
    grads.layers[k].weights = matmul(transpose(input), delta);
    auto& gb = grads.layers[k].bias;
    for (std::size_t i = 0; i < delta.rows(); ++i) {
      auto d = delta.row(i);
      for (std::size_t j = 0; j < d.size(); ++j) gb[j] += d[j];
    }
    if (k > 0) delta = matmul(delta, transpose(layer.weights));
  }
  return grads;
}

struct AdamState {
  Gradients first_moment;
  Gradients second_moment;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const MlpParams& mlp) {
    return {Gradients::zeros_like(mlp), Gradients::zeros_like(mlp)};
  }
};

// Bias-corrected Adam update of `mlp` in place.
inline void adam_step(MlpParams& mlp, const Gradients& grads, AdamState& state, double lr) {
  if (grads.layers.size() != mlp.layers.size() ||
      state.first_moment.layers.size() != mlp.layers.size() ||
      state.second_moment.layers.size() != mlp.layers.size()) {
    throw ShapeError("adam_step: layer count mismatch");
  }
  for (std::size_t k = 0; k < mlp.layers.size(); ++k) {
    const auto& l = mlp.layers[k];
    for (const LayerGradients* g : {&grads.layers[k], &std::as_const(state.first_moment.layers[k]),
                                    &std::as_const(state.second_moment.layers[k])}) {
      if (g->weights.rows() != l.in_dim() || g->weights.cols() != l.out_dim() ||
          g->bias.size() != l.out_dim()) {
        throw ShapeError("adam_step: layer " + std::to_string(k) + " shape mismatch");
      }
    }
  }
  if (!grads.all_finite()) throw NumericError("adam_step: non-finite gradient");

  ++state.step;
  const double step = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, step);
  const double c2 = 1.0 - std::pow(state.beta2, step);
  auto update = [&](std::span<double> param, std::span<const double> g,
                    std::span<double> m, std::span<double> v) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      param[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
  };
  for (std::size_t k = 0; k < mlp.layers.size(); ++k) {
    auto& m = state.first_moment.layers[k];
    auto& v = state.second_moment.layers[k];
    update(mlp.layers[k].weights.data(), grads.layers[k].weights.data(), m.weights.data(),
           v.weights.data());
    update(mlp.layers[k].bias, grads.layers[k].bias, m.bias, v.bias);
  }
}

}  // namespace derm
