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

#include "derm/autoencoder.hpp"

#include <cmath>
#include <vector>

#include "derm/aggregation.hpp"
#include "derm/collaborative.hpp"
#include "gtest/gtest.h"
#include "support/oracles.hpp"

namespace derm {
namespace {

Matrix random_batch(Rng& rng, std::size_t n, std::size_t d) {
  Matrix x(n, d);
  for (double& v : x.data()) v = rng.normal();
  return x;
}

// Linear d -> d -> d network whose layers are both the identity.
MlpParams identity_net(std::size_t d) {
  MlpParams mlp;
  for (int k = 0; k < 2; ++k) {
    mlp.layers.push_back({Matrix::identity(d), std::vector<double>(d, 0.0), Activation::kLinear});
  }
  return mlp;
}

MlpParams random_net(Rng& rng, std::vector<std::size_t> dims) {
  return init_mlp(dims, {}, rng);
}

TEST(InitMlp, DeterministicPerSeed) {
  const std::vector<std::size_t> dims{4, 2, 4};
  Rng a(1), b(1), c(2);
  const auto pa = init_mlp(dims, {}, a);
  EXPECT_EQ(pa, init_mlp(dims, {}, b));
  EXPECT_NE(pa, init_mlp(dims, {}, c));
}

TEST(InitMlp, ChainsShapes) {
  Rng rng(0);
  const std::vector<std::size_t> dims{5, 3, 2, 3, 5};
  const auto mlp = init_mlp(dims, {}, rng);
  ASSERT_EQ(mlp.layers.size(), 4u);
  const std::size_t expect[4][2] = {{5, 3}, {3, 2}, {2, 3}, {3, 5}};
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(mlp.layers[k].in_dim(), expect[k][0]);
    EXPECT_EQ(mlp.layers[k].out_dim(), expect[k][1]);
    for (double b : mlp.layers[k].bias) EXPECT_EQ(b, 0.0);
    const double limit = std::sqrt(6.0 / (expect[k][0] + expect[k][1]));
    for (double w : mlp.layers[k].weights.data()) EXPECT_LE(std::abs(w), limit);
  }
  EXPECT_EQ(mlp.layers[0].activation, Activation::kRelu);
  EXPECT_EQ(mlp.layers[3].activation, Activation::kLinear);
  EXPECT_EQ(mlp.dims(), dims);
}

TEST(InitMlp, RejectsBadDims) {
  Rng rng(0);
  EXPECT_THROW(init_mlp(std::vector<std::size_t>{4, 4}, {}, rng), ShapeError);
  EXPECT_THROW(init_mlp(std::vector<std::size_t>{4, 2, 3}, {}, rng), ShapeError);
  EXPECT_THROW(init_mlp(std::vector<std::size_t>{4, 0, 4}, {}, rng), ShapeError);
}

TEST(AutoencoderDims, DefaultsAndOverrides) {
  EXPECT_EQ(autoencoder_dims(8), (std::vector<std::size_t>{8, 4, 2, 4, 8}));
  EXPECT_EQ(autoencoder_dims(1), (std::vector<std::size_t>{1, 2, 1, 2, 1}));
  EXPECT_EQ(autoencoder_dims(9), (std::vector<std::size_t>{9, 5, 3, 5, 9}));
  const std::vector<std::size_t> hidden{6};
  EXPECT_EQ(autoencoder_dims(3, hidden), (std::vector<std::size_t>{3, 6, 3}));
}

TEST(ReconLoss, IdentityNetReconstructsPerfectly) {
  Rng rng(3);
  const auto x = random_batch(rng, 5, 4);
  for (double f : per_sample_recon_loss(identity_net(4), x).losses) EXPECT_EQ(f, 0.0);
}

TEST(ReconLoss, ZeroNetGivesSquaredNorm) {
  Rng rng(3);
  auto mlp = random_net(rng, {3, 2, 3});
  for (auto& l : mlp.layers) {
    for (double& w : l.weights.data()) w = 0.0;
  }
  const Matrix x{{1, 2, 3}, {-1, 0, 0.5}};
  const auto losses = per_sample_recon_loss(mlp, x).losses;
  EXPECT_DOUBLE_EQ(losses[0], 14.0);
  EXPECT_DOUBLE_EQ(losses[1], 1.25);
}

TEST(ReconLoss, MatchesNaiveForwardPass) {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    auto mlp = random_net(rng, {3, 2, 3});
    for (auto& l : mlp.layers)
      for (double& b : l.bias) b = rng.normal();
    const auto x = random_batch(rng, 2, 3);
    const auto got = per_sample_recon_loss(mlp, x).losses;
    const auto want = oracle::recon_losses(mlp, x);
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_NEAR(got[i], want[i], 1e-13 * std::max(1.0, want[i]));
      EXPECT_GE(got[i], 0.0);
    }
  }
}

TEST(ReconLoss, RejectsWrongWidth) {
  Rng rng(0);
  EXPECT_THROW(per_sample_recon_loss(random_net(rng, {3, 2, 3}), Matrix(2, 4)), ShapeError);
}

TEST(BackwardWeighted, ZeroWeightsGiveZeroGradients) {
  Rng rng(5);
  const auto mlp = random_net(rng, {4, 3, 2, 3, 4});
  const auto x = random_batch(rng, 6, 4);
  const auto fwd = per_sample_recon_loss(mlp, x);
  const auto g = backward_weighted(mlp, fwd.cache, x, std::vector<double>(6, 0.0));
  for (double v : flatten(g)) EXPECT_EQ(v, 0.0);
}

TEST(BackwardWeighted, RejectsStaleCache) {
  Rng rng(5);
  auto mlp = random_net(rng, {3, 2, 3});
  const auto x = random_batch(rng, 4, 3);
  const auto fwd = per_sample_recon_loss(mlp, x);
  const std::vector<double> w(4, 0.25);
  EXPECT_THROW(backward_weighted(mlp, fwd.cache, random_batch(rng, 4, 3), w), ContractError);
  EXPECT_THROW(backward_weighted(mlp, fwd.cache, x, std::vector<double>(3, 0.25)), ShapeError);
  mlp.layers[0].weights(0, 0) += 1e-3;
  EXPECT_THROW(backward_weighted(mlp, fwd.cache, x, w), ContractError);
}

// Analytic gradient of the aggregate objective vs central differences.
void expect_matches_finite_differences(const Aggregator& agg, std::uint64_t seed) {
  Rng rng(seed);
  int checked = 0;
  for (int trial = 0; trial < 8; ++trial) {
    CollabModel model{{random_net(rng, {3, 2, 3})}};
    for (auto& l : model.autoencoders[0].layers)
      for (double& b : l.bias) b = 0.1 * rng.normal();
    const auto x = random_batch(rng, 5, 3);
    if (oracle::relu_margin(model, x) < 1e-3) continue;
    const auto fwd = collab_loss(model, x);
    const auto w = gradient_weights(agg, fwd.losses);
    const auto analytic = flatten(collab_gradients(model, fwd, x, w)[0]);
    const auto numeric = oracle::finite_difference_gradient(model, x, agg);
    EXPECT_LE(oracle::relative_error(analytic, numeric), 1e-5) << agg.name() << " t=" << agg.t();
    ++checked;
  }
  EXPECT_GE(checked, 4);
}

TEST(BackwardWeighted, UniformWeightsGiveErmGradient) {
  expect_matches_finite_differences(Aggregator::erm(), 31);
}

TEST(BackwardWeighted, DermWeightsGiveExactDermGradient) {
  expect_matches_finite_differences(Aggregator::derm(1.0), 32);
  expect_matches_finite_differences(Aggregator::derm(0.01), 33);
}

TEST(BackwardWeighted, TermWeightsGiveExactTermGradient) {
  expect_matches_finite_differences(Aggregator::term(-0.1), 34);
}

TEST(BackwardWeighted, LinearInWeights) {
  Rng rng(8);
  const auto mlp = random_net(rng, {5, 3, 2, 3, 5});
  const auto x = random_batch(rng, 7, 5);
  const auto fwd = per_sample_recon_loss(mlp, x);
  std::vector<double> w1(7), w2(7), w12(7);
  for (std::size_t i = 0; i < 7; ++i) {
    w1[i] = rng.uniform();
    w2[i] = rng.uniform();
    w12[i] = w1[i] + w2[i];
  }
  const auto g1 = flatten(backward_weighted(mlp, fwd.cache, x, w1));
  const auto g2 = flatten(backward_weighted(mlp, fwd.cache, x, w2));
  const auto g12 = flatten(backward_weighted(mlp, fwd.cache, x, w12));
  for (std::size_t p = 0; p < g1.size(); ++p) EXPECT_NEAR(g12[p], g1[p] + g2[p], 1e-10);
}

TEST(BackwardWeighted, RowPermutationInvariant) {
  Rng rng(9);
  const auto mlp = random_net(rng, {4, 3, 2, 3, 4});
  const auto x = random_batch(rng, 6, 4);
  std::vector<double> w(6);
  for (double& v : w) v = rng.uniform();
  const auto perm = permutation(rng, 6);
  const Matrix xp = gather_rows(x, perm);
  std::vector<double> wp(6);
  for (std::size_t i = 0; i < 6; ++i) wp[i] = w[perm[i]];
  const auto g = flatten(backward_weighted(mlp, per_sample_recon_loss(mlp, x).cache, x, w));
  const auto gp = flatten(backward_weighted(mlp, per_sample_recon_loss(mlp, xp).cache, xp, wp));
  for (std::size_t p = 0; p < g.size(); ++p) EXPECT_NEAR(g[p], gp[p], 1e-12);
}

TEST(AdamStep, ZeroGradientLeavesParameters) {
  Rng rng(1);
  auto mlp = random_net(rng, {3, 2, 3});
  const auto before = mlp;
  auto state = AdamState::for_params(mlp);
  adam_step(mlp, Gradients::zeros_like(mlp), state, 1e-3);
  EXPECT_EQ(mlp, before);
  EXPECT_EQ(state.step, 1u);
}

TEST(AdamStep, FirstStepIsLrTimesSign) {
  Rng rng(1);
  auto mlp = random_net(rng, {3, 2, 3});
  const auto before = flatten(mlp);
  auto state = AdamState::for_params(mlp);
  auto grads = Gradients::zeros_like(mlp);
  std::vector<double> g(before.size());
  for (double& v : g) v = rng.uniform(-2.0, 2.0);
  MlpParams shaped = mlp;
  unflatten(g, shaped);
  for (std::size_t k = 0; k < grads.layers.size(); ++k) {
    grads.layers[k].weights = shaped.layers[k].weights;
    grads.layers[k].bias = shaped.layers[k].bias;
  }
  const double lr = 0.01;
  adam_step(mlp, grads, state, lr);
  const auto after = flatten(mlp);
  for (std::size_t p = 0; p < g.size(); ++p) {
    // Bias-corrected first moment = g, second = g^2.
    const double expected = -lr * g[p] / (std::abs(g[p]) + 1e-8);
    EXPECT_NEAR(after[p] - before[p], expected, 1e-15);
  }
}

TEST(AdamStep, ConstantGradientDescendsMonotonically) {
  Rng rng(1);
  auto mlp = random_net(rng, {2, 1, 2});
  auto state = AdamState::for_params(mlp);
  auto grads = Gradients::zeros_like(mlp);
  grads.layers[0].weights(0, 0) = 0.3;
  grads.layers[1].bias[1] = -2.0;
  double w_prev = mlp.layers[0].weights(0, 0);
  double b_prev = mlp.layers[1].bias[1];
  for (int s = 0; s < 50; ++s) {
    adam_step(mlp, grads, state, 1e-3);
    EXPECT_LT(mlp.layers[0].weights(0, 0), w_prev);
    EXPECT_GT(mlp.layers[1].bias[1], b_prev);
    w_prev = mlp.layers[0].weights(0, 0);
    b_prev = mlp.layers[1].bias[1];
  }
  EXPECT_EQ(state.step, 50u);
}

TEST(AdamStep, RejectsNonFiniteGradient) {
  Rng rng(1);
  auto mlp = random_net(rng, {3, 2, 3});
  const auto before = mlp;
  auto state = AdamState::for_params(mlp);
  auto grads = Gradients::zeros_like(mlp);
  grads.layers[1].bias[0] = NAN;
  EXPECT_THROW(adam_step(mlp, grads, state, 1e-3), NumericError);
  EXPECT_EQ(mlp, before);
  EXPECT_EQ(state.step, 0u);
}

}  // namespace
}  // namespace derm
