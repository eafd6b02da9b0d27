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

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "derm/autoencoder.hpp"
#include "derm/collaborative.hpp"
#include "derm/data.hpp"
#include "derm/errors.hpp"

namespace derm {

inline constexpr const char* kCheckpointFormat = "derm-checkpoint";
inline constexpr int kCheckpointVersion = 1;

// A trained model together with the settings that produced it. `scaler` is
// present when inputs were standardized before training.
struct Checkpoint {
  CollabModel model;
  TrainConfig config;
  std::optional<Scaler> scaler;
};

// Doubles are written in shortest round-trip form, so load(save(x)) restores
// every parameter bit for bit.
inline nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
  using nlohmann::json;
  const auto& c = ckpt.config;
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["seed"] = c.seed;
  j["config"] = {{"aggregator", std::string(c.aggregator.name())},
                 {"t", c.aggregator.t()},
                 {"lr", c.lr},
                 {"epochs", c.max_epochs},
                 {"batch", c.batch_size},
                 {"k", c.k},
                 {"hidden", c.hidden},
                 {"hidden_activation", std::string(activation_name(c.activations.hidden))},
                 {"output_activation", std::string(activation_name(c.activations.output))}};
  json aes = json::array();
  for (const auto& ae : ckpt.model.autoencoders) {
    json layers = json::array();
    for (const auto& l : ae.layers) {
      layers.push_back({{"in_dim", l.in_dim()},
                        {"out_dim", l.out_dim()},
                        {"activation", std::string(activation_name(l.activation))},
                        {"weights", l.weights.values()},
                        {"bias", l.bias}});
    }
    aes.push_back({{"dims", ae.dims()}, {"layers", std::move(layers)}});
  }
  j["autoencoders"] = std::move(aes);
  if (ckpt.scaler) {
    j["scaler"] = {{"mean", ckpt.scaler->mean}, {"std", ckpt.scaler->stddev}};
  } else {
    j["scaler"] = nullptr;
  }
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      throw ParseError("checkpoint: unexpected format tag", 0);
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw ParseError("checkpoint: unsupported version", 0);
    }
    Checkpoint ckpt;
    const auto& c = j.at("config");
    ckpt.config.aggregator =
        Aggregator::from_name(c.at("aggregator").get<std::string>(), c.at("t").get<double>());
    ckpt.config.lr = c.at("lr").get<double>();
    ckpt.config.max_epochs = c.at("epochs").get<std::size_t>();
    ckpt.config.batch_size = c.at("batch").get<std::size_t>();
    ckpt.config.k = c.at("k").get<std::size_t>();
    ckpt.config.hidden = c.at("hidden").get<std::vector<std::size_t>>();
    ckpt.config.activations.hidden =
        activation_from_name(c.at("hidden_activation").get<std::string>());
    ckpt.config.activations.output =
        activation_from_name(c.at("output_activation").get<std::string>());
    ckpt.config.seed = j.at("seed").get<std::uint64_t>();

    for (const auto& ae_json : j.at("autoencoders")) {
      MlpParams ae;
      for (const auto& lj : ae_json.at("layers")) {
        const auto in = lj.at("in_dim").get<std::size_t>();
        const auto out = lj.at("out_dim").get<std::size_t>();
        LayerParams layer{Matrix(in, out, lj.at("weights").get<std::vector<double>>()),
                          lj.at("bias").get<std::vector<double>>(),
                          activation_from_name(lj.at("activation").get<std::string>())};
        ae.layers.push_back(std::move(layer));
      }
      if (ae.dims() != ae_json.at("dims").get<std::vector<std::size_t>>()) {
        throw ShapeError("checkpoint: layer shapes disagree with declared dims");
      }
      ckpt.model.autoencoders.push_back(std::move(ae));
    }
    ckpt.model.validate();

    const auto& s = j.at("scaler");
    if (!s.is_null()) {
      ckpt.scaler = Scaler{s.at("mean").get<std::vector<double>>(),
                           s.at("std").get<std::vector<double>>()};
      if (ckpt.scaler->mean.size() != ckpt.model.dim() ||
          ckpt.scaler->stddev.size() != ckpt.model.dim()) {
        throw ShapeError("checkpoint: scaler width does not match the model");
      }
    }
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what(), 0);
  }
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'", 0);
  out << checkpoint_to_json(ckpt).dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what(), 0);
  }
  return checkpoint_from_json(j);
}

}  // namespace derm
