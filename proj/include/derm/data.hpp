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
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <variant>
#include <vector>

#include "derm/aggregation.hpp"
#include "derm/errors.hpp"
#include "derm/numeric.hpp"

namespace derm {

// Feature rows plus optional 0/1 labels (1 = anomaly). Labels are for
// evaluation and tracing only.
struct Dataset {
  Matrix features;
  std::optional<std::vector<int>> labels;
  std::string name;

  std::size_t size() const noexcept { return features.rows(); }
  std::size_t dim() const noexcept { return features.cols(); }
  bool has_labels() const noexcept { return labels.has_value(); }

  std::size_t anomaly_count() const {
    if (!labels) return 0;
    return static_cast<std::size_t>(std::count(labels->begin(), labels->end(), 1));
  }

  void validate() const {
    if (!features.all_finite()) throw DomainError("dataset '" + name + "': non-finite feature");
    if (labels) {
      if (labels->size() != features.rows()) {
        throw ShapeError("dataset '" + name + "': label count does not match row count");
      }
      for (int l : *labels) {
        if (l != 0 && l != 1) throw DomainError("dataset '" + name + "': label outside {0,1}");
      }
    }
  }

  Dataset subset(std::span<const std::size_t> index) const {
    Dataset out{gather_rows(features, index), std::nullopt, name};
    if (labels) {
      std::vector<int> l(index.size());
      for (std::size_t i = 0; i < index.size(); ++i) l[i] = (*labels)[index[i]];
      out.labels = std::move(l);
    }
    return out;
  }
};

// Which column of a CSV holds labels. By default a header column named
// "label" is used when present.
struct LabelColumn {
  enum class Mode { kAuto, kNone, kByName, kByIndex };
  Mode mode = Mode::kAuto;
  std::string name;
  std::size_t index = 0;

  static LabelColumn automatic() { return {}; }
  static LabelColumn none() { return {Mode::kNone, {}, 0}; }
  static LabelColumn by_name(std::string n) { return {Mode::kByName, std::move(n), 0}; }
  static LabelColumn by_index(std::size_t i) { return {Mode::kByIndex, {}, i}; }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// Comma-separated numeric table. Labels must be 0 or 1. Errors carry the
// 1-based line number of the offending row.
inline Dataset read_csv(std::istream& in, bool has_header,
                        const LabelColumn& label = LabelColumn::automatic(),
                        std::string name = "csv") {
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> label_idx;
  std::size_t width = 0;
  bool width_known = false;

  if (label.mode == LabelColumn::Mode::kByIndex) label_idx = label.index;

  if (has_header) {
    while (std::getline(in, line)) {
      ++line_no;
      if (!detail::trim(line).empty()) break;
    }
    const auto header = detail::split_fields(line);
    width = header.size();
    width_known = true;
    if (label.mode == LabelColumn::Mode::kAuto || label.mode == LabelColumn::Mode::kByName) {
      const std::string_view wanted = label.mode == LabelColumn::Mode::kAuto ? "label" : label.name;
      for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == wanted) label_idx = j;
      }
      if (!label_idx && label.mode == LabelColumn::Mode::kByName) {
        throw ParseError("no column named '" + label.name + "' in header", line_no);
      }
    }
  } else if (label.mode == LabelColumn::Mode::kByName) {
    throw ParseError("label column selected by name but file has no header", 0);
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line);
    if (!width_known) {
      width = fields.size();
      width_known = true;
    }
    if (fields.size() != width) {
      throw ParseError("expected " + std::to_string(width) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    if (label_idx && *label_idx >= width) {
      throw ParseError("label column index " + std::to_string(*label_idx) + " out of range",
                       line_no);
    }
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const auto v = detail::parse_double(fields[j]);
      if (!v || !std::isfinite(*v)) {
        throw ParseError("non-numeric cell '" + std::string(fields[j]) + "' in column " +
                             std::to_string(j + 1),
                         line_no);
      }
      if (label_idx && j == *label_idx) {
        if (*v != 0.0 && *v != 1.0) {
          throw ParseError("label '" + std::string(fields[j]) + "' is not 0 or 1", line_no);
        }
        labels.push_back(static_cast<int>(*v));
      } else {
        values.push_back(*v);
      }
    }
    ++rows;
  }
  const std::size_t cols = label_idx ? width - 1 : width;
  Dataset ds{Matrix(rows, rows == 0 ? 0 : cols, std::move(values)), std::nullopt, std::move(name)};
  if (label_idx) ds.labels = std::move(labels);
  return ds;
}

inline Dataset load_csv(const std::string& path, bool has_header,
                        const LabelColumn& label = LabelColumn::automatic()) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  std::string name = path;
  if (const auto slash = name.find_last_of('/'); slash != std::string::npos) {
    name = name.substr(slash + 1);
  }
  if (const auto dot = name.find_last_of('.'); dot != std::string::npos && dot > 0) {
    name = name.substr(0, dot);
  }
  return read_csv(in, has_header, label, name);
}

// Header f0..f{d-1}[,label]; values use shortest round-trip formatting.
inline void write_csv(std::ostream& out, const Dataset& ds) {
  for (std::size_t j = 0; j < ds.dim(); ++j) out << (j ? "," : "") << 'f' << j;
  if (ds.labels) out << (ds.dim() ? "," : "") << "label";
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto r = ds.features.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) out << (j ? "," : "") << detail::format_double(r[j]);
    if (ds.labels) out << (r.empty() ? "" : ",") << (*ds.labels)[i];
    out << '\n';
  }
}

inline void save_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'", 0);
  write_csv(out, ds);
}

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

// Random partition; the training part gets round(n * train_fraction) rows,
// clamped so that both parts are non-empty.
inline TrainTestSplit split(const Dataset& ds, double train_fraction, Rng& rng) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ParameterError("split: train fraction must lie in (0, 1), got " +
                         std::to_string(train_fraction));
  }
  const std::size_t n = ds.size();
  if (n < 2) throw ParameterError("split: need at least two rows");
  auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  const auto perm = permutation(rng, n);
  std::vector<std::size_t> train_idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test_idx(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  return {ds.subset(train_idx), ds.subset(test_idx)};
}

// Per-feature z-scoring. Constant features keep std = 1, so they are only
// centred.
struct Scaler {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Scaler fit(const Matrix& x) {
    if (x.rows() == 0) throw ShapeError("Scaler::fit: empty data");
    Scaler s{column_mean(x), column_std(x)};
    for (double& sd : s.stddev) {
      if (!(sd > 0.0)) sd = 1.0;
    }
    return s;
  }

  Matrix transform(const Matrix& x) const {
    if (x.cols() != mean.size()) {
      throw ShapeError("Scaler::transform: expected " + std::to_string(mean.size()) +
                       " features, got " + std::to_string(x.cols()));
    }
    Matrix out = x;
    for (std::size_t i = 0; i < out.rows(); ++i) {
      auto r = out.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) r[j] = (r[j] - mean[j]) / stddev[j];
    }
    return out;
  }

  Dataset transform(const Dataset& ds) const {
    return {transform(ds.features), ds.labels, ds.name};
  }
};

struct Standardized {
  Scaler scaler;
  Dataset train;
  std::vector<Dataset> others;
};

// Fits on `train` only and applies the same transform to every dataset.
inline Standardized standardize(const Dataset& train, std::span<const Dataset> others = {}) {
  Standardized out{Scaler::fit(train.features), {}, {}};
  out.train = out.scaler.transform(train);
  out.others.reserve(others.size());
  for (const auto& ds : others) out.others.push_back(out.scaler.transform(ds));
  return out;
}

struct LabeledLosses {
  LossVector losses;
  std::vector<int> labels;
};

inline constexpr std::size_t kSynthNormalCount = 200;
inline constexpr std::size_t kSynthAnomalyCount = 10;

// Simulated reconstruction losses: 200 normals ~ Normal(0.03, sd 0.002)
// followed by 10 anomalies ~ Normal(0.06, sd 0.005). The second parameter is a
// standard deviation. Non-positive draws are raised to 1e-6.
inline LabeledLosses synth_loss_set(Rng& rng) {
  LabeledLosses out;
  out.losses = sample_normal(rng, 0.03, 0.002, kSynthNormalCount);
  const auto anomalies = sample_normal(rng, 0.06, 0.005, kSynthAnomalyCount);
  out.losses.insert(out.losses.end(), anomalies.begin(), anomalies.end());
  for (double& f : out.losses) f = std::max(f, 1e-6);
  out.labels.assign(kSynthNormalCount, 0);
  out.labels.resize(kSynthNormalCount + kSynthAnomalyCount, 1);
  return out;
}

// Normals come from two Gaussian clusters with centres +-mu, each concentrated
// near a random 2-D plane (x = centre + B z + 0.1 e). Anomalies are uniform in
// the per-axis box of half-width separation * (|mu_j| + 3 sd_j), which
// encloses the clusters for separation >= 1. Rows are shuffled.
inline Dataset synth_anomaly_dataset(std::size_t n_normal, std::size_t n_anomaly, std::size_t d,
                                     double separation, Rng& rng) {
  if (d == 0) throw ParameterError("synth_anomaly_dataset: d must be >= 1");
  if (!(separation > 0.0) || !std::isfinite(separation)) {
    throw ParameterError("synth_anomaly_dataset: separation must be > 0");
  }
  constexpr std::size_t kLatent = 2;
  constexpr double kNoise = 0.1;
  std::vector<double> centre(d);
  for (double& c : centre) c = rng.uniform(-2.0, 2.0);
  Matrix basis(d, kLatent);
  for (double& b : basis.data()) b = rng.normal();
  std::vector<double> half_width(d);
  for (std::size_t j = 0; j < d; ++j) {
    double var = kNoise * kNoise;
    for (std::size_t k = 0; k < kLatent; ++k) var += basis(j, k) * basis(j, k);
    half_width[j] = separation * (std::abs(centre[j]) + 3.0 * std::sqrt(var));
  }

  const std::size_t n = n_normal + n_anomaly;
  Matrix x(n, d);
  std::vector<int> labels(n, 0);
  for (std::size_t i = 0; i < n_normal; ++i) {
    const double sign = rng.below(2) == 0 ? 1.0 : -1.0;
    double z[kLatent];
    for (double& zk : z) zk = rng.normal();
    for (std::size_t j = 0; j < d; ++j) {
      double v = sign * centre[j] + kNoise * rng.normal();
      for (std::size_t k = 0; k < kLatent; ++k) v += basis(j, k) * z[k];
      x(i, j) = v;
    }
  }
  for (std::size_t i = n_normal; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(i, j) = rng.uniform(-half_width[j], half_width[j]);
    labels[i] = 1;
  }
  const auto perm = permutation(rng, n);
  Dataset ds{std::move(x), std::move(labels), "synthetic"};
  return ds.subset(perm);
}

}  // namespace derm
