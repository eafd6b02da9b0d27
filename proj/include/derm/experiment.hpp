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
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

#include "json.hpp"

#include "derm/aggregation.hpp"
#include "derm/checkpoint.hpp"
#include "derm/collaborative.hpp"
#include "derm/data.hpp"
#include "derm/errors.hpp"
#include "derm/metrics.hpp"
#include "derm/numeric.hpp"

namespace derm {

// Parameters of synth_anomaly_dataset(). Text form is "default" or a comma
// list of key=value pairs over n_normal, n_anomaly, d, separation, seed, with
// unspecified keys taking the defaults below.
struct SyntheticSpec {
  std::size_t n_normal = 950;
  std::size_t n_anomaly = 50;
  std::size_t d = 8;
  double separation = 1.0;
  std::uint64_t seed = 1;

  static SyntheticSpec parse(std::string_view text) {
    SyntheticSpec s;
    if (text == "default" || text.empty()) return s;
    for (auto field : detail::split_fields(text)) {
      const auto eq = field.find('=');
      if (eq == std::string_view::npos) {
        throw ParameterError("synthetic spec: expected key=value, got '" + std::string(field) + "'");
      }
      const auto key = detail::trim(field.substr(0, eq));
      const auto value = detail::parse_double(detail::trim(field.substr(eq + 1)));
      if (!value || !std::isfinite(*value) || *value < 0.0) {
        throw ParameterError("synthetic spec: bad value for '" + std::string(key) + "'");
      }
      const bool integral = *value == std::floor(*value);
      auto count = [&] {
        if (!integral) throw ParameterError("synthetic spec: '" + std::string(key) + "' must be an integer");
        return static_cast<std::size_t>(*value);
      };
      if (key == "n_normal") {
        s.n_normal = count();
      } else if (key == "n_anomaly") {
        s.n_anomaly = count();
      } else if (key == "d") {
        s.d = count();
      } else if (key == "separation") {
        s.separation = *value;
      } else if (key == "seed") {
        s.seed = static_cast<std::uint64_t>(count());
      } else {
        throw ParameterError("synthetic spec: unknown key '" + std::string(key) + "'");
      }
    }
    return s;
  }

  Dataset generate() const {
    Rng rng(seed);
    return synth_anomaly_dataset(n_normal, n_anomaly, d, separation, rng);
  }
};

enum class SplitMode {
  kFixed,    // one split, drawn from the base seed, shared by all repeats
  kPerSeed,  // every repeat draws its own split
};

enum class OutputFormat { kCsv, kJson };

// Everything an experiment subcommand needs. Field names double as the keys
// of the optional JSON config file.
struct ExperimentSpec {
  std::optional<std::string> data_path;
  std::optional<std::string> synthetic;  // SyntheticSpec text
  bool has_header = true;
  std::optional<std::string> label_column;

  std::string aggregator = "derm";
  std::optional<double> t;  // default depends on aggregator, see resolved_t()
  std::size_t k = 2;
  double lr = 1e-3;
  std::size_t epochs = 100;
  std::size_t batch = 128;
  std::vector<std::size_t> hidden;
  std::size_t repeat = 1;
  std::uint64_t seed = 0;
  double split = 0.8;
  SplitMode split_mode = SplitMode::kFixed;
  bool standardize = true;
  std::size_t jobs = 1;  // 0: one per hardware thread

  // fig2
  std::optional<std::string> losses_path;
  double t_derm = 1.0;
  double t_term = -1.0;

  // sweep-t
  std::optional<double> t_min;
  std::optional<double> t_max;
  std::size_t points = 10;

  std::optional<std::string> save_model;  // trace

  double resolved_t() const {
    if (t) return *t;
    return aggregator == "term" ? -1.0 : 0.01;
  }

  Aggregator make_aggregator() const { return make_aggregator(resolved_t()); }
  Aggregator make_aggregator(double tilt) const { return Aggregator::from_name(aggregator, tilt); }

  TrainConfig train_config(const Aggregator& agg, std::uint64_t run_seed) const {
    TrainConfig c;
    c.aggregator = agg;
    c.lr = lr;
    c.max_epochs = epochs;
    c.batch_size = batch;
    c.k = k;
    c.seed = run_seed;
    c.hidden = hidden;
    c.validate();
    return c;
  }

  void validate() const {
    if (data_path && synthetic) throw ParameterError("--data and --synthetic are mutually exclusive");
    if (repeat == 0) throw ParameterError("repeat must be >= 1");
    if (!(split > 0.0 && split < 1.0)) throw ParameterError("split must lie in (0, 1)");
    if (points < 2) throw ParameterError("points must be >= 2");
    if (synthetic) (void)SyntheticSpec::parse(*synthetic);
  }
};

// Applies keys present in `j` on top of `spec`.
inline void apply_config(const nlohmann::json& j, ExperimentSpec& spec) {
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key) || j.at(key).is_null()) return;
    using T = std::remove_reference_t<decltype(field)>;
    if constexpr (requires { typename T::value_type; } && !std::is_same_v<T, std::string> &&
                  !std::is_same_v<T, std::vector<std::size_t>>) {
      field = j.at(key).get<typename T::value_type>();
    } else {
      field = j.at(key).get<T>();
    }
  };
  try {
    for (const auto& [key, _] : j.items()) {
      static const char* kKnown[] = {
          "data",   "synthetic", "header", "label_column", "agg",        "t",       "k",
          "lr",     "epochs",    "batch",  "hidden",       "repeat",     "seed",    "split",
          "split_mode", "standardize", "jobs", "losses", "t_derm", "t_term", "t_min", "t_max",
          "points", "save_model"};
      if (std::find_if(std::begin(kKnown), std::end(kKnown),
                       [&](const char* k) { return key == k; }) == std::end(kKnown)) {
        throw ParseError("config: unknown key '" + key + "'", 0);
      }
    }
    get("data", spec.data_path);
    get("synthetic", spec.synthetic);
    get("header", spec.has_header);
    get("label_column", spec.label_column);
    get("agg", spec.aggregator);
    get("t", spec.t);
    get("k", spec.k);
    get("lr", spec.lr);
    get("epochs", spec.epochs);
    get("batch", spec.batch);
    get("hidden", spec.hidden);
    get("repeat", spec.repeat);
    get("seed", spec.seed);
    get("split", spec.split);
    get("jobs", spec.jobs);
    get("losses", spec.losses_path);
    get("t_derm", spec.t_derm);
    get("t_term", spec.t_term);
    get("t_min", spec.t_min);
    get("t_max", spec.t_max);
    get("points", spec.points);
    get("save_model", spec.save_model);
    if (j.contains("split_mode")) {
      const auto m = j.at("split_mode").get<std::string>();
      if (m != "fixed" && m != "per-seed") throw ParseError("config: split_mode must be fixed or per-seed", 0);
      spec.split_mode = m == "fixed" ? SplitMode::kFixed : SplitMode::kPerSeed;
    }
    if (j.contains("standardize")) {
      const auto& v = j.at("standardize");
      spec.standardize = v.is_boolean() ? v.get<bool>() : v.get<std::string>() == "on";
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what(), 0);
  }
}

// A label column given as a non-negative integer selects by index.
inline LabelColumn resolve_label_column(const std::optional<std::string>& column) {
  if (!column) return LabelColumn::automatic();
  const auto idx = detail::parse_double(*column);
  return idx && *idx >= 0 && *idx == std::floor(*idx)
             ? LabelColumn::by_index(static_cast<std::size_t>(*idx))
             : LabelColumn::by_name(*column);
}

inline Dataset load_experiment_data(const ExperimentSpec& spec) {
  if (spec.data_path) {
    Dataset ds = load_csv(*spec.data_path, spec.has_header, resolve_label_column(spec.label_column));
    ds.validate();
    return ds;
  }
  return SyntheticSpec::parse(spec.synthetic.value_or("default")).generate();
}

// Calls fn(i) for i in [0, count) on up to `jobs` threads (0 = hardware
// concurrency). The first exception by index is rethrown after all finish.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t jobs, Fn&& fn) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, count);
  std::vector<std::exception_ptr> errors(count);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& w : workers) w.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct RunOutcome {
  double auc = 0.0;
  std::size_t n_test = 0;
  std::size_t n_anomalies = 0;
};

// split -> standardize -> train -> score -> AUC for one seed. Training sees
// only the features of the training part.
inline RunOutcome run_once(const Dataset& data, const ExperimentSpec& spec, const Aggregator& agg,
                           std::uint64_t run_seed) {
  if (!data.labels) throw UndefinedMetricError("AUC needs a labeled dataset");
  Rng split_rng(spec.split_mode == SplitMode::kFixed ? spec.seed : run_seed);
  auto parts = split(data, spec.split, split_rng);
  if (spec.standardize) {
    auto z = standardize(parts.train, std::span<const Dataset>(&parts.test, 1));
    parts.train = std::move(z.train);
    parts.test = std::move(z.others.front());
  }
  const auto trained = train(parts.train.features, spec.train_config(agg, run_seed));
  const auto scores = score(trained.model, parts.test);
  return {auc(scores, *parts.test.labels), parts.test.size(), parts.test.anomaly_count()};
}

inline std::vector<std::uint64_t> seed_list(const ExperimentSpec& spec) {
  std::vector<std::uint64_t> seeds(spec.repeat);
  for (std::size_t r = 0; r < spec.repeat; ++r) seeds[r] = spec.seed + r;
  return seeds;
}

inline EvalReport cmd_run(const ExperimentSpec& spec, const Dataset& data) {
  spec.validate();
  const Aggregator agg = spec.make_aggregator();
  const auto seeds = seed_list(spec);
  std::vector<RunOutcome> outcomes(seeds.size());
  parallel_for(seeds.size(), spec.jobs,
               [&](std::size_t r) { outcomes[r] = run_once(data, spec, agg, seeds[r]); });
  std::vector<double> aucs;
  for (const auto& o : outcomes) aucs.push_back(o.auc);
  EvalReport report = summarize_runs(aucs);
  report.dataset = data.name;
  report.aggregator = std::string(agg.name());
  report.t = agg.t();
  report.k = spec.k;
  report.seeds = seeds;
  report.n_test = outcomes.front().n_test;
  report.n_anomalies = outcomes.front().n_anomalies;
  return report;
}

inline EvalReport cmd_run(const ExperimentSpec& spec) { return cmd_run(spec, load_experiment_data(spec)); }

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["dataset"] = r.dataset;
  j["aggregator"] = r.aggregator;
  j["t"] = r.aggregator == "erm" ? nlohmann::json(nullptr) : nlohmann::json(r.t);
  j["k"] = r.k;
  j["seed_list"] = r.seeds;
  j["auc_mean"] = r.auc_mean;
  j["auc_std"] = r.auc_std;
  j["per_seed_auc"] = r.per_run_auc;
  j["n_test"] = r.n_test;
  j["n_anomalies"] = r.n_anomalies;
  return j;
}

inline void write_report(std::ostream& out, const EvalReport& r, OutputFormat format) {
  if (format == OutputFormat::kJson) {
    out << report_to_json(r).dump(2) << '\n';
    return;
  }
  out << "dataset,aggregator,t,k,seed,auc\n";
  for (std::size_t i = 0; i < r.seeds.size(); ++i) {
    out << r.dataset << ',' << r.aggregator << ',' << detail::format_double(r.t) << ',' << r.k
        << ',' << r.seeds[i] << ',' << detail::format_double(r.per_run_auc[i]) << '\n';
  }
}

struct Fig2Row {
  std::size_t index = 0;
  double loss = 0.0;
  std::optional<int> label;
  double derm_weight = 0.0;  // N * w_i
  double term_weight = 0.0;  // N * w_i
};

// Per-sample DERM and TERM gradient weights scaled by N, for a synthetic loss
// set or for losses read from a CSV (first non-label column).
inline std::vector<Fig2Row> fig2_table(std::span<const double> losses,
                                       std::optional<std::span<const int>> labels, double t_derm,
                                       double t_term) {
  const auto wd = gradient_weights(Aggregator::derm(t_derm), losses);
  const auto wt = gradient_weights(Aggregator::term(t_term), losses);
  const auto n = static_cast<double>(losses.size());
  std::vector<Fig2Row> rows(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) {
    rows[i] = {i, losses[i], labels ? std::optional<int>((*labels)[i]) : std::nullopt, n * wd[i],
               n * wt[i]};
  }
  return rows;
}

inline std::vector<Fig2Row> cmd_fig2(const ExperimentSpec& spec) {
  if (spec.losses_path) {
    Dataset ds = load_csv(*spec.losses_path, spec.has_header, resolve_label_column(spec.label_column));
    if (ds.dim() == 0 || ds.size() == 0) throw ParseError("loss file has no loss column", 0);
    std::vector<double> losses(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) losses[i] = ds.features(i, 0);
    if (ds.labels) return fig2_table(losses, std::span<const int>(*ds.labels), spec.t_derm, spec.t_term);
    return fig2_table(losses, std::nullopt, spec.t_derm, spec.t_term);
  }
  Rng rng(spec.seed);
  const auto set = synth_loss_set(rng);
  return fig2_table(set.losses, std::span<const int>(set.labels), spec.t_derm, spec.t_term);
}

inline void write_fig2(std::ostream& out, std::span<const Fig2Row> rows, OutputFormat format) {
  if (format == OutputFormat::kJson) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) {
      j.push_back({{"index", r.index},
                   {"loss", r.loss},
                   {"label", r.label ? nlohmann::json(*r.label) : nlohmann::json(nullptr)},
                   {"derm_weight_normalized", r.derm_weight},
                   {"term_weight_normalized", r.term_weight}});
    }
    out << j.dump(2) << '\n';
    return;
  }
  out << "index,loss,label,derm_weight_normalized,term_weight_normalized\n";
  for (const auto& r : rows) {
    out << r.index << ',' << detail::format_double(r.loss) << ','
        << (r.label ? std::to_string(*r.label) : std::string()) << ','
        << detail::format_double(r.derm_weight) << ',' << detail::format_double(r.term_weight)
        << '\n';
  }
}

// `points` values log-spaced in |t| between lo and hi, both included exactly.
// lo and hi must be non-zero and share a sign.
inline std::vector<double> log_grid(double lo, double hi, std::size_t points) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || lo == 0.0 || hi == 0.0 || (lo < 0) != (hi < 0)) {
    throw ParameterError("t grid must not include or cross 0");
  }
  if (points < 2) throw ParameterError("t grid needs at least two points");
  const double sign = lo < 0 ? -1.0 : 1.0;
  const double a = std::log(std::abs(lo));
  const double b = std::log(std::abs(hi));
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) {
    grid[i] = sign * std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1));
  }
  grid.front() = lo;
  grid.back() = hi;
  return grid;
}

struct SweepRow {
  double t = 0.0;
  double auc_mean = 0.0;
  double auc_std = 0.0;
};

// Default ranges: DERM t in [0.001, 10], TERM t in [-1, -0.01].
inline std::vector<SweepRow> cmd_sweep_t(const ExperimentSpec& spec, const Dataset& data) {
  spec.validate();
  if (spec.aggregator == "erm") throw ParameterError("sweep-t needs --agg derm or term");
  const bool is_term = spec.aggregator == "term";
  const double lo = spec.t_min.value_or(is_term ? -1.0 : 0.001);
  const double hi = spec.t_max.value_or(is_term ? -0.01 : 10.0);
  const auto grid = log_grid(lo, hi, spec.points);
  std::vector<Aggregator> aggs;
  for (double t : grid) aggs.push_back(spec.make_aggregator(t));

  const auto seeds = seed_list(spec);
  std::vector<double> aucs(grid.size() * seeds.size());
  parallel_for(aucs.size(), spec.jobs, [&](std::size_t i) {
    const std::size_t g = i / seeds.size();
    const std::size_t r = i % seeds.size();
    aucs[i] = run_once(data, spec, aggs[g], seeds[r]).auc;
  });

  std::vector<SweepRow> rows;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto summary = summarize_runs(
        std::span<const double>(aucs.data() + g * seeds.size(), seeds.size()));
    rows.push_back({grid[g], summary.auc_mean, summary.auc_std});
  }
  return rows;
}

inline std::vector<SweepRow> cmd_sweep_t(const ExperimentSpec& spec) {
  return cmd_sweep_t(spec, load_experiment_data(spec));
}

inline void write_sweep(std::ostream& out, std::span<const SweepRow> rows, OutputFormat format) {
  if (format == OutputFormat::kJson) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) j.push_back({{"t", r.t}, {"auc_mean", r.auc_mean}, {"auc_std", r.auc_std}});
    out << j.dump(2) << '\n';
    return;
  }
  out << "t,auc_mean,auc_std\n";
  for (const auto& r : rows) {
    out << detail::format_double(r.t) << ',' << detail::format_double(r.auc_mean) << ','
        << detail::format_double(r.auc_std) << '\n';
  }
}

// Trains once on the training part with weight tracing on. Uses the first
// seed of the run.
inline WeightTrace cmd_trace(const ExperimentSpec& spec, const Dataset& data) {
  spec.validate();
  if (!data.labels) throw UndefinedMetricError("trace needs a labeled dataset");
  Rng split_rng(spec.seed);
  auto parts = split(data, spec.split, split_rng);
  std::optional<Scaler> scaler;
  if (spec.standardize) {
    auto z = standardize(parts.train);
    scaler = z.scaler;
    parts.train = std::move(z.train);
  }
  TrainConfig config = spec.train_config(spec.make_aggregator(), spec.seed);
  config.trace_weights = true;
  auto result = train(parts.train, config);
  if (spec.save_model) save_checkpoint(*spec.save_model, {result.model, config, scaler});
  return std::move(result.trace);
}

inline WeightTrace cmd_trace(const ExperimentSpec& spec) { return cmd_trace(spec, load_experiment_data(spec)); }

inline void write_trace(std::ostream& out, const WeightTrace& trace, OutputFormat format) {
  if (format == OutputFormat::kJson) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : trace.records) {
      j.push_back({{"epoch", r.epoch},
                   {"mean_weight_normal", num(r.mean_weight_normal)},
                   {"mean_weight_anomalous", num(r.mean_weight_anomalous)},
                   {"aggregate_loss", num(r.aggregate_loss)}});
    }
    out << j.dump(2) << '\n';
    return;
  }
  trace.write_csv(out);
}

}  // namespace derm
