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

// derm: experiment driver.
//
//   derm run      --data FILE | --synthetic SPEC  [training flags]   AUC report
//   derm fig2     [--losses FILE]                                    gradient weight table
//   derm sweep-t  --data FILE | --synthetic SPEC  [--t-min --t-max]  AUC per t
//   derm trace    --data FILE | --synthetic SPEC                     per-epoch class weights
//
// Exit codes: 0 ok, 1 usage or input error, 2 training diverged, 3 metric undefined.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "derm/experiment.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kDiverged = 2, kUndefinedMetric = 3 };

// Flags left unset fall back to the config file, then to built-in defaults.
struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> data, synthetic, label_column, agg, split_mode, standardize, out,
      format, losses, save_model;
  std::optional<double> t, lr, split, t_derm, t_term, t_min, t_max;
  std::optional<std::size_t> k, epochs, batch, repeat, jobs, points;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::size_t>> hidden;
  bool no_header = false;
};

void add_shared(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON file with default values for any flag");
  auto* data = cmd->add_option("--data", f.data, "CSV dataset (numeric cells, optional 'label' column)");
  auto* synth = cmd->add_option("--synthetic", f.synthetic,
                                "synthetic dataset: 'default' or key=value list "
                                "(n_normal, n_anomaly, d, separation, seed)");
  data->excludes(synth);
  cmd->add_flag("--no-header", f.no_header, "CSV input has no header row");
  cmd->add_option("--label-column", f.label_column, "label column name or 0-based index");
  cmd->add_option("--agg", f.agg, "loss aggregation")->check(CLI::IsMember({"erm", "derm", "term"}));
  cmd->add_option("--t", f.t, "tilt: > 0 for derm (default 0.01), < 0 for term (default -1)");
  cmd->add_option("--k", f.k, "number of collaborative autoencoders (default 2)");
  cmd->add_option("--lr", f.lr, "Adam learning rate (default 0.001)");
  cmd->add_option("--epochs", f.epochs, "training epochs (default 100)");
  cmd->add_option("--batch", f.batch, "mini-batch size (default 128)");
  cmd->add_option("--hidden", f.hidden, "encoder hidden widths, mirrored by the decoder")->delimiter(',');
  cmd->add_option("--repeat", f.repeat, "independent runs, seeds seed..seed+repeat-1 (default 1)");
  cmd->add_option("--seed", f.seed, "base seed (default 0)");
  cmd->add_option("--split", f.split, "training fraction (default 0.8)");
  cmd->add_option("--split-mode", f.split_mode, "fixed: one split for all repeats; per-seed: resplit per run")
      ->check(CLI::IsMember({"fixed", "per-seed"}));
  cmd->add_option("--standardize", f.standardize, "z-score features with training statistics (default on)")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--jobs", f.jobs, "parallel runs; 0 = all hardware threads (default 1)");
  cmd->add_option("--out", f.out, "output file (default stdout)");
  cmd->add_option("--format", f.format, "output format")->check(CLI::IsMember({"csv", "json"}));
}

derm::ExperimentSpec resolve(const Flags& f) {
  derm::ExperimentSpec spec;
  if (f.config) {
    std::ifstream in(*f.config);
    if (!in) throw derm::ParseError("cannot open config '" + *f.config + "'", 0);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw derm::ParseError(std::string("config: ") + e.what(), 0);
    }
    derm::apply_config(j, spec);
  }
  if (f.data) {
    spec.data_path = f.data;
    spec.synthetic.reset();
  }
  if (f.synthetic) {
    spec.synthetic = f.synthetic;
    spec.data_path.reset();
  }
  if (f.no_header) spec.has_header = false;
  if (f.label_column) spec.label_column = f.label_column;
  if (f.agg) spec.aggregator = *f.agg;
  if (f.t) spec.t = f.t;
  if (f.k) spec.k = *f.k;
  if (f.lr) spec.lr = *f.lr;
  if (f.epochs) spec.epochs = *f.epochs;
  if (f.batch) spec.batch = *f.batch;
  if (f.hidden) spec.hidden = *f.hidden;
  if (f.repeat) spec.repeat = *f.repeat;
  if (f.seed) spec.seed = *f.seed;
  if (f.split) spec.split = *f.split;
  if (f.split_mode) spec.split_mode = *f.split_mode == "fixed" ? derm::SplitMode::kFixed : derm::SplitMode::kPerSeed;
  if (f.standardize) spec.standardize = *f.standardize == "on";
  if (f.jobs) spec.jobs = *f.jobs;
  if (f.losses) spec.losses_path = f.losses;
  if (f.t_derm) spec.t_derm = *f.t_derm;
  if (f.t_term) spec.t_term = *f.t_term;
  if (f.t_min) spec.t_min = f.t_min;
  if (f.t_max) spec.t_max = f.t_max;
  if (f.points) spec.points = *f.points;
  if (f.save_model) spec.save_model = f.save_model;
  spec.validate();
  return spec;
}

derm::OutputFormat output_format(const Flags& f, derm::OutputFormat fallback) {
  if (!f.format) return fallback;
  return *f.format == "json" ? derm::OutputFormat::kJson : derm::OutputFormat::kCsv;
}

template <typename Writer>
void emit(const Flags& f, Writer&& write) {
  if (!f.out) {
    write(std::cout);
    return;
  }
  std::ofstream out(*f.out);
  if (!out) throw derm::ParseError("cannot write '" + *f.out + "'", 0);
  write(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anomaly detection with collaborative autoencoders trained under ERM, DERM or TERM"};
  app.require_subcommand(1);
  Flags flags;

  auto* run = app.add_subcommand("run", "repeat split/train/score runs and report AUC (JSON by default)");
  add_shared(run, flags);

  auto* fig2 = app.add_subcommand("fig2", "N-normalized DERM and TERM gradient weights of a loss set (CSV)");
  add_shared(fig2, flags);
  fig2->add_option("--losses", flags.losses, "CSV of losses (first non-label column); default: synthetic set");
  fig2->add_option("--t-derm", flags.t_derm, "DERM tilt (default 1)");
  fig2->add_option("--t-term", flags.t_term, "TERM tilt (default -1)");

  auto* sweep = app.add_subcommand("sweep-t", "mean/std AUC over a log-spaced grid of t (CSV)");
  add_shared(sweep, flags);
  sweep->add_option("--t-min", flags.t_min, "first grid point (derm default 0.001, term -1)");
  sweep->add_option("--t-max", flags.t_max, "last grid point (derm default 10, term -0.01)");
  sweep->add_option("--points", flags.points, "grid size (default 10)");

  auto* trace = app.add_subcommand("trace", "per-epoch mean weights of normal vs anomalous rows (CSV)");
  add_shared(trace, flags);
  trace->add_option("--save-model", flags.save_model, "write the trained model checkpoint (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    const auto spec = resolve(flags);
    if (run->parsed()) {
      const auto report = derm::cmd_run(spec);
      emit(flags, [&](std::ostream& os) {
        derm::write_report(os, report, output_format(flags, derm::OutputFormat::kJson));
      });
    } else if (fig2->parsed()) {
      const auto rows = derm::cmd_fig2(spec);
      emit(flags, [&](std::ostream& os) {
        derm::write_fig2(os, rows, output_format(flags, derm::OutputFormat::kCsv));
      });
    } else if (sweep->parsed()) {
      const auto rows = derm::cmd_sweep_t(spec);
      emit(flags, [&](std::ostream& os) {
        derm::write_sweep(os, rows, output_format(flags, derm::OutputFormat::kCsv));
      });
    } else if (trace->parsed()) {
      const auto result = derm::cmd_trace(spec);
      emit(flags, [&](std::ostream& os) {
        derm::write_trace(os, result, output_format(flags, derm::OutputFormat::kCsv));
      });
    }
  } catch (const derm::TrainingDivergedError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const derm::UndefinedMetricError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUndefinedMetric;
  } catch (const derm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kOk;
}
