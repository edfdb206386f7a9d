/*
 * Copyright 2026 The fedadv Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line front end: train, attack, sweep and report.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedadv/config.h"
#include "fedadv/csv.h"
#include "fedadv/experiment.h"

namespace {

using fedadv::ConfigError;
using fedadv::ExperimentConfig;

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> preset;
  bool no_cache = false;
};

void AddCommonOptions(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "key=value configuration file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "root seed for every random stream");
  cmd->add_option("--out", opts.out, "output directory");
  cmd->add_option("--preset", opts.preset, "model and schedule preset")
      ->check(CLI::IsMember({"paper-cnn", "desk-cnn"}));
  cmd->add_flag("--no-cache", opts.no_cache, "retrain even when cached weights exist");
}

ExperimentConfig LoadConfig(const CommonOptions& opts) {
  fedadv::KeyValueConfig kv;
  if (!opts.config_path.empty()) kv = fedadv::KeyValueConfig::Load(opts.config_path);
  if (opts.seed) kv.Set("seed", std::to_string(*opts.seed));
  if (opts.out) kv.Set("output.dir", *opts.out);
  if (opts.no_cache) kv.Set("output.cache", "false");
  return fedadv::ExperimentConfigFromKeyValues(kv, opts.preset);
}

std::string Percent(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * v);
  return buf;
}

void PrintReport(const fedadv::ExperimentReport& r) {
  std::cout << fedadv::AttackKindName(r.attack.kind) << " eps=" << r.attack.epsilon
            << " alpha=" << r.attack.alpha << " iters=" << r.attack.iterations;
  if (r.sweep_point) {
    std::cout << "  [" << fedadv::SweepParameterName(r.sweep_point->parameter) << "="
              << r.sweep_point->value << "]";
  }
  std::cout << "\n  ACC " << Percent(r.acc) << "  AASR " << Percent(r.aasr) << "  AETR "
            << Percent(r.aetr) << "  diag " << Percent(r.mean_diagonal_asr) << "  benign "
            << Percent(r.mean_benign_asr) << "\n";
  const std::size_t n = r.transfer.size();
  for (std::size_t s = 0; s < n; ++s) {
    std::cout << "  adversary " << s << ":";
    for (std::size_t t = 0; t < n; ++t) {
      std::cout << "  " << (r.transfer.populated(s, t) ? Percent(r.transfer.asr(s, t)) : "-");
    }
    std::cout << "\n";
  }
}

int RunTrain(const CommonOptions& opts) {
  const ExperimentConfig config = LoadConfig(opts);
  const fedadv::PreparedData data = fedadv::PrepareData(config);
  const fedadv::TrainedFederation trained = fedadv::TrainFederation(config, data);
  std::filesystem::create_directories(config.output_dir);
  fedadv::WriteRoundsCsv(trained.history, config.output_dir / "rounds.csv");
  if (!trained.history.empty()) {
    const fedadv::RoundRecord& last = trained.history.back();
    std::cout << "round " << last.round << ": train loss " << last.global_train_loss
              << ", global val acc " << Percent(last.global_val_acc)
              << (trained.loaded_from_cache ? " (cached)" : "") << "\n";
  }
  std::cout << "wrote " << (config.output_dir / "rounds.csv").string() << "\n";
  return 0;
}

int RunAttack(const CommonOptions& opts) {
  ExperimentConfig config = LoadConfig(opts);
  config.sweep.reset();
  const std::vector<fedadv::ExperimentReport> reports = {fedadv::RunExperiment(config)};
  PrintReport(reports.front());
  const fedadv::EmittedFiles files = fedadv::EmitCsv(reports, config, config.output_dir);
  std::cout << "wrote " << files.results.string() << "\n";
  return 0;
}

int RunSweepCommand(const CommonOptions& opts, const std::string& parameter,
                    const std::vector<double>& values) {
  ExperimentConfig config = LoadConfig(opts);
  if (!parameter.empty() || !values.empty()) {
    fedadv::SweepSpec spec = config.sweep.value_or(fedadv::SweepSpec{});
    if (!parameter.empty()) {
      fedadv::SweepParameter p;
      try {
        p = fedadv::ParseSweepParameter(parameter);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      // A new parameter does not inherit the config's grid.
      if (!config.sweep || config.sweep->parameter != p) {
        spec.values = fedadv::DefaultSweepGrid(p);
      }
      spec.parameter = p;
    }
    if (!values.empty()) spec.values = values;
    config.sweep = spec;
  }
  if (!config.sweep || config.sweep->values.empty()) {
    throw ConfigError("sweep needs sweep.parameter and sweep.values (or --parameter/--values)");
  }
  config.Validate();
  const std::vector<fedadv::ExperimentReport> reports = fedadv::RunSweep(config);
  for (const auto& r : reports) PrintReport(r);
  const fedadv::EmittedFiles files = fedadv::EmitCsv(reports, config, config.output_dir);
  std::cout << "wrote " << files.sweep.string() << "\n";
  return 0;
}

int RunReport(const CommonOptions& opts) {
  const ExperimentConfig config = LoadConfig(opts);
  const std::filesystem::path summary = config.output_dir / "summary.csv";
  if (!std::filesystem::exists(summary)) {
    throw std::runtime_error("no summary.csv in " + config.output_dir.string() +
                             "; run attack or sweep first");
  }
  const std::vector<fedadv::CsvRow> rows = fedadv::ReadCsv(summary);
  for (const fedadv::CsvRow& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::cout << (i ? "\t" : "") << row[i];
    }
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning adversarial transferability experiments"};
  app.set_version_flag("--version", fedadv::Version());
  app.require_subcommand(1);

  CommonOptions train_opts, attack_opts, sweep_opts, report_opts;
  std::string sweep_parameter;
  std::vector<double> sweep_values;

  CLI::App* train = app.add_subcommand("train", "federated training only");
  AddCommonOptions(train, train_opts);
  CLI::App* attack = app.add_subcommand("attack", "train (or load) and run the attack grid point");
  AddCommonOptions(attack, attack_opts);
  CLI::App* sweep = app.add_subcommand("sweep", "attack sweep over one parameter");
  AddCommonOptions(sweep, sweep_opts);
  sweep->add_option("--parameter", sweep_parameter, "epsilon, alpha or iterations");
  sweep->add_option("--values", sweep_values, "grid values")->delimiter(',');
  CLI::App* report = app.add_subcommand("report", "print summary.csv of an output directory");
  AddCommonOptions(report, report_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (train->parsed()) return RunTrain(train_opts);
    if (attack->parsed()) return RunAttack(attack_opts);
    if (sweep->parsed()) return RunSweepCommand(sweep_opts, sweep_parameter, sweep_values);
    if (report->parsed()) return RunReport(report_opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
