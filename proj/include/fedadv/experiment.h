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
#ifndef FEDADV_EXPERIMENT_H_
#define FEDADV_EXPERIMENT_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedadv/attacks.h"
#include "fedadv/config.h"
#include "fedadv/data.h"
#include "fedadv/fed.h"
#include "fedadv/metrics.h"
#include "fedadv/model.h"

namespace fedadv {

std::string Version();

// Wraps a failure with the experiment step that raised it.
class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PreparedData {
  std::shared_ptr<const ImageDataset> dataset;
  ModelArchitecture arch;
  // Train shards view the flip/rotation-augmented copy when augmentation is
  // on; test shards always view the original samples.
  std::vector<ClientShards> shards;
};

// Loads or generates the dataset, partitions it and builds the architecture
// (with a leading normalization layer when configured).
PreparedData PrepareData(const ExperimentConfig& config);

struct TrainedFederation {
  ModelWeights global;
  // Each client's final locally trained model, indexed by client id.
  std::vector<ModelWeights> client_models;
  std::vector<RoundRecord> history;
  bool loaded_from_cache = false;
};

// Runs federated training, or loads it from <output_dir>/cache when a run
// with the same training-relevant settings was stored there before.
TrainedFederation TrainFederation(const ExperimentConfig& config,
                                  const PreparedData& data);

// Cache file for `config` and the 64-bit key it is named after.
std::uint64_t TrainingCacheKey(const ExperimentConfig& config);
std::filesystem::path TrainingCachePath(const ExperimentConfig& config);
void SaveTrainedFederation(const TrainedFederation& trained,
                           const std::filesystem::path& path);
TrainedFederation LoadTrainedFederation(const std::filesystem::path& path,
                                        const ModelArchitecture& arch);

struct SweepPoint {
  SweepParameter parameter = SweepParameter::kEpsilon;
  double value = 0.0;
};

struct RoleTiming {
  std::size_t adversary_id = 0;
  std::size_t samples = 0;
  double wall_seconds = 0.0;
};

struct ExperimentReport {
  std::string config_text;
  std::string version;
  std::string dataset_name;
  std::uint64_t seed = 0;
  AttackConfig attack;
  std::optional<SweepPoint> sweep_point;

  TransferMatrix transfer;
  // pairs[adversary][target], empty rows for clients that never attacked.
  std::vector<std::vector<std::vector<LabelPair>>> pairs;
  std::vector<double> client_acc;  // each client model on its own test shard
  double acc = 0.0;                // mean of client_acc
  double aasr = 0.0;               // mean over every populated cell
  double mean_diagonal_asr = 0.0;
  double mean_benign_asr = 0.0;    // mean over populated off-diagonal cells
  // AETR per client (NaN when that client did not attack or flipped nothing)
  // and the mean over the defined entries (NaN when none are).
  std::vector<double> role_aetr;
  double aetr = 0.0;
  std::vector<RoleTiming> timings;
  std::vector<RoundRecord> history;
};

// Attack phase on frozen models: each adversary role attacks the first
// attack_samples_per_role samples of its own test shard with its own model,
// and the batch is evaluated on every client model.
ExperimentReport EvaluateAttacks(const ExperimentConfig& config,
                                 const PreparedData& data,
                                 const TrainedFederation& trained,
                                 const AttackConfig& attack,
                                 std::optional<SweepPoint> point = {});

// Training (or cache load) followed by the attack phase.
ExperimentReport RunExperiment(const ExperimentConfig& config);

// Attack settings of `base` with one parameter replaced.
AttackConfig ApplySweepPoint(const AttackConfig& base, SweepPoint point);

// One report per grid value, all sharing one training run. Without a sweep
// in the config this returns the single RunExperiment report.
std::vector<ExperimentReport> RunSweep(const ExperimentConfig& config);
std::vector<ExperimentReport> RunSweep(const ExperimentConfig& config,
                                       SweepParameter parameter,
                                       std::span<const double> grid);

struct EmittedFiles {
  std::filesystem::path results;
  std::filesystem::path rounds;
  std::filesystem::path sweep;
  std::filesystem::path summary;
  std::filesystem::path timings;
  std::filesystem::path manifest;
};

inline constexpr const char* kResultsColumns[] = {
    "dataset", "attack_kind", "epsilon", "alpha",  "iterations",  "adversary_id",
    "target_id", "acc",       "asr",     "aasr",   "aetr",        "wall_time_s",
    "seed"};

// Writes results.csv (one row per transfer cell and report), rounds.csv,
// sweep.csv (one row per sweep point, header only without a sweep),
// summary.csv, timings.csv and manifest.txt. wall_time_s in results.csv is
// left empty unless the config asks for it, so the file stays reproducible
// byte for byte; timings.csv always carries the measurements.
EmittedFiles EmitCsv(std::span<const ExperimentReport> reports,
                     const ExperimentConfig& config,
                     const std::filesystem::path& output_dir);

}  // namespace fedadv

#endif  // FEDADV_EXPERIMENT_H_
