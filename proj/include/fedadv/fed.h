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
#ifndef FEDADV_FED_H_
#define FEDADV_FED_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedadv/data.h"
#include "fedadv/model.h"
#include "fedadv/random.h"

namespace fedadv {

enum class Role { kBenign, kAdversary };

struct ClientShards {
  Shard train;
  Shard test;
};

inline constexpr double kDefaultTrainFraction = 0.62;

// Splits the dataset, in its stored order, into num_clients *
// chunks_per_client contiguous equal chunks (a remainder at the end is left
// unused) and deals chunks_per_client of them to each client through a
// seeded permutation. Each client's samples are shuffled and then split into
// train and test parts at train_fraction.
std::vector<ClientShards> PartitionNonIid(
    std::shared_ptr<const ImageDataset> dataset, std::size_t num_clients,
    std::size_t chunks_per_client, double train_fraction = kDefaultTrainFraction,
    std::uint64_t seed = 0);

struct ClientState {
  int client_id = 0;
  Shard train;
  Shard test;
  double weight_fraction = 0.0;
  Role role = Role::kBenign;
  ModelWeights local_weights;
};

// |D_i| / sum_j |D_j| for each shard size.
std::vector<double> WeightFractions(std::span<const std::size_t> sizes);

// Builds client states with ids 0..n-1 and size-proportional fractions.
std::vector<ClientState> MakeClients(const std::vector<ClientShards>& shards);

struct DPConfig {
  bool enabled = false;
  double clip_norm = 1.0;
  double epsilon = 1.0;
  double delta = 1e-5;
  // Overrides the calibrated value when set.
  std::optional<double> noise_sigma;
  bool apply_downlink = false;

  void Validate() const;
  // noise_sigma if set, otherwise the Gaussian-mechanism calibration.
  double Sigma() const;
};

struct FedConfig {
  std::size_t num_clients = 3;
  std::size_t rounds = 50;
  std::size_t clients_per_round = 3;
  // Carried for completeness of the round-loop inputs; no step reads it.
  std::size_t k = 0;
  TrainConfig train;
  DPConfig dp;
  std::uint64_t seed = 0;

  void Validate() const;
};

// Runs `num_epochs` epochs of minibatch SGD over `shard`. Epoch e draws its
// shuffle from (seed, stream, first_epoch + e), so training split across
// several calls consumes the same randomness as one long call.
ModelWeights TrainEpochs(const ModelArchitecture& arch, ModelWeights weights,
                         const Shard& shard, const TrainConfig& config,
                         std::uint64_t seed, std::uint64_t stream,
                         std::size_t first_epoch, std::size_t num_epochs);

// Plain (non-federated) training for `epochs` epochs on stream 0, seeded
// from config.seed. Matches a single-client federated run with the same seed.
ModelWeights TrainCentralized(const ModelArchitecture& arch,
                              ModelWeights initial, const Shard& shard,
                              const TrainConfig& config, std::size_t epochs);

// One client's local training in round `round` (0-based), starting from the
// weights the client received.
ModelWeights LocalUpdate(const ModelArchitecture& arch,
                         const ModelWeights& received, const ClientState& client,
                         const FedConfig& config, std::size_t round);

// delta * min(1, clip_norm / ||delta||_2).
ModelWeights ClipUpdate(const ModelWeights& delta, double clip_norm);

// clip_norm * sqrt(2 ln(1.25 / delta)) / epsilon.
double CalibrateSigma(double clip_norm, double epsilon, double delta);

// Adds independent N(0, sigma^2) noise to every element.
ModelWeights AddGaussianNoise(const ModelWeights& weights, double sigma, Rng& rng);

// Elementwise sum_i fractions[i] * models[i]. Fractions must sum to 1.
ModelWeights AggregateFedAvg(std::span<const ModelWeights> models,
                             std::span<const double> fractions);

struct RoundRecord {
  std::size_t round = 0;  // 1-based
  double global_train_loss = 0.0;
  double global_val_acc = 0.0;
  std::vector<double> per_client_val_acc;
  bool dp_enabled = false;
  double sigma = 0.0;
};

struct UpdateAudit {
  std::size_t round = 0;
  int client_id = 0;
  double clipped_norm = 0.0;  // L2 norm of the delta before noise.
};

struct TrainingObserver {
  std::function<void(const UpdateAudit&)> on_update;
  std::function<void(const RoundRecord&)> on_round;
};

struct FederatedResult {
  ModelWeights global;
  std::vector<RoundRecord> history;
};

// The round loop. Each round samples clients_per_round clients without
// replacement, broadcasts the global model (noised on the downlink when
// enabled), trains locally, clips and noises the update delta when DP is on,
// and aggregates with size-proportional fractions. Every client's
// local_weights holds its latest locally trained model afterwards (the
// initial model for clients that were never sampled).
FederatedResult RunFederatedTraining(const FedConfig& config,
                                     const ModelArchitecture& arch,
                                     std::vector<ClientState>& clients,
                                     const ModelWeights& initial,
                                     const TrainingObserver& observer = {});
// Initializes the global model with HeUniform(arch, config.seed).
FederatedResult RunFederatedTraining(const FedConfig& config,
                                     const ModelArchitecture& arch,
                                     std::vector<ClientState>& clients,
                                     const TrainingObserver& observer = {});

// Fraction of correct argmax predictions and summed loss, evaluated in
// fixed-size chunks.
struct Evaluation {
  double accuracy = 0.0;
  double total_loss = 0.0;
  std::size_t count = 0;
};
Evaluation Evaluate(const ModelArchitecture& arch, const ModelWeights& weights,
                    const Shard& shard);

void WriteRoundsCsv(std::span<const RoundRecord> history,
                    const std::filesystem::path& path);

}  // namespace fedadv

#endif  // FEDADV_FED_H_
