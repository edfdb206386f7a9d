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
#include "fedadv/fed.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fedadv/csv.h"
#include "fedadv/parallel.h"

namespace fedadv {
namespace {

constexpr std::size_t kEvalChunk = 256;

std::string ClientContext(std::size_t round, int client_id) {
  return "round " + std::to_string(round + 1) + ", client " +
         std::to_string(client_id) + ": ";
}

}  // namespace

std::vector<ClientShards> PartitionNonIid(
    std::shared_ptr<const ImageDataset> dataset, std::size_t num_clients,
    std::size_t chunks_per_client, double train_fraction, std::uint64_t seed) {
  if (!dataset) throw std::invalid_argument("partition needs a dataset");
  if (num_clients == 0) throw std::invalid_argument("need at least one client");
  if (chunks_per_client == 0) {
    throw std::invalid_argument("need at least one chunk per client");
  }
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw std::invalid_argument("train fraction must lie in (0, 1]");
  }
  const std::size_t num_chunks = num_clients * chunks_per_client;
  if (dataset->size() < num_chunks) {
    throw std::invalid_argument(
        "dataset of " + std::to_string(dataset->size()) +
        " samples is too small for " + std::to_string(num_clients) +
        " clients x " + std::to_string(chunks_per_client) + " chunks");
  }
  const std::size_t chunk_size = dataset->size() / num_chunks;
  std::vector<std::size_t> chunk_order(num_chunks);
  std::iota(chunk_order.begin(), chunk_order.end(), std::size_t{0});
  Rng deal = MakeRng(seed, {Tag(Stream::kPartition)});
  std::shuffle(chunk_order.begin(), chunk_order.end(), deal);

  std::vector<ClientShards> out(num_clients);
  for (std::size_t c = 0; c < num_clients; ++c) {
    std::vector<std::size_t> mine(chunk_order.begin() + c * chunks_per_client,
                                  chunk_order.begin() + (c + 1) * chunks_per_client);
    std::sort(mine.begin(), mine.end());
    std::vector<std::size_t> indices;
    indices.reserve(chunks_per_client * chunk_size);
    for (std::size_t chunk : mine) {
      for (std::size_t i = 0; i < chunk_size; ++i) {
        indices.push_back(chunk * chunk_size + i);
      }
    }
    Rng split = MakeRng(seed, {Tag(Stream::kPartition), c + 1});
    std::shuffle(indices.begin(), indices.end(), split);
    std::size_t n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(indices.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, indices.size());
    if (train_fraction < 1.0 && indices.size() >= 2) {
      n_train = std::min(n_train, indices.size() - 1);
    }
    out[c].train.source = dataset;
    out[c].test.source = dataset;
    out[c].train.indices.assign(indices.begin(),
                                indices.begin() + static_cast<std::ptrdiff_t>(n_train));
    out[c].test.indices.assign(indices.begin() + static_cast<std::ptrdiff_t>(n_train),
                               indices.end());
  }
  return out;
}

std::vector<double> WeightFractions(std::span<const std::size_t> sizes) {
  if (sizes.empty()) throw std::invalid_argument("no shard sizes given");
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (total == 0) throw std::invalid_argument("all shards are empty");
  std::vector<double> fractions;
  fractions.reserve(sizes.size());
  for (std::size_t s : sizes) {
    fractions.push_back(static_cast<double>(s) / static_cast<double>(total));
  }
  return fractions;
}

std::vector<ClientState> MakeClients(const std::vector<ClientShards>& shards) {
  std::vector<std::size_t> sizes;
  for (const ClientShards& s : shards) sizes.push_back(s.train.size());
  const std::vector<double> fractions = WeightFractions(sizes);
  std::vector<ClientState> clients(shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    clients[i].client_id = static_cast<int>(i);
    clients[i].train = shards[i].train;
    clients[i].test = shards[i].test;
    clients[i].weight_fraction = fractions[i];
  }
  return clients;
}

void DPConfig::Validate() const {
  if (!enabled) return;
  if (!(clip_norm > 0.0)) throw std::invalid_argument("DP clip norm must be > 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("DP epsilon must be > 0");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("DP delta must lie in (0, 1)");
  }
  if (noise_sigma && !(*noise_sigma > 0.0)) {
    throw std::invalid_argument("DP noise sigma must be > 0");
  }
}

double DPConfig::Sigma() const {
  return noise_sigma ? *noise_sigma : CalibrateSigma(clip_norm, epsilon, delta);
}

void FedConfig::Validate() const {
  if (num_clients == 0) throw std::invalid_argument("need at least one client");
  if (rounds == 0) throw std::invalid_argument("need at least one round");
  if (clients_per_round == 0 || clients_per_round > num_clients) {
    throw std::invalid_argument("clients per round must lie in [1, " +
                                std::to_string(num_clients) + "]");
  }
  train.Validate();
  dp.Validate();
}

ModelWeights TrainEpochs(const ModelArchitecture& arch, ModelWeights weights,
                         const Shard& shard, const TrainConfig& config,
                         std::uint64_t seed, std::uint64_t stream,
                         std::size_t first_epoch, std::size_t num_epochs) {
  if (shard.empty()) throw std::invalid_argument("cannot train on an empty shard");
  config.Validate();
  std::vector<std::size_t> order(shard.size());
  for (std::size_t e = first_epoch; e < first_epoch + num_epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = MakeRng(seed, {Tag(Stream::kEpochShuffle), stream, e});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0, b = 0; start < order.size();
         start += config.batch_size, ++b) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const Batch batch = GatherBatch(
          shard, std::span<const std::size_t>(order).subspan(start, end - start));
      const ForwardOptions options{
          .training = true,
          .seed = DeriveSeed(seed, {Tag(Stream::kDropout), stream, e, b})};
      const LossAndGradients lg =
          LossAndParamGradients(arch, weights, batch.images, batch.labels, options);
      weights = SgdStep(weights, lg.grads, config.learning_rate);
    }
  }
  return weights;
}

ModelWeights TrainCentralized(const ModelArchitecture& arch,
                              ModelWeights initial, const Shard& shard,
                              const TrainConfig& config, std::size_t epochs) {
  return TrainEpochs(arch, std::move(initial), shard, config, config.seed, 0, 0,
                     epochs);
}

ModelWeights LocalUpdate(const ModelArchitecture& arch,
                         const ModelWeights& received, const ClientState& client,
                         const FedConfig& config, std::size_t round) {
  if (client.train.empty()) {
    throw std::invalid_argument("client " + std::to_string(client.client_id) +
                                " has an empty training shard");
  }
  const std::size_t epochs = config.train.local_epochs;
  return TrainEpochs(arch, received, client.train, config.train, config.seed,
                     static_cast<std::uint64_t>(client.client_id), round * epochs,
                     epochs);
}

ModelWeights ClipUpdate(const ModelWeights& delta, double clip_norm) {
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip norm must be > 0");
  const double norm = delta.L2Norm();
  if (norm <= clip_norm) return delta;
  return delta.Scaled(clip_norm / norm);
}

double CalibrateSigma(double clip_norm, double epsilon, double delta) {
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip norm must be > 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("delta must lie in (0, 1)");
  }
  return clip_norm * std::sqrt(2.0 * std::log(1.25 / delta)) / epsilon;
}

ModelWeights AddGaussianNoise(const ModelWeights& weights, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
  if (sigma == 0.0) return weights;
  std::normal_distribution<double> noise(0.0, sigma);
  ModelWeights out = weights;
  for (std::size_t i = 0; i < out.num_layers(); ++i) {
    for (Tensor& t : out.layer(i)) {
      for (double& v : t.data()) v += noise(rng);
    }
  }
  return out;
}

ModelWeights AggregateFedAvg(std::span<const ModelWeights> models,
                             std::span<const double> fractions) {
  if (models.empty()) throw std::invalid_argument("no models to aggregate");
  if (models.size() != fractions.size()) {
    throw std::invalid_argument("got " + std::to_string(fractions.size()) +
                                " fractions for " + std::to_string(models.size()) +
                                " models");
  }
  const double total = std::accumulate(fractions.begin(), fractions.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("aggregation fractions sum to " +
                                FormatDouble(total) + ", expected 1");
  }
  for (std::size_t m = 1; m < models.size(); ++m) {
    models[0].CheckCompatible(models[m], "aggregation of model " + std::to_string(m));
  }
  // w_0 + sum_{m>0} p_m (w_m - w_0) equals sum_m p_m w_m when the fractions
  // sum to 1, and returns w_0 bit-exactly when every model agrees.
  ModelWeights out = models[0];
  for (std::size_t i = 0; i < out.num_layers(); ++i) {
    for (std::size_t j = 0; j < out.layer(i).size(); ++j) {
      auto dst = out.layer(i)[j].data();
      auto anchor = models[0].layer(i)[j].data();
      for (std::size_t m = 1; m < models.size(); ++m) {
        auto src = models[m].layer(i)[j].data();
        for (std::size_t k = 0; k < dst.size(); ++k) {
          dst[k] += fractions[m] * (src[k] - anchor[k]);
        }
      }
    }
  }
  return out;
}

Evaluation Evaluate(const ModelArchitecture& arch, const ModelWeights& weights,
                    const Shard& shard) {
  if (shard.empty()) throw std::invalid_argument("cannot evaluate on an empty shard");
  Evaluation eval;
  std::size_t correct = 0;
  std::vector<std::size_t> positions;
  for (std::size_t start = 0; start < shard.size(); start += kEvalChunk) {
    const std::size_t end = std::min(shard.size(), start + kEvalChunk);
    positions.resize(end - start);
    std::iota(positions.begin(), positions.end(), start);
    const Batch batch = GatherBatch(shard, positions);
    const std::vector<int> predicted = Predict(arch, weights, batch.images);
    for (std::size_t n = 0; n < predicted.size(); ++n) {
      if (predicted[n] == batch.labels[n]) ++correct;
    }
    eval.total_loss += MeanLoss(arch, weights, batch.images, batch.labels) *
                       static_cast<double>(batch.labels.size());
  }
  eval.count = shard.size();
  eval.accuracy = static_cast<double>(correct) / static_cast<double>(eval.count);
  return eval;
}

FederatedResult RunFederatedTraining(const FedConfig& config,
                                     const ModelArchitecture& arch,
                                     std::vector<ClientState>& clients,
                                     const TrainingObserver& observer) {
  return RunFederatedTraining(config, arch, clients,
                              ModelWeights::HeUniform(arch, config.seed), observer);
}

FederatedResult RunFederatedTraining(const FedConfig& config,
                                     const ModelArchitecture& arch,
                                     std::vector<ClientState>& clients,
                                     const ModelWeights& initial,
                                     const TrainingObserver& observer) {
  config.Validate();
  arch.Validate();
  initial.CheckMatches(arch);
  if (clients.size() != config.num_clients) {
    throw std::invalid_argument("config expects " + std::to_string(config.num_clients) +
                                " clients, got " + std::to_string(clients.size()));
  }
  const double sigma = config.dp.enabled ? config.dp.Sigma() : 0.0;
  for (ClientState& c : clients) c.local_weights = initial;

  FederatedResult result;
  result.global = initial;
  for (std::size_t round = 0; round < config.rounds; ++round) {
    std::vector<std::size_t> selected(clients.size());
    std::iota(selected.begin(), selected.end(), std::size_t{0});
    if (config.clients_per_round < clients.size()) {
      Rng pick = MakeRng(config.seed, {Tag(Stream::kSampling), round});
      std::shuffle(selected.begin(), selected.end(), pick);
      selected.resize(config.clients_per_round);
      std::sort(selected.begin(), selected.end());
    }

    std::vector<ModelWeights> uploads(selected.size());
    std::vector<double> clipped_norms(selected.size(), 0.0);
    ParallelFor(selected.size(), [&](std::size_t s) {
      ClientState& client = clients[selected[s]];
      const auto id = static_cast<std::uint64_t>(client.client_id);
      try {
        ModelWeights received = result.global;
        if (config.dp.enabled && config.dp.apply_downlink) {
          Rng down = MakeRng(config.seed, {Tag(Stream::kDownlinkNoise), round, id});
          received = AddGaussianNoise(received, sigma, down);
        }
        ModelWeights local = LocalUpdate(arch, received, client, config, round);
        if (config.dp.enabled) {
          ModelWeights delta = ClipUpdate(local - received, config.dp.clip_norm);
          clipped_norms[s] = delta.L2Norm();
          Rng up = MakeRng(config.seed, {Tag(Stream::kUplinkNoise), round, id});
          uploads[s] = result.global + AddGaussianNoise(delta, sigma, up);
        } else {
          uploads[s] = local;
        }
        client.local_weights = std::move(local);
      } catch (const std::exception& e) {
        throw std::runtime_error(ClientContext(round, client.client_id) + e.what());
      }
    });

    std::vector<std::size_t> sizes;
    for (std::size_t idx : selected) sizes.push_back(clients[idx].train.size());
    result.global = AggregateFedAvg(uploads, WeightFractions(sizes));

    if (config.dp.enabled && observer.on_update) {
      for (std::size_t s = 0; s < selected.size(); ++s) {
        observer.on_update(UpdateAudit{round + 1, clients[selected[s]].client_id,
                                       clipped_norms[s]});
      }
    }

    RoundRecord record;
    record.round = round + 1;
    record.dp_enabled = config.dp.enabled;
    record.sigma = sigma;
    double loss_sum = 0.0, correct = 0.0;
    std::size_t train_count = 0, test_count = 0;
    for (const ClientState& client : clients) {
      const Evaluation train_eval = Evaluate(arch, result.global, client.train);
      loss_sum += train_eval.total_loss;
      train_count += train_eval.count;
      if (client.test.empty()) {
        record.per_client_val_acc.push_back(std::nan(""));
        continue;
      }
      const Evaluation test_eval = Evaluate(arch, result.global, client.test);
      record.per_client_val_acc.push_back(test_eval.accuracy);
      correct += test_eval.accuracy * static_cast<double>(test_eval.count);
      test_count += test_eval.count;
    }
    record.global_train_loss = loss_sum / static_cast<double>(train_count);
    record.global_val_acc =
        test_count > 0 ? correct / static_cast<double>(test_count) : std::nan("");
    if (observer.on_round) observer.on_round(record);
    result.history.push_back(std::move(record));
  }
  return result;
}

void WriteRoundsCsv(std::span<const RoundRecord> history,
                    const std::filesystem::path& path) {
  std::vector<CsvRow> rows;
  for (const RoundRecord& r : history) {
    std::string per_client;
    for (std::size_t i = 0; i < r.per_client_val_acc.size(); ++i) {
      if (i > 0) per_client += ';';
      per_client += FormatDouble(r.per_client_val_acc[i]);
    }
    rows.push_back({std::to_string(r.round), FormatDouble(r.global_train_loss),
                    FormatDouble(r.global_val_acc), per_client,
                    r.dp_enabled ? "true" : "false", FormatDouble(r.sigma)});
  }
  WriteCsv(path,
           {"round", "global_train_loss", "global_val_acc", "per_client_val_acc",
            "dp_enabled", "sigma"},
           rows);
}

}  // namespace fedadv
