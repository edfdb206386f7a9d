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
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "fedadv/csv.h"
#include "test_util.h"

namespace fedadv {
namespace {

using testing::RandomDataset;
using testing::RandomWeights;

std::shared_ptr<const ImageDataset> LabelSortedDataset(std::size_t per_label,
                                                       std::size_t labels) {
  ImageDataset ds = RandomDataset(per_label * labels, 1, 2, 2, labels, 3);
  for (std::size_t i = 0; i < ds.size(); ++i) ds.labels[i] = static_cast<int>(i / per_label);
  return std::make_shared<const ImageDataset>(std::move(ds));
}

ModelArchitecture TinyArch(std::size_t side = 4, std::size_t classes = 2) {
  ModelArchitecture arch;
  arch.input_shape = {1, side, side};
  arch.layers = {Conv2DSpec{1, 2, 3, 1, 1}, ReluSpec{}, MaxPool2DSpec{2, 2}, FlattenSpec{},
                 DenseSpec{2 * (side / 2) * (side / 2), classes}};
  arch.Validate();
  return arch;
}

TEST(PartitionTest, LabelSortedChunksGiveContiguousLabelRegions) {
  const auto ds = LabelSortedDataset(10, 6);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto shards = PartitionNonIid(ds, 3, 2, kDefaultTrainFraction, seed);
    ASSERT_EQ(shards.size(), 3u);
    std::set<int> all_labels;
    for (const ClientShards& s : shards) {
      std::map<int, int> counts;
      for (const Shard* part : {&s.train, &s.test}) {
        for (std::size_t idx : part->indices) ++counts[ds->labels[idx]];
      }
      // Exactly two whole label regions per client.
      ASSERT_EQ(counts.size(), 2u);
      for (const auto& [label, n] : counts) {
        EXPECT_EQ(n, 10);
        EXPECT_TRUE(all_labels.insert(label).second);
      }
    }
    EXPECT_EQ(all_labels.size(), 6u);
  }
}

TEST(PartitionTest, ShardsAreDisjointAcrossSeeds) {
  const auto ds = std::make_shared<const ImageDataset>(RandomDataset(103, 1, 2, 2, 3, 1));
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto shards = PartitionNonIid(ds, 4, 3, 0.62, seed);
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (const ClientShards& s : shards) {
      for (const Shard* part : {&s.train, &s.test}) {
        for (std::size_t idx : part->indices) {
          EXPECT_LT(idx, ds->size());
          EXPECT_TRUE(seen.insert(idx).second) << "sample " << idx << " seed " << seed;
          ++total;
        }
      }
      const double frac = static_cast<double>(s.train.size()) /
                          static_cast<double>(s.train.size() + s.test.size());
      EXPECT_NEAR(frac, 0.62, 0.05);
    }
    // 103 / 12 = 8 per chunk, remainder unused.
    EXPECT_EQ(total, 96u);
  }
}

TEST(PartitionTest, SingleClientSingleChunkGetsEverything) {
  const auto ds = std::make_shared<const ImageDataset>(RandomDataset(20, 1, 2, 2, 2, 1));
  const auto shards = PartitionNonIid(ds, 1, 1, 1.0, 0);
  EXPECT_EQ(shards[0].train.size(), 20u);
  EXPECT_TRUE(shards[0].test.empty());
  std::vector<std::size_t> idx = shards[0].train.indices;
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(idx[i], i);
}

TEST(PartitionTest, TooSmallDatasetIsASizingError) {
  const auto ds = std::make_shared<const ImageDataset>(RandomDataset(5, 1, 2, 2, 2, 1));
  EXPECT_THROW(PartitionNonIid(ds, 3, 2), std::invalid_argument);
  EXPECT_THROW(PartitionNonIid(ds, 1, 0), std::invalid_argument);
}

TEST(FractionsTest, ProportionalAndScaleInvariant) {
  const std::vector<std::size_t> sizes = {1, 3};
  EXPECT_EQ(WeightFractions(sizes), (std::vector<double>{0.25, 0.75}));
  Rng rng(2);
  const ModelArchitecture arch = TinyArch();
  const std::vector<ModelWeights> models = {RandomWeights(arch, rng), RandomWeights(arch, rng),
                                            RandomWeights(arch, rng)};
  const std::vector<std::size_t> a = {3, 5, 7}, b = {30, 50, 70};
  EXPECT_TRUE(AggregateFedAvg(models, WeightFractions(a))
                  .BitEquals(AggregateFedAvg(models, WeightFractions(b))));
}

TEST(LocalUpdateTest, ZeroLearningRateReturnsTheReceivedWeights) {
  const auto ds = std::make_shared<const ImageDataset>(RandomDataset(40, 1, 4, 4, 2, 1));
  const auto clients = MakeClients(PartitionNonIid(ds, 2, 1, 0.6, 0));
  const ModelArchitecture arch = TinyArch();
  Rng rng(1);
  const ModelWeights w = RandomWeights(arch, rng);
  FedConfig config;
  config.num_clients = 2;
  config.train.learning_rate = 0.0;
  config.train.local_epochs = 2;
  EXPECT_TRUE(LocalUpdate(arch, w, clients[1], config, 0).BitEquals(w));
}

TEST(LocalUpdateTest, OneEpochOneBatchIsOneSgdStep) {
  const auto ds = std::make_shared<const ImageDataset>(RandomDataset(30, 1, 4, 4, 2, 4));
  ClientState client;
  client.client_id = 0;
  client.train = Shard{ds, {0, 5, 9, 11, 20, 29}};
  const ModelArchitecture arch = TinyArch();
  Rng rng(8);
  const ModelWeights w = RandomWeights(arch, rng);
  FedConfig config;
  config.num_clients = 1;
  config.clients_per_round = 1;
  config.train.learning_rate = 0.3;
  config.train.batch_size = 64;
  config.train.local_epochs = 1;
  const ModelWeights updated = LocalUpdate(arch, w, client, config, 0);

  // Hand-applied step on the whole shard; only the summation order of the
  // batch mean can differ.
  const Batch batch = ShardBatch(client.train);
  const LossAndGradients lg = LossAndParamGradients(arch, w, batch.images, batch.labels);
  const std::vector<double> expected = SgdStep(w, lg.grads, 0.3).Flatten();
  const std::vector<double> got = updated.Flatten();
  ASSERT_EQ(got.size(), expected.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expected[i], 1e-12);
}

TEST(LocalUpdateTest, EmptyShardIsAnError) {
  ClientState client;
  client.train = Shard{std::make_shared<const ImageDataset>(RandomDataset(2, 1, 4, 4, 2, 1)), {}};
  FedConfig config;
  EXPECT_THROW(LocalUpdate(TinyArch(), ModelWeights::Zeros(TinyArch()), client, config, 0),
               std::invalid_argument);
}

TEST(LocalUpdateTest, OwnShardLossMostlyNonIncreasingOverEpochs) {
  int monotone = 0;
  constexpr int kRuns = 20;
  for (std::uint64_t seed = 0; seed < kRuns; ++seed) {
    SyntheticSpec spec;
    spec.num_samples = 240;
    spec.seed = seed;
    const auto ds = std::make_shared<const ImageDataset>(GenerateSynthetic(spec));
    const auto shards = PartitionNonIid(ds, 1, 1, 1.0, seed);
    const ModelArchitecture arch = MakePreset("desk-cnn", ds->sample_shape(), 2);
    TrainConfig cfg;
    cfg.seed = seed;
    ModelWeights w = ModelWeights::HeUniform(arch, seed);
    double previous = Evaluate(arch, w, shards[0].train).total_loss;
    bool ok = true;
    for (std::size_t e = 0; e < 5; ++e) {
      w = TrainEpochs(arch, w, shards[0].train, cfg, seed, 0, e, 1);
      const double loss = Evaluate(arch, w, shards[0].train).total_loss;
      if (loss > previous) ok = false;
      previous = loss;
    }
    monotone += ok;
  }
  EXPECT_GE(monotone, 18) << monotone << " of " << kRuns << " runs were monotone";
}

TEST(ClipTest, BelowThresholdIsIdentity) {
  const ModelArchitecture arch = TinyArch();
  Rng rng(3);
  ModelWeights d = RandomWeights(arch, rng);
  d = d.Scaled(0.5 / d.L2Norm());
  EXPECT_TRUE(ClipUpdate(d, 1.0).BitEquals(d));
  const ModelWeights zero = ModelWeights::Zeros(arch);
  EXPECT_TRUE(ClipUpdate(zero, 1.0).BitEquals(zero));
}

TEST(ClipTest, AboveThresholdScalesToTheThreshold) {
  const ModelArchitecture arch = TinyArch();
  Rng rng(4);
  ModelWeights d = RandomWeights(arch, rng);
  d = d.Scaled(10.0 / d.L2Norm());
  const ModelWeights c = ClipUpdate(d, 1.0);
  EXPECT_NEAR(c.L2Norm(), 1.0, 1e-12);
  const std::vector<double> fd = d.Flatten(), fc = c.Flatten();
  for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_NEAR(fc[i], 0.1 * fd[i], 1e-15);
  EXPECT_THROW(ClipUpdate(d, 0.0), std::invalid_argument);
}

TEST(SigmaTest, ClosedFormAndScaling) {
  EXPECT_NEAR(CalibrateSigma(1.0, 1.0, 1e-5), 4.8445, 1e-3);
  const double base = CalibrateSigma(1.0, 0.7, 1e-4);
  EXPECT_DOUBLE_EQ(CalibrateSigma(2.0, 0.7, 1e-4), 2.0 * base);
  EXPECT_DOUBLE_EQ(CalibrateSigma(1.0, 1.4, 1e-4), base / 2.0);
  EXPECT_THROW(CalibrateSigma(1.0, 0.0, 1e-5), std::invalid_argument);
  EXPECT_THROW(CalibrateSigma(1.0, 1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(CalibrateSigma(-1.0, 1.0, 1e-5), std::invalid_argument);
  DPConfig dp;
  dp.enabled = true;
  EXPECT_DOUBLE_EQ(dp.Sigma(), CalibrateSigma(1.0, 1.0, 1e-5));
  dp.noise_sigma = 0.25;
  EXPECT_EQ(dp.Sigma(), 0.25);
}

TEST(NoiseTest, ZeroSigmaIsBitIdentical) {
  Rng rng(5);
  const ModelArchitecture arch = TinyArch();
  const ModelWeights w = RandomWeights(arch, rng);
  EXPECT_TRUE(AddGaussianNoise(w, 0.0, rng).BitEquals(w));
  EXPECT_THROW(AddGaussianNoise(w, -1.0, rng), std::invalid_argument);
}

TEST(NoiseTest, MonteCarloMomentsMatchSigma) {
  ModelArchitecture arch;
  arch.input_shape = {1, 1, 1000};
  arch.layers = {FlattenSpec{}, DenseSpec{1000, 1000}};
  const ModelWeights zero = ModelWeights::Zeros(arch);
  ASSERT_GE(zero.NumParameters(), 1000000u);
  const double sigma = 2.5;
  Rng rng(6);
  const std::vector<double> v = AddGaussianNoise(zero, sigma, rng).Flatten();
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / (n - 1.0));
  EXPECT_NEAR(sd, sigma, 0.05 * sigma);
  EXPECT_LE(std::abs(mean), 5.0 * sigma / std::sqrt(n));
}

TEST(AggregateTest, IdenticalModelsAreAFixedPoint) {
  Rng rng(7);
  const ModelArchitecture arch = TinyArch();
  const ModelWeights w = RandomWeights(arch, rng);
  const std::vector<ModelWeights> models(3, w);
  const std::vector<double> p = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  EXPECT_TRUE(AggregateFedAvg(models, p).BitEquals(w));
}

TEST(AggregateTest, TwoClientsQuarterAndThreeQuarters) {
  Rng rng(8);
  const ModelArchitecture arch = TinyArch();
  const std::vector<ModelWeights> models = {RandomWeights(arch, rng), RandomWeights(arch, rng)};
  const std::vector<std::size_t> sizes = {1, 3};
  const std::vector<double> got = AggregateFedAvg(models, WeightFractions(sizes)).Flatten();
  const std::vector<double> a = models[0].Flatten(), b = models[1].Flatten();
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], 0.25 * a[i] + 0.75 * b[i], 1e-15);
}

TEST(AggregateTest, MatchesDirectArithmeticAndIsPermutationInvariant) {
  Rng rng(9);
  const ModelArchitecture arch = TinyArch(6, 3);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<ModelWeights> models;
    std::vector<std::size_t> sizes;
    std::uniform_int_distribution<std::size_t> size(1, 500);
    for (int m = 0; m < 3; ++m) {
      models.push_back(RandomWeights(arch, rng, 3.0));
      sizes.push_back(size(rng));
    }
    const std::vector<double> p = WeightFractions(sizes);
    const std::vector<double> got = AggregateFedAvg(models, p).Flatten();
    const double total = static_cast<double>(sizes[0] + sizes[1] + sizes[2]);
    std::vector<std::vector<double>> flat;
    for (const ModelWeights& m : models) flat.push_back(m.Flatten());
    for (std::size_t i = 0; i < got.size(); ++i) {
      double direct = 0.0;
      for (int m = 0; m < 3; ++m) direct += static_cast<double>(sizes[m]) * flat[m][i];
      EXPECT_NEAR(got[i], direct / total, 1e-12);
    }
    const std::vector<ModelWeights> permuted = {models[2], models[0], models[1]};
    const std::vector<double> pp = {p[2], p[0], p[1]};
    const std::vector<double> other = AggregateFedAvg(permuted, pp).Flatten();
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], other[i], 1e-12);
  }
}

TEST(AggregateTest, RejectsBadFractionsAndShapes) {
  Rng rng(10);
  const std::vector<ModelWeights> models = {RandomWeights(TinyArch(), rng),
                                            RandomWeights(TinyArch(), rng)};
  EXPECT_THROW(AggregateFedAvg(models, std::vector<double>{0.5, 0.6}), std::invalid_argument);
  EXPECT_THROW(AggregateFedAvg(models, std::vector<double>{1.0}), std::invalid_argument);
  EXPECT_THROW(AggregateFedAvg(std::span<const ModelWeights>{}, std::vector<double>{}),
               std::invalid_argument);
  const std::vector<ModelWeights> mixed = {models[0], ModelWeights::Zeros(TinyArch(6, 3))};
  EXPECT_THROW(AggregateFedAvg(mixed, std::vector<double>{0.5, 0.5}), ShapeError);
}

struct SmallFederation {
  std::shared_ptr<const ImageDataset> dataset;
  ModelArchitecture arch;
  std::vector<ClientState> clients;
};

SmallFederation MakeFederation(std::size_t num_clients, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_samples = 120 * num_clients;
  spec.image_size = 8;
  spec.seed = seed;
  SmallFederation f;
  f.dataset = std::make_shared<const ImageDataset>(GenerateSynthetic(spec));
  f.arch = MakePreset("desk-cnn", f.dataset->sample_shape(), 2);
  f.clients = MakeClients(PartitionNonIid(f.dataset, num_clients, 2, 0.62, seed));
  return f;
}

TEST(FederatedTest, OneRoundZeroLearningRateKeepsTheGlobalModel) {
  SmallFederation f = MakeFederation(1, 0);
  FedConfig config;
  config.num_clients = 1;
  config.clients_per_round = 1;
  config.rounds = 1;
  config.train.learning_rate = 0.0;
  config.train.local_epochs = 1;
  const ModelWeights init = ModelWeights::HeUniform(f.arch, 3);
  const FederatedResult r = RunFederatedTraining(config, f.arch, f.clients, init);
  EXPECT_TRUE(r.global.BitEquals(init));
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.history[0].round, 1u);
}

TEST(FederatedTest, SingleClientMatchesCentralizedTrainingBitExactly) {
  for (std::uint64_t seed : {0u, 5u}) {
    SmallFederation f = MakeFederation(1, seed);
    FedConfig config;
    config.num_clients = 1;
    config.clients_per_round = 1;
    config.rounds = 3;
    config.train.local_epochs = 2;
    config.train.seed = seed;
    config.seed = seed;
    const ModelWeights init = ModelWeights::HeUniform(f.arch, seed);
    const FederatedResult fed = RunFederatedTraining(config, f.arch, f.clients, init);
    const ModelWeights central =
        TrainCentralized(f.arch, init, f.clients[0].train, config.train, 6);
    EXPECT_TRUE(fed.global.BitEquals(central)) << "seed " << seed;
    EXPECT_TRUE(f.clients[0].local_weights.BitEquals(central));
  }
}

TEST(FederatedTest, RunsAreDeterministicAndRoleAgnostic) {
  FedConfig config;
  config.rounds = 2;
  config.train.local_epochs = 1;
  config.seed = 4;
  SmallFederation a = MakeFederation(3, 1), b = MakeFederation(3, 1);
  b.clients[0].role = Role::kAdversary;
  const FederatedResult ra = RunFederatedTraining(config, a.arch, a.clients);
  const FederatedResult rb = RunFederatedTraining(config, b.arch, b.clients);
  EXPECT_TRUE(ra.global.BitEquals(rb.global));
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_TRUE(a.clients[c].local_weights.BitEquals(b.clients[c].local_weights));
  }
  EXPECT_EQ(ra.history.size(), 2u);
  EXPECT_EQ(ra.history[1].per_client_val_acc.size(), 3u);
}

TEST(FederatedTest, DpAuditSeesClippedNorms) {
  FedConfig config;
  config.rounds = 2;
  config.train.local_epochs = 1;
  config.dp.enabled = true;
  config.dp.clip_norm = 0.05;
  config.dp.apply_downlink = true;
  SmallFederation f = MakeFederation(3, 2);
  std::vector<UpdateAudit> audits;
  std::vector<RoundRecord> rounds;
  TrainingObserver observer;
  observer.on_update = [&](const UpdateAudit& a) { audits.push_back(a); };
  observer.on_round = [&](const RoundRecord& r) { rounds.push_back(r); };
  const FederatedResult r = RunFederatedTraining(config, f.arch, f.clients, observer);
  ASSERT_EQ(audits.size(), 6u);
  for (const UpdateAudit& a : audits) EXPECT_LE(a.clipped_norm, 0.05 + 1e-9);
  ASSERT_EQ(rounds.size(), 2u);
  EXPECT_TRUE(rounds[0].dp_enabled);
  EXPECT_NEAR(rounds[0].sigma, CalibrateSigma(0.05, 1.0, 1e-5), 1e-15);
  EXPECT_TRUE(r.global.Flatten().size() > 0);
}

TEST(FederatedTest, ClientSamplingWithoutReplacement) {
  FedConfig config;
  config.rounds = 3;
  config.clients_per_round = 2;
  config.train.local_epochs = 1;
  config.dp.enabled = true;
  config.dp.noise_sigma = 1e-6;
  SmallFederation f = MakeFederation(3, 3);
  std::vector<std::vector<int>> per_round(3);
  TrainingObserver observer;
  observer.on_update = [&](const UpdateAudit& a) { per_round[a.round - 1].push_back(a.client_id); };
  RunFederatedTraining(config, f.arch, f.clients, observer);
  for (const auto& ids : per_round) {
    ASSERT_EQ(ids.size(), 2u);
    EXPECT_NE(ids[0], ids[1]);
  }
}

TEST(FederatedTest, ClientErrorsCarryRoundAndClient) {
  FedConfig config;
  config.rounds = 1;
  config.train.local_epochs = 1;
  SmallFederation f = MakeFederation(3, 0);
  f.clients[2].train.indices.clear();
  try {
    RunFederatedTraining(config, f.arch, f.clients);
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("round 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("client 2"), std::string::npos) << msg;
  }
}

TEST(FederatedTest, RoundsCsvHasTheDocumentedColumns) {
  RoundRecord r;
  r.round = 1;
  r.global_train_loss = 0.5;
  r.global_val_acc = 0.75;
  r.per_client_val_acc = {0.5, 1.0};
  const auto dir = testing::TempDir("rounds");
  WriteRoundsCsv(std::vector<RoundRecord>{r}, dir / "rounds.csv");
  const auto rows = ReadCsv(dir / "rounds.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (CsvRow{"round", "global_train_loss", "global_val_acc",
                             "per_client_val_acc", "dp_enabled", "sigma"}));
  EXPECT_EQ(rows[1][3], "0.5;1");
}

}  // namespace
}  // namespace fedadv
