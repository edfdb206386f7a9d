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

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fedadv/attacks.h"
#include "fedadv/config.h"
#include "fedadv/data.h"
#include "fedadv/experiment.h"
#include "fedadv/fed.h"
#include "fedadv/metrics.h"
#include "fedadv/model.h"
#include "test_util.h"

namespace fedadv {
namespace {

using Clock = std::chrono::steady_clock;
using testing::RandomLabels;
using testing::RandomSmallArch;
using testing::RandomTensor;
using testing::RandomWeights;

double Seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string Num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void Require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + ("failed: " + what);
    }
  }
  void Note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

// Criterion 1 -------------------------------------------------------------

constexpr double kFdStep = 1e-6;
constexpr double kFdTolerance = 1e-5;
// Magnitudes below this are compared absolutely; central differences at
// h = 1e-6 carry about 1e-10 of round-off.
constexpr double kFdFloor = 1e-4;

Outcome GradientCorrectness() {
  Outcome out;
  const auto start = Clock::now();
  double worst_param = 0.0, worst_input = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + seed);
    const ModelArchitecture arch = RandomSmallArch(rng);
    const ModelWeights w = RandomWeights(arch, rng);
    Shape shape = arch.input_shape;
    shape.insert(shape.begin(), 2);
    const Tensor x = RandomTensor(shape, rng, 0.0, 1.0);
    const std::vector<int> labels = RandomLabels(2, arch.NumClasses(), rng);
    worst_param = std::max(worst_param, testing::CheckParamGradients(
                                            arch, w, x, labels, {true, seed}, kFdStep,
                                            kFdFloor).max_relative_error);
    worst_input = std::max(worst_input, testing::CheckInputGradients(
                                            arch, w, x, labels, kFdStep, kFdFloor)
                                            .max_relative_error);
  }
  const double elapsed = Seconds(start);
  out.Note("max rel err param " + Num(worst_param) + ", input " + Num(worst_input) +
           " on 20 nets, " + Num(elapsed) + " s");
  out.Require(worst_param <= kFdTolerance, "parameter gradients within 1e-5");
  out.Require(worst_input <= kFdTolerance, "input gradients within 1e-5");
  out.Require(elapsed < 30.0, "runtime < 30 s");
  return out;
}

// Criterion 2 -------------------------------------------------------------

Outcome AttackBudget() {
  Outcome out;
  const auto start = Clock::now();
  std::vector<ModelArchitecture> archs;
  std::vector<ModelWeights> weights;
  Rng setup(2);
  for (int i = 0; i < 8; ++i) {
    archs.push_back(RandomSmallArch(setup));
    weights.push_back(RandomWeights(archs.back(), setup));
  }
  Rng rng(3);
  std::uniform_real_distribution<double> eps(0.0, 0.2), alpha(0.001, 0.05);
  std::uniform_int_distribution<int> kind(0, 2), iters(1, 5), model(0, 7), batch(1, 3);
  std::size_t ok = 0;
  const std::size_t total = 10000;
  for (std::size_t trial = 0; trial < total; ++trial) {
    const int m = model(rng);
    const ModelArchitecture& arch = archs[m];
    Shape shape = arch.input_shape;
    const std::size_t b = static_cast<std::size_t>(batch(rng));
    shape.insert(shape.begin(), b);
    const Tensor x = RandomTensor(shape, rng, 0.0, 1.0);
    const std::vector<int> labels = RandomLabels(b, arch.NumClasses(), rng);
    AttackConfig c = MakeAttackConfig(static_cast<AttackKind>(kind(rng)), eps(rng),
                                      alpha(rng), static_cast<std::size_t>(iters(rng)));
    c.seed = trial;
    const AdversarialBatch adv = RunAttack(arch, weights[m], x, labels, c);
    bool good = LinfDistance(adv.perturbed, x) <= c.epsilon + 1e-9;
    for (double v : adv.perturbed.data()) good = good && v >= c.pixel_min && v <= c.pixel_max;
    ok += good;
  }
  const double elapsed = Seconds(start);
  out.Note(std::to_string(ok) + "/" + std::to_string(total) + " within budget and range, " +
           Num(elapsed) + " s");
  out.Require(ok == total, "every output inside the budget and pixel range");
  out.Require(elapsed < 60.0, "runtime < 1 min");
  return out;
}

// Criterion 3 -------------------------------------------------------------

Outcome DefinitionalCollapses() {
  Outcome out;
  std::size_t one_step = 0, zero_eps = 0, fedavg = 0, clip = 0, noise = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(300 + seed);
    const ModelArchitecture arch = RandomSmallArch(rng);
    const ModelWeights w = RandomWeights(arch, rng);
    Shape shape = arch.input_shape;
    shape.insert(shape.begin(), 3);
    const Tensor x = RandomTensor(shape, rng, 0.0, 1.0);
    const std::vector<int> labels = RandomLabels(3, arch.NumClasses(), rng);
    const double eps = std::uniform_real_distribution<double>(0.01, 0.2)(rng);

    const Tensor f = Fgsm(arch, w, x, labels, MakeAttackConfig(AttackKind::kFgsm, eps, 0, 1))
                         .perturbed;
    AttackConfig pgd = MakeAttackConfig(AttackKind::kPgd, eps, eps, 1);
    pgd.random_init = false;
    const Tensor p = Pgd(arch, w, x, labels, pgd).perturbed;
    const Tensor b =
        Bim(arch, w, x, labels, MakeAttackConfig(AttackKind::kBim, eps, eps, 1)).perturbed;
    one_step += f.BitEquals(p) && f.BitEquals(b);

    bool identity = true;
    for (AttackKind k : {AttackKind::kFgsm, AttackKind::kBim, AttackKind::kPgd}) {
      identity = identity &&
                 RunAttack(arch, w, x, labels, MakeAttackConfig(k, 0.0, 0.01, 10))
                     .perturbed.BitEquals(x);
    }
    zero_eps += identity;

    const std::vector<ModelWeights> same(3, w);
    const std::vector<double> fractions = WeightFractions(std::vector<std::size_t>{
        static_cast<std::size_t>(seed + 1), 7, static_cast<std::size_t>(3 * seed + 2)});
    fedavg += AggregateFedAvg(same, fractions).BitEquals(w);

    const double norm = w.L2Norm();
    clip += ClipUpdate(w, norm * 1.5).BitEquals(w) && ClipUpdate(w, norm).BitEquals(w);

    Rng noise_rng(seed);
    noise += AddGaussianNoise(w, 0.0, noise_rng).BitEquals(w);
  }
  out.Note("20 trials each: one-step " + std::to_string(one_step) + ", eps=0 " +
           std::to_string(zero_eps) + ", FedAvg " + std::to_string(fedavg) + ", clip " +
           std::to_string(clip) + ", sigma=0 " + std::to_string(noise));
  out.Require(one_step == 20, "FGSM = PGD(1, alpha=eps, no init) = BIM(1, alpha=eps)");
  out.Require(zero_eps == 20, "eps = 0 is identity");
  out.Require(fedavg == 20, "FedAvg of identical models is identity");
  out.Require(clip == 20, "clip below threshold is identity");
  out.Require(noise == 20, "sigma = 0 noise is identity");
  return out;
}

// Criterion 4 -------------------------------------------------------------

Outcome FedAvgOracle() {
  Outcome out;
  double worst = 0.0, worst_perm = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(400 + seed);
    const ModelArchitecture arch = RandomSmallArch(rng);
    std::vector<ModelWeights> models;
    for (int m = 0; m < 3; ++m) models.push_back(RandomWeights(arch, rng, 2.0));
    std::uniform_int_distribution<std::size_t> size(1, 500);
    const std::vector<std::size_t> sizes = {size(rng), size(rng), size(rng)};
    const std::size_t total = sizes[0] + sizes[1] + sizes[2];
    const ModelWeights agg = AggregateFedAvg(models, WeightFractions(sizes));

    const std::vector<double> got = agg.Flatten();
    std::vector<std::vector<double>> flat;
    for (const ModelWeights& m : models) flat.push_back(m.Flatten());
    for (std::size_t i = 0; i < got.size(); ++i) {
      double expected = 0.0;
      for (int m = 0; m < 3; ++m) {
        expected += static_cast<double>(sizes[m]) / static_cast<double>(total) * flat[m][i];
      }
      worst = std::max(worst, std::abs(got[i] - expected));
    }

    std::vector<int> order = {0, 1, 2};
    while (std::next_permutation(order.begin(), order.end())) {
      std::vector<ModelWeights> pm;
      std::vector<std::size_t> ps;
      for (int k : order) {
        pm.push_back(models[k]);
        ps.push_back(sizes[k]);
      }
      const std::vector<double> permuted = AggregateFedAvg(pm, WeightFractions(ps)).Flatten();
      for (std::size_t i = 0; i < got.size(); ++i) {
        worst_perm = std::max(worst_perm, std::abs(permuted[i] - got[i]));
      }
    }
  }
  out.Note("max abs diff vs direct " + Num(worst) + ", across permutations " +
           Num(worst_perm) + " (20 trials)");
  out.Require(worst <= 1e-12, "matches direct weighted arithmetic to 1e-12");
  out.Require(worst_perm <= 1e-12, "permutation invariant to 1e-12");
  return out;
}

// Criterion 5 -------------------------------------------------------------

Outcome DpMechanism() {
  Outcome out;
  ModelArchitecture arch;
  arch.input_shape = {1, 1, 20};
  arch.layers = {FlattenSpec{}, DenseSpec{20, 5}};
  Rng rng(5);
  std::uniform_real_distribution<double> clip_dist(0.01, 5.0), scale(0.001, 10.0);
  double worst_excess = -1e300;
  for (int trial = 0; trial < 10000; ++trial) {
    const ModelWeights delta = RandomWeights(arch, rng, scale(rng));
    const double c = clip_dist(rng);
    worst_excess = std::max(worst_excess, ClipUpdate(delta, c).L2Norm() - c);
  }
  out.Require(worst_excess <= 1e-9, "clipped norm <= C + 1e-9 on 1e4 deltas");

  ModelArchitecture big;
  big.input_shape = {1, 1, 1000};
  big.layers = {FlattenSpec{}, DenseSpec{1000, 1000}};
  const double sigma = 0.37;
  Rng noise_rng(6);
  const std::vector<double> draws =
      AddGaussianNoise(ModelWeights::Zeros(big), sigma, noise_rng).Flatten();
  double mean = 0.0;
  for (double v : draws) mean += v;
  mean /= static_cast<double>(draws.size());
  double var = 0.0;
  for (double v : draws) var += (v - mean) * (v - mean);
  const double std_dev = std::sqrt(var / static_cast<double>(draws.size() - 1));
  const double rel = std::abs(std_dev - sigma) / sigma;
  out.Require(draws.size() >= 1000000, "at least 1e6 draws");
  out.Require(rel <= 0.05, "empirical std within 5% of sigma");

  const double calibrated = CalibrateSigma(1.0, 1.0, 1e-5);
  out.Require(std::abs(calibrated - 4.8445) <= 1e-3, "calibrated sigma(1, 1, 1e-5) = 4.8445");
  out.Note("max clip excess " + Num(worst_excess) + ", noise std rel err " + Num(rel) +
           " over " + std::to_string(draws.size()) + " draws, sigma(1, 1, 1e-5) = " +
           Num(calibrated));
  return out;
}

// Criterion 6 -------------------------------------------------------------

Outcome CentralizedEquivalence() {
  Outcome out;
  std::size_t identical = 0;
  const std::uint64_t seeds[] = {0, 1, 2};
  for (std::uint64_t seed : seeds) {
    SyntheticSpec spec;
    spec.num_samples = 200;
    spec.image_size = 8;
    spec.seed = seed;
    auto ds = std::make_shared<const ImageDataset>(GenerateSynthetic(spec));
    const ModelArchitecture arch = MakePreset("desk-cnn", ds->sample_shape(), ds->num_classes);
    std::vector<ClientState> clients = MakeClients(PartitionNonIid(ds, 1, 1, 0.62, seed));
    FedConfig config;
    config.num_clients = 1;
    config.clients_per_round = 1;
    config.rounds = 3;
    config.train.local_epochs = 2;
    config.train.seed = seed;
    config.seed = seed;
    const ModelWeights init = ModelWeights::HeUniform(arch, seed);
    const FederatedResult fed = RunFederatedTraining(config, arch, clients, init);
    const ModelWeights central = TrainCentralized(arch, init, clients[0].train, config.train,
                                                  config.rounds * config.train.local_epochs);
    identical += fed.global.BitEquals(central);
  }
  out.Note(std::to_string(identical) + "/3 seeds bit-identical (3 rounds x 2 epochs vs 6 epochs)");
  out.Require(identical == 3, "single-client federation equals centralized training");
  return out;
}

// Criteria 7-9 ------------------------------------------------------------

constexpr std::size_t kTrendSeeds = 5;
const std::vector<double> kEpsGrid = {0.0, 0.01, 0.03, 0.05, 0.1};

ExperimentConfig DeskConfig(std::uint64_t seed, const std::filesystem::path& out) {
  KeyValueConfig kv =
      KeyValueConfig::Load(std::filesystem::path(FEDADV_SOURCE_DIR) / "configs" / "desk.conf");
  kv.Set("seed", std::to_string(seed));
  kv.Set("output.dir", out.string());
  kv.Set("output.cache", "false");
  return ExperimentConfigFromKeyValues(kv);
}

struct SeedRun {
  std::vector<ExperimentReport> grid;  // PGD-20 over kEpsGrid
  ExperimentReport pgd40;              // PGD-40 at eps = 0.03
  PreparedData data;
  TrainedFederation trained;
};

double Mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string Join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + Num(x);
  return s;
}

std::vector<Outcome> TrendReproduction(std::vector<SeedRun>& runs, double& elapsed) {
  const auto start = Clock::now();
  const auto dir = testing::TempDir("acceptance-trend");
  for (std::uint64_t seed = 0; seed < kTrendSeeds; ++seed) {
    const ExperimentConfig config = DeskConfig(seed, dir);
    SeedRun run;
    run.data = PrepareData(config);
    run.trained = TrainFederation(config, run.data);
    for (double eps : kEpsGrid) {
      const AttackConfig attack =
          ApplySweepPoint(config.attack, {SweepParameter::kEpsilon, eps});
      run.grid.push_back(EvaluateAttacks(config, run.data, run.trained, attack,
                                         SweepPoint{SweepParameter::kEpsilon, eps}));
    }
    AttackConfig pgd40 = config.attack;
    pgd40.iterations = 40;
    run.pgd40 = EvaluateAttacks(config, run.data, run.trained, pgd40);
    runs.push_back(std::move(run));
  }
  elapsed = Seconds(start);

  const std::size_t i001 = 1, i003 = 2, i01 = 4;
  std::vector<double> acc, gap, pgd_delta, aetr_minus_benign, rho;
  for (const SeedRun& r : runs) {
    acc.push_back(r.grid[i003].acc);
    gap.push_back(r.grid[i01].aasr - r.grid[i001].aasr);
    pgd_delta.push_back(r.pgd40.aasr - r.grid[i003].aasr);
    // AETR is undefined when no adversary flips a sample.
    if (!std::isnan(r.grid[i003].aetr)) {
      aetr_minus_benign.push_back(r.grid[i003].aetr - r.grid[i003].mean_benign_asr);
    }
    std::vector<double> diag, benign;
    for (const ExperimentReport& rep : r.grid) {
      diag.push_back(rep.mean_diagonal_asr);
      benign.push_back(rep.mean_benign_asr);
    }
    rho.push_back(SpearmanCorrelation(diag, benign));
  }

  std::vector<Outcome> outs(5);
  outs[0].Note("mean ACC " + Num(Mean(acc)) + " (per seed " + Join(acc) + ")");
  outs[0].Require(Mean(acc) >= 0.90, "mean clean ACC >= 0.90");
  outs[1].Note("mean AASR(0.1) - AASR(0.01) = " + Num(Mean(gap)) + " (per seed " + Join(gap) +
               ")");
  outs[1].Require(Mean(gap) >= 0.10, "gap >= 10 pp");
  outs[2].Note("mean AASR(PGD-40) - AASR(PGD-20) at eps 0.03 = " + Num(Mean(pgd_delta)) +
               " (per seed " + Join(pgd_delta) + ")");
  outs[2].Require(Mean(pgd_delta) >= -0.02, "PGD-40 >= PGD-20 - 2 pp");
  outs[3].Note("mean AETR - mean benign ASR at eps 0.03 = " + Num(Mean(aetr_minus_benign)) +
               " over " + std::to_string(aetr_minus_benign.size()) +
               " seeds with defined AETR (" + Join(aetr_minus_benign) + ")");
  outs[3].Require(aetr_minus_benign.size() >= 3, "AETR defined on at least 3 seeds");
  outs[3].Require(!aetr_minus_benign.empty() && Mean(aetr_minus_benign) >= 0.0,
                  "AETR >= mean off-diagonal ASR");
  outs[4].Note("mean Spearman(diagonal, benign) over eps grid = " + Num(Mean(rho)) +
               " (per seed " + Join(rho) + ")");
  outs[4].Require(Mean(rho) >= 0.6, "correlation >= 0.6");
  for (Outcome& o : outs) {
    o.Require(elapsed < 600.0, "total runtime < 10 min (" + Num(elapsed) + " s)");
  }
  return outs;
}

Outcome ComputeLinearity(const SeedRun& run) {
  Outcome out;
  const std::size_t adversary = 0;
  const Shard& test = run.data.shards[adversary].test;
  const Batch batch = ShardBatch(test, std::min<std::size_t>(100, test.size()));
  const ModelWeights& model = run.trained.client_models[adversary];
  AttackConfig pgd20 = MakeAttackConfig(AttackKind::kPgd, 0.03, 0.007, 20);
  AttackConfig pgd40 = MakeAttackConfig(AttackKind::kPgd, 0.03, 0.007, 40);
  pgd20.seed = pgd40.seed = 8;
  std::vector<double> t20, t40;
  RunTimedAttack(run.data.arch, model, batch.images, batch.labels, pgd20);  // warm-up
  for (int rep = 0; rep < 7; ++rep) {
    t20.push_back(
        RunTimedAttack(run.data.arch, model, batch.images, batch.labels, pgd20).wall_seconds);
    t40.push_back(
        RunTimedAttack(run.data.arch, model, batch.images, batch.labels, pgd40).wall_seconds);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double ratio = median(t40) / median(t20);
  out.Note("median PGD-40 " + Num(median(t40)) + " s / PGD-20 " + Num(median(t20)) +
           " s = " + Num(ratio) + " on " + std::to_string(batch.labels.size()) +
           " samples, 7 repeats");
  out.Require(ratio >= 1.7 && ratio <= 2.3, "ratio in [1.7, 2.3]");
  return out;
}

std::string Slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome Determinism() {
  Outcome out;
  std::string results[2];
  for (int k = 0; k < 2; ++k) {
    const auto dir = testing::TempDir("acceptance-det-" + std::to_string(k));
    const ExperimentConfig config = DeskConfig(0, dir);
    const EmittedFiles files = EmitCsv(RunSweep(config), config, dir);
    results[k] = Slurp(files.results);
  }
  out.Note("results.csv " + std::to_string(results[0].size()) + " bytes per run");
  out.Require(!results[0].empty(), "results.csv written");
  out.Require(results[0] == results[1], "byte-identical results.csv");
  return out;
}

// Criterion 10 ------------------------------------------------------------

template <typename E>
bool Raises(const std::vector<std::uint8_t>& bytes) {
  try {
    DecodeFads(bytes);
  } catch (const E&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

void PutU32At(std::vector<std::uint8_t>& b, std::size_t offset, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[offset + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

Outcome FormatRobustness() {
  Outcome out;
  SyntheticSpec spec;
  spec.num_samples = 50;
  spec.image_size = 16;
  const ImageDataset ds = GenerateSynthetic(spec);
  const std::vector<std::uint8_t> bytes = EncodeFads(ds);
  const ImageDataset back = DecodeFads(bytes);
  const bool pixels_equal =
      back.pixels.size() == ds.pixels.size() &&
      std::memcmp(back.pixels.data(), ds.pixels.data(), ds.pixels.size() * sizeof(float)) == 0;
  out.Require(pixels_equal && back.labels == ds.labels, "decoded dataset bit-equal");
  out.Require(EncodeFads(back) == bytes, "re-encoding is byte-identical");
  const auto dir = testing::TempDir("acceptance-fads");
  SaveDataset(ds, dir / "d.fads");
  out.Require(EncodeFads(LoadDataset(dir / "d.fads")) == bytes, "file round trip");

  // Header: magic[4], version, count, channels, height, width, classes (u32 LE).
  std::vector<std::uint8_t> b = bytes;
  b[0] = 'X';
  out.Require(Raises<BadMagicError>(b), "bad magic");
  b = bytes;
  PutU32At(b, 4, 9);
  out.Require(Raises<UnsupportedVersionError>(b), "unsupported version");
  b = bytes;
  b.resize(b.size() - 3);
  out.Require(Raises<TruncatedFileError>(b), "truncated payload");
  b = bytes;
  b.resize(10);
  out.Require(Raises<TruncatedFileError>(b), "truncated header");
  b = bytes;
  PutU32At(b, 12, 0);
  out.Require(Raises<HeaderError>(b), "zero channels");
  b = bytes;
  PutU32At(b, 24, 1);
  out.Require(Raises<LabelRangeError>(b) || Raises<HeaderError>(b), "label out of range");
  b = bytes;
  PutU32At(b, kFadsHeaderBytes + 1, 0x40000000u);  // 2.0f
  out.Require(Raises<PixelRangeError>(b), "pixel out of range");

  Rng rng(10);
  std::uniform_int_distribution<std::size_t> header_pos(0, kFadsHeaderBytes - 1),
      any_pos(0, bytes.size() - 1);
  std::uniform_int_distribution<int> byte(0, 255);
  std::size_t survived = 0, typed = 0;
  const std::size_t trials = 10000;
  for (std::size_t t = 0; t < trials; ++t) {
    b = bytes;
    for (int k = 0; k < 1 + static_cast<int>(t % 3); ++k) {
      b[t % 2 ? header_pos(rng) : any_pos(rng)] = static_cast<std::uint8_t>(byte(rng));
    }
    if (t % 7 == 0) b.resize(any_pos(rng));
    try {
      DecodeFads(b);
      ++survived;
    } catch (const DatasetFormatError&) {
      ++typed;
    } catch (...) {
    }
  }
  out.Note("round trip bit-exact; " + std::to_string(typed) + " of " + std::to_string(trials) +
           " corruptions rejected with a format error, " + std::to_string(survived) +
           " decoded, " + std::to_string(trials - typed - survived) + " other");
  out.Require(typed + survived == trials, "only format errors on corrupted input");
  return out;
}

int Report(const std::string& id, const std::string& name, const Outcome& o) {
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name
            << "): " << o.detail << std::endl;
  return o.pass ? 0 : 1;
}

template <typename F>
Outcome Guarded(F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    Outcome o;
    o.Require(false, std::string("exception: ") + e.what());
    return o;
  }
}

int Main() {
  int failures = 0;
  failures += Report("1", "gradient correctness", Guarded(GradientCorrectness));
  failures += Report("2", "attack budget invariant", Guarded(AttackBudget));
  failures += Report("3", "definitional collapses", Guarded(DefinitionalCollapses));
  failures += Report("4", "FedAvg oracle", Guarded(FedAvgOracle));
  failures += Report("5", "DP mechanism", Guarded(DpMechanism));
  failures += Report("6", "centralized equivalence", Guarded(CentralizedEquivalence));

  std::vector<SeedRun> runs;
  double elapsed = 0.0;
  std::vector<Outcome> trend;
  try {
    trend = TrendReproduction(runs, elapsed);
  } catch (const std::exception& e) {
    trend.assign(5, Outcome{});
    for (Outcome& o : trend) o.Require(false, std::string("exception: ") + e.what());
  }
  const char* names[] = {"clean ACC", "AASR rises with eps", "PGD-40 vs PGD-20",
                         "AETR vs benign ASR", "diagonal/benign correlation"};
  for (std::size_t i = 0; i < trend.size(); ++i) {
    failures += Report(std::string("7") + static_cast<char>('a' + i), names[i], trend[i]);
  }
  std::cout << "     desk-scale trend run: " << kTrendSeeds << " seeds in " << Num(elapsed)
            << " s" << std::endl;

  if (runs.empty()) {
    Outcome o;
    o.Require(false, "no trained desk-scale run available");
    failures += Report("8", "compute linearity", o);
  } else {
    failures += Report("8", "compute linearity", Guarded([&] { return ComputeLinearity(runs[0]); }));
  }
  failures += Report("9", "determinism", Guarded(Determinism));
  failures += Report("10", "format robustness", Guarded(FormatRobustness));
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}

}  // namespace
}  // namespace fedadv

int main() { return fedadv::Main(); }
