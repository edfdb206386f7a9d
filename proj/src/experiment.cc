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
#include "fedadv/experiment.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "fedadv/csv.h"
#include "fedadv/random.h"

#ifndef FEDADV_VERSION
#define FEDADV_VERSION "0.0.0"
#endif

namespace fedadv {
namespace {

constexpr char kCacheMagic[4] = {'F', 'A', 'D', 'W'};
constexpr std::uint32_t kCacheVersion = 1;

ExperimentConfig Resolved(const ExperimentConfig& config) {
  ExperimentConfig out = config;
  PropagateSeed(out);
  return out;
}

std::uint64_t Fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

class ByteWriter {
 public:
  template <typename T>
  void Put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    bytes_.append(buf, sizeof(T));
  }
  void PutDoubles(std::span<const double> v) {
    for (double d : v) Put(d);
  }
  const std::string& bytes() const { return bytes_; }
  void Append(const char* data, std::size_t n) { bytes_.append(data, n); }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string context)
      : bytes_(bytes), context_(std::move(context)) {}

  template <typename T>
  T Get() {
    if (bytes_.size() - pos_ < sizeof(T)) {
      throw std::runtime_error(context_ + ": truncated at byte " + std::to_string(pos_));
    }
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::vector<double> GetDoubles(std::size_t n) {
    std::vector<double> out(n);
    for (double& d : out) d = Get<double>();
    return out;
  }
  std::string_view Take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw std::runtime_error(context_ + ": truncated at byte " + std::to_string(pos_));
    }
    const std::string_view out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::string context_;
};

double MeanOf(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string ContextOf(const ExperimentConfig& config) {
  return "experiment (preset " + config.preset + ", seed " + std::to_string(config.seed) +
         ")";
}

// Runs `step`, re-raising anything but configuration errors with the
// experiment context prepended.
template <typename F>
auto WithContext(const ExperimentConfig& config, const std::string& step, F&& body) {
  try {
    return body();
  } catch (const ConfigError&) {
    throw;
  } catch (const ExperimentError&) {
    throw;
  } catch (const std::exception& e) {
    throw ExperimentError(ContextOf(config) + ", " + step + ": " + e.what());
  }
}

std::vector<double> Broadcast(const std::vector<double>& values, std::size_t channels,
                              const char* what) {
  if (values.size() == 1) return std::vector<double>(channels, values[0]);
  if (values.size() != channels) {
    throw ConfigError(std::string(what) + " has " + std::to_string(values.size()) +
                      " values for " + std::to_string(channels) + " channels");
  }
  return values;
}

}  // namespace

std::string Version() { return FEDADV_VERSION; }

PreparedData PrepareData(const ExperimentConfig& raw) {
  const ExperimentConfig config = Resolved(raw);
  config.Validate();
  return WithContext(config, "preparing data", [&] {
    PreparedData out;
    ImageDataset ds = config.data.path ? LoadDataset(*config.data.path)
                                       : GenerateSynthetic(config.data.synthetic);
    if (config.data.sort_by_label) ds = SortedByLabel(ds);
    auto dataset = std::make_shared<const ImageDataset>(std::move(ds));

    out.arch = MakePreset(config.preset, dataset->sample_shape(), dataset->num_classes);
    const AugmentOptions& aug = config.data.augment;
    if (aug.normalize_mean.has_value() != aug.normalize_std.has_value()) {
      throw ConfigError("augment.normalize_mean and augment.normalize_std must be set together");
    }
    if (aug.normalize_mean) {
      NormalizeSpec norm{Broadcast(*aug.normalize_mean, dataset->channels, "augment.normalize_mean"),
                         Broadcast(*aug.normalize_std, dataset->channels, "augment.normalize_std")};
      for (double s : norm.stddev) {
        if (s == 0.0) throw ConfigError("augment.normalize_std must be non-zero");
      }
      out.arch.layers.insert(out.arch.layers.begin(), LayerSpec(std::move(norm)));
    }
    out.arch.Validate();

    out.shards = PartitionNonIid(dataset, config.fed.num_clients,
                                 config.data.chunks_per_client,
                                 config.data.train_fraction, config.seed);
    if (aug.h_flip_prob > 0.0 || aug.rotation_degrees > 0.0) {
      AugmentOptions geometric;
      geometric.h_flip_prob = aug.h_flip_prob;
      geometric.rotation_degrees = aug.rotation_degrees;
      auto augmented =
          std::make_shared<const ImageDataset>(Augment(*dataset, geometric, config.seed));
      for (ClientShards& s : out.shards) s.train.source = augmented;
    }
    out.dataset = std::move(dataset);
    return out;
  });
}

std::uint64_t TrainingCacheKey(const ExperimentConfig& raw) {
  const ExperimentConfig config = Resolved(raw);
  std::uint64_t h = Fnv1a(Version());
  h = Fnv1a(config.TrainingKey(), h);
  if (config.data.path) h = Fnv1a(ReadFileBytes(*config.data.path), h);
  return h;
}

std::filesystem::path TrainingCachePath(const ExperimentConfig& config) {
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(TrainingCacheKey(config)));
  return config.output_dir / "cache" / ("fed-" + std::string(hex) + ".fadw");
}

void SaveTrainedFederation(const TrainedFederation& trained,
                           const std::filesystem::path& path) {
  ByteWriter w;
  w.Append(kCacheMagic, sizeof(kCacheMagic));
  w.Put(kCacheVersion);
  w.Put(static_cast<std::uint32_t>(trained.client_models.size()));
  const std::vector<double> global = trained.global.Flatten();
  w.Put(static_cast<std::uint64_t>(global.size()));
  w.Put(static_cast<std::uint32_t>(trained.history.size()));
  w.PutDoubles(global);
  for (const ModelWeights& m : trained.client_models) {
    const std::vector<double> flat = m.Flatten();
    if (flat.size() != global.size()) {
      throw std::invalid_argument("client model size differs from the global model");
    }
    w.PutDoubles(flat);
  }
  for (const RoundRecord& r : trained.history) {
    w.Put(static_cast<std::uint64_t>(r.round));
    w.Put(r.global_train_loss);
    w.Put(r.global_val_acc);
    w.Put(static_cast<std::uint8_t>(r.dp_enabled ? 1 : 0));
    w.Put(r.sigma);
    w.Put(static_cast<std::uint32_t>(r.per_client_val_acc.size()));
    w.PutDoubles(r.per_client_val_acc);
  }
  std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainedFederation LoadTrainedFederation(const std::filesystem::path& path,
                                        const ModelArchitecture& arch) {
  const std::string bytes = ReadFileBytes(path);
  ByteReader r(bytes, path.string());
  if (r.Take(4) != std::string_view(kCacheMagic, 4)) {
    throw std::runtime_error(path.string() + ": not a weight cache file");
  }
  if (const auto v = r.Get<std::uint32_t>(); v != kCacheVersion) {
    throw std::runtime_error(path.string() + ": unsupported cache version " +
                             std::to_string(v));
  }
  const auto clients = r.Get<std::uint32_t>();
  const auto params = r.Get<std::uint64_t>();
  const auto rounds = r.Get<std::uint32_t>();
  const ModelWeights like = ModelWeights::Zeros(arch);
  if (params != like.NumParameters()) {
    throw std::runtime_error(path.string() + ": holds " + std::to_string(params) +
                             " parameters, architecture needs " +
                             std::to_string(like.NumParameters()));
  }
  TrainedFederation out;
  out.global = ModelWeights::Unflatten(like, r.GetDoubles(params));
  for (std::uint32_t c = 0; c < clients; ++c) {
    out.client_models.push_back(ModelWeights::Unflatten(like, r.GetDoubles(params)));
  }
  for (std::uint32_t i = 0; i < rounds; ++i) {
    RoundRecord rec;
    rec.round = static_cast<std::size_t>(r.Get<std::uint64_t>());
    rec.global_train_loss = r.Get<double>();
    rec.global_val_acc = r.Get<double>();
    rec.dp_enabled = r.Get<std::uint8_t>() != 0;
    rec.sigma = r.Get<double>();
    rec.per_client_val_acc = r.GetDoubles(r.Get<std::uint32_t>());
    out.history.push_back(std::move(rec));
  }
  if (!r.done()) throw std::runtime_error(path.string() + ": trailing bytes");
  out.loaded_from_cache = true;
  return out;
}

TrainedFederation TrainFederation(const ExperimentConfig& raw, const PreparedData& data) {
  const ExperimentConfig config = Resolved(raw);
  return WithContext(config, "federated training", [&] {
    std::filesystem::path cache;
    if (config.use_cache) {
      cache = TrainingCachePath(config);
      if (std::filesystem::exists(cache)) {
        try {
          TrainedFederation loaded = LoadTrainedFederation(cache, data.arch);
          if (loaded.client_models.size() == config.fed.num_clients) return loaded;
        } catch (const std::runtime_error&) {
          // Unreadable cache entries are rebuilt below.
        }
      }
    }
    std::vector<ClientState> clients = MakeClients(data.shards);
    FederatedResult result = RunFederatedTraining(config.fed, data.arch, clients);
    TrainedFederation out;
    out.global = std::move(result.global);
    out.history = std::move(result.history);
    for (ClientState& c : clients) out.client_models.push_back(std::move(c.local_weights));
    if (config.use_cache) SaveTrainedFederation(out, cache);
    return out;
  });
}

ExperimentReport EvaluateAttacks(const ExperimentConfig& raw, const PreparedData& data,
                                 const TrainedFederation& trained,
                                 const AttackConfig& attack,
                                 std::optional<SweepPoint> point) {
  const ExperimentConfig config = Resolved(raw);
  return WithContext(config, "attack evaluation", [&] {
    const std::size_t n = trained.client_models.size();
    if (n != data.shards.size()) {
      throw std::invalid_argument(std::to_string(n) + " client models for " +
                                  std::to_string(data.shards.size()) + " client shards");
    }
    attack.Validate();

    std::vector<std::size_t> roles;
    if (config.rotate_adversary) {
      roles.resize(n);
      std::iota(roles.begin(), roles.end(), std::size_t{0});
    } else {
      roles.push_back(config.adversary_id);
    }

    ExperimentReport report;
    report.config_text = config.ToText();
    report.version = Version();
    report.dataset_name = data.dataset->name;
    report.seed = config.seed;
    report.attack = attack;
    report.sweep_point = point;
    report.history = trained.history;

    std::vector<RoleBatch> batches;
    for (std::size_t a : roles) {
      const Shard& test = data.shards.at(a).test;
      const std::size_t count = std::min(config.attack_samples_per_role, test.size());
      if (count == 0) {
        throw std::invalid_argument("adversary " + std::to_string(a) + " has no test samples");
      }
      std::vector<std::size_t> positions(count);
      std::iota(positions.begin(), positions.end(), std::size_t{0});
      Batch batch = GatherBatch(test, positions);
      AttackConfig role_attack = attack;
      role_attack.seed = DeriveSeed(config.seed, {Tag(Stream::kAttackInit), a});
      TimedAttack timed;
      try {
        timed = RunTimedAttack(data.arch, trained.client_models[a], batch.images,
                               batch.labels, role_attack);
      } catch (const std::exception& e) {
        throw std::runtime_error("adversary " + std::to_string(a) + ": " + e.what());
      }
      report.timings.push_back(RoleTiming{a, count, timed.wall_seconds});
      RoleBatch rb;
      rb.adversary_id = a;
      rb.batch = std::move(timed.batch);
      rb.sample_ids.assign(test.indices.begin(),
                           test.indices.begin() + static_cast<std::ptrdiff_t>(count));
      batches.push_back(std::move(rb));
    }

    TransferEvaluation eval = EvaluateTransfer(data.arch, trained.client_models, batches,
                                               config.only_initially_correct);
    report.transfer = std::move(eval.matrix);
    report.pairs = std::move(eval.pairs);

    for (std::size_t i = 0; i < n; ++i) {
      report.client_acc.push_back(
          CleanAccuracy(data.arch, trained.client_models[i], data.shards[i].test));
    }
    report.acc = MeanOf(report.client_acc);
    report.aasr = AverageAsr(report.transfer, false);

    std::vector<double> diagonal;
    for (std::size_t a : roles) diagonal.push_back(report.transfer.asr(a, a));
    report.mean_diagonal_asr = MeanOf(diagonal);
    report.mean_benign_asr = n > 1 ? AverageAsr(report.transfer, true) : std::nan("");

    report.role_aetr.assign(n, std::nan(""));
    std::vector<double> defined;
    for (std::size_t a : roles) {
      std::vector<std::vector<LabelPair>> benign;
      for (std::size_t t = 0; t < n; ++t) {
        if (t != a) benign.push_back(report.pairs[a][t]);
      }
      try {
        report.role_aetr[a] = Aetr(report.pairs[a][a], benign);
        defined.push_back(report.role_aetr[a]);
      } catch (const UndefinedMetricError&) {
        // Left as NaN: no benign clients or no adversary flips.
      }
    }
    report.aetr = MeanOf(defined);
    return report;
  });
}

ExperimentReport RunExperiment(const ExperimentConfig& raw) {
  const ExperimentConfig config = Resolved(raw);
  const PreparedData data = PrepareData(config);
  const TrainedFederation trained = TrainFederation(config, data);
  return EvaluateAttacks(config, data, trained, config.attack);
}

AttackConfig ApplySweepPoint(const AttackConfig& base, SweepPoint point) {
  AttackConfig out = base;
  switch (point.parameter) {
    case SweepParameter::kEpsilon:
      out.epsilon = point.value;
      break;
    case SweepParameter::kAlpha:
      out.alpha = point.value;
      break;
    case SweepParameter::kIterations:
      if (point.value < 1.0 || point.value != std::floor(point.value)) {
        throw ConfigError("iteration count " + FormatDouble(point.value) +
                          " is not a positive integer");
      }
      out.iterations = static_cast<std::size_t>(point.value);
      break;
  }
  return out;
}

std::vector<ExperimentReport> RunSweep(const ExperimentConfig& config) {
  if (!config.sweep) return {RunExperiment(config)};
  return RunSweep(config, config.sweep->parameter, config.sweep->values);
}

std::vector<ExperimentReport> RunSweep(const ExperimentConfig& raw,
                                       SweepParameter parameter,
                                       std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("sweep grid must not be empty");
  const ExperimentConfig config = Resolved(raw);
  std::vector<AttackConfig> attacks;
  for (double v : grid) {
    attacks.push_back(ApplySweepPoint(config.attack, SweepPoint{parameter, v}));
    attacks.back().Validate();
  }
  const PreparedData data = PrepareData(config);
  const TrainedFederation trained = TrainFederation(config, data);
  std::vector<ExperimentReport> reports;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    reports.push_back(
        EvaluateAttacks(config, data, trained, attacks[i], SweepPoint{parameter, grid[i]}));
  }
  return reports;
}

EmittedFiles EmitCsv(std::span<const ExperimentReport> reports,
                     const ExperimentConfig& config,
                     const std::filesystem::path& output_dir) {
  EmittedFiles files;
  files.results = output_dir / "results.csv";
  files.rounds = output_dir / "rounds.csv";
  files.sweep = output_dir / "sweep.csv";
  files.summary = output_dir / "summary.csv";
  files.timings = output_dir / "timings.csv";
  files.manifest = output_dir / "manifest.txt";
  try {
    std::filesystem::create_directories(output_dir);
  } catch (const std::filesystem::filesystem_error& e) {
    throw std::runtime_error("cannot create output directory " + output_dir.string() +
                             ": " + e.what());
  }

  const auto attack_fields = [](const AttackConfig& a) {
    return CsvRow{AttackKindName(a.kind), FormatDouble(a.epsilon), FormatDouble(a.alpha),
                  std::to_string(a.iterations)};
  };

  std::vector<CsvRow> results;
  std::vector<CsvRow> timings;
  std::vector<CsvRow> sweep;
  std::vector<CsvRow> summary;
  for (const ExperimentReport& r : reports) {
    const CsvRow attack = attack_fields(r.attack);
    const std::size_t n = r.transfer.size();
    for (std::size_t s = 0; s < n; ++s) {
      std::string wall;
      for (const RoleTiming& t : r.timings) {
        if (t.adversary_id == s && config.wall_time_in_results) {
          wall = FormatDouble(t.wall_seconds);
        }
      }
      for (std::size_t t = 0; t < n; ++t) {
        if (!r.transfer.populated(s, t)) continue;
        CsvRow row{r.dataset_name};
        row.insert(row.end(), attack.begin(), attack.end());
        row.insert(row.end(),
                   {std::to_string(s), std::to_string(t), FormatDouble(r.client_acc[t]),
                    FormatDouble(r.transfer.asr(s, t)), FormatDouble(r.aasr),
                    FormatDouble(r.role_aetr[s]), wall, std::to_string(r.seed)});
        results.push_back(std::move(row));
      }
    }
    for (const RoleTiming& t : r.timings) {
      CsvRow row = attack;
      row.insert(row.end(), {std::to_string(t.adversary_id), std::to_string(t.samples),
                             FormatDouble(t.wall_seconds),
                             FormatDouble(t.wall_seconds / static_cast<double>(t.samples))});
      timings.push_back(std::move(row));
    }
    CsvRow point{r.sweep_point ? SweepParameterName(r.sweep_point->parameter) : "",
                 r.sweep_point ? FormatDouble(r.sweep_point->value) : ""};
    point.insert(point.end(), attack.begin(), attack.end());
    point.insert(point.end(),
                 {FormatDouble(r.acc), FormatDouble(r.aasr), FormatDouble(r.mean_diagonal_asr),
                  FormatDouble(r.mean_benign_asr), FormatDouble(r.aetr),
                  std::to_string(r.seed)});
    if (r.sweep_point) sweep.push_back(point);
    summary.push_back(std::move(point));
  }

  const CsvRow point_header{"parameter",  "value",  "attack_kind",       "epsilon",
                            "alpha",      "iterations", "acc",           "aasr",
                            "mean_diagonal_asr", "mean_benign_asr", "aetr", "seed"};
  const std::string step = "writing results to " + output_dir.string();
  WithContext(config, step, [&] {
    WriteCsv(files.results, CsvRow(std::begin(kResultsColumns), std::end(kResultsColumns)),
             results);
    WriteRoundsCsv(reports.empty() ? std::span<const RoundRecord>{}
                                   : std::span<const RoundRecord>(reports.front().history),
                   files.rounds);
    WriteCsv(files.sweep, point_header, sweep);
    WriteCsv(files.summary, point_header, summary);
    WriteCsv(files.timings,
             {"attack_kind", "epsilon", "alpha", "iterations", "adversary_id", "samples",
              "wall_time_s", "seconds_per_sample"},
             timings);
    std::ofstream manifest(files.manifest, std::ios::binary | std::ios::trunc);
    if (!manifest) throw std::runtime_error("cannot write " + files.manifest.string());
    manifest << "version=" << Version() << "\n" << Resolved(config).ToText();
    return 0;
  });
  return files;
}

}  // namespace fedadv
