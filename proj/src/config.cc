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
#include "fedadv/config.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>

#include "fedadv/csv.h"

namespace fedadv {
namespace {

std::string_view Trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void BadValue(const std::string& key, std::string_view value,
                           const std::string& expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + key +
                    ": expected " + expected);
}

double ParseDouble(const std::string& key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    BadValue(key, v, "a finite number");
  }
  return out;
}

std::uint64_t ParseU64(const std::string& key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    BadValue(key, v, "a non-negative integer");
  }
  return out;
}

std::size_t ParseSize(const std::string& key, std::string_view v) {
  return static_cast<std::size_t>(ParseU64(key, v));
}

bool ParseBool(const std::string& key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  BadValue(key, v, "true or false");
}

std::vector<double> ParseDoubleList(const std::string& key, std::string_view v) {
  std::vector<double> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    const std::string_view item = Trim(v.substr(0, comma));
    if (item.empty()) BadValue(key, v, "a comma-separated list of numbers");
    out.push_back(ParseDouble(key, item));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

std::string FormatList(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    out += FormatDouble(values[i]);
  }
  return out;
}

std::string FormatBool(bool b) { return b ? "true" : "false"; }

struct Field {
  const char* key;
  bool affects_training;
  std::function<void(ExperimentConfig&, const std::string&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define FEDADV_SIZE_FIELD(KEY, TRAIN, MEMBER)                                  \
  Field {                                                                      \
    KEY, TRAIN,                                                                \
        [](ExperimentConfig& c, const std::string& k, std::string_view v) {    \
          c.MEMBER = ParseSize(k, v);                                          \
        },                                                                     \
        [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); }     \
  }
#define FEDADV_DOUBLE_FIELD(KEY, TRAIN, MEMBER)                                \
  Field {                                                                      \
    KEY, TRAIN,                                                                \
        [](ExperimentConfig& c, const std::string& k, std::string_view v) {    \
          c.MEMBER = ParseDouble(k, v);                                        \
        },                                                                     \
        [](const ExperimentConfig& c) { return FormatDouble(c.MEMBER); }       \
  }
#define FEDADV_BOOL_FIELD(KEY, TRAIN, MEMBER)                                  \
  Field {                                                                      \
    KEY, TRAIN,                                                                \
        [](ExperimentConfig& c, const std::string& k, std::string_view v) {    \
          c.MEMBER = ParseBool(k, v);                                          \
        },                                                                     \
        [](const ExperimentConfig& c) { return FormatBool(c.MEMBER); }         \
  }

const std::vector<Field>& Fields() {
  static const std::vector<Field> fields = {
      Field{"seed", true,
            [](ExperimentConfig& c, const std::string& k, std::string_view v) {
              c.seed = ParseU64(k, v);
            },
            [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
      Field{"dataset.path", true,
            [](ExperimentConfig& c, const std::string&, std::string_view v) {
              if (v.empty()) {
                c.data.path.reset();
              } else {
                c.data.path = std::filesystem::path(std::string(v));
              }
            },
            [](const ExperimentConfig& c) {
              return c.data.path ? c.data.path->string() : std::string();
            }},
      FEDADV_SIZE_FIELD("dataset.synthetic.samples", true, data.synthetic.num_samples),
      FEDADV_SIZE_FIELD("dataset.synthetic.image_size", true, data.synthetic.image_size),
      FEDADV_SIZE_FIELD("dataset.synthetic.classes", true, data.synthetic.num_classes),
      FEDADV_DOUBLE_FIELD("dataset.synthetic.noise", true, data.synthetic.noise_level),
      FEDADV_BOOL_FIELD("dataset.sort_by_label", true, data.sort_by_label),
      FEDADV_SIZE_FIELD("dataset.chunks_per_client", true, data.chunks_per_client),
      FEDADV_DOUBLE_FIELD("dataset.train_fraction", true, data.train_fraction),
      FEDADV_DOUBLE_FIELD("augment.h_flip_prob", true, data.augment.h_flip_prob),
      FEDADV_DOUBLE_FIELD("augment.rotation_degrees", true, data.augment.rotation_degrees),
      Field{"augment.normalize_mean", true,
            [](ExperimentConfig& c, const std::string& k, std::string_view v) {
              if (v.empty()) {
                c.data.augment.normalize_mean.reset();
              } else {
                c.data.augment.normalize_mean = ParseDoubleList(k, v);
              }
            },
            [](const ExperimentConfig& c) {
              return c.data.augment.normalize_mean
                         ? FormatList(*c.data.augment.normalize_mean)
                         : std::string();
            }},
      Field{"augment.normalize_std", true,
            [](ExperimentConfig& c, const std::string& k, std::string_view v) {
              if (v.empty()) {
                c.data.augment.normalize_std.reset();
              } else {
                c.data.augment.normalize_std = ParseDoubleList(k, v);
              }
            },
            [](const ExperimentConfig& c) {
              return c.data.augment.normalize_std
                         ? FormatList(*c.data.augment.normalize_std)
                         : std::string();
            }},
      FEDADV_SIZE_FIELD("fed.num_clients", true, fed.num_clients),
      FEDADV_SIZE_FIELD("fed.rounds", true, fed.rounds),
      FEDADV_SIZE_FIELD("fed.clients_per_round", true, fed.clients_per_round),
      FEDADV_SIZE_FIELD("fed.k", false, fed.k),
      FEDADV_DOUBLE_FIELD("train.learning_rate", true, fed.train.learning_rate),
      FEDADV_SIZE_FIELD("train.batch_size", true, fed.train.batch_size),
      FEDADV_SIZE_FIELD("train.local_epochs", true, fed.train.local_epochs),
      FEDADV_BOOL_FIELD("dp.enabled", true, fed.dp.enabled),
      FEDADV_DOUBLE_FIELD("dp.clip_norm", true, fed.dp.clip_norm),
      FEDADV_DOUBLE_FIELD("dp.epsilon", true, fed.dp.epsilon),
      FEDADV_DOUBLE_FIELD("dp.delta", true, fed.dp.delta),
      Field{"dp.sigma", true,
            [](ExperimentConfig& c, const std::string& k, std::string_view v) {
              if (v.empty()) {
                c.fed.dp.noise_sigma.reset();
              } else {
                c.fed.dp.noise_sigma = ParseDouble(k, v);
              }
            },
            [](const ExperimentConfig& c) {
              return c.fed.dp.noise_sigma ? FormatDouble(*c.fed.dp.noise_sigma)
                                          : std::string();
            }},
      FEDADV_BOOL_FIELD("dp.apply_downlink", true, fed.dp.apply_downlink),
      Field{"model.preset", true,
            [](ExperimentConfig& c, const std::string& k, std::string_view v) {
              if (v != "paper-cnn" && v != "desk-cnn") {
                BadValue(k, v, "paper-cnn or desk-cnn");
              }
              c.preset = std::string(v);
            },
            [](const ExperimentConfig& c) { return c.preset; }},
      Field{"attack.kind", false,
            [](ExperimentConfig& c, const std::string& k, std::string_view v) {
              try {
                c.attack.kind = ParseAttackKind(v);
              } catch (const std::invalid_argument&) {
                BadValue(k, v, "FGSM, BIM or PGD");
              }
            },
            [](const ExperimentConfig& c) { return AttackKindName(c.attack.kind); }},
      FEDADV_DOUBLE_FIELD("attack.epsilon", false, attack.epsilon),
      FEDADV_DOUBLE_FIELD("attack.alpha", false, attack.alpha),
      FEDADV_SIZE_FIELD("attack.iterations", false, attack.iterations),
      FEDADV_BOOL_FIELD("attack.random_init", false, attack.random_init),
      FEDADV_DOUBLE_FIELD("attack.pixel_min", false, attack.pixel_min),
      FEDADV_DOUBLE_FIELD("attack.pixel_max", false, attack.pixel_max),
      FEDADV_SIZE_FIELD("attack.samples_per_role", false, attack_samples_per_role),
      FEDADV_BOOL_FIELD("attack.rotate_adversary", false, rotate_adversary),
      FEDADV_SIZE_FIELD("attack.adversary_id", false, adversary_id),
      FEDADV_BOOL_FIELD("attack.only_initially_correct", false, only_initially_correct),
      Field{"sweep.parameter", false,
            [](ExperimentConfig& c, const std::string& k, std::string_view v) {
              if (v.empty()) return;
              if (!c.sweep) c.sweep.emplace();
              try {
                c.sweep->parameter = ParseSweepParameter(v);
              } catch (const std::invalid_argument&) {
                BadValue(k, v, "epsilon, alpha or iterations");
              }
            },
            [](const ExperimentConfig& c) {
              return c.sweep ? SweepParameterName(c.sweep->parameter) : std::string();
            }},
      Field{"sweep.values", false,
            [](ExperimentConfig& c, const std::string& k, std::string_view v) {
              if (v.empty()) return;
              if (!c.sweep) c.sweep.emplace();
              c.sweep->values = ParseDoubleList(k, v);
            },
            [](const ExperimentConfig& c) {
              return c.sweep ? FormatList(c.sweep->values) : std::string();
            }},
      Field{"output.dir", false,
            [](ExperimentConfig& c, const std::string&, std::string_view v) {
              c.output_dir = std::filesystem::path(std::string(v));
            },
            [](const ExperimentConfig& c) { return c.output_dir.string(); }},
      FEDADV_BOOL_FIELD("output.cache", false, use_cache),
      FEDADV_BOOL_FIELD("output.wall_time_in_results", false, wall_time_in_results),
  };
  return fields;
}

#undef FEDADV_SIZE_FIELD
#undef FEDADV_DOUBLE_FIELD
#undef FEDADV_BOOL_FIELD

const Field* FindField(std::string_view key) {
  for (const Field& f : Fields()) {
    if (key == f.key) return &f;
  }
  return nullptr;
}

std::string RenderFields(const ExperimentConfig& config, bool training_only) {
  std::vector<std::pair<std::string, std::string>> lines;
  for (const Field& f : Fields()) {
    if (training_only && !f.affects_training) continue;
    lines.emplace_back(f.key, f.get(config));
  }
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& [k, v] : lines) out += k + "=" + v + "\n";
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::Parse(std::string_view text) {
  KeyValueConfig config;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key(Trim(line.substr(0, eq)));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    }
    if (config.entries_.contains(key)) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key " + key);
    }
    config.entries_.emplace(key, std::string(Trim(line.substr(eq + 1))));
  }
  return config;
}

KeyValueConfig KeyValueConfig::Load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  try {
    return Parse(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void KeyValueConfig::Set(std::string key, std::string value) {
  entries_[std::move(key)] = std::move(value);
}

std::optional<std::string> KeyValueConfig::Get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string SweepParameterName(SweepParameter p) {
  switch (p) {
    case SweepParameter::kEpsilon:
      return "epsilon";
    case SweepParameter::kAlpha:
      return "alpha";
    case SweepParameter::kIterations:
      return "iterations";
  }
  return "unknown";
}

std::vector<double> DefaultSweepGrid(SweepParameter p) {
  switch (p) {
    case SweepParameter::kEpsilon:
      return {0.0, 0.01, 0.03, 0.05, 0.1};
    case SweepParameter::kAlpha:
      return {0.001, 0.003, 0.005, 0.007, 0.01};
    case SweepParameter::kIterations:
      return {1, 5, 10, 20, 40};
  }
  return {};
}

SweepParameter ParseSweepParameter(std::string_view name) {
  if (name == "epsilon") return SweepParameter::kEpsilon;
  if (name == "alpha") return SweepParameter::kAlpha;
  if (name == "iterations") return SweepParameter::kIterations;
  throw std::invalid_argument("unknown sweep parameter '" + std::string(name) + "'");
}

void ExperimentConfig::Validate() const {
  try {
    fed.Validate();
    attack.Validate();
    if (data.chunks_per_client == 0) {
      throw ConfigError("dataset.chunks_per_client must be >= 1");
    }
    if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0)) {
      throw ConfigError("dataset.train_fraction must lie in (0, 1)");
    }
    if (attack_samples_per_role == 0) {
      throw ConfigError("attack.samples_per_role must be >= 1");
    }
    if (!rotate_adversary && adversary_id >= fed.num_clients) {
      throw ConfigError("attack.adversary_id must name one of the " +
                        std::to_string(fed.num_clients) + " clients");
    }
    if (sweep) {
      if (sweep->values.empty()) throw ConfigError("sweep.values must not be empty");
      for (double v : sweep->values) {
        if (sweep->parameter == SweepParameter::kIterations &&
            (v < 1.0 || v != std::floor(v))) {
          throw ConfigError("iteration sweep values must be positive integers");
        }
        if (sweep->parameter == SweepParameter::kEpsilon && v < 0.0) {
          throw ConfigError("epsilon sweep values must be >= 0");
        }
        if (sweep->parameter == SweepParameter::kAlpha && !(v > 0.0)) {
          throw ConfigError("alpha sweep values must be > 0");
        }
      }
    }
    if (preset != "paper-cnn" && preset != "desk-cnn") {
      throw ConfigError("unknown model preset '" + preset + "'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::string ExperimentConfig::ToText() const { return RenderFields(*this, false); }

std::string ExperimentConfig::TrainingKey() const { return RenderFields(*this, true); }

ExperimentConfig PresetDefaults(std::string_view preset) {
  ExperimentConfig config;
  config.attack = MakeAttackConfig(AttackKind::kPgd, 0.03, 0.007, 20);
  if (preset == "paper-cnn") {
    config.preset = "paper-cnn";
    config.fed.rounds = 50;
    config.fed.train.local_epochs = 20;
  } else if (preset == "desk-cnn") {
    config.preset = "desk-cnn";
    config.fed.rounds = 10;
    config.fed.train.local_epochs = 3;
  } else {
    throw ConfigError("unknown model preset '" + std::string(preset) +
                      "' (expected paper-cnn or desk-cnn)");
  }
  return config;
}

ExperimentConfig ExperimentConfigFromKeyValues(const KeyValueConfig& kv,
                                               std::optional<std::string> preset_override) {
  std::string preset = "paper-cnn";
  if (preset_override) {
    preset = *preset_override;
  } else if (auto p = kv.Get("model.preset")) {
    preset = *p;
  }
  ExperimentConfig config = PresetDefaults(preset);
  for (const auto& [key, value] : kv.entries()) {
    if (key == "model.preset" && preset_override) continue;
    const Field* field = FindField(key);
    if (!field) throw ConfigError("unknown config key '" + key + "'");
    field->set(config, key, value);
  }
  if (!kv.Get("attack.random_init")) {
    config.attack.random_init = config.attack.kind == AttackKind::kPgd;
  }
  if (config.attack.kind == AttackKind::kFgsm) config.attack.iterations = 1;
  if (config.sweep && config.sweep->values.empty()) {
    config.sweep->values = DefaultSweepGrid(config.sweep->parameter);
  }
  PropagateSeed(config);
  config.Validate();
  return config;
}

void PropagateSeed(ExperimentConfig& config) {
  config.fed.seed = config.seed;
  config.fed.train.seed = config.seed;
  config.data.synthetic.seed = config.seed;
  config.attack.seed = config.seed;
}

}  // namespace fedadv
