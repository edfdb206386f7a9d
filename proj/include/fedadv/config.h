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
#ifndef FEDADV_CONFIG_H_
#define FEDADV_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fedadv/attacks.h"
#include "fedadv/data.h"
#include "fedadv/fed.h"

namespace fedadv {

// Any problem with configuration text or values. The CLI maps it to exit
// code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat "key = value" text. '#' starts a comment, blank lines are ignored and
// keys are dotted section paths such as fed.rounds.
class KeyValueConfig {
 public:
  static KeyValueConfig Parse(std::string_view text);
  static KeyValueConfig Load(const std::filesystem::path& path);

  void Set(std::string key, std::string value);
  std::optional<std::string> Get(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

enum class SweepParameter { kEpsilon, kAlpha, kIterations };

std::string SweepParameterName(SweepParameter p);
SweepParameter ParseSweepParameter(std::string_view name);

// Grid used when a sweep names its parameter but no values. The alpha grid
// contains the default step 0.007.
std::vector<double> DefaultSweepGrid(SweepParameter p);

struct SweepSpec {
  SweepParameter parameter = SweepParameter::kEpsilon;
  std::vector<double> values;
};

struct DataConfig {
  // FADS file to load; the synthetic generator is used when unset.
  std::optional<std::filesystem::path> path;
  SyntheticSpec synthetic;
  bool sort_by_label = false;
  std::size_t chunks_per_client = 2;
  double train_fraction = kDefaultTrainFraction;
  // Flip/rotation are applied to the data; normalization, when set, becomes
  // a fixed first layer of the model.
  AugmentOptions augment;
};

struct ExperimentConfig {
  DataConfig data;
  FedConfig fed;
  std::string preset = "paper-cnn";
  AttackConfig attack;
  std::optional<SweepSpec> sweep;
  bool rotate_adversary = true;
  std::size_t adversary_id = 0;  // used when rotate_adversary is off
  std::size_t attack_samples_per_role = 100;
  bool only_initially_correct = false;
  std::filesystem::path output_dir = "out";
  bool use_cache = true;
  bool wall_time_in_results = false;
  std::uint64_t seed = 0;

  // Throws ConfigError on any invalid field.
  void Validate() const;
  // Canonical key=value text of every field, in sorted key order.
  std::string ToText() const;
  // Canonical text of only the fields that influence training.
  std::string TrainingKey() const;
};

// Defaults for a preset: "paper-cnn" (50 rounds, 20 local epochs) or
// "desk-cnn" (10 rounds, 3 local epochs). Everything else is shared.
ExperimentConfig PresetDefaults(std::string_view preset);

// Starts from PresetDefaults (preset from `preset_override`, else the
// model.preset key, else paper-cnn) and applies every key. Unknown keys and
// malformed values raise ConfigError.
ExperimentConfig ExperimentConfigFromKeyValues(
    const KeyValueConfig& kv, std::optional<std::string> preset_override = {});

// Copies the experiment seed into every component that draws randomness.
void PropagateSeed(ExperimentConfig& config);

}  // namespace fedadv

#endif  // FEDADV_CONFIG_H_
