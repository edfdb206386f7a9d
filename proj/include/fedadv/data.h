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
#ifndef FEDADV_DATA_H_
#define FEDADV_DATA_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedadv/tensor.h"

namespace fedadv {

// Images are kept as 32-bit floats, matching the on-disk format, so a
// save/load cycle is exact. Batches are widened to double on extraction.
struct ImageDataset {
  std::string name;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t num_classes = 0;
  float pixel_min = 0.0f;
  float pixel_max = 1.0f;
  std::vector<float> pixels;  // [N, C, H, W] row-major.
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const { return channels * height * width; }
  Shape sample_shape() const { return {channels, height, width}; }
  std::span<const float> sample(std::size_t i) const;
  std::span<float> sample(std::size_t i);

  // Throws std::invalid_argument on any violated invariant.
  void Validate() const;
  bool operator==(const ImageDataset&) const = default;
};

// A subset of a dataset, addressed by sample index. Shards share the
// immutable source.
struct Shard {
  std::shared_ptr<const ImageDataset> source;
  std::vector<std::size_t> indices;

  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
};

Shard WholeDataset(std::shared_ptr<const ImageDataset> dataset);

struct Batch {
  Tensor images;
  std::vector<int> labels;
};

// Gathers the given positions of `shard` (positions index into
// shard.indices) into a [B, C, H, W] batch.
Batch GatherBatch(const Shard& shard, std::span<const std::size_t> positions);
// The first `count` samples of the shard, or all of it when count is 0.
Batch ShardBatch(const Shard& shard, std::size_t count = 0);

// FADS container errors. Each failure mode has its own type.
class DatasetFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class BadMagicError : public DatasetFormatError {
 public:
  using DatasetFormatError::DatasetFormatError;
};
class UnsupportedVersionError : public DatasetFormatError {
 public:
  using DatasetFormatError::DatasetFormatError;
};
class TruncatedFileError : public DatasetFormatError {
 public:
  TruncatedFileError(std::uint64_t expected, std::uint64_t actual);
  std::uint64_t expected_bytes() const { return expected_; }
  std::uint64_t actual_bytes() const { return actual_; }

 private:
  std::uint64_t expected_;
  std::uint64_t actual_;
};
class LabelRangeError : public DatasetFormatError {
 public:
  using DatasetFormatError::DatasetFormatError;
};
class PixelRangeError : public DatasetFormatError {
 public:
  using DatasetFormatError::DatasetFormatError;
};
class HeaderError : public DatasetFormatError {
 public:
  using DatasetFormatError::DatasetFormatError;
};

inline constexpr std::uint32_t kFadsVersion = 1;
inline constexpr std::size_t kFadsHeaderBytes = 28;

std::vector<std::uint8_t> EncodeFads(const ImageDataset& dataset);
ImageDataset DecodeFads(std::span<const std::uint8_t> bytes,
                        std::string name = "dataset");
void SaveDataset(const ImageDataset& dataset, const std::filesystem::path& path);
// The dataset name is taken from the file stem.
ImageDataset LoadDataset(const std::filesystem::path& path);

struct SyntheticSpec {
  std::size_t num_samples = 900;
  std::size_t image_size = 16;
  std::size_t num_classes = 2;
  double noise_level = 0.3;
  std::uint64_t seed = 0;
};

// Single-channel images where class k carries a bright Gaussian blob at a
// class-specific position over a dim textured background. Blob position,
// amplitude and background texture are all jittered in proportion to
// noise_level; with noise_level == 0 every image of a class is identical.
// Labels are balanced (up to remainder) and the sample order is shuffled.
ImageDataset GenerateSynthetic(const SyntheticSpec& spec);

struct AugmentOptions {
  double h_flip_prob = 0.0;
  double rotation_degrees = 0.0;
  // Per-channel (x - mean) / std; a single value applies to all channels.
  std::optional<std::vector<double>> normalize_mean;
  std::optional<std::vector<double>> normalize_std;
};

// Per-sample random horizontal flip and rotation (nearest neighbour, zero
// fill) followed by optional normalization. Labels and shapes are kept.
ImageDataset Augment(const ImageDataset& dataset, const AugmentOptions& options,
                     std::uint64_t seed);

void FlipHorizontal(std::span<float> image, std::size_t channels,
                    std::size_t height, std::size_t width);
void Rotate(std::span<float> image, std::size_t channels, std::size_t height,
            std::size_t width, double degrees);

// Returns a copy whose samples are stably ordered by label.
ImageDataset SortedByLabel(const ImageDataset& dataset);

}  // namespace fedadv

#endif  // FEDADV_DATA_H_
