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
#include "fedadv/data.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>

#include "fedadv/random.h"

namespace fedadv {
namespace {

constexpr char kMagic[4] = {'F', 'A', 'D', 'S'};

void PutU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t GetU32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  }
  return v;
}

std::uint32_t CheckedU32(std::size_t v, const char* field) {
  if (v > 0xffffffffULL) {
    throw std::invalid_argument(std::string(field) + " does not fit in u32");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::span<const float> ImageDataset::sample(std::size_t i) const {
  return std::span<const float>(pixels).subspan(i * sample_size(), sample_size());
}

std::span<float> ImageDataset::sample(std::size_t i) {
  return std::span<float>(pixels).subspan(i * sample_size(), sample_size());
}

void ImageDataset::Validate() const {
  if (labels.empty()) throw std::invalid_argument("dataset is empty");
  if (channels == 0 || height == 0 || width == 0) {
    throw std::invalid_argument("dataset images have a zero dimension");
  }
  if (num_classes == 0) throw std::invalid_argument("dataset has no classes");
  if (pixels.size() != labels.size() * sample_size()) {
    throw std::invalid_argument("dataset holds " + std::to_string(pixels.size()) +
                                " pixels for " + std::to_string(labels.size()) +
                                " samples of " + std::to_string(sample_size()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw std::invalid_argument("label " + std::to_string(labels[i]) +
                                  " of sample " + std::to_string(i) +
                                  " is outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
  }
  for (float p : pixels) {
    if (!(p >= pixel_min && p <= pixel_max)) {
      throw std::invalid_argument("pixel value " + std::to_string(p) +
                                  " outside declared range");
    }
  }
}

Shard WholeDataset(std::shared_ptr<const ImageDataset> dataset) {
  Shard shard;
  shard.indices.resize(dataset->size());
  std::iota(shard.indices.begin(), shard.indices.end(), std::size_t{0});
  shard.source = std::move(dataset);
  return shard;
}

Batch GatherBatch(const Shard& shard, std::span<const std::size_t> positions) {
  const ImageDataset& ds = *shard.source;
  const std::size_t per = ds.sample_size();
  std::vector<double> data(positions.size() * per);
  Batch batch;
  batch.labels.reserve(positions.size());
  for (std::size_t n = 0; n < positions.size(); ++n) {
    const std::size_t idx = shard.indices.at(positions[n]);
    const std::span<const float> img = ds.sample(idx);
    std::copy(img.begin(), img.end(), data.begin() + static_cast<std::ptrdiff_t>(n * per));
    batch.labels.push_back(ds.labels[idx]);
  }
  batch.images = Tensor(Shape{positions.size(), ds.channels, ds.height, ds.width},
                        std::move(data));
  return batch;
}

Batch ShardBatch(const Shard& shard, std::size_t count) {
  if (count == 0 || count > shard.size()) count = shard.size();
  std::vector<std::size_t> positions(count);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  return GatherBatch(shard, positions);
}

TruncatedFileError::TruncatedFileError(std::uint64_t expected,
                                       std::uint64_t actual)
    : DatasetFormatError("truncated FADS file: expected " +
                         std::to_string(expected) + " bytes, got " +
                         std::to_string(actual)),
      expected_(expected),
      actual_(actual) {}

std::vector<std::uint8_t> EncodeFads(const ImageDataset& dataset) {
  dataset.Validate();
  if (dataset.num_classes > 256) {
    throw std::invalid_argument("FADS stores labels as u8; " +
                                std::to_string(dataset.num_classes) +
                                " classes do not fit");
  }
  for (float p : dataset.pixels) {
    if (!(p >= 0.0f && p <= 1.0f)) {
      throw PixelRangeError("FADS pixels must lie in [0, 1], found " +
                            std::to_string(p));
    }
  }
  std::vector<std::uint8_t> out;
  out.reserve(kFadsHeaderBytes + dataset.size() * (1 + 4 * dataset.sample_size()));
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  PutU32(out, kFadsVersion);
  PutU32(out, CheckedU32(dataset.size(), "count"));
  PutU32(out, CheckedU32(dataset.channels, "channels"));
  PutU32(out, CheckedU32(dataset.height, "height"));
  PutU32(out, CheckedU32(dataset.width, "width"));
  PutU32(out, CheckedU32(dataset.num_classes, "num_classes"));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out.push_back(static_cast<std::uint8_t>(dataset.labels[i]));
    for (float p : dataset.sample(i)) {
      std::uint32_t bits;
      std::memcpy(&bits, &p, sizeof bits);
      PutU32(out, bits);
    }
  }
  return out;
}

ImageDataset DecodeFads(std::span<const std::uint8_t> bytes, std::string name) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw BadMagicError("not a FADS file: bad magic bytes");
  }
  if (bytes.size() < kFadsHeaderBytes) {
    throw TruncatedFileError(kFadsHeaderBytes, bytes.size());
  }
  const std::uint32_t version = GetU32(bytes, 4);
  if (version != kFadsVersion) {
    throw UnsupportedVersionError("unsupported FADS version " +
                                  std::to_string(version));
  }
  ImageDataset ds;
  ds.name = std::move(name);
  const std::uint64_t count = GetU32(bytes, 8);
  ds.channels = GetU32(bytes, 12);
  ds.height = GetU32(bytes, 16);
  ds.width = GetU32(bytes, 20);
  ds.num_classes = GetU32(bytes, 24);
  if (count == 0) throw HeaderError("FADS header declares zero samples");
  if (ds.channels == 0 || ds.height == 0 || ds.width == 0) {
    throw HeaderError("FADS header declares a zero image dimension");
  }
  if (ds.num_classes == 0 || ds.num_classes > 256) {
    throw HeaderError("FADS header declares " + std::to_string(ds.num_classes) +
                      " classes; expected 1..256");
  }
  // Each factor is < 2^32, so bound the product before it can overflow.
  const unsigned __int128 per_sample =
      static_cast<unsigned __int128>(ds.channels) * ds.height * ds.width;
  const unsigned __int128 expected128 =
      kFadsHeaderBytes + count * (1 + 4 * per_sample);
  if (expected128 > (static_cast<unsigned __int128>(1) << 62)) {
    throw HeaderError("FADS header describes an impossibly large dataset");
  }
  const std::uint64_t expected = static_cast<std::uint64_t>(expected128);
  if (bytes.size() < expected) throw TruncatedFileError(expected, bytes.size());
  if (bytes.size() > expected) {
    throw DatasetFormatError("FADS file has " +
                             std::to_string(bytes.size() - expected) +
                             " trailing bytes");
  }
  const std::size_t per = ds.sample_size();
  ds.pixels.resize(count * per);
  ds.labels.resize(count);
  std::size_t offset = kFadsHeaderBytes;
  for (std::size_t i = 0; i < count; ++i) {
    const int label = bytes[offset++];
    if (static_cast<std::size_t>(label) >= ds.num_classes) {
      throw LabelRangeError("sample " + std::to_string(i) + " has label " +
                            std::to_string(label) + " but the file declares " +
                            std::to_string(ds.num_classes) + " classes");
    }
    ds.labels[i] = label;
    for (std::size_t k = 0; k < per; ++k, offset += 4) {
      const std::uint32_t bits = GetU32(bytes, offset);
      float p;
      std::memcpy(&p, &bits, sizeof p);
      if (!(p >= 0.0f && p <= 1.0f)) {
        throw PixelRangeError("sample " + std::to_string(i) +
                              " has pixel value " + std::to_string(p) +
                              " outside [0, 1]");
      }
      ds.pixels[i * per + k] = p;
    }
  }
  return ds;
}

void SaveDataset(const ImageDataset& dataset, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = EncodeFads(dataset);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ImageDataset LoadDataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return DecodeFads(bytes, path.stem().string());
}

ImageDataset GenerateSynthetic(const SyntheticSpec& spec) {
  if (spec.num_classes == 0 || spec.num_classes > 256) {
    throw std::invalid_argument("synthetic data needs 1..256 classes");
  }
  if (spec.num_samples < spec.num_classes) {
    throw std::invalid_argument("synthetic data needs at least one sample per class");
  }
  if (spec.image_size < 4) {
    throw std::invalid_argument("synthetic images must be at least 4x4");
  }
  if (!(spec.noise_level >= 0.0) || !std::isfinite(spec.noise_level)) {
    throw std::invalid_argument("noise level must be finite and >= 0");
  }
  const std::size_t s = spec.image_size;
  const double noise = spec.noise_level;
  ImageDataset ds;
  ds.name = "synthetic";
  ds.channels = 1;
  ds.height = s;
  ds.width = s;
  ds.num_classes = spec.num_classes;
  ds.pixels.resize(spec.num_samples * s * s);
  ds.labels.resize(spec.num_samples);

  std::vector<int> order(spec.num_samples);
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = static_cast<int>(i % spec.num_classes);
  }
  Rng shuffle_rng = MakeRng(spec.seed, {Tag(Stream::kSynthetic)});
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  const double centre = (static_cast<double>(s) - 1.0) / 2.0;
  const double radius = static_cast<double>(s) / 4.0;
  const double blob_sigma = static_cast<double>(s) / 8.0;
  for (std::size_t i = 0; i < spec.num_samples; ++i) {
    const int label = order[i];
    ds.labels[i] = label;
    Rng rng = MakeRng(spec.seed, {Tag(Stream::kSynthetic), i + 1});
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double angle = std::numbers::pi / 4.0 +
                         2.0 * std::numbers::pi * label /
                             static_cast<double>(spec.num_classes);
    const double cy = centre + radius * std::sin(angle) + 1.5 * noise * gauss(rng);
    const double cx = centre + radius * std::cos(angle) + 1.5 * noise * gauss(rng);
    const double amplitude = 0.6 * (1.0 + 0.3 * noise * gauss(rng));
    const double fy = 0.3 + 0.9 * unit(rng), fx = 0.3 + 0.9 * unit(rng);
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    std::span<float> img = ds.sample(i);
    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) {
        const double dy = static_cast<double>(y) - cy;
        const double dx = static_cast<double>(x) - cx;
        const double blob =
            amplitude * std::exp(-(dy * dy + dx * dx) / (2.0 * blob_sigma * blob_sigma));
        const double texture =
            noise * (0.1 * std::sin(fy * static_cast<double>(y) +
                                    fx * static_cast<double>(x) + phase) +
                     0.12 * gauss(rng));
        img[y * s + x] = static_cast<float>(std::clamp(0.2 + blob + texture, 0.0, 1.0));
      }
    }
  }
  return ds;
}

void FlipHorizontal(std::span<float> image, std::size_t channels,
                    std::size_t height, std::size_t width) {
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      float* row = image.data() + (c * height + y) * width;
      std::reverse(row, row + width);
    }
  }
}

void Rotate(std::span<float> image, std::size_t channels, std::size_t height,
            std::size_t width, double degrees) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = (static_cast<double>(height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(width) - 1.0) / 2.0;
  const std::vector<float> src(image.begin(), image.end());
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      // Inverse-map each destination pixel into the source image.
      const double dy = static_cast<double>(y) - cy;
      const double dx = static_cast<double>(x) - cx;
      const double sy = std::round(cs * dy + sn * dx + cy);
      const double sx = std::round(-sn * dy + cs * dx + cx);
      const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<double>(height) &&
                          sx < static_cast<double>(width);
      for (std::size_t c = 0; c < channels; ++c) {
        image[(c * height + y) * width + x] =
            inside ? src[(c * height + static_cast<std::size_t>(sy)) * width +
                         static_cast<std::size_t>(sx)]
                   : 0.0f;
      }
    }
  }
}

ImageDataset Augment(const ImageDataset& dataset, const AugmentOptions& options,
                     std::uint64_t seed) {
  if (!(options.h_flip_prob >= 0.0 && options.h_flip_prob <= 1.0)) {
    throw std::invalid_argument("flip probability must lie in [0, 1]");
  }
  if (!(options.rotation_degrees >= 0.0 && options.rotation_degrees <= 180.0)) {
    throw std::invalid_argument("rotation range must lie in [0, 180] degrees");
  }
  if (options.normalize_mean.has_value() != options.normalize_std.has_value()) {
    throw std::invalid_argument("normalization needs both mean and std");
  }
  ImageDataset out = dataset;
  const std::size_t c = out.channels, h = out.height, w = out.width;
  for (std::size_t i = 0; i < out.size(); ++i) {
    Rng rng = MakeRng(seed, {Tag(Stream::kAugment), i});
    std::span<float> img = out.sample(i);
    if (options.h_flip_prob > 0.0 &&
        std::bernoulli_distribution(options.h_flip_prob)(rng)) {
      FlipHorizontal(img, c, h, w);
    }
    if (options.rotation_degrees > 0.0) {
      std::uniform_real_distribution<double> angle(-options.rotation_degrees,
                                                   options.rotation_degrees);
      Rotate(img, c, h, w, angle(rng));
    }
  }
  if (options.normalize_mean) {
    const auto expand = [c](const std::vector<double>& v, const char* what) {
      if (v.size() == 1) return std::vector<double>(c, v[0]);
      if (v.size() != c) {
        throw std::invalid_argument(std::string("normalization ") + what +
                                    " needs 1 or " + std::to_string(c) +
                                    " values");
      }
      return v;
    };
    const std::vector<double> mean = expand(*options.normalize_mean, "mean");
    const std::vector<double> stddev = expand(*options.normalize_std, "std");
    for (double sd : stddev) {
      if (!(sd != 0.0) || !std::isfinite(sd)) {
        throw std::invalid_argument("normalization std must be finite and non-zero");
      }
    }
    float lo = 0, hi = 0;
    for (std::size_t k = 0; k < c; ++k) {
      const float a = static_cast<float>((out.pixel_min - mean[k]) / stddev[k]);
      const float b = static_cast<float>((out.pixel_max - mean[k]) / stddev[k]);
      lo = k == 0 ? std::min(a, b) : std::min({lo, a, b});
      hi = k == 0 ? std::max(a, b) : std::max({hi, a, b});
    }
    const std::size_t plane = h * w;
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
      const std::size_t k = (i / plane) % c;
      out.pixels[i] = std::clamp(
          static_cast<float>((out.pixels[i] - mean[k]) / stddev[k]), lo, hi);
    }
    out.pixel_min = lo;
    out.pixel_max = hi;
  }
  return out;
}

ImageDataset SortedByLabel(const ImageDataset& dataset) {
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dataset.labels[a] < dataset.labels[b];
  });
  ImageDataset out = dataset;
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.labels[i] = dataset.labels[order[i]];
    const std::span<const float> src = dataset.sample(order[i]);
    std::copy(src.begin(), src.end(), out.sample(i).begin());
  }
  return out;
}

}  // namespace fedadv
