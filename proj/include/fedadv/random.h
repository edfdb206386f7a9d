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
#ifndef FEDADV_RANDOM_H_
#define FEDADV_RANDOM_H_

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedadv {

using Rng = std::mt19937_64;

inline std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a root seed and a path of
// integer keys (round, client, sample, ...). Order of keys matters.
inline std::uint64_t DeriveSeed(std::uint64_t root,
                                std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = SplitMix64(root);
  for (std::uint64_t k : keys) h = SplitMix64(h ^ SplitMix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng MakeRng(std::uint64_t root,
                   std::initializer_list<std::uint64_t> keys = {}) {
  return Rng(DeriveSeed(root, keys));
}

// Stream tags so derived seeds for different purposes never collide.
enum class Stream : std::uint64_t {
  kInit = 1,
  kEpochShuffle = 2,
  kDropout = 3,
  kSampling = 4,
  kDownlinkNoise = 5,
  kUplinkNoise = 6,
  kPartition = 7,
  kAttackInit = 8,
  kSynthetic = 9,
  kAugment = 10,
};

inline std::uint64_t Tag(Stream s) { return static_cast<std::uint64_t>(s); }

}  // namespace fedadv

#endif  // FEDADV_RANDOM_H_
