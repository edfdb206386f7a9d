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
#ifndef FEDADV_ATTACKS_H_
#define FEDADV_ATTACKS_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedadv/model.h"
#include "fedadv/tensor.h"

namespace fedadv {

enum class AttackKind { kFgsm, kBim, kPgd };

std::string AttackKindName(AttackKind kind);
AttackKind ParseAttackKind(std::string_view name);

// Untargeted L-infinity evasion attack settings. Budgets are in pixel units.
struct AttackConfig {
  AttackKind kind = AttackKind::kPgd;
  double epsilon = 0.03;
  double alpha = 0.007;      // per-step size; FGSM ignores it
  std::size_t iterations = 20;  // FGSM always takes one step
  bool random_init = true;
  double pixel_min = 0.0;
  double pixel_max = 1.0;
  std::uint64_t seed = 0;

  void Validate() const;
};

// Config with the conventional random_init default (on for PGD only).
AttackConfig MakeAttackConfig(AttackKind kind, double epsilon, double alpha,
                              std::size_t iterations);

struct AdversarialBatch {
  Tensor clean;
  Tensor perturbed;
  std::vector<int> labels;
  AttackConfig config;
};

// x_hat = clamp(x + eps * sgn(dL/dx)), with sgn(0) = 0.
AdversarialBatch Fgsm(const ModelArchitecture& arch, const ModelWeights& weights,
                      const Tensor& x, std::span<const int> labels,
                      const AttackConfig& config);

// `iterations` FGSM steps of size alpha from x, each projected back into the
// epsilon ball and the pixel range.
AdversarialBatch Bim(const ModelArchitecture& arch, const ModelWeights& weights,
                     const Tensor& x, std::span<const int> labels,
                     const AttackConfig& config);

// BIM started from a uniform random point of the epsilon ball when
// random_init is set. The start of sample n is drawn from (seed, n), so the
// result does not depend on batch composition.
AdversarialBatch Pgd(const ModelArchitecture& arch, const ModelWeights& weights,
                     const Tensor& x, std::span<const int> labels,
                     const AttackConfig& config);

// Dispatches on config.kind.
AdversarialBatch RunAttack(const ModelArchitecture& arch,
                           const ModelWeights& weights, const Tensor& x,
                           std::span<const int> labels, const AttackConfig& config);

struct TimedAttack {
  AdversarialBatch batch;
  double wall_seconds = 0.0;
};

// RunAttack timed with a monotonic clock around the attack call only.
TimedAttack RunTimedAttack(const ModelArchitecture& arch,
                           const ModelWeights& weights, const Tensor& x,
                           std::span<const int> labels, const AttackConfig& config);

// Elementwise clamp of candidate into [anchor - eps, anchor + eps].
Tensor ProjectLinf(const Tensor& candidate, const Tensor& anchor, double epsilon);

// max_i |a_i - b_i|.
double LinfDistance(const Tensor& a, const Tensor& b);

// True when the perturbation respects the budget (with 1e-9 slack) and every
// pixel lies in range.
bool SatisfiesBudget(const AdversarialBatch& batch);

}  // namespace fedadv

#endif  // FEDADV_ATTACKS_H_
