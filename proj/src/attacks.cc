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
#include "fedadv/attacks.h"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "fedadv/random.h"

namespace fedadv {
namespace {

double Sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void RequireKind(const AttackConfig& config, AttackKind kind) {
  if (config.kind != kind) {
    throw std::invalid_argument("attack config is " + AttackKindName(config.kind) +
                                ", expected " + AttackKindName(kind));
  }
  config.Validate();
}

// Attacks accept a single [C, H, W] sample as well as a [B, C, H, W] batch.
Tensor AsBatch(const Tensor& x) {
  if (x.rank() == 3) {
    Shape s = x.shape();
    s.insert(s.begin(), 1);
    return x.Reshaped(std::move(s));
  }
  return x;
}

// Clamps v into the ball around anchor, then into the pixel range. Both are
// boxes containing the anchor, so this is the projection onto their
// intersection.
void ProjectInPlace(Tensor& v, const Tensor& anchor, const AttackConfig& config) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double lo = anchor[i] - config.epsilon;
    const double hi = anchor[i] + config.epsilon;
    v[i] = std::clamp(std::clamp(v[i], lo, hi), config.pixel_min, config.pixel_max);
  }
}

AdversarialBatch Finish(const Tensor& x, Tensor perturbed,
                        std::span<const int> labels, const AttackConfig& config) {
  AdversarialBatch out;
  out.clean = x;
  out.perturbed = perturbed.Reshaped(x.shape());
  out.labels.assign(labels.begin(), labels.end());
  out.config = config;
  return out;
}

AdversarialBatch Iterate(const ModelArchitecture& arch,
                         const ModelWeights& weights, const Tensor& x,
                         std::span<const int> labels, const AttackConfig& config,
                         bool random_start) {
  const Tensor anchor = AsBatch(x);
  Tensor adv = anchor;
  if (random_start && config.epsilon > 0.0) {
    const std::size_t per = anchor.size() / anchor.dim(0);
    std::uniform_real_distribution<double> start(-config.epsilon, config.epsilon);
    for (std::size_t n = 0; n < anchor.dim(0); ++n) {
      Rng rng = MakeRng(config.seed, {Tag(Stream::kAttackInit), n});
      for (std::size_t k = 0; k < per; ++k) {
        double& v = adv[n * per + k];
        v = std::clamp(v + start(rng), config.pixel_min, config.pixel_max);
      }
    }
  }
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const Tensor grad = InputGradient(arch, weights, adv, labels);
    for (std::size_t i = 0; i < adv.size(); ++i) {
      adv[i] = adv[i] + config.alpha * Sign(grad[i]);
    }
    ProjectInPlace(adv, anchor, config);
  }
  return Finish(x, std::move(adv), labels, config);
}

}  // namespace

std::string AttackKindName(AttackKind kind) {
  switch (kind) {
    case AttackKind::kFgsm:
      return "FGSM";
    case AttackKind::kBim:
      return "BIM";
    case AttackKind::kPgd:
      return "PGD";
  }
  return "unknown";
}

AttackKind ParseAttackKind(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (upper == "FGSM") return AttackKind::kFgsm;
  if (upper == "BIM") return AttackKind::kBim;
  if (upper == "PGD") return AttackKind::kPgd;
  throw std::invalid_argument("unknown attack kind '" + std::string(name) +
                              "' (expected FGSM, BIM or PGD)");
}

void AttackConfig::Validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("attack epsilon must be finite and >= 0");
  }
  if (kind != AttackKind::kFgsm && !(alpha > 0.0)) {
    throw std::invalid_argument("attack step alpha must be > 0");
  }
  if (iterations == 0) throw std::invalid_argument("attack needs >= 1 iteration");
  if (!(pixel_min < pixel_max)) {
    throw std::invalid_argument("attack pixel range is empty");
  }
}

AttackConfig MakeAttackConfig(AttackKind kind, double epsilon, double alpha,
                              std::size_t iterations) {
  AttackConfig config;
  config.kind = kind;
  config.epsilon = epsilon;
  config.alpha = alpha;
  config.iterations = kind == AttackKind::kFgsm ? 1 : iterations;
  config.random_init = kind == AttackKind::kPgd;
  return config;
}

AdversarialBatch Fgsm(const ModelArchitecture& arch, const ModelWeights& weights,
                      const Tensor& x, std::span<const int> labels,
                      const AttackConfig& config) {
  RequireKind(config, AttackKind::kFgsm);
  const Tensor batch = AsBatch(x);
  const Tensor grad = InputGradient(arch, weights, batch, labels);
  Tensor adv = batch;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    adv[i] = std::clamp(adv[i] + config.epsilon * Sign(grad[i]), config.pixel_min,
                        config.pixel_max);
  }
  return Finish(x, std::move(adv), labels, config);
}

AdversarialBatch Bim(const ModelArchitecture& arch, const ModelWeights& weights,
                     const Tensor& x, std::span<const int> labels,
                     const AttackConfig& config) {
  RequireKind(config, AttackKind::kBim);
  return Iterate(arch, weights, x, labels, config, false);
}

AdversarialBatch Pgd(const ModelArchitecture& arch, const ModelWeights& weights,
                     const Tensor& x, std::span<const int> labels,
                     const AttackConfig& config) {
  RequireKind(config, AttackKind::kPgd);
  return Iterate(arch, weights, x, labels, config, config.random_init);
}

AdversarialBatch RunAttack(const ModelArchitecture& arch,
                           const ModelWeights& weights, const Tensor& x,
                           std::span<const int> labels, const AttackConfig& config) {
  switch (config.kind) {
    case AttackKind::kFgsm:
      return Fgsm(arch, weights, x, labels, config);
    case AttackKind::kBim:
      return Bim(arch, weights, x, labels, config);
    case AttackKind::kPgd:
      return Pgd(arch, weights, x, labels, config);
  }
  throw std::invalid_argument("unknown attack kind");
}

TimedAttack RunTimedAttack(const ModelArchitecture& arch,
                           const ModelWeights& weights, const Tensor& x,
                           std::span<const int> labels, const AttackConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  AdversarialBatch batch = RunAttack(arch, weights, x, labels, config);
  const auto stop = std::chrono::steady_clock::now();
  return {std::move(batch), std::chrono::duration<double>(stop - start).count()};
}

Tensor ProjectLinf(const Tensor& candidate, const Tensor& anchor, double epsilon) {
  CheckSameShape(candidate.shape(), anchor.shape(), "L-inf projection");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
  Tensor out = candidate;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(out[i], anchor[i] - epsilon, anchor[i] + epsilon);
  }
  return out;
}

double LinfDistance(const Tensor& a, const Tensor& b) { return MaxAbsDiff(a, b); }

bool SatisfiesBudget(const AdversarialBatch& batch) {
  if (batch.clean.shape() != batch.perturbed.shape()) return false;
  if (LinfDistance(batch.clean, batch.perturbed) > batch.config.epsilon + 1e-9) {
    return false;
  }
  return std::all_of(batch.perturbed.data().begin(), batch.perturbed.data().end(),
                     [&](double v) {
                       return v >= batch.config.pixel_min && v <= batch.config.pixel_max;
                     });
}

}  // namespace fedadv
