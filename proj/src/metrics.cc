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
#include "fedadv/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>

#include "fedadv/fed.h"

namespace fedadv {
namespace {

std::vector<double> AverageRanks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double CleanAccuracy(const ModelArchitecture& arch, const ModelWeights& weights,
                     const Batch& test_set) {
  if (test_set.labels.empty()) {
    throw UndefinedMetricError("clean accuracy of an empty test set");
  }
  const std::vector<int> predicted = Predict(arch, weights, test_set.images);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == test_set.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

double CleanAccuracy(const ModelArchitecture& arch, const ModelWeights& weights,
                     const Shard& test_set) {
  if (test_set.empty()) {
    throw UndefinedMetricError("clean accuracy of an empty test set");
  }
  return Evaluate(arch, weights, test_set).accuracy;
}

double AttackSuccessRate(std::span<const LabelPair> pairs,
                         bool only_initially_correct) {
  std::size_t total = 0, flips = 0;
  for (const LabelPair& p : pairs) {
    if (only_initially_correct && p.pre_attack_label != p.ground_truth) continue;
    ++total;
    if (p.flipped()) ++flips;
  }
  if (total == 0) throw UndefinedMetricError("attack success rate of zero samples");
  return static_cast<double>(flips) / static_cast<double>(total);
}

TransferMatrix::TransferMatrix(std::size_t num_clients)
    : n_(num_clients),
      asr_(num_clients * num_clients, std::nan("")),
      count_(num_clients * num_clients, 0) {}

std::size_t TransferMatrix::Index(std::size_t source, std::size_t target) const {
  if (source >= n_ || target >= n_) {
    throw std::out_of_range("transfer cell (" + std::to_string(source) + ", " +
                            std::to_string(target) + ") outside " +
                            std::to_string(n_) + "x" + std::to_string(n_));
  }
  return source * n_ + target;
}

double TransferMatrix::asr(std::size_t source, std::size_t target) const {
  return asr_[Index(source, target)];
}

std::size_t TransferMatrix::count(std::size_t source, std::size_t target) const {
  return count_[Index(source, target)];
}

void TransferMatrix::Set(std::size_t source, std::size_t target, double asr,
                         std::size_t count) {
  if (!(asr >= 0.0 && asr <= 1.0)) {
    throw std::invalid_argument("ASR " + std::to_string(asr) + " outside [0, 1]");
  }
  const std::size_t i = Index(source, target);
  asr_[i] = asr;
  count_[i] = count;
}

double AverageAsr(const TransferMatrix& matrix, bool exclude_diagonal) {
  double sum = 0.0;
  std::size_t cells = 0;
  for (std::size_t s = 0; s < matrix.size(); ++s) {
    for (std::size_t t = 0; t < matrix.size(); ++t) {
      if (exclude_diagonal && s == t) continue;
      if (!matrix.populated(s, t)) continue;
      sum += matrix.asr(s, t);
      ++cells;
    }
  }
  if (cells == 0) throw UndefinedMetricError("no transfer cells to average");
  return sum / static_cast<double>(cells);
}

double Aetr(std::span<const LabelPair> adversary_pairs,
            const std::vector<std::vector<LabelPair>>& benign_pairs_by_client) {
  if (benign_pairs_by_client.empty()) {
    throw UndefinedMetricError("undefined AETR: no benign clients");
  }
  std::unordered_set<std::size_t> flipped;
  std::unordered_set<std::size_t> attacked;
  for (const LabelPair& p : adversary_pairs) {
    attacked.insert(p.sample_id);
    if (p.flipped()) flipped.insert(p.sample_id);
  }
  if (flipped.empty()) {
    throw UndefinedMetricError("undefined AETR: the adversary flipped no samples");
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < benign_pairs_by_client.size(); ++c) {
    std::size_t seen = 0, also = 0;
    for (const LabelPair& p : benign_pairs_by_client[c]) {
      if (!attacked.contains(p.sample_id)) {
        throw std::invalid_argument("benign client " + std::to_string(c) +
                                    " reports sample " + std::to_string(p.sample_id) +
                                    " the adversary never attacked");
      }
      if (!flipped.contains(p.sample_id)) continue;
      ++seen;
      if (p.flipped()) ++also;
    }
    if (seen != flipped.size()) {
      throw std::invalid_argument("benign client " + std::to_string(c) +
                                  " is missing adversary-flipped samples");
    }
    sum += static_cast<double>(also) / static_cast<double>(seen);
  }
  return sum / static_cast<double>(benign_pairs_by_client.size());
}

std::vector<LabelPair> LabelPairs(const ModelArchitecture& arch,
                                  const ModelWeights& model,
                                  const AdversarialBatch& batch,
                                  std::span<const std::size_t> sample_ids) {
  const std::vector<int> pre = Predict(arch, model, batch.clean);
  const std::vector<int> post = Predict(arch, model, batch.perturbed);
  if (sample_ids.size() != pre.size() || batch.labels.size() != pre.size()) {
    throw std::invalid_argument("batch of " + std::to_string(pre.size()) +
                                " samples has " + std::to_string(sample_ids.size()) +
                                " ids and " + std::to_string(batch.labels.size()) +
                                " labels");
  }
  std::vector<LabelPair> pairs(pre.size());
  for (std::size_t i = 0; i < pre.size(); ++i) {
    pairs[i] = LabelPair{pre[i], post[i], batch.labels[i], sample_ids[i]};
  }
  return pairs;
}

TransferEvaluation EvaluateTransfer(const ModelArchitecture& arch,
                                    std::span<const ModelWeights> models,
                                    std::span<const RoleBatch> batches,
                                    bool only_initially_correct) {
  const std::size_t n = models.size();
  TransferEvaluation out;
  out.matrix = TransferMatrix(n);
  out.pairs.assign(n, std::vector<std::vector<LabelPair>>(n));
  for (const RoleBatch& role : batches) {
    if (role.adversary_id >= n) {
      throw std::invalid_argument("attack batch for adversary " +
                                  std::to_string(role.adversary_id) + " but only " +
                                  std::to_string(n) + " client models");
    }
    for (std::size_t t = 0; t < n; ++t) {
      if (models[t].num_layers() == 0) {
        throw std::invalid_argument("missing model for cell (" +
                                    std::to_string(role.adversary_id) + ", " +
                                    std::to_string(t) + ")");
      }
      std::vector<LabelPair> pairs = LabelPairs(arch, models[t], role.batch, role.sample_ids);
      const double asr = AttackSuccessRate(pairs, only_initially_correct);
      std::size_t count = pairs.size();
      if (only_initially_correct) {
        count = static_cast<std::size_t>(std::count_if(
            pairs.begin(), pairs.end(),
            [](const LabelPair& p) { return p.pre_attack_label == p.ground_truth; }));
      }
      out.matrix.Set(role.adversary_id, t, asr, count);
      out.pairs[role.adversary_id][t] = std::move(pairs);
    }
  }
  return out;
}

double SpearmanCorrelation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("Spearman correlation needs two equal series of length >= 2");
  }
  const std::vector<double> rx = AverageRanks(x), ry = AverageRanks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nan("");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace fedadv
