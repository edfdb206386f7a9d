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
#ifndef FEDADV_METRICS_H_
#define FEDADV_METRICS_H_

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedadv/attacks.h"
#include "fedadv/data.h"
#include "fedadv/model.h"

namespace fedadv {

// Raised when a rate has no defined value (empty sample set, no flips).
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct LabelPair {
  int pre_attack_label = 0;
  int post_attack_label = 0;
  int ground_truth = 0;
  std::size_t sample_id = 0;

  bool flipped() const { return pre_attack_label != post_attack_label; }
};

double CleanAccuracy(const ModelArchitecture& arch, const ModelWeights& weights,
                     const Batch& test_set);
double CleanAccuracy(const ModelArchitecture& arch, const ModelWeights& weights,
                     const Shard& test_set);

// Fraction of pairs whose predicted label changed under attack. With
// only_initially_correct, pairs whose clean prediction was already wrong are
// dropped first.
double AttackSuccessRate(std::span<const LabelPair> pairs,
                         bool only_initially_correct = false);

// Square (adversary x target) table of attack success rates. Rows for
// clients that never played the adversary have zero counts.
class TransferMatrix {
 public:
  TransferMatrix() = default;
  explicit TransferMatrix(std::size_t num_clients);

  std::size_t size() const { return n_; }
  double asr(std::size_t source, std::size_t target) const;
  std::size_t count(std::size_t source, std::size_t target) const;
  bool populated(std::size_t source, std::size_t target) const {
    return count(source, target) > 0;
  }
  void Set(std::size_t source, std::size_t target, double asr, std::size_t count);

 private:
  std::size_t Index(std::size_t source, std::size_t target) const;

  std::size_t n_ = 0;
  std::vector<double> asr_;
  std::vector<std::size_t> count_;
};

// Mean over populated cells, optionally skipping the diagonal.
double AverageAsr(const TransferMatrix& matrix, bool exclude_diagonal);

// Among samples that flipped the adversary's own model, the fraction that
// also flipped each benign model, averaged over benign clients. Throws
// UndefinedMetricError when the adversary flipped nothing.
double Aetr(std::span<const LabelPair> adversary_pairs,
            const std::vector<std::vector<LabelPair>>& benign_pairs_by_client);

// One adversary's attack batch together with the ids of the attacked
// samples.
struct RoleBatch {
  std::size_t adversary_id = 0;
  AdversarialBatch batch;
  std::vector<std::size_t> sample_ids;
};

struct TransferEvaluation {
  TransferMatrix matrix;
  // pairs[source][target]; empty for sources without a batch.
  std::vector<std::vector<std::vector<LabelPair>>> pairs;
};

// Evaluates every role's batch on every client model.
TransferEvaluation EvaluateTransfer(const ModelArchitecture& arch,
                                    std::span<const ModelWeights> models,
                                    std::span<const RoleBatch> batches,
                                    bool only_initially_correct = false);

// Pre/post label pairs of one batch on one model.
std::vector<LabelPair> LabelPairs(const ModelArchitecture& arch,
                                  const ModelWeights& model,
                                  const AdversarialBatch& batch,
                                  std::span<const std::size_t> sample_ids);

// Spearman rank correlation with average ranks for ties. NaN when either
// input is constant.
double SpearmanCorrelation(std::span<const double> x, std::span<const double> y);

}  // namespace fedadv

#endif  // FEDADV_METRICS_H_
