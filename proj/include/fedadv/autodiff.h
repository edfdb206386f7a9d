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
#ifndef FEDADV_AUTODIFF_H_
#define FEDADV_AUTODIFF_H_

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "fedadv/random.h"
#include "fedadv/tensor.h"

namespace fedadv {

// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

// Reverse-mode automatic differentiation tape.
//
// Every op appends a node holding its forward value and a closure that
// propagates the node's adjoint into its inputs. Backward() walks the nodes
// in reverse creation order, which is a valid topological order because an
// op can only reference nodes that already exist. Gradients are only
// accumulated for nodes that (transitively) depend on a leaf created with
// requires_grad, so constant weights cost nothing in the backward sweep.
//
// A Tape is single-use scratch state: build it, call Backward() once, read
// the gradients. Distinct tapes share nothing and may live on distinct
// threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var Leaf(Tensor value, bool requires_grad);

  // x: [B, Cin, H, W], kernel: [Cout, Cin, K, K], bias: [Cout].
  Var Conv2D(Var x, Var kernel, Var bias, std::size_t stride,
             std::size_t padding);
  // x: [B, In], weight: [Out, In], bias: [Out].
  Var Dense(Var x, Var weight, Var bias);
  Var Relu(Var x);
  // Inverted dropout: kept activations are scaled by 1 / (1 - rate).
  Var Dropout(Var x, double rate, Rng& rng);
  Var MaxPool2D(Var x, std::size_t kernel, std::size_t stride);
  Var Reshape(Var x, Shape shape);
  // Fixed per-channel (x - mean[c]) / std[c] on [B, C, H, W].
  Var ChannelAffine(Var x, std::span<const double> mean,
                    std::span<const double> stddev);
  // Mean softmax cross-entropy of logits [B, K] against labels; scalar.
  Var SoftmaxCrossEntropy(Var logits, std::span<const int> labels);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool tracks_grad(Var v) const { return nodes_.at(v.id).tracks_grad; }

  // Seeds d(root)/d(root) = 1 for every element of root and propagates.
  void Backward(Var root);

  // Adjoint of v after Backward(); zeros if v received no gradient.
  std::vector<double> Gradient(Var v) const;

 private:
  struct Node {
    Tensor value;
    bool tracks_grad = false;
    std::vector<double> adjoint;
    std::function<void(Tape&, std::size_t)> backward;
  };

  Var Push(Tensor value, bool tracks_grad,
           std::function<void(Tape&, std::size_t)> backward);
  std::vector<double>& AdjointOf(std::size_t id);

  std::vector<Node> nodes_;
};

}  // namespace fedadv

#endif  // FEDADV_AUTODIFF_H_
