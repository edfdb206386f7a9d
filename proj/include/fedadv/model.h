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
#ifndef FEDADV_MODEL_H_
#define FEDADV_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fedadv/tensor.h"

namespace fedadv {

struct Conv2DSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct DenseSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
};

struct ReluSpec {};

struct DropoutSpec {
  double rate = 0.0;
};

struct FlattenSpec {};

struct MaxPool2DSpec {
  std::size_t kernel = 2;
  std::size_t stride = 2;
};

// Fixed per-channel normalization (x - mean) / std with no trainable
// parameters. Lets a model consume [0, 1] pixels while training on
// normalized statistics, so attack budgets stay in pixel units.
struct NormalizeSpec {
  std::vector<double> mean;
  std::vector<double> stddev;
};

using LayerSpec = std::variant<Conv2DSpec, DenseSpec, ReluSpec, DropoutSpec,
                               FlattenSpec, MaxPool2DSpec, NormalizeSpec>;

std::string LayerName(const LayerSpec& layer);

// Ordered layer list plus the per-sample input shape [C, H, W].
struct ModelArchitecture {
  Shape input_shape;
  std::vector<LayerSpec> layers;

  // Per-sample output shape of every layer, throwing ShapeError at the first
  // incompatible boundary. The last entry is the logits shape [K].
  std::vector<Shape> LayerOutputShapes() const;
  // Throws unless shapes chain, dropout rates are in [0, 1) and the network
  // ends in a flat logits vector.
  void Validate() const;
  std::size_t NumClasses() const;
};

// Named architectures. "desk-cnn" is a small 2-conv/2-dense network; the
// "paper-cnn" preset stacks six 3x3 convolutions and five dense layers with
// dropout 0.25.
ModelArchitecture MakePreset(std::string_view name, const Shape& input_shape,
                             std::size_t num_classes);

// Parameters of every layer, in layer order. Parameter-free layers own an
// empty list; Conv2D and Dense own {weight, bias}.
class ModelWeights {
 public:
  ModelWeights() = default;
  explicit ModelWeights(std::vector<std::vector<Tensor>> layers)
      : layers_(std::move(layers)) {}

  // Zero-filled weights with the shapes `arch` requires.
  static ModelWeights Zeros(const ModelArchitecture& arch);
  // Uniform He-style fan-in initialization; biases start at zero.
  static ModelWeights HeUniform(const ModelArchitecture& arch,
                                std::uint64_t seed);

  std::size_t num_layers() const { return layers_.size(); }
  const std::vector<Tensor>& layer(std::size_t i) const { return layers_.at(i); }
  std::vector<Tensor>& layer(std::size_t i) { return layers_.at(i); }

  std::size_t NumParameters() const;
  std::vector<double> Flatten() const;
  // Inverse of Flatten against the shapes of `like`.
  static ModelWeights Unflatten(const ModelWeights& like,
                                std::span<const double> flat);

  double L2Norm() const;
  bool SameShapes(const ModelWeights& other) const;
  // Throws ShapeError naming `what` unless both weight sets share shapes.
  void CheckCompatible(const ModelWeights& other, const std::string& what) const;
  // Throws unless layer count and shapes match what `arch` expects.
  void CheckMatches(const ModelArchitecture& arch) const;
  bool BitEquals(const ModelWeights& other) const;

  // Elementwise helpers used by optimizers and aggregation.
  ModelWeights operator-(const ModelWeights& other) const;
  ModelWeights operator+(const ModelWeights& other) const;
  ModelWeights Scaled(double factor) const;

 private:
  std::vector<std::vector<Tensor>> layers_;
};

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t batch_size = 16;
  std::size_t local_epochs = 20;
  std::uint64_t seed = 0;

  void Validate() const;
};

// Dropout is only active when `training` is set, and its masks are drawn
// from `seed`.
struct ForwardOptions {
  bool training = false;
  std::uint64_t seed = 0;
};

Tensor Forward(const ModelArchitecture& arch, const ModelWeights& weights,
               const Tensor& batch, ForwardOptions options = {});

struct LossAndGradients {
  double loss = 0.0;
  ModelWeights grads;
};

// Mean softmax cross-entropy over the batch and its gradient with respect to
// every parameter.
LossAndGradients LossAndParamGradients(const ModelArchitecture& arch,
                                       const ModelWeights& weights,
                                       const Tensor& batch,
                                       std::span<const int> labels,
                                       ForwardOptions options = {});

// d(mean cross-entropy)/d(input) in inference mode. Weights are read only.
Tensor InputGradient(const ModelArchitecture& arch, const ModelWeights& weights,
                     const Tensor& x, std::span<const int> labels);

double MeanLoss(const ModelArchitecture& arch, const ModelWeights& weights,
                const Tensor& batch, std::span<const int> labels);

// Argmax class of every row of the inference-mode logits; ties go to the
// lowest index.
std::vector<int> Predict(const ModelArchitecture& arch,
                         const ModelWeights& weights, const Tensor& batch);

// weights - learning_rate * grads.
ModelWeights SgdStep(const ModelWeights& weights, const ModelWeights& grads,
                     double learning_rate);

}  // namespace fedadv

#endif  // FEDADV_MODEL_H_
