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
#include "fedadv/model.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "fedadv/autodiff.h"
#include "fedadv/random.h"

namespace fedadv {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::vector<Shape> ParameterShapes(const LayerSpec& layer) {
  return std::visit(
      Overloaded{
          [](const Conv2DSpec& c) {
            return std::vector<Shape>{
                {c.out_channels, c.in_channels, c.kernel, c.kernel},
                {c.out_channels}};
          },
          [](const DenseSpec& d) {
            return std::vector<Shape>{{d.out_dim, d.in_dim}, {d.out_dim}};
          },
          [](const auto&) { return std::vector<Shape>{}; },
      },
      layer);
}

std::string LayerError(std::size_t index, const LayerSpec& layer,
                       const std::string& detail) {
  return "layer " + std::to_string(index) + " (" + LayerName(layer) +
         "): " + detail;
}

void CheckBatch(const ModelArchitecture& arch, const Tensor& batch) {
  if (batch.rank() != arch.input_shape.size() + 1 ||
      !std::equal(arch.input_shape.begin(), arch.input_shape.end(),
                  batch.shape().begin() + 1)) {
    throw ShapeError("input batch " + ShapeToString(batch.shape()) +
                     " does not match model input [B, " +
                     ShapeToString(arch.input_shape).substr(1));
  }
}

struct Graph {
  Var input;
  Var logits;
  // Parameter leaves, parallel to ModelWeights layers.
  std::vector<std::vector<Var>> params;
};

Graph BuildGraph(Tape& tape, const ModelArchitecture& arch,
                 const ModelWeights& weights, const Tensor& batch,
                 const ForwardOptions& options, bool input_grad,
                 bool param_grad) {
  CheckBatch(arch, batch);
  weights.CheckMatches(arch);
  Graph graph;
  graph.input = tape.Leaf(batch, input_grad);
  Var h = graph.input;
  graph.params.resize(arch.layers.size());
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& layer = arch.layers[i];
    for (const Tensor& p : weights.layer(i)) {
      graph.params[i].push_back(tape.Leaf(p, param_grad));
    }
    const std::vector<Var>& p = graph.params[i];
    h = std::visit(
        Overloaded{
            [&](const Conv2DSpec& c) {
              return tape.Conv2D(h, p[0], p[1], c.stride, c.padding);
            },
            [&](const DenseSpec&) { return tape.Dense(h, p[0], p[1]); },
            [&](const ReluSpec&) { return tape.Relu(h); },
            [&](const DropoutSpec& d) {
              if (!options.training || d.rate == 0.0) return h;
              Rng rng = MakeRng(options.seed, {Tag(Stream::kDropout), i});
              return tape.Dropout(h, d.rate, rng);
            },
            [&](const FlattenSpec&) {
              const Shape& s = tape.value(h).shape();
              return tape.Reshape(h, Shape{s[0], NumElements(s) / s[0]});
            },
            [&](const MaxPool2DSpec& m) {
              return tape.MaxPool2D(h, m.kernel, m.stride);
            },
            [&](const NormalizeSpec& n) {
              return tape.ChannelAffine(h, n.mean, n.stddev);
            },
        },
        layer);
  }
  graph.logits = h;
  return graph;
}

}  // namespace

std::string LayerName(const LayerSpec& layer) {
  return std::visit(
      Overloaded{
          [](const Conv2DSpec& c) {
            return "Conv2D(" + std::to_string(c.in_channels) + "->" +
                   std::to_string(c.out_channels) + ", k" +
                   std::to_string(c.kernel) + ")";
          },
          [](const DenseSpec& d) {
            return "Dense(" + std::to_string(d.in_dim) + "->" +
                   std::to_string(d.out_dim) + ")";
          },
          [](const ReluSpec&) { return std::string("ReLU"); },
          [](const DropoutSpec&) { return std::string("Dropout"); },
          [](const FlattenSpec&) { return std::string("Flatten"); },
          [](const MaxPool2DSpec&) { return std::string("MaxPool2D"); },
          [](const NormalizeSpec&) { return std::string("Normalize"); },
      },
      layer);
}

std::vector<Shape> ModelArchitecture::LayerOutputShapes() const {
  std::vector<Shape> shapes;
  Shape cur = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& layer = layers[i];
    const auto fail = [&](const std::string& detail) {
      throw ShapeError(LayerError(i, layer, detail + ", got input " +
                                                ShapeToString(cur)));
    };
    std::visit(
        Overloaded{
            [&](const Conv2DSpec& c) {
              if (cur.size() != 3 || cur[0] != c.in_channels) {
                fail("expects [" + std::to_string(c.in_channels) + ", H, W]");
              }
              if (c.stride == 0 || c.kernel == 0 ||
                  cur[1] + 2 * c.padding < c.kernel ||
                  cur[2] + 2 * c.padding < c.kernel) {
                fail("kernel does not fit");
              }
              cur = Shape{c.out_channels,
                          (cur[1] + 2 * c.padding - c.kernel) / c.stride + 1,
                          (cur[2] + 2 * c.padding - c.kernel) / c.stride + 1};
            },
            [&](const DenseSpec& d) {
              if (cur.size() != 1 || cur[0] != d.in_dim) {
                fail("expects [" + std::to_string(d.in_dim) + "]");
              }
              cur = Shape{d.out_dim};
            },
            [&](const ReluSpec&) {},
            [&](const DropoutSpec& d) {
              if (!(d.rate >= 0.0 && d.rate < 1.0)) {
                throw std::invalid_argument(LayerError(
                    i, layer,
                    "dropout rate must lie in [0, 1), got " +
                        std::to_string(d.rate)));
              }
            },
            [&](const FlattenSpec&) { cur = Shape{NumElements(cur)}; },
            [&](const MaxPool2DSpec& m) {
              if (cur.size() != 3 || m.kernel == 0 || m.stride == 0 ||
                  m.kernel > cur[1] || m.kernel > cur[2]) {
                fail("pooling window does not fit");
              }
              cur = Shape{cur[0], (cur[1] - m.kernel) / m.stride + 1,
                          (cur[2] - m.kernel) / m.stride + 1};
            },
            [&](const NormalizeSpec& n) {
              if (cur.size() != 3 || n.mean.size() != cur[0] ||
                  n.stddev.size() != cur[0]) {
                fail("needs one mean/std per channel");
              }
              for (double s : n.stddev) {
                if (!(s > 0.0)) fail("std must be positive");
              }
            },
        },
        layer);
    shapes.push_back(cur);
  }
  return shapes;
}

void ModelArchitecture::Validate() const {
  if (input_shape.size() != 3) {
    throw ShapeError("model input shape must be [C, H, W], got " +
                     ShapeToString(input_shape));
  }
  const std::vector<Shape> shapes = LayerOutputShapes();
  if (shapes.empty() || shapes.back().size() != 1) {
    throw ShapeError("model must end in a flat logits vector");
  }
}

std::size_t ModelArchitecture::NumClasses() const {
  const std::vector<Shape> shapes = LayerOutputShapes();
  if (shapes.empty() || shapes.back().size() != 1) {
    throw ShapeError("model must end in a flat logits vector");
  }
  return shapes.back()[0];
}

ModelArchitecture MakePreset(std::string_view name, const Shape& input_shape,
                             std::size_t num_classes) {
  if (input_shape.size() != 3) {
    throw ShapeError("preset input shape must be [C, H, W], got " +
                     ShapeToString(input_shape));
  }
  const std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
  ModelArchitecture arch;
  arch.input_shape = input_shape;
  if (name == "desk-cnn") {
    arch.layers = {
        Conv2DSpec{c, 8, 3, 1, 1}, ReluSpec{}, MaxPool2DSpec{2, 2},
        Conv2DSpec{8, 16, 3, 1, 1}, ReluSpec{}, MaxPool2DSpec{2, 2},
        FlattenSpec{},
        DenseSpec{16 * (h / 4) * (w / 4), 32}, ReluSpec{}, DropoutSpec{0.25},
        DenseSpec{32, num_classes},
    };
  } else if (name == "paper-cnn") {
    const std::size_t widths[] = {16, 16, 32, 32, 64, 64};
    std::size_t in = c, hh = h, ww = w;
    for (std::size_t i = 0; i < 6; ++i) {
      arch.layers.push_back(Conv2DSpec{in, widths[i], 3, 1, 1});
      arch.layers.push_back(ReluSpec{});
      in = widths[i];
      if (i % 2 == 1) {
        arch.layers.push_back(MaxPool2DSpec{2, 2});
        hh /= 2;
        ww /= 2;
      }
    }
    arch.layers.push_back(FlattenSpec{});
    const std::size_t dims[] = {in * hh * ww, 256, 128, 64, 32};
    for (std::size_t i = 0; i + 1 < 5; ++i) {
      arch.layers.push_back(DenseSpec{dims[i], dims[i + 1]});
      arch.layers.push_back(ReluSpec{});
      arch.layers.push_back(DropoutSpec{0.25});
    }
    arch.layers.push_back(DenseSpec{dims[4], num_classes});
  } else {
    throw std::invalid_argument("unknown model preset '" + std::string(name) +
                                "' (expected desk-cnn or paper-cnn)");
  }
  arch.Validate();
  return arch;
}

ModelWeights ModelWeights::Zeros(const ModelArchitecture& arch) {
  std::vector<std::vector<Tensor>> layers;
  for (const LayerSpec& layer : arch.layers) {
    std::vector<Tensor> params;
    for (Shape& s : ParameterShapes(layer)) params.emplace_back(std::move(s));
    layers.push_back(std::move(params));
  }
  return ModelWeights(std::move(layers));
}

ModelWeights ModelWeights::HeUniform(const ModelArchitecture& arch,
                                     std::uint64_t seed) {
  arch.Validate();
  ModelWeights weights = Zeros(arch);
  Rng rng = MakeRng(seed, {Tag(Stream::kInit)});
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    std::vector<Tensor>& params = weights.layer(i);
    if (params.empty()) continue;
    Tensor& kernel = params[0];
    const std::size_t fan_in = kernel.size() / kernel.dim(0);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : kernel.data()) v = dist(rng);
  }
  return weights;
}

std::size_t ModelWeights::NumParameters() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    for (const Tensor& t : layer) n += t.size();
  }
  return n;
}

std::vector<double> ModelWeights::Flatten() const {
  std::vector<double> flat;
  flat.reserve(NumParameters());
  for (const auto& layer : layers_) {
    for (const Tensor& t : layer) {
      flat.insert(flat.end(), t.data().begin(), t.data().end());
    }
  }
  return flat;
}

ModelWeights ModelWeights::Unflatten(const ModelWeights& like,
                                     std::span<const double> flat) {
  if (flat.size() != like.NumParameters()) {
    throw ShapeError("flat parameter vector has " + std::to_string(flat.size()) +
                     " values, expected " +
                     std::to_string(like.NumParameters()));
  }
  ModelWeights out = like;
  std::size_t offset = 0;
  for (auto& layer : out.layers_) {
    for (Tensor& t : layer) {
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.size(),
                  t.data().begin());
      offset += t.size();
    }
  }
  return out;
}

double ModelWeights::L2Norm() const {
  double sum = 0.0;
  for (const auto& layer : layers_) {
    for (const Tensor& t : layer) {
      for (double v : t.data()) sum += v * v;
    }
  }
  return std::sqrt(sum);
}

bool ModelWeights::SameShapes(const ModelWeights& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].size() != other.layers_[i].size()) return false;
    for (std::size_t j = 0; j < layers_[i].size(); ++j) {
      if (layers_[i][j].shape() != other.layers_[i][j].shape()) return false;
    }
  }
  return true;
}

void ModelWeights::CheckCompatible(const ModelWeights& other,
                                   const std::string& what) const {
  if (!SameShapes(other)) {
    throw ShapeError(what + ": model weights have mismatched layer shapes");
  }
}

void ModelWeights::CheckMatches(const ModelArchitecture& arch) const {
  if (layers_.size() != arch.layers.size()) {
    throw ShapeError("weights have " + std::to_string(layers_.size()) +
                     " layers, architecture has " +
                     std::to_string(arch.layers.size()));
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::vector<Shape> expected = ParameterShapes(arch.layers[i]);
    if (expected.size() != layers_[i].size()) {
      throw ShapeError(LayerError(i, arch.layers[i], "wrong parameter count"));
    }
    for (std::size_t j = 0; j < expected.size(); ++j) {
      if (expected[j] != layers_[i][j].shape()) {
        throw ShapeError(LayerError(
            i, arch.layers[i],
            "parameter " + std::to_string(j) + " has shape " +
                ShapeToString(layers_[i][j].shape()) + ", expected " +
                ShapeToString(expected[j])));
      }
    }
  }
}

bool ModelWeights::BitEquals(const ModelWeights& other) const {
  if (!SameShapes(other)) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (std::size_t j = 0; j < layers_[i].size(); ++j) {
      if (!layers_[i][j].BitEquals(other.layers_[i][j])) return false;
    }
  }
  return true;
}

ModelWeights ModelWeights::operator-(const ModelWeights& other) const {
  CheckCompatible(other, "weight difference");
  ModelWeights out = *this;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (std::size_t j = 0; j < layers_[i].size(); ++j) {
      auto dst = out.layers_[i][j].data();
      auto src = other.layers_[i][j].data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] -= src[k];
    }
  }
  return out;
}

ModelWeights ModelWeights::operator+(const ModelWeights& other) const {
  CheckCompatible(other, "weight sum");
  ModelWeights out = *this;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (std::size_t j = 0; j < layers_[i].size(); ++j) {
      auto dst = out.layers_[i][j].data();
      auto src = other.layers_[i][j].data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
  return out;
}

ModelWeights ModelWeights::Scaled(double factor) const {
  ModelWeights out = *this;
  for (auto& layer : out.layers_) {
    for (Tensor& t : layer) {
      for (double& v : t.data()) v *= factor;
    }
  }
  return out;
}

void TrainConfig::Validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning rate must be finite and >= 0");
  }
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  if (local_epochs == 0) {
    throw std::invalid_argument("local epochs must be >= 1");
  }
}

Tensor Forward(const ModelArchitecture& arch, const ModelWeights& weights,
               const Tensor& batch, ForwardOptions options) {
  Tape tape;
  const Graph graph =
      BuildGraph(tape, arch, weights, batch, options, false, false);
  Tensor logits = tape.value(graph.logits);
  logits.set_requires_grad(false);
  return logits;
}

LossAndGradients LossAndParamGradients(const ModelArchitecture& arch,
                                       const ModelWeights& weights,
                                       const Tensor& batch,
                                       std::span<const int> labels,
                                       ForwardOptions options) {
  Tape tape;
  const Graph graph =
      BuildGraph(tape, arch, weights, batch, options, false, true);
  const Var loss = tape.SoftmaxCrossEntropy(graph.logits, labels);
  tape.Backward(loss);
  LossAndGradients out;
  out.loss = tape.value(loss)[0];
  out.grads = weights;
  for (std::size_t i = 0; i < graph.params.size(); ++i) {
    for (std::size_t j = 0; j < graph.params[i].size(); ++j) {
      out.grads.layer(i)[j].storage() = tape.Gradient(graph.params[i][j]);
    }
  }
  return out;
}

Tensor InputGradient(const ModelArchitecture& arch, const ModelWeights& weights,
                     const Tensor& x, std::span<const int> labels) {
  Tape tape;
  const Graph graph = BuildGraph(tape, arch, weights, x, {}, true, false);
  const Var loss = tape.SoftmaxCrossEntropy(graph.logits, labels);
  tape.Backward(loss);
  return Tensor(x.shape(), tape.Gradient(graph.input));
}

double MeanLoss(const ModelArchitecture& arch, const ModelWeights& weights,
                const Tensor& batch, std::span<const int> labels) {
  Tape tape;
  const Graph graph = BuildGraph(tape, arch, weights, batch, {}, false, false);
  return tape.value(tape.SoftmaxCrossEntropy(graph.logits, labels))[0];
}

std::vector<int> Predict(const ModelArchitecture& arch,
                         const ModelWeights& weights, const Tensor& batch) {
  const Tensor logits = Forward(arch, weights, batch);
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  std::vector<int> labels(rows);
  for (std::size_t n = 0; n < rows; ++n) {
    const double* row = logits.data().data() + n * classes;
    labels[n] = static_cast<int>(std::max_element(row, row + classes) - row);
  }
  return labels;
}

ModelWeights SgdStep(const ModelWeights& weights, const ModelWeights& grads,
                     double learning_rate) {
  weights.CheckCompatible(grads, "SGD step");
  ModelWeights out = weights;
  for (std::size_t i = 0; i < out.num_layers(); ++i) {
    for (std::size_t j = 0; j < out.layer(i).size(); ++j) {
      auto w = out.layer(i)[j].data();
      auto g = grads.layer(i)[j].data();
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= learning_rate * g[k];
    }
  }
  return out;
}

}  // namespace fedadv
