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
#include "fedadv/tensor.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

namespace fedadv {

std::size_t NumElements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(NumElements(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (NumElements(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + ShapeToString(shape_) + " holds " +
                     std::to_string(NumElements(shape_)) +
                     " elements but data has " + std::to_string(data_.size()));
  }
}

const std::vector<double>& Tensor::grad() const {
  if (!grad_) throw std::logic_error("tensor has no gradient");
  return *grad_;
}

void Tensor::set_grad(std::vector<double> grad) {
  if (grad.size() != data_.size()) {
    throw ShapeError("gradient length " + std::to_string(grad.size()) +
                     " does not match tensor size " +
                     std::to_string(data_.size()));
  }
  grad_ = std::move(grad);
}

Tensor Tensor::Reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

bool Tensor::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

bool Tensor::BitEquals(const Tensor& other) const {
  return shape_ == other.shape_ && data_.size() == other.data_.size() &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(),
                      data_.size() * sizeof(double)) == 0);
}

void CheckSameShape(const Shape& a, const Shape& b, const std::string& what) {
  if (a != b) {
    throw ShapeError(what + ": shape " + ShapeToString(a) + " vs " +
                     ShapeToString(b));
  }
}

double MaxAbsDiff(const Tensor& a, const Tensor& b) {
  CheckSameShape(a.shape(), b.shape(), "MaxAbsDiff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

}  // namespace fedadv
