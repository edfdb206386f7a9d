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
#include "fedadv/autodiff.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fedadv {
namespace {

void RequireRank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + " expects a rank-" +
                     std::to_string(rank) + " input, got " +
                     ShapeToString(t.shape()));
  }
}

}  // namespace

Var Tape::Push(Tensor value, bool tracks_grad,
               std::function<void(Tape&, std::size_t)> backward) {
  nodes_.push_back(Node{std::move(value), tracks_grad, {}, std::move(backward)});
  return Var{nodes_.size() - 1};
}

std::vector<double>& Tape::AdjointOf(std::size_t id) {
  Node& node = nodes_[id];
  if (node.adjoint.empty()) node.adjoint.assign(node.value.size(), 0.0);
  return node.adjoint;
}

Var Tape::Leaf(Tensor value, bool requires_grad) {
  value.set_requires_grad(requires_grad);
  return Push(std::move(value), requires_grad, nullptr);
}

Var Tape::Conv2D(Var x, Var kernel, Var bias, std::size_t stride,
                 std::size_t padding) {
  const Tensor& in = value(x);
  const Tensor& k = value(kernel);
  const Tensor& b = value(bias);
  RequireRank(in, 4, "Conv2D");
  RequireRank(k, 4, "Conv2D kernel");
  const std::size_t batch = in.dim(0), cin = in.dim(1), h = in.dim(2),
                    w = in.dim(3);
  const std::size_t cout = k.dim(0), ks = k.dim(2);
  if (k.dim(1) != cin || k.dim(3) != ks) {
    throw ShapeError("Conv2D kernel " + ShapeToString(k.shape()) +
                     " incompatible with input " + ShapeToString(in.shape()));
  }
  if (b.shape() != Shape{cout}) {
    throw ShapeError("Conv2D bias " + ShapeToString(b.shape()) +
                     " expected [" + std::to_string(cout) + "]");
  }
  if (stride == 0 || h + 2 * padding < ks || w + 2 * padding < ks) {
    throw ShapeError("Conv2D kernel " + std::to_string(ks) +
                     " does not fit input " + ShapeToString(in.shape()));
  }
  const std::size_t oh = (h + 2 * padding - ks) / stride + 1;
  const std::size_t ow = (w + 2 * padding - ks) / stride + 1;
  Tensor out(Shape{batch, cout, oh, ow});

  const double* ip = in.data().data();
  const double* kp = k.data().data();
  double* op = out.data().data();
  const auto in_idx = [=](std::size_t n, std::size_t c, std::size_t y,
                          std::size_t xx) {
    return ((n * cin + c) * h + y) * w + xx;
  };
  const auto out_idx = [=](std::size_t n, std::size_t o, std::size_t y,
                           std::size_t xx) {
    return ((n * cout + o) * oh + y) * ow + xx;
  };
  const auto k_idx = [=](std::size_t o, std::size_t c, std::size_t ky,
                         std::size_t kx) {
    return ((o * cin + c) * ks + ky) * ks + kx;
  };
  // Valid output range [lo, hi) for a kernel offset so the source index
  // y * stride + offset - padding stays inside [0, extent).
  const auto valid_range = [=](std::size_t offset, std::size_t extent,
                               std::size_t out_extent) {
    std::size_t lo = 0;
    while (lo < out_extent && lo * stride + offset < padding) ++lo;
    std::size_t hi = lo;
    while (hi < out_extent && hi * stride + offset - padding < extent) ++hi;
    return std::pair<std::size_t, std::size_t>{lo, hi};
  };

  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < cout; ++o) {
      double* plane = op + out_idx(n, o, 0, 0);
      std::fill(plane, plane + oh * ow, b[o]);
      for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t ky = 0; ky < ks; ++ky) {
          const auto [ylo, yhi] = valid_range(ky, h, oh);
          for (std::size_t kx = 0; kx < ks; ++kx) {
            const auto [xlo, xhi] = valid_range(kx, w, ow);
            const double kv = kp[k_idx(o, c, ky, kx)];
            for (std::size_t y = ylo; y < yhi; ++y) {
              const double* row = ip + in_idx(n, c, y * stride + ky - padding, 0);
              double* orow = plane + y * ow;
              for (std::size_t xx = xlo; xx < xhi; ++xx) {
                orow[xx] += kv * row[xx * stride + kx - padding];
              }
            }
          }
        }
      }
    }
  }

  const bool track = tracks_grad(x) || tracks_grad(kernel) || tracks_grad(bias);
  return Push(std::move(out), track, [=](Tape& tape, std::size_t self) {
    const std::vector<double>& g = tape.nodes_[self].adjoint;
    const double* inp = tape.value(x).data().data();
    const double* kerp = tape.value(kernel).data().data();
    const bool want_x = tape.tracks_grad(x);
    const bool want_k = tape.tracks_grad(kernel);
    const bool want_b = tape.tracks_grad(bias);
    double* gx = want_x ? tape.AdjointOf(x.id).data() : nullptr;
    double* gk = want_k ? tape.AdjointOf(kernel.id).data() : nullptr;
    double* gb = want_b ? tape.AdjointOf(bias.id).data() : nullptr;
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t o = 0; o < cout; ++o) {
        const double* gplane = g.data() + out_idx(n, o, 0, 0);
        if (want_b) {
          double s = 0.0;
          for (std::size_t i = 0; i < oh * ow; ++i) s += gplane[i];
          gb[o] += s;
        }
        if (!want_x && !want_k) continue;
        for (std::size_t c = 0; c < cin; ++c) {
          for (std::size_t ky = 0; ky < ks; ++ky) {
            const auto [ylo, yhi] = valid_range(ky, h, oh);
            for (std::size_t kx = 0; kx < ks; ++kx) {
              const auto [xlo, xhi] = valid_range(kx, w, ow);
              const std::size_t ki = k_idx(o, c, ky, kx);
              const double kv = kerp[ki];
              double kacc = 0.0;
              for (std::size_t y = ylo; y < yhi; ++y) {
                const std::size_t base =
                    in_idx(n, c, y * stride + ky - padding, 0);
                const double* grow = gplane + y * ow;
                for (std::size_t xx = xlo; xx < xhi; ++xx) {
                  const std::size_t src = base + xx * stride + kx - padding;
                  if (want_x) gx[src] += kv * grow[xx];
                  kacc += inp[src] * grow[xx];
                }
              }
              if (want_k) gk[ki] += kacc;
            }
          }
        }
      }
    }
  });
}

Var Tape::Dense(Var x, Var weight, Var bias) {
  const Tensor& in = value(x);
  const Tensor& wt = value(weight);
  const Tensor& b = value(bias);
  RequireRank(in, 2, "Dense");
  RequireRank(wt, 2, "Dense weight");
  const std::size_t batch = in.dim(0), din = in.dim(1), dout = wt.dim(0);
  if (wt.dim(1) != din) {
    throw ShapeError("Dense weight " + ShapeToString(wt.shape()) +
                     " incompatible with input " + ShapeToString(in.shape()));
  }
  if (b.shape() != Shape{dout}) {
    throw ShapeError("Dense bias " + ShapeToString(b.shape()) + " expected [" +
                     std::to_string(dout) + "]");
  }
  Tensor out(Shape{batch, dout});
  for (std::size_t n = 0; n < batch; ++n) {
    const double* row = in.data().data() + n * din;
    for (std::size_t o = 0; o < dout; ++o) {
      const double* wrow = wt.data().data() + o * din;
      double s = b[o];
      for (std::size_t i = 0; i < din; ++i) s += wrow[i] * row[i];
      out[n * dout + o] = s;
    }
  }
  const bool track = tracks_grad(x) || tracks_grad(weight) || tracks_grad(bias);
  return Push(std::move(out), track, [=](Tape& tape, std::size_t self) {
    const std::vector<double>& g = tape.nodes_[self].adjoint;
    const double* inp = tape.value(x).data().data();
    const double* wp = tape.value(weight).data().data();
    if (tape.tracks_grad(x)) {
      double* gx = tape.AdjointOf(x.id).data();
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t o = 0; o < dout; ++o) {
          const double go = g[n * dout + o];
          const double* wrow = wp + o * din;
          for (std::size_t i = 0; i < din; ++i) gx[n * din + i] += wrow[i] * go;
        }
      }
    }
    if (tape.tracks_grad(weight)) {
      double* gw = tape.AdjointOf(weight.id).data();
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t o = 0; o < dout; ++o) {
          const double go = g[n * dout + o];
          const double* row = inp + n * din;
          for (std::size_t i = 0; i < din; ++i) gw[o * din + i] += go * row[i];
        }
      }
    }
    if (tape.tracks_grad(bias)) {
      double* gb = tape.AdjointOf(bias.id).data();
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t o = 0; o < dout; ++o) gb[o] += g[n * dout + o];
      }
    }
  });
}

Var Tape::Relu(Var x) {
  Tensor out = value(x);
  out.set_requires_grad(false);
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return Push(std::move(out), tracks_grad(x), [=](Tape& tape, std::size_t self) {
    if (!tape.tracks_grad(x)) return;
    const std::vector<double>& g = tape.nodes_[self].adjoint;
    const Tensor& in = tape.value(x);
    std::vector<double>& gx = tape.AdjointOf(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var Tape::Dropout(Var x, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout rate must lie in [0, 1), got " +
                                std::to_string(rate));
  }
  Tensor out = value(x);
  out.set_requires_grad(false);
  const double scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(out.size());
  std::bernoulli_distribution keep(1.0 - rate);
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = keep(rng) ? scale : 0.0;
    out[i] *= mask[i];
  }
  return Push(std::move(out), tracks_grad(x),
              [=, mask = std::move(mask)](Tape& tape, std::size_t self) {
                if (!tape.tracks_grad(x)) return;
                const std::vector<double>& g = tape.nodes_[self].adjoint;
                std::vector<double>& gx = tape.AdjointOf(x.id);
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
              });
}

Var Tape::MaxPool2D(Var x, std::size_t kernel, std::size_t stride) {
  const Tensor& in = value(x);
  RequireRank(in, 4, "MaxPool2D");
  const std::size_t batch = in.dim(0), ch = in.dim(1), h = in.dim(2),
                    w = in.dim(3);
  if (kernel == 0 || stride == 0 || kernel > h || kernel > w) {
    throw ShapeError("MaxPool2D window " + std::to_string(kernel) +
                     " does not fit input " + ShapeToString(in.shape()));
  }
  const std::size_t oh = (h - kernel) / stride + 1;
  const std::size_t ow = (w - kernel) / stride + 1;
  Tensor out(Shape{batch, ch, oh, ow});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < batch * ch; ++p) {
    const std::size_t in_base = p * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        std::size_t best = in_base + (y * stride) * w + xx * stride;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::size_t src = in_base + (y * stride + ky) * w + xx * stride + kx;
            if (in[src] > in[best]) best = src;
          }
        }
        const std::size_t dst = (p * oh + y) * ow + xx;
        out[dst] = in[best];
        argmax[dst] = best;
      }
    }
  }
  return Push(std::move(out), tracks_grad(x),
              [=, argmax = std::move(argmax)](Tape& tape, std::size_t self) {
                if (!tape.tracks_grad(x)) return;
                const std::vector<double>& g = tape.nodes_[self].adjoint;
                std::vector<double>& gx = tape.AdjointOf(x.id);
                for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
              });
}

Var Tape::Reshape(Var x, Shape shape) {
  Tensor out = value(x).Reshaped(std::move(shape));
  return Push(std::move(out), tracks_grad(x), [=](Tape& tape, std::size_t self) {
    if (!tape.tracks_grad(x)) return;
    const std::vector<double>& g = tape.nodes_[self].adjoint;
    std::vector<double>& gx = tape.AdjointOf(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var Tape::ChannelAffine(Var x, std::span<const double> mean,
                        std::span<const double> stddev) {
  const Tensor& in = value(x);
  RequireRank(in, 4, "ChannelAffine");
  const std::size_t ch = in.dim(1), plane = in.dim(2) * in.dim(3);
  if (mean.size() != ch || stddev.size() != ch) {
    throw ShapeError("ChannelAffine has " + std::to_string(mean.size()) +
                     " channel statistics for input " +
                     ShapeToString(in.shape()));
  }
  std::vector<double> inv(ch);
  for (std::size_t c = 0; c < ch; ++c) inv[c] = 1.0 / stddev[c];
  Tensor out = in;
  out.set_requires_grad(false);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t c = (i / plane) % ch;
    out[i] = (out[i] - mean[c]) * inv[c];
  }
  return Push(std::move(out), tracks_grad(x),
              [=, inv = std::move(inv)](Tape& tape, std::size_t self) {
                if (!tape.tracks_grad(x)) return;
                const std::vector<double>& g = tape.nodes_[self].adjoint;
                std::vector<double>& gx = tape.AdjointOf(x.id);
                for (std::size_t i = 0; i < g.size(); ++i) {
                  gx[i] += g[i] * inv[(i / plane) % ch];
                }
              });
}

Var Tape::SoftmaxCrossEntropy(Var logits, std::span<const int> labels) {
  const Tensor& z = value(logits);
  RequireRank(z, 2, "SoftmaxCrossEntropy");
  const std::size_t batch = z.dim(0), classes = z.dim(1);
  if (labels.size() != batch) {
    throw ShapeError("got " + std::to_string(labels.size()) +
                     " labels for a batch of " + std::to_string(batch));
  }
  if (batch == 0) throw ShapeError("SoftmaxCrossEntropy on an empty batch");
  std::vector<double> probs(z.size());
  double total = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw std::invalid_argument("label " + std::to_string(label) +
                                  " of sample " + std::to_string(n) +
                                  " is outside [0, " + std::to_string(classes) +
                                  ")");
    }
    const double* row = z.data().data() + n * classes;
    const double peak = *std::max_element(row, row + classes);
    double denom = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      probs[n * classes + k] = std::exp(row[k] - peak);
      denom += probs[n * classes + k];
    }
    for (std::size_t k = 0; k < classes; ++k) probs[n * classes + k] /= denom;
    total += std::log(denom) - (row[label] - peak);
  }
  std::vector<int> kept(labels.begin(), labels.end());
  Tensor loss(Shape{}, std::vector<double>{total / static_cast<double>(batch)});
  return Push(std::move(loss), tracks_grad(logits),
              [=, probs = std::move(probs), kept = std::move(kept)](
                  Tape& tape, std::size_t self) {
                if (!tape.tracks_grad(logits)) return;
                const double upstream =
                    tape.nodes_[self].adjoint[0] / static_cast<double>(batch);
                std::vector<double>& gz = tape.AdjointOf(logits.id);
                for (std::size_t n = 0; n < batch; ++n) {
                  for (std::size_t k = 0; k < classes; ++k) {
                    double d = probs[n * classes + k];
                    if (static_cast<int>(k) == kept[n]) d -= 1.0;
                    gz[n * classes + k] += upstream * d;
                  }
                }
              });
}

void Tape::Backward(Var root) {
  if (root.id >= nodes_.size()) throw std::out_of_range("unknown tape node");
  for (Node& node : nodes_) node.adjoint.clear();
  std::vector<double>& seed = AdjointOf(root.id);
  std::fill(seed.begin(), seed.end(), 1.0);
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.tracks_grad || node.adjoint.empty() || !node.backward) continue;
    node.backward(*this, id);
  }
}

std::vector<double> Tape::Gradient(Var v) const {
  const Node& node = nodes_.at(v.id);
  if (node.adjoint.empty()) return std::vector<double>(node.value.size(), 0.0);
  return node.adjoint;
}

}  // namespace fedadv
