/* Copyright 2026 The qat-tradeoff Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

// Differentiable primitives recorded on a Tape. Layout is NHWC throughout;
// conv2d kernels are HWIO and are lowered to a GEMM over extracted patches.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "qat/kernels.hpp"
#include "qat/quantcore.hpp"
#include "qat/tape.hpp"
#include "qat/tensor.hpp"

namespace qat::nn {

enum class Mode { Train, Eval };

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + to_string(av.shape()) + " x " +
                     to_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out({m, n});
  kernels::gemm(false, false, m, n, k, av.data().data(), bv.data().data(), out.data().data());
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(out), rg, [a, b, m, n, k](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(a)) {
      Tensor<T> ga({m, k});
      kernels::gemm(false, true, m, k, n, g.data().data(), t.value(b).data().data(),
                    ga.data().data());
      t.accumulate(a, ga);
    }
    if (t.requires_grad(b)) {
      Tensor<T> gb({k, n});
      kernels::gemm(true, false, k, n, m, t.value(a).data().data(), g.data().data(),
                    gb.data().data());
      t.accumulate(b, gb);
    }
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  require_same_shape(av.shape(), bv.shape(), "add");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(out), rg, [a, b](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

// x[..., C] + bias[C]
template <typename T>
Var bias_add(Tape<T>& tape, Var x, Var bias) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& bv = tape.value(bias);
  if (bv.rank() != 1 || xv.rank() == 0 || xv.shape().back() != bv.dim(0)) {
    throw ShapeError("bias_add: bias " + to_string(bv.shape()) + " does not match " +
                     to_string(xv.shape()));
  }
  const std::size_t c = bv.dim(0);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + bv[i % c];
  const bool rg = tape.requires_grad(x) || tape.requires_grad(bias);
  return tape.record(std::move(out), rg, [x, bias, c](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, g);
    if (t.requires_grad(bias)) {
      Tensor<T> gb({c});
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
      t.accumulate(bias, gb);
    }
  });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > T{0} ? xv[i] : T{0};
  return tape.record(std::move(out), tape.requires_grad(x), [x](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xv = t.value(x);
    Tensor<T> gx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = xv[i] > T{0} ? g[i] : T{0};
    t.accumulate(x, gx);
  });
}

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var kernel, std::size_t stride, Padding padding) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& kv = tape.value(kernel);
  const ConvShape cs = ConvShape::make(xv.shape(), kv.shape(), stride, padding);
  const std::size_t rows = cs.rows(), plen = cs.patch_len(), cout = cs.channels_out;

  std::vector<T> cols(rows * plen);
  kernels::im2col(xv.data().data(), cs.batch, cs.channels_in, cs.geom, cols.data());
  Tensor<T> out(cs.output_shape());
  kernels::gemm(false, false, rows, cout, plen, cols.data(), kv.data().data(), out.data().data());

  const bool rg = tape.requires_grad(x) || tape.requires_grad(kernel);
  return tape.record(std::move(out), rg,
                     [x, kernel, cs, rows, plen, cout](Tape<T>& t, const Tensor<T>& g) {
                       if (t.requires_grad(kernel)) {
                         const Tensor<T>& xv = t.value(x);
                         std::vector<T> cols(rows * plen);
                         kernels::im2col(xv.data().data(), cs.batch, cs.channels_in, cs.geom,
                                         cols.data());
                         Tensor<T> gk(t.value(kernel).shape());
                         kernels::gemm(true, false, plen, cout, rows, cols.data(), g.data().data(),
                                       gk.data().data());
                         t.accumulate(kernel, gk);
                       }
                       if (t.requires_grad(x)) {
                         std::vector<T> gcols(rows * plen);
                         kernels::gemm(false, true, rows, plen, cout, g.data().data(),
                                       t.value(kernel).data().data(), gcols.data());
                         Tensor<T> gx(t.value(x).shape());
                         kernels::col2im(gcols.data(), cs.batch, cs.channels_in, cs.geom,
                                         gx.data().data());
                         t.accumulate(x, gx);
                       }
                     });
}

// Max pooling; padded positions never win.
template <typename T>
Var max_pool(Tape<T>& tape, Var x, std::size_t window, std::size_t stride, Padding padding) {
  const Tensor<T>& xv = tape.value(x);
  if (xv.rank() != 4) throw ShapeError("max_pool: input must be NHWC");
  const std::size_t n = xv.dim(0), c = xv.dim(3);
  const WindowGeometry g = WindowGeometry::make(xv.dim(1), xv.dim(2), window, window, stride, padding);
  Tensor<T> out({n, g.out_h, g.out_w, c});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_idx = 0;
          bool any = false;
          for (std::size_t kh = 0; kh < window; ++kh) {
            const std::ptrdiff_t r = g.in_row(oh, kh);
            for (std::size_t kw = 0; kw < window; ++kw) {
              const std::ptrdiff_t cc = g.in_col(ow, kw);
              if (!g.inside(r, cc)) continue;
              const std::size_t idx =
                  ((b * g.in_h + static_cast<std::size_t>(r)) * g.in_w + static_cast<std::size_t>(cc)) * c + ch;
              if (!any || xv[idx] > best) {
                best = xv[idx];
                best_idx = idx;
                any = true;
              }
            }
          }
          const std::size_t o = ((b * g.out_h + oh) * g.out_w + ow) * c + ch;
          out[o] = best;
          argmax[o] = best_idx;
        }
      }
    }
  }
  return tape.record(std::move(out), tape.requires_grad(x),
                     [x, argmax = std::move(argmax)](Tape<T>& t, const Tensor<T>& g) {
                       Tensor<T> gx(t.value(x).shape());
                       for (std::size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += g[o];
                       t.accumulate(x, gx);
                     });
}

// [N, H, W, C] -> [N, C]
template <typename T>
Var global_avg_pool(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  if (xv.rank() != 4) throw ShapeError("global_avg_pool: input must be NHWC");
  const std::size_t n = xv.dim(0), hw = xv.dim(1) * xv.dim(2), c = xv.dim(3);
  Tensor<T> out({n, c});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t ch = 0; ch < c; ++ch) out[b * c + ch] += xv[(b * hw + p) * c + ch];
    }
  }
  const T inv = T{1} / static_cast<T>(hw);
  for (auto& v : out.data()) v *= inv;
  return tape.record(std::move(out), tape.requires_grad(x),
                     [x, n, hw, c, inv](Tape<T>& t, const Tensor<T>& g) {
                       Tensor<T> gx(t.value(x).shape());
                       for (std::size_t b = 0; b < n; ++b) {
                         for (std::size_t p = 0; p < hw; ++p) {
                           for (std::size_t ch = 0; ch < c; ++ch) {
                             gx[(b * hw + p) * c + ch] = g[b * c + ch] * inv;
                           }
                         }
                       }
                       t.accumulate(x, gx);
                     });
}

template <typename T>
struct BatchNormStats {
  Tensor<T> mean;
  Tensor<T> var;

  explicit BatchNormStats(std::size_t channels = 0)
      : mean({channels}, T{0}), var({channels}, T{1}) {}
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

// Per-channel normalization over all axes but the last. Train mode uses batch
// statistics and updates the running stats; Eval uses the running stats.
template <typename T>
Var batch_norm(Tape<T>& tape, Var x, Var gamma, Var beta, BatchNormStats<T>& running, Mode mode,
               double momentum = kBatchNormMomentum, double eps = kBatchNormEps) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& gv = tape.value(gamma);
  const Tensor<T>& bv = tape.value(beta);
  if (xv.rank() == 0) throw ShapeError("batch_norm: scalar input");
  const std::size_t c = xv.shape().back();
  if (gv.shape() != Shape{c} || bv.shape() != Shape{c} || running.mean.shape() != Shape{c}) {
    throw ShapeError("batch_norm: parameter shape does not match " + std::to_string(c) + " channels");
  }
  const std::size_t m = xv.size() / c;

  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (mode == Mode::Train) {
    if (m < 2) throw std::invalid_argument("batch_norm: Train mode needs at least 2 values per channel");
    for (std::size_t i = 0; i < xv.size(); ++i) mean[i % c] += static_cast<double>(xv[i]);
    for (auto& v : mean) v /= static_cast<double>(m);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double d = static_cast<double>(xv[i]) - mean[i % c];
      var[i % c] += d * d;
    }
    for (auto& v : var) v /= static_cast<double>(m);
    const double unbias = static_cast<double>(m) / static_cast<double>(m - 1);
    for (std::size_t ch = 0; ch < c; ++ch) {
      running.mean[ch] = static_cast<T>(momentum * running.mean[ch] + (1.0 - momentum) * mean[ch]);
      running.var[ch] = static_cast<T>(momentum * running.var[ch] + (1.0 - momentum) * var[ch] * unbias);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = static_cast<double>(running.mean[ch]);
      var[ch] = static_cast<double>(running.var[ch]);
    }
  }

  std::vector<double> invstd(c);
  for (std::size_t ch = 0; ch < c; ++ch) invstd[ch] = 1.0 / std::sqrt(var[ch] + eps);
  Tensor<T> xhat(xv.shape());
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const std::size_t ch = i % c;
    xhat[i] = static_cast<T>((static_cast<double>(xv[i]) - mean[ch]) * invstd[ch]);
    out[i] = gv[ch] * xhat[i] + bv[ch];
  }

  const bool rg = tape.requires_grad(x) || tape.requires_grad(gamma) || tape.requires_grad(beta);
  return tape.record(
      std::move(out), rg,
      [x, gamma, beta, c, m, mode, invstd = std::move(invstd), xhat = std::move(xhat)](
          Tape<T>& t, const Tensor<T>& g) {
        std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          sum_g[i % c] += static_cast<double>(g[i]);
          sum_gx[i % c] += static_cast<double>(g[i]) * static_cast<double>(xhat[i]);
        }
        if (t.requires_grad(gamma)) {
          Tensor<T> gg({c});
          for (std::size_t ch = 0; ch < c; ++ch) gg[ch] = static_cast<T>(sum_gx[ch]);
          t.accumulate(gamma, gg);
        }
        if (t.requires_grad(beta)) {
          Tensor<T> gb({c});
          for (std::size_t ch = 0; ch < c; ++ch) gb[ch] = static_cast<T>(sum_g[ch]);
          t.accumulate(beta, gb);
        }
        if (t.requires_grad(x)) {
          const Tensor<T>& gv = t.value(gamma);
          Tensor<T> gx(g.shape());
          const double inv_m = 1.0 / static_cast<double>(m);
          for (std::size_t i = 0; i < g.size(); ++i) {
            const std::size_t ch = i % c;
            const double scale = static_cast<double>(gv[ch]) * invstd[ch];
            if (mode == Mode::Train) {
              gx[i] = static_cast<T>(scale * (static_cast<double>(g[i]) - sum_g[ch] * inv_m -
                                              static_cast<double>(xhat[i]) * sum_gx[ch] * inv_m));
            } else {
              gx[i] = static_cast<T>(scale * static_cast<double>(g[i]));
            }
          }
          t.accumulate(x, gx);
        }
      });
}

// Mean over the batch of -log softmax(logits)[label], stabilized by
// subtracting the row max.
template <typename T>
Var softmax_cross_entropy(Tape<T>& tape, Var logits, const std::vector<std::size_t>& labels) {
  const Tensor<T>& lv = tape.value(logits);
  if (lv.rank() != 2) throw ShapeError("softmax_cross_entropy: logits must be [batch, classes]");
  const std::size_t n = lv.dim(0), k = lv.dim(1);
  if (labels.size() != n) throw ShapeError("softmax_cross_entropy: label count mismatch");
  if (n == 0) throw std::invalid_argument("softmax_cross_entropy: empty batch");
  Tensor<T> probs({n, k});
  double loss = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    if (labels[b] >= k) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(labels[b]) +
                              " out of range for " + std::to_string(k) + " classes");
    }
    const T* row = lv.data().data() + b * k;
    const double mx = static_cast<double>(*std::max_element(row, row + k));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    const double log_z = std::log(z) + mx;
    loss += log_z - static_cast<double>(row[labels[b]]);
    for (std::size_t j = 0; j < k; ++j) {
      probs[b * k + j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - log_z));
    }
  }
  loss /= static_cast<double>(n);
  return tape.record(Tensor<T>::scalar(static_cast<T>(loss)), tape.requires_grad(logits),
                     [logits, labels, n, k, probs = std::move(probs)](Tape<T>& t, const Tensor<T>& g) {
                       const T scale = g[0] / static_cast<T>(n);
                       Tensor<T> gl({n, k});
                       for (std::size_t b = 0; b < n; ++b) {
                         for (std::size_t j = 0; j < k; ++j) {
                           const T onehot = j == labels[b] ? T{1} : T{0};
                           gl[b * k + j] = (probs[b * k + j] - onehot) * scale;
                         }
                       }
                       t.accumulate(logits, gl);
                     });
}

// Fake quantization with a straight-through gradient inside the clip window.
template <typename T>
Var fake_quant(Tape<T>& tape, Var x, const std::vector<double>& bounds,
               const quant::Precision& precision, std::size_t channel_axis) {
  const Tensor<T>& xv = tape.value(x);
  const quant::QuantRange range = quant::quant_range(precision);
  Tensor<T> out = quant::fake_quantize(xv, quant::compute_scales(bounds, precision), range, channel_axis);
  return tape.record(std::move(out), tape.requires_grad(x),
                     [x, bounds, channel_axis, s = precision.signedness()](Tape<T>& t,
                                                                          const Tensor<T>& g) {
                       t.accumulate(x, quant::ste_backward(g, t.value(x), bounds, channel_axis, s));
                     });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  T s{0};
  for (T v : xv.data()) s += v;
  return tape.record(Tensor<T>::scalar(s), tape.requires_grad(x), [x](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, Tensor<T>(t.value(x).shape(), g[0]));
  });
}

// sum(x * w) for a constant tensor w; turns any op into a scalar probe.
template <typename T>
Var weighted_sum(Tape<T>& tape, Var x, const Tensor<T>& w) {
  const Tensor<T>& xv = tape.value(x);
  require_same_shape(xv.shape(), w.shape(), "weighted_sum");
  T s{0};
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i] * w[i];
  return tape.record(Tensor<T>::scalar(s), tape.requires_grad(x), [x, w](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> gx(w.shape());
    for (std::size_t i = 0; i < w.size(); ++i) gx[i] = w[i] * g[0];
    t.accumulate(x, gx);
  });
}

}  // namespace qat::nn
