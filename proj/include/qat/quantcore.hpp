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

/**
 * @file quantcore.hpp
 * @brief Uniform integer quantization without zero point.
 *
 * A real value x with clipping bound b is mapped to the integer grid as
 *
 *   S = hi / b
 *   q = clamp(round(x * S), lo, hi)
 *   x' = q / S
 *
 * where [lo, hi] is either the symmetric signed range [-(2^(B-1) - 1),
 * 2^(B-1) - 1] or the unsigned range [0, 2^B - 1]. No shift is ever applied,
 * so 0 maps to 0 exactly. Scales are per channel along a chosen axis.
 *
 * The integer-domain ops (quantized_matmul, quantized_conv2d) multiply the
 * integer payloads with a wide accumulator and rescale once at the end. They
 * agree with running the float op on fake-quantized operands up to float
 * summation order.
 *
 * All scale arithmetic is carried out in double regardless of the tensor
 * element type.
 */

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qat/kernels.hpp"
#include "qat/tensor.hpp"

namespace qat::quant {

using qat::to_string;

enum class Signedness { Signed, Unsigned };

inline const char* to_string(Signedness s) { return s == Signedness::Signed ? "signed" : "unsigned"; }

// Bit width plus signedness, or FullPrecision (no quantization).
class Precision {
 public:
  static constexpr int kMaxBits = 16;
  // Cost-model width of an unquantized operand (the bfloat16 baseline).
  static constexpr int kFullPrecisionCostBits = 16;

  constexpr Precision() = default;  // FullPrecision

  static constexpr Precision full() { return Precision(); }

  static Precision make(int bits, Signedness s) {
    const int min_bits = s == Signedness::Signed ? 2 : 1;
    if (bits < min_bits || bits > kMaxBits) {
      throw std::invalid_argument(std::string(to_string(s)) + " precision requires " +
                                  std::to_string(min_bits) + ".." + std::to_string(kMaxBits) +
                                  " bits, got " + std::to_string(bits));
    }
    Precision p;
    p.bits_ = bits;
    p.signedness_ = s;
    return p;
  }
  static Precision signed_bits(int bits) { return make(bits, Signedness::Signed); }
  static Precision unsigned_bits(int bits) { return make(bits, Signedness::Unsigned); }

  constexpr bool is_full() const noexcept { return bits_ == 0; }
  // 0 for FullPrecision.
  constexpr int bits() const noexcept { return bits_; }
  constexpr Signedness signedness() const noexcept { return signedness_; }
  constexpr int cost_bits() const noexcept { return is_full() ? kFullPrecisionCostBits : bits_; }

  std::string describe() const {
    if (is_full()) return "full";
    return std::string(signedness_ == Signedness::Signed ? "s" : "u") + std::to_string(bits_);
  }

  friend constexpr bool operator==(const Precision&, const Precision&) = default;

 private:
  int bits_ = 0;
  Signedness signedness_ = Signedness::Signed;
};

struct QuantRange {
  std::int32_t lo = 0;
  std::int32_t hi = 0;

  friend constexpr bool operator==(const QuantRange&, const QuantRange&) = default;
};

inline QuantRange quant_range(const Precision& p) {
  if (p.is_full()) throw std::invalid_argument("quant_range: FullPrecision has no integer range");
  if (p.signedness() == Signedness::Signed) {
    const std::int32_t hi = (std::int32_t{1} << (p.bits() - 1)) - 1;
    return {-hi, hi};
  }
  return {0, (std::int32_t{1} << p.bits()) - 1};
}

// Bounds below this are floored so scales stay finite.
inline constexpr double kMinBound = 1e-6;

enum class Rounding { HalfAwayFromZero, HalfToEven };
inline constexpr Rounding kDefaultRounding = Rounding::HalfAwayFromZero;

template <Rounding R = kDefaultRounding>
inline double round_level(double v) noexcept {
  if constexpr (R == Rounding::HalfAwayFromZero) {
    return std::round(v);
  } else {
    return std::nearbyint(v);  // default FE_TONEAREST mode
  }
}

struct ScaleVector {
  std::vector<double> scales;

  std::size_t size() const noexcept { return scales.size(); }
  double operator[](std::size_t i) const noexcept { return scales[i]; }
};

inline ScaleVector compute_scales(const std::vector<double>& bounds, const Precision& p) {
  const QuantRange r = quant_range(p);
  ScaleVector out;
  out.scales.reserve(bounds.size());
  for (double b : bounds) {
    if (!(b >= 0.0) || !std::isfinite(b)) {
      throw std::invalid_argument("compute_scales: bound must be finite and nonnegative, got " +
                                  std::to_string(b));
    }
    out.scales.push_back(static_cast<double>(r.hi) / std::max(b, kMinBound));
  }
  return out;
}

// Quantizes one value to its integer level. NaN maps to NaN.
inline double quantize_level(double x, double scale, const QuantRange& r) noexcept {
  const double level = round_level(x * scale);
  if (std::isnan(level)) return level;
  return std::clamp(level, static_cast<double>(r.lo), static_cast<double>(r.hi));
}

namespace detail {

// Per-element scale lookup: one scale broadcasts over the whole tensor,
// otherwise one scale per entry along `axis`.
inline AxisSplit scale_layout(const Shape& shape, const ScaleVector& s, std::size_t axis,
                              const char* what) {
  if (s.size() == 0) throw ShapeError(std::string(what) + ": empty scale vector");
  if (s.size() == 1) return AxisSplit{1, 1, numel(shape)};
  AxisSplit split = split_axis(shape, axis);
  if (split.channels != s.size()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(s.size()) +
                     " scales for axis " + std::to_string(axis) + " of shape " +
                     to_string(shape));
  }
  return split;
}

}  // namespace detail

template <typename T>
Tensor<T> fake_quantize(const Tensor<T>& x, const ScaleVector& scales, const QuantRange& range,
                        std::size_t channel_axis) {
  const AxisSplit split = detail::scale_layout(x.shape(), scales, channel_axis, "fake_quantize");
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = scales[split.channel_of(i)];
    out[i] = static_cast<T>(quantize_level(static_cast<double>(x[i]), s, range) / s);
  }
  return out;
}

template <typename Int = std::int32_t>
struct QuantizedTensor {
  Shape shape;
  std::vector<Int> values;
  QuantRange range;
  ScaleVector scales;
  std::size_t channel_axis = 0;
};

template <typename Int = std::int32_t, typename T>
QuantizedTensor<Int> quantize_to_int(const Tensor<T>& x, const ScaleVector& scales,
                                     const QuantRange& range, std::size_t channel_axis) {
  const AxisSplit split = detail::scale_layout(x.shape(), scales, channel_axis, "quantize_to_int");
  QuantizedTensor<Int> q{x.shape(), std::vector<Int>(x.size()), range, scales, channel_axis};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double level = quantize_level(static_cast<double>(x[i]), scales[split.channel_of(i)], range);
    if (std::isnan(level)) throw std::domain_error("quantize_to_int: NaN input");
    q.values[i] = static_cast<Int>(level);
  }
  return q;
}

template <typename T = float, typename Int>
Tensor<T> dequantize(const QuantizedTensor<Int>& q) {
  const AxisSplit split = detail::scale_layout(q.shape, q.scales, q.channel_axis, "dequantize");
  Tensor<T> out(q.shape);
  for (std::size_t i = 0; i < q.values.size(); ++i) {
    out[i] = static_cast<T>(static_cast<double>(q.values[i]) / q.scales[split.channel_of(i)]);
  }
  return out;
}

// Straight-through gradient: identity inside the clip window, zero where the
// forward pass saturated. Signed window is [-b, b], unsigned [0, b].
template <typename T>
Tensor<T> ste_backward(const Tensor<T>& grad_out, const Tensor<T>& x,
                       const std::vector<double>& bounds, std::size_t channel_axis,
                       Signedness signedness = Signedness::Signed) {
  require_same_shape(grad_out.shape(), x.shape(), "ste_backward");
  AxisSplit split{1, 1, x.size()};
  if (bounds.size() != 1) {
    split = split_axis(x.shape(), channel_axis);
    if (split.channels != bounds.size()) throw ShapeError("ste_backward: bounds/channel mismatch");
  }
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double b = std::max(bounds[split.channel_of(i)], kMinBound);
    const double v = static_cast<double>(x[i]);
    const bool pass = signedness == Signedness::Signed ? std::abs(v) <= b : (v >= 0.0 && v <= b);
    out[i] = pass ? grad_out[i] : T{0};
  }
  return out;
}

// Activation-side quantization settings: precision plus clipping bounds, one
// per tensor or one per row of the activation matrix.
struct ActivationQuant {
  Precision precision;
  std::vector<double> bounds;
};

class AccumulatorOverflow : public std::overflow_error {
 public:
  using std::overflow_error::overflow_error;
};

inline std::int64_t max_magnitude(const QuantRange& r) {
  return std::max<std::int64_t>(std::abs(static_cast<std::int64_t>(r.lo)), r.hi);
}

// Rejects an integer dot product of length k whose worst case exceeds Acc.
template <typename Acc>
void check_accumulator(std::size_t k, const QuantRange& a, const QuantRange& w) {
  const long double worst = static_cast<long double>(k) * max_magnitude(a) * max_magnitude(w);
  if (worst > static_cast<long double>(std::numeric_limits<Acc>::max())) {
    throw AccumulatorOverflow("integer accumulator overflow: k=" + std::to_string(k) + " x " +
                              std::to_string(max_magnitude(a)) + " x " +
                              std::to_string(max_magnitude(w)) + " exceeds " +
                              std::to_string(std::numeric_limits<Acc>::max()));
  }
}

// Per-output-channel max-abs of a [K, N] weight matrix (columns are channels).
template <typename T>
std::vector<double> column_max_abs(const Tensor<T>& w) {
  const std::size_t k = w.dim(0), n = w.dim(1);
  std::vector<double> out(n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = std::max(out[j], std::abs(static_cast<double>(w[p * n + j])));
    }
  }
  return out;
}

namespace detail {

template <typename T>
Tensor<T> float_matmul(const Tensor<T>& a, const Tensor<T>& w) {
  Tensor<T> out({a.dim(0), w.dim(1)});
  kernels::gemm(false, false, a.dim(0), w.dim(1), a.dim(1), a.data().data(), w.data().data(),
                out.data().data());
  return out;
}

inline ScaleVector activation_scales(const ActivationQuant& cfg, std::size_t rows,
                                     const char* what) {
  if (cfg.bounds.size() != 1 && cfg.bounds.size() != rows) {
    throw ShapeError(std::string(what) + ": activation bounds must be per-tensor or per-row, got " +
                     std::to_string(cfg.bounds.size()) + " for " + std::to_string(rows) + " rows");
  }
  return compute_scales(cfg.bounds, cfg.precision);
}

}  // namespace detail

/**
 * Matrix product a[M,K] * w[K,N] with optional quantization of either side.
 *
 * Activations use the supplied bounds (per tensor or per row). Weights use
 * per-output-channel max-abs bounds computed here. When both sides are
 * quantized the product runs on integer payloads with an Acc accumulator and
 * is rescaled by 1 / (Sa[m] * Sw[n]). A FullPrecision side passes through.
 */
template <typename Acc = std::int32_t, typename T>
Tensor<T> quantized_matmul(const Tensor<T>& a, const Tensor<T>& w, const ActivationQuant& a_cfg,
                           const Precision& w_prec) {
  if (a.rank() != 2 || w.rank() != 2 || a.dim(1) != w.dim(0)) {
    throw ShapeError("quantized_matmul: incompatible shapes " + to_string(a.shape()) + " x " +
                     to_string(w.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = w.dim(1);

  if (a_cfg.precision.is_full() || w_prec.is_full()) {
    const Tensor<T> aq = a_cfg.precision.is_full()
                             ? a
                             : fake_quantize(a, detail::activation_scales(a_cfg, m, "quantized_matmul"),
                                             quant_range(a_cfg.precision), 0);
    const Tensor<T> wq =
        w_prec.is_full() ? w
                         : fake_quantize(w, compute_scales(column_max_abs(w), w_prec),
                                         quant_range(w_prec), 1);
    return detail::float_matmul(aq, wq);
  }

  const QuantRange ra = quant_range(a_cfg.precision);
  const QuantRange rw = quant_range(w_prec);
  check_accumulator<Acc>(k, ra, rw);

  const ScaleVector sa = detail::activation_scales(a_cfg, m, "quantized_matmul");
  const ScaleVector sw = compute_scales(column_max_abs(w), w_prec);
  const auto qa = quantize_to_int(a, sa, ra, 0);
  const auto qw = quantize_to_int(w, sw, rw, 1);

  std::vector<Acc> acc(m * n);
  kernels::integer_gemm<Acc>(m, n, k, qa.values.data(), qw.values.data(), acc.data());

  Tensor<T> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double s_row = sa.size() == 1 ? sa[0] : sa[i];
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = static_cast<T>(static_cast<double>(acc[i * n + j]) / (s_row * sw[j]));
    }
  }
  return out;
}

/**
 * NHWC convolution of x with an HWIO kernel under the same integer-domain
 * contract as quantized_matmul. Activation bounds are per tensor or per
 * example; weight scales are per output channel.
 *
 * Quantizes x once, extracts integer patches, and reuses the integer GEMM.
 */
template <typename Acc = std::int32_t, typename T>
Tensor<T> quantized_conv2d(const Tensor<T>& x, const Tensor<T>& kernel, std::size_t stride,
                           Padding padding, const ActivationQuant& a_cfg, const Precision& w_prec) {
  const ConvShape cs = ConvShape::make(x.shape(), kernel.shape(), stride, padding);
  const std::size_t rows = cs.rows(), plen = cs.patch_len(), cout = cs.channels_out;
  const Tensor<T> w2 = kernel.reshaped({plen, cout});

  if (a_cfg.precision.is_full() || w_prec.is_full()) {
    Tensor<T> xq = x;
    if (!a_cfg.precision.is_full()) {
      if (a_cfg.bounds.size() != 1 && a_cfg.bounds.size() != cs.batch) {
        throw ShapeError("quantized_conv2d: activation bounds must be per-tensor or per-example");
      }
      xq = fake_quantize(x, compute_scales(a_cfg.bounds, a_cfg.precision),
                         quant_range(a_cfg.precision), 0);
    }
    const Tensor<T> wq = w_prec.is_full()
                             ? w2
                             : fake_quantize(w2, compute_scales(column_max_abs(w2), w_prec),
                                             quant_range(w_prec), 1);
    std::vector<T> cols(rows * plen);
    kernels::im2col(xq.data().data(), cs.batch, cs.channels_in, cs.geom, cols.data());
    Tensor<T> out(cs.output_shape());
    kernels::gemm(false, false, rows, cout, plen, cols.data(), wq.data().data(),
                  out.data().data());
    return out;
  }

  if (a_cfg.bounds.size() != 1 && a_cfg.bounds.size() != cs.batch) {
    throw ShapeError("quantized_conv2d: activation bounds must be per-tensor or per-example");
  }
  const QuantRange ra = quant_range(a_cfg.precision);
  const QuantRange rw = quant_range(w_prec);
  check_accumulator<Acc>(plen, ra, rw);

  const ScaleVector sa = compute_scales(a_cfg.bounds, a_cfg.precision);
  const ScaleVector sw = compute_scales(column_max_abs(w2), w_prec);
  const auto qx = quantize_to_int(x, sa, ra, 0);
  const auto qw = quantize_to_int(w2, sw, rw, 1);

  std::vector<std::int32_t> cols(rows * plen);
  kernels::im2col(qx.values.data(), cs.batch, cs.channels_in, cs.geom, cols.data());
  std::vector<Acc> acc(rows * cout);
  kernels::integer_gemm<Acc>(rows, cout, plen, cols.data(), qw.values.data(), acc.data());

  Tensor<T> out(cs.output_shape());
  const std::size_t rows_per_example = cs.geom.out_h * cs.geom.out_w;
  for (std::size_t r = 0; r < rows; ++r) {
    const double s_row = sa.size() == 1 ? sa[0] : sa[r / rows_per_example];
    for (std::size_t j = 0; j < cout; ++j) {
      out[r * cout + j] = static_cast<T>(static_cast<double>(acc[r * cout + j]) / (s_row * sw[j]));
    }
  }
  return out;
}

}  // namespace qat::quant
