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

// Raw compute kernels shared by the float engine and the integer-domain
// quantized ops: row-major GEMM, NHWC patch extraction (im2col) and its
// adjoint, and convolution output geometry.
//
// All loops run in a fixed order so results are bit-reproducible for a given
// build.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include "qat/tensor.hpp"

namespace qat {

enum class Padding { Same, Valid };

inline const char* to_string(Padding p) { return p == Padding::Same ? "SAME" : "VALID"; }

// Output geometry of a 2-D window op (conv or pool) over NHWC input.
// SAME follows the usual convention: out = ceil(in / stride), with the extra
// padding row/column going to the bottom/right.
struct WindowGeometry {
  std::size_t in_h = 0, in_w = 0;
  std::size_t k_h = 1, k_w = 1;
  std::size_t stride = 1;
  std::size_t out_h = 0, out_w = 0;
  std::size_t pad_top = 0, pad_left = 0;

  static WindowGeometry make(std::size_t in_h, std::size_t in_w, std::size_t k_h,
                             std::size_t k_w, std::size_t stride, Padding padding) {
    if (stride == 0) throw ShapeError("window stride must be positive");
    if (k_h == 0 || k_w == 0) throw ShapeError("window size must be positive");
    WindowGeometry g;
    g.in_h = in_h;
    g.in_w = in_w;
    g.k_h = k_h;
    g.k_w = k_w;
    g.stride = stride;
    if (padding == Padding::Same) {
      g.out_h = (in_h + stride - 1) / stride;
      g.out_w = (in_w + stride - 1) / stride;
      const std::size_t need_h = (g.out_h - 1) * stride + k_h;
      const std::size_t need_w = (g.out_w - 1) * stride + k_w;
      g.pad_top = need_h > in_h ? (need_h - in_h) / 2 : 0;
      g.pad_left = need_w > in_w ? (need_w - in_w) / 2 : 0;
    } else {
      if (in_h < k_h || in_w < k_w) {
        throw ShapeError("VALID window " + std::to_string(k_h) + "x" + std::to_string(k_w) +
                         " larger than input " + std::to_string(in_h) + "x" +
                         std::to_string(in_w));
      }
      g.out_h = (in_h - k_h) / stride + 1;
      g.out_w = (in_w - k_w) / stride + 1;
    }
    return g;
  }

  // Input row for output row oh and kernel row kh; negative means padding.
  std::ptrdiff_t in_row(std::size_t oh, std::size_t kh) const noexcept {
    return static_cast<std::ptrdiff_t>(oh * stride + kh) - static_cast<std::ptrdiff_t>(pad_top);
  }
  std::ptrdiff_t in_col(std::size_t ow, std::size_t kw) const noexcept {
    return static_cast<std::ptrdiff_t>(ow * stride + kw) - static_cast<std::ptrdiff_t>(pad_left);
  }
  bool inside(std::ptrdiff_t r, std::ptrdiff_t c) const noexcept {
    return r >= 0 && c >= 0 && r < static_cast<std::ptrdiff_t>(in_h) &&
           c < static_cast<std::ptrdiff_t>(in_w);
  }
};

namespace kernels {

// C[M,N] (+)= op(A) * op(B). op(A) is MxK, op(B) is KxN. Leading dimensions
// are implied by the untransposed storage shapes.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const T* a, const T* b, T* c, bool accumulate = false) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] = T{0};
  }
  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = a[i * k + p];
        if (av == T{0}) continue;
        const T* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (trans_a && !trans_b) {
    // A stored KxM.
    for (std::size_t p = 0; p < k; ++p) {
      const T* arow = a + p * m;
      const T* brow = b + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const T av = arow[i];
        if (av == T{0}) continue;
        T* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!trans_a && trans_b) {
    // B stored NxK.
    for (std::size_t i = 0; i < m; ++i) {
      const T* arow = a + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const T* brow = b + j * k;
        T s{0};
        for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
        c[i * n + j] += s;
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        T s{0};
        for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[j * k + p];
        c[i * n + j] += s;
      }
    }
  }
}

// Integer GEMM with a wide accumulator: C[M,N] = A[M,K] * B[K,N].
template <typename Acc, typename In>
void integer_gemm(std::size_t m, std::size_t n, std::size_t k, const In* a, const In* b,
                  Acc* c) {
  for (std::size_t i = 0; i < m * n; ++i) c[i] = Acc{0};
  for (std::size_t i = 0; i < m; ++i) {
    Acc* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Acc av = static_cast<Acc>(a[i * k + p]);
      if (av == 0) continue;
      const In* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * static_cast<Acc>(brow[j]);
    }
  }
}

// Patch extraction for NHWC input [batch, in_h, in_w, channels]. Output rows
// are (n, oh, ow) and columns are (kh, kw, c), matching an HWIO kernel
// flattened to [k_h * k_w * channels, out_channels]. Padding reads as zero.
template <typename T>
void im2col(const T* x, std::size_t batch, std::size_t channels, const WindowGeometry& g,
            T* cols) {
  const std::size_t row_len = g.k_h * g.k_w * channels;
  for (std::size_t nb = 0; nb < batch; ++nb) {
    const T* img = x + nb * g.in_h * g.in_w * channels;
    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        T* row = cols + ((nb * g.out_h + oh) * g.out_w + ow) * row_len;
        for (std::size_t kh = 0; kh < g.k_h; ++kh) {
          const std::ptrdiff_t r = g.in_row(oh, kh);
          for (std::size_t kw = 0; kw < g.k_w; ++kw) {
            const std::ptrdiff_t cc = g.in_col(ow, kw);
            T* dst = row + (kh * g.k_w + kw) * channels;
            if (!g.inside(r, cc)) {
              for (std::size_t ch = 0; ch < channels; ++ch) dst[ch] = T{0};
            } else {
              const T* src = img + (static_cast<std::size_t>(r) * g.in_w +
                                    static_cast<std::size_t>(cc)) * channels;
              for (std::size_t ch = 0; ch < channels; ++ch) dst[ch] = src[ch];
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds patch gradients back onto the input.
template <typename T>
void col2im(const T* cols, std::size_t batch, std::size_t channels, const WindowGeometry& g,
            T* dx) {
  const std::size_t row_len = g.k_h * g.k_w * channels;
  for (std::size_t nb = 0; nb < batch; ++nb) {
    T* img = dx + nb * g.in_h * g.in_w * channels;
    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        const T* row = cols + ((nb * g.out_h + oh) * g.out_w + ow) * row_len;
        for (std::size_t kh = 0; kh < g.k_h; ++kh) {
          const std::ptrdiff_t r = g.in_row(oh, kh);
          for (std::size_t kw = 0; kw < g.k_w; ++kw) {
            const std::ptrdiff_t cc = g.in_col(ow, kw);
            if (!g.inside(r, cc)) continue;
            const T* src = row + (kh * g.k_w + kw) * channels;
            T* dst = img + (static_cast<std::size_t>(r) * g.in_w + static_cast<std::size_t>(cc)) *
                               channels;
            for (std::size_t ch = 0; ch < channels; ++ch) dst[ch] += src[ch];
          }
        }
      }
    }
  }
}

}  // namespace kernels

// Validated shapes of an NHWC convolution with an HWIO kernel.
struct ConvShape {
  std::size_t batch = 0, channels_in = 0, channels_out = 0;
  WindowGeometry geom;

  std::size_t patch_len() const noexcept { return geom.k_h * geom.k_w * channels_in; }
  std::size_t rows() const noexcept { return batch * geom.out_h * geom.out_w; }
  Shape output_shape() const { return {batch, geom.out_h, geom.out_w, channels_out}; }

  static ConvShape make(const Shape& x, const Shape& k, std::size_t stride, Padding padding) {
    if (x.size() != 4) throw ShapeError("conv2d input must be NHWC, got " + to_string(x));
    if (k.size() != 4) throw ShapeError("conv2d kernel must be HWIO, got " + to_string(k));
    if (k[2] != x[3]) {
      throw ShapeError("conv2d kernel input channels " + std::to_string(k[2]) +
                       " do not match input channels " + std::to_string(x[3]));
    }
    ConvShape s;
    s.batch = x[0];
    s.channels_in = x[3];
    s.channels_out = k[3];
    s.geom = WindowGeometry::make(x[1], x[2], k[0], k[1], stride, padding);
    return s;
  }
};

}  // namespace qat
