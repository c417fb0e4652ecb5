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

#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "qat/kernels.hpp"
#include "qat/tensor.hpp"

namespace qat {
namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Direct sliding-window NHWC convolution with explicit TF-style SAME padding.
std::vector<double> conv_oracle(const std::vector<double>& x, std::size_t n, std::size_t h, std::size_t w,
                                std::size_t ci, const std::vector<double>& k, std::size_t kh, std::size_t kw,
                                std::size_t co, std::size_t stride, bool same, std::size_t* oh_out,
                                std::size_t* ow_out) {
  std::size_t oh, ow;
  long pt = 0, pl = 0;
  if (same) {
    oh = (h + stride - 1) / stride;
    ow = (w + stride - 1) / stride;
    const long ph = std::max<long>(0, static_cast<long>((oh - 1) * stride + kh) - static_cast<long>(h));
    const long pw = std::max<long>(0, static_cast<long>((ow - 1) * stride + kw) - static_cast<long>(w));
    pt = ph / 2;
    pl = pw / 2;
  } else {
    oh = (h - kh) / stride + 1;
    ow = (w - kw) / stride + 1;
  }
  *oh_out = oh;
  *ow_out = ow;
  std::vector<double> y(n * oh * ow * co, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j)
        for (std::size_t o = 0; o < co; ++o) {
          double s = 0.0;
          for (std::size_t a = 0; a < kh; ++a)
            for (std::size_t c = 0; c < kw; ++c) {
              const long r = static_cast<long>(i * stride + a) - pt;
              const long q = static_cast<long>(j * stride + c) - pl;
              if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(w)) continue;
              for (std::size_t ch = 0; ch < ci; ++ch) {
                s += x[((b * h + r) * w + q) * ci + ch] * k[((a * kw + c) * ci + ch) * co + o];
              }
            }
          y[((b * oh + i) * ow + j) * co + o] = s;
        }
  return y;
}

TEST(TensorTest, ShapeAndReshape) {
  Tensor<float> t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_EQ(t.reshaped({6, 4}).shape(), (Shape{6, 4}));
  EXPECT_THROW(t.reshaped({5, 5}), ShapeError);
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor<float>({2}).item(), ShapeError);
}

TEST(TensorTest, AxisSplitChannelOf) {
  const AxisSplit s = split_axis({2, 3, 4}, 1);
  EXPECT_EQ(s.outer, 2u);
  EXPECT_EQ(s.channels, 3u);
  EXPECT_EQ(s.inner, 4u);
  // flat index of (1, 2, 3)
  EXPECT_EQ(s.channel_of((1 * 3 + 2) * 4 + 3), 2u);
  EXPECT_THROW(split_axis({2, 3}, 2), ShapeError);
}

TEST(WindowGeometryTest, SamePaddingMatchesConvention) {
  // 7x7 input, 3x3 kernel, stride 2: out 4, total pad 2 split 1/1.
  auto g = WindowGeometry::make(7, 7, 3, 3, 2, Padding::Same);
  EXPECT_EQ(g.out_h, 4u);
  EXPECT_EQ(g.pad_top, 1u);
  // 8 input, 3 kernel, stride 2: out 4, total pad 1 -> top 0, bottom 1.
  g = WindowGeometry::make(8, 8, 3, 3, 2, Padding::Same);
  EXPECT_EQ(g.out_h, 4u);
  EXPECT_EQ(g.pad_top, 0u);
  // 224 input, 7x7 stride 2 -> 112.
  EXPECT_EQ(WindowGeometry::make(224, 224, 7, 7, 2, Padding::Same).out_h, 112u);
  EXPECT_THROW(WindowGeometry::make(2, 2, 3, 3, 1, Padding::Valid), ShapeError);
  EXPECT_THROW(WindowGeometry::make(4, 4, 3, 3, 0, Padding::Same), ShapeError);
}

TEST(GemmTest, AllTransposeCombinationsMatchNaive) {
  std::mt19937_64 rng(7);
  const std::size_t m = 5, n = 4, k = 6;
  const auto a = random_vec(m * k, rng);
  const auto b = random_vec(k * n, rng);
  std::vector<double> ref(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) ref[i * n + j] += a[i * k + p] * b[p * n + j];
  std::vector<double> at(k * m), bt(n * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  for (int ta = 0; ta < 2; ++ta) {
    for (int tb = 0; tb < 2; ++tb) {
      std::vector<double> c(m * n, 0.0);
      kernels::gemm<double>(ta, tb, m, n, k, ta ? at.data() : a.data(), tb ? bt.data() : b.data(), c.data());
      for (std::size_t i = 0; i < m * n; ++i) EXPECT_NEAR(c[i], ref[i], 1e-12) << ta << tb;
    }
  }
  // accumulate adds onto existing contents
  std::vector<double> c(m * n, 1.0);
  kernels::gemm<double>(false, false, m, n, k, a.data(), b.data(), c.data(), true);
  for (std::size_t i = 0; i < m * n; ++i) EXPECT_NEAR(c[i], ref[i] + 1.0, 1e-12);
}

TEST(GemmTest, IntegerGemmExact) {
  const std::vector<std::int32_t> a{1, -2, 3, 4, 5, -6};  // 2x3
  const std::vector<std::int32_t> b{7, 8, -9, 10, 11, 12};  // 3x2
  std::vector<std::int64_t> c(4);
  kernels::integer_gemm<std::int64_t>(2, 2, 3, a.data(), b.data(), c.data());
  EXPECT_EQ(c, (std::vector<std::int64_t>{1 * 7 + -2 * -9 + 3 * 11, 1 * 8 + -2 * 10 + 3 * 12,
                                          4 * 7 + 5 * -9 + -6 * 11, 4 * 8 + 5 * 10 + -6 * 12}));
}

struct ConvCase {
  std::size_t n, h, w, ci, co, k, stride;
  bool same;
};

class Im2colConvTest : public ::testing::TestWithParam<ConvCase> {};

TEST_P(Im2colConvTest, LoweredConvMatchesSlidingWindow) {
  const ConvCase c = GetParam();
  std::mt19937_64 rng(c.h * 31 + c.k * 7 + c.stride);
  const auto x = random_vec(c.n * c.h * c.w * c.ci, rng);
  const auto k = random_vec(c.k * c.k * c.ci * c.co, rng);
  std::size_t oh = 0, ow = 0;
  const auto ref = conv_oracle(x, c.n, c.h, c.w, c.ci, k, c.k, c.k, c.co, c.stride, c.same, &oh, &ow);

  const ConvShape cs = ConvShape::make({c.n, c.h, c.w, c.ci}, {c.k, c.k, c.ci, c.co}, c.stride,
                                       c.same ? Padding::Same : Padding::Valid);
  ASSERT_EQ(cs.geom.out_h, oh);
  ASSERT_EQ(cs.geom.out_w, ow);
  std::vector<double> cols(cs.rows() * cs.patch_len());
  kernels::im2col(x.data(), c.n, c.ci, cs.geom, cols.data());
  std::vector<double> y(cs.rows() * c.co);
  kernels::gemm<double>(false, false, cs.rows(), c.co, cs.patch_len(), cols.data(), k.data(), y.data());
  ASSERT_EQ(y.size(), ref.size());
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-10);
}

INSTANTIATE_TEST_SUITE_P(Shapes, Im2colConvTest,
                         ::testing::Values(ConvCase{1, 5, 5, 1, 1, 3, 1, true}, ConvCase{2, 7, 7, 3, 4, 3, 2, true},
                                           ConvCase{2, 8, 8, 2, 3, 3, 2, true}, ConvCase{1, 6, 6, 2, 2, 1, 2, true},
                                           ConvCase{1, 9, 9, 2, 2, 7, 2, true}, ConvCase{2, 6, 5, 3, 2, 3, 1, false},
                                           ConvCase{1, 4, 4, 1, 2, 4, 1, false}));

TEST(Col2imTest, IsAdjointOfIm2col) {
  // <im2col(x), y> == <x, col2im(y)> for random x, y.
  std::mt19937_64 rng(3);
  const std::size_t n = 2, h = 5, w = 6, ci = 3;
  const auto g = WindowGeometry::make(h, w, 3, 3, 2, Padding::Same);
  const std::size_t rows = n * g.out_h * g.out_w, plen = 9 * ci;
  const auto x = random_vec(n * h * w * ci, rng);
  const auto y = random_vec(rows * plen, rng);
  std::vector<double> cols(rows * plen), back(x.size(), 0.0);
  kernels::im2col(x.data(), n, ci, g, cols.data());
  kernels::col2im(y.data(), n, ci, g, back.data());
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < cols.size(); ++i) lhs += cols[i] * y[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * back[i];
  EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, std::abs(lhs)));
}

TEST(ConvShapeTest, RejectsBadShapes) {
  EXPECT_THROW(ConvShape::make({1, 4, 4}, {3, 3, 1, 1}, 1, Padding::Same), ShapeError);
  EXPECT_THROW(ConvShape::make({1, 4, 4, 2}, {3, 3, 3, 1}, 1, Padding::Same), ShapeError);
}

}  // namespace
}  // namespace qat
