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

// Acceptance runner: executes the ten exit criteria and prints one
// [PASS]/[FAIL] line per criterion. Exit status is nonzero on any failure.
//
//   acceptance [--workdir DIR] [--only 1,4,9] [--workers N]

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qat/qat.hpp"
#include "qat/testing/gradcheck.hpp"

namespace {

namespace fs = std::filesystem;
using namespace qat;
using nlohmann::json;

// ---- pinned tolerances and budgets ------------------------------------------

constexpr std::size_t kQuantTrials = 100000;
constexpr double kQuantErrorSlack = 1e-12;  // relative slack on the 1/(2S) error bound
constexpr std::size_t kAqtCases = 200;
constexpr double kAqtRelTol = 1e-6;
constexpr double kGradTol = 1e-4;
constexpr double kFdStep = 1e-4;
constexpr double kResNet50Params = 25.5e6;
constexpr double kResNet50x2Params = 97.8e6;
constexpr double kParamTol = 0.02;
constexpr std::size_t kParetoSets = 1000;
constexpr std::size_t kParetoMaxN = 1000;
constexpr std::size_t kLifecycleSteps = 500;

// Desk-scale training task and its reference accuracy A*. A* is the top-1 of
// the Baseline preset on this exact task, measured once (0.8027) and pinned
// to two decimals.
constexpr double kReferenceTop1 = 0.80;
constexpr double kBaselineReproTol = 0.01;  // build-to-build float reordering
constexpr double kQuantizedTol = 0.02;
constexpr double kLossDecrease = 5.0;

constexpr double kBudget1 = 10, kBudget3 = 30, kBudget4 = 120, kBudget7 = 30, kBudget8 = 60, kBudget9 = 1800,
                 kBudget10 = 7200;

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Checker {
 public:
  void expect(bool cond, const std::string& what) {
    if (!cond && failures_.size() < 8) failures_.push_back(what);
    if (!cond) ++count_;
  }
  Outcome outcome(std::string summary) const {
    if (count_ == 0) return {true, std::move(summary)};
    std::string d = std::to_string(count_) + " check(s) failed: ";
    for (std::size_t i = 0; i < failures_.size(); ++i) d += (i ? "; " : "") + failures_[i];
    return {false, d + " | " + summary};
  }

 private:
  std::vector<std::string> failures_;
  std::size_t count_ = 0;
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

struct CliResult {
  int code = 0;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(QAT_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) throw std::runtime_error("popen failed");
  CliResult r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

Tensor<double> randn(const Shape& s, std::mt19937_64& rng, double stddev = 1.0) {
  std::normal_distribution<double> d(0.0, stddev);
  Tensor<double> t(s);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

// ---- AC1 ---------------------------------------------------------------------

Outcome ac1_quantizer_properties() {
  using namespace quant;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Checker c;
  std::size_t inside = 0, outside = 0;
  for (std::size_t t = 0; t < kQuantTrials; ++t) {
    const bool is_signed = t % 2 == 0;
    const int min_bits = is_signed ? 2 : 1;
    const int bits = min_bits + static_cast<int>(rng() % static_cast<std::uint64_t>(17 - min_bits));
    const Precision p = is_signed ? Precision::signed_bits(bits) : Precision::unsigned_bits(bits);
    const double bound = std::pow(10.0, -3.0 + 6.0 * unit(rng));
    const double x = bound * (-2.0 + 4.0 * unit(rng));
    const double x2 = bound * (-2.0 + 4.0 * unit(rng));
    const QuantRange r = quant_range(p);
    const ScaleVector s = compute_scales({bound}, p);
    const double scale = s[0];
    auto fq = [&](double v) { return fake_quantize(Tensor<double>({1}, v), s, r, 0)[0]; };
    const double y = fq(x);
    const std::string tag = p.describe() + " b=" + fmt(bound) + " x=" + fmt(x);
    c.expect(fq(y) == y, "idempotence " + tag);
    c.expect(fq(0.0) == 0.0, "zero " + tag);
    const double level = quantize_level(x, scale, r);
    c.expect(level >= r.lo && level <= r.hi && level == std::trunc(level), "range " + tag);
    c.expect(y >= r.lo / scale && y <= r.hi / scale, "containment " + tag);
    const double lo_edge = is_signed ? -bound : 0.0;
    if (x >= lo_edge && x <= bound) {
      ++inside;
      c.expect(std::abs(y - x) <= (1.0 + kQuantErrorSlack) / (2.0 * scale), "error bound " + tag);
    } else {
      ++outside;
      const double clip = x > bound ? r.hi / scale : r.lo / scale;
      c.expect(y == clip, "clipping " + tag);
    }
    const double a = std::min(x, x2), b = std::max(x, x2);
    c.expect(fq(a) <= fq(b), "monotonic " + tag);
  }
  return c.outcome(std::to_string(kQuantTrials) + " triples, " + std::to_string(inside) + " inside / " +
                   std::to_string(outside) + " outside bounds");
}

// ---- AC2 ---------------------------------------------------------------------

Outcome ac2_range_table() {
  using namespace quant;
  Checker c;
  const struct {
    Precision p;
    QuantRange expect;
  } rows[] = {{Precision::signed_bits(8), {-127, 127}},
              {Precision::signed_bits(4), {-7, 7}},
              {Precision::unsigned_bits(4), {0, 15}},
              {Precision::unsigned_bits(8), {0, 255}}};
  std::string d;
  for (const auto& row : rows) {
    const QuantRange r = quant_range(row.p);
    c.expect(r == row.expect, row.p.describe());
    d += row.p.describe() + "=[" + std::to_string(r.lo) + "," + std::to_string(r.hi) + "] ";
  }
  return c.outcome(d);
}

// ---- AC3 ---------------------------------------------------------------------

// Fake-quantized operands multiplied in double.
Tensor<double> reference_matmul(const Tensor<double>& a, const Tensor<double>& w, const quant::ActivationQuant& ac,
                                const quant::Precision& wp) {
  using namespace quant;
  const auto aq = fake_quantize(a, compute_scales(ac.bounds, ac.precision), quant_range(ac.precision), 0);
  const auto wq = fake_quantize(w, compute_scales(column_max_abs(w), wp), quant_range(wp), 1);
  const std::size_t m = a.dim(0), k = a.dim(1), n = w.dim(1);
  Tensor<double> out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += aq[i * k + p] * wq[p * n + j];
      out[i * n + j] = s;
    }
  return out;
}

// Direct sliding-window NHWC/HWIO convolution of fake-quantized operands.
Tensor<double> reference_conv(const Tensor<double>& x, const Tensor<double>& kernel, std::size_t stride,
                              const quant::ActivationQuant& ac, const quant::Precision& wp) {
  using namespace quant;
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), ci = x.dim(3);
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1), co = kernel.dim(3);
  const auto xq = fake_quantize(x, compute_scales(ac.bounds, ac.precision), quant_range(ac.precision), 0);
  std::vector<double> wb(co, 0.0);
  for (std::size_t i = 0; i < kernel.size(); ++i) wb[i % co] = std::max(wb[i % co], std::abs(kernel[i]));
  const auto kq = fake_quantize(kernel, compute_scales(wb, wp), quant_range(wp), 3);
  const std::size_t oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
  const long pt = static_cast<long>(std::max<long>(0, static_cast<long>((oh - 1) * stride + kh) - long(h)) / 2);
  const long pl = static_cast<long>(std::max<long>(0, static_cast<long>((ow - 1) * stride + kw) - long(w)) / 2);
  Tensor<double> out({n, oh, ow, co});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xo = 0; xo < ow; ++xo)
        for (std::size_t o = 0; o < co; ++o) {
          double s = 0.0;
          for (std::size_t dy = 0; dy < kh; ++dy)
            for (std::size_t dx = 0; dx < kw; ++dx) {
              const long iy = static_cast<long>(y * stride + dy) - pt, ix = static_cast<long>(xo * stride + dx) - pl;
              if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(w)) continue;
              for (std::size_t c = 0; c < ci; ++c) {
                s += xq[((b * h + iy) * w + ix) * ci + c] * kq[((dy * kw + dx) * ci + c) * co + o];
              }
            }
          out[((b * oh + y) * ow + xo) * co + o] = s;
        }
  return out;
}

double rel_max_error(const Tensor<double>& got, const Tensor<double>& ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    num = std::max(num, std::abs(got[i] - ref[i]));
    den = std::max(den, std::abs(ref[i]));
  }
  return den == 0.0 ? num : num / den;
}

Outcome ac3_aqt_equivalence() {
  using namespace quant;
  std::mt19937_64 rng(303);
  auto dim = [&](std::size_t hi) { return 1 + static_cast<std::size_t>(rng() % hi); };
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Checker c;
  double worst = 0.0;
  for (std::size_t t = 0; t < kAqtCases; ++t) {
    const bool act_unsigned = t % 3 == 0;
    const Precision ap = act_unsigned ? Precision::unsigned_bits(t % 2 ? 8 : 4)
                                      : Precision::signed_bits(t % 2 ? 8 : 4);
    const Precision wp = Precision::signed_bits(t % 4 < 2 ? 8 : 4);
    auto make_act = [&](const Shape& s) {
      Tensor<double> a = randn(s, rng);
      if (act_unsigned) for (auto& v : a.data()) v = std::abs(v);
      return a;
    };
    double err = 0.0;
    std::string tag;
    if (t % 2 == 0) {
      const std::size_t m = dim(32), k = dim(32), n = dim(32);
      const Tensor<double> a = make_act({m, k});
      const Tensor<double> w = randn({k, n}, rng);
      std::vector<double> bounds(t % 4 == 0 ? m : 1);
      for (auto& b : bounds) b = 0.25 + 2.0 * unit(rng);  // some values clip
      const ActivationQuant ac{ap, bounds};
      const auto ref = reference_matmul(a, w, ac, wp);
      err = std::max(rel_max_error(quantized_matmul(a, w, ac, wp), ref),
                     rel_max_error(quantized_matmul(a.cast<float>(), w.cast<float>(), ac, wp).cast<double>(),
                                   reference_matmul(a.cast<float>().cast<double>(),
                                                    w.cast<float>().cast<double>(), ac, wp)));
      tag = "matmul " + std::to_string(m) + "x" + std::to_string(k) + "x" + std::to_string(n);
    } else {
      const std::size_t n = dim(4), hw = dim(12), ci = dim(8), co = dim(8), k = 1 + 2 * (rng() % 3);
      const std::size_t stride = 1 + rng() % 2;
      const Tensor<double> x = make_act({n, hw, hw, ci});
      const Tensor<double> kernel = randn({k, k, ci, co}, rng);
      std::vector<double> bounds(t % 4 == 1 ? n : 1);
      for (auto& b : bounds) b = 0.25 + 2.0 * unit(rng);
      const ActivationQuant ac{ap, bounds};
      err = std::max(rel_max_error(quantized_conv2d(x, kernel, stride, Padding::Same, ac, wp),
                                   reference_conv(x, kernel, stride, ac, wp)),
                     rel_max_error(quantized_conv2d(x.cast<float>(), kernel.cast<float>(), stride, Padding::Same,
                                                    ac, wp)
                                       .cast<double>(),
                                   reference_conv(x.cast<float>().cast<double>(),
                                                  kernel.cast<float>().cast<double>(), stride, ac, wp)));
      tag = "conv " + std::to_string(hw) + "px k" + std::to_string(k) + " s" + std::to_string(stride);
    }
    worst = std::max(worst, err);
    c.expect(err <= kAqtRelTol, tag + " " + ap.describe() + "/" + wp.describe() + " err " + fmt(err));
  }
  return c.outcome(std::to_string(kAqtCases) + " cases in float64 and float32, worst relative error " + fmt(worst));
}

// ---- AC4 ---------------------------------------------------------------------

Outcome ac4_gradient_checks() {
  using namespace nn;
  using qat::testing::check_input_gradients;
  using qat::testing::check_parameter_gradients;
  using qat::testing::max_error;
  std::mt19937_64 rng(404);
  auto probe = [](Tape<double>& t, Var y, std::uint64_t seed) {
    std::mt19937_64 r(seed);
    return weighted_sum(t, y, randn(t.value(y).shape(), r));
  };
  auto away_from_zero = [&](const Shape& s) {
    Tensor<double> x = randn(s, rng);
    for (auto& v : x.data()) v = v < 0 ? v - 0.05 : v + 0.05;
    return x;
  };
  std::vector<std::pair<std::string, double>> errs;
  auto run = [&](const std::string& name, const testing::InputGraph& f, std::vector<Tensor<double>> in) {
    errs.emplace_back(name, max_error(check_input_gradients(f, std::move(in), kFdStep)));
  };
  run("matmul", [&](Tape<double>& t, const std::vector<Var>& v) { return probe(t, matmul(t, v[0], v[1]), 1); },
      {randn({3, 4}, rng), randn({4, 5}, rng)});
  run("add", [&](Tape<double>& t, const std::vector<Var>& v) { return probe(t, add(t, v[0], v[1]), 2); },
      {randn({2, 3, 3, 4}, rng), randn({2, 3, 3, 4}, rng)});
  run("bias_add", [&](Tape<double>& t, const std::vector<Var>& v) { return probe(t, bias_add(t, v[0], v[1]), 3); },
      {randn({2, 3, 3, 4}, rng), randn({4}, rng)});
  run("relu", [&](Tape<double>& t, const std::vector<Var>& v) { return probe(t, relu(t, v[0]), 4); },
      {away_from_zero({5, 6})});
  for (std::size_t stride : {1u, 2u}) {
    for (Padding pad : {Padding::Same, Padding::Valid}) {
      run("conv2d s" + std::to_string(stride) + (pad == Padding::Same ? " same" : " valid"),
          [&, stride, pad](Tape<double>& t, const std::vector<Var>& v) {
            return probe(t, conv2d(t, v[0], v[1], stride, pad), 5);
          },
          {randn({2, 6, 6, 3}, rng), randn({3, 3, 3, 2}, rng)});
    }
  }
  for (Padding pad : {Padding::Same, Padding::Valid}) {
    run(std::string("max_pool ") + (pad == Padding::Same ? "same" : "valid"),
        [&, pad](Tape<double>& t, const std::vector<Var>& v) { return probe(t, max_pool(t, v[0], 3, 2, pad), 6); },
        {randn({2, 7, 7, 2}, rng)});
  }
  run("global_avg_pool",
      [&](Tape<double>& t, const std::vector<Var>& v) { return probe(t, global_avg_pool(t, v[0]), 7); },
      {randn({3, 4, 5, 2}, rng)});
  for (Mode mode : {Mode::Train, Mode::Eval}) {
    BatchNormStats<double> stats(3);
    for (std::size_t i = 0; i < 3; ++i) stats.var[i] = 0.5 + 0.5 * double(i);
    run(mode == Mode::Train ? "batch_norm train" : "batch_norm eval",
        [&, stats, mode](Tape<double>& t, const std::vector<Var>& v) {
          BatchNormStats<double> s = stats;
          return probe(t, batch_norm(t, v[0], v[1], v[2], s, mode), 8);
        },
        {randn({4, 2, 2, 3}, rng, 2.0), randn({3}, rng), randn({3}, rng)});
  }
  const std::vector<std::size_t> labels{0, 3, 2, 3};
  run("softmax_cross_entropy",
      [&](Tape<double>& t, const std::vector<Var>& v) { return softmax_cross_entropy(t, v[0], labels); },
      {randn({4, 5}, rng, 3.0)});
  run("sum", [&](Tape<double>& t, const std::vector<Var>& v) { return sum(t, v[0]); }, {randn({3, 3}, rng)});
  run("weighted_sum", [&](Tape<double>& t, const std::vector<Var>& v) { return probe(t, v[0], 9); },
      {randn({3, 3}, rng)});

  // Two-block MiniResNet, every parameter, float64.
  model::ResNetSpec spec = model::ResNetSpec::mini(1.0);
  spec.block_group_sizes = {1, 1};
  spec.base_widths = {2, 3};
  spec.group_strides = {1, 2};
  spec.init_conv = {3, 1, 4};
  spec.num_classes = 3;
  spec.input_resolution = 6;
  model::ResNet<double> net(spec, model::LayerQuantConfig::from_preset(model::QuantSettingPreset::Baseline), 5);
  const Tensor<double> images = randn({3, 6, 6, 3}, rng);
  const std::vector<std::size_t> y{0, 2, 1};
  const auto model_errs = check_parameter_gradients(
      [&](Tape<double>& t) {
        return softmax_cross_entropy(t, net.forward(t, images, {0, Mode::Train, false, false}), y);
      },
      net.parameters(), kFdStep);
  errs.emplace_back("mini_resnet (" + std::to_string(model_errs.size()) + " tensors)", max_error(model_errs));

  Checker c;
  double worst = 0.0;
  for (const auto& [name, e] : errs) {
    worst = std::max(worst, e);
    c.expect(e < kGradTol, name + " rel error " + fmt(e));
  }
  return c.outcome(std::to_string(errs.size()) + " checks, worst relative error " + fmt(worst));
}

// ---- AC5 ---------------------------------------------------------------------

Outcome ac5_parameter_counts() {
  Checker c;
  const auto p1 = model::build_resnet<float>(model::ResNetSpec::resnet50(1.0), {}).count_params();
  const auto p2 = model::build_resnet<float>(model::ResNetSpec::resnet50(2.0), {}).count_params();
  c.expect(std::abs(double(p1) - kResNet50Params) <= kParamTol * kResNet50Params, "c=1 " + std::to_string(p1));
  c.expect(std::abs(double(p2) - kResNet50x2Params) <= kParamTol * kResNet50x2Params, "c=2 " + std::to_string(p2));
  return c.outcome("c=1: " + std::to_string(p1) + ", c=2: " + std::to_string(p2));
}

// ---- AC6 ---------------------------------------------------------------------

Outcome ac6_cost_exactness() {
  using namespace cost;
  Checker c;
  const int lin[] = {16, 8, 4}, quad[] = {16, 4, 1}, bits[] = {16, 8, 4};
  for (int i = 0; i < 3; ++i) {
    c.expect(coefficient(bits[i], CostModelKind::Linear) == u64(lin[i]), "linear M " + std::to_string(bits[i]));
    c.expect(coefficient(bits[i], CostModelKind::Quadratic) == u64(quad[i]), "quadratic M " + std::to_string(bits[i]));
    c.expect(memory_coefficient(bits[i]) == u64(bits[i]), "M' " + std::to_string(bits[i]));
  }
  auto shapes = [](model::QuantSettingPreset p) {
    return model::build_resnet<float>(model::ResNetSpec::resnet50(1.0), model::LayerQuantConfig::from_preset(p))
        .layer_shapes(224, 1);
  };
  const struct {
    model::QuantSettingPreset p;
    CostModelKind k;
    Ratio r;
  } homo[] = {{model::QuantSettingPreset::EightBit, CostModelKind::Linear, {1, 2}},
              {model::QuantSettingPreset::FourBit, CostModelKind::Linear, {1, 4}},
              {model::QuantSettingPreset::EightBit, CostModelKind::Quadratic, {1, 4}},
              {model::QuantSettingPreset::FourBit, CostModelKind::Quadratic, {1, 16}}};
  for (const auto& h : homo) {
    const Ratio got = *normalized_cost(shapes(h.p), h.k).compute_ratio;
    c.expect(got == h.r, std::string(model::to_string(h.p)) + " " + to_string(h.k) + " = " + got.str());
  }
  // Independent oracle: 128-bit sums of multiplication counts times bit width.
  const auto mixed = shapes(model::QuantSettingPreset::FourBitFirstLast8);
  unsigned __int128 num = 0, den = 0;
  for (const auto& s : mixed) {
    unsigned __int128 mults = static_cast<unsigned __int128>(s.batch) * s.c_in * s.c_out;
    if (s.kind == LayerKind::Conv2D) mults *= static_cast<unsigned __int128>(s.k_h) * s.k_w * s.a_h * s.a_w;
    num += mults * static_cast<unsigned>(s.bits);
    den += mults * 16u;
  }
  const CostReport r = normalized_cost(mixed, CostModelKind::Linear);
  c.expect(r.total_compute == num && r.baseline_compute == den, "mixed totals differ from oracle");
  // Cross-multiplied comparison of the reduced ratio with the oracle fraction.
  c.expect(static_cast<unsigned __int128>(r.compute_ratio->num) * den ==
               static_cast<unsigned __int128>(r.compute_ratio->den) * num,
           "mixed ratio differs from oracle");
  const double v = r.compute_ratio->value();
  c.expect(v > 0.25 && v < 0.5, "mixed ratio " + fmt(v, 10) + " outside (0.25, 0.5)");
  return c.outcome("four_bit_first_last_8 linear ratio " + r.compute_ratio->str() + " = " + fmt(v, 10));
}

// ---- AC7 ---------------------------------------------------------------------

std::vector<std::string> brute_force_frontier(const std::vector<pareto::TradeoffPoint>& pts) {
  std::vector<const pareto::TradeoffPoint*> keep;
  for (const auto& p : pts) {
    bool drop = false;
    for (const auto& q : pts) {
      if (pareto::dominates(q, p) || (q.cost == p.cost && q.accuracy == p.accuracy && q.label < p.label)) {
        drop = true;
        break;
      }
    }
    if (!drop) keep.push_back(&p);
  }
  std::sort(keep.begin(), keep.end(), [](auto* a, auto* b) { return a->cost < b->cost; });
  std::vector<std::string> out;
  for (auto* p : keep) out.push_back(p->label);
  return out;
}

Outcome ac7_pareto_oracle() {
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Checker c;
  std::size_t total_points = 0, largest = 0;
  for (std::size_t set = 0; set < kParetoSets; ++set) {
    const std::size_t n = set == 0 ? kParetoMaxN : 1 + rng() % kParetoMaxN;
    largest = std::max(largest, n);
    total_points += n;
    std::vector<pareto::TradeoffPoint> pts;
    for (std::size_t i = 0; i < n; ++i) {
      double cost, acc;
      switch (set % 4) {
        case 0:  // continuous
          cost = 0.01 + unit(rng);
          acc = unit(rng);
          break;
        case 1:  // coarse grid: many duplicates and ties
          cost = double(1 + rng() % 8) / 8.0;
          acc = double(rng() % 8) / 8.0;
          break;
        case 2:  // mutually incomparable chain
          cost = double(i + 1);
          acc = double(i);
          break;
        default:  // repeated copies of a few points
          cost = double(1 + (i % 5));
          acc = double((i * 7) % 5);
          break;
      }
      pts.push_back({cost, acc, "p" + std::to_string(i)});
    }
    std::vector<std::string> got;
    for (const auto& p : pareto::pareto_frontier(pts).points) got.push_back(p.label);
    c.expect(got == brute_force_frontier(pts), "set " + std::to_string(set) + " (n=" + std::to_string(n) + ")");
  }
  return c.outcome(std::to_string(kParetoSets) + " sets, " + std::to_string(total_points) + " points, max n " +
                   std::to_string(largest));
}

// ---- AC8 ---------------------------------------------------------------------

Outcome ac8_calibration_lifecycle() {
  Checker c;
  // EMA hand sequence: maxima 1, 2, 3, 0.5 with decay 0.9.
  calib::EmaTracker t = calib::make_tracker(0.9);
  const double maxima[] = {1.0, 2.0, 3.0, 0.5};
  const double expect[] = {1.0, 1.1, 1.29, 1.211};
  for (int i = 0; i < 4; ++i) {
    t = calib::update_ema(t, Tensor<double>({1, 2}, std::vector<double>{-maxima[i], maxima[i] / 4}), 1);
    c.expect(std::abs(t.ema[0] - expect[i]) < 1e-12, "EMA step " + std::to_string(i) + " = " + fmt(t.ema[0], 17));
  }

  const json j{{"model", {{"arch", "mini"}, {"filter_multiplier", 0.5}}},
               {"quant", {{"preset", "eight_bit"}}},
               {"train", {{"steps", kLifecycleSteps}, {"batch_size", 8}, {"seed", 8}}},
               {"dataset", {{"resolution", 8}, {"train_examples", 256}, {"eval_examples", 64}}}};
  const auto cfg = run::parse_config(j);
  const std::size_t n = calib::CalibrationSchedule::from_fraction(kLifecycleSteps, cfg.calibration.freeze_fraction)
                            .freeze_step;
  std::size_t early_quant = 0, quant_events = 0;
  std::map<const void*, std::vector<std::size_t>> freezes;
  std::map<const void*, std::vector<double>> first_bounds;
  std::size_t bound_changes = 0;
  run::TrainHooks<float> hooks;
  hooks.observer = [&](const model::QuantEvent<float>& e) {
    if (e.kind == model::QuantEventKind::Frozen) freezes[e.layer].push_back(e.step);
    if (e.kind != model::QuantEventKind::ActivationQuantized) return;
    ++quant_events;
    if (e.step < n) ++early_quant;
    auto [it, fresh] = first_bounds.emplace(e.layer, *e.bounds);
    if (!fresh && it->second != *e.bounds) ++bound_changes;
  };
  const auto out = run::train<float>(cfg, hooks);
  const auto& layers = out.model->layers();
  c.expect(early_quant == 0, std::to_string(early_quant) + " quantization events before step N");
  c.expect(freezes.size() == layers.size(), "layers frozen " + std::to_string(freezes.size()));
  for (const auto& [layer, steps] : freezes) {
    c.expect(steps.size() == 1 && steps[0] == n, "freeze events for one layer not exactly {N}");
  }
  c.expect(quant_events == layers.size() * (kLifecycleSteps - n), "quantization events " + std::to_string(quant_events));
  c.expect(bound_changes == 0, std::to_string(bound_changes) + " bound changes after freeze");
  for (const auto& l : layers) {
    const auto* f = std::get_if<calib::Frozen>(&l.act_state);
    c.expect(f && f->frozen_at == n && first_bounds[&l] == f->bounds, "final bounds of " + l.name);
  }
  return c.outcome("N=" + std::to_string(n) + ", " + std::to_string(layers.size()) + " layers, " +
                   std::to_string(quant_events) + " quantization events");
}

// ---- AC9 ---------------------------------------------------------------------

json desk_task(const std::string& preset) {
  return {{"model", {{"arch", "mini"}, {"filter_multiplier", 1.0}}},
          {"quant", {{"preset", preset}}},
          {"train", {{"steps", 300}, {"batch_size", 32}, {"seed", 1}}},
          {"dataset",
           {{"kind", "synthetic"}, {"resolution", 8}, {"train_examples", 1024}, {"eval_examples", 512},
            {"separation", 0.4}}}};
}

Outcome ac9_desk_training() {
  Checker c;
  std::string d;
  for (const char* p : {"baseline", "eight_bit", "four_bit_first_last_8", "four_bit"}) {
    const auto r = run::train<float>(run::parse_config(desk_task(p))).result;
    const double decrease = r.initial_loss / r.train_logloss;
    d += std::string(p) + " top1=" + fmt(r.top1) + " x" + fmt(decrease, 3) + "; ";
    c.expect(decrease >= kLossDecrease, std::string(p) + " loss decrease x" + fmt(decrease, 3));
    const std::string ps(p);
    if (ps == "baseline") {
      c.expect(r.top1 >= kReferenceTop1 - kBaselineReproTol, "baseline top1 " + fmt(r.top1) + " below A*");
    } else if (ps == "eight_bit" || ps == "four_bit_first_last_8") {
      c.expect(r.top1 >= kReferenceTop1 - kQuantizedTol, ps + " top1 " + fmt(r.top1) + " below A* - 2pp");
    }
  }
  return c.outcome("A*=" + fmt(kReferenceTop1) + "; " + d);
}

// ---- AC10 --------------------------------------------------------------------

Outcome ac10_sweep_frontier(const fs::path& workdir, std::size_t workers) {
  Checker c;
  json base{{"model", {{"arch", "mini"}}},
            {"train", {{"steps", 60}, {"batch_size", 16}, {"seed", 10}}},
            {"dataset", {{"resolution", 8}, {"train_examples", 256}, {"eval_examples", 128}, {"separation", 0.6}}},
            {"output", {{"write_checkpoint", false}}}};
  const json grid{{"base", base}, {"multipliers", "desk"}, {"workers", workers}};
  std::vector<std::map<std::string, run::RunResult>> passes;
  for (int pass = 0; pass < 2; ++pass) {
    const fs::path dir = workdir / ("sweep" + std::to_string(pass));
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "grid.json") << grid.dump(2);
    const auto r = run_cli("sweep --grid " + (dir / "grid.json").string() + " --out " + (dir / "out").string());
    c.expect(r.code == 0, "sweep exit code " + std::to_string(r.code) + ": " + r.out.substr(0, 200));
    std::map<std::string, run::RunResult> rows;
    const auto results = run::read_results_csv((dir / "out" / "results.csv").string());
    c.expect(results.size() == 12, "pass " + std::to_string(pass) + " rows " + std::to_string(results.size()));
    for (const auto& row : results) {
      c.expect(row.ok(), row.run_id + " status " + row.status);
      rows[row.run_id] = row;
    }
    passes.push_back(std::move(rows));
  }
  std::size_t identical = 0;
  for (const auto& [id, row] : passes[0]) {
    const auto it = passes[1].find(id);
    const bool same = it != passes[1].end() && run::to_csv_row(it->second) == run::to_csv_row(row);
    identical += same;
    c.expect(same, id + " differs between repeated sweeps");
  }

  const fs::path results = workdir / "sweep0" / "out" / "results.csv";
  const fs::path frontier_path = workdir / "frontier.csv";
  const auto pr = run_cli("pareto --results " + results.string() + " --cost linear --out " + frontier_path.string());
  c.expect(pr.code == 0, "pareto exit code " + std::to_string(pr.code));
  std::set<std::string> on_frontier;
  {
    std::ifstream f(frontier_path);
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) on_frontier.insert(line.substr(0, line.find(',')));
  }
  c.expect(!on_frontier.empty(), "empty frontier");
  std::size_t dominated_baselines = 0;
  for (const auto& [id, b] : passes[0]) {
    if (b.preset != "baseline") continue;
    bool dominated = false;
    for (const auto& [qid, q] : passes[0]) {
      if (q.preset == "baseline") continue;
      dominated |= pareto::dominates({q.cost_linear_ratio, q.top1, qid}, {b.cost_linear_ratio, b.top1, id});
    }
    if (dominated) {
      ++dominated_baselines;
      c.expect(!on_frontier.count(id), id + " survives despite being dominated");
    }
  }
  // The frontier file also matches the oracle over the same points.
  std::vector<pareto::TradeoffPoint> pts;
  for (const auto& [id, r] : passes[0]) pts.push_back({r.cost_linear_ratio, r.top1, id});
  const auto oracle = brute_force_frontier(pts);
  c.expect(std::set<std::string>(oracle.begin(), oracle.end()) == on_frontier, "frontier differs from oracle");

  std::string members;
  for (const auto& m : oracle) members += (members.empty() ? "" : " ") + m;
  return c.outcome("12 rows x2, " + std::to_string(identical) + " bit-identical; " +
                   std::to_string(dominated_baselines) + " dominated baseline(s); frontier {" + members + "}");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::string workdir = (fs::temp_directory_path() / "qat_acceptance").string();
  std::vector<int> only;
  std::size_t workers = 1;
  app.add_option("--workdir", workdir, "Scratch directory for training artifacts");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--workers", workers, "Sweep worker threads")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "quantizer properties", kBudget1, ac1_quantizer_properties},
      {2, "range table", 0, ac2_range_table},
      {3, "integer-domain equivalence", kBudget3, ac3_aqt_equivalence},
      {4, "gradient checks", kBudget4, ac4_gradient_checks},
      {5, "parameter counts", 0, ac5_parameter_counts},
      {6, "cost-model exactness", 0, ac6_cost_exactness},
      {7, "pareto oracle", kBudget7, ac7_pareto_oracle},
      {8, "calibration lifecycle", kBudget8, ac8_calibration_lifecycle},
      {9, "desk-scale training", kBudget9, ac9_desk_training},
      {10, "sweep and frontier", kBudget10, [&] { return ac10_sweep_frontier(workdir, workers); }},
  };

  int failed = 0, ran = 0;
  for (const auto& cr : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), cr.id) == only.end()) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cr.budget_s > 0 && secs > cr.budget_s) {
      o.pass = false;
      o.detail += " | over budget " + fmt(cr.budget_s) + " s";
    }
    failed += !o.pass;
    std::printf("[%s] AC%d %s (%.2f s): %s\n", o.pass ? "PASS" : "FAIL", cr.id, cr.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
