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
 * @file costmodel.hpp
 * @brief Closed-form inference cost of conv and dense layers.
 *
 * Compute cost counts multiplications weighted by a per-precision
 * coefficient M:
 *
 *   Conv2D: B * K_h * K_w * A_w * A_h * C_in * C_out * M
 *   Dense:  B * C_in * C_out * M
 *
 * with M = 16/8/4 (linear) or 16/4/1 (quadratic) for 16/8/4-bit operands.
 * Memory cost counts weight bits: K_h * K_w * C_in * C_out * bits for conv
 * and C_in * C_out * bits for dense. Unquantized layers are costed as 16-bit.
 *
 * Everything is exact unsigned integer arithmetic; normalized ratios are
 * reduced fractions. Multiplication overflow throws instead of wrapping.
 */

#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace qat::cost {

using u64 = std::uint64_t;

enum class CostModelKind { Linear, Quadratic };
enum class LayerKind { Conv2D, Dense };

inline const char* to_string(CostModelKind k) { return k == CostModelKind::Linear ? "linear" : "quadratic"; }
inline const char* to_string(LayerKind k) { return k == LayerKind::Conv2D ? "conv2d" : "dense"; }

inline CostModelKind parse_cost_model(const std::string& s) {
  if (s == "linear") return CostModelKind::Linear;
  if (s == "quadratic") return CostModelKind::Quadratic;
  throw std::invalid_argument("unknown cost model '" + s + "' (expected linear|quadratic)");
}

inline LayerKind parse_layer_kind(const std::string& s) {
  if (s == "conv2d") return LayerKind::Conv2D;
  if (s == "dense") return LayerKind::Dense;
  throw std::invalid_argument("unknown layer kind '" + s + "' (expected conv2d|dense)");
}

inline constexpr int kBaselineBits = 16;

struct LayerShape {
  std::string name;
  LayerKind kind = LayerKind::Conv2D;
  u64 batch = 1;
  u64 k_h = 1, k_w = 1;  // conv only
  u64 a_w = 1, a_h = 1;  // conv only: output width/height
  u64 c_in = 1, c_out = 1;
  int bits = kBaselineBits;

  void validate() const {
    if (batch == 0 || k_h == 0 || k_w == 0 || a_w == 0 || a_h == 0 || c_in == 0 || c_out == 0) {
      throw std::invalid_argument("layer '" + name + "': all dimensions must be >= 1");
    }
    if (bits != 4 && bits != 8 && bits != 16) {
      throw std::invalid_argument("layer '" + name + "': unsupported bit width " +
                                  std::to_string(bits) + " (expected 4, 8 or 16)");
    }
  }
};

inline u64 checked_mul(u64 a, u64 b) {
  u64 r = 0;
  if (__builtin_mul_overflow(a, b, &r)) throw std::overflow_error("cost arithmetic overflow");
  return r;
}

inline u64 checked_add(u64 a, u64 b) {
  u64 r = 0;
  if (__builtin_add_overflow(a, b, &r)) throw std::overflow_error("cost arithmetic overflow");
  return r;
}

inline u64 coefficient(int bits, CostModelKind kind) {
  switch (bits) {
    case 16: return 16;
    case 8: return kind == CostModelKind::Linear ? 8 : 4;
    case 4: return kind == CostModelKind::Linear ? 4 : 1;
    default:
      throw std::invalid_argument("no cost coefficient for " + std::to_string(bits) + "-bit operands");
  }
}

// M': weight bits per parameter, the same under both compute models.
inline u64 memory_coefficient(int bits) {
  if (bits != 4 && bits != 8 && bits != 16) {
    throw std::invalid_argument("no memory coefficient for " + std::to_string(bits) + "-bit weights");
  }
  return static_cast<u64>(bits);
}

inline u64 conv_cost(const LayerShape& s, CostModelKind kind) {
  if (s.kind != LayerKind::Conv2D) throw std::invalid_argument("conv_cost on non-conv layer '" + s.name + "'");
  s.validate();
  u64 c = s.batch;
  for (u64 f : {s.k_h, s.k_w, s.a_w, s.a_h, s.c_in, s.c_out, coefficient(s.bits, kind)}) c = checked_mul(c, f);
  return c;
}

inline u64 dense_cost(const LayerShape& s, CostModelKind kind) {
  if (s.kind != LayerKind::Dense) throw std::invalid_argument("dense_cost on non-dense layer '" + s.name + "'");
  s.validate();
  return checked_mul(checked_mul(checked_mul(s.batch, s.c_in), s.c_out), coefficient(s.bits, kind));
}

inline u64 layer_cost(const LayerShape& s, CostModelKind kind) {
  return s.kind == LayerKind::Conv2D ? conv_cost(s, kind) : dense_cost(s, kind);
}

inline u64 memory_bits(const LayerShape& s) {
  s.validate();
  u64 m = checked_mul(s.c_in, s.c_out);
  if (s.kind == LayerKind::Conv2D) m = checked_mul(checked_mul(m, s.k_h), s.k_w);
  return checked_mul(m, memory_coefficient(s.bits));
}

struct Ratio {
  u64 num = 0;
  u64 den = 1;

  static Ratio make(u64 num, u64 den) {
    if (den == 0) throw std::invalid_argument("ratio with zero denominator");
    const u64 g = std::gcd(num, den);
    return {num / g, den / g};
  }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }

  friend bool operator==(const Ratio&, const Ratio&) = default;
};

struct LayerCost {
  std::string name;
  LayerKind kind = LayerKind::Conv2D;
  int bits = kBaselineBits;
  u64 compute = 0;
  u64 memory_bits = 0;
};

struct CostReport {
  CostModelKind kind = CostModelKind::Linear;
  std::vector<LayerCost> layers;
  u64 total_compute = 0;
  u64 total_memory_bits = 0;
  // Set by normalize().
  std::optional<Ratio> compute_ratio;
  std::optional<Ratio> memory_ratio;
  u64 baseline_compute = 0;
  u64 baseline_memory_bits = 0;
};

inline CostReport model_cost(std::span<const LayerShape> shapes, CostModelKind kind) {
  if (shapes.empty()) throw std::invalid_argument("model_cost: empty layer list");
  CostReport r;
  r.kind = kind;
  r.layers.reserve(shapes.size());
  for (const LayerShape& s : shapes) {
    LayerCost lc{s.name, s.kind, s.bits, layer_cost(s, kind), memory_bits(s)};
    r.total_compute = checked_add(r.total_compute, lc.compute);
    r.total_memory_bits = checked_add(r.total_memory_bits, lc.memory_bits);
    r.layers.push_back(std::move(lc));
  }
  return r;
}

inline CostReport normalize(CostReport report, const CostReport& baseline) {
  if (report.layers.size() != baseline.layers.size()) {
    throw std::invalid_argument("normalize: report has " + std::to_string(report.layers.size()) +
                                " layers, baseline has " + std::to_string(baseline.layers.size()));
  }
  for (std::size_t i = 0; i < report.layers.size(); ++i) {
    if (report.layers[i].name != baseline.layers[i].name || report.layers[i].kind != baseline.layers[i].kind) {
      throw std::invalid_argument("normalize: layer " + std::to_string(i) + " differs ('" +
                                  report.layers[i].name + "' vs '" + baseline.layers[i].name + "')");
    }
  }
  if (report.kind != baseline.kind) throw std::invalid_argument("normalize: cost model kind mismatch");
  report.baseline_compute = baseline.total_compute;
  report.baseline_memory_bits = baseline.total_memory_bits;
  report.compute_ratio = Ratio::make(report.total_compute, baseline.total_compute);
  report.memory_ratio = Ratio::make(report.total_memory_bits, baseline.total_memory_bits);
  return report;
}

// Same layers, every one at the 16-bit baseline precision.
inline std::vector<LayerShape> baseline_shapes(std::span<const LayerShape> shapes) {
  std::vector<LayerShape> out(shapes.begin(), shapes.end());
  for (auto& s : out) s.bits = kBaselineBits;
  return out;
}

inline CostReport normalized_cost(std::span<const LayerShape> shapes, CostModelKind kind) {
  const auto base = baseline_shapes(shapes);
  return normalize(model_cost(shapes, kind), model_cost(base, kind));
}

// ---- JSON layer manifest -------------------------------------------------

inline nlohmann::json to_json(const LayerShape& s) {
  nlohmann::json j{{"name", s.name}, {"kind", to_string(s.kind)}, {"batch", s.batch},
                   {"c_in", s.c_in}, {"c_out", s.c_out}, {"bits", s.bits}};
  if (s.kind == LayerKind::Conv2D) {
    j["k_h"] = s.k_h;
    j["k_w"] = s.k_w;
    j["a_w"] = s.a_w;
    j["a_h"] = s.a_h;
  }
  return j;
}

inline LayerShape layer_from_json(const nlohmann::json& j) {
  LayerShape s;
  s.name = j.value("name", std::string{});
  s.kind = parse_layer_kind(j.at("kind").get<std::string>());
  s.batch = j.value("batch", u64{1});
  s.c_in = j.at("c_in").get<u64>();
  s.c_out = j.at("c_out").get<u64>();
  s.bits = j.at("bits").get<int>();
  if (s.kind == LayerKind::Conv2D) {
    s.k_h = j.at("k_h").get<u64>();
    s.k_w = j.at("k_w").get<u64>();
    s.a_w = j.at("a_w").get<u64>();
    s.a_h = j.at("a_h").get<u64>();
  }
  s.validate();
  return s;
}

inline nlohmann::json manifest_to_json(const std::string& model_name, std::span<const LayerShape> shapes) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& s : shapes) layers.push_back(to_json(s));
  return {{"model", model_name}, {"layers", std::move(layers)}};
}

inline std::vector<LayerShape> manifest_from_json(const nlohmann::json& j) {
  std::vector<LayerShape> out;
  for (const auto& l : j.at("layers")) out.push_back(layer_from_json(l));
  if (out.empty()) throw std::invalid_argument("layer manifest has no layers");
  return out;
}

}  // namespace qat::cost
