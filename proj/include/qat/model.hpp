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
 * @file model.hpp
 * @brief Bottleneck ResNet family with a global filter multiplier and
 *        per-layer quantization.
 *
 * Topology: conv_init -> BN -> ReLU -> [max-pool] -> block groups of
 * bottleneck blocks -> global average pool -> dense. A bottleneck block is
 * 1x1 -> 3x3 -> 1x1 convolutions (stride on the 3x3, v1.5 style) plus a
 * shortcut; the first block of each group carries a 1x1 projection shortcut.
 *
 * Every conv and the dense head are quantized layers. Weights are quantized
 * signed with per-output-channel max-abs bounds recomputed each forward pass.
 * Layer inputs are quantized with frozen calibrated bounds once the
 * calibration schedule reaches its freeze step; inputs produced by a ReLU
 * use the unsigned range.
 */

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "qat/calibration.hpp"
#include "qat/costmodel.hpp"
#include "qat/ops.hpp"
#include "qat/quantcore.hpp"
#include "qat/tape.hpp"

namespace qat::model {

using qat::to_string;

// ---- architecture spec ----------------------------------------------------

inline std::size_t scaled_width(std::size_t base, double multiplier) {
  if (!(multiplier > 0.0)) throw std::invalid_argument("filter multiplier must be positive");
  const double w = std::round(static_cast<double>(base) * multiplier);
  return std::max<std::size_t>(1, static_cast<std::size_t>(w));
}

inline std::vector<std::size_t> scaled_widths(const std::vector<std::size_t>& base, double multiplier) {
  std::vector<std::size_t> out;
  out.reserve(base.size());
  for (std::size_t b : base) out.push_back(scaled_width(b, multiplier));
  return out;
}

struct InitConv {
  std::size_t kernel = 7;
  std::size_t stride = 2;
  std::size_t width = 64;
};

struct ResNetSpec {
  std::string name = "resnet50";
  std::vector<std::size_t> block_group_sizes{3, 4, 6, 3};
  std::vector<std::size_t> base_widths{64, 128, 256, 512};
  std::vector<std::size_t> group_strides{1, 2, 2, 2};
  std::size_t expansion = 4;
  InitConv init_conv;
  bool init_max_pool = true;
  std::size_t num_classes = 1000;
  double filter_multiplier = 1.0;
  std::size_t input_resolution = 224;
  std::size_t input_channels = 3;

  static ResNetSpec resnet50(double multiplier = 1.0) {
    ResNetSpec s;
    s.filter_multiplier = multiplier;
    return s;
  }

  // Desk-scale reference: 32x32 input, 3x3 stride-1 conv_init of width 16,
  // one bottleneck per group with widths 16/32/64, 10 classes.
  static ResNetSpec mini(double multiplier = 1.0) {
    ResNetSpec s;
    s.name = "mini_resnet";
    s.block_group_sizes = {1, 1, 1};
    s.base_widths = {16, 32, 64};
    s.group_strides = {1, 2, 2};
    s.init_conv = {3, 1, 16};
    s.init_max_pool = false;
    s.num_classes = 10;
    s.filter_multiplier = multiplier;
    s.input_resolution = 32;
    return s;
  }

  std::size_t total_blocks() const {
    std::size_t n = 0;
    for (auto g : block_group_sizes) n += g;
    return n;
  }

  // The studied multiplier range is [0.5, 2.0]; other values build fine.
  bool multiplier_in_sweep_range() const { return filter_multiplier >= 0.5 && filter_multiplier <= 2.0; }

  void validate() const {
    if (block_group_sizes.empty()) throw std::invalid_argument("resnet spec: no block groups");
    if (base_widths.size() != block_group_sizes.size() || group_strides.size() != block_group_sizes.size()) {
      throw std::invalid_argument("resnet spec: block_group_sizes, base_widths and group_strides differ in length");
    }
    for (auto g : block_group_sizes) {
      if (g == 0) throw std::invalid_argument("resnet spec: empty block group");
    }
    for (auto s : group_strides) {
      if (s == 0) throw std::invalid_argument("resnet spec: zero stride");
    }
    if (expansion == 0 || num_classes == 0 || input_channels == 0 || input_resolution == 0 ||
        init_conv.kernel == 0 || init_conv.stride == 0 || init_conv.width == 0) {
      throw std::invalid_argument("resnet spec: zero-sized dimension");
    }
    if (!(filter_multiplier > 0.0) || !std::isfinite(filter_multiplier)) {
      throw std::invalid_argument("resnet spec: filter multiplier must be positive and finite");
    }
  }
};

// ---- quantization configuration ------------------------------------------

enum class QuantSettingPreset { FourBit, FourBitFirstLast8, EightBit, Baseline };

inline const std::vector<QuantSettingPreset>& all_presets() {
  static const std::vector<QuantSettingPreset> v{QuantSettingPreset::FourBit,
                                                 QuantSettingPreset::FourBitFirstLast8,
                                                 QuantSettingPreset::EightBit,
                                                 QuantSettingPreset::Baseline};
  return v;
}

inline const char* to_string(QuantSettingPreset p) {
  switch (p) {
    case QuantSettingPreset::FourBit: return "four_bit";
    case QuantSettingPreset::FourBitFirstLast8: return "four_bit_first_last_8";
    case QuantSettingPreset::EightBit: return "eight_bit";
    case QuantSettingPreset::Baseline: return "baseline";
  }
  return "?";
}

inline QuantSettingPreset parse_preset(const std::string& s) {
  for (auto p : all_presets()) {
    if (s == to_string(p)) return p;
  }
  throw std::invalid_argument("unknown quantization preset '" + s +
                              "' (expected four_bit|four_bit_first_last_8|eight_bit|baseline)");
}

enum class LayerRole { First, Hidden, Projection, Last };

// Bit widths per layer; nullopt means full precision. Weights and inputs of a
// layer always share the bit width.
struct LayerQuantConfig {
  std::optional<int> default_bits;
  std::optional<int> first_bits;
  std::optional<int> last_bits;
  std::map<std::string, std::optional<int>> overrides;

  static LayerQuantConfig from_preset(QuantSettingPreset p) {
    switch (p) {
      case QuantSettingPreset::FourBit: return {4, 4, 4, {}};
      case QuantSettingPreset::FourBitFirstLast8: return {4, 8, 8, {}};
      case QuantSettingPreset::EightBit: return {8, 8, 8, {}};
      case QuantSettingPreset::Baseline: return {};
    }
    return {};
  }

  // Projection layers follow the default, only conv_init and dense take the
  // first/last overrides.
  std::optional<int> bits_for(const std::string& name, LayerRole role) const {
    if (auto it = overrides.find(name); it != overrides.end()) return it->second;
    if (role == LayerRole::First) return first_bits;
    if (role == LayerRole::Last) return last_bits;
    return default_bits;
  }
};

// ---- layers ---------------------------------------------------------------

using cost::LayerKind;

enum class QuantEventKind { CalibrationObserved, Frozen, ActivationQuantized, WeightQuantized };

template <typename T>
struct QuantLayer;

template <typename T>
struct QuantEvent {
  QuantEventKind kind;
  std::size_t step;
  const QuantLayer<T>* layer;
  // ActivationQuantized: the quantized input tensor and its bounds.
  const Tensor<T>* tensor = nullptr;
  const std::vector<double>* bounds = nullptr;
};

template <typename T>
using QuantObserver = std::function<void(const QuantEvent<T>&)>;

template <typename T>
struct QuantLayer {
  std::string name;
  LayerKind kind = LayerKind::Conv2D;
  LayerRole role = LayerRole::Hidden;
  std::size_t k_h = 1, k_w = 1, c_in = 1, c_out = 1, stride = 1;
  nn::Parameter<T> weight;  // conv: HWIO, dense: [c_in, c_out]
  std::optional<nn::Parameter<T>> bias;
  quant::Precision weight_precision;
  quant::Precision act_precision;
  calib::BoundsState act_state;

  std::size_t weight_out_axis() const { return kind == LayerKind::Conv2D ? 3 : 1; }
  bool quantizes_activations() const { return !act_precision.is_full(); }
};

template <typename T>
struct NormLayer {
  std::string name;
  nn::Parameter<T> gamma;
  nn::Parameter<T> beta;
  nn::BatchNormStats<T> stats;
};

struct BlockLayout {
  std::size_t conv1, conv2, conv3;
  std::optional<std::size_t> projection;
  std::size_t bn1, bn2, bn3;
  std::optional<std::size_t> bn_projection;
  std::size_t stride = 1;
};

struct ForwardOptions {
  std::size_t step = 0;
  nn::Mode mode = nn::Mode::Train;
  // Integer-domain matmuls once activations are quantized. Activation bounds
  // collapse to one per tensor so the contraction stays integer.
  bool aqt = false;
  bool per_tensor_activations = false;
};

template <typename T>
class ResNet {
 public:
  ResNet(ResNetSpec spec, LayerQuantConfig quant, std::uint64_t seed = 0,
         double ema_decay = calib::kDefaultEmaDecay)
      : spec_(std::move(spec)), quant_(std::move(quant)), ema_decay_(ema_decay) {
    spec_.validate();
    (void)calib::make_tracker(ema_decay_);
    build(seed);
  }

  const ResNetSpec& spec() const noexcept { return spec_; }
  const LayerQuantConfig& quant_config() const noexcept { return quant_; }
  std::vector<QuantLayer<T>>& layers() noexcept { return layers_; }
  const std::vector<QuantLayer<T>>& layers() const noexcept { return layers_; }
  std::vector<NormLayer<T>>& norms() noexcept { return norms_; }
  const std::vector<NormLayer<T>>& norms() const noexcept { return norms_; }
  const std::vector<BlockLayout>& blocks() const noexcept { return blocks_; }

  std::size_t num_blocks() const noexcept { return blocks_.size(); }
  std::size_t num_projections() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.projection.has_value();
    return n;
  }

  std::vector<nn::Parameter<T>*> parameters() {
    std::vector<nn::Parameter<T>*> out;
    for (auto& l : layers_) {
      out.push_back(&l.weight);
      if (l.bias) out.push_back(&*l.bias);
    }
    for (auto& n : norms_) {
      out.push_back(&n.gamma);
      out.push_back(&n.beta);
    }
    return out;
  }

  std::size_t count_params() const {
    std::size_t n = 0;
    for (const auto& l : layers_) {
      n += l.weight.value.size();
      if (l.bias) n += l.bias->value.size();
    }
    for (const auto& b : norms_) n += b.gamma.value.size() + b.beta.value.size();
    return n;
  }

  // Applies the calibration schedule for `step`; call once before the step's
  // forward pass.
  void begin_step(std::size_t step, const calib::CalibrationSchedule& schedule,
                  const QuantObserver<T>* observer = nullptr) {
    for (auto& l : layers_) {
      if (!l.quantizes_activations() || calib::activations_quantized(l.act_state)) continue;
      l.act_state = calib::maybe_freeze(l.act_state, step, schedule);
      if (observer && calib::activations_quantized(l.act_state)) {
        (*observer)(QuantEvent<T>{QuantEventKind::Frozen, step, &l});
      }
    }
  }

  // Per-layer shapes for the cost model at the given input resolution.
  std::vector<cost::LayerShape> layer_shapes(std::size_t resolution, std::size_t batch = 1) const {
    std::vector<cost::LayerShape> out;
    out.reserve(layers_.size());
    const auto geoms = spatial_outputs(resolution);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      cost::LayerShape s;
      s.name = l.name;
      s.kind = l.kind;
      s.batch = batch;
      s.c_in = l.c_in;
      s.c_out = l.c_out;
      s.bits = l.weight_precision.cost_bits();
      if (l.kind == LayerKind::Conv2D) {
        s.k_h = l.k_h;
        s.k_w = l.k_w;
        s.a_h = geoms[i].first;
        s.a_w = geoms[i].second;
      }
      out.push_back(std::move(s));
    }
    return out;
  }

  std::vector<cost::LayerShape> layer_shapes() const { return layer_shapes(spec_.input_resolution); }

  // images: [N, H, W, input_channels]. Returns logits [N, num_classes].
  nn::Var forward(nn::Tape<T>& tape, const Tensor<T>& images, const ForwardOptions& opt,
                  const QuantObserver<T>* observer = nullptr) {
    if (images.rank() != 4 || images.dim(3) != spec_.input_channels) {
      throw ShapeError("resnet forward: expected [N, H, W, " + std::to_string(spec_.input_channels) +
                       "] images, got " + to_string(images.shape()));
    }
    nn::Var h = tape.constant(images);
    h = layer_forward(tape, layers_[0], h, opt, observer);
    h = nn::relu(tape, norm_forward(tape, norms_[0], h, opt));
    if (spec_.init_max_pool) h = nn::max_pool(tape, h, 3, 2, Padding::Same);

    for (const auto& b : blocks_) {
      nn::Var a = layer_forward(tape, layers_[b.conv1], h, opt, observer);
      a = nn::relu(tape, norm_forward(tape, norms_[b.bn1], a, opt));
      a = layer_forward(tape, layers_[b.conv2], a, opt, observer);
      a = nn::relu(tape, norm_forward(tape, norms_[b.bn2], a, opt));
      a = layer_forward(tape, layers_[b.conv3], a, opt, observer);
      a = norm_forward(tape, norms_[b.bn3], a, opt);
      nn::Var shortcut = h;
      if (b.projection) {
        shortcut = layer_forward(tape, layers_[*b.projection], h, opt, observer);
        shortcut = norm_forward(tape, norms_[*b.bn_projection], shortcut, opt);
      }
      h = nn::relu(tape, nn::add(tape, a, shortcut));
    }
    h = nn::global_avg_pool(tape, h);
    return layer_forward(tape, layers_.back(), h, opt, observer);
  }

 private:
  void build(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double c = spec_.filter_multiplier;
    const std::size_t init_width = scaled_width(spec_.init_conv.width, c);
    add_conv("conv_init", LayerRole::First, spec_.init_conv.kernel, spec_.input_channels, init_width,
             spec_.init_conv.stride, /*relu_input=*/false, rng);
    add_norm("bn_init", init_width);

    std::size_t channels = init_width;
    for (std::size_t g = 0; g < spec_.block_group_sizes.size(); ++g) {
      const std::size_t width = scaled_width(spec_.base_widths[g], c);
      const std::size_t out = scaled_width(spec_.base_widths[g] * spec_.expansion, c);
      for (std::size_t b = 0; b < spec_.block_group_sizes[g]; ++b) {
        const std::string prefix = "group" + std::to_string(g + 1) + "/block" + std::to_string(b + 1) + "/";
        const std::size_t stride = b == 0 ? spec_.group_strides[g] : 1;
        BlockLayout bl{};
        bl.stride = stride;
        bl.conv1 = add_conv(prefix + "conv1", LayerRole::Hidden, 1, channels, width, 1, true, rng);
        bl.bn1 = add_norm(prefix + "bn1", width);
        bl.conv2 = add_conv(prefix + "conv2", LayerRole::Hidden, 3, width, width, stride, true, rng);
        bl.bn2 = add_norm(prefix + "bn2", width);
        bl.conv3 = add_conv(prefix + "conv3", LayerRole::Hidden, 1, width, out, 1, true, rng);
        bl.bn3 = add_norm(prefix + "bn3", out);
        if (b == 0) {
          bl.projection = add_conv(prefix + "projection", LayerRole::Projection, 1, channels, out, stride, true, rng);
          bl.bn_projection = add_norm(prefix + "bn_projection", out);
        } else if (channels != out || stride != 1) {
          throw std::invalid_argument("resnet spec: identity shortcut with mismatched shape");
        }
        blocks_.push_back(bl);
        channels = out;
      }
    }

    QuantLayer<T> dense;
    dense.name = "dense";
    dense.kind = LayerKind::Dense;
    dense.role = LayerRole::Last;
    dense.c_in = channels;
    dense.c_out = spec_.num_classes;
    dense.weight = nn::Parameter<T>("dense/kernel", normal_tensor({channels, spec_.num_classes},
                                                                   std::sqrt(1.0 / static_cast<double>(channels)), rng));
    dense.bias = nn::Parameter<T>("dense/bias", Tensor<T>({spec_.num_classes}));
    assign_precision(dense, /*relu_input=*/true);
    layers_.push_back(std::move(dense));
  }

  std::size_t add_conv(const std::string& name, LayerRole role, std::size_t k, std::size_t c_in,
                       std::size_t c_out, std::size_t stride, bool relu_input, std::mt19937_64& rng) {
    QuantLayer<T> l;
    l.name = name;
    l.kind = LayerKind::Conv2D;
    l.role = role;
    l.k_h = l.k_w = k;
    l.c_in = c_in;
    l.c_out = c_out;
    l.stride = stride;
    const double fan_in = static_cast<double>(k * k * c_in);
    l.weight = nn::Parameter<T>(name + "/kernel", normal_tensor({k, k, c_in, c_out}, std::sqrt(2.0 / fan_in), rng));
    assign_precision(l, relu_input);
    layers_.push_back(std::move(l));
    return layers_.size() - 1;
  }

  std::size_t add_norm(const std::string& name, std::size_t channels) {
    NormLayer<T> n;
    n.name = name;
    n.gamma = nn::Parameter<T>(name + "/gamma", Tensor<T>({channels}, T{1}));
    n.beta = nn::Parameter<T>(name + "/beta", Tensor<T>({channels}));
    n.stats = nn::BatchNormStats<T>(channels);
    norms_.push_back(std::move(n));
    return norms_.size() - 1;
  }

  void assign_precision(QuantLayer<T>& l, bool relu_input) {
    const std::optional<int> bits = quant_.bits_for(l.name, l.role);
    if (bits) {
      l.weight_precision = quant::Precision::signed_bits(*bits);
      l.act_precision = relu_input ? quant::Precision::unsigned_bits(*bits) : quant::Precision::signed_bits(*bits);
      l.act_state = calib::Calibrating{calib::make_tracker(ema_decay_)};
    }
  }

  static Tensor<T> normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    return t;
  }

  // Output (height, width) of every quantized layer, in layer order.
  std::vector<std::pair<std::size_t, std::size_t>> spatial_outputs(std::size_t resolution) const {
    std::vector<std::pair<std::size_t, std::size_t>> out(layers_.size(), {1, 1});
    auto down = [](std::size_t in, std::size_t stride) { return (in + stride - 1) / stride; };
    std::size_t hw = down(resolution, spec_.init_conv.stride);
    out[0] = {hw, hw};
    if (spec_.init_max_pool) hw = down(hw, 2);
    for (const auto& b : blocks_) {
      out[b.conv1] = {hw, hw};
      const std::size_t next = down(hw, b.stride);
      out[b.conv2] = {next, next};
      out[b.conv3] = {next, next};
      if (b.projection) out[*b.projection] = {next, next};
      hw = next;
    }
    return out;
  }

  nn::Var norm_forward(nn::Tape<T>& tape, NormLayer<T>& n, nn::Var x, const ForwardOptions& opt) {
    return nn::batch_norm(tape, x, tape.parameter(n.gamma), tape.parameter(n.beta), n.stats, opt.mode);
  }

  nn::Var layer_forward(nn::Tape<T>& tape, QuantLayer<T>& l, nn::Var x, const ForwardOptions& opt,
                        const QuantObserver<T>* observer) {
    const Tensor<T>& x_raw = tape.value(x);
    const std::size_t act_axis = x_raw.rank() - 1;
    nn::Var in = x;
    std::optional<std::vector<double>> act_bounds;

    if (l.quantizes_activations()) {
      if (const auto* frozen = std::get_if<calib::Frozen>(&l.act_state)) {
        std::vector<double> bounds = frozen->bounds;
        if (opt.aqt || opt.per_tensor_activations) {
          bounds = {*std::max_element(bounds.begin(), bounds.end())};
        }
        in = nn::fake_quant(tape, x, bounds, l.act_precision, act_axis);
        act_bounds = std::move(bounds);
        if (observer) {
          (*observer)(QuantEvent<T>{QuantEventKind::ActivationQuantized, opt.step, &l, &tape.value(in),
                                    &*act_bounds});
        }
      } else if (opt.mode == nn::Mode::Train) {
        auto& cal = std::get<calib::Calibrating>(l.act_state);
        cal.tracker = calib::update_ema(std::move(cal.tracker), x_raw, act_axis);
        if (observer) (*observer)(QuantEvent<T>{QuantEventKind::CalibrationObserved, opt.step, &l});
      }
    }

    nn::Var w = tape.parameter(l.weight);
    if (!l.weight_precision.is_full()) {
      const auto wb = calib::weight_bounds(l.weight.value, l.weight_out_axis());
      w = nn::fake_quant(tape, w, wb, l.weight_precision, l.weight_out_axis());
      if (observer) (*observer)(QuantEvent<T>{QuantEventKind::WeightQuantized, opt.step, &l});
    }

    nn::Var y;
    if (l.kind == LayerKind::Conv2D) {
      y = nn::conv2d(tape, in, w, l.stride, Padding::Same);
      if (opt.aqt && act_bounds && !l.weight_precision.is_full()) {
        tape.override_value(y, quant::quantized_conv2d(tape.value(x), l.weight.value, l.stride, Padding::Same,
                                                       {l.act_precision, *act_bounds}, l.weight_precision));
      }
    } else {
      y = nn::matmul(tape, in, w);
      if (opt.aqt && act_bounds && !l.weight_precision.is_full()) {
        tape.override_value(y, quant::quantized_matmul(tape.value(x), l.weight.value,
                                                       {l.act_precision, *act_bounds}, l.weight_precision));
      }
    }
    if (l.bias) y = nn::bias_add(tape, y, tape.parameter(*l.bias));
    return y;
  }

  ResNetSpec spec_;
  LayerQuantConfig quant_;
  double ema_decay_;
  std::vector<QuantLayer<T>> layers_;
  std::vector<NormLayer<T>> norms_;
  std::vector<BlockLayout> blocks_;
};

template <typename T = float>
ResNet<T> build_resnet(const ResNetSpec& spec, const LayerQuantConfig& quant, std::uint64_t seed = 0,
                       double ema_decay = calib::kDefaultEmaDecay) {
  return ResNet<T>(spec, quant, seed, ema_decay);
}

template <typename T>
std::size_t count_params(const ResNet<T>& m) {
  return m.count_params();
}

template <typename T>
std::vector<cost::LayerShape> layer_shapes(const ResNet<T>& m, std::size_t resolution, std::size_t batch = 1) {
  return m.layer_shapes(resolution, batch);
}

}  // namespace qat::model
