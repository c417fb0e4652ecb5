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

// Activation clipping-bound lifecycle and dynamic weight bounds.
//
// Activations: for steps [0, N) track an EMA of per-channel max|x| and leave
// activations unquantized; at step N freeze the EMA as the clipping bounds
// and keep them for the rest of training. There is exactly one
// Calibrating -> Frozen transition.
//
// Weights: per-output-channel max|w| of the current tensor, recomputed every
// forward pass.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "qat/tensor.hpp"

namespace qat::calib {

inline constexpr double kDefaultEmaDecay = 0.9;
inline constexpr double kDefaultFreezeFraction = 0.2;

struct EmaTracker {
  std::vector<double> ema;
  double decay = kDefaultEmaDecay;
  std::size_t observations = 0;

  friend bool operator==(const EmaTracker&, const EmaTracker&) = default;
};

inline EmaTracker make_tracker(double decay = kDefaultEmaDecay) {
  if (!(decay > 0.0 && decay < 1.0)) {
    throw std::invalid_argument("EMA decay must lie in (0, 1), got " + std::to_string(decay));
  }
  EmaTracker t;
  t.decay = decay;
  return t;
}

// Per-channel max|x| over every axis except channel_axis.
template <typename T>
std::vector<double> channel_max_abs(const Tensor<T>& x, std::size_t channel_axis) {
  if (x.empty()) throw std::invalid_argument("channel_max_abs: empty tensor");
  const AxisSplit split = split_axis(x.shape(), channel_axis);
  if (split.outer * split.inner == 0) throw std::invalid_argument("channel_max_abs: empty reduction");
  std::vector<double> out(split.channels, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double& m = out[split.channel_of(i)];
    m = std::max(m, std::abs(static_cast<double>(x[i])));
  }
  return out;
}

template <typename T>
EmaTracker update_ema(EmaTracker t, const Tensor<T>& batch, std::size_t channel_axis) {
  if (batch.empty()) throw std::invalid_argument("update_ema: empty batch");
  const std::vector<double> m = channel_max_abs(batch, channel_axis);
  if (t.observations == 0) {
    t.ema = m;
  } else {
    if (t.ema.size() != m.size()) {
      throw ShapeError("update_ema: channel count changed from " + std::to_string(t.ema.size()) +
                       " to " + std::to_string(m.size()));
    }
    for (std::size_t c = 0; c < m.size(); ++c) {
      t.ema[c] = t.decay * t.ema[c] + (1.0 - t.decay) * m[c];
    }
  }
  ++t.observations;
  return t;
}

struct CalibrationSchedule {
  std::size_t freeze_step = 0;
  std::size_t total_steps = 0;

  static CalibrationSchedule make(std::size_t total_steps, std::size_t freeze_step) {
    if (!(freeze_step > 0 && freeze_step < total_steps)) {
      throw std::invalid_argument("freeze step " + std::to_string(freeze_step) +
                                  " must lie strictly inside (0, " + std::to_string(total_steps) +
                                  ")");
    }
    return {freeze_step, total_steps};
  }

  // N = round(fraction * total), half away from zero.
  static CalibrationSchedule from_fraction(std::size_t total_steps,
                                           double fraction = kDefaultFreezeFraction) {
    const double n = std::round(fraction * static_cast<double>(total_steps));
    if (!(n >= 1.0)) {
      throw std::invalid_argument("freeze fraction " + std::to_string(fraction) + " of " +
                                  std::to_string(total_steps) + " steps rounds to step 0");
    }
    return make(total_steps, static_cast<std::size_t>(n));
  }

  // The recommended window for the freeze step is 10%..40% of training.
  static bool fraction_in_recommended_band(double fraction) {
    return fraction >= 0.1 && fraction <= 0.4;
  }
};

struct Calibrating {
  EmaTracker tracker;
  friend bool operator==(const Calibrating&, const Calibrating&) = default;
};

struct Frozen {
  std::vector<double> bounds;
  std::size_t frozen_at = 0;
  friend bool operator==(const Frozen&, const Frozen&) = default;
};

using BoundsState = std::variant<Calibrating, Frozen>;

inline bool activations_quantized(const BoundsState& s) noexcept {
  return std::holds_alternative<Frozen>(s);
}

// Freezes on the first step >= N. A Frozen state is returned unchanged.
inline BoundsState maybe_freeze(const BoundsState& s, std::size_t step,
                                const CalibrationSchedule& schedule) {
  if (const auto* c = std::get_if<Calibrating>(&s)) {
    if (step < schedule.freeze_step) return s;
    if (c->tracker.observations == 0) {
      throw std::logic_error("maybe_freeze: no activation statistics observed before step " +
                             std::to_string(step));
    }
    return Frozen{c->tracker.ema, step};
  }
  return s;
}

// Per-output-channel max|w|; zero channels are handled by the scale floor.
template <typename T>
std::vector<double> weight_bounds(const Tensor<T>& w, std::size_t out_channel_axis) {
  return channel_max_abs(w, out_channel_axis);
}

}  // namespace qat::calib
