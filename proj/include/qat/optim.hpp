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

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>

#include "qat/tape.hpp"

namespace qat::nn {

// v <- momentum * v + g;  w <- w - lr * v. Gradients are cleared afterwards.
template <typename T>
void sgd_momentum_step(std::span<Parameter<T>* const> params, double lr, double momentum) {
  if (!(lr > 0.0)) throw std::invalid_argument("sgd: learning rate must be positive");
  const T m = static_cast<T>(momentum);
  const T eta = static_cast<T>(lr);
  for (Parameter<T>* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      p->momentum[i] = m * p->momentum[i] + p->grad[i];
      p->value[i] -= eta * p->momentum[i];
    }
    p->zero_grad();
  }
}

// Linear warmup then cosine decay to zero.
struct LrSchedule {
  double base_lr = 0.1;
  std::size_t total_steps = 1;
  std::size_t warmup_steps = 0;

  // Standard ResNet scaling: 0.1 per 256 examples.
  static double default_base_lr(std::size_t batch_size) {
    return 0.1 * static_cast<double>(batch_size) / 256.0;
  }

  static LrSchedule make(double base_lr, std::size_t total_steps, double warmup_fraction = 0.05) {
    if (total_steps == 0) throw std::invalid_argument("lr schedule: total_steps must be positive");
    LrSchedule s;
    s.base_lr = base_lr;
    s.total_steps = total_steps;
    s.warmup_steps = static_cast<std::size_t>(std::round(warmup_fraction * static_cast<double>(total_steps)));
    return s;
  }

  double at(std::size_t step) const {
    if (step < warmup_steps) {
      return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    }
    const double span = static_cast<double>(total_steps - warmup_steps);
    const double progress = static_cast<double>(step - warmup_steps) / span;
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  }
};

}  // namespace qat::nn
