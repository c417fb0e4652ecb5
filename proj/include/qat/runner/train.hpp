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

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "qat/costmodel.hpp"
#include "qat/model.hpp"
#include "qat/ops.hpp"
#include "qat/optim.hpp"
#include "qat/runner/checkpoint.hpp"
#include "qat/runner/config.hpp"
#include "qat/runner/dataset.hpp"
#include "qat/runner/results.hpp"

namespace qat::run {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite losses before this step skip the update; from it on they abort.
inline constexpr std::size_t kDivergenceGraceSteps = 10;

struct EvalResult {
  double top1 = 0.0;
  double log_loss = 0.0;
  std::size_t examples = 0;
};

// Accumulates top-1 hits and cross-entropy from [batch, classes] logits.
// Ties in argmax resolve to the lowest class index.
class EvalAccumulator {
 public:
  template <typename T>
  void add(const Tensor<T>& logits, const std::vector<std::size_t>& labels) {
    if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
      throw ShapeError("evaluate: logits " + to_string(logits.shape()) + " do not match " +
                       std::to_string(labels.size()) + " labels");
    }
    const std::size_t k = logits.dim(1);
    for (std::size_t b = 0; b < labels.size(); ++b) {
      if (labels[b] >= k) throw std::out_of_range("evaluate: label out of range");
      const T* row = logits.data().data() + b * k;
      std::size_t arg = 0;
      for (std::size_t j = 1; j < k; ++j) {
        if (row[j] > row[arg]) arg = j;
      }
      const double mx = static_cast<double>(row[arg]);
      double z = 0.0;
      for (std::size_t j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
      loss_sum_ += std::log(z) + mx - static_cast<double>(row[labels[b]]);
      hits_ += arg == labels[b];
      ++n_;
    }
  }

  EvalResult result() const {
    if (n_ == 0) throw std::invalid_argument("evaluate: empty stream");
    return {static_cast<double>(hits_) / static_cast<double>(n_), loss_sum_ / static_cast<double>(n_), n_};
  }

 private:
  double loss_sum_ = 0.0;
  std::size_t hits_ = 0;
  std::size_t n_ = 0;
};

template <typename T>
EvalResult evaluate_logits(const Tensor<T>& logits, const std::vector<std::size_t>& labels) {
  EvalAccumulator acc;
  acc.add(logits, labels);
  return acc.result();
}

// Eval mode: batch norm running statistics, frozen bounds if any.
template <typename T>
EvalResult evaluate(model::ResNet<T>& m, const Dataset& data, std::size_t batch_size, bool aqt = false,
                    bool per_tensor_activations = false) {
  EvalAccumulator acc;
  const std::size_t batches = num_sequential_batches(data, batch_size);
  for (std::size_t i = 0; i < batches; ++i) {
    const Batch<T> b = sequential_batch<T>(data, batch_size, i);
    nn::Tape<T> tape;
    model::ForwardOptions opt;
    opt.mode = nn::Mode::Eval;
    opt.aqt = aqt;
    opt.per_tensor_activations = per_tensor_activations;
    const nn::Var logits = m.forward(tape, b.images, opt);
    acc.add(tape.value(logits), b.labels);
  }
  return acc.result();
}

struct CostSummary {
  cost::Ratio linear;
  cost::Ratio quadratic;
  std::uint64_t mem_bits = 0;
};

inline CostSummary summarize_costs(std::span<const cost::LayerShape> shapes) {
  const auto lin = cost::normalized_cost(shapes, cost::CostModelKind::Linear);
  const auto quad = cost::normalized_cost(shapes, cost::CostModelKind::Quadratic);
  return {*lin.compute_ratio, *quad.compute_ratio, lin.total_memory_bits};
}

template <typename T>
struct TrainHooks {
  model::QuantObserver<T> observer;                       // quantization instrumentation
  std::function<void(std::size_t, double)> on_step;        // (step, batch loss)
};

template <typename T>
struct TrainOutcome {
  RunResult result;
  std::vector<double> losses;  // batch loss per executed step
  std::size_t start_step = 0;
  std::size_t freeze_step = 0;
  bool stopped_early = false;
  std::shared_ptr<model::ResNet<T>> model;
};

inline std::string checkpoint_prefix(const ExperimentConfig& c) {
  return (std::filesystem::path(c.output.dir) / "checkpoint").string();
}

template <typename T = float>
TrainOutcome<T> train(const ExperimentConfig& cfg, const TrainHooks<T>& hooks = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const SplitDataset data = load_dataset(cfg.dataset, cfg.train.seed);
  if (data.train.resolution() != cfg.model.input_resolution || data.train.channels() != cfg.model.input_channels) {
    throw ConfigError("dataset images do not match the model input");
  }

  TrainOutcome<T> out;
  out.model = std::make_shared<model::ResNet<T>>(cfg.model, cfg.quant, cfg.train.seed, cfg.calibration.ema_decay);
  model::ResNet<T>& m = *out.model;
  const auto schedule = calib::CalibrationSchedule::from_fraction(cfg.train.steps, cfg.calibration.freeze_fraction);
  const auto lr = nn::LrSchedule::make(cfg.train.base_lr(), cfg.train.steps, cfg.train.warmup_fraction);
  const BatchStream<T> stream(data.train, cfg.train.batch_size, cfg.train.seed, cfg.dataset.augment);
  out.freeze_step = schedule.freeze_step;
  const CostSummary costs = summarize_costs(m.layer_shapes(cfg.model.input_resolution, 1));

  double initial_loss = std::numeric_limits<double>::quiet_NaN();
  if (!cfg.train.resume_from.empty()) {
    out.start_step = load_checkpoint(cfg.train.resume_from, m);
    std::ifstream mf(checkpoint_manifest_path(cfg.train.resume_from));
    const auto manifest = nlohmann::json::parse(mf);
    initial_loss = manifest.at("extra").value("initial_loss", initial_loss);
  }
  const std::size_t end = std::min(cfg.train.steps, cfg.train.stop_at_step.value_or(cfg.train.steps));
  const model::QuantObserver<T>* observer = hooks.observer ? &hooks.observer : nullptr;
  auto params = m.parameters();
  double last_finite = std::numeric_limits<double>::quiet_NaN();

  for (std::size_t step = out.start_step; step < end; ++step) {
    m.begin_step(step, schedule, observer);
    const Batch<T> batch = stream.batch_at(step);
    nn::Tape<T> tape;
    model::ForwardOptions opt;
    opt.step = step;
    opt.mode = nn::Mode::Train;
    opt.aqt = cfg.aqt_mode;
    opt.per_tensor_activations = cfg.per_tensor_activations;
    const nn::Var logits = m.forward(tape, batch.images, opt, observer);
    const nn::Var loss = nn::softmax_cross_entropy(tape, logits, batch.labels);
    const double lv = static_cast<double>(tape.value(loss).item());
    out.losses.push_back(lv);
    if (hooks.on_step) hooks.on_step(step, lv);
    if (step == 0) initial_loss = lv;
    if (!std::isfinite(lv)) {
      if (step >= kDivergenceGraceSteps) {
        throw DivergenceError("training diverged: loss " + format_double(lv) + " at step " +
                              std::to_string(step) + " (lr " + format_double(lr.at(step)) +
                              ", last finite loss " + format_double(last_finite) + ")");
      }
      for (auto* p : params) p->zero_grad();
      continue;
    }
    last_finite = lv;
    tape.backward(loss);
    nn::sgd_momentum_step<T>(params, lr.at(step), cfg.train.momentum);
  }

  RunResult& r = out.result;
  r.run_id = cfg.output.run_id;
  r.preset = cfg.setting_name();
  r.multiplier = cfg.model.filter_multiplier;
  r.params = m.count_params();
  r.config_digest = config_digest(cfg);
  r.initial_loss = initial_loss;
  r.final_batch_loss = out.losses.empty() ? std::numeric_limits<double>::quiet_NaN() : out.losses.back();
  r.cost_linear_ratio = costs.linear.value();
  r.cost_quadratic_ratio = costs.quadratic.value();
  r.cost_linear_exact = costs.linear.str();
  r.cost_quadratic_exact = costs.quadratic.str();
  r.mem_bits = costs.mem_bits;

  const bool write = !cfg.output.dir.empty();
  if (write) std::filesystem::create_directories(cfg.output.dir);
  if (end < cfg.train.steps) {
    out.stopped_early = true;
    r.status = "stopped";
    if (!write) throw ConfigError("train.stop_at_step needs output.dir for the checkpoint");
    save_checkpoint(checkpoint_prefix(cfg), m, end, {{"initial_loss", initial_loss}});
    return out;
  }

  const EvalResult train_eval =
      evaluate(m, data.train, cfg.train.eval_batch_size, cfg.aqt_mode, cfg.per_tensor_activations);
  const EvalResult eval =
      evaluate(m, data.eval, cfg.train.eval_batch_size, cfg.aqt_mode, cfg.per_tensor_activations);
  r.train_logloss = train_eval.log_loss;
  r.eval_logloss = eval.log_loss;
  r.gen_gap = r.eval_logloss - r.train_logloss;
  r.top1 = eval.top1;
  r.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (write) {
    if (cfg.output.write_checkpoint) save_checkpoint(checkpoint_prefix(cfg), m, end, {{"initial_loss", initial_loss}});
    std::ofstream side(std::filesystem::path(cfg.output.dir) / "result.json", std::ios::trunc);
    side << nlohmann::json{{"config", to_json(cfg)}, {"result", to_json(r)}}.dump(2) << '\n';
  }
  return out;
}

}  // namespace qat::run
