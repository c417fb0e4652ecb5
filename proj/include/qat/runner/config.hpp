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

// Experiment configuration and its JSON form. The schema is documented in
// docs/config.md; unknown keys are rejected so typos fail loudly.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "qat/calibration.hpp"
#include "qat/model.hpp"
#include "qat/optim.hpp"

namespace qat::run {

using qat::to_string;

using nlohmann::json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class DatasetKind { SyntheticGaussianClusters, Cifar10Binary };

inline const char* to_string(DatasetKind k) {
  return k == DatasetKind::SyntheticGaussianClusters ? "synthetic" : "cifar10";
}

struct DatasetDescriptor {
  DatasetKind kind = DatasetKind::SyntheticGaussianClusters;
  // Cifar10Binary: directory holding data_batch_{1..5}.bin and test_batch.bin.
  // Relative paths resolve against $QAT_DATASET_ROOT when it is set.
  std::string path;
  std::size_t num_classes = 10;
  std::size_t resolution = 32;
  std::size_t channels = 3;
  // Synthetic only.
  std::size_t train_examples = 2048;
  std::size_t eval_examples = 512;
  double separation = 1.0;
  // Cifar only: 0 keeps every record.
  std::size_t max_train_examples = 0;
  std::size_t max_eval_examples = 0;
  bool augment = false;  // random crop (pad 4) + horizontal flip on train batches
};

struct TrainSettings {
  std::size_t steps = 1000;
  std::size_t batch_size = 32;
  std::optional<double> lr;  // default: 0.1 * batch / 256
  double momentum = 0.9;
  double warmup_fraction = 0.05;
  std::uint64_t seed = 0;
  std::size_t eval_batch_size = 128;
  std::string resume_from;                // checkpoint prefix
  std::optional<std::size_t> stop_at_step;  // checkpoint and stop early

  double base_lr() const { return lr.value_or(nn::LrSchedule::default_base_lr(batch_size)); }
};

struct CalibrationSettings {
  double ema_decay = calib::kDefaultEmaDecay;
  double freeze_fraction = calib::kDefaultFreezeFraction;
};

struct OutputSettings {
  std::string dir;  // empty: no files written
  std::string run_id = "run";
  bool write_checkpoint = true;
};

struct ExperimentConfig {
  std::string arch = "mini";  // mini | resnet50
  model::ResNetSpec model = model::ResNetSpec::mini();
  std::optional<model::QuantSettingPreset> preset = model::QuantSettingPreset::Baseline;
  model::LayerQuantConfig quant;
  bool aqt_mode = false;
  bool per_tensor_activations = false;
  TrainSettings train;
  CalibrationSettings calibration;
  DatasetDescriptor dataset;
  OutputSettings output;

  std::string setting_name() const { return preset ? model::to_string(*preset) : "custom"; }
};

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& section) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [k, _] : j.items()) {
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in config section '" + section + "'");
  }
}

template <typename V>
V get_or(const json& j, const char* key, V fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

inline std::optional<int> bits_from_json(const json& v, const std::string& where) {
  if (v.is_null()) return std::nullopt;
  if (v.is_string() && v.get<std::string>() == "full") return std::nullopt;
  if (!v.is_number_integer()) throw ConfigError(where + ": bits must be an integer, null or \"full\"");
  const int b = v.get<int>();
  try {
    (void)quant::Precision::signed_bits(b);
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return b;
}

inline json bits_to_json(const std::optional<int>& b) { return b ? json(*b) : json("full"); }

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  using detail::get_or;
  detail::reject_unknown(j, {"model", "quant", "train", "calibration", "dataset", "output"}, "root");
  ExperimentConfig c;

  const json dataset = j.value("dataset", json::object());
  detail::reject_unknown(dataset, {"kind", "path", "num_classes", "resolution", "train_examples", "eval_examples",
                                   "separation", "max_train_examples", "max_eval_examples", "augment"},
                         "dataset");
  const std::string kind = get_or<std::string>(dataset, "kind", "synthetic");
  if (kind == "synthetic") {
    c.dataset.kind = DatasetKind::SyntheticGaussianClusters;
  } else if (kind == "cifar10") {
    c.dataset.kind = DatasetKind::Cifar10Binary;
    c.dataset.resolution = 32;
    c.dataset.augment = true;
  } else {
    throw ConfigError("unknown dataset kind '" + kind + "' (expected synthetic|cifar10)");
  }
  c.dataset.path = get_or<std::string>(dataset, "path", "");
  c.dataset.num_classes = get_or<std::size_t>(dataset, "num_classes", c.dataset.num_classes);
  c.dataset.resolution = get_or<std::size_t>(dataset, "resolution", c.dataset.resolution);
  c.dataset.train_examples = get_or<std::size_t>(dataset, "train_examples", c.dataset.train_examples);
  c.dataset.eval_examples = get_or<std::size_t>(dataset, "eval_examples", c.dataset.eval_examples);
  c.dataset.separation = get_or<double>(dataset, "separation", c.dataset.separation);
  c.dataset.max_train_examples = get_or<std::size_t>(dataset, "max_train_examples", 0);
  c.dataset.max_eval_examples = get_or<std::size_t>(dataset, "max_eval_examples", 0);
  c.dataset.augment = get_or<bool>(dataset, "augment", c.dataset.augment);
  if (c.dataset.kind == DatasetKind::Cifar10Binary && (c.dataset.resolution != 32 || c.dataset.num_classes != 10)) {
    throw ConfigError("cifar10 dataset is fixed at 32x32 and 10 classes");
  }
  if (c.dataset.num_classes < 2) throw ConfigError("dataset needs at least 2 classes");
  if (c.dataset.resolution == 0) throw ConfigError("dataset resolution must be positive");

  const json m = j.value("model", json::object());
  detail::reject_unknown(m, {"arch", "filter_multiplier", "block_group_sizes", "base_widths", "group_strides"},
                         "model");
  c.arch = get_or<std::string>(m, "arch", "mini");
  const double mult = get_or<double>(m, "filter_multiplier", 1.0);
  if (c.arch == "mini") {
    c.model = model::ResNetSpec::mini(mult);
  } else if (c.arch == "resnet50") {
    c.model = model::ResNetSpec::resnet50(mult);
  } else {
    throw ConfigError("unknown model arch '" + c.arch + "' (expected mini|resnet50)");
  }
  c.model.block_group_sizes = get_or(m, "block_group_sizes", c.model.block_group_sizes);
  c.model.base_widths = get_or(m, "base_widths", c.model.base_widths);
  c.model.group_strides = get_or(m, "group_strides", c.model.group_strides);
  c.model.num_classes = c.dataset.num_classes;
  c.model.input_resolution = c.dataset.resolution;
  try {
    c.model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  const json q = j.value("quant", json::object());
  detail::reject_unknown(q, {"preset", "default_bits", "first_bits", "last_bits", "overrides", "aqt_mode",
                             "per_tensor_activations"},
                         "quant");
  if (q.contains("preset")) {
    try {
      c.preset = model::parse_preset(q.at("preset").get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    c.quant = model::LayerQuantConfig::from_preset(*c.preset);
  } else if (q.contains("default_bits")) {
    c.preset.reset();
    c.quant.default_bits = detail::bits_from_json(q.at("default_bits"), "quant.default_bits");
    c.quant.first_bits = q.contains("first_bits") ? detail::bits_from_json(q.at("first_bits"), "quant.first_bits")
                                                   : c.quant.default_bits;
    c.quant.last_bits = q.contains("last_bits") ? detail::bits_from_json(q.at("last_bits"), "quant.last_bits")
                                                : c.quant.default_bits;
  } else {
    c.quant = model::LayerQuantConfig::from_preset(model::QuantSettingPreset::Baseline);
  }
  if (q.contains("overrides")) {
    if (!q.at("overrides").is_object()) throw ConfigError("quant.overrides must be an object");
    for (const auto& [name, v] : q.at("overrides").items()) {
      c.quant.overrides[name] = detail::bits_from_json(v, "quant.overrides." + name);
    }
    if (!c.quant.overrides.empty()) c.preset.reset();
  }
  c.aqt_mode = get_or<bool>(q, "aqt_mode", false);
  c.per_tensor_activations = get_or<bool>(q, "per_tensor_activations", false);

  const json t = j.value("train", json::object());
  detail::reject_unknown(t, {"steps", "batch_size", "lr", "momentum", "warmup_fraction", "seed", "eval_batch_size",
                             "resume_from", "stop_at_step"},
                         "train");
  if (!t.contains("seed")) throw ConfigError("train.seed is required");
  c.train.seed = get_or<std::uint64_t>(t, "seed", 0);
  c.train.steps = get_or<std::size_t>(t, "steps", c.train.steps);
  c.train.batch_size = get_or<std::size_t>(t, "batch_size", c.train.batch_size);
  if (t.contains("lr")) c.train.lr = get_or<double>(t, "lr", 0.0);
  c.train.momentum = get_or<double>(t, "momentum", c.train.momentum);
  c.train.warmup_fraction = get_or<double>(t, "warmup_fraction", c.train.warmup_fraction);
  c.train.eval_batch_size = get_or<std::size_t>(t, "eval_batch_size", c.train.eval_batch_size);
  c.train.resume_from = get_or<std::string>(t, "resume_from", "");
  if (t.contains("stop_at_step")) c.train.stop_at_step = get_or<std::size_t>(t, "stop_at_step", 0);
  if (c.train.steps < 2) throw ConfigError("train.steps must be at least 2");
  if (c.train.batch_size < 2) throw ConfigError("train.batch_size must be at least 2 (batch norm)");
  if (c.train.eval_batch_size == 0) throw ConfigError("train.eval_batch_size must be positive");
  if (!(c.train.base_lr() > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(c.train.momentum >= 0.0 && c.train.momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (!(c.train.warmup_fraction >= 0.0 && c.train.warmup_fraction < 1.0)) {
    throw ConfigError("train.warmup_fraction must lie in [0, 1)");
  }

  const json cal = j.value("calibration", json::object());
  detail::reject_unknown(cal, {"ema_decay", "freeze_fraction"}, "calibration");
  c.calibration.ema_decay = get_or<double>(cal, "ema_decay", c.calibration.ema_decay);
  c.calibration.freeze_fraction = get_or<double>(cal, "freeze_fraction", c.calibration.freeze_fraction);
  if (!(c.calibration.ema_decay > 0.0 && c.calibration.ema_decay < 1.0)) {
    throw ConfigError("calibration.ema_decay must lie in (0, 1)");
  }
  try {
    (void)calib::CalibrationSchedule::from_fraction(c.train.steps, c.calibration.freeze_fraction);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  const json o = j.value("output", json::object());
  detail::reject_unknown(o, {"dir", "run_id", "write_checkpoint"}, "output");
  c.output.dir = get_or<std::string>(o, "dir", "");
  c.output.run_id = get_or<std::string>(o, "run_id", "run");
  c.output.write_checkpoint = get_or<bool>(o, "write_checkpoint", true);
  if (c.output.run_id.find_first_of(",\n\"") != std::string::npos) {
    throw ConfigError("output.run_id must not contain commas, quotes or newlines");
  }
  return c;
}

// Non-fatal advisories (returned rather than printed so callers decide).
inline std::vector<std::string> config_warnings(const ExperimentConfig& c) {
  std::vector<std::string> w;
  if (!calib::CalibrationSchedule::fraction_in_recommended_band(c.calibration.freeze_fraction)) {
    w.push_back("calibration.freeze_fraction " + std::to_string(c.calibration.freeze_fraction) +
                " is outside the recommended 0.1..0.4 band");
  }
  if (!c.model.multiplier_in_sweep_range()) {
    w.push_back("filter multiplier " + std::to_string(c.model.filter_multiplier) +
                " is outside the studied 0.5..2.0 range");
  }
  return w;
}

inline json to_json(const ExperimentConfig& c) {
  json quant;
  if (c.preset) {
    quant["preset"] = model::to_string(*c.preset);
  } else {
    quant["default_bits"] = detail::bits_to_json(c.quant.default_bits);
    quant["first_bits"] = detail::bits_to_json(c.quant.first_bits);
    quant["last_bits"] = detail::bits_to_json(c.quant.last_bits);
    json ov = json::object();
    for (const auto& [name, b] : c.quant.overrides) ov[name] = detail::bits_to_json(b);
    quant["overrides"] = ov;
  }
  quant["aqt_mode"] = c.aqt_mode;
  quant["per_tensor_activations"] = c.per_tensor_activations;

  json train{{"steps", c.train.steps},       {"batch_size", c.train.batch_size},
             {"lr", c.train.base_lr()},      {"momentum", c.train.momentum},
             {"warmup_fraction", c.train.warmup_fraction}, {"seed", c.train.seed},
             {"eval_batch_size", c.train.eval_batch_size}};
  if (!c.train.resume_from.empty()) train["resume_from"] = c.train.resume_from;
  if (c.train.stop_at_step) train["stop_at_step"] = *c.train.stop_at_step;

  json dataset{{"kind", to_string(c.dataset.kind)},
               {"num_classes", c.dataset.num_classes},
               {"resolution", c.dataset.resolution},
               {"augment", c.dataset.augment}};
  if (!c.dataset.path.empty()) dataset["path"] = c.dataset.path;
  if (c.dataset.kind == DatasetKind::SyntheticGaussianClusters) {
    dataset["train_examples"] = c.dataset.train_examples;
    dataset["eval_examples"] = c.dataset.eval_examples;
    dataset["separation"] = c.dataset.separation;
  } else {
    dataset["max_train_examples"] = c.dataset.max_train_examples;
    dataset["max_eval_examples"] = c.dataset.max_eval_examples;
  }

  return json{{"model",
               {{"arch", c.arch},
                {"filter_multiplier", c.model.filter_multiplier},
                {"block_group_sizes", c.model.block_group_sizes},
                {"base_widths", c.model.base_widths},
                {"group_strides", c.model.group_strides}}},
              {"quant", quant},
              {"train", train},
              {"calibration",
               {{"ema_decay", c.calibration.ema_decay}, {"freeze_fraction", c.calibration.freeze_fraction}}},
              {"dataset", dataset},
              {"output",
               {{"dir", c.output.dir}, {"run_id", c.output.run_id}, {"write_checkpoint", c.output.write_checkpoint}}}};
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) { return parse_config(read_json_file(path)); }

// FNV-1a over the canonical JSON of everything except output paths.
inline std::string config_digest(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("output");
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace qat::run
