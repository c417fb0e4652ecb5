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

// Checkpoint = <prefix>.json manifest + <prefix>.bin little-endian blob.
//
// The manifest lists every tensor as {name, shape, dtype, offset, nbytes}
// into the blob, plus the step to resume from and each quantized layer's
// calibration state. Tensors stored: parameter values and momenta, batch norm
// running statistics, and activation EMA or frozen bounds (float64).

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "qat/model.hpp"

namespace qat::run {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are written in native little-endian order");

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename E>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<E, float>) return "f32";
  else if constexpr (std::is_same_v<E, double>) return "f64";
  else static_assert(sizeof(E) == 0, "unsupported checkpoint dtype");
}

class BlobWriter {
 public:
  template <typename E>
  void add(const std::string& name, const Shape& shape, std::span<const E> data) {
    const std::size_t offset = bytes_.size();
    const std::size_t n = data.size() * sizeof(E);
    bytes_.resize(offset + n);
    if (n) std::memcpy(bytes_.data() + offset, data.data(), n);
    entries_.push_back({{"name", name}, {"shape", shape}, {"dtype", dtype_name<E>()}, {"offset", offset},
                        {"nbytes", n}});
  }

  const std::vector<char>& bytes() const { return bytes_; }
  const nlohmann::json& entries() const { return entries_; }

 private:
  std::vector<char> bytes_;
  nlohmann::json entries_ = nlohmann::json::array();
};

class BlobReader {
 public:
  BlobReader(const nlohmann::json& entries, std::vector<char> bytes) : bytes_(std::move(bytes)) {
    for (const auto& e : entries) index_[e.at("name").get<std::string>()] = e;
  }

  template <typename E>
  std::vector<E> get(const std::string& name, const Shape& expected) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw CheckpointError("checkpoint has no tensor '" + name + "'");
    const auto& e = it->second;
    if (e.at("dtype").get<std::string>() != dtype_name<E>()) {
      throw CheckpointError("tensor '" + name + "' has dtype " + e.at("dtype").get<std::string>() + ", expected " +
                            dtype_name<E>());
    }
    const Shape shape = e.at("shape").get<Shape>();
    if (shape != expected) {
      throw CheckpointError("tensor '" + name + "' has shape " + to_string(shape) + ", model expects " +
                            to_string(expected));
    }
    const std::size_t offset = e.at("offset").get<std::size_t>();
    const std::size_t n = e.at("nbytes").get<std::size_t>();
    if (n != numel(shape) * sizeof(E) || offset + n > bytes_.size()) {
      throw CheckpointError("tensor '" + name + "' lies outside the checkpoint blob");
    }
    std::vector<E> out(numel(shape));
    if (n) std::memcpy(out.data(), bytes_.data() + offset, n);
    return out;
  }

 private:
  std::vector<char> bytes_;
  std::map<std::string, nlohmann::json> index_;
};

inline std::string checkpoint_manifest_path(const std::string& prefix) { return prefix + ".json"; }
inline std::string checkpoint_blob_path(const std::string& prefix) { return prefix + ".bin"; }

template <typename T>
void save_checkpoint(const std::string& prefix, const model::ResNet<T>& m, std::size_t next_step,
                     const nlohmann::json& extra = nlohmann::json::object()) {
  BlobWriter w;
  auto add_param = [&](const nn::Parameter<T>& p) {
    w.add<T>(p.name, p.value.shape(), p.value.data());
    w.add<T>(p.name + "/momentum", p.momentum.shape(), p.momentum.data());
  };
  nlohmann::json calibration = nlohmann::json::array();
  for (const auto& l : m.layers()) {
    add_param(l.weight);
    if (l.bias) add_param(*l.bias);
    if (!l.quantizes_activations()) continue;
    if (const auto* f = std::get_if<calib::Frozen>(&l.act_state)) {
      w.add<double>(l.name + "/act_bounds", {f->bounds.size()}, std::span<const double>(f->bounds));
      calibration.push_back({{"layer", l.name}, {"state", "frozen"}, {"frozen_at", f->frozen_at}});
    } else {
      const auto& t = std::get<calib::Calibrating>(l.act_state).tracker;
      w.add<double>(l.name + "/act_ema", {t.ema.size()}, std::span<const double>(t.ema));
      calibration.push_back(
          {{"layer", l.name}, {"state", "calibrating"}, {"observations", t.observations}, {"decay", t.decay}});
    }
  }
  for (const auto& n : m.norms()) {
    add_param(n.gamma);
    add_param(n.beta);
    w.add<T>(n.name + "/running_mean", n.stats.mean.shape(), n.stats.mean.data());
    w.add<T>(n.name + "/running_var", n.stats.var.shape(), n.stats.var.data());
  }

  const nlohmann::json manifest{{"format", "qat-checkpoint-v1"},
                                {"step", next_step},
                                {"tensors", w.entries()},
                                {"calibration", calibration},
                                {"extra", extra}};
  {
    std::ofstream out(checkpoint_blob_path(prefix), std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write '" + checkpoint_blob_path(prefix) + "'");
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  }
  std::ofstream out(checkpoint_manifest_path(prefix), std::ios::trunc);
  if (!out) throw CheckpointError("cannot write '" + checkpoint_manifest_path(prefix) + "'");
  out << manifest.dump(2) << '\n';
}

// Restores state into a model built from the same config. Returns the step to
// resume from.
template <typename T>
std::size_t load_checkpoint(const std::string& prefix, model::ResNet<T>& m) {
  std::ifstream mf(checkpoint_manifest_path(prefix));
  if (!mf) throw CheckpointError("cannot open '" + checkpoint_manifest_path(prefix) + "'");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("corrupt checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "qat-checkpoint-v1") throw CheckpointError("unknown checkpoint format");
  std::ifstream bf(checkpoint_blob_path(prefix), std::ios::binary);
  if (!bf) throw CheckpointError("cannot open '" + checkpoint_blob_path(prefix) + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());
  const BlobReader r(manifest.at("tensors"), std::move(bytes));

  auto load_tensor = [&](const std::string& name, Tensor<T>& t) {
    t = Tensor<T>(t.shape(), r.template get<T>(name, t.shape()));
  };
  auto load_param = [&](nn::Parameter<T>& p) {
    load_tensor(p.name, p.value);
    load_tensor(p.name + "/momentum", p.momentum);
    p.zero_grad();
  };
  std::map<std::string, nlohmann::json> cal;
  for (const auto& c : manifest.at("calibration")) cal[c.at("layer").get<std::string>()] = c;

  for (auto& l : m.layers()) {
    load_param(l.weight);
    if (l.bias) load_param(*l.bias);
    if (!l.quantizes_activations()) continue;
    const auto it = cal.find(l.name);
    if (it == cal.end()) throw CheckpointError("checkpoint has no calibration state for '" + l.name + "'");
    const nlohmann::json& entry = it->second;
    const std::string state = entry.at("state").get<std::string>();
    if (state == "frozen") {
      const auto b = r.template get<double>(l.name + "/act_bounds", {l.c_in});
      l.act_state = calib::Frozen{b, entry.at("frozen_at").get<std::size_t>()};
    } else {
      calib::EmaTracker t = calib::make_tracker(entry.at("decay").get<double>());
      t.observations = entry.at("observations").get<std::size_t>();
      t.ema = t.observations ? r.template get<double>(l.name + "/act_ema", {l.c_in}) : std::vector<double>{};
      l.act_state = calib::Calibrating{t};
    }
  }
  for (auto& n : m.norms()) {
    load_param(n.gamma);
    load_param(n.beta);
    load_tensor(n.name + "/running_mean", n.stats.mean);
    load_tensor(n.name + "/running_var", n.stats.var);
  }
  return manifest.at("step").get<std::size_t>();
}

}  // namespace qat::run
