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

// Grid sweep over filter multipliers x quantization presets. Runs are
// independent; workers pull the next grid index from an atomic counter and
// share only the results store.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "qat/model.hpp"
#include "qat/runner/config.hpp"
#include "qat/runner/results.hpp"
#include "qat/runner/train.hpp"

namespace qat::run {

inline const std::vector<double>& desk_multipliers() {
  static const std::vector<double> m{0.5, 1.0, 2.0};
  return m;
}

inline const std::vector<double>& full_multipliers() {
  static const std::vector<double> m{0.5, 0.62, 0.75, 0.87, 1.0, 1.25, 1.5, 1.75, 2.0};
  return m;
}

struct GridSpec {
  nlohmann::json base;  // an ExperimentConfig document; model/quant/output are filled per run
  std::vector<double> multipliers = desk_multipliers();
  std::vector<model::QuantSettingPreset> presets = model::all_presets();
  std::size_t workers = 1;
};

// {"base": {...config...}, "multipliers": [..] | "full", "presets": [..], "workers": n}
inline GridSpec parse_grid(const nlohmann::json& j) {
  detail::reject_unknown(j, {"base", "multipliers", "presets", "workers"}, "grid");
  GridSpec g;
  g.base = j.value("base", nlohmann::json::object());
  if (j.contains("multipliers")) {
    const auto& m = j.at("multipliers");
    if (m.is_string() && m.get<std::string>() == "full") {
      g.multipliers = full_multipliers();
    } else if (m.is_string() && m.get<std::string>() == "desk") {
      g.multipliers = desk_multipliers();
    } else {
      g.multipliers = m.get<std::vector<double>>();
    }
  }
  if (j.contains("presets")) {
    g.presets.clear();
    for (const auto& p : j.at("presets")) {
      try {
        g.presets.push_back(model::parse_preset(p.get<std::string>()));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
  }
  g.workers = j.value("workers", std::size_t{1});
  if (g.multipliers.empty() || g.presets.empty()) throw ConfigError("grid needs multipliers and presets");
  if (g.workers == 0) throw ConfigError("grid workers must be positive");
  return g;
}

inline std::string run_id_for(model::QuantSettingPreset p, double multiplier) {
  return std::string(model::to_string(p)) + "_c" + format_double(multiplier);
}

// Expands the grid in multiplier-major order.
inline std::vector<ExperimentConfig> expand_grid(const GridSpec& g, const std::string& out_dir) {
  std::vector<ExperimentConfig> out;
  for (double c : g.multipliers) {
    for (auto p : g.presets) {
      nlohmann::json j = g.base;
      j["model"]["filter_multiplier"] = c;
      nlohmann::json q = j.value("quant", nlohmann::json::object());
      q.erase("default_bits");
      q.erase("first_bits");
      q.erase("last_bits");
      q.erase("overrides");
      q["preset"] = model::to_string(p);
      j["quant"] = q;
      const std::string id = run_id_for(p, c);
      j["output"] = {{"run_id", id},
                     {"dir", out_dir.empty() ? "" : (std::filesystem::path(out_dir) / "runs" / id).string()}};
      out.push_back(parse_config(j));
    }
  }
  return out;
}

struct SweepOptions {
  std::size_t workers = 1;
  bool verbose = false;
};

// Runs every config; a failed run yields a row whose status names the error.
// Results are returned in grid order whatever the completion order.
inline std::vector<RunResult> run_sweep(const std::vector<ExperimentConfig>& configs, const std::string& out_dir,
                                        const SweepOptions& opt = {}) {
  std::unique_ptr<ResultsStore> store;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    nlohmann::json side = nlohmann::json::array();
    for (const auto& c : configs) side.push_back({{"config", to_json(c)}, {"config_digest", config_digest(c)}});
    std::ofstream(std::filesystem::path(out_dir) / "configs.json", std::ios::trunc) << side.dump(2) << '\n';
    store = std::make_unique<ResultsStore>((std::filesystem::path(out_dir) / "results.csv").string());
  }

  std::vector<RunResult> results(configs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      const ExperimentConfig& c = configs[i];
      RunResult r;
      try {
        r = train<float>(c).result;
      } catch (const std::exception& e) {
        r.run_id = c.output.run_id;
        r.preset = c.setting_name();
        r.multiplier = c.model.filter_multiplier;
        r.config_digest = config_digest(c);
        r.status = std::string("failed: ") + e.what();
      }
      if (store) store->append(r);
      if (opt.verbose) {
        std::lock_guard<std::mutex> lock(log_mu);
        std::fprintf(stderr, "[%zu/%zu] %s top1=%s status=%s\n", i + 1, configs.size(), r.run_id.c_str(),
                     format_double(r.top1).c_str(), r.status.c_str());
      }
      results[i] = std::move(r);
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(opt.workers, configs.size()));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  if (!out_dir.empty()) {
    nlohmann::json side = nlohmann::json::array();
    for (const auto& r : results) side.push_back(to_json(r));
    std::ofstream(std::filesystem::path(out_dir) / "results.json", std::ios::trunc) << side.dump(2) << '\n';
  }
  return results;
}

inline std::vector<RunResult> run_sweep(const GridSpec& g, const std::string& out_dir, bool verbose = false) {
  return run_sweep(expand_grid(g, out_dir), out_dir, SweepOptions{g.workers, verbose});
}

}  // namespace qat::run
