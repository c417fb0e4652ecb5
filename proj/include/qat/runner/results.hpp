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

// Run results: one CSV row per run with a fixed column order, written with
// shortest round-trip number formatting so reading a row back is lossless.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

namespace qat::run {

inline constexpr const char* kResultsHeader =
    "run_id,preset,multiplier,params,cost_linear_ratio,cost_quadratic_ratio,mem_bits,train_logloss,eval_logloss,"
    "gen_gap,top1,status";

inline constexpr const char* kStatusOk = "ok";

struct RunResult {
  std::string run_id;
  std::string preset;
  double multiplier = 0.0;
  std::uint64_t params = 0;
  double cost_linear_ratio = 0.0;
  double cost_quadratic_ratio = 0.0;
  std::uint64_t mem_bits = 0;
  double train_logloss = 0.0;
  double eval_logloss = 0.0;
  double gen_gap = 0.0;
  double top1 = 0.0;
  std::string status = kStatusOk;

  // Sidecar-only fields.
  std::string config_digest;
  std::string cost_linear_exact;  // reduced fraction
  std::string cost_quadratic_exact;
  double initial_loss = 0.0;
  double final_batch_loss = 0.0;
  double wall_clock_s = 0.0;

  bool ok() const { return status == kStatusOk; }
  friend bool operator==(const RunResult&, const RunResult&) = default;
};

inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& s, const char* field) {
  if (s == "nan") return std::nan("");
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw std::invalid_argument(std::string("results: bad number '") + s + "' in column " + field);
  }
  return v;
}

inline std::uint64_t parse_u64(const std::string& s, const char* field) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw std::invalid_argument(std::string("results: bad integer '") + s + "' in column " + field);
  }
  return v;
}

// Commas and newlines would break the row; they are replaced in free text.
inline std::string csv_safe(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ';';
  }
  return s;
}

inline std::string to_csv_row(const RunResult& r) {
  std::ostringstream os;
  os << csv_safe(r.run_id) << ',' << csv_safe(r.preset) << ',' << format_double(r.multiplier) << ',' << r.params
     << ',' << format_double(r.cost_linear_ratio) << ',' << format_double(r.cost_quadratic_ratio) << ','
     << r.mem_bits << ',' << format_double(r.train_logloss) << ',' << format_double(r.eval_logloss) << ','
     << format_double(r.gen_gap) << ',' << format_double(r.top1) << ',' << csv_safe(r.status);
  return os.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline RunResult from_csv_row(const std::string& line) {
  const auto f = split_csv_line(line);
  if (f.size() != 12) {
    throw std::invalid_argument("results: expected 12 columns, got " + std::to_string(f.size()) + " in '" + line +
                                "'");
  }
  RunResult r;
  r.run_id = f[0];
  r.preset = f[1];
  r.multiplier = parse_double(f[2], "multiplier");
  r.params = parse_u64(f[3], "params");
  r.cost_linear_ratio = parse_double(f[4], "cost_linear_ratio");
  r.cost_quadratic_ratio = parse_double(f[5], "cost_quadratic_ratio");
  r.mem_bits = parse_u64(f[6], "mem_bits");
  r.train_logloss = parse_double(f[7], "train_logloss");
  r.eval_logloss = parse_double(f[8], "eval_logloss");
  r.gen_gap = parse_double(f[9], "gen_gap");
  r.top1 = parse_double(f[10], "top1");
  r.status = f[11];
  return r;
}

inline std::vector<RunResult> read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("results: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kResultsHeader) throw std::invalid_argument("results: unexpected header '" + line + "'");
  std::vector<RunResult> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(from_csv_row(line));
  }
  return out;
}

inline std::vector<RunResult> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open results file '" + path + "'");
  return read_results_csv(in);
}

inline nlohmann::json to_json(const RunResult& r) {
  return {{"run_id", r.run_id},
          {"preset", r.preset},
          {"multiplier", r.multiplier},
          {"params", r.params},
          {"cost_linear_ratio", r.cost_linear_ratio},
          {"cost_quadratic_ratio", r.cost_quadratic_ratio},
          {"cost_linear_exact", r.cost_linear_exact},
          {"cost_quadratic_exact", r.cost_quadratic_exact},
          {"mem_bits", r.mem_bits},
          {"train_logloss", r.train_logloss},
          {"eval_logloss", r.eval_logloss},
          {"gen_gap", r.gen_gap},
          {"top1", r.top1},
          {"status", r.status},
          {"config_digest", r.config_digest},
          {"initial_loss", r.initial_loss},
          {"final_batch_loss", r.final_batch_loss},
          {"wall_clock_s", r.wall_clock_s}};
}

// Append-only results file shared by concurrent runs. The header is written
// when the file is new or empty; every row is appended and flushed while
// holding the lock.
class ResultsStore {
 public:
  explicit ResultsStore(std::string path) : path_(std::move(path)) {
    const bool fresh = !std::filesystem::exists(path_) || std::filesystem::file_size(path_) == 0;
    if (fresh) {
      std::ofstream out(path_, std::ios::trunc);
      if (!out) throw std::runtime_error("cannot create results file '" + path_ + "'");
      out << kResultsHeader << '\n';
    }
  }

  void append(const RunResult& r) {
    const std::string row = to_csv_row(r) + '\n';
    std::lock_guard<std::mutex> lock(mu_);
    std::ofstream out(path_, std::ios::app);
    if (!out) throw std::runtime_error("cannot append to results file '" + path_ + "'");
    out << row;
    out.flush();
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::mutex mu_;
};

}  // namespace qat::run
