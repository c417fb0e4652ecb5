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

// qat: command line front end.
//
//   qat train --config F [--out-dir D]
//   qat sweep --grid F --out D [--workers W]
//   qat cost --manifest F --model linear|quadratic
//   qat pareto --results F --cost linear|quadratic|memory --out F [--metric top1|eval_logloss]
//   qat quantize-demo --bits B (--signed|--unsigned) [--bound X] [--values v1,v2,...]
//   qat manifest --arch resnet50|mini --multiplier C --preset P [--resolution R] [--out F]
//
// Exit status: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qat/qat.hpp"

namespace {

using qat::run::format_double;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  qat::run::ExperimentConfig cfg = qat::run::load_config(config_path);
  if (!out_dir.empty()) cfg.output.dir = out_dir;
  for (const auto& w : qat::run::config_warnings(cfg)) std::cerr << "warning: " << w << '\n';
  const auto out = qat::run::train<float>(cfg);
  if (!cfg.output.dir.empty() && !out.stopped_early) {
    qat::run::ResultsStore store((std::filesystem::path(cfg.output.dir) / "results.csv").string());
    store.append(out.result);
  }
  std::cout << qat::run::kResultsHeader << '\n' << qat::run::to_csv_row(out.result) << '\n';
  return kExitOk;
}

int cmd_sweep(const std::string& grid_path, const std::string& out_dir, std::size_t workers) {
  qat::run::GridSpec grid = qat::run::parse_grid(qat::run::read_json_file(grid_path));
  if (workers) grid.workers = workers;
  const auto results = qat::run::run_sweep(grid, out_dir, /*verbose=*/true);
  std::size_t failed = 0;
  for (const auto& r : results) failed += !r.ok();
  std::cout << "runs=" << results.size() << " failed=" << failed << " results="
            << (std::filesystem::path(out_dir) / "results.csv").string() << '\n';
  return failed ? kExitRuntime : kExitOk;
}

int cmd_cost(const std::string& manifest_path, const std::string& model) {
  const auto kind = qat::cost::parse_cost_model(model);
  const auto shapes = qat::cost::manifest_from_json(qat::run::read_json_file(manifest_path));
  const auto report = qat::cost::normalized_cost(shapes, kind);
  std::cout << "layer,kind,bits,compute,memory_bits\n";
  for (const auto& l : report.layers) {
    std::cout << l.name << ',' << qat::cost::to_string(l.kind) << ',' << l.bits << ',' << l.compute << ','
              << l.memory_bits << '\n';
  }
  std::cout << "\nsummary,value\n"
            << "cost_model," << qat::cost::to_string(kind) << '\n'
            << "total_compute," << report.total_compute << '\n'
            << "baseline_compute," << report.baseline_compute << '\n'
            << "normalized_ratio," << fixed4(report.compute_ratio->value()) << '\n'
            << "normalized_ratio_exact," << report.compute_ratio->str() << '\n'
            << "total_memory_bits," << report.total_memory_bits << '\n'
            << "baseline_memory_bits," << report.baseline_memory_bits << '\n'
            << "memory_ratio," << fixed4(report.memory_ratio->value()) << '\n'
            << "memory_ratio_exact," << report.memory_ratio->str() << '\n';
  return kExitOk;
}

int cmd_pareto(const std::string& results_path, const std::string& cost_kind, const std::string& metric,
               const std::string& out_path) {
  if (cost_kind != "linear" && cost_kind != "quadratic" && cost_kind != "memory") {
    throw qat::run::ConfigError("--cost must be linear, quadratic or memory");
  }
  if (metric != "top1" && metric != "eval_logloss") throw qat::run::ConfigError("--metric must be top1 or eval_logloss");
  const auto rows = qat::run::read_results_csv(results_path);
  std::vector<qat::pareto::TradeoffPoint> points;
  std::size_t skipped = 0;
  for (const auto& r : rows) {
    if (!r.ok()) {
      ++skipped;
      continue;
    }
    const double c = cost_kind == "linear"      ? r.cost_linear_ratio
                     : cost_kind == "quadratic" ? r.cost_quadratic_ratio
                                                : static_cast<double>(r.mem_bits);
    points.push_back(metric == "top1"
                         ? qat::pareto::make_point(c, r.top1, qat::pareto::Direction::HigherIsBetter, r.run_id,
                                                   r.preset, r.multiplier)
                         : qat::pareto::make_point(c, r.eval_logloss, qat::pareto::Direction::LowerIsBetter,
                                                   r.run_id, r.preset, r.multiplier));
  }
  if (points.empty()) throw std::runtime_error("no successful runs in '" + results_path + "'");
  const auto frontier = qat::pareto::pareto_frontier(points);
  {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + out_path + "'");
    qat::pareto::write_frontier_csv(out, frontier);
  }
  const std::filesystem::path p(out_path);
  const auto curves_path = p.parent_path() / (p.stem().string() + "_curves.csv");
  {
    std::ofstream out(curves_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + curves_path.string() + "'");
    qat::pareto::write_curves_csv(out, points);
  }
  std::cout << "points=" << points.size() << " skipped=" << skipped << " frontier=" << frontier.points.size()
            << " out=" << out_path << " curves=" << curves_path.string() << '\n';
  return kExitOk;
}

int cmd_quantize_demo(int bits, bool is_signed, double bound, std::vector<double> values) {
  const auto precision = is_signed ? qat::quant::Precision::signed_bits(bits) : qat::quant::Precision::unsigned_bits(bits);
  const auto range = qat::quant::quant_range(precision);
  const double scale = qat::quant::compute_scales({bound}, precision).scales.at(0);
  if (values.empty()) {
    for (double f : {-1.25, -1.0, -0.75, -0.5, -0.3, -0.1, 0.0, 0.1, 0.3, 0.5, 0.75, 1.0, 1.25}) {
      values.push_back(f * bound);
    }
  }
  std::cout << "# precision=" << precision.describe() << " range=[" << range.lo << "," << range.hi
            << "] bound=" << format_double(bound) << " scale=" << format_double(scale) << '\n';
  std::cout << "input,scaled,clipped,rounded,rescaled,error\n";
  for (double x : values) {
    const double scaled = x * scale;
    const double clipped = std::clamp(scaled, static_cast<double>(range.lo), static_cast<double>(range.hi));
    const double rounded = qat::quant::quantize_level(x, scale, range);
    const double rescaled = rounded / scale;
    std::cout << format_double(x) << ',' << format_double(scaled) << ',' << format_double(clipped) << ','
              << format_double(rounded) << ',' << format_double(rescaled) << ',' << format_double(rescaled - x)
              << '\n';
  }
  return kExitOk;
}

int cmd_manifest(const std::string& arch, double multiplier, const std::string& preset, std::size_t resolution,
                 const std::string& out_path) {
  qat::model::ResNetSpec spec;
  if (arch == "resnet50") {
    spec = qat::model::ResNetSpec::resnet50(multiplier);
  } else if (arch == "mini") {
    spec = qat::model::ResNetSpec::mini(multiplier);
  } else {
    throw qat::run::ConfigError("--arch must be resnet50 or mini");
  }
  if (resolution) spec.input_resolution = resolution;
  const auto p = qat::model::parse_preset(preset);
  // Shapes do not depend on weights; build in float with a fixed seed.
  const qat::model::ResNet<float> m(spec, qat::model::LayerQuantConfig::from_preset(p), 0);
  const auto shapes = m.layer_shapes(spec.input_resolution, 1);
  const auto j = qat::cost::manifest_to_json(arch + "_c" + format_double(multiplier) + "_" + preset, shapes);
  if (out_path.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + out_path + "'");
    out << j.dump(2) << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantization-aware training tradeoff toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  auto* train = app.add_subcommand("train", "Train one configuration");
  train->add_option("--config", config_path, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--out-dir", out_dir, "Override output.dir");

  std::string grid_path, sweep_out;
  std::size_t workers = 0;
  auto* sweep = app.add_subcommand("sweep", "Run a multiplier x preset grid");
  sweep->add_option("--grid", grid_path, "Grid JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", sweep_out, "Output directory")->required();
  sweep->add_option("--workers", workers, "Concurrent runs (default: grid value or 1)")->check(CLI::PositiveNumber);

  std::string manifest_path, cost_model;
  auto* cost = app.add_subcommand("cost", "Cost report for a layer manifest");
  cost->add_option("--manifest", manifest_path, "Layer manifest JSON")->required()->check(CLI::ExistingFile);
  cost->add_option("--model", cost_model, "linear | quadratic")
      ->required()
      ->check(CLI::IsMember({"linear", "quadratic"}));

  std::string results_path, pareto_cost, pareto_out, metric = "top1";
  auto* pareto = app.add_subcommand("pareto", "Pareto frontier of a results file");
  pareto->add_option("--results", results_path, "Results CSV")->required()->check(CLI::ExistingFile);
  pareto->add_option("--cost", pareto_cost, "linear | quadratic | memory")
      ->required()
      ->check(CLI::IsMember({"linear", "quadratic", "memory"}));
  pareto->add_option("--out", pareto_out, "Frontier CSV (curves go to <stem>_curves.csv)")->required();
  pareto->add_option("--metric", metric, "top1 | eval_logloss")->check(CLI::IsMember({"top1", "eval_logloss"}));

  int bits = 8;
  bool demo_signed = false, demo_unsigned = false;
  double bound = 1.0;
  std::vector<double> values;
  auto* demo = app.add_subcommand("quantize-demo", "Print the quantization staircase for sample values");
  demo->add_option("--bits", bits, "Bit width")->required();
  auto* sflag = demo->add_flag("--signed", demo_signed, "Signed range");
  auto* uflag = demo->add_flag("--unsigned", demo_unsigned, "Unsigned range");
  sflag->excludes(uflag);
  demo->add_option("--bound", bound, "Clipping bound")->check(CLI::NonNegativeNumber);
  demo->add_option("--values", values, "Comma separated inputs")->delimiter(',');

  std::string arch = "resnet50", preset = "baseline", manifest_out;
  double multiplier = 1.0;
  std::size_t resolution = 0;
  auto* manifest = app.add_subcommand("manifest", "Export the layer manifest of a model");
  manifest->add_option("--arch", arch, "resnet50 | mini")->check(CLI::IsMember({"resnet50", "mini"}));
  manifest->add_option("--multiplier", multiplier, "Filter multiplier")->check(CLI::PositiveNumber);
  manifest->add_option("--preset", preset, "Quantization preset");
  manifest->add_option("--resolution", resolution, "Input resolution (default: architecture's)");
  manifest->add_option("--out", manifest_out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
    if (*demo && demo_signed == demo_unsigned) throw CLI::ValidationError("quantize-demo needs --signed or --unsigned");
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*train) return cmd_train(config_path, out_dir);
    if (*sweep) return cmd_sweep(grid_path, sweep_out, workers);
    if (*cost) return cmd_cost(manifest_path, cost_model);
    if (*pareto) return cmd_pareto(results_path, pareto_cost, metric, pareto_out);
    if (*demo) return cmd_quantize_demo(bits, demo_signed, bound, values);
    if (*manifest) return cmd_manifest(arch, multiplier, preset, resolution, manifest_out);
  } catch (const qat::run::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
