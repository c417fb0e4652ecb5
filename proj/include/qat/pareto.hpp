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

// Pareto frontier of (cost, accuracy) points: lower cost and higher accuracy
// are better. Loss-style metrics are negated on ingestion so there is only
// one comparison direction.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qat::pareto {

struct TradeoffPoint {
  double cost = 0.0;
  double accuracy = 0.0;
  std::string label;    // unique per point set
  std::string setting;  // quantization preset of the run, for per-setting curves
  double multiplier = 0.0;
};

enum class Direction { HigherIsBetter, LowerIsBetter };

inline TradeoffPoint make_point(double cost, double metric, Direction dir, std::string label,
                                std::string setting = {}, double multiplier = 0.0) {
  return {cost, dir == Direction::HigherIsBetter ? metric : -metric, std::move(label), std::move(setting),
          multiplier};
}

inline bool dominates(const TradeoffPoint& a, const TradeoffPoint& b) noexcept {
  return a.cost <= b.cost && a.accuracy >= b.accuracy && (a.cost < b.cost || a.accuracy > b.accuracy);
}

struct Frontier {
  std::vector<TradeoffPoint> points;  // ascending cost, ascending accuracy
};

inline void validate_points(std::span<const TradeoffPoint> points) {
  std::set<std::string> labels;
  for (const auto& p : points) {
    if (!(p.cost > 0.0) || !std::isfinite(p.cost)) {
      throw std::invalid_argument("tradeoff point '" + p.label + "' has non-positive or non-finite cost");
    }
    if (!std::isfinite(p.accuracy)) {
      throw std::invalid_argument("tradeoff point '" + p.label + "' has non-finite accuracy");
    }
    if (!labels.insert(p.label).second) {
      throw std::invalid_argument("duplicate tradeoff point label '" + p.label + "'");
    }
  }
}

// Sort by cost, then sweep keeping points that beat the best accuracy seen.
// Exact duplicates collapse onto the lexicographically first label.
inline Frontier pareto_frontier(std::span<const TradeoffPoint> points) {
  if (points.empty()) throw std::invalid_argument("pareto_frontier: empty point set");
  validate_points(points);
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    const auto& a = points[i];
    const auto& b = points[j];
    if (a.cost != b.cost) return a.cost < b.cost;
    if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
    return a.label < b.label;
  });
  Frontier f;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i : order) {
    if (points[i].accuracy > best) {
      f.points.push_back(points[i]);
      best = points[i].accuracy;
    }
  }
  return f;
}

// One curve per setting: all of its points by ascending cost.
inline std::map<std::string, std::vector<TradeoffPoint>> setting_curves(std::span<const TradeoffPoint> points) {
  std::map<std::string, std::vector<TradeoffPoint>> curves;
  for (const auto& p : points) curves[p.setting].push_back(p);
  for (auto& [_, c] : curves) {
    std::sort(c.begin(), c.end(), [](const auto& a, const auto& b) {
      return a.cost != b.cost ? a.cost < b.cost : a.label < b.label;
    });
  }
  return curves;
}

inline void write_frontier_csv(std::ostream& os, const Frontier& f) {
  os.precision(17);
  os << "label,setting,multiplier,cost,accuracy\n";
  for (const auto& p : f.points) {
    os << p.label << ',' << p.setting << ',' << p.multiplier << ',' << p.cost << ',' << p.accuracy << '\n';
  }
}

inline void write_curves_csv(std::ostream& os, std::span<const TradeoffPoint> points) {
  os.precision(17);
  os << "setting,label,multiplier,cost,accuracy,on_setting_frontier\n";
  for (const auto& [setting, curve] : setting_curves(points)) {
    const Frontier local = pareto_frontier(curve);
    std::set<std::string> on;
    for (const auto& p : local.points) on.insert(p.label);
    for (const auto& p : curve) {
      os << setting << ',' << p.label << ',' << p.multiplier << ',' << p.cost << ',' << p.accuracy << ','
         << (on.count(p.label) ? 1 : 0) << '\n';
    }
  }
}

}  // namespace qat::pareto
