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

#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "qat/pareto.hpp"

namespace qat::pareto {
namespace {

// O(n^2) oracle: keep non-dominated points, one per (cost, accuracy) value
// with the smallest label, ordered by cost.
std::vector<std::string> brute_force(const std::vector<TradeoffPoint>& pts) {
  std::vector<const TradeoffPoint*> keep;
  for (const auto& p : pts) {
    bool dominated = false, shadowed = false;
    for (const auto& q : pts) {
      dominated |= dominates(q, p);
      shadowed |= q.cost == p.cost && q.accuracy == p.accuracy && q.label < p.label;
    }
    if (!dominated && !shadowed) keep.push_back(&p);
  }
  std::sort(keep.begin(), keep.end(), [](auto* a, auto* b) { return a->cost < b->cost; });
  std::vector<std::string> out;
  for (auto* p : keep) out.push_back(p->label);
  return out;
}

std::vector<std::string> labels(const Frontier& f) {
  std::vector<std::string> out;
  for (const auto& p : f.points) out.push_back(p.label);
  return out;
}

std::vector<TradeoffPoint> random_points(std::mt19937_64& rng, std::size_t n, int grid) {
  std::uniform_int_distribution<int> d(1, grid);
  std::vector<TradeoffPoint> pts;
  for (std::size_t i = 0; i < n; ++i) {
    pts.push_back({d(rng) / double(grid), d(rng) / double(grid), "p" + std::to_string(i), "s" + std::to_string(i % 3),
                   1.0});
  }
  return pts;
}

TEST(DominanceTest, Definition) {
  const TradeoffPoint a{0.5, 0.7743, "a"}, b{1.0, 0.7665, "b"}, c{0.5, 0.7743, "c"}, d{0.4, 0.70, "d"};
  EXPECT_TRUE(dominates(a, b));
  EXPECT_FALSE(dominates(b, a));
  EXPECT_FALSE(dominates(a, c));
  EXPECT_FALSE(dominates(a, d));
  EXPECT_FALSE(dominates(d, a));
}

TEST(FrontierTest, EightBitDominatesBaseline) {
  const std::vector<TradeoffPoint> pts{{1.0, 76.65, "baseline"}, {0.5, 77.43, "eight_bit"}};
  const auto f = pareto_frontier(pts);
  ASSERT_EQ(f.points.size(), 1u);
  EXPECT_EQ(f.points[0].label, "eight_bit");
}

TEST(FrontierTest, MatchesBruteForce) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    const int grid = trial % 2 ? 5 : 1000;  // coarse grid forces duplicates and ties
    const auto pts = random_points(rng, n, grid);
    EXPECT_EQ(labels(pareto_frontier(pts)), brute_force(pts)) << trial;
  }
}

TEST(FrontierTest, SortedAndStrictlyIncreasing) {
  std::mt19937_64 rng(3);
  const auto f = pareto_frontier(random_points(rng, 500, 50));
  for (std::size_t i = 1; i < f.points.size(); ++i) {
    EXPECT_LT(f.points[i - 1].cost, f.points[i].cost);
    EXPECT_LT(f.points[i - 1].accuracy, f.points[i].accuracy);
  }
}

TEST(FrontierTest, Idempotent) {
  std::mt19937_64 rng(4);
  const auto pts = random_points(rng, 200, 20);
  const auto f1 = pareto_frontier(pts);
  EXPECT_EQ(labels(pareto_frontier(f1.points)), labels(f1));
}

TEST(FrontierTest, InvariantUnderCostRescaling) {
  std::mt19937_64 rng(5);
  auto pts = random_points(rng, 200, 30);
  const auto before = labels(pareto_frontier(pts));
  for (auto& p : pts) p.cost *= 16.0;
  EXPECT_EQ(labels(pareto_frontier(pts)), before);
}

TEST(FrontierTest, DuplicatesCollapseToSmallestLabel) {
  const std::vector<TradeoffPoint> pts{{0.5, 0.8, "z"}, {0.5, 0.8, "a"}, {0.5, 0.8, "m"}};
  EXPECT_EQ(labels(pareto_frontier(pts)), (std::vector<std::string>{"a"}));
}

TEST(FrontierTest, IncomparablePointsAllSurvive) {
  const std::vector<TradeoffPoint> pts{{0.25, 0.6, "a"}, {0.5, 0.7, "b"}, {1.0, 0.8, "c"}};
  EXPECT_EQ(labels(pareto_frontier(pts)), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(FrontierTest, LossMetricIsNegated) {
  const std::vector<TradeoffPoint> pts{make_point(1.0, 0.9, Direction::LowerIsBetter, "base"),
                                       make_point(0.5, 0.7, Direction::LowerIsBetter, "q8"),
                                       make_point(0.25, 1.2, Direction::LowerIsBetter, "q4")};
  EXPECT_EQ(labels(pareto_frontier(pts)), (std::vector<std::string>{"q4", "q8"}));
}

TEST(FrontierTest, RejectsBadInput) {
  EXPECT_THROW(pareto_frontier(std::vector<TradeoffPoint>{}), std::invalid_argument);
  EXPECT_THROW(pareto_frontier(std::vector<TradeoffPoint>{{0.0, 1.0, "a"}}), std::invalid_argument);
  EXPECT_THROW(pareto_frontier(std::vector<TradeoffPoint>{{1.0, NAN, "a"}}), std::invalid_argument);
  EXPECT_THROW(pareto_frontier(std::vector<TradeoffPoint>{{1.0, 1.0, "a"}, {2.0, 2.0, "a"}}),
               std::invalid_argument);
}

TEST(CsvTest, FrontierAndCurves) {
  const std::vector<TradeoffPoint> pts{{1.0, 0.70, "b_c1", "baseline", 1.0},
                                       {0.5, 0.72, "e_c1", "eight_bit", 1.0},
                                       {0.25, 0.65, "e_c05", "eight_bit", 0.5},
                                       {0.3, 0.60, "e_bad", "eight_bit", 0.6}};
  std::ostringstream f;
  write_frontier_csv(f, pareto_frontier(pts));
  EXPECT_EQ(f.str(), "label,setting,multiplier,cost,accuracy\n"
                     "e_c05,eight_bit,0.5,0.25,0.65000000000000002\n"
                     "e_c1,eight_bit,1,0.5,0.71999999999999997\n");
  std::ostringstream c;
  write_curves_csv(c, pts);
  const std::string s = c.str();
  EXPECT_NE(s.find("baseline,b_c1,1,1,0.69999999999999996,1\n"), std::string::npos);
  EXPECT_NE(s.find("eight_bit,e_bad,0.59999999999999998,0.29999999999999999,0.59999999999999998,0\n"),
            std::string::npos);
  EXPECT_LT(s.find("e_c05"), s.find("e_bad"));
  EXPECT_LT(s.find("e_bad"), s.find("e_c1"));
}

}  // namespace
}  // namespace qat::pareto
