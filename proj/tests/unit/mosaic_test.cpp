// Copyright 2026 The p2d Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mosaic_probe.hpp"
#include "p2d/mosaic.hpp"

namespace p2d {
namespace {

RasterGrid field(std::size_t rows, std::size_t cols, double (*f)(double, double)) {
  RasterGrid g(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) g(r, c) = static_cast<float>(f(double(r), double(c)));
  return g;
}

double linear(double r, double c) { return 120.0 + 0.75 * c - 0.4 * r; }
double smooth(double r, double c) {
  return 30.0 * std::sin(c / 15.0) * std::cos(r / 20.0) + 0.5 * c;
}

MosaicResult blend_plan(const RasterGrid& truth, const TilePlan& plan, bool ordered,
                        double offset_sigma = 0.0, unsigned seed = 0) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> off(0.0, offset_sigma > 0 ? offset_sigma : 1.0);
  BlendAccumulator acc(truth, ordered);
  for (const auto& p : plan.placements) {
    auto tile = extract_tile(truth, p, plan.tile_size);
    if (offset_sigma > 0) {
      const auto b = static_cast<float>(off(rng));
      for (auto& v : tile.values()) v += b;
    }
    acc.accumulate_patch(tile, p);
  }
  return finalize(acc);
}

TEST(BlendMask, FiveByFiveValues) {
  const auto m = blend_mask(5, 5);
  EXPECT_EQ(m[12], 1.0);
  EXPECT_EQ(m[6], 0.5);
  EXPECT_EQ(m[8], 0.5);
  EXPECT_EQ(m[0], kBlendFloor);
  EXPECT_EQ(m[2], kBlendFloor);
  EXPECT_EQ(m[24], kBlendFloor);
}

TEST(BlendMask, DegenerateAndSymmetric) {
  for (double v : blend_mask(1, 7)) EXPECT_EQ(v, kBlendFloor);
  for (double v : blend_mask(2, 9)) EXPECT_EQ(v, kBlendFloor);
  const auto thin = blend_mask(3, 7);
  EXPECT_EQ(thin[7 + 3], 1.0);
  EXPECT_THROW(blend_mask(0, 3), std::invalid_argument);

  for (std::size_t n : {4u, 7u, 64u}) {
    const auto m = blend_mask(n, n);
    double peak = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double v = m[i * n + j];
        peak = std::max(peak, v);
        EXPECT_GT(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_EQ(v, m[j * n + i]);
        EXPECT_EQ(v, m[(n - 1 - i) * n + j]);
        EXPECT_EQ(v, m[i * n + (n - 1 - j)]);
      }
    }
    EXPECT_EQ(peak, 1.0);
  }
}

TEST(Accumulate, SinglePatchReproducedExactly) {
  std::mt19937 rng(1);
  std::normal_distribution<float> d(0.0f, 50.0f);
  RasterGrid g(9, 11, 2.0);
  for (auto& v : g.values()) v = d(rng);
  BlendAccumulator acc(g);
  acc.accumulate_patch(g, {0, 0});
  const auto out = finalize(acc);
  EXPECT_EQ(out.uncovered, 0u);
  EXPECT_EQ(out.dem.values()[0], g.values()[0]);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(out.dem.values()[i], g.values()[i], 1e-4);
  EXPECT_EQ(out.dem.cell_size(), 2.0);
}

TEST(Accumulate, RejectsOutOfBoundsAndSkipsNodata) {
  BlendAccumulator acc(10, 10);
  EXPECT_THROW(acc.accumulate_patch(RasterGrid(4, 4), {7, 0}), std::out_of_range);
  RasterGrid p(4, 4, 1.0, 3.0f);
  p(1, 1) = p.nodata();
  acc.accumulate_patch(p, {0, 0});
  const auto out = finalize(acc);
  EXPECT_TRUE(out.dem.is_nodata(1, 1));
  EXPECT_EQ(out.dem(2, 2), 3.0f);
  EXPECT_EQ(out.uncovered, 100u - 15u);
}

TEST(Accumulate, DisagreeingPatchesCrossMonotonically) {
  BlendAccumulator acc(8, 24);
  acc.accumulate_patch(RasterGrid(8, 16, 1.0, 0.0f), {0, 0});
  acc.accumulate_patch(RasterGrid(8, 16, 1.0, 1.0f), {0, 8});
  const auto out = finalize(acc).dem;
  for (std::size_t c = 1; c < 24; ++c) EXPECT_GE(out(4, c), out(4, c - 1));
  EXPECT_EQ(out(4, 0), 0.0f);
  EXPECT_EQ(out(4, 23), 1.0f);
}

TEST(Accumulate, ConvexCombinationOfPatches) {
  std::mt19937 rng(4);
  std::uniform_real_distribution<float> u(-5.0f, 5.0f);
  const auto plan = make_tile_plan(40, 40, 16, 6);
  std::vector<RasterGrid> patches;
  BlendAccumulator acc(40, 40);
  for (const auto& p : plan.placements) {
    RasterGrid t(16, 16);
    for (auto& v : t.values()) v = u(rng);
    acc.accumulate_patch(t, p);
    patches.push_back(t);
  }
  const auto out = finalize(acc).dem;
  for (std::size_t r = 0; r < 40; ++r) {
    for (std::size_t c = 0; c < 40; ++c) {
      float lo = 1e30f, hi = -1e30f;
      for (std::size_t k = 0; k < patches.size(); ++k) {
        const auto& p = plan.placements[k];
        if (r < p.row || c < p.col || r >= p.row + 16 || c >= p.col + 16) continue;
        lo = std::min(lo, patches[k](r - p.row, c - p.col));
        hi = std::max(hi, patches[k](r - p.row, c - p.col));
      }
      EXPECT_GE(out(r, c), lo - 1e-5f);
      EXPECT_LE(out(r, c), hi + 1e-5f);
    }
  }
}

TEST(Finalize, LinearFieldAndConstantField) {
  const auto lin = field(100, 130, linear);
  const auto plan = make_tile_plan(lin, 64, 16);
  const auto out = blend_plan(lin, plan, false);
  EXPECT_EQ(out.uncovered, 0u);
  double worst = 0;
  for (std::size_t i = 0; i < lin.size(); ++i)
    worst = std::max(worst, std::abs(double(out.dem.values()[i]) - double(lin.values()[i])));
  EXPECT_LT(worst, 1e-4);

  const RasterGrid flat(100, 130, 1.0, 1438.25f);
  const auto fo = blend_plan(flat, plan, false);
  for (auto v : fo.dem.values()) EXPECT_EQ(v, 1438.25f);
}

TEST(Finalize, OrderedModeIsInsertionOrderIndependent) {
  const auto g = field(100, 100, smooth);
  const auto plan = make_tile_plan(g, 64, 16);
  std::vector<RasterGrid> tiles;
  for (const auto& p : plan.placements) {
    auto t = extract_tile(g, p, 64);
    for (auto& v : t.values()) v += static_cast<float>(p.row) * 0.01f;
    tiles.push_back(t);
  }
  auto run = [&](std::vector<std::size_t> order) {
    BlendAccumulator acc(g, true);
    for (auto k : order) acc.accumulate_patch(tiles[k], plan.placements[k]);
    return finalize(acc).dem;
  };
  std::vector<std::size_t> order(tiles.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto ref = run(order);
  std::mt19937 rng(6);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(order.begin(), order.end(), rng);
    const auto other = run(order);
    ASSERT_TRUE(std::equal(ref.values().begin(), ref.values().end(), other.values().begin()));
  }
}

TEST(Finalize, NoSeamsOnSmoothField) {
  const auto g = field(160, 160, smooth);
  const auto plan = make_tile_plan(g, 64, 16);
  for (unsigned seed = 0; seed < 20; ++seed) {
    const auto out = blend_plan(g, plan, true, 0.1, seed);
    EXPECT_LT(test::seam_ratio(out.dem, plan), 1.5);
  }
}

TEST(Finalize, SeamProbeFlagsHardCuts) {
  // Last-writer-wins pasting of offset patches leaves visible steps.
  const auto g = field(160, 160, smooth);
  const auto plan = make_tile_plan(g, 64, 16);
  std::mt19937 rng(2);
  std::normal_distribution<double> off(0.0, 0.1);
  RasterGrid pasted = g;
  for (const auto& p : plan.placements) {
    const auto b = static_cast<float>(off(rng));
    for (std::size_t r = 0; r < 64; ++r)
      for (std::size_t c = 0; c < 64; ++c) pasted(p.row + r, p.col + c) = g(p.row + r, p.col + c) + b;
  }
  EXPECT_GT(test::seam_ratio(pasted, plan), 1.5);
}

}  // namespace
}  // namespace p2d
