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

#include "p2d/mosaic.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace p2d {

std::vector<double> blend_mask(std::size_t h, std::size_t w) {
  if (h == 0 || w == 0) throw std::invalid_argument("blend_mask: empty patch");
  std::size_t m = (std::min(h, w) - 1) / 2;
  if (m == 0) m = 1;
  std::vector<double> out(h * w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const std::size_t d = std::min({i, j, h - 1 - i, w - 1 - j});
      out[i * w + j] = std::max(static_cast<double>(d) / static_cast<double>(m), kBlendFloor);
    }
  }
  return out;
}

BlendAccumulator::BlendAccumulator(const RasterGrid& georef, bool ordered)
    : rows_(georef.rows()),
      cols_(georef.cols()),
      ordered_(ordered),
      georef_(1, 1, georef.cell_size()),
      value_sum_(rows_ * cols_, 0.0),
      weight_sum_(rows_ * cols_, 0.0) {
  georef_.copy_georef(georef);
}

BlendAccumulator::BlendAccumulator(std::size_t rows, std::size_t cols, double cell_size,
                                   bool ordered)
    : BlendAccumulator(RasterGrid(rows, cols, cell_size), ordered) {}

void BlendAccumulator::accumulate_patch(const RasterGrid& patch, TilePlacement placement) {
  if (patch.rows() == 0 || patch.cols() == 0 || placement.row + patch.rows() > rows_ ||
      placement.col + patch.cols() > cols_) {
    throw std::out_of_range("accumulate_patch: " + std::to_string(patch.rows()) + "x" +
                            std::to_string(patch.cols()) + " patch at (" +
                            std::to_string(placement.row) + "," + std::to_string(placement.col) +
                            ") exceeds " + std::to_string(rows_) + "x" + std::to_string(cols_));
  }
  if (ordered_) {
    pending_.emplace_back(placement, patch);
  } else {
    apply(patch, placement, value_sum_, weight_sum_);
  }
}

void BlendAccumulator::apply(const RasterGrid& patch, TilePlacement placement,
                             std::vector<double>& values, std::vector<double>& weights) const {
  const auto mask = blend_mask(patch.rows(), patch.cols());
  for (std::size_t r = 0; r < patch.rows(); ++r) {
    for (std::size_t c = 0; c < patch.cols(); ++c) {
      if (patch.is_nodata(r, c)) continue;
      const double w = mask[r * patch.cols() + c];
      const std::size_t k = (placement.row + r) * cols_ + placement.col + c;
      values[k] += w * static_cast<double>(patch(r, c));
      weights[k] += w;
    }
  }
}

MosaicResult finalize(const BlendAccumulator& acc) {
  std::vector<double> values = acc.value_sum_, weights = acc.weight_sum_;
  if (!acc.pending_.empty()) {
    std::vector<const std::pair<TilePlacement, RasterGrid>*> order;
    for (const auto& p : acc.pending_) order.push_back(&p);
    std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
      if (a->first.row != b->first.row) return a->first.row < b->first.row;
      if (a->first.col != b->first.col) return a->first.col < b->first.col;
      const auto va = a->second.values(), vb = b->second.values();
      return std::lexicographical_compare(va.begin(), va.end(), vb.begin(), vb.end());
    });
    for (const auto* p : order) acc.apply(p->second, p->first, values, weights);
  }
  MosaicResult res;
  res.dem = RasterGrid(acc.rows_, acc.cols_, acc.georef_.cell_size());
  res.dem.copy_georef(acc.georef_);
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (weights[k] > 0.0) {
      res.dem.values()[k] = static_cast<float>(values[k] / weights[k]);
    } else {
      res.dem.values()[k] = res.dem.nodata();
      ++res.uncovered;
    }
  }
  return res;
}

}  // namespace p2d
