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

#ifndef P2D_MOSAIC_HPP_
#define P2D_MOSAIC_HPP_

#include <cstddef>
#include <utility>
#include <vector>

#include "p2d/raster.hpp"

namespace p2d {

inline constexpr double kBlendFloor = 1e-3;

/// Row-major h x w weights: min distance to the patch border divided by
/// M = floor((min(h,w)-1)/2) (1 when that is 0), floored at kBlendFloor.
std::vector<double> blend_mask(std::size_t h, std::size_t w);

/// Running weighted sums for one mosaic. Sums are 64-bit so the result does
/// not depend on how many patches overlap a pixel beyond rounding of the
/// final division.
class BlendAccumulator {
 public:
  /// `georef` fixes dimensions, cell size, origin and nodata of the output.
  /// With `ordered`, patches are buffered and summed in sorted placement
  /// order at finalize, so the result is bit-identical for any insertion
  /// order.
  explicit BlendAccumulator(const RasterGrid& georef, bool ordered = false);
  BlendAccumulator(std::size_t rows, std::size_t cols, double cell_size = 1.0,
                   bool ordered = false);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool ordered() const { return ordered_; }
  /// Sums of patches applied so far (buffered patches excluded).
  const std::vector<double>& value_sum() const { return value_sum_; }
  const std::vector<double>& weight_sum() const { return weight_sum_; }

  /// Adds weight * value over the patch footprint. Nodata patch cells are
  /// skipped. Throws std::out_of_range if the patch does not fit.
  void accumulate_patch(const RasterGrid& patch, TilePlacement placement);

 private:
  friend struct MosaicResult finalize(const BlendAccumulator& acc);
  void apply(const RasterGrid& patch, TilePlacement placement, std::vector<double>& values,
             std::vector<double>& weights) const;

  std::size_t rows_ = 0, cols_ = 0;
  bool ordered_ = false;
  RasterGrid georef_;
  std::vector<std::pair<TilePlacement, RasterGrid>> pending_;
  std::vector<double> value_sum_;
  std::vector<double> weight_sum_;
};

struct MosaicResult {
  RasterGrid dem;
  /// Pixels that received no weight (written as nodata).
  std::size_t uncovered = 0;
};

MosaicResult finalize(const BlendAccumulator& acc);

}  // namespace p2d

#endif  // P2D_MOSAIC_HPP_
