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

#ifndef P2D_HYDROLOGY_HPP_
#define P2D_HYDROLOGY_HPP_

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "p2d/raster.hpp"

namespace p2d {

/// D8 direction codes: E, SE, S, SW, W, NW, N, NE. 0 marks an outlet or a
/// nodata cell.
enum D8Code : std::uint8_t {
  kOutlet = 0,
  kEast = 1,
  kSouthEast = 2,
  kSouth = 4,
  kSouthWest = 8,
  kWest = 16,
  kNorthWest = 32,
  kNorth = 64,
  kNorthEast = 128,
};

struct D8Step {
  std::uint8_t code;
  int drow;
  int dcol;
  double distance;
};

/// Neighbours in ascending code order.
inline constexpr std::array<D8Step, 8> kD8Steps = {{
    {kEast, 0, 1, 1.0},
    {kSouthEast, 1, 1, 1.4142135623730951},
    {kSouth, 1, 0, 1.0},
    {kSouthWest, 1, -1, 1.4142135623730951},
    {kWest, 0, -1, 1.0},
    {kNorthWest, -1, -1, 1.4142135623730951},
    {kNorth, -1, 0, 1.0},
    {kNorthEast, -1, 1, 1.4142135623730951},
}};

/// Row-major grid of small integer-like payloads.
template <typename V>
struct CellGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<V> values;

  CellGrid() = default;
  CellGrid(std::size_t r, std::size_t c, V fill = V{}) : rows(r), cols(c), values(r * c, fill) {}
  V& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  const V& operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::size_t size() const { return values.size(); }
  bool operator==(const CellGrid&) const = default;
};

using FlowDirections = CellGrid<std::uint8_t>;
using FlowAccumulation = CellGrid<std::uint32_t>;

struct StreamMask {
  CellGrid<std::uint8_t> cells;  // 1 = stream
  std::size_t threshold = 0;
  std::size_t count() const;
};

class FlowCycleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr float kFillEpsilon = 1e-4f;

/// Priority-flood depression filling with an epsilon gradient: raised cells
/// end strictly above the cell they spill through, so every valid cell has
/// a strictly descending D8 path to the grid edge (or a nodata hole).
RasterGrid fill_depressions(const RasterGrid& dem, float epsilon = kFillEpsilon);

/// Steepest drop per unit distance; ties go to the smallest code; cells
/// without a strictly lower neighbour get 0.
FlowDirections d8_flow_direction(const RasterGrid& filled);

/// Count of strictly upstream cells; throws FlowCycleError on a cycle.
FlowAccumulation flow_accumulation(const FlowDirections& directions);

StreamMask extract_streams(const FlowAccumulation& accumulation, std::size_t threshold);

/// Cells within `radius` meters (Euclidean, centre to centre) of a stream cell.
StreamMask buffer_mask(const StreamMask& mask, double radius, double cell_size);

struct SegmentationMetrics {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  double iou = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  /// Set when precision, recall or F1 had a zero denominator (reported as 0).
  bool undefined_ratio = false;
};

SegmentationMetrics segmentation_metrics(const StreamMask& pred, const StreamMask& truth);

/// Full chain for one DEM: fill -> directions -> accumulation -> streams.
struct StreamProducts {
  RasterGrid filled;
  FlowDirections directions;
  FlowAccumulation accumulation;
  StreamMask streams;
};
StreamProducts stream_network(const RasterGrid& dem, std::size_t threshold);

/// 0.5% of the cell count, at least 1.
std::size_t default_stream_threshold(std::size_t cells);

/// Conversions to float rasters for export.
RasterGrid to_raster(const FlowDirections& d, const RasterGrid& georef);
RasterGrid to_raster(const FlowAccumulation& a, const RasterGrid& georef);
RasterGrid to_raster(const StreamMask& m, const RasterGrid& georef);
StreamMask mask_from_raster(const RasterGrid& grid);

}  // namespace p2d

#endif  // P2D_HYDROLOGY_HPP_
