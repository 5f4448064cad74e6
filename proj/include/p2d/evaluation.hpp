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

#ifndef P2D_EVALUATION_HPP_
#define P2D_EVALUATION_HPP_

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "p2d/hydrology.hpp"
#include "p2d/raster.hpp"

namespace p2d {

/// Thrown when a metric has no cells to average over.
class EmptyRegionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Optional region restriction: cells where the mask is nonzero (and not
/// nodata) participate.
using RegionMask = const RasterGrid*;

double mae(const RasterGrid& truth, const RasterGrid& pred, RegionMask region = nullptr);
double rmse(const RasterGrid& truth, const RasterGrid& pred, RegionMask region = nullptr);

struct SurfaceGradient {
  RasterGrid dz_dx;  // towards +x (east, increasing column)
  RasterGrid dz_dy;  // towards +y (north, decreasing row)
};

/// Central differences over 2 * cell_size, one-sided on the border. Cells
/// whose stencil touches nodata become nodata.
SurfaceGradient surface_gradient(const RasterGrid& dem);

/// atan(|grad z|) in degrees.
RasterGrid slope_map(const RasterGrid& dem);

/// Downslope direction, degrees clockwise from north in [0, 360);
/// nodata where both partials are exactly zero.
RasterGrid aspect_map(const RasterGrid& dem);

enum class AspectDifference { kCircular, kLinear };

struct ErrorPair {
  double mae = 0.0;
  double rmse = 0.0;
};

/// Circular difference min(|a-b|, 360-|a-b|) by default; cells where either
/// aspect is nodata are excluded.
ErrorPair aspect_error(const RasterGrid& truth_aspect, const RasterGrid& pred_aspect,
                       RegionMask region = nullptr,
                       AspectDifference mode = AspectDifference::kCircular);

struct DistributionStats {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // n-1 denominator
  double skewness = 0.0;
  double kurtosis = 0.0;     // Pearson (non-excess)
  double bimodality = 0.0;   // (g1^2 + 1) / g2
  bool degenerate = false;   // zero variance: higher moments undefined
};

DistributionStats distribution_stats(const RasterGrid& dem);

struct StreamConfig {
  /// Accumulation threshold in cells; 0 selects 0.5% of the cell count.
  std::size_t threshold = 0;
  /// Buffer radii in cells (meters = radius * cell_size).
  std::vector<double> radii_cells{1.0, 2.0, 5.0};
  bool enabled = true;
};

struct QuantityErrors {
  ErrorPair candidate;
  ErrorPair baseline;
};

struct StreamComparison {
  double radius_cells = 0.0;
  double radius_m = 0.0;
  SegmentationMetrics candidate;
  SegmentationMetrics baseline;
};

struct EvalReport {
  int schema_version = 1;
  std::string region = "all";
  QuantityErrors elevation;
  QuantityErrors slope;
  QuantityErrors aspect;
  DistributionStats truth_stats, candidate_stats, baseline_stats;
  std::size_t stream_threshold = 0;
  std::vector<StreamComparison> streams;

  nlohmann::ordered_json to_json() const;
  /// Row layout Elevation/Slope/Aspect x MAE/RMSE, candidate then baseline.
  std::string table() const;
  bool candidate_beats_baseline() const;
};

/// Runs every metric for candidate-vs-truth and baseline-vs-truth. `region`
/// (e.g. a void mask) restricts elevation, slope and aspect errors; stream
/// metrics always use the full extent.
EvalReport compare_report(const RasterGrid& truth, const RasterGrid& candidate,
                          const RasterGrid& baseline, RegionMask region,
                          const StreamConfig& streams, const std::string& region_name = "all");

}  // namespace p2d

#endif  // P2D_EVALUATION_HPP_
