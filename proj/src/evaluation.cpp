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

#include "p2d/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace p2d {
namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

void require_aligned(const RasterGrid& a, const RasterGrid& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": grids have different dimensions");
  }
}

bool in_region(RegionMask region, std::size_t i) {
  return region == nullptr || (!region->is_nodata_index(i) && region->values()[i] != 0.0f);
}

/// Accumulates |d| and d^2 over participating cells.
template <typename DiffFn>
ErrorPair reduce_errors(std::size_t n, RegionMask region, DiffFn diff, const char* what) {
  double abs_sum = 0.0, sq_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!in_region(region, i)) continue;
    double d = 0.0;
    if (!diff(i, d)) continue;
    abs_sum += std::abs(d);
    sq_sum += d * d;
    ++count;
  }
  if (count == 0) throw EmptyRegionError(std::string(what) + ": no valid cells in region");
  const auto nd = static_cast<double>(count);
  return {abs_sum / nd, std::sqrt(sq_sum / nd)};
}

ErrorPair elevation_errors(const RasterGrid& truth, const RasterGrid& pred, RegionMask region,
                           const char* what) {
  require_aligned(truth, pred, what);
  if (region) require_aligned(truth, *region, what);
  return reduce_errors(truth.size(), region, [&](std::size_t i, double& d) {
    if (truth.is_nodata_index(i) || pred.is_nodata_index(i)) return false;
    d = static_cast<double>(pred.values()[i]) - static_cast<double>(truth.values()[i]);
    return true;
  }, what);
}

}  // namespace

double mae(const RasterGrid& truth, const RasterGrid& pred, RegionMask region) {
  return elevation_errors(truth, pred, region, "mae").mae;
}

double rmse(const RasterGrid& truth, const RasterGrid& pred, RegionMask region) {
  return elevation_errors(truth, pred, region, "rmse").rmse;
}

SurfaceGradient surface_gradient(const RasterGrid& dem) {
  const std::size_t rows = dem.rows(), cols = dem.cols();
  const double cs = dem.cell_size();
  SurfaceGradient g{RasterGrid(rows, cols, cs), RasterGrid(rows, cols, cs)};
  g.dz_dx.copy_georef(dem);
  g.dz_dy.copy_georef(dem);
  const float nd = dem.nodata();

  // Difference along one axis at index k of n; `at` reads the grid.
  auto partial = [&](std::size_t k, std::size_t n, auto at, double& out) {
    if (n < 2) {
      out = 0.0;
      return !(at(k) == nd);
    }
    const std::size_t lo = k == 0 ? 0 : k - 1;
    const std::size_t hi = k + 1 == n ? k : k + 1;
    const float a = at(lo), b = at(hi);
    if (a == nd || b == nd || at(k) == nd) return false;
    out = (static_cast<double>(b) - static_cast<double>(a)) / (static_cast<double>(hi - lo) * cs);
    return true;
  };

  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double dx = 0.0, dy_down = 0.0;
      const bool okx = partial(c, cols, [&](std::size_t k) { return dem(r, k); }, dx);
      const bool oky = partial(r, rows, [&](std::size_t k) { return dem(k, c); }, dy_down);
      if (okx && oky) {
        g.dz_dx(r, c) = static_cast<float>(dx);
        // Rows increase southward, so the northward partial flips sign.
        g.dz_dy(r, c) = static_cast<float>(-dy_down);
      } else {
        g.dz_dx(r, c) = nd;
        g.dz_dy(r, c) = nd;
      }
    }
  }
  return g;
}

RasterGrid slope_map(const RasterGrid& dem) {
  const auto g = surface_gradient(dem);
  RasterGrid out = g.dz_dx;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (g.dz_dx.is_nodata_index(i)) continue;
    const double m = std::hypot(static_cast<double>(g.dz_dx.values()[i]),
                                static_cast<double>(g.dz_dy.values()[i]));
    out.values()[i] = static_cast<float>(std::atan(m) * kRadToDeg);
  }
  return out;
}

RasterGrid aspect_map(const RasterGrid& dem) {
  const auto g = surface_gradient(dem);
  RasterGrid out = g.dz_dx;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (g.dz_dx.is_nodata_index(i)) continue;
    const double gx = g.dz_dx.values()[i], gy = g.dz_dy.values()[i];
    if (gx == 0.0 && gy == 0.0) {
      out.values()[i] = out.nodata();
      continue;
    }
    double a = std::atan2(-gx, -gy) * kRadToDeg;
    if (a < 0.0) a += 360.0;
    if (a >= 360.0) a -= 360.0;
    out.values()[i] = static_cast<float>(a);
  }
  return out;
}

ErrorPair aspect_error(const RasterGrid& truth_aspect, const RasterGrid& pred_aspect,
                       RegionMask region, AspectDifference mode) {
  require_aligned(truth_aspect, pred_aspect, "aspect_error");
  if (region) require_aligned(truth_aspect, *region, "aspect_error");
  return reduce_errors(truth_aspect.size(), region, [&](std::size_t i, double& d) {
    if (truth_aspect.is_nodata_index(i) || pred_aspect.is_nodata_index(i)) return false;
    d = std::abs(static_cast<double>(truth_aspect.values()[i]) -
                 static_cast<double>(pred_aspect.values()[i]));
    if (mode == AspectDifference::kCircular) d = std::min(d, 360.0 - d);
    return true;
  }, "aspect_error");
}

DistributionStats distribution_stats(const RasterGrid& dem) {
  DistributionStats s;
  double sum = 0.0;
  for (std::size_t i = 0; i < dem.size(); ++i) {
    if (dem.is_nodata_index(i)) continue;
    sum += dem.values()[i];
    ++s.count;
  }
  if (s.count < 4) throw std::invalid_argument("distribution_stats: fewer than 4 valid cells");
  const auto n = static_cast<double>(s.count);
  s.mean = sum / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (std::size_t i = 0; i < dem.size(); ++i) {
    if (dem.is_nodata_index(i)) continue;
    const double d = dem.values()[i] - s.mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  s.stddev = std::sqrt(m2 / (n - 1.0));
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (m2 == 0.0) {
    s.degenerate = true;
    s.skewness = s.kurtosis = s.bimodality = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.skewness = m3 / std::pow(m2, 1.5);
  s.kurtosis = m4 / (m2 * m2);
  s.bimodality = (s.skewness * s.skewness + 1.0) / s.kurtosis;
  return s;
}

namespace {

nlohmann::ordered_json pair_json(const ErrorPair& e) {
  return {{"mae", e.mae}, {"rmse", e.rmse}};
}

nlohmann::ordered_json quantity_json(const QuantityErrors& q) {
  return {{"candidate", pair_json(q.candidate)}, {"baseline", pair_json(q.baseline)}};
}

nlohmann::ordered_json stats_json(const DistributionStats& s) {
  nlohmann::ordered_json j{{"count", s.count}, {"mean", s.mean}, {"std", s.stddev}};
  if (s.degenerate) {
    j["skewness"] = nullptr;
    j["kurtosis"] = nullptr;
    j["bimodality"] = nullptr;
  } else {
    j["skewness"] = s.skewness;
    j["kurtosis"] = s.kurtosis;
    j["bimodality"] = s.bimodality;
  }
  j["degenerate"] = s.degenerate;
  return j;
}

nlohmann::ordered_json seg_json(const SegmentationMetrics& m) {
  return {{"iou", m.iou},           {"precision", m.precision}, {"recall", m.recall},
          {"f1", m.f1},             {"accuracy", m.accuracy},   {"tp", m.tp},
          {"fp", m.fp},             {"fn", m.fn},               {"tn", m.tn},
          {"undefined_ratio", m.undefined_ratio}};
}

}  // namespace

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = schema_version;
  j["region"] = region;
  j["elevation_m"] = quantity_json(elevation);
  j["slope_deg"] = quantity_json(slope);
  j["aspect_deg"] = quantity_json(aspect);
  j["distribution"] = {{"truth", stats_json(truth_stats)},
                       {"candidate", stats_json(candidate_stats)},
                       {"baseline", stats_json(baseline_stats)}};
  nlohmann::ordered_json s = nlohmann::ordered_json::array();
  for (const auto& c : streams) {
    s.push_back({{"radius_cells", c.radius_cells},
                 {"radius_m", c.radius_m},
                 {"candidate", seg_json(c.candidate)},
                 {"baseline", seg_json(c.baseline)}});
  }
  j["streams"] = {{"threshold_cells", stream_threshold}, {"buffers", s}};
  return j;
}

std::string EvalReport::table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %-6s %12s %12s\n", "Quantity", "Metric", "Candidate",
                "Baseline");
  os << line;
  const std::pair<const char*, const QuantityErrors*> rows[] = {
      {"Elevation (m)", &elevation}, {"Slope (deg)", &slope}, {"Aspect (deg)", &aspect}};
  for (const auto& [name, q] : rows) {
    std::snprintf(line, sizeof line, "%-14s %-6s %12.4f %12.4f\n", name, "MAE", q->candidate.mae,
                  q->baseline.mae);
    os << line;
    std::snprintf(line, sizeof line, "%-14s %-6s %12.4f %12.4f\n", "", "RMSE", q->candidate.rmse,
                  q->baseline.rmse);
    os << line;
  }
  for (const auto& c : streams) {
    std::snprintf(line, sizeof line, "Stream IoU @ %.2f m   %12.4f %12.4f\n", c.radius_m,
                  c.candidate.iou, c.baseline.iou);
    os << line;
  }
  return os.str();
}

bool EvalReport::candidate_beats_baseline() const {
  return elevation.candidate.rmse < elevation.baseline.rmse;
}

EvalReport compare_report(const RasterGrid& truth, const RasterGrid& candidate,
                          const RasterGrid& baseline, RegionMask region,
                          const StreamConfig& streams, const std::string& region_name) {
  require_aligned(truth, candidate, "compare_report");
  require_aligned(truth, baseline, "compare_report");
  EvalReport rep;
  rep.region = region_name;
  rep.elevation.candidate = elevation_errors(truth, candidate, region, "elevation");
  rep.elevation.baseline = elevation_errors(truth, baseline, region, "elevation");

  const RasterGrid ts = slope_map(truth), cs = slope_map(candidate), bs = slope_map(baseline);
  rep.slope.candidate = elevation_errors(ts, cs, region, "slope");
  rep.slope.baseline = elevation_errors(ts, bs, region, "slope");

  const RasterGrid ta = aspect_map(truth), ca = aspect_map(candidate), ba = aspect_map(baseline);
  auto aspect_or_zero = [&](const RasterGrid& pred) {
    try {
      return aspect_error(ta, pred, region);
    } catch (const EmptyRegionError&) {
      return ErrorPair{};  // every cell flat in one of the inputs
    }
  };
  rep.aspect.candidate = aspect_or_zero(ca);
  rep.aspect.baseline = aspect_or_zero(ba);

  rep.truth_stats = distribution_stats(truth);
  rep.candidate_stats = distribution_stats(candidate);
  rep.baseline_stats = distribution_stats(baseline);

  if (streams.enabled) {
    rep.stream_threshold =
        streams.threshold ? streams.threshold : default_stream_threshold(truth.size());
    const StreamMask tm = stream_network(truth, rep.stream_threshold).streams;
    const StreamMask cm = stream_network(candidate, rep.stream_threshold).streams;
    const StreamMask bm = stream_network(baseline, rep.stream_threshold).streams;
    const double cell = truth.cell_size();
    for (double rc : streams.radii_cells) {
      StreamComparison sc;
      sc.radius_cells = rc;
      sc.radius_m = rc * cell;
      const StreamMask tb = buffer_mask(tm, sc.radius_m, cell);
      sc.candidate = segmentation_metrics(buffer_mask(cm, sc.radius_m, cell), tb);
      sc.baseline = segmentation_metrics(buffer_mask(bm, sc.radius_m, cell), tb);
      rep.streams.push_back(sc);
    }
  }
  return rep;
}

}  // namespace p2d
