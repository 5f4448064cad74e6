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

#include "p2d/hydrology.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <string>
#include <utility>

namespace p2d {
namespace {

bool in_grid(std::ptrdiff_t r, std::ptrdiff_t c, std::size_t rows, std::size_t cols) {
  return r >= 0 && c >= 0 && r < static_cast<std::ptrdiff_t>(rows) &&
         c < static_cast<std::ptrdiff_t>(cols);
}

/// Index of the cell a direction code points at, or npos when it leaves the grid.
constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

std::size_t downstream(std::size_t idx, std::uint8_t code, std::size_t rows, std::size_t cols) {
  for (const auto& s : kD8Steps) {
    if (s.code != code) continue;
    const auto r = static_cast<std::ptrdiff_t>(idx / cols) + s.drow;
    const auto c = static_cast<std::ptrdiff_t>(idx % cols) + s.dcol;
    if (!in_grid(r, c, rows, cols)) return kNone;
    return static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c);
  }
  return kNone;
}

}  // namespace

std::size_t StreamMask::count() const {
  return static_cast<std::size_t>(std::count(cells.values.begin(), cells.values.end(), 1));
}

RasterGrid fill_depressions(const RasterGrid& dem, float epsilon) {
  const std::size_t rows = dem.rows(), cols = dem.cols();
  RasterGrid out = dem;
  using Entry = std::pair<float, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  std::vector<std::uint8_t> closed(dem.size(), 0);

  // Seeds: valid cells on the grid edge or next to a nodata hole.
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (dem.is_nodata(r, c)) {
        closed[r * cols + c] = 1;
        continue;
      }
      bool seed = r == 0 || c == 0 || r + 1 == rows || c + 1 == cols;
      for (const auto& s : kD8Steps) {
        if (seed) break;
        seed = dem.is_nodata(r + s.drow, c + s.dcol);
      }
      if (seed) {
        open.emplace(out(r, c), r * cols + c);
        closed[r * cols + c] = 1;
      }
    }
  }
  if (open.empty()) throw std::invalid_argument("fill_depressions: no valid edge cell");

  while (!open.empty()) {
    const auto [z, idx] = open.top();
    open.pop();
    const auto r = static_cast<std::ptrdiff_t>(idx / cols);
    const auto c = static_cast<std::ptrdiff_t>(idx % cols);
    for (const auto& s : kD8Steps) {
      const auto nr = r + s.drow, nc = c + s.dcol;
      if (!in_grid(nr, nc, rows, cols)) continue;
      const std::size_t n = static_cast<std::size_t>(nr) * cols + static_cast<std::size_t>(nc);
      if (closed[n]) continue;
      closed[n] = 1;
      float& v = out.values()[n];
      if (v <= z) {
        v = z + epsilon;
        if (!(v > z)) v = std::nextafter(z, std::numeric_limits<float>::infinity());
      }
      open.emplace(v, n);
    }
  }
  return out;
}

FlowDirections d8_flow_direction(const RasterGrid& filled) {
  const std::size_t rows = filled.rows(), cols = filled.cols();
  FlowDirections dirs(rows, cols, kOutlet);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (filled.is_nodata(r, c)) continue;
      const double z = filled(r, c);
      double best = 0.0;
      std::uint8_t code = kOutlet;
      for (const auto& s : kD8Steps) {
        const auto nr = static_cast<std::ptrdiff_t>(r) + s.drow;
        const auto nc = static_cast<std::ptrdiff_t>(c) + s.dcol;
        if (!in_grid(nr, nc, rows, cols)) continue;
        const auto ur = static_cast<std::size_t>(nr), uc = static_cast<std::size_t>(nc);
        if (filled.is_nodata(ur, uc)) continue;
        const double drop = (z - filled(ur, uc)) / s.distance;
        if (drop > best) {
          best = drop;
          code = s.code;
        }
      }
      dirs(r, c) = code;
    }
  }
  return dirs;
}

FlowAccumulation flow_accumulation(const FlowDirections& directions) {
  const std::size_t rows = directions.rows, cols = directions.cols, n = directions.size();
  std::vector<std::size_t> next(n, kNone);
  std::vector<std::uint32_t> indegree(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t code = directions.values[i];
    if (code == kOutlet) continue;
    next[i] = downstream(i, code, rows, cols);
    if (next[i] == kNone) {
      bool valid = false;
      for (const auto& s : kD8Steps) valid = valid || s.code == code;
      if (!valid) throw std::invalid_argument("flow_accumulation: invalid direction code " +
                                              std::to_string(code));
      continue;
    }
    ++indegree[next[i]];
  }
  FlowAccumulation acc(rows, cols, 0);
  std::vector<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.push_back(i);
  }
  std::size_t processed = 0;
  while (!ready.empty()) {
    const std::size_t i = ready.back();
    ready.pop_back();
    ++processed;
    const std::size_t j = next[i];
    if (j == kNone) continue;
    acc.values[j] += acc.values[i] + 1;
    if (--indegree[j] == 0) ready.push_back(j);
  }
  if (processed != n) {
    throw FlowCycleError("flow_accumulation: direction grid contains a cycle (" +
                         std::to_string(n - processed) + " cells); fill the DEM first");
  }
  return acc;
}

StreamMask extract_streams(const FlowAccumulation& accumulation, std::size_t threshold) {
  if (threshold < 1) throw std::invalid_argument("extract_streams: threshold must be >= 1");
  StreamMask m;
  m.threshold = threshold;
  m.cells = CellGrid<std::uint8_t>(accumulation.rows, accumulation.cols, 0);
  for (std::size_t i = 0; i < accumulation.size(); ++i) {
    m.cells.values[i] = accumulation.values[i] >= threshold ? 1 : 0;
  }
  return m;
}

StreamMask buffer_mask(const StreamMask& mask, double radius, double cell_size) {
  if (!(radius >= 0.0)) throw std::invalid_argument("buffer_mask: radius must be >= 0");
  if (!(cell_size > 0.0)) throw std::invalid_argument("buffer_mask: cell_size must be > 0");
  const std::size_t rows = mask.cells.rows, cols = mask.cells.cols;
  StreamMask out = mask;
  const double rc = radius / cell_size;
  // Relative slack so that radius = k cells includes the cells at exactly k.
  const double r2 = rc * rc * (1.0 + 1e-12);
  const auto reach = static_cast<std::ptrdiff_t>(std::floor(rc + 1e-9));
  if (reach == 0) return out;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (!mask.cells(r, c)) continue;
      for (std::ptrdiff_t dr = -reach; dr <= reach; ++dr) {
        for (std::ptrdiff_t dc = -reach; dc <= reach; ++dc) {
          if (static_cast<double>(dr * dr + dc * dc) > r2) continue;
          const auto nr = static_cast<std::ptrdiff_t>(r) + dr;
          const auto nc = static_cast<std::ptrdiff_t>(c) + dc;
          if (in_grid(nr, nc, rows, cols)) {
            out.cells(static_cast<std::size_t>(nr), static_cast<std::size_t>(nc)) = 1;
          }
        }
      }
    }
  }
  return out;
}

SegmentationMetrics segmentation_metrics(const StreamMask& pred, const StreamMask& truth) {
  if (pred.cells.rows != truth.cells.rows || pred.cells.cols != truth.cells.cols) {
    throw std::invalid_argument("segmentation_metrics: mask dimensions differ");
  }
  SegmentationMetrics m;
  for (std::size_t i = 0; i < pred.cells.size(); ++i) {
    const bool p = pred.cells.values[i] != 0, t = truth.cells.values[i] != 0;
    if (p && t) ++m.tp;
    else if (p) ++m.fp;
    else if (t) ++m.fn;
    else ++m.tn;
  }
  const auto d = [](std::size_t x) { return static_cast<double>(x); };
  const std::size_t uni = m.tp + m.fp + m.fn;
  m.iou = uni == 0 ? 1.0 : d(m.tp) / d(uni);
  if (m.tp + m.fp > 0) m.precision = d(m.tp) / d(m.tp + m.fp);
  else m.undefined_ratio = true;
  if (m.tp + m.fn > 0) m.recall = d(m.tp) / d(m.tp + m.fn);
  else m.undefined_ratio = true;
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  } else {
    m.undefined_ratio = true;
  }
  const std::size_t total = pred.cells.size();
  m.accuracy = total == 0 ? 0.0 : d(m.tp + m.tn) / d(total);
  return m;
}

StreamProducts stream_network(const RasterGrid& dem, std::size_t threshold) {
  StreamProducts p;
  p.filled = fill_depressions(dem);
  p.directions = d8_flow_direction(p.filled);
  p.accumulation = flow_accumulation(p.directions);
  p.streams = extract_streams(p.accumulation, threshold);
  return p;
}

std::size_t default_stream_threshold(std::size_t cells) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.005 * static_cast<double>(cells))));
}

namespace {
template <typename V>
RasterGrid cells_to_raster(const CellGrid<V>& g, const RasterGrid& georef) {
  if (g.rows != georef.rows() || g.cols != georef.cols()) {
    throw std::invalid_argument("to_raster: georeference grid has different dimensions");
  }
  RasterGrid out(g.rows, g.cols, georef.cell_size());
  out.copy_georef(georef);
  for (std::size_t i = 0; i < g.size(); ++i) out.values()[i] = static_cast<float>(g.values[i]);
  return out;
}
}  // namespace

RasterGrid to_raster(const FlowDirections& d, const RasterGrid& georef) {
  return cells_to_raster(d, georef);
}
RasterGrid to_raster(const FlowAccumulation& a, const RasterGrid& georef) {
  return cells_to_raster(a, georef);
}
RasterGrid to_raster(const StreamMask& m, const RasterGrid& georef) {
  return cells_to_raster(m.cells, georef);
}

StreamMask mask_from_raster(const RasterGrid& grid) {
  StreamMask m;
  m.cells = CellGrid<std::uint8_t>(grid.rows(), grid.cols(), 0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const float v = grid.values()[i];
    m.cells.values[i] = (!grid.is_nodata_index(i) && v != 0.0f) ? 1 : 0;
  }
  return m;
}

}  // namespace p2d
