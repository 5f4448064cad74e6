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

#include "p2d/terrain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "p2d/evaluation.hpp"

namespace p2d {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Uniform [0,1) from a hash of (seed, a, b).
double hash_unit(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  const std::uint64_t h = splitmix64(seed ^ splitmix64(a * 0x100000001b3ULL + b));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

/// Sum of value-noise octaves; each octave halves the lattice spacing and
/// scales the amplitude by `roughness`.
std::vector<double> fractal_field(std::size_t n, double roughness, std::uint64_t seed) {
  std::vector<double> field(n * n, 0.0);
  double spacing = std::max(2.0, static_cast<double>(n) / 2.0);
  double amplitude = 1.0;
  for (std::uint64_t octave = 0; spacing >= 2.0; ++octave) {
    const auto lattice = static_cast<std::size_t>(std::ceil(static_cast<double>(n) / spacing)) + 2;
    std::vector<double> nodes(lattice * lattice);
    const std::uint64_t oseed = splitmix64(seed + 0x51ed2701ULL * (octave + 1));
    for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] = 2.0 * hash_unit(oseed, i, octave) - 1.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double y = static_cast<double>(r) / spacing;
      const auto y0 = static_cast<std::size_t>(y);
      const double ty = smoothstep(y - static_cast<double>(y0));
      for (std::size_t c = 0; c < n; ++c) {
        const double x = static_cast<double>(c) / spacing;
        const auto x0 = static_cast<std::size_t>(x);
        const double tx = smoothstep(x - static_cast<double>(x0));
        const double a = nodes[y0 * lattice + x0], b = nodes[y0 * lattice + x0 + 1];
        const double cc = nodes[(y0 + 1) * lattice + x0], d = nodes[(y0 + 1) * lattice + x0 + 1];
        field[r * n + c] += amplitude * ((1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * cc + tx * d));
      }
    }
    spacing /= 2.0;
    amplitude *= roughness;
  }
  return field;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t uniform_int(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

void TerrainParams::validate() const {
  if (size < 4) throw std::invalid_argument("TerrainParams: size must be >= 4");
  if (!(cell_size > 0.0)) throw std::invalid_argument("TerrainParams: cell_size must be > 0");
  if (!(relief >= 0.0)) throw std::invalid_argument("TerrainParams: relief must be >= 0");
  if (!(roughness > 0.0 && roughness < 1.0)) {
    throw std::invalid_argument("TerrainParams: roughness must lie in (0,1)");
  }
  for (const auto& range : {building_height_range, canopy_height_range}) {
    if (!(range[0] >= 0.0 && range[1] >= range[0])) {
      throw std::invalid_argument("TerrainParams: height ranges must be nonnegative and ordered");
    }
  }
}

SceneSample generate_terrain(const TerrainParams& params) {
  params.validate();
  const std::size_t n = params.size;
  std::mt19937_64 rng(splitmix64(params.seed));

  SceneSample s;
  s.seed = params.seed;
  s.dtm = RasterGrid(n, n, params.cell_size, static_cast<float>(params.base_elevation));
  s.dtm.set_origin(0.0, static_cast<double>(n) * params.cell_size);

  if (params.relief > 0.0) {
    const auto field = fractal_field(n, params.roughness, params.seed);
    const auto [lo_it, hi_it] = std::minmax_element(field.begin(), field.end());
    const double lo = *lo_it, span = std::max(*hi_it - *lo_it, 1e-12);
    for (std::size_t i = 0; i < field.size(); ++i) {
      s.dtm.values()[i] =
          static_cast<float>(params.base_elevation + params.relief * (field[i] - lo) / span);
    }
  }

  // Buildings: separated footprints (2-cell gap) on flattened pads.
  const std::size_t min_side = std::max<std::size_t>(3, n / 10);
  const std::size_t max_side = std::max(min_side, n / 5);
  for (std::size_t placed = 0, attempt = 0; placed < params.n_buildings && attempt < 2000;
       ++attempt) {
    const std::size_t h = uniform_int(rng, min_side, max_side);
    const std::size_t w = uniform_int(rng, min_side, max_side);
    if (h + 2 >= n || w + 2 >= n) break;
    const std::size_t r0 = uniform_int(rng, 1, n - h - 1);
    const std::size_t c0 = uniform_int(rng, 1, n - w - 1);
    Footprint f{r0, c0, r0 + h, c0 + w, 0.0};
    const bool clash = std::any_of(s.buildings.begin(), s.buildings.end(), [&](const Footprint& o) {
      return f.row0 < o.row1 + 2 && o.row0 < f.row1 + 2 && f.col0 < o.col1 + 2 && o.col0 < f.col1 + 2;
    });
    if (clash) continue;
    f.height = uniform(rng, params.building_height_range[0], params.building_height_range[1]);
    s.buildings.push_back(f);
    ++placed;
  }
  for (const auto& f : s.buildings) {
    double pad = 0.0;
    for (std::size_t r = f.row0; r < f.row1; ++r)
      for (std::size_t c = f.col0; c < f.col1; ++c) pad += s.dtm(r, c);
    const auto level = static_cast<float>(pad / static_cast<double>((f.row1 - f.row0) * (f.col1 - f.col0)));
    for (std::size_t r = f.row0; r < f.row1; ++r)
      for (std::size_t c = f.col0; c < f.col1; ++c) s.dtm(r, c) = level;
  }

  // Canopy: domes h * (1 - (d/R)^2)^2 kept one cell clear of footprints.
  const double min_radius = std::max(2.0, static_cast<double>(n) / 24.0);
  const double max_radius = std::max(min_radius, static_cast<double>(n) / 10.0);
  for (std::size_t placed = 0, attempt = 0; placed < params.n_canopy_blobs && attempt < 4000;
       ++attempt) {
    CanopyBlob b;
    b.row = uniform(rng, 0.0, static_cast<double>(n - 1));
    b.col = uniform(rng, 0.0, static_cast<double>(n - 1));
    b.radius = uniform(rng, min_radius, max_radius);
    const bool clash = std::any_of(s.buildings.begin(), s.buildings.end(), [&](const Footprint& f) {
      const double dr = std::max({static_cast<double>(f.row0) - 1.0 - b.row, 0.0,
                                  b.row - static_cast<double>(f.row1)});
      const double dc = std::max({static_cast<double>(f.col0) - 1.0 - b.col, 0.0,
                                  b.col - static_cast<double>(f.col1)});
      return std::hypot(dr, dc) < b.radius + 1.0;
    });
    if (clash) continue;
    b.height = uniform(rng, params.canopy_height_range[0], params.canopy_height_range[1]);
    s.canopy.push_back(b);
    ++placed;
  }

  s.dsm = s.dtm;
  s.canopy_mask = RasterGrid(n, n, params.cell_size, 0.0f);
  s.canopy_mask.copy_georef(s.dtm);
  s.building_mask = s.canopy_mask;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      double raise = 0.0;
      for (const auto& f : s.buildings) {
        if (f.contains(r, c)) {
          raise = f.height;
          s.building_mask(r, c) = 1.0f;
        }
      }
      double canopy = 0.0;
      for (const auto& b : s.canopy) {
        const double d = std::hypot(static_cast<double>(r) - b.row, static_cast<double>(c) - b.col);
        if (d < b.radius) {
          const double t = 1.0 - (d / b.radius) * (d / b.radius);
          canopy = std::max(canopy, b.height * t * t);
        }
      }
      if (canopy > 0.0) s.canopy_mask(r, c) = 1.0f;
      raise = std::max(raise, canopy);
      if (raise > 0.0) s.dsm(r, c) = static_cast<float>(s.dtm(r, c) + raise);
    }
  }

  if (!s.buildings.empty()) {
    s.scene_class = SceneClass::kUrban;
  } else if (!s.canopy.empty()) {
    s.scene_class = SceneClass::kVegetated;
  } else {
    s.scene_class = SceneClass::kBare;
  }
  s.rgb = render_pseudo_rgb(s);
  return s;
}

RasterGrid hillshade(const RasterGrid& dem, double azimuth_deg, double altitude_deg) {
  const auto grad = surface_gradient(dem);
  const double zenith = (90.0 - altitude_deg) * kDegToRad;
  const double azimuth = azimuth_deg * kDegToRad;
  RasterGrid out(dem.rows(), dem.cols(), dem.cell_size());
  out.copy_georef(dem);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float gx = grad.dz_dx.values()[i], gy = grad.dz_dy.values()[i];
    if (grad.dz_dx.is_nodata_index(i)) {
      out.values()[i] = dem.nodata();
      continue;
    }
    const double slope = std::atan(std::hypot(static_cast<double>(gx), static_cast<double>(gy)));
    const double aspect = std::atan2(-static_cast<double>(gx), -static_cast<double>(gy));
    const double v = std::cos(zenith) * std::cos(slope) +
                     std::sin(zenith) * std::sin(slope) * std::cos(azimuth - aspect);
    out.values()[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

std::array<RasterGrid, 3> render_pseudo_rgb(const SceneSample& sample) {
  const RasterGrid& dsm = sample.dsm;
  std::array<RasterGrid, 3> rgb;
  rgb[0] = hillshade(dsm, 315.0, 45.0);
  rgb[1] = slope_map(dsm);
  for (auto& v : rgb[1].values()) v = v == dsm.nodata() ? 0.0f : std::clamp(v / 90.0f, 0.0f, 1.0f);
  rgb[2] = RasterGrid(dsm.rows(), dsm.cols(), dsm.cell_size(), 0.0f);
  rgb[2].copy_georef(dsm);
  const std::uint64_t tex_seed = splitmix64(sample.seed ^ 0x7e37u);
  for (std::size_t r = 0; r < dsm.rows(); ++r) {
    for (std::size_t c = 0; c < dsm.cols(); ++c) {
      const double u = hash_unit(tex_seed, r, c);
      double v = 0.30 + 0.10 * u;
      if (!sample.building_mask.values().empty() && sample.building_mask(r, c) > 0.0f) {
        v = 0.90;
      } else if (!sample.canopy_mask.values().empty() && sample.canopy_mask(r, c) > 0.0f) {
        v = 0.10 + 0.30 * u;
      }
      rgb[2](r, c) = static_cast<float>(v);
    }
  }
  for (auto& ch : rgb) {
    for (auto& v : ch.values()) {
      if (v == ch.nodata()) v = 0.0f;
    }
  }
  return rgb;
}

RasterGrid degrade_to_prompt(const RasterGrid& dsm, const RasterGrid* canopy_mask,
                             std::size_t factor, double bias_sigma, double canopy_bias,
                             std::uint64_t seed) {
  RasterGrid lr = average_downsample(dsm, factor);
  if (canopy_bias != 0.0 && canopy_mask) {
    if (!canopy_mask->same_shape(dsm)) {
      throw std::invalid_argument("degrade_to_prompt: canopy mask does not match dsm");
    }
    const RasterGrid cover = average_downsample(*canopy_mask, factor);
    for (std::size_t i = 0; i < lr.size(); ++i) {
      if (!lr.is_nodata_index(i)) {
        lr.values()[i] = static_cast<float>(lr.values()[i] + canopy_bias * cover.values()[i]);
      }
    }
  }
  if (bias_sigma > 0.0) {
    std::mt19937_64 rng(splitmix64(seed ^ 0xde9a4dULL));
    std::normal_distribution<double> noise(0.0, bias_sigma);
    for (std::size_t i = 0; i < lr.size(); ++i) {
      const double e = noise(rng);
      if (!lr.is_nodata_index(i)) lr.values()[i] = static_cast<float>(lr.values()[i] + e);
    }
  }
  return lr;
}

std::size_t void_side(std::size_t rows, std::size_t cols, double hole_fraction) {
  if (!(hole_fraction > 0.0 && hole_fraction < 1.0)) {
    throw std::invalid_argument("hole_fraction must lie in (0,1)");
  }
  const auto side =
      static_cast<std::size_t>(std::lround(hole_fraction * static_cast<double>(std::min(rows, cols))));
  return std::max<std::size_t>(side, 1);
}

RasterGrid void_mask(std::size_t rows, std::size_t cols, double hole_fraction) {
  const std::size_t side = void_side(rows, cols, hole_fraction);
  const std::size_t r0 = (rows - side) / 2, c0 = (cols - side) / 2;
  RasterGrid mask(rows, cols, 1.0, 0.0f);
  for (std::size_t r = r0; r < r0 + side; ++r)
    for (std::size_t c = c0; c < c0 + side; ++c) mask(r, c) = 1.0f;
  return mask;
}

RasterGrid carve_void(const RasterGrid& hr, const RasterGrid& lr_prompt, double hole_fraction) {
  const std::size_t side = void_side(hr.rows(), hr.cols(), hole_fraction);
  const double extent_hr = static_cast<double>(hr.cols()) * hr.cell_size();
  const double extent_lr = static_cast<double>(lr_prompt.cols()) * lr_prompt.cell_size();
  if (std::abs(extent_hr - extent_lr) > 1e-6 * std::max(1.0, extent_hr)) {
    throw std::invalid_argument("carve_void: prompt and hr extents differ");
  }
  const RasterGrid up = bilinear_resample(lr_prompt, hr.rows(), hr.cols());
  RasterGrid out = hr;
  const std::size_t r0 = (hr.rows() - side) / 2, c0 = (hr.cols() - side) / 2;
  for (std::size_t r = r0; r < r0 + side; ++r)
    for (std::size_t c = c0; c < c0 + side; ++c) out(r, c) = up(r, c);
  return out;
}

RasterGrid terrain_only_prompt(const SceneSample& sample) { return sample.dtm; }

TerrainParams sample_scene_params(SceneClass scene, std::uint64_t seed, std::size_t size) {
  std::mt19937_64 rng(splitmix64(seed ^ 0xc1a55ULL));
  TerrainParams p;
  p.seed = seed;
  p.size = size;
  p.base_elevation = uniform(rng, 100.0, 2000.0);
  p.relief = uniform(rng, 15.0, 50.0);
  p.roughness = uniform(rng, 0.40, 0.60);
  const double area = static_cast<double>(size * size) / (64.0 * 64.0);
  auto scaled = [&](std::size_t lo, std::size_t hi) {
    return static_cast<std::size_t>(std::lround(static_cast<double>(uniform_int(rng, lo, hi)) * area));
  };
  switch (scene) {
    case SceneClass::kUrban:
      p.n_buildings = std::max<std::size_t>(1, scaled(3, 6));
      p.building_height_range = {4.0, 15.0};
      p.n_canopy_blobs = scaled(0, 3);
      p.canopy_height_range = {4.0, 10.0};
      break;
    case SceneClass::kVegetated:
      p.n_canopy_blobs = std::max<std::size_t>(1, scaled(10, 25));
      p.canopy_height_range = {5.0, 15.0};
      break;
    case SceneClass::kBare:
      break;
  }
  return p;
}

}  // namespace p2d
