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

#ifndef P2D_TERRAIN_HPP_
#define P2D_TERRAIN_HPP_

#include <array>
#include <cstdint>
#include <vector>

#include "p2d/raster.hpp"
#include "p2d/types.hpp"

namespace p2d {

struct TerrainParams {
  std::uint64_t seed = 0;
  std::size_t size = 64;
  double cell_size = 1.0;
  double base_elevation = 1000.0;
  double relief = 40.0;
  double roughness = 0.5;
  std::size_t n_buildings = 0;
  std::array<double, 2> building_height_range{4.0, 15.0};
  std::size_t n_canopy_blobs = 0;
  std::array<double, 2> canopy_height_range{5.0, 15.0};

  void validate() const;
};

/// Axis-aligned footprint, half-open [row0,row1) x [col0,col1).
struct Footprint {
  std::size_t row0 = 0, col0 = 0, row1 = 0, col1 = 0;
  double height = 0.0;
  bool contains(std::size_t r, std::size_t c) const {
    return r >= row0 && r < row1 && c >= col0 && c < col1;
  }
};

struct CanopyBlob {
  double row = 0.0, col = 0.0, radius = 0.0, height = 0.0;
};

struct SceneSample {
  RasterGrid dsm;
  RasterGrid dtm;
  std::array<RasterGrid, 3> rgb;
  SceneClass scene_class = SceneClass::kBare;
  std::uint64_t seed = 0;
  std::vector<Footprint> buildings;
  std::vector<CanopyBlob> canopy;
  /// 1 where a canopy blob raises the surface, else 0.
  RasterGrid canopy_mask;
  /// 1 inside a building footprint, else 0.
  RasterGrid building_mask;
};

/// Fractal terrain plus flat-roofed buildings (on graded pads) and smooth
/// canopy domes. Deterministic in params.seed; renders the pseudo-RGB
/// channels as part of the sample.
SceneSample generate_terrain(const TerrainParams& params);

/// cos(zenith) cos(slope) + sin(zenith) sin(slope) cos(azimuth - aspect),
/// clamped to [0,1], with slope/aspect from the evaluation derivatives.
RasterGrid hillshade(const RasterGrid& dem, double azimuth_deg, double altitude_deg);

/// Channel 1: hillshade (315, 45); channel 2: slope / 90 degrees;
/// channel 3: land-cover texture (bright flat roofs, canopy speckle).
std::array<RasterGrid, 3> render_pseudo_rgb(const SceneSample& sample);

/// Block-mean downsample, then per-cell Gaussian noise (std bias_sigma) and
/// canopy_bias times the canopy-covered fraction of each block.
RasterGrid degrade_to_prompt(const RasterGrid& dsm, const RasterGrid* canopy_mask,
                             std::size_t factor, double bias_sigma, double canopy_bias,
                             std::uint64_t seed);

/// Side length of the central void for a grid of the given size.
std::size_t void_side(std::size_t rows, std::size_t cols, double hole_fraction);

/// Central square of side hole_fraction * min(rows, cols) replaced by the
/// bilinear upsampling of the coarse prompt; elsewhere bit-identical to hr.
RasterGrid carve_void(const RasterGrid& hr, const RasterGrid& lr_prompt, double hole_fraction = 0.5);

/// 1 inside the central void, 0 elsewhere.
RasterGrid void_mask(std::size_t rows, std::size_t cols, double hole_fraction = 0.5);

/// The generator's bare-earth surface (an outdated terrain model).
RasterGrid terrain_only_prompt(const SceneSample& sample);

/// Per-class parameter draw used for synthetic datasets.
TerrainParams sample_scene_params(SceneClass scene, std::uint64_t seed, std::size_t size = 64);

}  // namespace p2d

#endif  // P2D_TERRAIN_HPP_
