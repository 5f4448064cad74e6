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

#ifndef P2D_RASTER_HPP_
#define P2D_RASTER_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace p2d {

/// Geo-referenced single-band float raster.
///
/// Axis convention: row 0 is the northern edge. `origin_x`/`origin_y` locate
/// the upper-left corner of the grid; x grows with the column index and y
/// shrinks with the row index, so the corner of cell (r, c) sits at
/// (origin_x + c * cell_size, origin_y - r * cell_size).
class RasterGrid {
 public:
  static constexpr float kDefaultNodata = -9999.0f;

  RasterGrid() = default;
  RasterGrid(std::size_t rows, std::size_t cols, double cell_size = 1.0,
             float fill = 0.0f);
  RasterGrid(std::size_t rows, std::size_t cols, double cell_size,
             std::vector<float> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  double cell_size() const { return cell_size_; }
  double origin_x() const { return origin_x_; }
  double origin_y() const { return origin_y_; }
  float nodata() const { return nodata_; }

  void set_cell_size(double cs);
  void set_origin(double x, double y) {
    origin_x_ = x;
    origin_y_ = y;
  }
  void set_nodata(float nd) { nodata_ = nd; }

  float& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  bool is_nodata(std::size_t r, std::size_t c) const { return (*this)(r, c) == nodata_; }
  bool is_nodata_index(std::size_t i) const { return values_[i] == nodata_; }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }

  /// Copies georeference (cell size, origin, nodata) from another grid.
  void copy_georef(const RasterGrid& other);
  bool same_shape(const RasterGrid& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;

  bool operator==(const RasterGrid& other) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  double cell_size_ = 1.0;
  double origin_x_ = 0.0;
  double origin_y_ = 0.0;
  float nodata_ = kDefaultNodata;
  std::vector<float> values_;
};

enum class RasterIoErrorKind { kIo, kBadMagic, kTruncated, kNonFiniteHeader, kInvalidHeader };

class RasterIoError : public std::runtime_error {
 public:
  RasterIoError(RasterIoErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  RasterIoErrorKind kind() const { return kind_; }

 private:
  RasterIoErrorKind kind_;
};

/// Serializes into the "R32G" layout (all little-endian):
/// magic, u32 rows, u32 cols, f64 cell_size, f64 origin_x, f64 origin_y,
/// f32 nodata, rows*cols f32 values in row-major order.
std::vector<std::uint8_t> encode_raster(const RasterGrid& grid);
RasterGrid decode_raster(std::span<const std::uint8_t> bytes,
                         const std::string& source = "<memory>");

void write_raster(const RasterGrid& grid, const std::filesystem::path& path);
RasterGrid read_raster(const std::filesystem::path& path);

/// Bilinear resampling over the same extent. The first and last pixel
/// centres of the output coincide with those of the input, which makes the
/// interpolation exact on affine fields. Contributing nodata propagates.
RasterGrid bilinear_resample(const RasterGrid& grid, std::size_t out_rows,
                             std::size_t out_cols);

/// Block mean over factor x factor windows.
RasterGrid average_downsample(const RasterGrid& grid, std::size_t factor);

struct TilePlacement {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const TilePlacement&) const = default;
};

struct TilePlan {
  std::size_t tile_size = 0;
  std::size_t overlap = 0;
  std::vector<TilePlacement> placements;
};

/// Offsets along one axis: stride tile - overlap, last offset clamped inward.
std::vector<std::size_t> tile_offsets(std::size_t extent, std::size_t tile_size,
                                      std::size_t overlap);
TilePlan make_tile_plan(const RasterGrid& grid, std::size_t tile_size,
                        std::size_t overlap);
TilePlan make_tile_plan(std::size_t rows, std::size_t cols, std::size_t tile_size,
                        std::size_t overlap);
RasterGrid extract_tile(const RasterGrid& grid, TilePlacement placement,
                        std::size_t tile_size);

/// 8-bit grayscale PNG, min-max stretched over valid cells (nodata -> 0).
void write_png(const RasterGrid& grid, const std::filesystem::path& path);

}  // namespace p2d

#endif  // P2D_RASTER_HPP_
