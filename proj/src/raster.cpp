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

#include "p2d/raster.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "p2d/interp.hpp"

namespace p2d {

static_assert(std::endian::native == std::endian::little,
              "raster codec assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'R', '3', '2', 'G'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 8 + 8 + 8 + 4;

template <typename V>
void put(std::vector<std::uint8_t>& out, V v) {
  std::uint8_t buf[sizeof(V)];
  std::memcpy(buf, &v, sizeof(V));
  out.insert(out.end(), buf, buf + sizeof(V));
}

template <typename V>
V get(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  V v;
  std::memcpy(&v, bytes.data() + pos, sizeof(V));
  pos += sizeof(V);
  return v;
}

}  // namespace

RasterGrid::RasterGrid(std::size_t rows, std::size_t cols, double cell_size, float fill)
    : rows_(rows), cols_(cols), cell_size_(cell_size), values_(rows * cols, fill) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("RasterGrid: rows and cols must be >= 1");
  if (!(cell_size > 0.0)) throw std::invalid_argument("RasterGrid: cell_size must be > 0");
}

RasterGrid::RasterGrid(std::size_t rows, std::size_t cols, double cell_size,
                       std::vector<float> values)
    : rows_(rows), cols_(cols), cell_size_(cell_size), values_(std::move(values)) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("RasterGrid: rows and cols must be >= 1");
  if (!(cell_size > 0.0)) throw std::invalid_argument("RasterGrid: cell_size must be > 0");
  if (values_.size() != rows * cols) {
    throw std::invalid_argument("RasterGrid: values length " + std::to_string(values_.size()) +
                                " != rows*cols " + std::to_string(rows * cols));
  }
}

void RasterGrid::set_cell_size(double cs) {
  if (!(cs > 0.0)) throw std::invalid_argument("RasterGrid: cell_size must be > 0");
  cell_size_ = cs;
}

void RasterGrid::copy_georef(const RasterGrid& other) {
  cell_size_ = other.cell_size_;
  origin_x_ = other.origin_x_;
  origin_y_ = other.origin_y_;
  nodata_ = other.nodata_;
}

void RasterGrid::validate() const {
  if (rows_ == 0 || cols_ == 0) throw std::invalid_argument("RasterGrid: empty grid");
  if (!(cell_size_ > 0.0) || !std::isfinite(cell_size_)) {
    throw std::invalid_argument("RasterGrid: cell_size must be finite and > 0");
  }
  if (values_.size() != rows_ * cols_) throw std::invalid_argument("RasterGrid: size mismatch");
  for (float v : values_) {
    if (v != nodata_ && !std::isfinite(v)) {
      throw std::invalid_argument("RasterGrid: non-finite value");
    }
  }
}

bool RasterGrid::operator==(const RasterGrid& o) const {
  if (rows_ != o.rows_ || cols_ != o.cols_) return false;
  if (std::bit_cast<std::uint64_t>(cell_size_) != std::bit_cast<std::uint64_t>(o.cell_size_) ||
      std::bit_cast<std::uint64_t>(origin_x_) != std::bit_cast<std::uint64_t>(o.origin_x_) ||
      std::bit_cast<std::uint64_t>(origin_y_) != std::bit_cast<std::uint64_t>(o.origin_y_) ||
      std::bit_cast<std::uint32_t>(nodata_) != std::bit_cast<std::uint32_t>(o.nodata_)) {
    return false;
  }
  return std::memcmp(values_.data(), o.values_.data(), values_.size() * sizeof(float)) == 0;
}

std::vector<std::uint8_t> encode_raster(const RasterGrid& grid) {
  grid.validate();
  if (grid.rows() > UINT32_MAX || grid.cols() > UINT32_MAX) {
    throw std::invalid_argument("encode_raster: dimensions exceed u32");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + grid.size() * sizeof(float));
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put(out, static_cast<std::uint32_t>(grid.rows()));
  put(out, static_cast<std::uint32_t>(grid.cols()));
  put(out, grid.cell_size());
  put(out, grid.origin_x());
  put(out, grid.origin_y());
  put(out, grid.nodata());
  const auto vals = grid.values();
  const auto* raw = reinterpret_cast<const std::uint8_t*>(vals.data());
  out.insert(out.end(), raw, raw + vals.size() * sizeof(float));
  return out;
}

RasterGrid decode_raster(std::span<const std::uint8_t> bytes, const std::string& source) {
  if (bytes.size() < 4) {
    throw RasterIoError(RasterIoErrorKind::kTruncated, source + ": truncated header");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw RasterIoError(RasterIoErrorKind::kBadMagic, source + ": bad magic (expected R32G)");
  }
  if (bytes.size() < kHeaderBytes) {
    throw RasterIoError(RasterIoErrorKind::kTruncated, source + ": truncated header");
  }
  std::size_t pos = 4;
  const auto rows = get<std::uint32_t>(bytes, pos);
  const auto cols = get<std::uint32_t>(bytes, pos);
  const auto cell = get<double>(bytes, pos);
  const auto ox = get<double>(bytes, pos);
  const auto oy = get<double>(bytes, pos);
  const auto nodata = get<float>(bytes, pos);
  if (!std::isfinite(cell) || !std::isfinite(ox) || !std::isfinite(oy) || !std::isfinite(nodata)) {
    throw RasterIoError(RasterIoErrorKind::kNonFiniteHeader, source + ": non-finite header field");
  }
  if (rows == 0 || cols == 0 || !(cell > 0.0)) {
    throw RasterIoError(RasterIoErrorKind::kInvalidHeader,
                        source + ": header has empty dimensions or nonpositive cell size");
  }
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  if (bytes.size() - kHeaderBytes < n * sizeof(float)) {
    throw RasterIoError(RasterIoErrorKind::kTruncated,
                        source + ": truncated payload (expected " + std::to_string(n) +
                            " values)");
  }
  std::vector<float> values(n);
  std::memcpy(values.data(), bytes.data() + kHeaderBytes, n * sizeof(float));
  RasterGrid grid(rows, cols, cell, std::move(values));
  grid.set_origin(ox, oy);
  grid.set_nodata(nodata);
  return grid;
}

void write_raster(const RasterGrid& grid, const std::filesystem::path& path) {
  const auto bytes = encode_raster(grid);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw RasterIoError(RasterIoErrorKind::kIo, "cannot open for writing: " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RasterIoError(RasterIoErrorKind::kIo, "write failed: " + path.string());
}

RasterGrid read_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RasterIoError(RasterIoErrorKind::kIo, "cannot open for reading: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_raster(bytes, path.string());
}

RasterGrid bilinear_resample(const RasterGrid& grid, std::size_t out_rows, std::size_t out_cols) {
  if (out_rows < 1 || out_cols < 1) {
    throw std::invalid_argument("bilinear_resample: output dimensions must be >= 1");
  }
  const auto ty = linear_taps<float>(grid.rows(), out_rows);
  const auto tx = linear_taps<float>(grid.cols(), out_cols);
  RasterGrid out(out_rows, out_cols, grid.cell_size());
  out.copy_georef(grid);
  out.set_cell_size(grid.cell_size() * static_cast<double>(grid.cols()) /
                    static_cast<double>(out_cols));
  const float nd = grid.nodata();
  for (std::size_t r = 0; r < out_rows; ++r) {
    const auto& y = ty[r];
    for (std::size_t c = 0; c < out_cols; ++c) {
      const auto& x = tx[c];
      const float v00 = grid(y.lo, x.lo), v01 = grid(y.lo, x.hi);
      const float v10 = grid(y.hi, x.lo), v11 = grid(y.hi, x.hi);
      const bool use_x = x.frac != 0.0f, use_y = y.frac != 0.0f;
      const bool missing = v00 == nd || (use_x && v01 == nd) || (use_y && v10 == nd) ||
                           (use_x && use_y && v11 == nd);
      out(r, c) = missing ? nd : bilerp(v00, v01, v10, v11, y.frac, x.frac);
    }
  }
  return out;
}

RasterGrid average_downsample(const RasterGrid& grid, std::size_t factor) {
  if (factor == 0 || grid.rows() % factor != 0 || grid.cols() % factor != 0) {
    throw std::invalid_argument("average_downsample: dims " + std::to_string(grid.rows()) + "x" +
                                std::to_string(grid.cols()) + " not divisible by factor " +
                                std::to_string(factor));
  }
  const std::size_t orows = grid.rows() / factor, ocols = grid.cols() / factor;
  RasterGrid out(orows, ocols, grid.cell_size());
  out.copy_georef(grid);
  out.set_cell_size(grid.cell_size() * static_cast<double>(factor));
  for (std::size_t r = 0; r < orows; ++r) {
    for (std::size_t c = 0; c < ocols; ++c) {
      double sum = 0.0;
      std::size_t valid = 0;
      for (std::size_t i = 0; i < factor; ++i) {
        for (std::size_t j = 0; j < factor; ++j) {
          const float v = grid(r * factor + i, c * factor + j);
          if (v == grid.nodata()) continue;
          sum += v;
          ++valid;
        }
      }
      out(r, c) = valid == 0 ? grid.nodata() : static_cast<float>(sum / static_cast<double>(valid));
    }
  }
  return out;
}

std::vector<std::size_t> tile_offsets(std::size_t extent, std::size_t tile_size,
                                      std::size_t overlap) {
  if (tile_size == 0 || overlap >= tile_size) {
    throw std::invalid_argument("tile plan: require 0 <= overlap < tile_size");
  }
  if (tile_size > extent) {
    throw std::invalid_argument("tile plan: tile size " + std::to_string(tile_size) +
                                " larger than grid extent " + std::to_string(extent));
  }
  const std::size_t stride = tile_size - overlap;
  std::vector<std::size_t> offsets{0};
  while (offsets.back() + tile_size < extent) {
    offsets.push_back(std::min(offsets.back() + stride, extent - tile_size));
  }
  return offsets;
}

TilePlan make_tile_plan(std::size_t rows, std::size_t cols, std::size_t tile_size,
                        std::size_t overlap) {
  TilePlan plan{tile_size, overlap, {}};
  const auto ro = tile_offsets(rows, tile_size, overlap);
  const auto co = tile_offsets(cols, tile_size, overlap);
  for (auto r : ro) {
    for (auto c : co) plan.placements.push_back({r, c});
  }
  return plan;
}

TilePlan make_tile_plan(const RasterGrid& grid, std::size_t tile_size, std::size_t overlap) {
  return make_tile_plan(grid.rows(), grid.cols(), tile_size, overlap);
}

RasterGrid extract_tile(const RasterGrid& grid, TilePlacement p, std::size_t tile_size) {
  if (tile_size == 0 || p.row + tile_size > grid.rows() || p.col + tile_size > grid.cols()) {
    throw std::out_of_range("extract_tile: tile at (" + std::to_string(p.row) + "," +
                            std::to_string(p.col) + ") size " + std::to_string(tile_size) +
                            " exceeds grid bounds");
  }
  RasterGrid out(tile_size, tile_size, grid.cell_size());
  out.copy_georef(grid);
  out.set_origin(grid.origin_x() + static_cast<double>(p.col) * grid.cell_size(),
                 grid.origin_y() - static_cast<double>(p.row) * grid.cell_size());
  for (std::size_t r = 0; r < tile_size; ++r) {
    for (std::size_t c = 0; c < tile_size; ++c) out(r, c) = grid(p.row + r, p.col + c);
  }
  return out;
}

void write_png(const RasterGrid& grid, const std::filesystem::path& path) {
  float lo = std::numeric_limits<float>::infinity();
  float hi = -lo;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid.is_nodata_index(i)) continue;
    lo = std::min(lo, grid.values()[i]);
    hi = std::max(hi, grid.values()[i]);
  }
  const float span = hi > lo ? hi - lo : 1.0f;
  std::vector<png_byte> pixels(grid.size(), 0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid.is_nodata_index(i)) continue;
    pixels[i] = static_cast<png_byte>(std::lround(255.0f * (grid.values()[i] - lo) / span));
  }

  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw RasterIoError(RasterIoErrorKind::kIo, "cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw RasterIoError(RasterIoErrorKind::kIo, "png encoding failed: " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(grid.cols()),
               static_cast<png_uint_32>(grid.rows()), 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < grid.rows(); ++r) png_write_row(png, pixels.data() + r * grid.cols());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace p2d
