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

#ifndef P2D_INTERP_HPP_
#define P2D_INTERP_HPP_

#include <cmath>
#include <cstddef>
#include <vector>

namespace p2d {

/// One axis of a bilinear sample: lower index, upper index and the weight of
/// the upper index.
template <typename T>
struct LinearTap {
  std::size_t lo = 0;
  std::size_t hi = 0;
  T frac = T(0);
};

/// Sampling positions used by every bilinear resize in the project (raster
/// resampling and the differentiable tensor op). Output centre o maps to input
/// coordinate o * (in - 1) / (out - 1); a single output sample takes the
/// middle of the input.
template <typename T>
std::vector<LinearTap<T>> linear_taps(std::size_t in, std::size_t out) {
  std::vector<LinearTap<T>> taps(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = 0.0;
    if (out == 1) {
      src = 0.5 * static_cast<double>(in - 1);
    } else {
      src = static_cast<double>(o) * static_cast<double>(in - 1) /
            static_cast<double>(out - 1);
    }
    auto lo = static_cast<std::size_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    std::size_t hi = lo + 1 < in ? lo + 1 : lo;
    taps[o] = {lo, hi, static_cast<T>(src - static_cast<double>(lo))};
    if (hi == lo) taps[o].frac = T(0);
  }
  return taps;
}

/// Lerp form a + t (b - a): reproduces constant fields exactly.
template <typename T>
inline T bilerp(T v00, T v01, T v10, T v11, T fy, T fx) {
  const T top = v00 + fx * (v01 - v00);
  const T bottom = v10 + fx * (v11 - v10);
  return top + fy * (bottom - top);
}

}  // namespace p2d

#endif  // P2D_INTERP_HPP_
