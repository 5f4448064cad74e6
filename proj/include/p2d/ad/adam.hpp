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

#ifndef P2D_AD_ADAM_HPP_
#define P2D_AD_ADAM_HPP_

#include <cmath>
#include <stdexcept>
#include <vector>

#include "p2d/ad/tensor.hpp"

namespace p2d::ad {

struct AdamState {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

class MissingGradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// One bias-corrected Adam update. Gradients are left in place; the caller
/// zeroes them. Moments are kept in double so trajectories do not depend on
/// the parameter precision.
template <typename T>
void adam_step(std::vector<BasicTensor<T>>& params, AdamState& state) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match parameter list");
  }
  for (const auto& p : params) {
    if (!p.has_grad()) throw MissingGradError("adam_step: parameter without gradient");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k].mutable_data();
    const auto grad = params[k].grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != data.size()) {
      throw std::invalid_argument("adam_step: moment shape does not match parameter");
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      data[i] = static_cast<T>(static_cast<double>(data[i]) -
                               state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

}  // namespace p2d::ad

#endif  // P2D_AD_ADAM_HPP_
