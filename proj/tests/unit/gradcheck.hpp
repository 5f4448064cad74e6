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

#ifndef P2D_TESTS_GRADCHECK_HPP_
#define P2D_TESTS_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "p2d/ad/ops.hpp"
#include "p2d/model.hpp"
#include "p2d/training.hpp"

namespace p2d::test {

using ad::Tensor64;
using GradFn = std::function<Tensor64(const std::vector<Tensor64>&)>;

inline constexpr int kGradInstances = 5;
inline constexpr double kGradStep = 1e-3;
inline constexpr double kGradTolerance = 1e-6;

inline Tensor64 random_tensor(ad::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                              double hi = 1.0, double min_abs = 0.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) {
    do {
      x = u(rng);
    } while (std::abs(x) < min_abs);
  }
  return Tensor64(std::move(shape), std::move(v), true);
}

/// Central difference of `loss` in one coordinate with step h.
template <typename Loss>
double central_difference(Loss& loss, double& x, double h) {
  const double keep = x;
  x = keep + h;
  const double fp = loss();
  x = keep - h;
  const double fm = loss();
  x = keep;
  return (fp - fm) / (2.0 * h);
}

enum class FiniteDifference {
  kCentral,     // (f(x+h) - f(x-h)) / 2h, truncation error O(h^2)
  kRichardson,  // (4 D(h/2) - D(h)) / 3 from the same stencil, O(h^4)
};

/// Normwise relative error of the analytic gradient of sum(f(inputs) * probe)
/// against finite differences with base step kGradStep, maximised over inputs.
inline double gradient_error(const GradFn& f, std::vector<Tensor64> inputs, std::mt19937_64& rng,
                             FiniteDifference mode = FiniteDifference::kRichardson) {
  using namespace ad;
  const Tensor64 sample = f(inputs);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> probe_v(sample.numel());
  for (auto& x : probe_v) x = n(rng);
  const Tensor64 probe(sample.shape(), probe_v);
  auto loss_of = [&](const std::vector<Tensor64>& in) { return sum(mul(f(in), probe)); };

  for (auto& t : inputs) t.zero_grad();
  backward(loss_of(inputs));

  double worst = 0.0;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    double diff2 = 0.0, an2 = 0.0, num2 = 0.0;
    const auto analytic = std::vector<double>(t.grad().begin(), t.grad().end());
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      NoGradGuard guard;
      auto loss = [&] { return loss_of(inputs).item(); };
      const double d1 = central_difference(loss, data[i], kGradStep);
      const double numeric = mode == FiniteDifference::kCentral
                                 ? d1
                                 : (4.0 * central_difference(loss, data[i], kGradStep / 2) - d1) / 3.0;
      const double a = analytic.empty() ? 0.0 : analytic[i];
      diff2 += (a - numeric) * (a - numeric);
      an2 += a * a;
      num2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(an2), std::sqrt(num2), 1e-12});
    worst = std::max(worst, std::sqrt(diff2) / denom);
  }
  return worst;
}

/// Parameters as the network initializes them, with the tensors that start
/// at zero (biases, prompt projection) drawn small so their gradients are
/// exercised too.
template <typename P>
std::vector<Tensor64> initialized(P& block, ParamList<double>& list, std::mt19937_64& rng) {
  block.init(rng);
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto& t : list.tensors()) {
    auto d = t.mutable_data();
    if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; }))
      for (auto& v : d) v = n(rng);
  }
  return list.tensors();
}

/// One random instance: the function under test and its inputs.
using GradInstance = std::pair<GradFn, std::vector<Tensor64>>;

struct GradCase {
  std::string name;
  std::function<GradInstance(std::mt19937_64&)> instance;
};

/// Worst error over kGradInstances instances, seeded by the case name.
inline double worst_gradient_error(const GradCase& c,
                                   FiniteDifference mode = FiniteDifference::kRichardson) {
  std::mt19937_64 rng(std::hash<std::string>{}(c.name));
  double worst = 0.0;
  for (int k = 0; k < kGradInstances; ++k) {
    auto [f, inputs] = c.instance(rng);
    worst = std::max(worst, gradient_error(f, std::move(inputs), rng, mode));
  }
  return worst;
}

/// Every primitive plus the composed blocks the network is built from.
inline std::vector<GradCase> gradient_cases() {
  using namespace ad;
  using R = std::mt19937_64;
  auto simple = [](std::string name, GradFn f, std::function<std::vector<Tensor64>(R&)> make) {
    return GradCase{std::move(name), [f, make](R& r) { return GradInstance{f, make(r)}; }};
  };
  std::vector<GradCase> cases;
  cases.push_back(simple("add", [](const auto& in) { return add(in[0], in[1]); },
                         [](R& r) { return std::vector{random_tensor({3, 4}, r), random_tensor({1, 4}, r)}; }));
  cases.push_back(simple("sub", [](const auto& in) { return sub(in[0], in[1]); },
                         [](R& r) { return std::vector{random_tensor({2, 3, 4}, r), random_tensor({2, 1, 4}, r)}; }));
  cases.push_back(simple("mul", [](const auto& in) { return mul(in[0], in[1]); },
                         [](R& r) { return std::vector{random_tensor({3, 5}, r), random_tensor({3, 1}, r)}; }));
  cases.push_back(simple("scale_add_scalar", [](const auto& in) { return add_scalar(scale(in[0], 1.7), -0.3); },
                         [](R& r) { return std::vector{random_tensor({4, 4}, r)}; }));
  cases.push_back(simple("matmul", [](const auto& in) { return matmul(in[0], in[1]); },
                         [](R& r) { return std::vector{random_tensor({3, 5}, r), random_tensor({5, 4}, r)}; }));
  cases.push_back(simple("conv2d_zeros",
                         [](const auto& in) { return conv2d(in[0], in[1], &in[2], {1, 1, PadMode::kZeros}); },
                         [](R& r) {
                           return std::vector{random_tensor({2, 5, 6}, r), random_tensor({3, 2, 3, 3}, r),
                                              random_tensor({3}, r)};
                         }));
  cases.push_back(simple("conv2d_strided_replicate",
                         [](const auto& in) { return conv2d(in[0], in[1], &in[2], {2, 1, PadMode::kReplicate}); },
                         [](R& r) {
                           return std::vector{random_tensor({2, 7, 6}, r), random_tensor({2, 2, 3, 3}, r),
                                              random_tensor({2}, r)};
                         }));
  cases.push_back(simple("permute_transpose",
                         [](const auto& in) { return transpose(reshape(permute(in[0], {2, 0, 1}), {4, 6})); },
                         [](R& r) { return std::vector{random_tensor({2, 3, 4}, r)}; }));
  cases.push_back(simple("reshape",
                         [](const auto& in) { return mul(reshape(in[0], {6, 2}), reshape(in[0], {6, 2})); },
                         [](R& r) { return std::vector{random_tensor({3, 4}, r)}; }));
  cases.push_back(simple("slice_concat",
                         [](const auto& in) {
                           return concat<double>({slice(in[0], 1, 1, 3), in[1], slice(in[0], 1, 0, 1)}, 1);
                         },
                         [](R& r) { return std::vector{random_tensor({2, 4, 3}, r), random_tensor({2, 2, 3}, r)}; }));
  cases.push_back(simple("reductions",
                         [](const auto& in) {
                           return concat<double>({reshape(mean(in[0]), {1}), reshape(sum(in[0]), {1}),
                                                  reshape(mean_axis(in[0], 1), {6})}, 0);
                         },
                         [](R& r) { return std::vector{random_tensor({2, 5, 3}, r)}; }));
  // Kinks at zero are kept outside the finite-difference stencil.
  cases.push_back(simple("relu", [](const auto& in) { return relu(in[0]); },
                         [](R& r) { return std::vector{random_tensor({4, 5}, r, -1, 1, 0.01)}; }));
  cases.push_back(simple("abs", [](const auto& in) { return abs(in[0]); },
                         [](R& r) { return std::vector{random_tensor({4, 5}, r, -1, 1, 0.01)}; }));
  cases.push_back(simple("gelu", [](const auto& in) { return gelu(in[0]); },
                         [](R& r) { return std::vector{random_tensor({4, 5}, r, -3, 3)}; }));
  cases.push_back(simple("softmax_rows", [](const auto& in) { return softmax(in[0], 1); },
                         [](R& r) { return std::vector{random_tensor({3, 6}, r, -2, 2)}; }));
  cases.push_back(simple("softmax_cols", [](const auto& in) { return softmax(in[0], 0); },
                         [](R& r) { return std::vector{random_tensor({4, 3}, r, -2, 2)}; }));
  cases.push_back(simple("layer_norm", [](const auto& in) { return layer_norm(in[0], 1); },
                         [](R& r) { return std::vector{random_tensor({3, 8}, r, -2, 2)}; }));
  cases.push_back(simple("bilinear_up", [](const auto& in) { return bilinear_resize(in[0], 7, 9); },
                         [](R& r) { return std::vector{random_tensor({2, 3, 4}, r)}; }));
  cases.push_back(simple("bilinear_down", [](const auto& in) { return bilinear_resize(in[0], 3, 2); },
                         [](R& r) { return std::vector{random_tensor({1, 8, 5}, r)}; }));
  cases.push_back(simple("avg_pool", [](const auto& in) { return avg_pool(in[0], 2); },
                         [](R& r) { return std::vector{random_tensor({2, 4, 6}, r)}; }));
  cases.push_back(simple("edge_loss", [](const auto& in) { return edge_loss(in[0], in[1], 0.9); },
                         [](R& r) { return std::vector{random_tensor({1, 5, 6}, r), random_tensor({1, 5, 6}, r)}; }));
  cases.push_back(simple("cross_entropy", [](const auto& in) { return cross_entropy(in[0], 1); },
                         [](R& r) { return std::vector{random_tensor({1, 3}, r, -3, 3)}; }));

  cases.push_back({"attention_block", [](R& r) {
                     auto list = std::make_shared<ParamList<double>>();
                     auto block = std::make_shared<BlockParams<double>>();
                     block->declare(*list, "b", 8, 16);
                     auto params = initialized(*block, *list, r);
                     params.insert(params.begin(), random_tensor({5, 8}, r));
                     GradFn f = [block, list](const std::vector<Tensor64>& in) {
                       return transformer_block(in[0], *block, 2);
                     };
                     return GradInstance{f, params};
                   }});
  cases.push_back({"dpt_fusion_stage", [](R& r) {
                     auto list = std::make_shared<ParamList<double>>();
                     auto stage = std::make_shared<FusionParams<double>>();
                     stage->declare(*list, "s", 6, 4, 3);
                     auto params = initialized(*stage, *list, r);
                     params.push_back(random_tensor({6, 2, 2}, r));  // encoder tap
                     params.push_back(random_tensor({3, 3, 3}, r));  // previous stage
                     params.push_back(random_tensor({4, 5, 5}, r));  // prompt injection
                     GradFn f = [stage, list](const std::vector<Tensor64>& in) {
                       const std::size_t n = in.size();
                       const auto re = reassemble(in[n - 3], 5, *stage);
                       return fusion_stage(&in[n - 2], re, &in[n - 1], *stage);
                     };
                     return GradInstance{f, params};
                   }});
  cases.push_back({"prompt_fusion_inject", [](R& r) {
                     auto list = std::make_shared<ParamList<double>>();
                     auto inject = std::make_shared<InjectParams<double>>();
                     inject->declare(*list, "p", 3, 4);
                     auto params = initialized(*inject, *list, r);
                     params.insert(params.begin(), random_tensor({1, 3, 3}, r));
                     GradFn f = [inject, list](const std::vector<Tensor64>& in) {
                       return prompt_fusion_inject(in[0], 6, 6, *inject);
                     };
                     return GradInstance{f, params};
                   }});
  return cases;
}

}  // namespace p2d::test

#endif  // P2D_TESTS_GRADCHECK_HPP_
