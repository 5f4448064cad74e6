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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "p2d/ad/adam.hpp"
#include "p2d/ad/ops.hpp"
#include "p2d/model.hpp"
#include "p2d/raster.hpp"
#include "p2d/training.hpp"
#include "gradcheck.hpp"

namespace p2d::ad {
namespace {

using test::random_tensor;

// --- textbook values -------------------------------------------------------

TEST(AutodiffValues, MatmulIdentity) {
  std::mt19937_64 rng(1);
  const auto x = random_tensor({3, 4}, rng);
  std::vector<double> eye(9, 0.0);
  eye[0] = eye[4] = eye[8] = 1.0;
  const auto y = matmul(Tensor64({3, 3}, eye), x);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(AutodiffValues, SoftmaxOfConstant) {
  const auto s = softmax(Tensor::full({1, 7}, 3.0f), 1);
  for (float v : s.data()) EXPECT_NEAR(v, 1.0f / 7.0f, 1e-7);
}

TEST(AutodiffValues, PointwiseConvHandValue) {
  const Tensor x({1, 2, 2}, {1, 2, 3, 4});
  const Tensor w({1, 1, 1, 1}, {2});
  const auto y = conv2d(x, w, static_cast<const Tensor*>(nullptr));
  EXPECT_EQ(y.values(), (std::vector<float>{2, 4, 6, 8}));
}

TEST(AutodiffValues, ConvShapeErrorNamesOp) {
  const Tensor x({2, 4, 4}, std::vector<float>(32, 0));
  const Tensor w({1, 3, 3, 3}, std::vector<float>(27, 0));
  try {
    conv2d(x, w, static_cast<const Tensor*>(nullptr));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("conv2d"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("2,4,4"), std::string::npos);
  }
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
}

TEST(AutodiffValues, BilinearMatchesRasterResample) {
  std::mt19937 rng(4);
  std::uniform_real_distribution<float> u(-5, 5);
  RasterGrid g(5, 7);
  for (auto& v : g.values()) v = u(rng);
  const auto ref = bilinear_resample(g, 11, 13);
  const Tensor t({1, 5, 7}, std::vector<float>(g.values().begin(), g.values().end()));
  const auto out = bilinear_resize(t, 11, 13);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_EQ(out.data()[i], ref.values()[i]);
}

TEST(AutodiffValues, AvgPoolAndLayerNorm) {
  const Tensor x({1, 2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(avg_pool(x, 2).item(), 2.5f);
  const auto ln = layer_norm(Tensor64({1, 4}, {1, 2, 3, 4}), 1, 0.0);
  double mean = 0, var = 0;
  for (double v : ln.data()) mean += v / 4;
  for (double v : ln.data()) var += (v - mean) * (v - mean) / 4;
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(var, 1.0, 1e-12);
}

// --- backward contract -----------------------------------------------------

TEST(Backward, SumGivesOnes) {
  auto x = Tensor::zeros({2, 3, 4}, true);
  backward(sum(x));
  for (float g : x.grad()) EXPECT_EQ(g, 1.0f);
}

TEST(Backward, MeanSquareAndAccumulation) {
  auto x = Tensor64::scalar(3.0, true);
  backward(mean(mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  backward(mean(mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
  x.zero_grad();
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
}

TEST(Backward, RejectsNonScalar) {
  auto x = Tensor::zeros({2}, true);
  EXPECT_THROW(backward(scale(x, 2.0f)), ShapeError);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  auto x = Tensor::full({2}, 1.0f, true);
  Tensor y;
  {
    NoGradGuard guard;
    y = mul(x, x);
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(mul(x, x).requires_grad());
}

// --- Adam ------------------------------------------------------------------

TEST(Adam, ZeroGradsLeaveParams) {
  std::vector<Tensor> p{Tensor::full({3}, 2.0f, true)};
  p[0].mutable_grad();
  AdamState s;
  s.lr = 0.1;
  adam_step(p, s);
  for (float v : p[0].data()) EXPECT_EQ(v, 2.0f);
}

TEST(Adam, FirstStepMovesByLr) {
  std::vector<Tensor64> p{Tensor64::scalar(1.0, true)};
  p[0].mutable_grad()[0] = 1.0;
  AdamState s;
  s.lr = 1e-3;
  adam_step(p, s);
  // mhat = 1, vhat = 1: update = lr / (1 + eps).
  EXPECT_NEAR(1.0 - p[0].item(), 1e-3, 1e-6);
  adam_step(p, s);
  EXPECT_NEAR(1.0 - p[0].item(), 2e-3, 1e-6);
}

TEST(Adam, IdenticalParamsEvolveIdentically) {
  std::vector<Tensor> p{Tensor::full({2}, 0.5f, true), Tensor::full({2}, 0.5f, true)};
  AdamState s;
  s.lr = 0.01;
  for (int k = 0; k < 10; ++k) {
    for (auto& t : p) {
      t.mutable_grad()[0] = 0.3f * k;
      t.mutable_grad()[1] = -1.0f;
    }
    adam_step(p, s);
  }
  EXPECT_EQ(p[0].values(), p[1].values());
}

TEST(Adam, MissingGradThrows) {
  std::vector<Tensor> p{Tensor::full({2}, 0.5f, true)};
  AdamState s;
  EXPECT_THROW(adam_step(p, s), MissingGradError);
}

// --- finite-difference checks, primitives and composed blocks ---------------

class GradCheck : public ::testing::TestWithParam<test::GradCase> {};

TEST_P(GradCheck, MatchesCentralDifferences) {
  EXPECT_LT(test::worst_gradient_error(GetParam()), test::kGradTolerance);
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradCheck, ::testing::ValuesIn(test::gradient_cases()),
                         [](const auto& info) { return info.param.name; });

TEST(GradCheck, Float32WithinLooseTolerance) {
  std::mt19937_64 rng(30);
  std::uniform_real_distribution<float> u(-1, 1);
  std::vector<float> xv(12), wv(12);
  for (auto& v : xv) v = u(rng);
  for (auto& v : wv) v = u(rng);
  Tensor x({3, 4}, xv, true);
  const Tensor w({4, 3}, wv);
  auto loss = [&] { return sum(gelu(matmul(x, w))); };
  backward(loss());
  const std::vector<float> analytic(x.grad().begin(), x.grad().end());
  double diff2 = 0, norm2 = 0;
  for (std::size_t i = 0; i < 12; ++i) {
    const float keep = x.mutable_data()[i];
    NoGradGuard guard;
    x.mutable_data()[i] = keep + 1e-2f;
    const double fp = loss().item();
    x.mutable_data()[i] = keep - 1e-2f;
    const double fm = loss().item();
    x.mutable_data()[i] = keep;
    const double num = (fp - fm) / 2e-2;
    diff2 += (analytic[i] - num) * (analytic[i] - num);
    norm2 += num * num;
  }
  EXPECT_LT(std::sqrt(diff2 / norm2), 1e-3);
}

}  // namespace
}  // namespace p2d::ad
