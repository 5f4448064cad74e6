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

#ifndef P2D_TRAINING_HPP_
#define P2D_TRAINING_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "p2d/ad/ops.hpp"
#include "p2d/model.hpp"
#include "p2d/terrain.hpp"
#include "p2d/types.hpp"
#include "p2d/weights.hpp"

namespace p2d {

struct PromptSpec {
  PromptKind kind = PromptKind::kLowRes;
  std::size_t factor = 8;        // coarse prompt downsample factor
  double hole_fraction = 0.5;    // void side / patch side
  double bias_sigma = 2.0;       // per-cell prompt noise, meters
  double canopy_bias = 3.0;      // added per unit canopy cover, meters

  void validate() const;
};

/// L1 term plus lambda times the mean absolute forward difference of the
/// residual along each spatial axis. Inputs are [C,H,W] (typically C = 1).
template <typename T>
ad::BasicTensor<T> edge_loss(const ad::BasicTensor<T>& truth, const ad::BasicTensor<T>& pred,
                             T lambda) {
  if (truth.shape() != pred.shape()) {
    ad::shape_fail("edge_loss", "shapes differ: " + ad::shape_str(truth.shape()) + " vs " +
                                    ad::shape_str(pred.shape()));
  }
  if (pred.rank() != 3) ad::shape_fail("edge_loss", "expected [C,H,W], got " + ad::shape_str(pred.shape()));
  const auto d = ad::sub(pred, truth);
  auto loss = ad::mean(ad::abs(d));
  if (lambda == T(0)) return loss;
  const std::size_t h = d.dim(1), w = d.dim(2);
  std::optional<ad::BasicTensor<T>> edge;
  if (w > 1) {
    const auto dx = ad::sub(ad::slice(d, 2, 1, w), ad::slice(d, 2, 0, w - 1));
    edge = ad::mean(ad::abs(dx));
  }
  if (h > 1) {
    const auto dy = ad::sub(ad::slice(d, 1, 1, h), ad::slice(d, 1, 0, h - 1));
    const auto term = ad::mean(ad::abs(dy));
    edge = edge ? ad::add(*edge, term) : term;
  }
  if (!edge) return loss;
  return ad::add(loss, ad::scale(*edge, lambda));
}

/// Softmax cross-entropy of logits [1,K] against class `label`.
template <typename T>
ad::BasicTensor<T> cross_entropy(const ad::BasicTensor<T>& logits, std::size_t label) {
  if (logits.rank() != 2 || logits.dim(0) != 1 || label >= logits.dim(1)) {
    ad::shape_fail("cross_entropy", "expected [1,K] logits and label < K");
  }
  T peak = logits.data()[0];
  for (T v : logits.data()) peak = std::max(peak, v);
  const auto shifted = ad::add_scalar(logits, -peak);
  const auto ex = ad::unary("exp", shifted, [](T x) { return std::exp(x); },
                            [](T x, T y) { (void)x; return y; });
  const auto lse = ad::unary("log", ad::sum(ex), [](T x) { return std::log(x); },
                             [](T x, T) { return T(1) / x; });
  return ad::sub(lse, ad::reshape(ad::slice(shifted, 1, label, label + 1), {}));
}

/// One training/evaluation example in model units.
struct Example {
  ad::Tensor rgb;      // [3,S,S]
  ad::Tensor prompt;   // [1,h,w] normalized
  ad::Tensor target;   // [1,S,S] normalized
  NormRecord norm;
  RasterGrid prompt_raster;  // prompt in meters as fed to the network
  RasterGrid baseline;       // prompt bilinearly resampled to S x S, meters
  RasterGrid truth;          // target in meters
  RasterGrid hole_mask;      // VoidFilled only: 1 inside the void
};

/// Builds the prompt for `spec` from the sample and normalizes it. The
/// prompt noise stream is keyed by `seed`.
Example build_example(const SceneSample& sample, const PromptSpec& spec, std::uint64_t seed,
                      double norm_scale = 100.0);

/// Deterministic per-class sample seeds: disjoint streams for different
/// `stream` values (train, held-out test, ...).
std::uint64_t sample_seed(std::uint64_t base, SceneClass scene, std::uint64_t stream,
                          std::size_t index);

std::vector<SceneSample> generate_dataset(SceneClass scene, std::size_t count, std::uint64_t seed,
                                          std::uint64_t stream, std::size_t size = 64);

/// JSON view of a model config; absent keys keep the values of `base`.
nlohmann::ordered_json model_config_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

struct TrainConfig {
  double lr = 5e-5;
  std::size_t batch_size = 2;
  std::size_t epochs = 10;  // LowRes stage; fine-tune stages use finetune_epochs
  std::size_t finetune_epochs = 5;
  double lambda_edge = 0.9;
  std::uint64_t seed = 0;
  std::size_t n_samples = 200;  // per class, split 80/20 train/validation
  double val_fraction = 0.2;
  double norm_scale = 100.0;
  ModelConfig model;
  PromptSpec prompt;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

class MissingInitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyDatasetError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EpochLoss {
  std::size_t epoch = 0;
  double train = 0.0;
  double validation = 0.0;
};

struct TrainResult {
  WeightStore weights;
  double initial_validation = 0.0;
  std::vector<EpochLoss> curve;
  nlohmann::ordered_json manifest() const;
};

/// Called after each epoch; useful for progress output.
using EpochCallback = std::function<void(const EpochLoss&)>;

/// Trains one (task, scene) model. LowRes starts from random weights and runs
/// config.epochs; VoidFilled and TerrainOnly require `init` (the LowRes
/// checkpoint) and run config.finetune_epochs. `dataset` overrides the
/// generated samples (validation is still the trailing val_fraction).
TrainResult train(PromptKind task, SceneClass scene, const TrainConfig& config,
                  const WeightStore* init = nullptr,
                  const std::vector<SceneSample>* dataset = nullptr,
                  const EpochCallback& on_epoch = {});

/// Normalization scale recorded in a weight file's config echo by train();
/// `fallback` when absent.
double norm_scale_from_echo(const std::string& echo, double fallback = 100.0);

/// Mean edge loss of `net` over the examples, without recording a graph.
double evaluate_loss(const PromptDepthNet<float>& net, const std::vector<Example>& examples,
                     double lambda_edge);

/// Prediction in meters for one example.
RasterGrid predict(const PromptDepthNet<float>& net, const Example& example);

struct ClassifierTrainConfig {
  double lr = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 2;
  std::size_t per_class = 300;
  std::uint64_t seed = 0;
  ClassifierConfig model;
};

struct ClassifierResult {
  WeightStore weights;
  std::vector<double> epoch_loss;
};

ClassifierResult train_classifier(const ClassifierTrainConfig& config,
                                  const std::function<void(std::size_t, double)>& on_epoch = {});

/// Macro-averaged F1 over the three classes.
double macro_f1(const std::vector<SceneClass>& truth, const std::vector<SceneClass>& predicted);

}  // namespace p2d

#endif  // P2D_TRAINING_HPP_
