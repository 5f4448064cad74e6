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

#include "p2d/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "p2d/ad/adam.hpp"

namespace p2d {
namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Prompt noise seed derived from the sample seed and the prompt kind, so
/// every regime draws an independent but reproducible stream.
std::uint64_t prompt_seed(std::uint64_t sample, PromptKind kind) {
  return mix(sample ^ (0xa0761d6478bd642fULL * (static_cast<std::uint64_t>(kind) + 1)));
}

template <typename V>
std::array<V, 4> array4(const nlohmann::json& j, const char* key, std::array<V, 4> fallback) {
  if (!j.contains(key)) return fallback;
  const auto v = j.at(key).get<std::vector<V>>();
  if (v.size() != 4) throw std::invalid_argument(std::string("model.") + key + " needs 4 entries");
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace

void PromptSpec::validate() const {
  if (kind == PromptKind::kLowRes && factor < 2) {
    throw std::invalid_argument("PromptSpec: factor must be >= 2");
  }
  if (kind == PromptKind::kVoidFilled && factor < 1) {
    throw std::invalid_argument("PromptSpec: factor must be >= 1");
  }
  if (!(hole_fraction > 0.0 && hole_fraction < 1.0)) {
    throw std::invalid_argument("PromptSpec: hole_fraction must lie in (0,1)");
  }
  if (!(bias_sigma >= 0.0)) throw std::invalid_argument("PromptSpec: bias_sigma must be >= 0");
}

Example build_example(const SceneSample& sample, const PromptSpec& spec, std::uint64_t seed,
                      double norm_scale) {
  spec.validate();
  const RasterGrid& dsm = sample.dsm;
  if (!sample.dtm.same_shape(dsm) || sample.rgb[0].rows() != dsm.rows() ||
      sample.rgb[0].cols() != dsm.cols()) {
    throw std::invalid_argument("build_example: sample layers have different dimensions");
  }
  Example ex;
  ex.truth = dsm;
  const RasterGrid* canopy = sample.canopy_mask.size() == dsm.size() ? &sample.canopy_mask : nullptr;
  switch (spec.kind) {
    case PromptKind::kLowRes:
      ex.prompt_raster = degrade_to_prompt(dsm, canopy, spec.factor, spec.bias_sigma,
                                           spec.canopy_bias, seed);
      ex.baseline = bilinear_resample(ex.prompt_raster, dsm.rows(), dsm.cols());
      break;
    case PromptKind::kVoidFilled: {
      const RasterGrid coarse = degrade_to_prompt(dsm, canopy, spec.factor, spec.bias_sigma,
                                                  spec.canopy_bias, seed);
      ex.prompt_raster = carve_void(dsm, coarse, spec.hole_fraction);
      ex.baseline = ex.prompt_raster;
      ex.hole_mask = void_mask(dsm.rows(), dsm.cols(), spec.hole_fraction);
      ex.hole_mask.copy_georef(dsm);
      break;
    }
    case PromptKind::kTerrainOnly:
      ex.prompt_raster = terrain_only_prompt(sample);
      ex.baseline = ex.prompt_raster;
      break;
  }
  auto norm = normalize_io(ex.prompt_raster, &dsm, norm_scale);
  ex.prompt = norm.prompt;
  ex.target = *norm.target;
  ex.norm = norm.norm;
  ex.rgb = rgb_tensor(sample.rgb);
  return ex;
}

std::uint64_t sample_seed(std::uint64_t base, SceneClass scene, std::uint64_t stream,
                          std::size_t index) {
  return mix(mix(mix(base) ^ (static_cast<std::uint64_t>(scene) + 1) * 0x632be59bd9b4e019ULL) ^
             (stream << 40) ^ static_cast<std::uint64_t>(index));
}

std::vector<SceneSample> generate_dataset(SceneClass scene, std::size_t count, std::uint64_t seed,
                                          std::uint64_t stream, std::size_t size) {
  std::vector<SceneSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto params = sample_scene_params(scene, sample_seed(seed, scene, stream, i), size);
    out.push_back(generate_terrain(params));
    out.back().scene_class = scene;
  }
  return out;
}

nlohmann::ordered_json model_config_json(const ModelConfig& c) {
  return {{"input_size", c.input_size},
          {"vit_patch", c.vit_patch},
          {"embed_dim", c.embed_dim},
          {"depth", c.depth},
          {"heads", c.heads},
          {"mlp_ratio", c.mlp_ratio},
          {"tap_layers", c.tap_layers},
          {"decoder_channels", c.decoder_channels},
          {"fusion_stages", c.fusion_stages},
          {"prompt_hidden", c.prompt_hidden},
          {"head_hidden", c.head_hidden}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
  c.input_size = j.value("input_size", c.input_size);
  c.vit_patch = j.value("vit_patch", c.vit_patch);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.depth = j.value("depth", c.depth);
  c.heads = j.value("heads", c.heads);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.tap_layers = array4(j, "tap_layers", c.tap_layers);
  c.decoder_channels = array4(j, "decoder_channels", c.decoder_channels);
  c.fusion_stages = array4(j, "fusion_stages", c.fusion_stages);
  c.prompt_hidden = j.value("prompt_hidden", c.prompt_hidden);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (!(lambda_edge >= 0.0)) throw std::invalid_argument("TrainConfig: lambda_edge must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("TrainConfig: val_fraction must lie in [0,1)");
  }
  if (!(norm_scale > 0.0)) throw std::invalid_argument("TrainConfig: norm_scale must be > 0");
  model.validate();
  prompt.validate();
}

nlohmann::ordered_json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"finetune_epochs", finetune_epochs},
          {"lambda_edge", lambda_edge},
          {"seed", seed},
          {"n_samples", n_samples},
          {"val_fraction", val_fraction},
          {"norm_scale", norm_scale},
          {"prompt",
           {{"factor", prompt.factor},
            {"hole_fraction", prompt.hole_fraction},
            {"bias_sigma", prompt.bias_sigma},
            {"canopy_bias", prompt.canopy_bias}}},
          {"model", model_config_json(model)}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.finetune_epochs = j.value("finetune_epochs", c.finetune_epochs);
  c.lambda_edge = j.value("lambda_edge", c.lambda_edge);
  c.seed = j.value("seed", c.seed);
  c.n_samples = j.value("n_samples", c.n_samples);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.norm_scale = j.value("norm_scale", c.norm_scale);
  if (j.contains("prompt")) {
    const auto& p = j.at("prompt");
    c.prompt.factor = p.value("factor", c.prompt.factor);
    c.prompt.hole_fraction = p.value("hole_fraction", c.prompt.hole_fraction);
    c.prompt.bias_sigma = p.value("bias_sigma", c.prompt.bias_sigma);
    c.prompt.canopy_bias = p.value("canopy_bias", c.prompt.canopy_bias);
  }
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  c.validate();
  return c;
}

nlohmann::ordered_json TrainResult::manifest() const {
  nlohmann::ordered_json curve_json = nlohmann::ordered_json::array();
  for (const auto& e : curve) {
    curve_json.push_back({{"epoch", e.epoch}, {"train", e.train}, {"validation", e.validation}});
  }
  return {{"schema_version", 1},
          {"config_echo", weights.config_echo},
          {"initial_validation", initial_validation},
          {"epochs", curve_json}};
}

double norm_scale_from_echo(const std::string& echo, double fallback) {
  const std::string key = "norm_scale=";
  std::size_t pos = 0;
  while (pos < echo.size()) {
    const std::size_t end = std::min(echo.find('\n', pos), echo.size());
    if (echo.compare(pos, key.size(), key) == 0) {
      return std::stod(echo.substr(pos + key.size(), end - pos - key.size()));
    }
    pos = end + 1;
  }
  return fallback;
}

double evaluate_loss(const PromptDepthNet<float>& net, const std::vector<Example>& examples,
                     double lambda_edge) {
  if (examples.empty()) return 0.0;
  ad::NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& ex : examples) {
    const auto pred = net.forward(ex.rgb, &ex.prompt);
    total += edge_loss(ex.target, pred, static_cast<float>(lambda_edge)).item();
  }
  return total / static_cast<double>(examples.size());
}

RasterGrid predict(const PromptDepthNet<float>& net, const Example& example) {
  ad::NoGradGuard no_grad;
  return denormalize(net.forward(example.rgb, &example.prompt), example.norm, example.truth);
}

TrainResult train(PromptKind task, SceneClass scene, const TrainConfig& config,
                  const WeightStore* init, const std::vector<SceneSample>* dataset,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (task != PromptKind::kLowRes && init == nullptr) {
    throw MissingInitError("training the '" + std::string(to_string(task)) + "/" +
                           std::string(to_string(scene)) +
                           "' model needs the lowres checkpoint for the same class as init");
  }
  std::vector<SceneSample> generated;
  if (!dataset) {
    generated = generate_dataset(scene, config.n_samples, config.seed, 0, config.model.input_size);
    dataset = &generated;
  }
  if (dataset->empty()) throw EmptyDatasetError("train: dataset is empty");

  PromptSpec spec = config.prompt;
  spec.kind = task;
  std::vector<Example> examples;
  examples.reserve(dataset->size());
  for (const auto& s : *dataset) {
    if (s.dsm.rows() != config.model.input_size || s.dsm.cols() != config.model.input_size) {
      throw std::invalid_argument("train: sample size does not match model input_size");
    }
    examples.push_back(build_example(s, spec, prompt_seed(s.seed, task), config.norm_scale));
  }
  const std::size_t n = examples.size();
  std::size_t n_val = static_cast<std::size_t>(std::lround(config.val_fraction * static_cast<double>(n)));
  if (n_val >= n) n_val = n - 1;
  const std::vector<Example> val(examples.end() - static_cast<std::ptrdiff_t>(n_val), examples.end());
  examples.resize(n - n_val);

  PromptDepthNet<float> net(config.model, mix(config.seed ^ 0x5eedULL));
  if (init) net.load(*init);
  ad::AdamState adam;
  adam.lr = config.lr;
  auto& params = net.params().tensors();

  TrainResult result;
  result.initial_validation = evaluate_loss(net, val.empty() ? examples : val, config.lambda_edge);
  const std::size_t epochs = task == PromptKind::kLowRes ? config.epochs : config.finetune_epochs;
  std::vector<std::size_t> order(examples.size());
  const auto lambda = static_cast<float>(config.lambda_edge);
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix(config.seed * 1315423911ULL + epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t end = std::min(order.size(), b + config.batch_size);
      const float inv = 1.0f / static_cast<float>(end - b);
      net.params().zero_grad();
      // Per-sample backward of loss / B accumulates the batch-mean gradient.
      for (std::size_t k = b; k < end; ++k) {
        const Example& ex = examples[order[k]];
        const auto loss = edge_loss(ex.target, net.forward(ex.rgb, &ex.prompt), lambda);
        epoch_loss += loss.item();
        ad::backward(ad::scale(loss, inv));
      }
      ad::adam_step(params, adam);
    }
    EpochLoss e;
    e.epoch = epoch;
    e.train = epoch_loss / static_cast<double>(order.size());
    e.validation = evaluate_loss(net, val.empty() ? examples : val, config.lambda_edge);
    result.curve.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  result.weights = net.to_store();
  char line[64];
  std::snprintf(line, sizeof line, "norm_scale=%.17g\n", config.norm_scale);
  result.weights.config_echo += line;
  return result;
}

ClassifierResult train_classifier(const ClassifierTrainConfig& config,
                                  const std::function<void(std::size_t, double)>& on_epoch) {
  config.model.validate();
  if (config.per_class == 0) throw EmptyDatasetError("train_classifier: per_class is 0");
  std::vector<ad::Tensor> images;
  std::vector<std::size_t> labels;
  for (SceneClass scene : kAllSceneClasses) {
    for (const auto& s : generate_dataset(scene, config.per_class, config.seed, 2,
                                          config.model.input_size)) {
      images.push_back(rgb_tensor(s.rgb));
      labels.push_back(static_cast<std::size_t>(scene));
    }
  }
  SceneClassifier<float> clf(config.model, mix(config.seed ^ 0xc1a5ULL));
  ad::AdamState adam;
  adam.lr = config.lr;
  ClassifierResult result;
  std::vector<std::size_t> order(images.size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix(config.seed * 2654435761ULL + epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t end = std::min(order.size(), b + config.batch_size);
      const float inv = 1.0f / static_cast<float>(end - b);
      clf.params().zero_grad();
      for (std::size_t k = b; k < end; ++k) {
        const auto loss = cross_entropy(clf.logits(images[order[k]]), labels[order[k]]);
        total += loss.item();
        ad::backward(ad::scale(loss, inv));
      }
      ad::adam_step(clf.params().tensors(), adam);
    }
    result.epoch_loss.push_back(total / static_cast<double>(order.size()));
    if (on_epoch) on_epoch(epoch, result.epoch_loss.back());
  }
  result.weights = clf.to_store();
  return result;
}

double macro_f1(const std::vector<SceneClass>& truth, const std::vector<SceneClass>& predicted) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("macro_f1: length mismatch");
  double sum = 0.0;
  for (SceneClass c : kAllSceneClasses) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == c, p = predicted[i] == c;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
    const double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp + fn);
    sum += denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
  }
  return sum / static_cast<double>(kAllSceneClasses.size());
}

}  // namespace p2d
