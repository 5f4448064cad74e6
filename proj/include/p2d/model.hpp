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

// Prompt-fusion elevation network: a ViT encoder tapped at four depths, a
// DPT-style coarse-to-fine decoder, and per-stage prompt injection through a
// zero-initialized projection. Also hosts the scene classifier.

#ifndef P2D_MODEL_HPP_
#define P2D_MODEL_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "p2d/ad/ops.hpp"
#include "p2d/raster.hpp"
#include "p2d/types.hpp"
#include "p2d/weights.hpp"

namespace p2d {

struct ModelConfig {
  std::size_t input_size = 64;
  std::size_t vit_patch = 8;
  std::size_t embed_dim = 64;
  std::size_t depth = 4;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::array<std::size_t, 4> tap_layers{1, 2, 3, 4};
  std::array<std::size_t, 4> decoder_channels{64, 64, 64, 64};
  std::array<bool, 4> fusion_stages{true, true, true, true};
  std::size_t prompt_hidden = 16;
  std::size_t head_hidden = 16;

  std::size_t grid() const { return input_size / vit_patch; }
  std::size_t tokens() const { return grid() * grid(); }
  /// Decoder stage k (0 = coarsest) works at input_size / 2^(4-k); the head
  /// upsamples the last stage by two to the input size.
  std::size_t stage_size(std::size_t k) const { return input_size >> (4 - k); }

  void validate() const;
  /// "key=value" lines; stored verbatim in weight files.
  std::string echo() const;
  static ModelConfig parse_echo(std::string_view text);
  bool operator==(const ModelConfig&) const = default;
};

struct ClassifierConfig {
  std::size_t input_size = 64;
  std::size_t vit_patch = 16;
  std::size_t embed_dim = 64;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;

  void validate() const;
  std::string echo() const;
  static ClassifierConfig parse_echo(std::string_view text);
  bool operator==(const ClassifierConfig&) const = default;
};

/// Per-patch normalization record: normalized = (meters - mean) / scale.
struct NormRecord {
  double mean = 0.0;
  double scale = 100.0;
};

/// Normalizes a prompt (and optionally the matching target) by the prompt
/// mean; throws when the prompt has no valid cell. Nodata cells in the prompt
/// are replaced by the mean (normalized 0).
struct NormalizedPair {
  ad::Tensor prompt;
  std::optional<ad::Tensor> target;
  NormRecord norm;
};
NormalizedPair normalize_io(const RasterGrid& prompt, const RasterGrid* hr_target,
                            double scale = 100.0);
RasterGrid denormalize(const ad::Tensor& normalized, const NormRecord& norm,
                       const RasterGrid& georef);

/// Stacks three planes into a [3,H,W] tensor.
ad::Tensor rgb_tensor(const std::array<RasterGrid, 3>& rgb);

// ---------------------------------------------------------------------------
// Parameter plumbing

template <typename T>
class ParamList {
 public:
  ad::BasicTensor<T> add(std::string name, ad::Shape shape) {
    auto t = ad::BasicTensor<T>::zeros(std::move(shape), true);
    names_.push_back(std::move(name));
    tensors_.push_back(t);
    return t;
  }
  std::vector<ad::BasicTensor<T>>& tensors() { return tensors_; }
  const std::vector<ad::BasicTensor<T>>& tensors() const { return tensors_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }
  void zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
  }

 private:
  std::vector<std::string> names_;
  std::vector<ad::BasicTensor<T>> tensors_;
};

namespace detail {

template <typename T>
void fill_normal(ad::BasicTensor<T>& t, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.mutable_data()) v = static_cast<T>(dist(rng));
}

template <typename T>
void fill_const(ad::BasicTensor<T>& t, T value) {
  for (auto& v : t.mutable_data()) v = value;
}

template <typename T>
ad::BasicTensor<T> linear(const ad::BasicTensor<T>& x, const ad::BasicTensor<T>& w,
                          const ad::BasicTensor<T>& b) {
  return ad::add(ad::matmul(x, w), b);
}

template <typename T>
ad::BasicTensor<T> conv_same(const ad::BasicTensor<T>& x, const ad::BasicTensor<T>& w,
                             const ad::BasicTensor<T>& b) {
  const std::size_t k = w.dim(2);
  return ad::conv2d(x, w, &b, {1, k / 2, ad::PadMode::kReplicate});
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Transformer block

template <typename T>
struct BlockParams {
  ad::BasicTensor<T> ln1_gain, ln1_bias, qkv_w, qkv_b, proj_w, proj_b;
  ad::BasicTensor<T> ln2_gain, ln2_bias, fc1_w, fc1_b, fc2_w, fc2_b;

  void declare(ParamList<T>& p, const std::string& prefix, std::size_t dim, std::size_t hidden) {
    ln1_gain = p.add(prefix + ".ln1.gain", {dim});
    ln1_bias = p.add(prefix + ".ln1.bias", {dim});
    qkv_w = p.add(prefix + ".attn.qkv.weight", {dim, 3 * dim});
    qkv_b = p.add(prefix + ".attn.qkv.bias", {3 * dim});
    proj_w = p.add(prefix + ".attn.proj.weight", {dim, dim});
    proj_b = p.add(prefix + ".attn.proj.bias", {dim});
    ln2_gain = p.add(prefix + ".ln2.gain", {dim});
    ln2_bias = p.add(prefix + ".ln2.bias", {dim});
    fc1_w = p.add(prefix + ".mlp.fc1.weight", {dim, hidden});
    fc1_b = p.add(prefix + ".mlp.fc1.bias", {hidden});
    fc2_w = p.add(prefix + ".mlp.fc2.weight", {hidden, dim});
    fc2_b = p.add(prefix + ".mlp.fc2.bias", {dim});
  }

  void init(std::mt19937_64& rng) {
    const double dim = static_cast<double>(qkv_w.dim(0));
    const double hidden = static_cast<double>(fc1_w.dim(1));
    detail::fill_const(ln1_gain, T(1));
    detail::fill_const(ln2_gain, T(1));
    detail::fill_normal(qkv_w, rng, 1.0 / std::sqrt(dim));
    detail::fill_normal(proj_w, rng, 0.5 / std::sqrt(dim));
    detail::fill_normal(fc1_w, rng, 1.0 / std::sqrt(dim));
    detail::fill_normal(fc2_w, rng, 0.5 / std::sqrt(hidden));
  }
};

/// Multi-head self-attention over x[N,D].
template <typename T>
ad::BasicTensor<T> self_attention(const ad::BasicTensor<T>& x, const BlockParams<T>& p,
                                  std::size_t heads) {
  const std::size_t d = x.dim(1);
  const std::size_t hd = d / heads;
  const auto qkv = detail::linear(x, p.qkv_w, p.qkv_b);
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  std::vector<ad::BasicTensor<T>> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto q = ad::slice(qkv, 1, h * hd, (h + 1) * hd);
    const auto k = ad::slice(qkv, 1, d + h * hd, d + (h + 1) * hd);
    const auto v = ad::slice(qkv, 1, 2 * d + h * hd, 2 * d + (h + 1) * hd);
    const auto att = ad::softmax(ad::scale(ad::matmul(q, ad::transpose(k)), scale), 1);
    outs.push_back(ad::matmul(att, v));
  }
  const auto merged = heads == 1 ? outs.front() : ad::concat(outs, 1);
  return detail::linear(merged, p.proj_w, p.proj_b);
}

/// Pre-norm transformer block: x + MHSA(LN(x)), then + MLP(LN(.)) with GELU.
template <typename T>
ad::BasicTensor<T> transformer_block(const ad::BasicTensor<T>& x, const BlockParams<T>& p,
                                     std::size_t heads) {
  const auto h1 = ad::add(ad::mul(ad::layer_norm(x, 1), p.ln1_gain), p.ln1_bias);
  const auto x1 = ad::add(x, self_attention(h1, p, heads));
  const auto h2 = ad::add(ad::mul(ad::layer_norm(x1, 1), p.ln2_gain), p.ln2_bias);
  const auto mlp = detail::linear(ad::gelu(detail::linear(h2, p.fc1_w, p.fc1_b)), p.fc2_w, p.fc2_b);
  return ad::add(x1, mlp);
}

// ---------------------------------------------------------------------------
// ViT encoder

template <typename T>
struct VitEncoder {
  std::size_t patch = 8, dim = 64, heads = 4, grid = 8;
  ad::BasicTensor<T> patch_w, patch_b, pos;
  std::vector<BlockParams<T>> blocks;

  void declare(ParamList<T>& p, const std::string& prefix, std::size_t input_size,
               std::size_t patch_size, std::size_t embed_dim, std::size_t depth,
               std::size_t n_heads, std::size_t mlp_ratio) {
    patch = patch_size;
    dim = embed_dim;
    heads = n_heads;
    grid = input_size / patch_size;
    patch_w = p.add(prefix + ".patch_embed.weight", {dim, 3, patch, patch});
    patch_b = p.add(prefix + ".patch_embed.bias", {dim});
    pos = p.add(prefix + ".pos_embed", {grid * grid, dim});
    blocks.resize(depth);
    for (std::size_t i = 0; i < depth; ++i) {
      blocks[i].declare(p, prefix + ".blocks." + std::to_string(i), dim, dim * mlp_ratio);
    }
  }

  void init(std::mt19937_64& rng) {
    detail::fill_normal(patch_w, rng, 1.0 / std::sqrt(3.0 * static_cast<double>(patch * patch)));
    detail::fill_normal(pos, rng, 0.02);
    for (auto& b : blocks) b.init(rng);
  }

  /// Token matrix [N, D] before the transformer blocks.
  ad::BasicTensor<T> embed(const ad::BasicTensor<T>& rgb) const {
    const auto fmap = ad::conv2d(rgb, patch_w, &patch_b, {patch, 0, ad::PadMode::kZeros});
    const auto tokens = ad::transpose(ad::reshape(fmap, {dim, grid * grid}));
    return ad::add(tokens, pos);
  }

  /// Runs all blocks; returns the token matrix after every block.
  std::vector<ad::BasicTensor<T>> run(const ad::BasicTensor<T>& rgb) const {
    if (rgb.rank() != 3 || rgb.dim(0) != 3 || rgb.dim(1) != grid * patch ||
        rgb.dim(2) != grid * patch) {
      ad::shape_fail("vit_encode", "expected rgb [3," + std::to_string(grid * patch) + "," +
                                       std::to_string(grid * patch) + "], got " +
                                       ad::shape_str(rgb.shape()));
    }
    std::vector<ad::BasicTensor<T>> outs;
    auto x = embed(rgb);
    for (const auto& b : blocks) {
      x = transformer_block(x, b, heads);
      outs.push_back(x);
    }
    return outs;
  }

  /// Token matrix [N, D] -> feature map [D, g, g].
  ad::BasicTensor<T> to_map(const ad::BasicTensor<T>& tokens) const {
    return ad::reshape(ad::transpose(tokens), {dim, grid, grid});
  }
};

// ---------------------------------------------------------------------------
// Prompt fusion

template <typename T>
struct InjectParams {
  ad::BasicTensor<T> conv1_w, conv1_b, conv2_w, conv2_b, proj_w, proj_b;

  void declare(ParamList<T>& p, const std::string& prefix, std::size_t hidden,
               std::size_t out_channels) {
    conv1_w = p.add(prefix + ".conv1.weight", {hidden, 1, 3, 3});
    conv1_b = p.add(prefix + ".conv1.bias", {hidden});
    conv2_w = p.add(prefix + ".conv2.weight", {hidden, hidden, 3, 3});
    conv2_b = p.add(prefix + ".conv2.bias", {hidden});
    proj_w = p.add(prefix + ".proj.weight", {out_channels, hidden, 1, 1});
    proj_b = p.add(prefix + ".proj.bias", {out_channels});
  }

  /// The projection (weights and bias) stays exactly zero.
  void init(std::mt19937_64& rng) {
    detail::fill_normal(conv1_w, rng, 1.0 / 3.0);
    detail::fill_normal(conv2_w, rng, 1.0 / std::sqrt(9.0 * static_cast<double>(conv2_w.dim(1))));
  }
};

/// Resizes the prompt to (h, w), extracts depth features with a two-layer
/// 3x3 conv net (GELU between), and projects them to the stage channels.
template <typename T>
ad::BasicTensor<T> prompt_fusion_inject(const ad::BasicTensor<T>& prompt, std::size_t h,
                                        std::size_t w, const InjectParams<T>& p) {
  if (prompt.rank() != 3 || prompt.dim(0) != 1 || prompt.dim(1) == 0 || prompt.dim(2) == 0) {
    ad::shape_fail("prompt_fusion_inject", "prompt must be [1,h,w], got " +
                                               ad::shape_str(prompt.shape()));
  }
  const auto resized = (prompt.dim(1) == h && prompt.dim(2) == w)
                           ? prompt
                           : ad::bilinear_resize(prompt, h, w);
  const auto f1 = ad::gelu(detail::conv_same(resized, p.conv1_w, p.conv1_b));
  const auto f2 = detail::conv_same(f1, p.conv2_w, p.conv2_b);
  return ad::conv2d(f2, p.proj_w, &p.proj_b);
}

// ---------------------------------------------------------------------------
// DPT decoder

template <typename T>
struct FusionParams {
  ad::BasicTensor<T> reassemble_w, reassemble_b;
  std::optional<ad::BasicTensor<T>> adapt_w, adapt_b;  // when channel counts differ
  ad::BasicTensor<T> conv1_w, conv1_b, conv2_w, conv2_b;

  void declare(ParamList<T>& p, const std::string& prefix, std::size_t embed_dim,
               std::size_t channels, std::size_t prev_channels) {
    reassemble_w = p.add(prefix + ".reassemble.weight", {channels, embed_dim, 1, 1});
    reassemble_b = p.add(prefix + ".reassemble.bias", {channels});
    if (prev_channels != 0 && prev_channels != channels) {
      adapt_w = p.add(prefix + ".adapt.weight", {channels, prev_channels, 1, 1});
      adapt_b = p.add(prefix + ".adapt.bias", {channels});
    }
    conv1_w = p.add(prefix + ".rcu.conv1.weight", {channels, channels, 3, 3});
    conv1_b = p.add(prefix + ".rcu.conv1.bias", {channels});
    conv2_w = p.add(prefix + ".rcu.conv2.weight", {channels, channels, 3, 3});
    conv2_b = p.add(prefix + ".rcu.conv2.bias", {channels});
  }

  void init(std::mt19937_64& rng) {
    const double c = static_cast<double>(conv1_w.dim(0));
    detail::fill_normal(reassemble_w, rng, 1.0 / std::sqrt(static_cast<double>(reassemble_w.dim(1))));
    if (adapt_w) detail::fill_normal(*adapt_w, rng, 1.0 / std::sqrt(static_cast<double>(adapt_w->dim(1))));
    detail::fill_normal(conv1_w, rng, 1.0 / std::sqrt(9.0 * c));
    detail::fill_normal(conv2_w, rng, 0.5 / std::sqrt(9.0 * c));
  }
};

/// Tokens of one encoder tap [D,g,g] -> [C, size, size].
template <typename T>
ad::BasicTensor<T> reassemble(const ad::BasicTensor<T>& features, std::size_t size,
                              const FusionParams<T>& p) {
  const auto proj = ad::conv2d(features, p.reassemble_w, &p.reassemble_b);
  if (proj.dim(1) == size && proj.dim(2) == size) return proj;
  return ad::bilinear_resize(proj, size, size);
}

/// One coarse-to-fine fusion step: upsample the previous stage to the size of
/// `reassembled`, add the reassembled tap and the prompt injection, then
/// apply a residual conv unit.
template <typename T>
ad::BasicTensor<T> fusion_stage(const ad::BasicTensor<T>* previous,
                                const ad::BasicTensor<T>& reassembled,
                                const ad::BasicTensor<T>* injection, const FusionParams<T>& p) {
  auto x = reassembled;
  if (previous) {
    auto up = ad::bilinear_resize(*previous, reassembled.dim(1), reassembled.dim(2));
    if (p.adapt_w) up = ad::conv2d(up, *p.adapt_w, &*p.adapt_b);
    x = ad::add(x, up);
  }
  if (injection) x = ad::add(x, *injection);
  const auto r1 = detail::conv_same(ad::gelu(x), p.conv1_w, p.conv1_b);
  const auto r2 = detail::conv_same(ad::gelu(r1), p.conv2_w, p.conv2_b);
  return ad::add(x, r2);
}

// ---------------------------------------------------------------------------
// Full network

template <typename T>
class PromptDepthNet {
 public:
  explicit PromptDepthNet(const ModelConfig& config, std::uint64_t seed = 0) : config_(config) {
    config_.validate();
    encoder_.declare(params_, "encoder", config_.input_size, config_.vit_patch, config_.embed_dim,
                     config_.depth, config_.heads, config_.mlp_ratio);
    for (std::size_t k = 0; k < 4; ++k) {
      const std::string stage = "decoder.stage" + std::to_string(k + 1);
      stages_[k].declare(params_, stage, config_.embed_dim, config_.decoder_channels[k],
                         k == 0 ? 0 : config_.decoder_channels[k - 1]);
      if (config_.fusion_stages[k]) {
        inject_[k].emplace();
        inject_[k]->declare(params_, stage + ".prompt", config_.prompt_hidden,
                            config_.decoder_channels[k]);
      }
    }
    const std::size_t c = config_.decoder_channels[3];
    head1_w_ = params_.add("decoder.head.conv1.weight", {c / 2, c, 3, 3});
    head1_b_ = params_.add("decoder.head.conv1.bias", {c / 2});
    head2_w_ = params_.add("decoder.head.conv2.weight", {config_.head_hidden, c / 2, 3, 3});
    head2_b_ = params_.add("decoder.head.conv2.bias", {config_.head_hidden});
    head3_w_ = params_.add("decoder.head.conv3.weight", {1, config_.head_hidden, 1, 1});
    head3_b_ = params_.add("decoder.head.conv3.bias", {1});

    std::mt19937_64 rng(seed);
    encoder_.init(rng);
    for (std::size_t k = 0; k < 4; ++k) {
      stages_[k].init(rng);
      if (inject_[k]) inject_[k]->init(rng);
    }
    detail::fill_normal(head1_w_, rng, 1.0 / std::sqrt(9.0 * static_cast<double>(c)));
    detail::fill_normal(head2_w_, rng, 1.0 / std::sqrt(9.0 * static_cast<double>(c / 2)));
    detail::fill_normal(head3_w_, rng, 1.0 / std::sqrt(static_cast<double>(config_.head_hidden)));
  }

  const ModelConfig& config() const { return config_; }
  ParamList<T>& params() { return params_; }
  const ParamList<T>& params() const { return params_; }
  const VitEncoder<T>& encoder() const { return encoder_; }
  const FusionParams<T>& stage(std::size_t k) const { return stages_.at(k); }
  const std::optional<InjectParams<T>>& injection(std::size_t k) const { return inject_.at(k); }
  std::optional<InjectParams<T>>& injection(std::size_t k) { return inject_.at(k); }

  /// Feature maps [D, g, g] at the configured tap layers.
  std::vector<ad::BasicTensor<T>> vit_encode(const ad::BasicTensor<T>& rgb) const {
    const auto all = encoder_.run(rgb);
    std::vector<ad::BasicTensor<T>> taps;
    for (auto layer : config_.tap_layers) taps.push_back(encoder_.to_map(all[layer - 1]));
    return taps;
  }

  ad::BasicTensor<T> dpt_decode(const std::vector<ad::BasicTensor<T>>& features,
                                const ad::BasicTensor<T>* prompt) const {
    if (features.size() != 4) ad::shape_fail("dpt_decode", "expected 4 feature maps");
    if (prompt && (prompt->rank() != 3 || prompt->dim(1) == 0 || prompt->dim(2) == 0)) {
      ad::shape_fail("dpt_decode", "prompt must be [1,h,w] with positive dims, got " +
                                       ad::shape_str(prompt->shape()));
    }
    std::optional<ad::BasicTensor<T>> prev;
    for (std::size_t k = 0; k < 4; ++k) {
      const std::size_t size = config_.stage_size(k);
      const auto r = reassemble(features[k], size, stages_[k]);
      std::optional<ad::BasicTensor<T>> inj;
      if (prompt && inject_[k]) inj = prompt_fusion_inject(*prompt, size, size, *inject_[k]);
      prev = fusion_stage(prev ? &*prev : nullptr, r, inj ? &*inj : nullptr, stages_[k]);
    }
    const std::size_t s = config_.input_size;
    auto h = detail::conv_same(*prev, head1_w_, head1_b_);
    h = ad::bilinear_resize(h, s, s);
    h = ad::gelu(detail::conv_same(h, head2_w_, head2_b_));
    return ad::conv2d(h, head3_w_, &head3_b_);
  }

  /// rgb [3,S,S] in [0,1]; prompt [1,h,w] in normalized units (optional).
  ad::BasicTensor<T> forward(const ad::BasicTensor<T>& rgb, const ad::BasicTensor<T>* prompt) const {
    return dpt_decode(vit_encode(rgb), prompt);
  }

  WeightStore to_store() const {
    WeightStore store;
    store.config_echo = config_.echo();
    for (std::size_t i = 0; i < params_.tensors().size(); ++i) {
      const auto& t = params_.tensors()[i];
      NamedTensor nt{params_.names()[i], t.shape(), {}};
      nt.values.reserve(t.numel());
      for (T v : t.data()) nt.values.push_back(static_cast<float>(v));
      store.tensors.push_back(std::move(nt));
    }
    return store;
  }

  /// Copies tensors from a store whose config echo matches this model.
  void load(const WeightStore& store) {
    if (ModelConfig::parse_echo(store.config_echo) != config_) {
      throw WeightError(WeightErrorKind::kConfigMismatch,
                        "weight file config does not match model config");
    }
    load_tensors(params_, store);
  }

  static PromptDepthNet from_store(const WeightStore& store) {
    PromptDepthNet net(ModelConfig::parse_echo(store.config_echo));
    load_tensors(net.params_, store);
    return net;
  }

  template <typename U>
  static void load_tensors(ParamList<U>& params, const WeightStore& store) {
    for (std::size_t i = 0; i < params.tensors().size(); ++i) {
      const auto& name = params.names()[i];
      auto& t = params.tensors()[i];
      const NamedTensor* nt = store.find(name);
      if (!nt) throw WeightError(WeightErrorKind::kMissingTensor, "missing tensor '" + name + "'");
      if (nt->shape != t.shape()) {
        throw WeightError(WeightErrorKind::kShapeMismatch,
                          "tensor '" + name + "' has shape " + ad::shape_str(nt->shape) +
                              ", model expects " + ad::shape_str(t.shape()));
      }
      auto dst = t.mutable_data();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<U>(nt->values[j]);
    }
  }

 private:
  ModelConfig config_;
  ParamList<T> params_;
  VitEncoder<T> encoder_;
  std::array<FusionParams<T>, 4> stages_;
  std::array<std::optional<InjectParams<T>>, 4> inject_;
  ad::BasicTensor<T> head1_w_, head1_b_, head2_w_, head2_b_, head3_w_, head3_b_;
};

// ---------------------------------------------------------------------------
// Scene classifier

struct SceneScores {
  SceneClass label = SceneClass::kBare;
  std::array<double, 3> probabilities{};
};

template <typename T>
class SceneClassifier {
 public:
  explicit SceneClassifier(const ClassifierConfig& config = {}, std::uint64_t seed = 0)
      : config_(config) {
    config_.validate();
    encoder_.declare(params_, "encoder", config_.input_size, config_.vit_patch, config_.embed_dim,
                     config_.depth, config_.heads, config_.mlp_ratio);
    norm_gain_ = params_.add("head.norm.gain", {config_.embed_dim});
    norm_bias_ = params_.add("head.norm.bias", {config_.embed_dim});
    head_w_ = params_.add("head.fc.weight", {config_.embed_dim, 3});
    head_b_ = params_.add("head.fc.bias", {3});
    std::mt19937_64 rng(seed);
    encoder_.init(rng);
    detail::fill_const(norm_gain_, T(1));
    detail::fill_normal(head_w_, rng, 1.0 / std::sqrt(static_cast<double>(config_.embed_dim)));
  }

  const ClassifierConfig& config() const { return config_; }
  ParamList<T>& params() { return params_; }
  ad::BasicTensor<T>& head_weight() { return head_w_; }
  ad::BasicTensor<T>& head_bias() { return head_b_; }

  /// Class logits [1,3]: mean-pooled tokens -> layer norm -> linear.
  ad::BasicTensor<T> logits(const ad::BasicTensor<T>& rgb) const {
    const auto tokens = encoder_.run(rgb).back();
    const auto pooled = ad::reshape(ad::mean_axis(tokens, 0), {1, config_.embed_dim});
    const auto normed = ad::add(ad::mul(ad::layer_norm(pooled, 1), norm_gain_), norm_bias_);
    return detail::linear(normed, head_w_, head_b_);
  }

  SceneScores classify(const ad::BasicTensor<T>& rgb) const {
    const auto probs = ad::softmax(logits(rgb), 1);
    SceneScores s;
    std::size_t best = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      s.probabilities[i] = static_cast<double>(probs.data()[i]);
      if (probs.data()[i] > probs.data()[best]) best = i;
    }
    s.label = static_cast<SceneClass>(best);
    return s;
  }

  WeightStore to_store() const {
    WeightStore store;
    store.config_echo = config_.echo();
    for (std::size_t i = 0; i < params_.tensors().size(); ++i) {
      const auto& t = params_.tensors()[i];
      NamedTensor nt{params_.names()[i], t.shape(), {}};
      for (T v : t.data()) nt.values.push_back(static_cast<float>(v));
      store.tensors.push_back(std::move(nt));
    }
    return store;
  }

  static SceneClassifier from_store(const WeightStore& store) {
    SceneClassifier c(ClassifierConfig::parse_echo(store.config_echo));
    PromptDepthNet<T>::load_tensors(c.params_, store);
    return c;
  }

 private:
  ClassifierConfig config_;
  ParamList<T> params_;
  VitEncoder<T> encoder_;
  ad::BasicTensor<T> norm_gain_, norm_bias_, head_w_, head_b_;
};

}  // namespace p2d

#endif  // P2D_MODEL_HPP_
