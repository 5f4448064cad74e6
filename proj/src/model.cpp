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

#include "p2d/model.hpp"

#include <charconv>
#include <map>
#include <sstream>

namespace p2d {
namespace {

using KeyValues = std::map<std::string, std::string, std::less<>>;

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw WeightError(WeightErrorKind::kConfigMismatch,
                        "malformed config line '" + std::string(line) + "'");
    }
    kv.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
  }
  return kv;
}

const std::string& need(const KeyValues& kv, const char* key) {
  auto it = kv.find(key);
  if (it == kv.end()) {
    throw WeightError(WeightErrorKind::kConfigMismatch,
                      std::string("config echo lacks key '") + key + "'");
  }
  return it->second;
}

std::size_t to_size(const std::string& s) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw WeightError(WeightErrorKind::kConfigMismatch, "bad integer '" + s + "' in config echo");
  }
  return v;
}

template <typename V>
std::string join(const std::array<V, 4>& a) {
  std::ostringstream os;
  for (std::size_t i = 0; i < a.size(); ++i) os << (i ? "," : "") << static_cast<std::size_t>(a[i]);
  return os.str();
}

template <typename V>
std::array<V, 4> split4(const std::string& s) {
  std::array<V, 4> out{};
  std::size_t start = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto comma = s.find(',', start);
    if ((i < 3) == (comma == std::string::npos)) {
      throw WeightError(WeightErrorKind::kConfigMismatch, "expected four values in '" + s + "'");
    }
    out[i] = static_cast<V>(to_size(s.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("ModelConfig: " + m); };
  if (vit_patch == 0 || input_size % vit_patch != 0) fail("input_size must divide by vit_patch");
  if (input_size % 16 != 0) fail("input_size must be a multiple of 16");
  if (heads == 0 || embed_dim % heads != 0) fail("embed_dim must divide by heads");
  if (depth == 0 || mlp_ratio == 0) fail("depth and mlp_ratio must be >= 1");
  for (std::size_t i = 0; i < 4; ++i) {
    if (tap_layers[i] < 1 || tap_layers[i] > depth) fail("tap layers must lie in [1, depth]");
    if (i > 0 && tap_layers[i] < tap_layers[i - 1]) fail("tap layers must be sorted");
    if (decoder_channels[i] < 2) fail("decoder channels must be >= 2");
  }
  if (prompt_hidden == 0 || head_hidden == 0) fail("hidden widths must be >= 1");
}

std::string ModelConfig::echo() const {
  std::ostringstream os;
  os << "arch=prompt_depth\n"
     << "input_size=" << input_size << "\n"
     << "vit_patch=" << vit_patch << "\n"
     << "embed_dim=" << embed_dim << "\n"
     << "depth=" << depth << "\n"
     << "heads=" << heads << "\n"
     << "mlp_ratio=" << mlp_ratio << "\n"
     << "tap_layers=" << join(tap_layers) << "\n"
     << "decoder_channels=" << join(decoder_channels) << "\n"
     << "fusion_stages=" << join(fusion_stages) << "\n"
     << "prompt_hidden=" << prompt_hidden << "\n"
     << "head_hidden=" << head_hidden << "\n";
  return os.str();
}

ModelConfig ModelConfig::parse_echo(std::string_view text) {
  const auto kv = parse_key_values(text);
  if (need(kv, "arch") != "prompt_depth") {
    throw WeightError(WeightErrorKind::kConfigMismatch,
                      "weight file holds a '" + need(kv, "arch") + "' model, not prompt_depth");
  }
  ModelConfig c;
  c.input_size = to_size(need(kv, "input_size"));
  c.vit_patch = to_size(need(kv, "vit_patch"));
  c.embed_dim = to_size(need(kv, "embed_dim"));
  c.depth = to_size(need(kv, "depth"));
  c.heads = to_size(need(kv, "heads"));
  c.mlp_ratio = to_size(need(kv, "mlp_ratio"));
  c.tap_layers = split4<std::size_t>(need(kv, "tap_layers"));
  c.decoder_channels = split4<std::size_t>(need(kv, "decoder_channels"));
  c.fusion_stages = split4<bool>(need(kv, "fusion_stages"));
  c.prompt_hidden = to_size(need(kv, "prompt_hidden"));
  c.head_hidden = to_size(need(kv, "head_hidden"));
  return c;
}

void ClassifierConfig::validate() const {
  if (vit_patch == 0 || input_size % vit_patch != 0) {
    throw std::invalid_argument("ClassifierConfig: input_size must divide by vit_patch");
  }
  if (heads == 0 || embed_dim % heads != 0) {
    throw std::invalid_argument("ClassifierConfig: embed_dim must divide by heads");
  }
  if (depth == 0 || mlp_ratio == 0) {
    throw std::invalid_argument("ClassifierConfig: depth and mlp_ratio must be >= 1");
  }
}

std::string ClassifierConfig::echo() const {
  std::ostringstream os;
  os << "arch=scene_classifier\n"
     << "input_size=" << input_size << "\n"
     << "vit_patch=" << vit_patch << "\n"
     << "embed_dim=" << embed_dim << "\n"
     << "depth=" << depth << "\n"
     << "heads=" << heads << "\n"
     << "mlp_ratio=" << mlp_ratio << "\n";
  return os.str();
}

ClassifierConfig ClassifierConfig::parse_echo(std::string_view text) {
  const auto kv = parse_key_values(text);
  if (need(kv, "arch") != "scene_classifier") {
    throw WeightError(WeightErrorKind::kConfigMismatch,
                      "weight file holds a '" + need(kv, "arch") + "' model, not scene_classifier");
  }
  ClassifierConfig c;
  c.input_size = to_size(need(kv, "input_size"));
  c.vit_patch = to_size(need(kv, "vit_patch"));
  c.embed_dim = to_size(need(kv, "embed_dim"));
  c.depth = to_size(need(kv, "depth"));
  c.heads = to_size(need(kv, "heads"));
  c.mlp_ratio = to_size(need(kv, "mlp_ratio"));
  return c;
}

NormalizedPair normalize_io(const RasterGrid& prompt, const RasterGrid* hr_target, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("normalize_io: scale must be > 0");
  double sum = 0.0;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    if (prompt.is_nodata_index(i)) continue;
    sum += prompt.values()[i];
    ++valid;
  }
  if (valid == 0) throw std::invalid_argument("normalize_io: prompt has no valid cells");
  NormalizedPair out;
  out.norm = {sum / static_cast<double>(valid), scale};
  std::vector<float> p(prompt.size());
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    p[i] = prompt.is_nodata_index(i)
               ? 0.0f
               : static_cast<float>((prompt.values()[i] - out.norm.mean) / scale);
  }
  out.prompt = ad::Tensor({1, prompt.rows(), prompt.cols()}, std::move(p));
  if (hr_target) {
    std::vector<float> t(hr_target->size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = static_cast<float>((hr_target->values()[i] - out.norm.mean) / scale);
    }
    out.target = ad::Tensor({1, hr_target->rows(), hr_target->cols()}, std::move(t));
  }
  return out;
}

RasterGrid denormalize(const ad::Tensor& normalized, const NormRecord& norm,
                       const RasterGrid& georef) {
  const std::size_t rows = normalized.dim(normalized.rank() - 2);
  const std::size_t cols = normalized.dim(normalized.rank() - 1);
  if (normalized.numel() != rows * cols) {
    throw std::invalid_argument("denormalize: expected a single-channel map");
  }
  RasterGrid out(rows, cols, georef.cell_size());
  out.copy_georef(georef);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values()[i] = static_cast<float>(normalized.data()[i] * norm.scale + norm.mean);
  }
  return out;
}

ad::Tensor rgb_tensor(const std::array<RasterGrid, 3>& rgb) {
  const std::size_t rows = rgb[0].rows(), cols = rgb[0].cols();
  std::vector<float> v;
  v.reserve(3 * rows * cols);
  for (const auto& ch : rgb) {
    if (ch.rows() != rows || ch.cols() != cols) {
      throw std::invalid_argument("rgb_tensor: channel dimensions differ");
    }
    v.insert(v.end(), ch.values().begin(), ch.values().end());
  }
  return ad::Tensor({3, rows, cols}, std::move(v));
}

}  // namespace p2d
