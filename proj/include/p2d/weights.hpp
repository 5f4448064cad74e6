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

#ifndef P2D_WEIGHTS_HPP_
#define P2D_WEIGHTS_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "p2d/types.hpp"

namespace p2d {

inline constexpr std::uint32_t kWeightFormatVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> values;
};

/// In-memory image of a "P2DW" weight file.
struct WeightStore {
  std::uint32_t version = kWeightFormatVersion;
  std::string config_echo;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

enum class WeightErrorKind {
  kIo,
  kBadMagic,
  kTruncated,
  kVersionMismatch,
  kMissingTensor,
  kShapeMismatch,
  kConfigMismatch,
  kDuplicateTensor,
};

class WeightError : public std::runtime_error {
 public:
  WeightError(WeightErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  WeightErrorKind kind() const { return kind_; }

 private:
  WeightErrorKind kind_;
};

/// Layout (little-endian): "P2DW", u32 version, u32 echo length, echo bytes,
/// then per tensor: u32 name length, name, u32 rank, rank x u32 dims,
/// f32 payload. Records run to end of file.
std::vector<std::uint8_t> encode_weights(const WeightStore& store);
WeightStore decode_weights(std::span<const std::uint8_t> bytes,
                           const std::string& source = "<memory>");
void save_weights(const WeightStore& store, const std::filesystem::path& path);
WeightStore load_weights(const std::filesystem::path& path);

/// Maps (task, scene class) to a weight file.
class WeightRegistry {
 public:
  using Key = std::pair<PromptKind, SceneClass>;

  void set(PromptKind task, SceneClass scene, std::filesystem::path path);
  bool contains(PromptKind task, SceneClass scene) const;
  /// Throws std::out_of_range listing the available keys when missing.
  const std::filesystem::path& path(PromptKind task, SceneClass scene) const;
  std::vector<Key> keys() const;
  std::string describe_keys() const;
  std::size_t size() const { return entries_.size(); }

  /// Scene-classifier weights used for per-patch routing.
  void set_classifier(std::filesystem::path path) { classifier_ = std::move(path); }
  const std::optional<std::filesystem::path>& classifier() const { return classifier_; }

  /// JSON object {"lowres/urban": "path", ..., "classifier": "path"}; relative paths resolve
  /// against the registry file's directory.
  void save(const std::filesystem::path& file) const;
  static WeightRegistry load(const std::filesystem::path& file);

 private:
  std::map<Key, std::filesystem::path> entries_;
  std::optional<std::filesystem::path> classifier_;
};

}  // namespace p2d

#endif  // P2D_WEIGHTS_HPP_
