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

#ifndef P2D_TYPES_HPP_
#define P2D_TYPES_HPP_

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

namespace p2d {

enum class SceneClass { kUrban = 0, kVegetated = 1, kBare = 2 };

inline constexpr std::array<SceneClass, 3> kAllSceneClasses = {
    SceneClass::kUrban, SceneClass::kVegetated, SceneClass::kBare};

inline std::string_view to_string(SceneClass c) {
  switch (c) {
    case SceneClass::kUrban: return "urban";
    case SceneClass::kVegetated: return "vegetated";
    case SceneClass::kBare: return "bare";
  }
  return "?";
}

inline SceneClass parse_scene_class(std::string_view s) {
  if (s == "urban") return SceneClass::kUrban;
  if (s == "vegetated") return SceneClass::kVegetated;
  if (s == "bare") return SceneClass::kBare;
  throw std::invalid_argument("unknown scene class '" + std::string(s) +
                              "' (expected urban|vegetated|bare)");
}

/// Prompt regime, one per inference task: DEM estimation from a coarse DEM,
/// void filling, and updating from a terrain-only model.
enum class PromptKind { kLowRes = 0, kVoidFilled = 1, kTerrainOnly = 2 };

inline std::string_view to_string(PromptKind k) {
  switch (k) {
    case PromptKind::kLowRes: return "lowres";
    case PromptKind::kVoidFilled: return "void";
    case PromptKind::kTerrainOnly: return "update";
  }
  return "?";
}

inline PromptKind parse_prompt_kind(std::string_view s) {
  if (s == "lowres") return PromptKind::kLowRes;
  if (s == "void") return PromptKind::kVoidFilled;
  if (s == "update") return PromptKind::kTerrainOnly;
  throw std::invalid_argument("unknown task '" + std::string(s) +
                              "' (expected lowres|void|update)");
}

}  // namespace p2d

#endif  // P2D_TYPES_HPP_
