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

// Orchestration behind the `p2d` subcommands. Each cmd_* validates its
// inputs before writing anything.

#ifndef P2D_PIPELINE_HPP_
#define P2D_PIPELINE_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "p2d/evaluation.hpp"
#include "p2d/mosaic.hpp"
#include "p2d/training.hpp"
#include "p2d/weights.hpp"

namespace p2d {

namespace fs = std::filesystem;

struct PipelineConfig {
  std::uint64_t seed = 0;
  bool deterministic = false;
  std::size_t synth_per_class = 10;
  std::size_t synth_size = 64;
  std::size_t tile_size = 64;
  std::size_t overlap = 16;
  std::size_t stream_threshold = 0;  // 0: 0.5% of the cell count
  std::vector<double> radii_cells{1.0, 2.0, 5.0};
  fs::path registry = "weights/registry.json";
  TrainConfig train;
  ClassifierTrainConfig classifier;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  /// Keys absent from `j` keep their defaults; relative paths stay relative
  /// to the working directory.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const fs::path& file);
};

/// Worker count for tile inference: 1 in deterministic mode, else
/// P2D_THREADS (default: hardware concurrency).
std::size_t worker_count(const PipelineConfig& config);

// --- synth -----------------------------------------------------------------

struct SynthEntry {
  std::string id;
  SceneClass scene = SceneClass::kBare;
  std::uint64_t seed = 0;
  std::size_t buildings = 0;
  std::size_t canopy_blobs = 0;
};

/// Writes synth_per_class samples per class under out_dir/<id>/ (dsm, dtm,
/// rgb_r/g/b, canopy_mask, prompt_lowres, prompt_void, void_mask as .r32g)
/// plus out_dir/manifest.json.
std::vector<SynthEntry> cmd_synth(const PipelineConfig& config, const fs::path& out_dir);

SceneSample load_sample(const fs::path& sample_dir, SceneClass scene, std::uint64_t seed);
std::vector<SceneSample> load_dataset(const fs::path& synth_dir, SceneClass scene);

// --- train -----------------------------------------------------------------

struct TrainOutput {
  fs::path weights;
  fs::path manifest;
  TrainResult result;
};

/// Trains (task, scene), writes <out_dir>/<task>_<scene>.p2dw and a JSON
/// manifest, and registers the file. Non-LowRes tasks load the registered
/// LowRes checkpoint of the same class (MissingInitError when absent).
/// With `data_dir`, samples come from a synth directory.
TrainOutput cmd_train(const PipelineConfig& config, PromptKind task, SceneClass scene,
                      const fs::path& out_dir, const std::optional<fs::path>& data_dir = {},
                      const EpochCallback& on_epoch = {});

fs::path cmd_train_classifier(const PipelineConfig& config, const fs::path& out_dir);

// --- infer -----------------------------------------------------------------

struct PatchRecord {
  std::string file;
  TilePlacement placement;
  SceneClass scene = SceneClass::kBare;
  std::array<double, 3> probabilities{};
  bool forced = false;
  NormRecord norm;
};

struct InferManifest {
  int schema_version = 1;
  PromptKind task = PromptKind::kLowRes;
  RasterGrid georef;  // 1x1 carrier for extent/georeference
  std::size_t rows = 0, cols = 0;
  std::size_t tile_size = 0, overlap = 0;
  std::vector<PatchRecord> patches;

  nlohmann::ordered_json to_json() const;
  static InferManifest from_json(const nlohmann::json& j);
};

/// The prompt window matching a fine-grid tile. Prompts coarser than the
/// rgb grid are sampled at the tile's coarse cell centres (bilinear between
/// coarse cells when the offset is not a multiple of the factor).
RasterGrid prompt_window(const RasterGrid& prompt, std::size_t fine_rows, std::size_t fine_cols,
                         TilePlacement placement, std::size_t tile_size);

/// Tiles the scene, routes each tile through the classifier (unless
/// `force_class`), runs the (task, class) model and writes per-patch
/// predictions in meters plus out_dir/placements.json.
InferManifest cmd_infer(const PipelineConfig& config, const std::array<RasterGrid, 3>& rgb,
                        const RasterGrid& prompt, PromptKind task, const fs::path& out_dir,
                        std::optional<SceneClass> force_class = {});

// --- mosaic ----------------------------------------------------------------

struct MosaicOutput {
  MosaicResult mosaic;
  fs::path dem;
  fs::path hillshade_png;
  fs::path coverage;
};

MosaicResult mosaic_patches(const fs::path& patch_dir, bool ordered);
MosaicOutput cmd_mosaic(const PipelineConfig& config, const fs::path& patch_dir,
                        const fs::path& out_dir);

// --- hydro -----------------------------------------------------------------

struct HydroOutput {
  StreamProducts products;
  std::optional<nlohmann::ordered_json> metrics;
};

/// Writes filled.r32g, directions.r32g, accumulation.r32g, streams.r32g and
/// (with a truth DEM) metrics.json with one block per radius.
HydroOutput cmd_hydro(const RasterGrid& dem, std::size_t threshold,
                      const std::vector<double>& radii_cells, const RasterGrid* truth,
                      const fs::path& out_dir);

// --- eval / classify -------------------------------------------------------

EvalReport cmd_eval(const PipelineConfig& config, const RasterGrid& truth,
                    const RasterGrid& candidate, const RasterGrid& baseline,
                    const RasterGrid* region, const std::string& region_name,
                    const std::optional<fs::path>& out_json);

SceneScores cmd_classify(const PipelineConfig& config, const std::array<RasterGrid, 3>& rgb);

/// Reads rgb planes from three .r32g files.
std::array<RasterGrid, 3> read_rgb(const std::array<fs::path, 3>& paths);

/// Writes JSON with a trailing newline, creating parent directories.
void write_json(const fs::path& file, const nlohmann::ordered_json& j);

}  // namespace p2d

#endif  // P2D_PIPELINE_HPP_
