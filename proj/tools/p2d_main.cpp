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

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "p2d/pipeline.hpp"

namespace {

using p2d::fs::path;

struct Common {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string registry;

  p2d::PipelineConfig resolve() const {
    p2d::PipelineConfig c =
        config_file.empty() ? p2d::PipelineConfig{} : p2d::PipelineConfig::load(config_file);
    if (seed) c.seed = *seed;
    if (deterministic) c.deterministic = true;
    if (!registry.empty()) c.registry = registry;
    c.validate();
    return c;
  }
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_file, "Pipeline config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", common.seed, "Seed override");
  cmd->add_flag("--deterministic", common.deterministic, "Single-threaded, order-independent run");
  cmd->add_option("--registry", common.registry, "Weight registry JSON (overrides config)");
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"p2d: prompt-guided DEM estimation, mosaicking, hydrology and evaluation"};
  app.require_subcommand(1);
  Common common;

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic scenes per class");
  add_common(synth, common);
  std::string synth_out;
  std::optional<std::size_t> synth_n, synth_size;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("-n,--per-class", synth_n, "Samples per scene class");
  synth->add_option("--size", synth_size, "Scene size in cells");

  // train
  auto* train = app.add_subcommand("train", "Train one (task, class) model or the classifier");
  add_common(train, common);
  std::string train_task = "lowres", train_scene, train_out = "weights", train_data;
  bool train_classifier = false, train_all = false;
  train->add_option("--task", train_task, "lowres|void|update")
      ->check(CLI::IsMember({"lowres", "void", "update"}));
  train->add_option("--class", train_scene, "urban|vegetated|bare")
      ->check(CLI::IsMember({"urban", "vegetated", "bare"}));
  train->add_option("--out", train_out, "Weight output directory");
  train->add_option("--data", train_data, "Synth directory (default: generate from seed)")
      ->check(CLI::ExistingDirectory);
  train->add_flag("--classifier", train_classifier, "Train the scene classifier");
  train->add_flag("--all", train_all, "Train the classifier and all seven task models");

  // infer
  auto* infer = app.add_subcommand("infer", "Tile, route and predict a scene");
  add_common(infer, common);
  std::vector<std::string> infer_rgb;
  std::string infer_prompt, infer_task = "lowres", infer_out, infer_force;
  infer->add_option("--rgb", infer_rgb, "Three .r32g planes (r g b)")->expected(3)->required();
  infer->add_option("--prompt", infer_prompt, "Prompt raster (.r32g)")->required()->check(CLI::ExistingFile);
  infer->add_option("--task", infer_task, "lowres|void|update")
      ->check(CLI::IsMember({"lowres", "void", "update"}));
  infer->add_option("--out", infer_out, "Patch output directory")->required();
  infer->add_option("--force-class", infer_force, "Bypass the classifier")
      ->check(CLI::IsMember({"urban", "vegetated", "bare"}));

  // mosaic
  auto* mosaic = app.add_subcommand("mosaic", "Blend patch predictions into one DEM");
  add_common(mosaic, common);
  std::string mosaic_in, mosaic_out;
  mosaic->add_option("--patches", mosaic_in, "Directory written by infer")->required()
      ->check(CLI::ExistingDirectory);
  mosaic->add_option("--out", mosaic_out, "Output directory")->required();

  // hydro
  auto* hydro = app.add_subcommand("hydro", "Fill, D8 routing, accumulation and streams");
  add_common(hydro, common);
  std::string hydro_dem, hydro_truth, hydro_out;
  std::size_t hydro_threshold = 0;
  std::vector<double> hydro_radii;
  hydro->add_option("--dem", hydro_dem, "Input DEM (.r32g)")->required()->check(CLI::ExistingFile);
  hydro->add_option("--threshold", hydro_threshold, "Accumulation threshold in cells")->required();
  hydro->add_option("--radii", hydro_radii, "Buffer radii in cells");
  hydro->add_option("--truth", hydro_truth, "Truth DEM for buffered comparison")
      ->check(CLI::ExistingFile);
  hydro->add_option("--out", hydro_out, "Output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Compare a candidate and a baseline DEM to truth");
  add_common(eval, common);
  std::string eval_truth, eval_cand, eval_base, eval_region, eval_json;
  std::optional<std::size_t> eval_threshold;
  std::vector<double> eval_radii;
  bool require_improvement = false;
  eval->add_option("--truth", eval_truth)->required()->check(CLI::ExistingFile);
  eval->add_option("--candidate", eval_cand)->required()->check(CLI::ExistingFile);
  eval->add_option("--baseline", eval_base)->required()->check(CLI::ExistingFile);
  eval->add_option("--region", eval_region, "Mask raster; nonzero cells are scored")
      ->check(CLI::ExistingFile);
  eval->add_option("--threshold", eval_threshold, "Stream threshold in cells");
  eval->add_option("--radii", eval_radii, "Buffer radii in cells");
  eval->add_option("--json", eval_json, "Write the report JSON here");
  eval->add_flag("--require-improvement", require_improvement,
                 "Exit 3 unless the candidate elevation RMSE beats the baseline");

  // classify
  auto* classify = app.add_subcommand("classify", "Scene class of one rgb patch");
  add_common(classify, common);
  std::vector<std::string> classify_rgb;
  classify->add_option("--rgb", classify_rgb, "Three .r32g planes (r g b)")->expected(3)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    p2d::PipelineConfig config = common.resolve();

    if (*synth) {
      if (synth_n) config.synth_per_class = *synth_n;
      if (synth_size) config.synth_size = *synth_size;
      const auto entries = p2d::cmd_synth(config, synth_out);
      std::cout << "wrote " << entries.size() << " samples to " << synth_out << "\n";
      return 0;
    }

    if (*train) {
      auto progress = [](const p2d::EpochLoss& e) {
        std::cout << "  epoch " << e.epoch << "  train " << pct(e.train) << "  val "
                  << pct(e.validation) << std::endl;
      };
      std::optional<path> data;
      if (!train_data.empty()) data = train_data;
      if (train_all) {
        std::cout << "classifier\n";
        p2d::cmd_train_classifier(config, train_out);
        for (auto scene : p2d::kAllSceneClasses) {
          std::cout << "lowres/" << p2d::to_string(scene) << "\n";
          p2d::cmd_train(config, p2d::PromptKind::kLowRes, scene, train_out, data, progress);
        }
        for (auto scene : p2d::kAllSceneClasses) {
          std::cout << "void/" << p2d::to_string(scene) << "\n";
          p2d::cmd_train(config, p2d::PromptKind::kVoidFilled, scene, train_out, data, progress);
        }
        std::cout << "update/urban\n";
        p2d::cmd_train(config, p2d::PromptKind::kTerrainOnly, p2d::SceneClass::kUrban, train_out,
                       data, progress);
        return 0;
      }
      if (train_classifier) {
        const auto file = p2d::cmd_train_classifier(config, train_out);
        std::cout << "classifier weights: " << file.string() << "\n";
        return 0;
      }
      if (train_scene.empty()) throw std::invalid_argument("train needs --class (or --classifier/--all)");
      const auto out = p2d::cmd_train(config, p2d::parse_prompt_kind(train_task),
                                      p2d::parse_scene_class(train_scene), train_out, data, progress);
      std::cout << "weights: " << out.weights.string() << "\n";
      return 0;
    }

    if (*infer) {
      const auto rgb = p2d::read_rgb({infer_rgb[0], infer_rgb[1], infer_rgb[2]});
      const auto prompt = p2d::read_raster(infer_prompt);
      std::optional<p2d::SceneClass> force;
      if (!infer_force.empty()) force = p2d::parse_scene_class(infer_force);
      const auto m = p2d::cmd_infer(config, rgb, prompt, p2d::parse_prompt_kind(infer_task),
                                    infer_out, force);
      std::cout << "predicted " << m.patches.size() << " patches into " << infer_out << "\n";
      return 0;
    }

    if (*mosaic) {
      const auto out = p2d::cmd_mosaic(config, mosaic_in, mosaic_out);
      std::cout << "mosaic " << out.mosaic.dem.rows() << "x" << out.mosaic.dem.cols()
                << ", zero-weight pixels: " << out.mosaic.uncovered << "\n";
      return 0;
    }

    if (*hydro) {
      if (hydro_radii.empty()) hydro_radii = config.radii_cells;
      const auto dem = p2d::read_raster(hydro_dem);
      std::optional<p2d::RasterGrid> truth;
      if (!hydro_truth.empty()) truth = p2d::read_raster(hydro_truth);
      const auto out = p2d::cmd_hydro(dem, hydro_threshold, hydro_radii, truth ? &*truth : nullptr,
                                      hydro_out);
      std::cout << "stream cells: " << out.products.streams.count() << "\n";
      if (out.metrics) std::cout << out.metrics->dump(2) << "\n";
      return 0;
    }

    if (*eval) {
      if (eval_threshold) config.stream_threshold = *eval_threshold;
      if (!eval_radii.empty()) config.radii_cells = eval_radii;
      const auto truth = p2d::read_raster(eval_truth);
      const auto cand = p2d::read_raster(eval_cand);
      const auto base = p2d::read_raster(eval_base);
      std::optional<p2d::RasterGrid> region;
      if (!eval_region.empty()) region = p2d::read_raster(eval_region);
      std::optional<path> json;
      if (!eval_json.empty()) json = eval_json;
      const auto report = p2d::cmd_eval(config, truth, cand, base, region ? &*region : nullptr,
                                        region ? path(eval_region).stem().string() : "all", json);
      std::cout << report.table();
      if (require_improvement && !report.candidate_beats_baseline()) {
        std::cerr << "candidate does not beat baseline\n";
        return 3;
      }
      return 0;
    }

    if (*classify) {
      const auto rgb = p2d::read_rgb({classify_rgb[0], classify_rgb[1], classify_rgb[2]});
      const auto s = p2d::cmd_classify(config, rgb);
      std::cout << p2d::to_string(s.label) << "  urban " << pct(s.probabilities[0])
                << "  vegetated " << pct(s.probabilities[1]) << "  bare "
                << pct(s.probabilities[2]) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
