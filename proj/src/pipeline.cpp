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

#include "p2d/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "p2d/interp.hpp"

namespace p2d {
namespace {

constexpr std::uint64_t kSynthStream = 3;

nlohmann::json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  return nlohmann::json::parse(in);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
  }
}

WeightRegistry load_registry_or_empty(const fs::path& file) {
  return fs::exists(file) ? WeightRegistry::load(file) : WeightRegistry{};
}

std::string task_file_stem(PromptKind task, SceneClass scene) {
  return std::string(to_string(task)) + "_" + std::string(to_string(scene));
}

/// Runs fn(i) for i in [0, n) on `workers` threads; the first exception is
/// rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

nlohmann::ordered_json georef_json(const RasterGrid& g) {
  return {{"rows", g.rows()},
          {"cols", g.cols()},
          {"cell_size", g.cell_size()},
          {"origin_x", g.origin_x()},
          {"origin_y", g.origin_y()},
          {"nodata", g.nodata()}};
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

namespace {

nlohmann::ordered_json classifier_model_json(const ClassifierConfig& c) {
  return {{"input_size", c.input_size}, {"vit_patch", c.vit_patch}, {"embed_dim", c.embed_dim},
          {"depth", c.depth},           {"heads", c.heads},         {"mlp_ratio", c.mlp_ratio}};
}

ClassifierConfig classifier_model_from_json(const nlohmann::json& j, ClassifierConfig c) {
  c.input_size = j.value("input_size", c.input_size);
  c.vit_patch = j.value("vit_patch", c.vit_patch);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.depth = j.value("depth", c.depth);
  c.heads = j.value("heads", c.heads);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.validate();
  return c;
}

}  // namespace

void PipelineConfig::validate() const {
  if (tile_size == 0) throw std::invalid_argument("tile_size must be > 0");
  if (overlap >= tile_size) throw std::invalid_argument("overlap must be < tile_size");
  if (synth_size < 4) throw std::invalid_argument("synth.size must be >= 4");
  for (double r : radii_cells) {
    if (!(r >= 0.0)) throw std::invalid_argument("buffer radii must be >= 0");
  }
  train.validate();
  classifier.model.validate();
}

nlohmann::ordered_json PipelineConfig::to_json() const {
  return {{"seed", seed},
          {"deterministic", deterministic},
          {"synth", {{"per_class", synth_per_class}, {"size", synth_size}}},
          {"tile_size", tile_size},
          {"overlap", overlap},
          {"stream_threshold", stream_threshold},
          {"radii_cells", radii_cells},
          {"registry", registry.generic_string()},
          {"train", train.to_json()},
          {"classifier",
           {{"lr", classifier.lr},
            {"epochs", classifier.epochs},
            {"batch_size", classifier.batch_size},
            {"per_class", classifier.per_class},
            {"model", classifier_model_json(classifier.model)}}}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig c;
  c.seed = j.value("seed", c.seed);
  c.deterministic = j.value("deterministic", c.deterministic);
  if (j.contains("synth")) {
    c.synth_per_class = j.at("synth").value("per_class", c.synth_per_class);
    c.synth_size = j.at("synth").value("size", c.synth_size);
  }
  c.tile_size = j.value("tile_size", c.tile_size);
  c.overlap = j.value("overlap", c.overlap);
  c.stream_threshold = j.value("stream_threshold", c.stream_threshold);
  c.radii_cells = j.value("radii_cells", c.radii_cells);
  c.registry = j.value("registry", c.registry.generic_string());
  if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
  if (j.contains("classifier")) {
    const auto& k = j.at("classifier");
    c.classifier.lr = k.value("lr", c.classifier.lr);
    c.classifier.epochs = k.value("epochs", c.classifier.epochs);
    c.classifier.batch_size = k.value("batch_size", c.classifier.batch_size);
    c.classifier.per_class = k.value("per_class", c.classifier.per_class);
    if (k.contains("model")) c.classifier.model = classifier_model_from_json(k.at("model"), c.classifier.model);
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& file) { return from_json(read_json(file)); }

std::size_t worker_count(const PipelineConfig& config) {
  if (config.deterministic) return 1;
  if (const char* env = std::getenv("P2D_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void write_json(const fs::path& file, const nlohmann::ordered_json& j) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << j.dump(2) << "\n";
}

std::array<RasterGrid, 3> read_rgb(const std::array<fs::path, 3>& paths) {
  std::array<RasterGrid, 3> rgb{read_raster(paths[0]), read_raster(paths[1]), read_raster(paths[2])};
  if (!rgb[0].same_shape(rgb[1]) || !rgb[0].same_shape(rgb[2])) {
    throw std::invalid_argument("rgb planes have different dimensions");
  }
  return rgb;
}

// ---------------------------------------------------------------------------
// synth

std::vector<SynthEntry> cmd_synth(const PipelineConfig& config, const fs::path& out_dir) {
  config.validate();
  if (config.synth_size % config.train.prompt.factor != 0) {
    throw std::invalid_argument("synth.size must be a multiple of the prompt factor");
  }
  ensure_dir(out_dir);
  const PromptSpec& spec = config.train.prompt;
  std::vector<SynthEntry> entries;
  nlohmann::ordered_json samples = nlohmann::ordered_json::array();
  for (SceneClass scene : kAllSceneClasses) {
    for (std::size_t i = 0; i < config.synth_per_class; ++i) {
      SynthEntry e;
      char id[64];
      std::snprintf(id, sizeof id, "%s_%04zu", std::string(to_string(scene)).c_str(), i);
      e.id = id;
      e.scene = scene;
      e.seed = sample_seed(config.seed, scene, kSynthStream, i);
      SceneSample s = generate_terrain(sample_scene_params(scene, e.seed, config.synth_size));
      e.buildings = s.buildings.size();
      e.canopy_blobs = s.canopy.size();

      const fs::path dir = out_dir / e.id;
      ensure_dir(dir);
      write_raster(s.dsm, dir / "dsm.r32g");
      write_raster(s.dtm, dir / "dtm.r32g");
      write_raster(s.rgb[0], dir / "rgb_r.r32g");
      write_raster(s.rgb[1], dir / "rgb_g.r32g");
      write_raster(s.rgb[2], dir / "rgb_b.r32g");
      write_raster(s.canopy_mask, dir / "canopy_mask.r32g");
      const RasterGrid coarse = degrade_to_prompt(s.dsm, &s.canopy_mask, spec.factor,
                                                  spec.bias_sigma, spec.canopy_bias, e.seed);
      write_raster(coarse, dir / "prompt_lowres.r32g");
      write_raster(carve_void(s.dsm, coarse, spec.hole_fraction), dir / "prompt_void.r32g");
      RasterGrid hole = void_mask(s.dsm.rows(), s.dsm.cols(), spec.hole_fraction);
      hole.copy_georef(s.dsm);
      write_raster(hole, dir / "void_mask.r32g");
      write_raster(bilinear_resample(coarse, s.dsm.rows(), s.dsm.cols()),
                   dir / "baseline_lowres.r32g");

      samples.push_back({{"id", e.id},
                         {"class", to_string(scene)},
                         {"generated_class", to_string(s.scene_class)},
                         {"seed", e.seed},
                         {"buildings", e.buildings},
                         {"canopy_blobs", e.canopy_blobs}});
      entries.push_back(e);
    }
  }
  write_json(out_dir / "manifest.json", {{"schema_version", 1},
                                         {"seed", config.seed},
                                         {"size", config.synth_size},
                                         {"per_class", config.synth_per_class},
                                         {"samples", samples}});
  return entries;
}

SceneSample load_sample(const fs::path& dir, SceneClass scene, std::uint64_t seed) {
  SceneSample s;
  s.dsm = read_raster(dir / "dsm.r32g");
  s.dtm = read_raster(dir / "dtm.r32g");
  s.rgb = read_rgb({dir / "rgb_r.r32g", dir / "rgb_g.r32g", dir / "rgb_b.r32g"});
  if (fs::exists(dir / "canopy_mask.r32g")) s.canopy_mask = read_raster(dir / "canopy_mask.r32g");
  s.scene_class = scene;
  s.seed = seed;
  return s;
}

std::vector<SceneSample> load_dataset(const fs::path& synth_dir, SceneClass scene) {
  const fs::path manifest = synth_dir / "manifest.json";
  if (!fs::exists(manifest)) {
    throw std::runtime_error("missing dataset: " + manifest.string() + " not found (run synth)");
  }
  const auto j = read_json(manifest);
  std::vector<SceneSample> out;
  for (const auto& e : j.at("samples")) {
    if (parse_scene_class(e.at("class").get<std::string>()) != scene) continue;
    out.push_back(load_sample(synth_dir / e.at("id").get<std::string>(), scene,
                              e.at("seed").get<std::uint64_t>()));
  }
  if (out.empty()) {
    throw EmptyDatasetError("missing dataset: no '" + std::string(to_string(scene)) +
                            "' samples in " + synth_dir.string());
  }
  return out;
}

// ---------------------------------------------------------------------------
// train

TrainOutput cmd_train(const PipelineConfig& config, PromptKind task, SceneClass scene,
                      const fs::path& out_dir, const std::optional<fs::path>& data_dir,
                      const EpochCallback& on_epoch) {
  config.validate();
  WeightRegistry registry = load_registry_or_empty(config.registry);
  std::optional<WeightStore> init;
  if (task != PromptKind::kLowRes) {
    if (!registry.contains(PromptKind::kLowRes, scene)) {
      throw MissingInitError("cannot train '" + std::string(to_string(task)) + "/" +
                             std::string(to_string(scene)) + "': no lowres/" +
                             std::string(to_string(scene)) +
                             " checkpoint registered to initialize from; available: " +
                             registry.describe_keys());
    }
    init = load_weights(registry.path(PromptKind::kLowRes, scene));
  }
  std::optional<std::vector<SceneSample>> data;
  if (data_dir) data = load_dataset(*data_dir, scene);

  TrainConfig tc = config.train;
  tc.seed = config.seed;
  TrainOutput out;
  out.result = train(task, scene, tc, init ? &*init : nullptr, data ? &*data : nullptr, on_epoch);

  ensure_dir(out_dir);
  out.weights = fs::absolute(out_dir / (task_file_stem(task, scene) + ".p2dw"));
  out.manifest = fs::absolute(out_dir / (task_file_stem(task, scene) + ".json"));
  save_weights(out.result.weights, out.weights);
  auto manifest = out.result.manifest();
  manifest["task"] = to_string(task);
  manifest["scene"] = to_string(scene);
  manifest["weights"] = out.weights.filename().generic_string();
  manifest["train_config"] = tc.to_json();
  manifest["dataset"] = data_dir ? nlohmann::ordered_json{{"source", "synth_dir"},
                                                          {"samples", data->size()}}
                                 : nlohmann::ordered_json{{"source", "generated"},
                                                          {"seed", tc.seed},
                                                          {"stream", 0},
                                                          {"first_index", 0},
                                                          {"count", tc.n_samples}};
  write_json(out.manifest, manifest);

  registry.set(task, scene, out.weights);
  registry.save(config.registry);
  return out;
}

fs::path cmd_train_classifier(const PipelineConfig& config, const fs::path& out_dir) {
  config.validate();
  WeightRegistry registry = load_registry_or_empty(config.registry);
  ClassifierTrainConfig cc = config.classifier;
  cc.seed = config.seed;
  const auto result = train_classifier(cc);
  ensure_dir(out_dir);
  const fs::path file = fs::absolute(out_dir / "classifier.p2dw");
  save_weights(result.weights, file);
  write_json(out_dir / "classifier.json",
             {{"schema_version", 1}, {"config_echo", result.weights.config_echo},
              {"epoch_loss", result.epoch_loss}, {"weights", file.filename().generic_string()}});
  registry.set_classifier(file);
  registry.save(config.registry);
  return file;
}

// ---------------------------------------------------------------------------
// infer

RasterGrid prompt_window(const RasterGrid& prompt, std::size_t fine_rows, std::size_t fine_cols,
                         TilePlacement placement, std::size_t tile_size) {
  if (prompt.rows() == fine_rows && prompt.cols() == fine_cols) {
    return extract_tile(prompt, placement, tile_size);
  }
  if (prompt.rows() == 0 || fine_rows % prompt.rows() != 0 || fine_cols % prompt.cols() != 0 ||
      fine_rows / prompt.rows() != fine_cols / prompt.cols()) {
    throw std::invalid_argument("prompt grid must cover the rgb extent with an integer factor");
  }
  const std::size_t f = fine_rows / prompt.rows();
  if (tile_size % f != 0) throw std::invalid_argument("tile_size must be a multiple of the prompt factor");
  const std::size_t n = tile_size / f;
  RasterGrid out(n, n, prompt.cell_size());
  out.set_nodata(prompt.nodata());
  out.set_origin(prompt.origin_x() + static_cast<double>(placement.col) * prompt.cell_size() / static_cast<double>(f),
                 prompt.origin_y() - static_cast<double>(placement.row) * prompt.cell_size() / static_cast<double>(f));
  const double r0 = static_cast<double>(placement.row) / static_cast<double>(f);
  const double c0 = static_cast<double>(placement.col) / static_cast<double>(f);
  const double rmax = static_cast<double>(prompt.rows() - 1), cmax = static_cast<double>(prompt.cols() - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = std::min(r0 + static_cast<double>(i), rmax);
    const auto ylo = static_cast<std::size_t>(y);
    const std::size_t yhi = std::min(ylo + 1, prompt.rows() - 1);
    const double fy = y - static_cast<double>(ylo);
    for (std::size_t j = 0; j < n; ++j) {
      const double x = std::min(c0 + static_cast<double>(j), cmax);
      const auto xlo = static_cast<std::size_t>(x);
      const std::size_t xhi = std::min(xlo + 1, prompt.cols() - 1);
      const double fx = x - static_cast<double>(xlo);
      if (fy == 0.0 && fx == 0.0) {
        out(i, j) = prompt(ylo, xlo);
        continue;
      }
      const float v00 = prompt(ylo, xlo), v01 = prompt(ylo, xhi), v10 = prompt(yhi, xlo),
                  v11 = prompt(yhi, xhi);
      const float nd = prompt.nodata();
      if (v00 == nd || v01 == nd || v10 == nd || v11 == nd) {
        out(i, j) = nd;
        continue;
      }
      out(i, j) = static_cast<float>(bilerp<double>(v00, v01, v10, v11, fy, fx));
    }
  }
  return out;
}

nlohmann::ordered_json InferManifest::to_json() const {
  nlohmann::ordered_json p = nlohmann::ordered_json::array();
  for (const auto& r : patches) {
    p.push_back({{"file", r.file},
                 {"row", r.placement.row},
                 {"col", r.placement.col},
                 {"scene", to_string(r.scene)},
                 {"forced", r.forced},
                 {"probabilities", r.probabilities},
                 {"norm", {{"mean", r.norm.mean}, {"scale", r.norm.scale}}}});
  }
  auto g = georef_json(georef);
  g["rows"] = rows;
  g["cols"] = cols;
  return {{"schema_version", schema_version},
          {"task", to_string(task)},
          {"georef", g},
          {"tile_size", tile_size},
          {"overlap", overlap},
          {"patches", p}};
}

InferManifest InferManifest::from_json(const nlohmann::json& j) {
  InferManifest m;
  m.schema_version = j.at("schema_version").get<int>();
  m.task = parse_prompt_kind(j.at("task").get<std::string>());
  const auto& g = j.at("georef");
  m.rows = g.at("rows").get<std::size_t>();
  m.cols = g.at("cols").get<std::size_t>();
  m.georef = RasterGrid(1, 1, g.at("cell_size").get<double>());
  m.georef.set_origin(g.at("origin_x").get<double>(), g.at("origin_y").get<double>());
  m.georef.set_nodata(g.at("nodata").get<float>());
  m.tile_size = j.at("tile_size").get<std::size_t>();
  m.overlap = j.at("overlap").get<std::size_t>();
  for (const auto& p : j.at("patches")) {
    PatchRecord r;
    r.file = p.at("file").get<std::string>();
    r.placement = {p.at("row").get<std::size_t>(), p.at("col").get<std::size_t>()};
    r.scene = parse_scene_class(p.at("scene").get<std::string>());
    r.forced = p.value("forced", false);
    r.probabilities = p.at("probabilities").get<std::array<double, 3>>();
    r.norm = {p.at("norm").at("mean").get<double>(), p.at("norm").at("scale").get<double>()};
    m.patches.push_back(r);
  }
  return m;
}

InferManifest cmd_infer(const PipelineConfig& config, const std::array<RasterGrid, 3>& rgb,
                        const RasterGrid& prompt, PromptKind task, const fs::path& out_dir,
                        std::optional<SceneClass> force_class) {
  config.validate();
  const RasterGrid& ref = rgb[0];
  if (!ref.same_shape(rgb[1]) || !ref.same_shape(rgb[2])) {
    throw std::invalid_argument("rgb planes have different dimensions");
  }
  if (ref.rows() < config.tile_size || ref.cols() < config.tile_size) {
    throw std::invalid_argument("input grid " + std::to_string(ref.rows()) + "x" +
                                std::to_string(ref.cols()) + " is smaller than tile_size " +
                                std::to_string(config.tile_size));
  }
  const TilePlan plan = make_tile_plan(ref, config.tile_size, config.overlap);
  const WeightRegistry registry = WeightRegistry::load(config.registry);
  const std::size_t workers = worker_count(config);

  // Inputs per tile, validated before anything is written.
  const std::size_t n = plan.placements.size();
  std::vector<ad::Tensor> tile_rgb(n);
  std::vector<RasterGrid> tile_prompt(n), tile_ref(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto pl = plan.placements[i];
    tile_ref[i] = extract_tile(ref, pl, config.tile_size);
    tile_rgb[i] = rgb_tensor({tile_ref[i], extract_tile(rgb[1], pl, config.tile_size),
                              extract_tile(rgb[2], pl, config.tile_size)});
    tile_prompt[i] = prompt_window(prompt, ref.rows(), ref.cols(), pl, config.tile_size);
  }

  // Routing.
  std::vector<SceneScores> scores(n);
  if (force_class) {
    for (auto& s : scores) {
      s.label = *force_class;
      s.probabilities = {0.0, 0.0, 0.0};
      s.probabilities[static_cast<std::size_t>(*force_class)] = 1.0;
    }
  } else {
    if (!registry.classifier()) {
      throw std::runtime_error("registry has no classifier; train one or pass --force-class");
    }
    const auto clf = SceneClassifier<float>::from_store(load_weights(*registry.classifier()));
    if (clf.config().input_size != config.tile_size) {
      throw std::invalid_argument("classifier input size differs from tile_size");
    }
    parallel_for(n, workers, [&](std::size_t i) {
      ad::NoGradGuard no_grad;
      scores[i] = clf.classify(tile_rgb[i]);
    });
  }

  std::map<SceneClass, std::unique_ptr<PromptDepthNet<float>>> nets;
  std::map<SceneClass, double> scales;
  for (const auto& s : scores) {
    if (nets.count(s.label)) continue;
    const WeightStore store = load_weights(registry.path(task, s.label));
    auto net = std::make_unique<PromptDepthNet<float>>(PromptDepthNet<float>::from_store(store));
    if (net->config().input_size != config.tile_size) {
      throw std::invalid_argument("model input size differs from tile_size");
    }
    scales[s.label] = norm_scale_from_echo(store.config_echo);
    nets[s.label] = std::move(net);
  }

  InferManifest manifest;
  manifest.task = task;
  manifest.rows = ref.rows();
  manifest.cols = ref.cols();
  manifest.georef = RasterGrid(1, 1, ref.cell_size());
  manifest.georef.copy_georef(ref);
  manifest.tile_size = config.tile_size;
  manifest.overlap = config.overlap;
  manifest.patches.resize(n);
  std::vector<RasterGrid> predictions(n);
  parallel_for(n, workers, [&](std::size_t i) {
    ad::NoGradGuard no_grad;
    const SceneClass c = scores[i].label;
    const auto norm = normalize_io(tile_prompt[i], nullptr, scales.at(c));
    predictions[i] = denormalize(nets.at(c)->forward(tile_rgb[i], &norm.prompt), norm.norm, tile_ref[i]);
    PatchRecord& r = manifest.patches[i];
    char name[32];
    std::snprintf(name, sizeof name, "patch_%04zu.r32g", i);
    r.file = name;
    r.placement = plan.placements[i];
    r.scene = c;
    r.probabilities = scores[i].probabilities;
    r.forced = force_class.has_value();
    r.norm = norm.norm;
  });

  ensure_dir(out_dir);
  for (std::size_t i = 0; i < n; ++i) write_raster(predictions[i], out_dir / manifest.patches[i].file);
  write_json(out_dir / "placements.json", manifest.to_json());
  return manifest;
}

// ---------------------------------------------------------------------------
// mosaic

MosaicResult mosaic_patches(const fs::path& patch_dir, bool ordered) {
  const fs::path file = patch_dir / "placements.json";
  if (!fs::exists(file)) throw std::runtime_error("empty patch dir: " + file.string() + " not found");
  const InferManifest m = InferManifest::from_json(read_json(file));
  if (m.patches.empty()) throw std::runtime_error("empty patch dir: manifest lists no patches");
  RasterGrid georef(m.rows, m.cols, m.georef.cell_size());
  georef.copy_georef(m.georef);
  BlendAccumulator acc(georef, ordered);
  for (const auto& p : m.patches) acc.accumulate_patch(read_raster(patch_dir / p.file), p.placement);
  return finalize(acc);
}

MosaicOutput cmd_mosaic(const PipelineConfig& config, const fs::path& patch_dir,
                        const fs::path& out_dir) {
  MosaicOutput out;
  out.mosaic = mosaic_patches(patch_dir, config.deterministic);
  ensure_dir(out_dir);
  out.dem = out_dir / "mosaic.r32g";
  out.hillshade_png = out_dir / "mosaic_hillshade.png";
  out.coverage = out_dir / "coverage.json";
  write_raster(out.mosaic.dem, out.dem);
  write_png(hillshade(out.mosaic.dem, 315.0, 45.0), out.hillshade_png);
  write_json(out.coverage, {{"schema_version", 1},
                            {"rows", out.mosaic.dem.rows()},
                            {"cols", out.mosaic.dem.cols()},
                            {"zero_weight_pixels", out.mosaic.uncovered}});
  return out;
}

// ---------------------------------------------------------------------------
// hydro

HydroOutput cmd_hydro(const RasterGrid& dem, std::size_t threshold,
                      const std::vector<double>& radii_cells, const RasterGrid* truth,
                      const fs::path& out_dir) {
  if (threshold < 1) throw std::invalid_argument("--threshold must be >= 1");
  if (truth && !truth->same_shape(dem)) {
    throw std::invalid_argument("truth DEM dimensions differ from the input DEM");
  }
  HydroOutput out;
  out.products = stream_network(dem, threshold);
  if (truth) {
    const StreamMask truth_streams = stream_network(*truth, threshold).streams;
    nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
    for (double rc : radii_cells) {
      const double radius = rc * dem.cell_size();
      const auto m = segmentation_metrics(buffer_mask(out.products.streams, radius, dem.cell_size()),
                                          buffer_mask(truth_streams, radius, dem.cell_size()));
      blocks.push_back({{"radius_cells", rc},
                        {"radius_m", radius},
                        {"iou", m.iou},
                        {"precision", m.precision},
                        {"recall", m.recall},
                        {"f1", m.f1},
                        {"accuracy", m.accuracy},
                        {"undefined_ratio", m.undefined_ratio}});
    }
    out.metrics = nlohmann::ordered_json{{"schema_version", 1},
                                         {"threshold_cells", threshold},
                                         {"buffers", blocks}};
  }
  ensure_dir(out_dir);
  write_raster(out.products.filled, out_dir / "filled.r32g");
  write_raster(to_raster(out.products.directions, dem), out_dir / "directions.r32g");
  write_raster(to_raster(out.products.accumulation, dem), out_dir / "accumulation.r32g");
  write_raster(to_raster(out.products.streams, dem), out_dir / "streams.r32g");
  if (out.metrics) write_json(out_dir / "metrics.json", *out.metrics);
  return out;
}

// ---------------------------------------------------------------------------
// eval / classify

EvalReport cmd_eval(const PipelineConfig& config, const RasterGrid& truth,
                    const RasterGrid& candidate, const RasterGrid& baseline,
                    const RasterGrid* region, const std::string& region_name,
                    const std::optional<fs::path>& out_json) {
  StreamConfig streams;
  streams.threshold = config.stream_threshold;
  streams.radii_cells = config.radii_cells;
  EvalReport report = compare_report(truth, candidate, baseline, region, streams,
                                     region ? region_name : "all");
  if (out_json) write_json(*out_json, report.to_json());
  return report;
}

SceneScores cmd_classify(const PipelineConfig& config, const std::array<RasterGrid, 3>& rgb) {
  const WeightRegistry registry = WeightRegistry::load(config.registry);
  if (!registry.classifier()) throw std::runtime_error("registry has no classifier");
  const auto clf = SceneClassifier<float>::from_store(load_weights(*registry.classifier()));
  if (rgb[0].rows() != clf.config().input_size || rgb[0].cols() != clf.config().input_size) {
    throw std::invalid_argument("classify expects a " + std::to_string(clf.config().input_size) +
                                "x" + std::to_string(clf.config().input_size) + " patch");
  }
  ad::NoGradGuard no_grad;
  return clf.classify(rgb_tensor(rgb));
}

}  // namespace p2d
