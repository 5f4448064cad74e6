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


// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit when any
// fails. Criteria can be selected by number on the command line.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "hydro_oracle.hpp"
#include "mosaic_probe.hpp"
#include "p2d/ad/adam.hpp"
#include "p2d/evaluation.hpp"
#include "p2d/hydrology.hpp"
#include "p2d/model.hpp"
#include "p2d/mosaic.hpp"
#include "p2d/pipeline.hpp"
#include "p2d/training.hpp"
#include "test_util.hpp"

namespace p2d {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const std::string& line) {
  std::fprintf(stderr, "  .. %s\n", line.c_str());
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

Outcome gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0, worst_plain = 0.0;
  std::string worst_name;
  for (const auto& c : test::gradient_cases()) {
    const double e = test::worst_gradient_error(c, test::FiniteDifference::kRichardson);
    const double plain = test::worst_gradient_error(c, test::FiniteDifference::kCentral);
    if (e > worst) {
      worst = e;
      worst_name = c.name;
    }
    worst_plain = std::max(worst_plain, plain);
  }
  const double secs = seconds_since(t0);
  return {worst < test::kGradTolerance && secs < 120.0,
          fmt("%zu cases x %zu instances, max rel err %.2e (%s), plain central h=1e-3 max %.2e, "
              "%.1fs",
              test::gradient_cases().size(), test::kGradInstances, worst, worst_name.c_str(),
              worst_plain, secs)};
}

// ---------------------------------------------------------------------------
// 2. Zero-init prompt invariance

ad::Tensor uniform_tensor(ad::Shape shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<float> v(ad::numel(shape));
  for (auto& x : v) x = static_cast<float>(u(rng));
  return ad::Tensor(std::move(shape), std::move(v));
}

bool same_bits(const ad::Tensor& a, const ad::Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

Outcome prompt_invariance() {
  const ModelConfig config;
  const TrainConfig train_defaults;
  PromptDepthNet<float> net(config, 11);
  std::mt19937_64 rng(11);
  struct Case {
    ad::Tensor rgb, p1, p2;
  };
  std::vector<Case> cases;
  for (int i = 0; i < 10; ++i) {
    auto rgb = uniform_tensor({3, 64, 64}, rng, 0, 1);
    auto p1 = uniform_tensor({1, 8, 8}, rng, -2, 2);
    auto p2 = uniform_tensor({1, 8, 8}, rng, -2, 2);
    cases.push_back({rgb, p1, p2});
  }
  int identical = 0;
  for (const auto& c : cases) identical += same_bits(net.forward(c.rgb, &c.p1), net.forward(c.rgb, &c.p2));

  // One Adam step at the default learning rate on the edge loss.
  ad::AdamState adam;
  adam.lr = train_defaults.lr;
  const auto target = uniform_tensor({1, 64, 64}, rng, -1, 1);
  ad::backward(edge_loss(target, net.forward(cases[0].rgb, &cases[0].p1),
                         static_cast<float>(train_defaults.lambda_edge)));
  ad::adam_step(net.params().tensors(), adam);
  net.params().zero_grad();
  int differ = 0;
  for (const auto& c : cases) differ += !same_bits(net.forward(c.rgb, &c.p1), net.forward(c.rgb, &c.p2));
  return {identical == 10 && differ == 10,
          fmt("bit-identical at init %d/10, differ after one step (lr %.0e) %d/10", identical,
              train_defaults.lr, differ)};
}

// ---------------------------------------------------------------------------
// 3. Loss contract

ad::Tensor64 grid64(std::size_t n, const std::function<double(std::size_t, std::size_t)>& f) {
  std::vector<double> v(n * n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) v[r * n + c] = f(r, c);
  return ad::Tensor64({1, n, n}, std::move(v));
}

double scalar(const ad::Tensor64& t) { return t.data()[0]; }

Outcome loss_contract() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50, 50);
  std::vector<std::string> failures;
  int checks = 0;
  auto check = [&](bool ok, const std::string& what) {
    ++checks;
    if (!ok) failures.push_back(what);
  };
  for (int i = 0; i < 20; ++i) {
    const auto e = grid64(16, [&](auto, auto) { return u(rng); });
    const auto p = grid64(16, [&](auto, auto) { return u(rng); });
    check(scalar(edge_loss(e, e, 0.9)) == 0.0, "edge_loss(E,E) != 0");
    // Independent mean absolute error in the same summation order.
    double sum = 0.0;
    for (std::size_t k = 0; k < 256; ++k) sum += std::abs(p.data()[k] - e.data()[k]);
    const double oracle = sum / 256.0;
    const double got = scalar(edge_loss(e, p, 0.0));
    check(std::abs(got - oracle) <= 1e-14 * oracle, "lambda=0 differs from mean |d|");
  }
  // Dyadic fixtures: every intermediate is exact, so equality is exact.
  const auto e = grid64(16, [](auto r, auto c) { return double((r * 7 + c * 3) % 29) * 0.125; });
  const auto p = grid64(16, [](auto r, auto c) { return double((r * 5 + c * 11) % 23) * 0.25; });
  double sum = 0.0;
  for (std::size_t k = 0; k < 256; ++k) sum += std::abs(p.data()[k] - e.data()[k]);
  check(scalar(edge_loss(e, p, 0.0)) == sum / 256.0, "dyadic lambda=0 not exact");
  for (double c : {0.5, -1.25, 3.0}) {
    const auto shifted = grid64(16, [&](auto r, auto col) { return e.data()[r * 16 + col] + c; });
    const double with_edge = scalar(edge_loss(e, shifted, 0.9));
    const double l1 = scalar(edge_loss(e, shifted, 0.0));
    check(l1 == std::abs(c), fmt("offset %g: L1 term %.17g", c, l1));
    check(with_edge - l1 == 0.0, fmt("offset %g: gradient term %.3g", c, with_edge - l1));
  }
  // Ramp d = c/4 on 4x4: mean|d| = 0.375, mean|dx| = 0.25, dy = 0.
  const auto zero = grid64(4, [](auto, auto) { return 0.0; });
  const auto ramp = grid64(4, [](auto, auto c) { return double(c) / 4.0; });
  check(std::abs(scalar(edge_loss(zero, ramp, 0.9)) - (0.375 + 0.9 * 0.25)) < 1e-15, "ramp value");
  return {failures.empty(), failures.empty() ? fmt("%d checks exact", checks)
                                             : fmt("%zu/%d failed, first: %s", failures.size(),
                                                   checks, failures.front().c_str())};
}

// ---------------------------------------------------------------------------
// 4. Hydrology oracle equivalence

Outcome hydrology_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(4);
  int equal = 0, idempotent = 0, acyclic = 0;
  for (int i = 0; i < 100; ++i) {
    RasterGrid dem(8, 8);
    // Alternate integer DEMs (many ties and flats) with continuous ones.
    if (i % 2 == 0) {
      std::uniform_int_distribution<int> d(0, 9);
      for (auto& v : dem.values()) v = static_cast<float>(d(rng));
    } else {
      std::uniform_real_distribution<float> d(100.0f, 140.0f);
      for (auto& v : dem.values()) v = d(rng);
    }
    const auto filled = fill_depressions(dem);
    const auto refilled = fill_depressions(filled);
    idempotent += std::equal(filled.values().begin(), filled.values().end(), refilled.values().begin());
    const auto dirs = d8_flow_direction(filled);
    try {
      const auto acc = flow_accumulation(dirs);
      const auto oracle = test::path_oracle(dirs);
      ++acyclic;
      equal += acc.values == oracle.values;
    } catch (const std::exception&) {
    }
  }
  const double secs = seconds_since(t0);
  return {equal == 100 && idempotent == 100 && acyclic == 100 && secs < 60.0,
          fmt("oracle equal %d/100, fill idempotent %d/100, acyclic %d/100, %.2fs", equal,
              idempotent, acyclic, secs)};
}

// ---------------------------------------------------------------------------
// 5. Metric formula exactness

Outcome metric_formulas() {
  std::vector<std::string> failures;
  auto near = [&](double got, double want, const char* what) {
    if (!(std::abs(got - want) <= 1e-9)) failures.push_back(fmt("%s %.12g vs %.12g", what, got, want));
  };
  // Errors {1, 3, 1, 3}: MAE 2, RMSE sqrt(5).
  RasterGrid truth(2, 2, 1.0, std::vector<float>{10, 20, 30, 40});
  RasterGrid pred(2, 2, 1.0, std::vector<float>{11, 17, 31, 43});
  near(mae(truth, pred), 2.0, "MAE");
  near(rmse(truth, pred), std::sqrt(5.0), "RMSE");

  // 4x4 masks: tp 2, fp 2, fn 2, tn 10.
  StreamMask p, t;
  p.cells = CellGrid<std::uint8_t>(4, 4, 0);
  t.cells = p.cells;
  for (std::size_t i : {0u, 1u, 2u, 3u}) p.cells.values[i] = 1;
  for (std::size_t i : {0u, 1u, 4u, 5u}) t.cells.values[i] = 1;
  const auto m = segmentation_metrics(p, t);
  near(m.iou, 2.0 / 6.0, "IoU");
  near(m.precision, 0.5, "precision");
  near(m.recall, 0.5, "recall");
  near(m.f1, 0.5, "F1");
  near(m.accuracy, 12.0 / 16.0, "accuracy");

  std::mt19937_64 rng(5);
  std::normal_distribution<float> n(0.0f, 10.0f);
  int holds = 0;
  for (int i = 0; i < 1000; ++i) {
    RasterGrid a(12, 12), b(12, 12);
    for (auto& v : a.values()) v = n(rng);
    for (auto& v : b.values()) v = n(rng);
    holds += rmse(a, b) >= mae(a, b);
  }
  if (holds != 1000) failures.push_back(fmt("RMSE >= MAE held %d/1000", holds));
  return {failures.empty(), failures.empty()
                                ? std::string("MAE, RMSE, IoU, P, R, F1, accuracy within 1e-9; "
                                              "RMSE >= MAE on 1000/1000")
                                : failures.front()};
}

// ---------------------------------------------------------------------------
// 6. Mosaic seamlessness

RasterGrid field(std::size_t rows, std::size_t cols, const std::function<double(double, double)>& f) {
  RasterGrid g(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) g(r, c) = static_cast<float>(f(double(r), double(c)));
  return g;
}

RasterGrid blend(const RasterGrid& truth, const TilePlan& plan, double sigma, unsigned seed,
                 const std::vector<std::size_t>* order = nullptr) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> off(0.0, sigma > 0 ? sigma : 1.0);
  std::vector<RasterGrid> tiles;
  for (const auto& p : plan.placements) {
    auto t = extract_tile(truth, p, plan.tile_size);
    const auto b = static_cast<float>(sigma > 0 ? off(rng) : 0.0);
    for (auto& v : t.values()) v += b;
    tiles.push_back(std::move(t));
  }
  BlendAccumulator acc(truth, true);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const std::size_t k = order ? (*order)[i] : i;
    acc.accumulate_patch(tiles[k], plan.placements[k]);
  }
  return finalize(acc).dem;
}

Outcome mosaic_seams() {
  const auto lin = field(100, 130, [](double r, double c) { return 120.0 + 0.75 * c - 0.4 * r; });
  const auto plan = make_tile_plan(lin, 64, 16);
  const auto lin_out = blend(lin, plan, 0.0, 0);
  double lin_err = 0;
  for (std::size_t i = 0; i < lin.size(); ++i)
    lin_err = std::max(lin_err, std::abs(double(lin_out.values()[i]) - double(lin.values()[i])));

  const RasterGrid flat(100, 130, 1.0, 1438.25f);
  const auto flat_out = blend(flat, plan, 0.0, 0);
  const bool flat_exact = std::all_of(flat_out.values().begin(), flat_out.values().end(),
                                      [](float v) { return v == 1438.25f; });

  const auto smooth = field(160, 160, [](double r, double c) {
    return 30.0 * std::sin(c / 15.0) * std::cos(r / 20.0) + 0.5 * c;
  });
  const auto splan = make_tile_plan(smooth, 64, 16);
  double worst_ratio = 0;
  for (unsigned seed = 0; seed < 20; ++seed)
    worst_ratio = std::max(worst_ratio, test::seam_ratio(blend(smooth, splan, 0.1, seed), splan));

  // Control: last-writer pasting of the same offset tiles must register.
  std::mt19937 rng(2);
  std::normal_distribution<double> off(0.0, 0.1);
  RasterGrid pasted = smooth;
  for (const auto& p : splan.placements) {
    const auto b = static_cast<float>(off(rng));
    for (std::size_t r = 0; r < 64; ++r)
      for (std::size_t c = 0; c < 64; ++c) pasted(p.row + r, p.col + c) = smooth(p.row + r, p.col + c) + b;
  }
  const double control = test::seam_ratio(pasted, splan);

  std::vector<std::size_t> order(splan.placements.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto ref = blend(smooth, splan, 0.1, 99, &order);
  std::mt19937 shuf(6);
  int same = 0;
  for (int i = 0; i < 10; ++i) {
    std::shuffle(order.begin(), order.end(), shuf);
    const auto other = blend(smooth, splan, 0.1, 99, &order);
    same += std::equal(ref.values().begin(), ref.values().end(), other.values().begin());
  }
  return {lin_err < 1e-4 && flat_exact && worst_ratio < 1.5 && control > 1.5 && same == 10,
          fmt("linear max err %.2e m, constant exact %s, seam ratio max %.3f over 20 mosaics "
              "(hard-cut control %.3f), order-independent %d/10",
              lin_err, flat_exact ? "yes" : "no", worst_ratio, control, same)};
}

// ---------------------------------------------------------------------------
// Shared benchmark state for 7, 8 and 9.

constexpr std::uint64_t kBenchSeed = 0;
constexpr std::uint64_t kHeldOutStream = 1;
constexpr std::uint64_t kMosaicStream = 5;
constexpr std::uint64_t kClassifierStream = 6;

TrainConfig bench_config() {
  TrainConfig c;
  c.seed = kBenchSeed;
  c.lr = 1e-3;
  c.epochs = 30;
  c.n_samples = 200;
  c.norm_scale = 20.0;
  c.model.decoder_channels = {32, 32, 32, 32};
  c.prompt.factor = 8;
  c.prompt.bias_sigma = 2.0;
  c.prompt.canopy_bias = 3.0;
  return c;
}

// Held-out prompt noise is keyed differently from the training stream.
std::uint64_t held_out_prompt_seed(std::uint64_t sample_seed) {
  return sample_seed ^ 0x5eed0f0e1d0u;
}

struct Bench {
  std::map<SceneClass, WeightStore> lowres;
  std::map<SceneClass, double> train_seconds;
};

Bench& bench() {
  static Bench b;
  return b;
}

const WeightStore& lowres_model(SceneClass scene) {
  auto& b = bench();
  if (!b.lowres.count(scene)) {
    const auto t0 = Clock::now();
    auto result = train(PromptKind::kLowRes, scene, bench_config(), nullptr, nullptr,
                        [&](const EpochLoss& e) {
                          progress(fmt("lowres/%s epoch %zu train %.4f val %.4f",
                                       std::string(to_string(scene)).c_str(), e.epoch, e.train,
                                       e.validation));
                        });
    b.train_seconds[scene] = seconds_since(t0);
    b.lowres.emplace(scene, std::move(result.weights));
  }
  return b.lowres.at(scene);
}

// ---------------------------------------------------------------------------
// 7. Desk-scale improvement benchmark

Outcome improvement_benchmark() {
  const auto t0 = Clock::now();
  const auto config = bench_config();
  bool all = true;
  std::string detail;
  for (auto scene : kAllSceneClasses) {
    const auto net = PromptDepthNet<float>::from_store(lowres_model(scene));
    double sp = 0, sb = 0;
    for (const auto& s : generate_dataset(scene, 50, kBenchSeed, kHeldOutStream, 64)) {
      const auto ex = build_example(s, config.prompt, held_out_prompt_seed(s.seed), config.norm_scale);
      const double a = rmse(ex.truth, predict(net, ex));
      const double b = rmse(ex.truth, ex.baseline);
      sp += a * a;
      sb += b * b;
    }
    const double pred = std::sqrt(sp / 50), base = std::sqrt(sb / 50);
    all = all && pred <= 0.8 * base;
    detail += fmt("%s %.3f/%.3f m (%.1f%% lower); ", std::string(to_string(scene)).c_str(), pred,
                  base, 100.0 * (1.0 - pred / base));
  }
  const double secs = seconds_since(t0);
  return {all && secs < 1800.0, detail + fmt("%d epochs, %.0fs", int(config.epochs), secs)};
}

// ---------------------------------------------------------------------------
// 8. Stream-network benchmark on vegetated mosaics

double stream_iou(const RasterGrid& dem, const StreamMask& truth_buffered, std::size_t threshold) {
  const auto streams = buffer_mask(stream_network(dem, threshold).streams, 2.0 * dem.cell_size(),
                                   dem.cell_size());
  return segmentation_metrics(streams, truth_buffered).iou;
}

Outcome stream_benchmark() {
  const auto t0 = Clock::now();
  const SceneClass scene = SceneClass::kVegetated;
  const auto config = bench_config();
  test::TempDir dir;
  const auto weights = dir.path() / "lowres_vegetated.p2dw";
  save_weights(lowres_model(scene), weights);
  WeightRegistry registry;
  registry.set(PromptKind::kLowRes, scene, weights);
  PipelineConfig pc;
  pc.seed = kBenchSeed;
  pc.deterministic = true;
  pc.tile_size = 64;
  pc.overlap = 16;
  pc.registry = dir.path() / "registry.json";
  pc.train = config;
  registry.save(pc.registry);

  constexpr std::size_t kSize = 112;
  const std::size_t threshold = default_stream_threshold(kSize * kSize);
  int wins = 0;
  double sum_pred = 0, sum_base = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto seed = sample_seed(kBenchSeed, scene, kMosaicStream, i);
    const auto sample = generate_terrain(sample_scene_params(scene, seed, kSize));
    const auto prompt = degrade_to_prompt(sample.dsm, &sample.canopy_mask, config.prompt.factor,
                                          config.prompt.bias_sigma, config.prompt.canopy_bias,
                                          held_out_prompt_seed(seed));
    const auto patches = dir.path() / ("scene" + std::to_string(i));
    cmd_infer(pc, sample.rgb, prompt, PromptKind::kLowRes, patches, scene);
    const auto predicted = mosaic_patches(patches, true).dem;
    auto baseline = bilinear_resample(prompt, kSize, kSize);
    baseline.copy_georef(sample.dsm);
    const auto truth = buffer_mask(stream_network(sample.dsm, threshold).streams,
                                   2.0 * sample.dsm.cell_size(), sample.dsm.cell_size());
    const double ip = stream_iou(predicted, truth, threshold);
    const double ib = stream_iou(baseline, truth, threshold);
    wins += ip > ib;
    sum_pred += ip;
    sum_base += ib;
  }
  return {wins >= 16, fmt("predicted IoU > upsampled IoU in %d/20 (mean %.3f vs %.3f), "
                          "threshold %zu cells, 2-cell buffer, %.0fs",
                          wins, sum_pred / 20, sum_base / 20, threshold, seconds_since(t0))};
}

// ---------------------------------------------------------------------------
// 9. Void filling restricted to the hole

Outcome void_benchmark() {
  const auto t0 = Clock::now();
  // Region restriction: poisoning outside the hole leaves the metric unchanged.
  bool invariant = true;
  {
    std::mt19937_64 rng(9);
    std::normal_distribution<float> n(0.0f, 5.0f);
    const auto hole = void_mask(64, 64, 0.5);
    for (int i = 0; i < 50; ++i) {
      RasterGrid truth(64, 64), pred(64, 64);
      for (auto& v : truth.values()) v = 1000.0f + n(rng);
      for (auto& v : pred.values()) v = 1000.0f + n(rng);
      const double m0 = mae(truth, pred, &hole), r0 = rmse(truth, pred, &hole);
      auto pt = truth, pp = pred;
      for (std::size_t k = 0; k < pp.size(); ++k) {
        if (hole.values()[k] != 0.0f) continue;
        pp.values()[k] = (k % 3 == 0) ? pp.nodata() : 1e7f * n(rng);
        pt.values()[k] = -1e6f;
      }
      invariant = invariant && mae(pt, pp, &hole) == m0 && rmse(pt, pp, &hole) == r0;
    }
  }

  auto config = bench_config();
  PromptSpec spec = config.prompt;
  spec.kind = PromptKind::kVoidFilled;
  config.prompt = spec;
  bool all = invariant;
  std::string detail = fmt("poison-invariant %s; ", invariant ? "yes" : "no");
  for (auto scene : kAllSceneClasses) {
    const auto result = train(PromptKind::kVoidFilled, scene, config, &lowres_model(scene), nullptr,
                              [&](const EpochLoss& e) {
                                progress(fmt("void/%s epoch %zu val %.4f",
                                             std::string(to_string(scene)).c_str(), e.epoch,
                                             e.validation));
                              });
    const auto net = PromptDepthNet<float>::from_store(result.weights);
    double sp = 0, sb = 0;
    std::size_t n = 0;
    for (const auto& s : generate_dataset(scene, 50, kBenchSeed, kHeldOutStream, 64)) {
      const auto ex = build_example(s, spec, held_out_prompt_seed(s.seed), config.norm_scale);
      const double a = rmse(ex.truth, predict(net, ex), &ex.hole_mask);
      const double b = rmse(ex.truth, ex.baseline, &ex.hole_mask);
      sp += a * a;
      sb += b * b;
      ++n;
    }
    const double pred = std::sqrt(sp / double(n)), base = std::sqrt(sb / double(n));
    all = all && pred < base;
    detail += fmt("%s in-hole %.3f/%.3f m; ", std::string(to_string(scene)).c_str(), pred, base);
  }
  return {all, detail + fmt("%d fine-tune epochs, %.0fs", int(config.finetune_epochs),
                            seconds_since(t0))};
}

// ---------------------------------------------------------------------------
// 10. Scene classifier

Outcome classifier_benchmark() {
  const auto t0 = Clock::now();
  const ClassifierTrainConfig config;
  const auto result = train_classifier(config, [](std::size_t epoch, double loss) {
    progress(fmt("classifier epoch %zu loss %.4f", epoch, loss));
  });
  const auto clf = SceneClassifier<float>::from_store(result.weights);
  std::vector<SceneClass> truth, predicted;
  for (auto scene : kAllSceneClasses) {
    for (const auto& s : generate_dataset(scene, 100, config.seed, kClassifierStream,
                                          config.model.input_size)) {
      truth.push_back(scene);
      predicted.push_back(clf.classify(rgb_tensor(s.rgb)).label);
    }
  }
  const double f1 = macro_f1(truth, predicted);
  return {f1 >= 0.9 && config.epochs <= 10,
          fmt("macro F1 %.4f on %zu held-out patches, %zu epochs, %.0fs", f1, truth.size(),
              config.epochs, seconds_since(t0))};
}

// ---------------------------------------------------------------------------
// 11. Determinism of the full CLI pipeline

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(P2D_CLI_PATH) + " " + args + " >>" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string last_line(const std::string& text) {
  auto end = text.find_last_not_of('\n');
  if (end == std::string::npos) return {};
  const auto start = text.rfind('\n', end);
  return text.substr(start == std::string::npos ? 0 : start + 1, end - (start == std::string::npos ? 0 : start + 1) + 1);
}

PipelineConfig determinism_config(const fs::path& root) {
  PipelineConfig c;
  c.seed = 7;
  c.deterministic = true;
  c.synth_per_class = 2;
  c.synth_size = 32;
  c.tile_size = 16;
  c.overlap = 4;
  c.stream_threshold = 3;
  c.registry = root / "weights" / "registry.json";
  c.train.model.input_size = 16;
  c.train.model.vit_patch = 4;
  c.train.model.embed_dim = 8;
  c.train.model.depth = 2;
  c.train.model.heads = 2;
  c.train.model.mlp_ratio = 2;
  c.train.model.tap_layers = {1, 1, 2, 2};
  c.train.model.decoder_channels = {4, 4, 4, 4};
  c.train.model.prompt_hidden = 4;
  c.train.model.head_hidden = 4;
  c.train.lr = 1e-3;
  c.train.epochs = 1;
  c.train.finetune_epochs = 1;
  c.train.n_samples = 5;
  c.train.norm_scale = 20.0;
  c.train.prompt.factor = 4;
  c.classifier.model.input_size = 16;
  c.classifier.model.vit_patch = 4;
  c.classifier.model.embed_dim = 8;
  c.classifier.model.depth = 1;
  c.classifier.model.heads = 2;
  c.classifier.model.mlp_ratio = 2;
  c.classifier.per_class = 4;
  c.classifier.epochs = 1;
  return c;
}

// Runs synth -> train --all -> infer (classifier routing) -> mosaic -> eval
// in `root` and returns every weight file and the report, keyed by name.
std::map<std::string, std::string> cli_pipeline(const fs::path& root, std::string& error) {
  write_json(root / "config.json", determinism_config(root).to_json());
  const std::string cfg = " --config " + (root / "config.json").string();
  const fs::path sample = root / "synth" / "urban_0000";
  const std::string r = root.string();
  const std::vector<std::string> steps = {
      "synth" + cfg + " --out " + r + "/synth",
      "train" + cfg + " --all --out " + r + "/weights",
      "infer" + cfg + " --task lowres --rgb " + (sample / "rgb_r.r32g").string() + " " +
          (sample / "rgb_g.r32g").string() + " " + (sample / "rgb_b.r32g").string() +
          " --prompt " + (sample / "prompt_lowres.r32g").string() + " --out " + r + "/patches",
      "mosaic" + cfg + " --patches " + r + "/patches --out " + r + "/mosaic",
      "eval" + cfg + " --truth " + (sample / "dsm.r32g").string() + " --candidate " + r +
          "/mosaic/mosaic.r32g --baseline " + (sample / "baseline_lowres.r32g").string() +
          " --json " + r + "/report.json",
  };
  for (const auto& s : steps) {
    if (const int code = run_cli(s, root / "cli.log"); code != 0) {
      error = fmt("'%s' exited %d: %s", s.substr(0, s.find(' ')).c_str(), code,
                  last_line(slurp(root / "cli.log")).c_str());
      return {};
    }
  }
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(root / "weights"))
    if (e.path().extension() == ".p2dw") files[e.path().filename().string()] = slurp(e.path());
  files["report.json"] = slurp(root / "report.json");
  return files;
}

Outcome determinism() {
  const auto t0 = Clock::now();
  test::TempDir a, b;
  std::string error;
  const auto fa = cli_pipeline(a.path(), error);
  if (!error.empty()) return {false, error};
  const auto fb = cli_pipeline(b.path(), error);
  if (!error.empty()) return {false, error};
  std::size_t weights = 0, identical = 0;
  for (const auto& [name, bytes] : fa) {
    weights += name.ends_with(".p2dw");
    const auto it = fb.find(name);
    identical += it != fb.end() && it->second == bytes && !bytes.empty();
  }
  return {fa.size() == fb.size() && identical == fa.size() && weights == 8,
          fmt("%zu/%zu artifacts bit-identical (%zu weight files + report), %.0fs", identical,
              fa.size(), weights, seconds_since(t0))};
}

// ---------------------------------------------------------------------------

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)();
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {1, "gradient correctness", gradients},
      {2, "zero-init prompt invariance", prompt_invariance},
      {3, "loss contract", loss_contract},
      {4, "hydrology oracle equivalence", hydrology_oracle},
      {5, "metric formula exactness", metric_formulas},
      {6, "mosaic seamlessness", mosaic_seams},
      {7, "improvement benchmark", improvement_benchmark},
      {8, "stream-network benchmark", stream_benchmark},
      {9, "void-filling region restriction", void_benchmark},
      {10, "scene classifier", classifier_benchmark},
      {11, "pipeline determinism", determinism},
  };
  return all;
}

}  // namespace
}  // namespace p2d

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : p2d::criteria()) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    p2d::Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("CRITERION %2d %s: %s (%s)\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
