// Copyright 2026 The Relight Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "relight/data/dataset.h"
#include "relight/nn/checkpoint.h"
#include "relight/pipeline/pipeline.h"
#include "testutil.h"

using namespace relight;
namespace fs = std::filesystem;

namespace {

data::DatasetSpec tiny_spec() {
  data::DatasetSpec spec;
  spec.count = 16;
  spec.resolution = 16;
  spec.seed = 13;
  spec.dims = geom::ShapeDims{4, 2, 2};
  spec.tessellation = 2;
  spec.identity_dim = 8;
  spec.shadow_probability = 0.4;
  spec.split = {0.75, 0.125, 0.125};
  return spec;
}

pipeline::TrainConfig tiny_config() {
  pipeline::TrainConfig cfg;
  cfg.unet.image_size = 16;
  cfg.unet.base_channels = 8;
  cfg.unet.channel_multipliers = {1, 2};
  cfg.unet.attention_resolutions = {8};
  cfg.unet.num_res_blocks = 1;
  cfg.unet.attention_heads = 1;
  cfg.unet.nonspatial_dim = 8 + 3 + 8 + 1;
  cfg.unet.time_embed_dim = 16;
  cfg.unet.cond_hidden = 16;
  cfg.schedule.steps = 100;
  cfg.batch_size = 4;
  cfg.total_images = 4 * 30;
  cfg.seed = 3;
  cfg.log_every = 1;
  cfg.checkpoint_every = 1000;
  return cfg;
}

struct Workspace {
  fs::path root;
  explicit Workspace(const std::string& name) : root(fs::temp_directory_path() / name) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  std::string dir(const std::string& sub) const { return (root / sub).string(); }
};

std::vector<double> losses_from_csv(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  std::vector<double> out;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == 's') continue;
    size_t c1 = line.find(',');
    size_t c2 = line.find(',', c1 + 1);
    out.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
  }
  return out;
}

}  // namespace

TEST_CASE("training runs, logs a near-unit first loss, and resumes bit-exactly") {
  Workspace ws("relight_pipe_train");
  auto spec = tiny_spec();
  data::generate(spec, ws.dir("data"));
  auto cfg = tiny_config();

  auto result = pipeline::train(cfg, ws.dir("data"), ws.dir("full"));
  CHECK(result.steps_run == 30);
  CHECK(result.first_logged_loss == doctest::Approx(1.0).epsilon(0.3));

  // Stop at step 12, resume to 30, compare losses and final parameters.
  auto cfg_half = cfg;
  cfg_half.total_images = 4 * 12;
  pipeline::train(cfg_half, ws.dir("data"), ws.dir("half"));
  auto cfg_rest = cfg;
  auto resumed = pipeline::train(cfg_rest, ws.dir("data"), ws.dir("rest"),
                                 ws.dir("half") + "/final.ckpt");
  CHECK(resumed.steps_run == 30);

  auto full_losses = losses_from_csv(ws.dir("full") + "/metrics.csv");
  auto half_losses = losses_from_csv(ws.dir("half") + "/metrics.csv");
  auto rest_losses = losses_from_csv(ws.dir("rest") + "/metrics.csv");
  REQUIRE(full_losses.size() == 30);
  REQUIRE(half_losses.size() == 12);
  REQUIRE(rest_losses.size() == 18);
  for (size_t i = 0; i < half_losses.size(); ++i) CHECK(full_losses[i] == half_losses[i]);
  for (size_t i = 0; i < rest_losses.size(); ++i) CHECK(full_losses[12 + i] == rest_losses[i]);

  auto full_ckpt = nn::read_checkpoint(ws.dir("full") + "/final.ckpt");
  auto rest_ckpt = nn::read_checkpoint(ws.dir("rest") + "/final.ckpt");
  REQUIRE(full_ckpt.tensors.size() == rest_ckpt.tensors.size());
  for (size_t i = 0; i < full_ckpt.tensors.size(); ++i) {
    CHECK(full_ckpt.tensors[i].first == rest_ckpt.tensors[i].first);
    CHECK(testutil::hash_tensor(full_ckpt.tensors[i].second) ==
          testutil::hash_tensor(rest_ckpt.tensors[i].second));
  }

  SUBCASE("config mismatch on resume is rejected") {
    auto other = cfg;
    other.lr = 5e-4;
    CHECK_THROWS_AS(pipeline::train(other, ws.dir("data"), ws.dir("bad"),
                                    ws.dir("half") + "/final.ckpt"),
                    ValidationError);
  }

  SUBCASE("checkpoint reload preserves every parameter bit") {
    auto model = pipeline::ModelBundle::load(result.final_checkpoint);
    nn::Checkpoint again;
    nn::collect_params(model.all_params(), &again);
    for (size_t i = 0; i < again.tensors.size(); ++i)
      CHECK(testutil::hash_tensor(again.tensors[i].second) ==
            testutil::hash_tensor(full_ckpt.tensors[i].second));
    CHECK(model.step == 30);
  }
}

TEST_CASE("relighting pipeline determinism and wiring contracts") {
  Workspace ws("relight_pipe_infer");
  auto spec = tiny_spec();
  data::generate(spec, ws.dir("data"));
  auto cfg = tiny_config();
  cfg.total_images = 4 * 6;
  auto result = pipeline::train(cfg, ws.dir("data"), ws.dir("run"));

  auto model = pipeline::ModelBundle::load(result.final_checkpoint);
  std::string stem = data::sample_stem(ws.dir("data"), "test", 0);
  Tensor32 image = to_signed_range(read_png_rgb(stem + ".png"));
  enc::FeatureVector f = enc::import_sidecar(stem + ".json");
  const int steps = 10;

  SUBCASE("self-target relight equals the corrected self-decode") {
    Tensor32 relit = pipeline::relight(model, image, f, f.light, f.shadow_logit, steps);
    auto inv = pipeline::invert(model, image, f, steps);
    auto ctx = pipeline::build_context(model, f);
    auto predictor = pipeline::make_predictor(model, ctx);
    Tensor32 direct =
        diffusion::ddim_decode(inv.x_T, predictor, model.schedule, inv.grid, &inv.corrections);
    for (int64_t i = 0; i < direct.numel(); ++i)
      direct[i] = std::min(1.f, std::max(-1.f, direct[i]));
    CHECK(testutil::hash_tensor(relit) == testutil::hash_tensor(direct));
  }

  SUBCASE("repeated relighting is byte-identical") {
    sh::LightSH target = sh::sample_plausible_light(55, spec.light);
    Tensor32 a = pipeline::relight(model, image, f, target, 4.0, steps);
    Tensor32 b = pipeline::relight(model, image, f, target, 4.0, steps);
    CHECK(testutil::hash_tensor(a) == testutil::hash_tensor(b));
  }

  SUBCASE("shadow sweep shares one inversion and tiles horizontally") {
    std::vector<double> cs = {-4, 0, 4};
    auto sweep = pipeline::shadow_sweep(model, image, f, cs, steps);
    REQUIRE(sweep.size() == 3);
    Tensor32 grid = pipeline::tile_horizontal(sweep);
    CHECK(grid.dim(2) == 3 * 16);
    CHECK(grid.dim(1) == 16);

    Tensor32 single = pipeline::relight(model, image, f, f.light, cs[1], steps);
    CHECK(testutil::hash_tensor(single) == testutil::hash_tensor(sweep[1]));

    CHECK_THROWS_AS(pipeline::shadow_sweep(model, image, f, {}, steps), ValidationError);
  }

  SUBCASE("full mode reacts to background permutation") {
    enc::FeatureVector permuted = f;
    // Roll every background pixel by a prime offset.
    int64_t plane = 16 * 16;
    for (int c = 0; c < 3; ++c)
      for (int64_t p = 0; p < plane; ++p)
        permuted.bg[c * plane + p] = f.bg[c * plane + (p * 37 + 11) % plane];
    Tensor32 a = pipeline::relight(model, image, f, f.light, f.shadow_logit, steps);
    Tensor32 b = pipeline::relight(model, image, permuted, f.light, f.shadow_logit, steps);
    CHECK(testutil::hash_tensor(a) != testutil::hash_tensor(b));
  }

  SUBCASE("resolution mismatch is rejected") {
    Tensor32 wrong({3, 8, 8});
    CHECK_THROWS_AS(pipeline::invert(model, wrong, f, steps), ValidationError);
  }
}

TEST_CASE("light-nonspatial mode ignores the spatial condition entirely") {
  Workspace ws("relight_pipe_light");
  auto spec = tiny_spec();
  data::generate(spec, ws.dir("data"));
  auto cfg = tiny_config();
  cfg.mode = nn::ConditioningMode::kLightNonspatial;
  cfg.total_images = 4 * 6;
  auto result = pipeline::train(cfg, ws.dir("data"), ws.dir("run"));
  auto model = pipeline::ModelBundle::load(result.final_checkpoint);

  std::string stem = data::sample_stem(ws.dir("data"), "test", 0);
  Tensor32 image = to_signed_range(read_png_rgb(stem + ".png"));
  enc::FeatureVector f = enc::import_sidecar(stem + ".json");

  enc::FeatureVector permuted = f;
  int64_t plane = 16 * 16;
  for (int c = 0; c < 3; ++c)
    for (int64_t p = 0; p < plane; ++p)
      permuted.bg[c * plane + p] = f.bg[c * plane + (p * 53 + 5) % plane];

  Tensor32 a = pipeline::relight(model, image, f, f.light, f.shadow_logit, 8);
  Tensor32 b = pipeline::relight(model, image, permuted, f.light, f.shadow_logit, 8);
  CHECK(testutil::hash_tensor(a) == testutil::hash_tensor(b));
}

TEST_CASE("train config json round trip and validation") {
  auto cfg = tiny_config();
  auto round = pipeline::TrainConfig::from_json(cfg.to_json());
  CHECK(round.to_json() == cfg.to_json());

  auto bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  auto bad2 = cfg;
  bad2.unet.nonspatial_dim = 3;
  CHECK_THROWS_AS(
      [&] {
        Workspace ws("relight_pipe_badcfg");
        data::DatasetSpec spec = tiny_spec();
        pipeline::ModelBundle::create(bad2, spec);
      }(),
      ValidationError);
}
