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

#include "relight/core/error.h"
#include "relight/data/dataset.h"
#include "relight/enc/encoders.h"
#include "testutil.h"

using namespace relight;
namespace fs = std::filesystem;

namespace {

data::DatasetSpec tiny_spec() {
  data::DatasetSpec spec;
  spec.count = 10;
  spec.resolution = 16;
  spec.seed = 7;
  spec.dims = geom::ShapeDims{4, 2, 2};
  spec.tessellation = 2;
  spec.identity_dim = 8;
  return spec;
}

enc::SceneDescription base_scene(const data::DatasetSpec& spec) {
  return data::draw_scene(spec, 3);
}

geom::RenderOutput render_of(const data::DatasetSpec& spec, const enc::SceneDescription& scene) {
  auto model = geom::make_synthetic_model(spec.model_seed, spec.dims, spec.tessellation);
  return data::render_scene(model, scene, spec.resolution);
}

// Independent IRLS (Newton) fit of the same L2-regularized logistic model.
enc::ShadowClassifier irls_fit(const std::vector<Eigen::VectorXd>& xs, const std::vector<int>& ys) {
  const Eigen::Index d = xs.front().size();
  const double lambda = 1e-3;
  const double n = static_cast<double>(xs.size());
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(d + 1);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(d + 1, d + 1);
    hess.topLeftCorner(d, d) = lambda * Eigen::MatrixXd::Identity(d, d);
    grad.head(d) = lambda * w.head(d);
    for (size_t i = 0; i < xs.size(); ++i) {
      Eigen::VectorXd x1(d + 1);
      x1.head(d) = xs[i];
      x1[d] = 1.0;
      double z = w.dot(x1);
      double p = 1.0 / (1.0 + std::exp(-z));
      grad += (p - ys[i]) / n * x1;
      hess += p * (1.0 - p) / n * x1 * x1.transpose();
    }
    Eigen::VectorXd step = hess.ldlt().solve(grad);
    w -= step;
    if (step.norm() < 1e-12) break;
  }
  enc::ShadowClassifier c;
  c.weight = w.head(d);
  c.bias = w[d];
  return c;
}

}  // namespace

TEST_CASE("oracle encodings are exact and disentangled") {
  auto spec = tiny_spec();
  enc::SceneDescription scene = base_scene(spec);
  scene.has_shadow = false;
  auto render = render_of(spec, scene);
  enc::FeatureVector f = enc::oracle_encode(scene, render, spec.identity_dim);

  CHECK(f.identity.norm() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(f.shadow_logit == enc::kShadowLogitOff);
  CHECK((f.light.coeffs - scene.ambient_light.coeffs).norm() == 0.0);
  CHECK(f.cam.scale == scene.cam.scale);

  // Changing only the light leaves identity/shape/cam/shadow/bg untouched.
  enc::SceneDescription lit = scene;
  lit.ambient_light = sh::sample_plausible_light(999, spec.light);
  auto render2 = render_of(spec, lit);
  enc::FeatureVector f2 = enc::oracle_encode(lit, render2, spec.identity_dim);
  CHECK((f.identity - f2.identity).norm() == 0.0);
  CHECK(f2.shadow_logit == f.shadow_logit);
  CHECK(f2.cam.scale == f.cam.scale);
  CHECK((f2.shape.concat() - f.shape.concat()).norm() == 0.0);
  // Background holds the scene's background color; the head region is filled.
  CHECK(testutil::hash_tensor(f.bg) == testutil::hash_tensor(f2.bg));

  // Changing only beta changes identity but not light/cam/shadow.
  enc::SceneDescription shaped = scene;
  shaped.shape.beta[0] += 0.5;
  auto render3 = render_of(spec, shaped);
  enc::FeatureVector f3 = enc::oracle_encode(shaped, render3, spec.identity_dim);
  CHECK((f3.identity - f.identity).norm() > 1e-6);
  CHECK((f3.light.coeffs - f.light.coeffs).norm() == 0.0);

  // Shadowed scenes saturate the logit high and extend the light encoding.
  enc::SceneDescription shadowed = scene;
  shadowed.has_shadow = true;
  shadowed.light_direction = Eigen::Vector3d(0.3, 0.2, 0.933).normalized();
  shadowed.directional_strength = 0.5;
  auto render4 = render_of(spec, shadowed);
  enc::FeatureVector f4 = enc::oracle_encode(shadowed, render4, spec.identity_dim);
  CHECK(f4.shadow_logit == 4.0);
  CHECK((f4.light.coeffs - f.light.coeffs).norm() > 1e-9);
}

TEST_CASE("make_background fill rules") {
  Tensor32 img({3, 4, 4});
  for (int64_t i = 0; i < img.numel(); ++i) img[i] = 0.25f * static_cast<float>(i % 7) - 0.5f;

  Mask none(4, 4);
  auto bg0 = enc::make_background(img, none);
  CHECK(testutil::hash_tensor(bg0) == testutil::hash_tensor(img));

  Mask all(4, 4);
  std::fill(all.on.begin(), all.on.end(), 1);
  auto bg1 = enc::make_background(img, all);
  for (int64_t i = 0; i < bg1.numel(); ++i) CHECK(bg1[i] == 0.f);

  Mask checker(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) checker.set(x, y, (x + y) % 2 == 0);
  auto bg2 = enc::make_background(img, checker);
  int64_t plane = 16;
  for (int64_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c) {
      if (checker.on[static_cast<size_t>(p)])
        CHECK(bg2[c * plane + p] == 0.f);
      else
        CHECK(bg2[c * plane + p] == img[c * plane + p]);
    }

  Mask wrong(3, 3);
  CHECK_THROWS_AS(enc::make_background(img, wrong), ValidationError);
}

TEST_CASE("sidecar schema round trip and validation") {
  enc::SidecarData data;
  data.light_sh.fill(0.0);
  data.light_sh[0] = 1.25;
  data.shape.beta = Eigen::VectorXd::LinSpaced(4, -1, 1);
  data.shape.theta = Eigen::VectorXd::Zero(2);
  data.shape.psi = Eigen::VectorXd::Constant(2, 0.5);
  data.cam = {0.9, 0.02, -0.01};
  data.identity = {0.5, -0.5, 0.5, -0.5};
  data.shadow_logit = -4.0;
  data.bg_path = "000000.png";
  data.mask_path = "000000.mask.png";

  nlohmann::json j = enc::sidecar_to_json(data);
  enc::SidecarData back = enc::sidecar_from_json(j);
  CHECK(enc::sidecar_to_json(back) == j);

  SUBCASE("wrong light length names the key") {
    nlohmann::json bad = j;
    bad["light_sh"] = std::vector<double>(26, 0.0);
    try {
      enc::sidecar_from_json(bad);
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("light_sh") != std::string::npos);
    }
  }
  SUBCASE("unknown keys are rejected") {
    nlohmann::json bad = j;
    bad["halo"] = 1;
    try {
      enc::sidecar_from_json(bad);
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("halo") != std::string::npos);
    }
  }
  SUBCASE("missing keys are rejected") {
    nlohmann::json bad = j;
    bad.erase("identity");
    CHECK_THROWS_AS(enc::sidecar_from_json(bad), ValidationError);
  }
  SUBCASE("non-finite values are rejected") {
    nlohmann::json bad = j;
    bad["shadow_logit"] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(enc::sidecar_from_json(bad), ValidationError);
  }
  SUBCASE("wrong version is rejected") {
    nlohmann::json bad = j;
    bad["version"] = 2;
    CHECK_THROWS_AS(enc::sidecar_from_json(bad), ValidationError);
  }
}

TEST_CASE("sidecar import resolves and masks the background image") {
  auto spec = tiny_spec();
  fs::path dir = fs::temp_directory_path() / "relight_sidecar_test";
  fs::create_directories(dir);
  data::generate(spec, dir.string());

  std::string stem = data::sample_stem(dir.string(), "train", 0);
  enc::FeatureVector f = enc::import_sidecar(stem + ".json");
  CHECK(f.bg.dim(1) == spec.resolution);
  CHECK(f.identity.size() == spec.identity_dim);
  CHECK(f.identity.norm() == doctest::Approx(1.0).epsilon(1e-5));

  Mask mask = read_png_mask(stem + ".mask.png");
  int64_t plane = static_cast<int64_t>(spec.resolution) * spec.resolution;
  for (int64_t p = 0; p < plane; ++p)
    if (mask.on[static_cast<size_t>(p)])
      for (int c = 0; c < 3; ++c) CHECK(f.bg[c * plane + p] == 0.f);
  fs::remove_all(dir);
}

TEST_CASE("shadow classifier fits and matches an IRLS oracle") {
  SUBCASE("separable data reaches full accuracy") {
    std::vector<Eigen::VectorXd> xs;
    std::vector<int> ys;
    Rng rng(5);
    for (int i = 0; i < 40; ++i) {
      Eigen::VectorXd x(3);
      x << rng.normal() + (i % 2 ? 4.0 : -4.0), rng.normal(), rng.normal();
      xs.push_back(x);
      ys.push_back(i % 2);
    }
    auto c = enc::fit_shadow_classifier(xs, ys);
    int correct = 0;
    for (size_t i = 0; i < xs.size(); ++i)
      correct += (enc::shadow_logit(c, xs[i]) > 0) == (ys[i] == 1);
    CHECK(correct == 40);
  }

  SUBCASE("symmetric two-point set gives near-zero bias") {
    Eigen::VectorXd v(2);
    v << 1.0, -0.5;
    std::vector<Eigen::VectorXd> xs = {v, v, -v, -v};
    std::vector<int> ys = {1, 1, 0, 0};
    auto c = enc::fit_shadow_classifier(xs, ys);
    CHECK(std::abs(c.bias) < 1e-3);
  }

  SUBCASE("gaussian blobs match the oracle within 1%") {
    std::vector<Eigen::VectorXd> xs;
    std::vector<int> ys;
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
      Eigen::VectorXd x(4);
      int label = i % 2;
      for (int k = 0; k < 4; ++k) x[k] = rng.normal() + (label ? 0.8 : -0.8) * (k == 0 || k == 2);
      xs.push_back(x);
      ys.push_back(label);
    }
    auto mine = enc::fit_shadow_classifier(xs, ys);
    auto oracle = irls_fit(xs, ys);
    int agree_mine = 0, agree_oracle = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
      agree_mine += (enc::shadow_logit(mine, xs[i]) > 0) == (ys[i] == 1);
      agree_oracle += (enc::shadow_logit(oracle, xs[i]) > 0) == (ys[i] == 1);
    }
    double acc_mine = agree_mine / 200.0, acc_oracle = agree_oracle / 200.0;
    CHECK(std::abs(acc_mine - acc_oracle) <= 0.01);
    // The optimizers should land on nearly the same optimum.
    CHECK((mine.weight - oracle.weight).norm() < 0.05 * std::max(1.0, oracle.weight.norm()));
  }

  SUBCASE("degenerate inputs are rejected") {
    Eigen::VectorXd v(2);
    v << 1, 2;
    CHECK_THROWS_AS(enc::fit_shadow_classifier({v, v, v}, {1, 1, 1}), ValidationError);
    CHECK_THROWS_AS(enc::fit_shadow_classifier({v, v, v}, {1, 1, 0}), ValidationError);
  }

  SUBCASE("logit basics") {
    enc::ShadowClassifier c;
    c.weight = Eigen::VectorXd::Zero(3);
    c.bias = 0.75;
    Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 9.0);
    CHECK(enc::shadow_logit(c, x) == doctest::Approx(0.75));
    double sig = 1.0 / (1.0 + std::exp(-enc::shadow_logit(c, x)));
    CHECK(sig > 0.0);
    CHECK(sig < 1.0);
  }
}
