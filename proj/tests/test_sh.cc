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

#include "relight/core/error.h"
#include "relight/sh/sh.h"
#include "testutil.h"

using namespace relight;

TEST_CASE("sh basis values at the pole") {
  auto h = sh::basis({0, 0, 1});
  CHECK(h[0] == doctest::Approx(0.28209479).epsilon(1e-7));
  CHECK(h[2] == doctest::Approx(0.48860251).epsilon(1e-7));
  CHECK(h[1] == doctest::Approx(0.0));
  CHECK(h[3] == doctest::Approx(0.0));
}

TEST_CASE("sh band parity") {
  auto hp = sh::basis({1, 0, 0});
  auto hn = sh::basis({-1, 0, 0});
  CHECK(hp[3] == doctest::Approx(-hn[3]));
  CHECK(hp[3] != 0.0);
  CHECK(hp[8] == doctest::Approx(hn[8]));
}

TEST_CASE("sh basis rejects bad directions") {
  CHECK_THROWS_AS(sh::basis({0, 0, 2}), ValidationError);
  double nan = std::nan("");
  CHECK_THROWS_AS(sh::basis({nan, 0, 1}), ValidationError);
}

TEST_CASE("sh Monte-Carlo orthonormality") {
  const int n = 200000;
  Rng rng(7);
  double gram[9][9] = {};
  for (int s = 0; s < n; ++s) {
    auto h = sh::basis(testutil::uniform_sphere(&rng));
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) gram[i][j] += h[static_cast<size_t>(i)] * h[static_cast<size_t>(j)];
  }
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j) {
      double value = gram[i][j] * 4.0 * M_PI / n;
      double expect = i == j ? 1.0 : 0.0;
      CHECK(std::abs(value - expect) < 0.04);
    }
}

TEST_CASE("constant-band light reproduces the albedo") {
  sh::LightSH light;
  light.coeffs.row(0).setConstant(3.5449077);
  Rng rng(3);
  for (int i = 0; i < 32; ++i) {
    auto rgb = sh::shade_point(testutil::uniform_sphere(&rng), {0.7, 0.7, 0.7}, light);
    for (int c = 0; c < 3; ++c) CHECK(rgb[c] == doctest::Approx(0.7).epsilon(1e-6));
  }
  auto exact = sh::shade_point({0, 0, 1}, {0.7, 0.7, 0.7}, sh::LightSH::constant(1.0));
  CHECK(std::abs(exact[0] - 0.7) < 1e-12);
}

TEST_CASE("shade_point zero light and clamping") {
  sh::LightSH zero;
  auto rgb = sh::shade_point({0, 0, 1}, {0.5, 0.5, 0.5}, zero);
  CHECK(rgb.norm() == 0.0);

  sh::LightSH band1z;
  band1z.coeffs(2, 0) = band1z.coeffs(2, 1) = band1z.coeffs(2, 2) = 1.0;
  auto clamped = sh::shade_point({0, 0, -1}, {1, 1, 1}, band1z);
  CHECK(clamped[0] == 0.0);
  CHECK(clamped[1] == 0.0);
  CHECK(clamped[2] == 0.0);
}

TEST_CASE("shade_point is linear before the clamp") {
  Rng rng(11);
  sh::LightSH l1 = sh::sample_plausible_light(1);
  sh::LightSH l2 = sh::sample_plausible_light(2);
  for (int i = 0; i < 16; ++i) {
    Eigen::Vector3d n = testutil::uniform_sphere(&rng);
    Eigen::Vector3d a(0.3, 0.6, 0.9);
    auto lhs = sh::shade_point_unclamped(n, a, l1 + l2);
    auto rhs = sh::shade_point_unclamped(n, a, l1) + sh::shade_point_unclamped(n, a, l2);
    CHECK((lhs - rhs).norm() < 1e-12);
  }
}

TEST_CASE("band-1 shading peaks along the light direction") {
  Eigen::Vector3d dir = Eigen::Vector3d(0.4, -0.3, 0.85).normalized();
  sh::LightSH light;
  for (int c = 0; c < 3; ++c) {
    light.coeffs(1, c) = dir.y();
    light.coeffs(2, c) = dir.z();
    light.coeffs(3, c) = dir.x();
  }
  Rng rng(5);
  double best = -1e9;
  Eigen::Vector3d best_n = dir;
  for (int i = 0; i < 4000; ++i) {
    Eigen::Vector3d n = testutil::uniform_sphere(&rng);
    double v = sh::shade_point_unclamped(n, {1, 1, 1}, light)[0];
    if (v > best) {
      best = v;
      best_n = n;
    }
  }
  CHECK(best_n.dot(dir) > 0.99);
}

TEST_CASE("plausible light sampler is deterministic and in range") {
  sh::LightSampleConfig cfg;
  sh::LightSH a = sh::sample_plausible_light(42, cfg);
  sh::LightSH b = sh::sample_plausible_light(42, cfg);
  CHECK((a.coeffs - b.coeffs).norm() == 0.0);

  sh::LightSH c = sh::sample_plausible_light(0, cfg);
  for (int ch = 0; ch < 3; ++ch) {
    CHECK(c.coeffs(0, ch) >= cfg.band0_min);
    CHECK(c.coeffs(0, ch) <= cfg.band0_max);
    double abs_sum = 0;
    for (int k = 1; k < 9; ++k) abs_sum += std::abs(c.coeffs(k, ch));
    CHECK(c.coeffs(0, ch) >= abs_sum * cfg.dominance_ratio - 1e-12);
  }

  sh::LightSampleConfig bad;
  bad.band0_min = -1;
  CHECK_THROWS_AS(sh::sample_plausible_light(0, bad), ValidationError);
}

TEST_CASE("sampled lights rarely clamp over the sphere") {
  Rng rng(17);
  int64_t clamped = 0, total = 0;
  for (int s = 0; s < 1000; ++s) {
    sh::LightSH light = sh::sample_plausible_light(static_cast<uint64_t>(s));
    for (int i = 0; i < 64; ++i) {
      Eigen::Vector3d n = testutil::uniform_sphere(&rng);
      auto v = sh::shade_point_unclamped(n, {1, 1, 1}, light);
      for (int c = 0; c < 3; ++c) {
        clamped += v[c] < 0.0;
        ++total;
      }
    }
  }
  CHECK(static_cast<double>(clamped) / static_cast<double>(total) < 0.20);
}

TEST_CASE("cosine lobe projection matches a Monte-Carlo oracle") {
  Eigen::Vector3d dir = Eigen::Vector3d(0.3, 0.5, 0.81).normalized();
  sh::LightSH lobe = sh::cosine_lobe(dir, {1, 1, 1});

  Rng rng(23);
  const int n = 400000;
  double coeff[9] = {};
  for (int s = 0; s < n; ++s) {
    Eigen::Vector3d w = testutil::uniform_sphere(&rng);
    double f = std::max(0.0, w.dot(dir));
    auto h = sh::basis(w);
    for (int k = 0; k < 9; ++k) coeff[k] += f * h[static_cast<size_t>(k)];
  }
  for (int k = 0; k < 9; ++k) {
    double mc = coeff[k] * 4.0 * M_PI / n;
    CHECK(std::abs(lobe.coeffs(k, 0) - mc) < 0.02);
  }
}

TEST_CASE("light flat serialization round trip") {
  sh::LightSH light = sh::sample_plausible_light(9);
  auto flat = light.flat();
  sh::LightSH back = sh::LightSH::from_flat(flat);
  CHECK((light.coeffs - back.coeffs).norm() == 0.0);
}
