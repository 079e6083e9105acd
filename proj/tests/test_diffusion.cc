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

#include <cmath>

#include "relight/core/error.h"
#include "relight/diffusion/diffusion.h"
#include "testutil.h"

using namespace relight;
using diffusion::NoiseSchedule;

namespace {

// Smooth, mildly nonlinear fixture predictor used for round-trip checks.
template <typename T>
diffusion::Predictor<T> nonlinear_fixture() {
  return [](const Tensor<T>& x, int t) {
    Tensor<T> out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i)
      out[i] = static_cast<T>(0.02 * std::tanh(static_cast<double>(x[i])) +
                              0.01 * std::sin(0.003 * t));
    return out;
  };
}

}  // namespace

TEST_CASE("linear schedule values") {
  NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  CHECK(s.alpha_cum(0) == 1.0);
  CHECK(s.alpha_cum(1) == doctest::Approx(0.9999).epsilon(1e-10));
  CHECK(s.beta(1) == doctest::Approx(1e-4));
  CHECK(s.beta(1000) == doctest::Approx(0.02));
  for (int t = 2; t <= 1000; ++t) {
    CHECK(s.beta(t) > s.beta(t - 1));
    CHECK(s.alpha_cum(t) < s.alpha_cum(t - 1));
    CHECK(s.alpha_cum(t) ==
          doctest::Approx(s.alpha_cum(t - 1) * (1.0 - s.beta(t))).epsilon(1e-12));
  }
  // Amplification at t = T for predict_x0.
  CHECK(1.0 / std::sqrt(s.alpha_cum(1000)) == doctest::Approx(158.0).epsilon(0.01));

  NoiseSchedule one = NoiseSchedule::linear(1, 0.05, 0.05);
  CHECK(one.beta(1) == doctest::Approx(0.05));
  CHECK(one.alpha_cum(1) == doctest::Approx(0.95));

  CHECK_THROWS_AS(NoiseSchedule::linear(0, 1e-4, 0.02), ValidationError);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.0, 0.02), ValidationError);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.03, 0.02), ValidationError);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.5, 1.0), ValidationError);
}

TEST_CASE("alphas agree with the log-sum route") {
  NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  double log_sum = 0.0;
  for (int t = 1; t <= 1000; ++t) {
    log_sum += std::log(1.0 - s.beta(t));
    CHECK(std::exp(log_sum) == doctest::Approx(s.alpha_cum(t)).epsilon(1e-10));
  }
}

TEST_CASE("q_sample closed forms") {
  NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  auto x0 = testutil::random_tensor<double>({3, 4, 4}, 1);
  Tensor64 zero(x0.shape());

  auto a = diffusion::q_sample(x0, 500, zero, s);
  double root = std::sqrt(s.alpha_cum(500));
  for (int64_t i = 0; i < x0.numel(); ++i) CHECK(a[i] == doctest::Approx(root * x0[i]));

  auto eps = testutil::random_tensor<double>({3, 4, 4}, 2);
  auto b = diffusion::q_sample(zero, 500, eps, s);
  double root1m = std::sqrt(1.0 - s.alpha_cum(500));
  for (int64_t i = 0; i < eps.numel(); ++i) CHECK(b[i] == doctest::Approx(root1m * eps[i]));

  CHECK_THROWS_AS(diffusion::q_sample(x0, 0, zero, s), ValidationError);
  CHECK_THROWS_AS(diffusion::q_sample(x0, 1001, zero, s), ValidationError);
}

TEST_CASE("q_sample preserves unit variance") {
  NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  const int64_t n = 100000;
  Rng rng(3);
  double sum = 0, sq = 0;
  double a = std::sqrt(s.alpha_cum(473)), b = std::sqrt(1.0 - s.alpha_cum(473));
  for (int64_t i = 0; i < n; ++i) {
    double v = a * rng.normal() + b * rng.normal();
    sum += v;
    sq += v * v;
  }
  double var = sq / n - (sum / n) * (sum / n);
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("predict_x0 inverts q_sample") {
  NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  auto x0 = testutil::random_tensor<float>({3, 8, 8}, 5);
  auto eps = testutil::random_tensor<float>({3, 8, 8}, 6);
  for (int t : {1, 250, 500}) {
    auto xt = diffusion::q_sample(x0, t, eps, s);
    auto g = diffusion::predict_x0(xt, t, eps, s);
    for (int64_t i = 0; i < x0.numel(); ++i)
      CHECK(std::abs(g[i] - x0[i]) < 1e-5 * std::max(1.0f, std::abs(x0[i])));
  }
  // Large t amplifies float rounding by 1/sqrt(alpha_T) ~ 158; the tight
  // identity holds in double.
  auto x0d = testutil::random_tensor<double>({3, 8, 8}, 5);
  auto epsd = testutil::random_tensor<double>({3, 8, 8}, 6);
  for (int t : {999, 1000}) {
    auto xt = diffusion::q_sample(x0d, t, epsd, s);
    auto g = diffusion::predict_x0(xt, t, epsd, s);
    for (int64_t i = 0; i < x0d.numel(); ++i)
      CHECK(std::abs(g[i] - x0d[i]) < 1e-10 * std::max(1.0, std::abs(x0d[i])));
  }
  Tensor32 zero(x0.shape());
  auto g = diffusion::predict_x0(x0, 800, zero, s);
  float root = static_cast<float>(std::sqrt(s.alpha_cum(800)));
  for (int64_t i = 0; i < x0.numel(); ++i) CHECK(g[i] == doctest::Approx(x0[i] / root));
}

TEST_CASE("ddim steps: zero-predictor closed form and inversion") {
  NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  auto x = testutil::random_tensor<double>({3, 4, 4}, 7);
  diffusion::Predictor<double> zero = [](const Tensor64& v, int) { return Tensor64(v.shape()); };

  auto up = diffusion::ddim_reverse_step(x, 100, 200, zero, s);
  double factor = std::sqrt(s.alpha_cum(200) / s.alpha_cum(100));
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(up[i] == doctest::Approx(factor * x[i]));

  auto down = diffusion::ddim_decode_step(up, 200, 100, zero, s);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(down[i] == doctest::Approx(x[i]).epsilon(1e-12));

  CHECK_THROWS_AS(diffusion::ddim_reverse_step(x, 200, 100, zero, s), ValidationError);
  CHECK_THROWS_AS(diffusion::ddim_decode_step(x, 100, 200, zero, s), ValidationError);
}

TEST_CASE("constant predictor round-trips exactly and matches symbolic two-step") {
  NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  auto x = testutil::random_tensor<double>({3, 4, 4}, 9);
  const double c = 0.37;
  diffusion::Predictor<double> constant = [c](const Tensor64& v, int) {
    return Tensor64::full(v.shape(), c);
  };

  auto up = diffusion::ddim_reverse_step(x, 300, 400, constant, s);
  auto back = diffusion::ddim_decode_step(up, 400, 300, constant, s);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-12));

  // Symbolic expansion of the reverse map applied twice.
  auto coeff = [&](int t_from, int t_to) {
    double a_from = std::sqrt(s.alpha_cum(t_from)), a_to = std::sqrt(s.alpha_cum(t_to));
    double b_from = std::sqrt(1.0 - s.alpha_cum(t_from)), b_to = std::sqrt(1.0 - s.alpha_cum(t_to));
    return std::pair<double, double>{a_to / a_from, b_to - a_to / a_from * b_from};
  };
  auto [m1, k1] = coeff(300, 400);
  auto [m2, k2] = coeff(400, 500);
  auto two = diffusion::ddim_reverse_step(up, 400, 500, constant, s);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(two[i] == doctest::Approx(m2 * (m1 * x[i] + k1 * c) + k2 * c).epsilon(1e-12));
}

TEST_CASE("encode/decode round trip over 100 strided steps") {
  NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  auto grid = diffusion::make_step_grid(1000, 100);
  REQUIRE(grid.size() == 101);
  REQUIRE(grid.front() == 0);
  REQUIRE(grid.back() == 1000);

  auto x0 = testutil::random_tensor<double>({3, 8, 8}, 11, 0.5);

  diffusion::Predictor<double> zero = [](const Tensor64& v, int) { return Tensor64(v.shape()); };
  auto [xt_zero, traj_zero] = diffusion::ddim_encode(x0, zero, s, grid);
  auto back_zero = diffusion::ddim_decode(xt_zero, zero, s, grid);
  for (int64_t i = 0; i < x0.numel(); ++i) CHECK(std::abs(back_zero[i] - x0[i]) < 1e-5);

  auto fixture = nonlinear_fixture<double>();
  auto [xt, traj] = diffusion::ddim_encode(x0, fixture, s, grid);
  auto back = diffusion::ddim_decode(xt, fixture, s, grid);
  for (int64_t i = 0; i < x0.numel(); ++i) CHECK(std::abs(back[i] - x0[i]) < 1e-4);

  // Deterministic encoding.
  auto [xt2, traj2] = diffusion::ddim_encode(x0, fixture, s, grid);
  CHECK(testutil::hash_tensor(xt) == testutil::hash_tensor(xt2));
  CHECK(traj.latents.size() == grid.size());
  for (size_t k = 1; k < traj.latents.size(); ++k)
    CHECK(traj.latents[k].first > traj.latents[k - 1].first);
}

TEST_CASE("mean-matching corrections") {
  NoiseSchedule s = NoiseSchedule::linear(200, 1e-4, 0.02);
  auto grid = diffusion::make_step_grid(200, 50);
  auto x0 = testutil::random_tensor<double>({3, 8, 8}, 13, 0.4);

  diffusion::Predictor<double> zero = [](const Tensor64& v, int) { return Tensor64(v.shape()); };
  auto mu_zero = diffusion::mean_match(x0, zero, s, grid);
  for (const auto& m : mu_zero.mus)
    for (double v : m) CHECK(std::abs(v) < 1e-6);

  // With a nonlinear predictor, the corrected self-decode tracks the encode
  // trajectory's channel means by construction.
  auto fixture = nonlinear_fixture<double>();
  auto [x_T, traj] = diffusion::ddim_encode(x0, fixture, s, grid);
  auto mu = diffusion::mean_match_from_trajectory(traj, fixture, s, grid);
  auto corrected = diffusion::ddim_decode(x_T, fixture, s, grid, &mu);
  int64_t plane = x0.numel() / 3;
  for (int c = 0; c < 3; ++c) {
    double want = 0, got = 0;
    for (int64_t p = 0; p < plane; ++p) {
      want += x0[c * plane + p];
      got += corrected[c * plane + p];
    }
    CHECK(std::abs(want - got) / plane < 1e-3);
  }
}

TEST_CASE("diffusion loss oracle and zero-predictor expectations") {
  NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);

  // With x0 = 0, the true noise is recoverable from x_t alone, so an oracle
  // predictor drives the loss to zero.
  Tensor64 x0_zero({4, 3, 8, 8});
  diffusion::BatchPredictor<double> oracle = [&](const Tensor64& x, const std::vector<int>& ts) {
    Tensor64 out(x.shape());
    int64_t item = x.numel() / x.dim(0);
    for (int64_t i = 0; i < x.dim(0); ++i) {
      double b = std::sqrt(1.0 - s.alpha_cum(ts[static_cast<size_t>(i)]));
      for (int64_t j = 0; j < item; ++j) out[i * item + j] = x[i * item + j] / b;
    }
    return out;
  };
  Rng rng1(21);
  CHECK(diffusion::diffusion_loss(oracle, x0_zero, s, &rng1) < 1e-20);

  diffusion::BatchPredictor<double> zero = [](const Tensor64& x, const std::vector<int>&) {
    return Tensor64(x.shape());
  };
  auto x0 = testutil::random_tensor<double>({8, 3, 24, 24}, 22, 0.0);  // zeros; eps dominates
  Rng rng2(23);
  double loss = diffusion::diffusion_loss(zero, x0, s, &rng2);
  CHECK(loss == doctest::Approx(1.0).epsilon(0.03));

  Tensor64 empty({0, 3, 8, 8});
  Rng rng3(1);
  CHECK_THROWS_AS(diffusion::diffusion_loss(zero, empty, s, &rng3), ValidationError);
}

TEST_CASE("loss reduction is invariant to batch order") {
  NoiseSchedule s = NoiseSchedule::linear(100, 1e-4, 0.02);
  auto x0 = testutil::random_tensor<double>({6, 3, 4, 4}, 31, 0.7);
  Rng rng(5);
  auto batch = diffusion::make_training_batch(x0, s, &rng);
  auto fixture = nonlinear_fixture<double>();

  const int64_t n = x0.dim(0), item = x0.numel() / n;
  std::vector<double> per_item(static_cast<size_t>(n), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    Tensor64 xi({3, 4, 4});
    for (int64_t j = 0; j < item; ++j) xi[j] = batch.x_t[i * item + j];
    Tensor64 pred = fixture(xi, batch.ts[static_cast<size_t>(i)]);
    double sum = 0;
    for (int64_t j = 0; j < item; ++j) {
      double d = pred[j] - batch.eps[i * item + j];
      sum += d * d;
    }
    per_item[static_cast<size_t>(i)] = sum / static_cast<double>(item);
  }
  double forward = 0, backward = 0;
  for (int64_t i = 0; i < n; ++i) forward += per_item[static_cast<size_t>(i)];
  for (int64_t i = n - 1; i >= 0; --i) backward += per_item[static_cast<size_t>(i)];
  CHECK(forward / n == doctest::Approx(backward / n).epsilon(1e-12));
}

TEST_CASE("diffusion loss gradient matches central finite differences") {
  NoiseSchedule s = NoiseSchedule::linear(100, 1e-4, 0.02);
  const int in_dim = 12;  // 3-channel 2x2 image
  testutil::ToyPredictor toy(in_dim, 6, 77);
  REQUIRE(toy.param_count() <= 200);

  auto x0 = testutil::random_tensor<double>({4, 3, 2, 2}, 41, 0.6);
  const uint64_t draw_seed = 99;

  auto loss_of = [&](const testutil::ToyPredictor& p) {
    Rng rng(draw_seed);
    diffusion::BatchPredictor<double> pred = [&](const Tensor64& x, const std::vector<int>& ts) {
      Tensor64 out(x.shape());
      int64_t item = x.numel() / x.dim(0);
      for (int64_t i = 0; i < x.dim(0); ++i) {
        auto y = p.forward(x.data() + i * item, ts[static_cast<size_t>(i)]);
        for (int64_t j = 0; j < item; ++j) out[i * item + j] = y[static_cast<size_t>(j)];
      }
      return out;
    };
    return static_cast<double>(diffusion::diffusion_loss(pred, x0, s, &rng));
  };

  // Analytic gradient via the toy predictor's backward.
  std::vector<double> grad(static_cast<size_t>(toy.param_count()), 0.0);
  {
    Rng rng(draw_seed);
    auto batch = diffusion::make_training_batch(x0, s, &rng);
    int64_t n = x0.dim(0), item = x0.numel() / n;
    for (int64_t i = 0; i < n; ++i) {
      auto y = toy.forward(batch.x_t.data() + i * item, batch.ts[static_cast<size_t>(i)]);
      std::vector<double> dout(static_cast<size_t>(item));
      for (int64_t j = 0; j < item; ++j)
        dout[static_cast<size_t>(j)] =
            2.0 * (y[static_cast<size_t>(j)] - batch.eps[i * item + j]) /
            static_cast<double>(x0.numel());
      toy.backward(batch.x_t.data() + i * item, batch.ts[static_cast<size_t>(i)], dout.data(),
                   &grad);
    }
  }

  double base = loss_of(toy);
  CHECK(base > 0.0);
  int checked = 0;
  for (int k = 0; k < toy.param_count(); k += 7) {
    testutil::ToyPredictor plus = toy, minus = toy;
    const double h = 1e-6;
    *plus.param(k) += h;
    *minus.param(k) -= h;
    double fd = (loss_of(plus) - loss_of(minus)) / (2 * h);
    double denom = std::max({std::abs(fd), std::abs(grad[static_cast<size_t>(k)]), 1e-6});
    CHECK(std::abs(grad[static_cast<size_t>(k)] - fd) / denom < 1e-3);
    ++checked;
  }
  CHECK(checked >= 30);
}

TEST_CASE("step grid validation") {
  NoiseSchedule s = NoiseSchedule::linear(100, 1e-4, 0.02);
  auto grid = diffusion::make_step_grid(100, 10);
  diffusion::validate_step_grid(grid, s);
  std::vector<int> bad = {0, 50, 40, 100};
  CHECK_THROWS_AS(diffusion::validate_step_grid(bad, s), ValidationError);
  std::vector<int> not_to_t = {0, 50};
  CHECK_THROWS_AS(diffusion::validate_step_grid(not_to_t, s), ValidationError);
}
