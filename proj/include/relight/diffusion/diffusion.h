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

#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "relight/core/error.h"
#include "relight/core/rng.h"
#include "relight/core/tensor.h"

namespace relight::diffusion {

// Linear beta schedule with 1-based timesteps and the cumulative products
// alpha_t = prod_{s<=t} (1 - beta_s); alpha(0) = 1.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  static NoiseSchedule linear(int steps, double beta_start, double beta_end) {
    check(steps >= 1, "schedule: T must be >= 1");
    check(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          "schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.beta_start_ = beta_start;
    s.beta_end_ = beta_end;
    s.betas_.resize(static_cast<size_t>(steps));
    s.alphas_cum_.resize(static_cast<size_t>(steps) + 1);
    s.alphas_cum_[0] = 1.0;
    for (int t = 1; t <= steps; ++t) {
      double beta = steps == 1 ? beta_start
                               : beta_start + (beta_end - beta_start) * (t - 1) / (steps - 1);
      s.betas_[static_cast<size_t>(t - 1)] = beta;
      s.alphas_cum_[static_cast<size_t>(t)] = s.alphas_cum_[static_cast<size_t>(t - 1)] * (1.0 - beta);
    }
    return s;
  }

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const {
    check(t >= 1 && t <= steps(), "schedule: beta index out of range");
    return betas_[static_cast<size_t>(t - 1)];
  }
  // alpha_cum(0) = 1 by convention.
  double alpha_cum(int t) const {
    check(t >= 0 && t <= steps(), "schedule: alpha index out of range");
    return alphas_cum_[static_cast<size_t>(t)];
  }
  double beta_start() const { return beta_start_; }
  double beta_end() const { return beta_end_; }

 private:
  double beta_start_ = 0.0, beta_end_ = 0.0;
  std::vector<double> betas_;
  std::vector<double> alphas_cum_;
};

// Strictly increasing step grid [0, ..., T] with `count` uniform intervals.
inline std::vector<int> make_step_grid(int total_steps, int count) {
  check(count >= 1 && count <= total_steps, "step grid: count must be in [1, T]");
  std::vector<int> grid(static_cast<size_t>(count) + 1);
  for (int i = 0; i <= count; ++i)
    grid[static_cast<size_t>(i)] = static_cast<int>(std::llround(static_cast<double>(i) * total_steps / count));
  return grid;
}

inline void validate_step_grid(const std::vector<int>& grid, const NoiseSchedule& schedule) {
  check(grid.size() >= 2, "step grid: need at least two entries");
  check(grid.front() == 0, "step grid: must start at 0");
  check(grid.back() == schedule.steps(), "step grid: must end at T");
  for (size_t i = 1; i < grid.size(); ++i)
    check(grid[i] > grid[i - 1], "step grid: must be strictly increasing");
}

// Noise predictor with conditioning closed over; evaluated at (x_t, t).
template <typename T>
using Predictor = std::function<Tensor<T>(const Tensor<T>& x, int t)>;

template <typename T>
struct Trajectory {
  // (t, x_t) pairs with strictly increasing t, from x_0 up to x_T.
  std::vector<std::pair<int, Tensor<T>>> latents;
};

// Per-decode-step, per-RGB-channel mean offsets, indexed by the destination
// grid position (entry k is added on arrival at grid[k]).
template <typename T>
struct CorrectionSequence {
  std::vector<std::array<T, 3>> mus;
};

// x_t = sqrt(alpha_t) x0 + sqrt(1 - alpha_t) eps
template <typename T>
Tensor<T> q_sample(const Tensor<T>& x0, int t, const Tensor<T>& eps, const NoiseSchedule& schedule) {
  check(t >= 1 && t <= schedule.steps(), "q_sample: t out of range");
  check(x0.same_shape(eps), "q_sample: x0/eps shape mismatch");
  const T a = static_cast<T>(std::sqrt(schedule.alpha_cum(t)));
  const T b = static_cast<T>(std::sqrt(1.0 - schedule.alpha_cum(t)));
  Tensor<T> out(x0.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

// g = (x_t - sqrt(1 - alpha_t) eps_hat) / sqrt(alpha_t)
template <typename T>
Tensor<T> predict_x0(const Tensor<T>& x_t, int t, const Tensor<T>& eps_hat,
                     const NoiseSchedule& schedule) {
  check(t >= 1 && t <= schedule.steps(), "predict_x0: t out of range");
  check(x_t.same_shape(eps_hat), "predict_x0: shape mismatch");
  const double a = std::sqrt(schedule.alpha_cum(t));
  const double b = std::sqrt(1.0 - schedule.alpha_cum(t));
  Tensor<T> out(x_t.shape());
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<T>((static_cast<double>(x_t[i]) - b * static_cast<double>(eps_hat[i])) / a);
  return out;
}

namespace detail {

// Shared step core: from (x at time t_from) to time t_to, evaluating the
// predictor at (x, t_from). Both DDIM directions are this map.
template <typename T>
Tensor<T> ddim_step(const Tensor<T>& x, int t_from, int t_to, const Predictor<T>& predictor,
                    const NoiseSchedule& schedule) {
  const double a_from = std::sqrt(schedule.alpha_cum(t_from));
  const double b_from = std::sqrt(1.0 - schedule.alpha_cum(t_from));
  const double a_to = std::sqrt(schedule.alpha_cum(t_to));
  const double b_to = std::sqrt(1.0 - schedule.alpha_cum(t_to));
  Tensor<T> eps_hat = predictor(x, t_from);
  check(eps_hat.same_shape(x), "ddim step: predictor output shape mismatch");
  Tensor<T> out(x.shape());
  for (int64_t i = 0; i < out.numel(); ++i) {
    double g = (static_cast<double>(x[i]) - b_from * static_cast<double>(eps_hat[i])) / a_from;
    out[i] = static_cast<T>(a_to * g + b_to * static_cast<double>(eps_hat[i]));
  }
  return out;
}

template <typename T>
void add_channel_offsets(Tensor<T>* x, const std::array<T, 3>& mu) {
  check(x->ndim() >= 1 && x->dim(0) == 3, "corrections require a {3,...} tensor");
  int64_t plane = x->numel() / 3;
  for (int c = 0; c < 3; ++c)
    for (int64_t p = 0; p < plane; ++p) (*x)[c * plane + p] += mu[static_cast<size_t>(c)];
}

template <typename T>
std::array<T, 3> channel_means(const Tensor<T>& x) {
  check(x.ndim() >= 1 && x.dim(0) == 3, "channel means require a {3,...} tensor");
  int64_t plane = x.numel() / 3;
  std::array<T, 3> m{};
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (int64_t p = 0; p < plane; ++p) sum += static_cast<double>(x[c * plane + p]);
    m[static_cast<size_t>(c)] = static_cast<T>(sum / static_cast<double>(plane));
  }
  return m;
}

}  // namespace detail

// Deterministic reversal step (image -> noise direction), t_next > t.
template <typename T>
Tensor<T> ddim_reverse_step(const Tensor<T>& x_t, int t, int t_next, const Predictor<T>& predictor,
                            const NoiseSchedule& schedule) {
  check(t_next > t && t >= 0 && t_next <= schedule.steps(), "ddim_reverse_step: need 0 <= t < t_next <= T");
  return detail::ddim_step(x_t, t, t_next, predictor, schedule);
}

// Generative step (noise -> image direction), t_prev < t. Adds the per-channel
// offset `mu` after stepping when provided.
template <typename T>
Tensor<T> ddim_decode_step(const Tensor<T>& x_t, int t, int t_prev, const Predictor<T>& predictor,
                           const NoiseSchedule& schedule, const std::array<T, 3>* mu = nullptr) {
  check(t_prev < t && t_prev >= 0 && t <= schedule.steps(), "ddim_decode_step: need 0 <= t_prev < t <= T");
  Tensor<T> out = detail::ddim_step(x_t, t, t_prev, predictor, schedule);
  if (mu) detail::add_channel_offsets(&out, *mu);
  return out;
}

// Iterate reversal over the grid, recording every intermediate latent.
template <typename T>
std::pair<Tensor<T>, Trajectory<T>> ddim_encode(const Tensor<T>& x0, const Predictor<T>& predictor,
                                                const NoiseSchedule& schedule,
                                                const std::vector<int>& grid) {
  validate_step_grid(grid, schedule);
  Trajectory<T> traj;
  traj.latents.emplace_back(grid[0], x0);
  Tensor<T> x = x0;
  for (size_t k = 0; k + 1 < grid.size(); ++k) {
    x = ddim_reverse_step(x, grid[k], grid[k + 1], predictor, schedule);
    traj.latents.emplace_back(grid[k + 1], x);
  }
  return {x, std::move(traj)};
}

template <typename T>
Tensor<T> ddim_decode(const Tensor<T>& x_T, const Predictor<T>& predictor,
                      const NoiseSchedule& schedule, const std::vector<int>& grid,
                      const CorrectionSequence<T>* corrections = nullptr) {
  validate_step_grid(grid, schedule);
  if (corrections)
    check(corrections->mus.size() == grid.size() - 1,
          "ddim_decode: corrections must have one entry per decode step");
  Tensor<T> x = x_T;
  for (size_t k = grid.size() - 1; k > 0; --k) {
    const std::array<T, 3>* mu = corrections ? &corrections->mus[k - 1] : nullptr;
    x = ddim_decode_step(x, grid[k], grid[k - 1], predictor, schedule, mu);
  }
  return x;
}

// Brightness-drift corrections from self-reconstruction: starting from the
// recorded encode trajectory's x_T, self-decode; at each decode step the
// offset is the gap between the recorded encode latent's channel means and
// the raw decoded step, and is applied before continuing. Computed once per
// input and reused for relit decodes.
template <typename T>
CorrectionSequence<T> mean_match_from_trajectory(const Trajectory<T>& traj,
                                                 const Predictor<T>& predictor,
                                                 const NoiseSchedule& schedule,
                                                 const std::vector<int>& grid) {
  check(traj.latents.size() == grid.size(), "mean_match: trajectory/grid length mismatch");
  CorrectionSequence<T> seq;
  seq.mus.assign(grid.size() - 1, {});
  Tensor<T> x = traj.latents.back().second;
  for (size_t k = grid.size() - 1; k > 0; --k) {
    Tensor<T> raw = ddim_decode_step<T>(x, grid[k], grid[k - 1], predictor, schedule, nullptr);
    auto target = detail::channel_means(traj.latents[k - 1].second);
    auto got = detail::channel_means(raw);
    std::array<T, 3> mu;
    for (int c = 0; c < 3; ++c)
      mu[static_cast<size_t>(c)] = target[static_cast<size_t>(c)] - got[static_cast<size_t>(c)];
    seq.mus[k - 1] = mu;
    detail::add_channel_offsets(&raw, mu);
    x = std::move(raw);
  }
  return seq;
}

template <typename T>
CorrectionSequence<T> mean_match(const Tensor<T>& x0, const Predictor<T>& predictor,
                                 const NoiseSchedule& schedule, const std::vector<int>& grid) {
  auto [x_T, traj] = ddim_encode(x0, predictor, schedule, grid);
  (void)x_T;
  return mean_match_from_trajectory(traj, predictor, schedule, grid);
}

// One training draw per batch item: t uniform in [1,T], eps standard normal.
template <typename T>
struct TrainingBatch {
  Tensor<T> x_t;           // same shape as the stacked x0 batch
  Tensor<T> eps;           // noise targets
  std::vector<int> ts;     // per-item timesteps
};

template <typename T>
TrainingBatch<T> make_training_batch(const Tensor<T>& x0_batch, const NoiseSchedule& schedule,
                                     Rng* rng) {
  check(x0_batch.ndim() >= 2 && x0_batch.dim(0) >= 1, "training batch: empty batch");
  const int64_t n = x0_batch.dim(0);
  const int64_t item = x0_batch.numel() / n;
  TrainingBatch<T> batch;
  batch.x_t = Tensor<T>(x0_batch.shape());
  batch.eps = Tensor<T>(x0_batch.shape());
  batch.ts.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    int t = static_cast<int>(rng->index(static_cast<uint64_t>(schedule.steps()))) + 1;
    batch.ts[static_cast<size_t>(i)] = t;
    const T a = static_cast<T>(std::sqrt(schedule.alpha_cum(t)));
    const T b = static_cast<T>(std::sqrt(1.0 - schedule.alpha_cum(t)));
    for (int64_t j = 0; j < item; ++j) {
      T e = static_cast<T>(rng->normal());
      batch.eps[i * item + j] = e;
      batch.x_t[i * item + j] = a * x0_batch[i * item + j] + b * e;
    }
  }
  return batch;
}

// Batched predictor: per-item timesteps.
template <typename T>
using BatchPredictor = std::function<Tensor<T>(const Tensor<T>& x, const std::vector<int>& ts)>;

// L_simple: mean over batch items of the per-element mean of
// ||eps_hat(x_t, t, f) - eps||^2.
template <typename T>
T diffusion_loss(const BatchPredictor<T>& predictor, const Tensor<T>& x0_batch,
                 const NoiseSchedule& schedule, Rng* rng) {
  TrainingBatch<T> batch = make_training_batch(x0_batch, schedule, rng);
  Tensor<T> eps_hat = predictor(batch.x_t, batch.ts);
  check(eps_hat.same_shape(batch.eps), "diffusion_loss: predictor output shape mismatch");
  double sum = 0.0;
  for (int64_t i = 0; i < eps_hat.numel(); ++i) {
    double d = static_cast<double>(eps_hat[i]) - static_cast<double>(batch.eps[i]);
    sum += d * d;
  }
  return static_cast<T>(sum / static_cast<double>(eps_hat.numel()));
}

}  // namespace relight::diffusion
