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

#include <optional>
#include <string>
#include <vector>

#include "relight/nn/module.h"
#include "relight/nn/ops.h"

namespace relight::nn {

// All layers cache what backward needs during forward; backward returns the
// input gradient and accumulates parameter gradients.

template <typename T>
T silu_scalar(T x) {
  return static_cast<T>(x / (T(1) + std::exp(-x)));
}

// Bias for a SiLU-activated affine layer that makes the unit output the
// resting state: silu(kSiluUnitBias) == 1.
inline constexpr double kSiluUnitBias = 1.2784645427610738;

template <typename T>
class Silu {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy) const;

 private:
  Tensor<T> x_;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore<T>* store, const std::string& name, int64_t in, int64_t out, double gain,
         double bias_init, Rng* rng);

  // x: [N, in] -> [N, out]
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

  Parameter<T>* weight = nullptr;  // [out, in]
  Parameter<T>* bias = nullptr;    // [out]

 private:
  Tensor<T> x_;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore<T>* store, const std::string& name, int in_c, int out_c, int kernel, int stride,
         int pad, double gain, Rng* rng);

  // x: [N, in_c, H, W]
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

  Parameter<T>* weight = nullptr;  // [out_c, in_c, k, k]
  Parameter<T>* bias = nullptr;    // [out_c]
  int in_c = 0, out_c = 0, kernel = 1, stride = 1, pad = 0;

 private:
  Tensor<T> x_;
  ConvGeom geom_{};
};

// Plain group normalization, eps = 1e-5, no learned affine (the affine comes
// from AdaGN where applicable).
template <typename T>
class GroupNorm {
 public:
  GroupNorm() = default;
  explicit GroupNorm(int groups) : groups_(groups) {}

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy) const;

  int groups() const { return groups_; }

 private:
  int groups_ = 1;
  Tensor<T> xhat_;
  std::vector<double> inv_std_;  // per (n, group)
};

// `target` groups for channel counts that allow it, one group per channel
// below the target; throws on indivisible widths at or above it.
int groups_for_channels(int channels, int target = 32);

// k ⊙ (t_s ⊙ gn + t_b): per-channel vectors broadcast over spatial positions.
template <typename T>
class AdaGnApply {
 public:
  // gn: [N,C,H,W]; k, ts, tb: [N,C]
  Tensor<T> forward(const Tensor<T>& gn, const Tensor<T>& k, const Tensor<T>& ts,
                    const Tensor<T>& tb);
  // Returns d_gn; writes per-channel grads for k/ts/tb.
  Tensor<T> backward(const Tensor<T>& dy, Tensor<T>* dk, Tensor<T>* dts, Tensor<T>* dtb) const;

 private:
  Tensor<T> gn_, k_, ts_, tb_;
};

// Pre-norm single/multi-head self-attention with a residual connection.
template <typename T>
class AttentionBlock {
 public:
  AttentionBlock() = default;
  AttentionBlock(ParamStore<T>* store, const std::string& name, int channels, int heads,
                 int groups_target, Rng* rng);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  int channels_ = 0, heads_ = 0;
  GroupNorm<T> norm_;
  Conv2d<T> qkv_;
  Conv2d<T> proj_;
  Tensor<T> qkv_out_;
  std::vector<Tensor<T>> att_;  // per (n, head): [S, S] softmax rows
};

// Standard sinusoidal encoding: first half sin(t * f_i), second half
// cos(t * f_i), f_i = 10000^(-i / (dim/2)).
template <typename T>
Tensor<T> sinusoidal_embed(int t, int dim);

template <typename T>
Tensor<T> sinusoidal_embed_batch(const std::vector<int>& ts, int dim);

// Channel concat/split and nearest-neighbor x2 resampling used by the UNet.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
void split_channels(const Tensor<T>& d, int64_t c_a, Tensor<T>* da, Tensor<T>* db);
template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x);
template <typename T>
Tensor<T> upsample_nearest2x_backward(const Tensor<T>& dy);

}  // namespace relight::nn
