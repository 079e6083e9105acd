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

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "relight/nn/layers.h"
#include "relight/nn/module.h"

namespace relight::nn {

// How the lighting information reaches the denoiser:
//   kFull              - shading reference + background drive the Modulator,
//                        whose maps gate every first-half block output.
//   kNoModulatorConcat - no Modulator; the 6-channel spatial condition is
//                        concatenated to x_t at the input every step.
//   kLightNonspatial   - no spatial path at all; the flattened 27 light
//                        coefficients join the non-spatial vector.
enum class ConditioningMode { kFull, kNoModulatorConcat, kLightNonspatial };

std::string to_string(ConditioningMode mode);
ConditioningMode conditioning_mode_from_string(const std::string& name);

struct UNetConfig {
  int image_size = 32;
  int base_channels = 32;
  std::vector<int> channel_multipliers = {1, 2, 2};
  std::vector<int> attention_resolutions = {8};
  int num_res_blocks = 1;
  int attention_heads = 1;
  int groups = 32;           // group-normalization target
  int nonspatial_dim = 52;   // |s| + 3 + |xi| + 1
  int time_embed_dim = 128;
  int cond_hidden = 128;     // hidden width of the 3-layer condition MLPs

  void validate() const;

  int levels() const { return static_cast<int>(channel_multipliers.size()); }
  int input_channels(ConditioningMode mode) const {
    return mode == ConditioningMode::kNoModulatorConcat ? 9 : 3;
  }
  int nonspatial_total(ConditioningMode mode) const {
    return nonspatial_dim + (mode == ConditioningMode::kLightNonspatial ? 27 : 0);
  }
  bool attention_at(int size) const;
  // One (channels, spatial) entry per first-half residual block, in order.
  std::vector<std::pair<int, int>> first_half_blocks() const;
};

// Residual block: GN -> SiLU -> conv, then AdaGN (conditional) or plain GN,
// SiLU -> conv, plus identity/1x1 skip. The conditional path computes
// k = MLP3(nonspatial) and (t_s, t_b) = SiLU(affine(gamma_t)) per block.
template <typename T>
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(ParamStore<T>* store, const std::string& name, int in_ch, int out_ch, int groups_target,
           bool conditional, int nonspatial_dim, int time_dim, int cond_hidden, Rng* rng);

  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>* nonspatial, const Tensor<T>* temb);
  Tensor<T> backward(const Tensor<T>& dy);

  int out_channels() const { return out_ch_; }

 private:
  int in_ch_ = 0, out_ch_ = 0;
  bool conditional_ = false;
  GroupNorm<T> gn1_;
  Silu<T> silu1_;
  Conv2d<T> conv1_;
  Linear<T> cond1_, cond2_, cond3_;
  Silu<T> cond_silu1_, cond_silu2_;
  Linear<T> time_;
  Silu<T> time_silu_;
  GroupNorm<T> gn2_;
  AdaGnApply<T> adagn_;
  Silu<T> silu2_;
  Conv2d<T> conv2_;
  bool has_skip_ = false;
  Conv2d<T> skip_;
};

// The conditional noise-prediction UNet. First-half residual block outputs
// are replaced by o ⊙ tanh(m) when modulation maps are supplied (kFull).
template <typename T>
class UNet {
 public:
  UNet(const UNetConfig& config, ConditioningMode mode, uint64_t init_seed);

  // x: [N,3,H,W]; ts: one timestep per item; nonspatial: [N, ns_total].
  // mods: one map per first-half residual block (required iff kFull).
  // spatial_condition: [N,6,H,W] (required iff kNoModulatorConcat).
  Tensor<T> forward(const Tensor<T>& x, const std::vector<int>& ts, const Tensor<T>& nonspatial,
                    const std::vector<Tensor<T>>* mods, const Tensor<T>* spatial_condition);

  // Fills per-tap modulation gradients when requested (kFull training).
  void backward(const Tensor<T>& d_out, std::vector<Tensor<T>>* d_mods);

  const UNetConfig& config() const { return config_; }
  ConditioningMode mode() const { return mode_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  int first_half_block_count() const { return static_cast<int>(config_.first_half_blocks().size()); }

  // Gated first-half block output o' = o ⊙ tanh(m) from the last full-mode
  // forward pass.
  Tensor<T> modulated_output(int tap) const {
    const ModTap& t = taps_.at(static_cast<size_t>(tap));
    Tensor<T> out = t.o;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= t.gate[i];
    return out;
  }

 private:
  struct EncLevel {
    std::vector<ResBlock<T>> res;
    std::vector<std::unique_ptr<AttentionBlock<T>>> attn;  // aligned with res, may be null
    std::unique_ptr<Conv2d<T>> down;
  };
  struct DecLevel {
    std::vector<ResBlock<T>> res;
    std::vector<std::unique_ptr<AttentionBlock<T>>> attn;
    std::unique_ptr<Conv2d<T>> up;
  };
  struct ModTap {
    Tensor<T> o;     // block output before gating
    Tensor<T> gate;  // tanh(m)
  };

  Tensor<T> apply_mod(Tensor<T> o, const Tensor<T>& m, int tap);
  Tensor<T> mod_backward(const Tensor<T>& d, int tap, std::vector<Tensor<T>>* d_mods);

  UNetConfig config_;
  ConditioningMode mode_;
  ParamStore<T> store_;

  Conv2d<T> stem_;
  std::vector<EncLevel> enc_;
  ResBlock<T> mid1_, mid2_;
  AttentionBlock<T> mid_attn_;
  std::vector<DecLevel> dec_;
  GroupNorm<T> out_norm_;
  Silu<T> out_silu_;
  Conv2d<T> out_conv_;

  std::vector<int> skip_channels_;  // channel plan of encoder pushes
  bool use_mods_ = false;
  std::vector<ModTap> taps_;
};

// Spatial-conditioning network: the UNet's first half without conditioning,
// plus a small-gain 1x1 head per residual block producing the modulation map
// m_i shape-matched to that block's output.
template <typename T>
class Modulator {
 public:
  Modulator(const UNetConfig& config, uint64_t init_seed);

  // spatial_condition: [N,6,H,W] -> one m_i per first-half residual block
  std::vector<Tensor<T>> forward(const Tensor<T>& spatial_condition);
  void backward(const std::vector<Tensor<T>>& d_mods);

  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

 private:
  struct EncLevel {
    std::vector<ResBlock<T>> res;
    std::vector<std::unique_ptr<AttentionBlock<T>>> attn;
    std::unique_ptr<Conv2d<T>> down;
  };

  UNetConfig config_;
  ParamStore<T> store_;
  Conv2d<T> stem_;
  std::vector<EncLevel> enc_;
  ResBlock<T> mid1_, mid2_;
  AttentionBlock<T> mid_attn_;
  std::vector<Conv2d<T>> heads_;
};

extern template class ResBlock<float>;
extern template class ResBlock<double>;
extern template class UNet<float>;
extern template class UNet<double>;
extern template class Modulator<float>;
extern template class Modulator<double>;

}  // namespace relight::nn
