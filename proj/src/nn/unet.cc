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

#include "relight/nn/unet.h"

#include <cmath>

#include "relight/core/error.h"

namespace relight::nn {

std::string to_string(ConditioningMode mode) {
  switch (mode) {
    case ConditioningMode::kFull: return "full";
    case ConditioningMode::kNoModulatorConcat: return "no-modulator";
    case ConditioningMode::kLightNonspatial: return "light-nonspatial";
  }
  return "full";
}

ConditioningMode conditioning_mode_from_string(const std::string& name) {
  if (name == "full") return ConditioningMode::kFull;
  if (name == "no-modulator") return ConditioningMode::kNoModulatorConcat;
  if (name == "light-nonspatial") return ConditioningMode::kLightNonspatial;
  throw ValidationError("unknown conditioning mode: " + name);
}

void UNetConfig::validate() const {
  check(image_size >= 4, "unet config: image_size too small");
  check(base_channels >= 1, "unet config: base_channels must be positive");
  check(!channel_multipliers.empty(), "unet config: channel_multipliers empty");
  int down_factor = 1 << (levels() - 1);
  check(image_size % down_factor == 0,
        "unet config: image_size must be divisible by 2^(levels-1)");
  int size = image_size;
  std::vector<int> realized;
  for (int l = 0; l < levels(); ++l) {
    realized.push_back(size);
    if (l + 1 < levels()) size /= 2;
  }
  for (int a : attention_resolutions) {
    bool found = false;
    for (int r : realized) found = found || r == a;
    check(found, "unet config: attention resolution not realized by the level layout");
  }
  check(num_res_blocks >= 1, "unet config: num_res_blocks must be >= 1");
  check(attention_heads >= 1, "unet config: attention_heads must be >= 1");
  check(groups >= 1, "unet config: groups must be >= 1");
  check(nonspatial_dim >= 1, "unet config: nonspatial_dim must be >= 1");
  check(time_embed_dim >= 2 && time_embed_dim % 2 == 0, "unet config: time_embed_dim must be even");
  check(cond_hidden >= 1, "unet config: cond_hidden must be >= 1");
}

bool UNetConfig::attention_at(int size) const {
  for (int a : attention_resolutions)
    if (a == size) return true;
  return false;
}

std::vector<std::pair<int, int>> UNetConfig::first_half_blocks() const {
  std::vector<std::pair<int, int>> out;
  int size = image_size;
  for (int l = 0; l < levels(); ++l) {
    int ch = base_channels * channel_multipliers[static_cast<size_t>(l)];
    for (int b = 0; b < num_res_blocks; ++b) out.emplace_back(ch, size);
    if (l + 1 < levels()) size /= 2;
  }
  int mid_ch = base_channels * channel_multipliers.back();
  out.emplace_back(mid_ch, size);
  out.emplace_back(mid_ch, size);
  return out;
}

namespace {

template <typename T>
void hstack2(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>* out) {
  const int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  *out = Tensor<T>({n, ca + cb});
  for (int64_t i = 0; i < n; ++i) {
    std::copy(a.data() + i * ca, a.data() + (i + 1) * ca, out->data() + i * (ca + cb));
    std::copy(b.data() + i * cb, b.data() + (i + 1) * cb, out->data() + i * (ca + cb) + ca);
  }
}

template <typename T>
void hsplit2(const Tensor<T>& d, int64_t ca, Tensor<T>* da, Tensor<T>* db) {
  const int64_t n = d.dim(0), c = d.dim(1);
  *da = Tensor<T>({n, ca});
  *db = Tensor<T>({n, c - ca});
  for (int64_t i = 0; i < n; ++i) {
    std::copy(d.data() + i * c, d.data() + i * c + ca, da->data() + i * ca);
    std::copy(d.data() + i * c + ca, d.data() + (i + 1) * c, db->data() + i * (c - ca));
  }
}

}  // namespace

template <typename T>
ResBlock<T>::ResBlock(ParamStore<T>* store, const std::string& name, int in_ch, int out_ch,
                      int groups_target, bool conditional, int nonspatial_dim, int time_dim,
                      int cond_hidden, Rng* rng)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      conditional_(conditional),
      gn1_(groups_for_channels(in_ch, groups_target)),
      gn2_(groups_for_channels(out_ch, groups_target)) {
  conv1_ = Conv2d<T>(store, name + ".conv1", in_ch, out_ch, 3, 1, 1, 1.0, rng);
  if (conditional_) {
    cond1_ = Linear<T>(store, name + ".cond1", nonspatial_dim, cond_hidden, 1.0, 0.0, rng);
    cond2_ = Linear<T>(store, name + ".cond2", cond_hidden, cond_hidden, 1.0, 0.0, rng);
    // Rest at k ~= 1 so fresh blocks pass the normalized signal through.
    cond3_ = Linear<T>(store, name + ".cond3", cond_hidden, out_ch, 0.1, 1.0, rng);
    // Rest at t_s ~= 1, t_b ~= 0.
    time_ = Linear<T>(store, name + ".time", time_dim, 2 * out_ch, 0.1, 0.0, rng);
    for (int64_t j = 0; j < out_ch; ++j) time_.bias->value[j] = static_cast<T>(kSiluUnitBias);
  }
  conv2_ = Conv2d<T>(store, name + ".conv2", out_ch, out_ch, 3, 1, 1, 0.1, rng);
  if (in_ch != out_ch) {
    has_skip_ = true;
    skip_ = Conv2d<T>(store, name + ".skip", in_ch, out_ch, 1, 1, 0, 1.0, rng);
  }
}

template <typename T>
Tensor<T> ResBlock<T>::forward(const Tensor<T>& x, const Tensor<T>* nonspatial,
                               const Tensor<T>* temb) {
  Tensor<T> h = conv1_.forward(silu1_.forward(gn1_.forward(x)));
  if (conditional_) {
    check(nonspatial && temb, "res block: conditional forward needs nonspatial and time inputs");
    Tensor<T> k =
        cond3_.forward(cond_silu2_.forward(cond2_.forward(cond_silu1_.forward(cond1_.forward(*nonspatial)))));
    Tensor<T> tst = time_silu_.forward(time_.forward(*temb));
    Tensor<T> ts, tb;
    hsplit2(tst, out_ch_, &ts, &tb);
    h = adagn_.forward(gn2_.forward(h), k, ts, tb);
  } else {
    h = gn2_.forward(h);
  }
  h = conv2_.forward(silu2_.forward(h));
  if (has_skip_) {
    Tensor<T> s = skip_.forward(x);
    for (int64_t i = 0; i < h.numel(); ++i) h[i] += s[i];
  } else {
    for (int64_t i = 0; i < h.numel(); ++i) h[i] += x[i];
  }
  return h;
}

template <typename T>
Tensor<T> ResBlock<T>::backward(const Tensor<T>& dy) {
  Tensor<T> d = silu2_.backward(conv2_.backward(dy));
  if (conditional_) {
    Tensor<T> dk, dts, dtb;
    Tensor<T> dgn = adagn_.backward(d, &dk, &dts, &dtb);
    d = gn2_.backward(dgn);
    Tensor<T> dtst;
    hstack2(dts, dtb, &dtst);
    time_.backward(time_silu_.backward(dtst));
    cond1_.backward(cond_silu1_.backward(cond2_.backward(cond_silu2_.backward(cond3_.backward(dk)))));
  } else {
    d = gn2_.backward(d);
  }
  Tensor<T> dx = gn1_.backward(silu1_.backward(conv1_.backward(d)));
  if (has_skip_) {
    Tensor<T> ds = skip_.backward(dy);
    for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += ds[i];
  } else {
    for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += dy[i];
  }
  return dx;
}

template <typename T>
UNet<T>::UNet(const UNetConfig& config, ConditioningMode mode, uint64_t init_seed)
    : config_(config), mode_(mode) {
  config_.validate();
  Rng rng(splitmix64(hash_combine(init_seed, 0x756e6574ULL)));
  const int base = config_.base_channels;
  const int ns = config_.nonspatial_total(mode);
  const int td = config_.time_embed_dim;
  const int ch_in = config_.input_channels(mode);

  stem_ = Conv2d<T>(&store_, "unet.stem", ch_in, base, 3, 1, 1, 1.0, &rng);
  skip_channels_.push_back(base);

  int ch = base;
  int size = config_.image_size;
  for (int l = 0; l < config_.levels(); ++l) {
    EncLevel level;
    int out_ch = base * config_.channel_multipliers[static_cast<size_t>(l)];
    for (int b = 0; b < config_.num_res_blocks; ++b) {
      std::string name = "unet.enc." + std::to_string(l) + ".res." + std::to_string(b);
      level.res.emplace_back(&store_, name, ch, out_ch, config_.groups, true, ns, td,
                             config_.cond_hidden, &rng);
      ch = out_ch;
      if (config_.attention_at(size)) {
        level.attn.push_back(std::make_unique<AttentionBlock<T>>(
            &store_, "unet.enc." + std::to_string(l) + ".attn." + std::to_string(b), ch,
            config_.attention_heads, config_.groups, &rng));
      } else {
        level.attn.push_back(nullptr);
      }
      skip_channels_.push_back(ch);
    }
    if (l + 1 < config_.levels()) {
      level.down = std::make_unique<Conv2d<T>>(&store_, "unet.enc." + std::to_string(l) + ".down",
                                               ch, ch, 3, 2, 1, 1.0, &rng);
      skip_channels_.push_back(ch);
      size /= 2;
    }
    enc_.push_back(std::move(level));
  }

  mid1_ = ResBlock<T>(&store_, "unet.mid.res1", ch, ch, config_.groups, true, ns, td,
                      config_.cond_hidden, &rng);
  mid_attn_ = AttentionBlock<T>(&store_, "unet.mid.attn", ch, config_.attention_heads,
                                config_.groups, &rng);
  mid2_ = ResBlock<T>(&store_, "unet.mid.res2", ch, ch, config_.groups, true, ns, td,
                      config_.cond_hidden, &rng);

  size_t skip_cursor = skip_channels_.size();
  for (int l = config_.levels() - 1; l >= 0; --l) {
    DecLevel level;
    int out_ch = base * config_.channel_multipliers[static_cast<size_t>(l)];
    for (int b = 0; b < config_.num_res_blocks + 1; ++b) {
      int skip_ch = skip_channels_[--skip_cursor];
      std::string name = "unet.dec." + std::to_string(l) + ".res." + std::to_string(b);
      level.res.emplace_back(&store_, name, ch + skip_ch, out_ch, config_.groups, true, ns, td,
                             config_.cond_hidden, &rng);
      ch = out_ch;
      if (config_.attention_at(size)) {
        level.attn.push_back(std::make_unique<AttentionBlock<T>>(
            &store_, "unet.dec." + std::to_string(l) + ".attn." + std::to_string(b), ch,
            config_.attention_heads, config_.groups, &rng));
      } else {
        level.attn.push_back(nullptr);
      }
    }
    if (l > 0) {
      level.up = std::make_unique<Conv2d<T>>(&store_, "unet.dec." + std::to_string(l) + ".up", ch,
                                             ch, 3, 1, 1, 1.0, &rng);
      size *= 2;
    }
    dec_.push_back(std::move(level));
  }
  check(skip_cursor == 0, "unet: skip plan mismatch");

  out_norm_ = GroupNorm<T>(groups_for_channels(ch, config_.groups));
  out_conv_ = Conv2d<T>(&store_, "unet.out", ch, 3, 3, 1, 1, 0.1, &rng);
}

template <typename T>
Tensor<T> UNet<T>::apply_mod(Tensor<T> o, const Tensor<T>& m, int tap) {
  check(m.same_shape(o), "unet: modulation map shape mismatch at tap " + std::to_string(tap));
  ModTap& t = taps_[static_cast<size_t>(tap)];
  t.o = o;
  t.gate = Tensor<T>(m.shape());
  for (int64_t i = 0; i < m.numel(); ++i) t.gate[i] = std::tanh(m[i]);
  for (int64_t i = 0; i < o.numel(); ++i) o[i] *= t.gate[i];
  return o;
}

template <typename T>
Tensor<T> UNet<T>::mod_backward(const Tensor<T>& d, int tap, std::vector<Tensor<T>>* d_mods) {
  if (!use_mods_) return d;
  const ModTap& t = taps_[static_cast<size_t>(tap)];
  Tensor<T> d_o(d.shape());
  Tensor<T> d_m(d.shape());
  for (int64_t i = 0; i < d.numel(); ++i) {
    d_o[i] = d[i] * t.gate[i];
    d_m[i] = d[i] * t.o[i] * (T(1) - t.gate[i] * t.gate[i]);
  }
  if (d_mods) (*d_mods)[static_cast<size_t>(tap)] = std::move(d_m);
  return d_o;
}

template <typename T>
Tensor<T> UNet<T>::forward(const Tensor<T>& x, const std::vector<int>& ts,
                           const Tensor<T>& nonspatial, const std::vector<Tensor<T>>* mods,
                           const Tensor<T>* spatial_condition) {
  const int64_t n = x.dim(0);
  check(x.ndim() == 4 && x.dim(1) == 3 && x.dim(2) == config_.image_size &&
            x.dim(3) == config_.image_size,
        "unet: input must be [N,3,size,size]");
  check(static_cast<int64_t>(ts.size()) == n, "unet: one timestep per item required");
  check(nonspatial.ndim() == 2 && nonspatial.dim(0) == n &&
            nonspatial.dim(1) == config_.nonspatial_total(mode_),
        "unet: nonspatial vector has wrong shape");
  use_mods_ = mode_ == ConditioningMode::kFull;
  if (use_mods_) {
    check(mods != nullptr, "unet: full mode requires modulation maps");
    check(static_cast<int>(mods->size()) == first_half_block_count(),
          "unet: wrong number of modulation maps");
  } else {
    check(mods == nullptr, "unet: modulation maps only apply in full mode");
  }

  Tensor<T> temb = sinusoidal_embed_batch<T>(ts, config_.time_embed_dim);
  taps_.assign(static_cast<size_t>(first_half_block_count()), ModTap{});

  Tensor<T> h;
  if (mode_ == ConditioningMode::kNoModulatorConcat) {
    check(spatial_condition && spatial_condition->ndim() == 4 && spatial_condition->dim(0) == n &&
              spatial_condition->dim(1) == 6,
          "unet: concat mode requires a [N,6,H,W] spatial condition");
    h = stem_.forward(concat_channels(x, *spatial_condition));
  } else {
    h = stem_.forward(x);
  }

  std::vector<Tensor<T>> skips;
  skips.push_back(h);
  int tap = 0;
  for (auto& level : enc_) {
    for (size_t b = 0; b < level.res.size(); ++b) {
      h = level.res[b].forward(h, &nonspatial, &temb);
      if (use_mods_) h = apply_mod(std::move(h), (*mods)[static_cast<size_t>(tap)], tap);
      ++tap;
      if (level.attn[b]) h = level.attn[b]->forward(h);
      skips.push_back(h);
    }
    if (level.down) {
      h = level.down->forward(h);
      skips.push_back(h);
    }
  }

  h = mid1_.forward(h, &nonspatial, &temb);
  if (use_mods_) h = apply_mod(std::move(h), (*mods)[static_cast<size_t>(tap)], tap);
  ++tap;
  h = mid_attn_.forward(h);
  h = mid2_.forward(h, &nonspatial, &temb);
  if (use_mods_) h = apply_mod(std::move(h), (*mods)[static_cast<size_t>(tap)], tap);
  ++tap;

  for (auto& level : dec_) {
    for (size_t b = 0; b < level.res.size(); ++b) {
      Tensor<T> skip = std::move(skips.back());
      skips.pop_back();
      h = level.res[b].forward(concat_channels(h, skip), &nonspatial, &temb);
      if (level.attn[b]) h = level.attn[b]->forward(h);
    }
    if (level.up) h = level.up->forward(upsample_nearest2x(h));
  }
  check(skips.empty(), "unet: unconsumed skip connections");

  return out_conv_.forward(out_silu_.forward(out_norm_.forward(h)));
}

template <typename T>
void UNet<T>::backward(const Tensor<T>& d_out, std::vector<Tensor<T>>* d_mods) {
  if (d_mods) d_mods->assign(static_cast<size_t>(first_half_block_count()), Tensor<T>());
  Tensor<T> d = out_norm_.backward(out_silu_.backward(out_conv_.backward(d_out)));

  // Decoder blocks consumed skips from the back of the push plan; processing
  // them in reverse means the split widths come off the front.
  std::vector<Tensor<T>> d_skips;
  size_t split_idx = 0;
  for (auto it = dec_.rbegin(); it != dec_.rend(); ++it) {
    DecLevel& level = *it;
    if (level.up) d = upsample_nearest2x_backward(level.up->backward(d));
    for (size_t bi = level.res.size(); bi-- > 0;) {
      if (level.attn[bi]) d = level.attn[bi]->backward(d);
      Tensor<T> d_cat = level.res[bi].backward(d);
      int64_t skip_ch = skip_channels_[split_idx++];
      Tensor<T> d_skip;
      split_channels(d_cat, d_cat.dim(1) - skip_ch, &d, &d_skip);
      d_skips.push_back(std::move(d_skip));
    }
  }
  check(split_idx == skip_channels_.size(), "unet backward: skip plan mismatch");

  int tap = first_half_block_count() - 1;
  d = mod_backward(d, tap--, d_mods);
  d = mid2_.backward(d);
  d = mid_attn_.backward(d);
  d = mod_backward(d, tap--, d_mods);
  d = mid1_.backward(d);

  for (auto it = enc_.rbegin(); it != enc_.rend(); ++it) {
    EncLevel& level = *it;
    if (level.down) {
      Tensor<T> pop = std::move(d_skips.back());
      d_skips.pop_back();
      for (int64_t i = 0; i < d.numel(); ++i) d[i] += pop[i];
      d = level.down->backward(d);
    }
    for (size_t bi = level.res.size(); bi-- > 0;) {
      Tensor<T> pop = std::move(d_skips.back());
      d_skips.pop_back();
      for (int64_t i = 0; i < d.numel(); ++i) d[i] += pop[i];
      if (level.attn[bi]) d = level.attn[bi]->backward(d);
      d = mod_backward(d, tap--, d_mods);
      d = level.res[bi].backward(d);
    }
  }
  Tensor<T> pop = std::move(d_skips.back());
  d_skips.pop_back();
  for (int64_t i = 0; i < d.numel(); ++i) d[i] += pop[i];
  stem_.backward(d);
  check(d_skips.empty() && tap == -1, "unet backward: traversal mismatch");
}

template <typename T>
Modulator<T>::Modulator(const UNetConfig& config, uint64_t init_seed) : config_(config) {
  config_.validate();
  Rng rng(splitmix64(hash_combine(init_seed, 0x6d6f64ULL)));
  const int base = config_.base_channels;

  stem_ = Conv2d<T>(&store_, "mod.stem", 6, base, 3, 1, 1, 1.0, &rng);
  int ch = base;
  int size = config_.image_size;
  int head_index = 0;
  auto make_head = [&](int channels) {
    heads_.emplace_back(&store_, "mod.head." + std::to_string(head_index++), channels, channels, 1,
                        1, 0, 0.1, &rng);
  };

  for (int l = 0; l < config_.levels(); ++l) {
    EncLevel level;
    int out_ch = base * config_.channel_multipliers[static_cast<size_t>(l)];
    for (int b = 0; b < config_.num_res_blocks; ++b) {
      std::string name = "mod.enc." + std::to_string(l) + ".res." + std::to_string(b);
      level.res.emplace_back(&store_, name, ch, out_ch, config_.groups, false, 0, 0, 0, &rng);
      ch = out_ch;
      make_head(ch);
      if (config_.attention_at(size)) {
        level.attn.push_back(std::make_unique<AttentionBlock<T>>(
            &store_, "mod.enc." + std::to_string(l) + ".attn." + std::to_string(b), ch,
            config_.attention_heads, config_.groups, &rng));
      } else {
        level.attn.push_back(nullptr);
      }
    }
    if (l + 1 < config_.levels()) {
      level.down = std::make_unique<Conv2d<T>>(&store_, "mod.enc." + std::to_string(l) + ".down",
                                               ch, ch, 3, 2, 1, 1.0, &rng);
      size /= 2;
    }
    enc_.push_back(std::move(level));
  }
  mid1_ = ResBlock<T>(&store_, "mod.mid.res1", ch, ch, config_.groups, false, 0, 0, 0, &rng);
  make_head(ch);
  mid_attn_ = AttentionBlock<T>(&store_, "mod.mid.attn", ch, config_.attention_heads,
                                config_.groups, &rng);
  mid2_ = ResBlock<T>(&store_, "mod.mid.res2", ch, ch, config_.groups, false, 0, 0, 0, &rng);
  make_head(ch);
}

template <typename T>
std::vector<Tensor<T>> Modulator<T>::forward(const Tensor<T>& spatial_condition) {
  check(spatial_condition.ndim() == 4 && spatial_condition.dim(1) == 6 &&
            spatial_condition.dim(2) == config_.image_size &&
            spatial_condition.dim(3) == config_.image_size,
        "modulator: spatial condition must be [N,6,size,size]");
  std::vector<Tensor<T>> mods;
  Tensor<T> h = stem_.forward(spatial_condition);
  size_t head = 0;
  for (auto& level : enc_) {
    for (size_t b = 0; b < level.res.size(); ++b) {
      h = level.res[b].forward(h, nullptr, nullptr);
      mods.push_back(heads_[head++].forward(h));
      if (level.attn[b]) h = level.attn[b]->forward(h);
    }
    if (level.down) h = level.down->forward(h);
  }
  h = mid1_.forward(h, nullptr, nullptr);
  mods.push_back(heads_[head++].forward(h));
  h = mid_attn_.forward(h);
  h = mid2_.forward(h, nullptr, nullptr);
  mods.push_back(heads_[head++].forward(h));
  return mods;
}

template <typename T>
void Modulator<T>::backward(const std::vector<Tensor<T>>& d_mods) {
  check(d_mods.size() == heads_.size(), "modulator backward: tap count mismatch");
  size_t head = heads_.size() - 1;
  Tensor<T> d = heads_[head].backward(d_mods[head]);
  d = mid2_.backward(d);
  d = mid_attn_.backward(d);
  {
    --head;
    Tensor<T> dh = heads_[head].backward(d_mods[head]);
    for (int64_t i = 0; i < d.numel(); ++i) d[i] += dh[i];
  }
  d = mid1_.backward(d);
  for (auto it = enc_.rbegin(); it != enc_.rend(); ++it) {
    EncLevel& level = *it;
    if (level.down) d = level.down->backward(d);
    for (size_t bi = level.res.size(); bi-- > 0;) {
      if (level.attn[bi]) d = level.attn[bi]->backward(d);
      --head;
      Tensor<T> dh = heads_[head].backward(d_mods[head]);
      for (int64_t i = 0; i < d.numel(); ++i) d[i] += dh[i];
      d = level.res[bi].backward(d);
    }
  }
  stem_.backward(d);
  check(head == 0, "modulator backward: head traversal mismatch");
}

template class ResBlock<float>;
template class ResBlock<double>;
template class UNet<float>;
template class UNet<double>;
template class Modulator<float>;
template class Modulator<double>;

}  // namespace relight::nn
