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

#include "relight/nn/layers.h"

#include <cmath>

#include "relight/core/error.h"

namespace relight::nn {

template <typename T>
Tensor<T> Silu<T>::forward(const Tensor<T>& x) {
  x_ = x;
  Tensor<T> y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = silu_scalar(x[i]);
  return y;
}

template <typename T>
Tensor<T> Silu<T>::backward(const Tensor<T>& dy) const {
  Tensor<T> dx(dy.shape());
  for (int64_t i = 0; i < dy.numel(); ++i) {
    T s = T(1) / (T(1) + std::exp(-x_[i]));
    dx[i] = dy[i] * s * (T(1) + x_[i] * (T(1) - s));
  }
  return dx;
}

template <typename T>
Linear<T>::Linear(ParamStore<T>* store, const std::string& name, int64_t in, int64_t out,
                  double gain, double bias_init, Rng* rng) {
  weight = store->create(name + ".weight", {out, in});
  bias = store->create(name + ".bias", {out});
  init_gaussian(weight, in, gain, rng);
  bias->value.fill(static_cast<T>(bias_init));
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  check(x.ndim() == 2 && x.dim(1) == weight->value.dim(1), "linear: input shape mismatch");
  x_ = x;
  const int64_t n = x.dim(0), in = x.dim(1), out = weight->value.dim(0);
  Tensor<T> y({n, out});
  gemm(false, true, n, out, in, T(1), x.data(), weight->value.data(), T(0), y.data());
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < out; ++j) y[i * out + j] += bias->value[j];
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& dy) {
  const int64_t n = x_.dim(0), in = x_.dim(1), out = weight->value.dim(0);
  check(dy.ndim() == 2 && dy.dim(0) == n && dy.dim(1) == out, "linear backward: shape mismatch");
  gemm(true, false, out, in, n, T(1), dy.data(), x_.data(), T(1), weight->grad.data());
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < out; ++j) bias->grad[j] += dy[i * out + j];
  Tensor<T> dx({n, in});
  gemm(false, false, n, in, out, T(1), dy.data(), weight->value.data(), T(0), dx.data());
  return dx;
}

template <typename T>
Conv2d<T>::Conv2d(ParamStore<T>* store, const std::string& name, int in_c_, int out_c_, int kernel_,
                  int stride_, int pad_, double gain, Rng* rng)
    : in_c(in_c_), out_c(out_c_), kernel(kernel_), stride(stride_), pad(pad_) {
  weight = store->create(name + ".weight", {out_c, in_c, kernel, kernel});
  bias = store->create(name + ".bias", {out_c});
  init_gaussian(weight, static_cast<int64_t>(in_c) * kernel * kernel, gain, rng);
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  check(x.ndim() == 4 && x.dim(1) == in_c, "conv: input shape mismatch");
  x_ = x;
  const int n = static_cast<int>(x.dim(0));
  geom_ = ConvGeom{in_c,
                   static_cast<int>(x.dim(2)),
                   static_cast<int>(x.dim(3)),
                   out_c,
                   conv_out_size(static_cast<int>(x.dim(2)), kernel, stride, pad),
                   conv_out_size(static_cast<int>(x.dim(3)), kernel, stride, pad),
                   kernel,
                   stride,
                   pad};
  const int64_t rows = static_cast<int64_t>(in_c) * kernel * kernel;
  const int64_t cols_n = static_cast<int64_t>(geom_.out_h) * geom_.out_w;
  Tensor<T> cols({rows, cols_n});
  Tensor<T> y({n, out_c, geom_.out_h, geom_.out_w});
  const int64_t in_stride = static_cast<int64_t>(in_c) * geom_.in_h * geom_.in_w;
  const int64_t out_stride = static_cast<int64_t>(out_c) * cols_n;
  for (int i = 0; i < n; ++i) {
    im2col(x.data() + i * in_stride, geom_, cols.data());
    gemm(false, false, out_c, cols_n, rows, T(1), weight->value.data(), cols.data(), T(0),
         y.data() + i * out_stride);
    T* yp = y.data() + i * out_stride;
    for (int c = 0; c < out_c; ++c)
      for (int64_t s = 0; s < cols_n; ++s) yp[c * cols_n + s] += bias->value[c];
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy) {
  const int n = static_cast<int>(x_.dim(0));
  const int64_t rows = static_cast<int64_t>(in_c) * kernel * kernel;
  const int64_t cols_n = static_cast<int64_t>(geom_.out_h) * geom_.out_w;
  check(dy.ndim() == 4 && dy.dim(0) == n && dy.dim(1) == out_c && dy.dim(2) == geom_.out_h &&
            dy.dim(3) == geom_.out_w,
        "conv backward: shape mismatch");
  Tensor<T> cols({rows, cols_n});
  Tensor<T> dcols({rows, cols_n});
  Tensor<T> dx(x_.shape());
  const int64_t in_stride = static_cast<int64_t>(in_c) * geom_.in_h * geom_.in_w;
  const int64_t out_stride = static_cast<int64_t>(out_c) * cols_n;
  for (int i = 0; i < n; ++i) {
    const T* dyp = dy.data() + i * out_stride;
    for (int c = 0; c < out_c; ++c)
      for (int64_t s = 0; s < cols_n; ++s) bias->grad[c] += dyp[c * cols_n + s];
    im2col(x_.data() + i * in_stride, geom_, cols.data());
    gemm(false, true, out_c, rows, cols_n, T(1), dyp, cols.data(), T(1), weight->grad.data());
    gemm(true, false, rows, cols_n, out_c, T(1), weight->value.data(), dyp, T(0), dcols.data());
    col2im(dcols.data(), geom_, dx.data() + i * in_stride);
  }
  return dx;
}

int groups_for_channels(int channels, int target) {
  if (channels < target) return channels;
  check(channels % target == 0,
        "group norm: channel widths at or above the group target must be divisible by it");
  return target;
}

template <typename T>
Tensor<T> GroupNorm<T>::forward(const Tensor<T>& x) {
  check(x.ndim() == 4, "group norm: expected NCHW input");
  const int64_t n = x.dim(0), c = x.dim(1), spatial = x.dim(2) * x.dim(3);
  check(c % groups_ == 0, "group norm: channels not divisible by groups");
  const int64_t per = c / groups_;
  const int64_t group_elems = per * spatial;
  xhat_ = Tensor<T>(x.shape());
  inv_std_.assign(static_cast<size_t>(n * groups_), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t g = 0; g < groups_; ++g) {
      const int64_t base = (i * c + g * per) * spatial;
      double sum = 0.0, sq = 0.0;
      for (int64_t e = 0; e < group_elems; ++e) {
        double v = static_cast<double>(x[base + e]);
        sum += v;
        sq += v * v;
      }
      double mean = sum / static_cast<double>(group_elems);
      double var = sq / static_cast<double>(group_elems) - mean * mean;
      double inv = 1.0 / std::sqrt(std::max(var, 0.0) + 1e-5);
      inv_std_[static_cast<size_t>(i * groups_ + g)] = inv;
      for (int64_t e = 0; e < group_elems; ++e)
        xhat_[base + e] = static_cast<T>((static_cast<double>(x[base + e]) - mean) * inv);
    }
  }
  return xhat_;
}

template <typename T>
Tensor<T> GroupNorm<T>::backward(const Tensor<T>& dy) const {
  const int64_t n = dy.dim(0), c = dy.dim(1), spatial = dy.dim(2) * dy.dim(3);
  const int64_t per = c / groups_;
  const int64_t group_elems = per * spatial;
  Tensor<T> dx(dy.shape());
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t g = 0; g < groups_; ++g) {
      const int64_t base = (i * c + g * per) * spatial;
      double mean_dy = 0.0, mean_dy_xhat = 0.0;
      for (int64_t e = 0; e < group_elems; ++e) {
        mean_dy += static_cast<double>(dy[base + e]);
        mean_dy_xhat += static_cast<double>(dy[base + e]) * static_cast<double>(xhat_[base + e]);
      }
      mean_dy /= static_cast<double>(group_elems);
      mean_dy_xhat /= static_cast<double>(group_elems);
      double inv = inv_std_[static_cast<size_t>(i * groups_ + g)];
      for (int64_t e = 0; e < group_elems; ++e) {
        double v = static_cast<double>(dy[base + e]) - mean_dy -
                   static_cast<double>(xhat_[base + e]) * mean_dy_xhat;
        dx[base + e] = static_cast<T>(inv * v);
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> AdaGnApply<T>::forward(const Tensor<T>& gn, const Tensor<T>& k, const Tensor<T>& ts,
                                 const Tensor<T>& tb) {
  const int64_t n = gn.dim(0), c = gn.dim(1), spatial = gn.dim(2) * gn.dim(3);
  check(k.ndim() == 2 && k.dim(0) == n && k.dim(1) == c, "adagn: k shape mismatch");
  check(ts.same_shape(k) && tb.same_shape(k), "adagn: ts/tb shape mismatch");
  gn_ = gn;
  k_ = k;
  ts_ = ts;
  tb_ = tb;
  Tensor<T> y(gn.shape());
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const T kk = k[i * c + ch], s = ts[i * c + ch], b = tb[i * c + ch];
      const int64_t base = (i * c + ch) * spatial;
      for (int64_t e = 0; e < spatial; ++e) y[base + e] = kk * (s * gn[base + e] + b);
    }
  return y;
}

template <typename T>
Tensor<T> AdaGnApply<T>::backward(const Tensor<T>& dy, Tensor<T>* dk, Tensor<T>* dts,
                                  Tensor<T>* dtb) const {
  const int64_t n = gn_.dim(0), c = gn_.dim(1), spatial = gn_.dim(2) * gn_.dim(3);
  *dk = Tensor<T>({n, c});
  *dts = Tensor<T>({n, c});
  *dtb = Tensor<T>({n, c});
  Tensor<T> dgn(gn_.shape());
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const T kk = k_[i * c + ch], s = ts_[i * c + ch], b = tb_[i * c + ch];
      const int64_t base = (i * c + ch) * spatial;
      double sk = 0, ss = 0, sb = 0;
      for (int64_t e = 0; e < spatial; ++e) {
        const T d = dy[base + e], g = gn_[base + e];
        sk += static_cast<double>(d) * (s * g + b);
        ss += static_cast<double>(d) * kk * g;
        sb += static_cast<double>(d) * kk;
        dgn[base + e] = d * kk * s;
      }
      (*dk)[i * c + ch] = static_cast<T>(sk);
      (*dts)[i * c + ch] = static_cast<T>(ss);
      (*dtb)[i * c + ch] = static_cast<T>(sb);
    }
  return dgn;
}

template <typename T>
AttentionBlock<T>::AttentionBlock(ParamStore<T>* store, const std::string& name, int channels,
                                  int heads, int groups_target, Rng* rng)
    : channels_(channels), heads_(heads), norm_(groups_for_channels(channels, groups_target)) {
  check(channels % heads == 0, "attention: channels must divide by heads");
  qkv_ = Conv2d<T>(store, name + ".qkv", channels, channels * 3, 1, 1, 0, 1.0, rng);
  proj_ = Conv2d<T>(store, name + ".proj", channels, channels, 1, 1, 0, 0.1, rng);
}

template <typename T>
Tensor<T> AttentionBlock<T>::forward(const Tensor<T>& x) {
  const int64_t n = x.dim(0), c = x.dim(1), s = x.dim(2) * x.dim(3);
  const int64_t dh = c / heads_;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor<T> a = norm_.forward(x);
  qkv_out_ = qkv_.forward(a);
  att_.assign(static_cast<size_t>(n * heads_), Tensor<T>());
  Tensor<T> att_out({n, c, x.dim(2), x.dim(3)});
  for (int64_t i = 0; i < n; ++i) {
    const T* base = qkv_out_.data() + i * 3 * c * s;
    for (int h = 0; h < heads_; ++h) {
      const T* q = base + h * dh * s;
      const T* k = base + (c + h * dh) * s;
      const T* v = base + (2 * c + h * dh) * s;
      Tensor<T>& att = att_[static_cast<size_t>(i * heads_ + h)];
      att = Tensor<T>({s, s});
      gemm(true, false, s, s, dh, scale, q, k, T(0), att.data());
      for (int64_t r = 0; r < s; ++r) {
        T* row = att.data() + r * s;
        T mx = row[0];
        for (int64_t j = 1; j < s; ++j) mx = std::max(mx, row[j]);
        double sum = 0;
        for (int64_t j = 0; j < s; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += static_cast<double>(row[j]);
        }
        T inv = static_cast<T>(1.0 / sum);
        for (int64_t j = 0; j < s; ++j) row[j] *= inv;
      }
      T* out = att_out.data() + (i * c + h * dh) * s;
      gemm(false, true, dh, s, s, T(1), v, att.data(), T(0), out);
    }
  }
  Tensor<T> o = proj_.forward(att_out);
  for (int64_t i = 0; i < o.numel(); ++i) o[i] += x[i];
  return o;
}

template <typename T>
Tensor<T> AttentionBlock<T>::backward(const Tensor<T>& dy) {
  const int64_t n = dy.dim(0), c = dy.dim(1), s = dy.dim(2) * dy.dim(3);
  const int64_t dh = c / heads_;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor<T> d_att_out = proj_.backward(dy);
  Tensor<T> d_qkv(qkv_out_.shape());
  for (int64_t i = 0; i < n; ++i) {
    const T* base = qkv_out_.data() + i * 3 * c * s;
    T* dbase = d_qkv.data() + i * 3 * c * s;
    for (int h = 0; h < heads_; ++h) {
      const T* q = base + h * dh * s;
      const T* k = base + (c + h * dh) * s;
      const T* v = base + (2 * c + h * dh) * s;
      T* dq = dbase + h * dh * s;
      T* dk = dbase + (c + h * dh) * s;
      T* dv = dbase + (2 * c + h * dh) * s;
      const Tensor<T>& att = att_[static_cast<size_t>(i * heads_ + h)];
      const T* dout = d_att_out.data() + (i * c + h * dh) * s;
      // out = v * att^T
      gemm(false, false, dh, s, s, T(1), dout, att.data(), T(0), dv);
      Tensor<T> datt({s, s});
      gemm(true, false, s, s, dh, T(1), dout, v, T(0), datt.data());
      // softmax backward, row-wise
      for (int64_t r = 0; r < s; ++r) {
        const T* arow = att.data() + r * s;
        T* drow = datt.data() + r * s;
        double dot = 0;
        for (int64_t j = 0; j < s; ++j) dot += static_cast<double>(drow[j]) * static_cast<double>(arow[j]);
        for (int64_t j = 0; j < s; ++j)
          drow[j] = static_cast<T>((static_cast<double>(drow[j]) - dot) * static_cast<double>(arow[j]));
      }
      gemm(false, true, dh, s, s, scale, k, datt.data(), T(0), dq);
      gemm(false, false, dh, s, s, scale, q, datt.data(), T(0), dk);
    }
  }
  Tensor<T> da = qkv_.backward(d_qkv);
  Tensor<T> dx = norm_.backward(da);
  for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += dy[i];
  return dx;
}

template <typename T>
Tensor<T> sinusoidal_embed(int t, int dim) {
  check(dim >= 2 && dim % 2 == 0, "sinusoidal embed: dim must be even");
  const int half = dim / 2;
  Tensor<T> out({dim});
  for (int i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
    out[i] = static_cast<T>(std::sin(t * freq));
    out[half + i] = static_cast<T>(std::cos(t * freq));
  }
  return out;
}

template <typename T>
Tensor<T> sinusoidal_embed_batch(const std::vector<int>& ts, int dim) {
  Tensor<T> out({static_cast<int64_t>(ts.size()), dim});
  for (size_t i = 0; i < ts.size(); ++i) {
    Tensor<T> e = sinusoidal_embed<T>(ts[i], dim);
    for (int j = 0; j < dim; ++j) out[static_cast<int64_t>(i) * dim + j] = e[j];
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.ndim() == 4 && b.ndim() == 4 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) &&
            a.dim(3) == b.dim(3),
        "concat: shape mismatch");
  const int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), sp = a.dim(2) * a.dim(3);
  Tensor<T> out({n, ca + cb, a.dim(2), a.dim(3)});
  for (int64_t i = 0; i < n; ++i) {
    std::copy(a.data() + i * ca * sp, a.data() + (i + 1) * ca * sp,
              out.data() + i * (ca + cb) * sp);
    std::copy(b.data() + i * cb * sp, b.data() + (i + 1) * cb * sp,
              out.data() + i * (ca + cb) * sp + ca * sp);
  }
  return out;
}

template <typename T>
void split_channels(const Tensor<T>& d, int64_t c_a, Tensor<T>* da, Tensor<T>* db) {
  const int64_t n = d.dim(0), c = d.dim(1), sp = d.dim(2) * d.dim(3);
  const int64_t c_b = c - c_a;
  *da = Tensor<T>({n, c_a, d.dim(2), d.dim(3)});
  *db = Tensor<T>({n, c_b, d.dim(2), d.dim(3)});
  for (int64_t i = 0; i < n; ++i) {
    std::copy(d.data() + i * c * sp, d.data() + i * c * sp + c_a * sp, da->data() + i * c_a * sp);
    std::copy(d.data() + i * c * sp + c_a * sp, d.data() + (i + 1) * c * sp,
              db->data() + i * c_b * sp);
  }
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> y({n, c, h * 2, w * 2});
  for (int64_t nc = 0; nc < n * c; ++nc) {
    const T* src = x.data() + nc * h * w;
    T* dst = y.data() + nc * h * w * 4;
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        T v = src[i * w + j];
        dst[(2 * i) * (2 * w) + 2 * j] = v;
        dst[(2 * i) * (2 * w) + 2 * j + 1] = v;
        dst[(2 * i + 1) * (2 * w) + 2 * j] = v;
        dst[(2 * i + 1) * (2 * w) + 2 * j + 1] = v;
      }
  }
  return y;
}

template <typename T>
Tensor<T> upsample_nearest2x_backward(const Tensor<T>& dy) {
  const int64_t n = dy.dim(0), c = dy.dim(1), h2 = dy.dim(2), w2 = dy.dim(3);
  const int64_t h = h2 / 2, w = w2 / 2;
  Tensor<T> dx({n, c, h, w});
  for (int64_t nc = 0; nc < n * c; ++nc) {
    const T* src = dy.data() + nc * h2 * w2;
    T* dst = dx.data() + nc * h * w;
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j)
        dst[i * w + j] = src[(2 * i) * w2 + 2 * j] + src[(2 * i) * w2 + 2 * j + 1] +
                         src[(2 * i + 1) * w2 + 2 * j] + src[(2 * i + 1) * w2 + 2 * j + 1];
  }
  return dx;
}

#define RELIGHT_INSTANTIATE(T)                                                               \
  template class Silu<T>;                                                                    \
  template class Linear<T>;                                                                  \
  template class Conv2d<T>;                                                                  \
  template class GroupNorm<T>;                                                               \
  template class AdaGnApply<T>;                                                              \
  template class AttentionBlock<T>;                                                          \
  template Tensor<T> sinusoidal_embed<T>(int, int);                                         \
  template Tensor<T> sinusoidal_embed_batch<T>(const std::vector<int>&, int);               \
  template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);                \
  template void split_channels<T>(const Tensor<T>&, int64_t, Tensor<T>*, Tensor<T>*);       \
  template Tensor<T> upsample_nearest2x<T>(const Tensor<T>&);                               \
  template Tensor<T> upsample_nearest2x_backward<T>(const Tensor<T>&);

RELIGHT_INSTANTIATE(float)
RELIGHT_INSTANTIATE(double)
#undef RELIGHT_INSTANTIATE

}  // namespace relight::nn
