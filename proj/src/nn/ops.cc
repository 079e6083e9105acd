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

#include "relight/nn/ops.h"

#include <cblas.h>

#include <algorithm>
#include <cstdlib>
#include <thread>

extern "C" void openblas_set_num_threads(int);

namespace relight::nn {

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha, const float* a,
          const float* b, float beta, float* c) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), alpha, a, static_cast<int>(trans_a ? m : k), b,
              static_cast<int>(trans_b ? k : n), beta, c, static_cast<int>(n));
}

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha,
          const double* a, const double* b, double beta, double* c) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), alpha, a, static_cast<int>(trans_a ? m : k), b,
              static_cast<int>(trans_b ? k : n), beta, c, static_cast<int>(n));
}

template <typename T>
void im2col(const T* src, const ConvGeom& g, T* cols) {
  const int64_t out_plane = static_cast<int64_t>(g.out_h) * g.out_w;
  int64_t row = 0;
  for (int c = 0; c < g.in_c; ++c) {
    const T* plane = src + static_cast<int64_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx, ++row) {
        T* dst = cols + row * out_plane;
        for (int oy = 0; oy < g.out_h; ++oy) {
          int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, T(0));
            dst += g.out_w;
            continue;
          }
          const T* src_row = plane + static_cast<int64_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            int ix = ox * g.stride - g.pad + kx;
            *dst++ = (ix >= 0 && ix < g.in_w) ? src_row[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const ConvGeom& g, T* dst) {
  const int64_t out_plane = static_cast<int64_t>(g.out_h) * g.out_w;
  int64_t row = 0;
  for (int c = 0; c < g.in_c; ++c) {
    T* plane = dst + static_cast<int64_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx, ++row) {
        const T* src_row_base = cols + row * out_plane;
        for (int oy = 0; oy < g.out_h; ++oy) {
          int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          T* dplane_row = plane + static_cast<int64_t>(iy) * g.in_w;
          const T* src_row = src_row_base + static_cast<int64_t>(oy) * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_w) dplane_row[ix] += src_row[ox];
          }
        }
      }
    }
  }
}

template void im2col<float>(const float*, const ConvGeom&, float*);
template void im2col<double>(const double*, const ConvGeom&, double*);
template void col2im<float>(const float*, const ConvGeom&, float*);
template void col2im<double>(const double*, const ConvGeom&, double*);

void configure_threads() {
  static bool done = false;
  if (done) return;
  done = true;
  int threads = 0;
  if (const char* env = std::getenv("RELIGHT_NUM_THREADS")) threads = std::atoi(env);
  if (threads <= 0)
    threads = std::min(8u, std::max(1u, std::thread::hardware_concurrency()));
  openblas_set_num_threads(threads);
}

}  // namespace relight::nn
