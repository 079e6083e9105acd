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

#include <cstdint>

#include "relight/core/tensor.h"

namespace relight::nn {

// Row-major C[m,n] = alpha * op(A) * op(B) + beta * C.
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha, const float* a,
          const float* b, float beta, float* c);
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha,
          const double* a, const double* b, double beta, double* c);

struct ConvGeom {
  int in_c, in_h, in_w;
  int out_c, out_h, out_w;
  int kernel, stride, pad;
};

inline int conv_out_size(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

// Scatter input patches to a [in_c*k*k, out_h*out_w] matrix (single sample).
template <typename T>
void im2col(const T* src, const ConvGeom& g, T* cols);

// Accumulate the transpose of im2col back into the input gradient.
template <typename T>
void col2im(const T* cols, const ConvGeom& g, T* dst);

// Caps BLAS threading; reads RELIGHT_NUM_THREADS once (default 1 thread per
// available core, at most 8). Safe to call repeatedly.
void configure_threads();

}  // namespace relight::nn
