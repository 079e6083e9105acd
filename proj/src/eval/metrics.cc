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

#include "relight/eval/metrics.h"

#include <cmath>
#include <vector>

#include "relight/core/error.h"

namespace relight::eval {

double masked_mse(const Tensor32& a, const Tensor32& b, const Mask& mask) {
  check(a.same_shape(b), "masked_mse: shape mismatch");
  check(a.ndim() == 3 && a.dim(0) == 3, "masked_mse: expected {3,H,W}");
  check(a.dim(1) == mask.height && a.dim(2) == mask.width, "masked_mse: mask shape mismatch");
  int64_t plane = static_cast<int64_t>(mask.width) * mask.height;
  double sum = 0.0;
  int64_t n = 0;
  for (int64_t p = 0; p < plane; ++p) {
    if (!mask.on[static_cast<size_t>(p)]) continue;
    for (int c = 0; c < 3; ++c) {
      double d = static_cast<double>(a[c * plane + p]) - static_cast<double>(b[c * plane + p]);
      sum += d * d;
    }
    n += 3;
  }
  check(n > 0, "masked_mse: empty mask");
  return sum / static_cast<double>(n);
}

namespace {

constexpr int kWindow = 11;
constexpr int kHalf = kWindow / 2;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::vector<double>& gaussian_window() {
  static const std::vector<double> w = [] {
    std::vector<double> out(kWindow * kWindow);
    double sum = 0.0;
    for (int y = 0; y < kWindow; ++y)
      for (int x = 0; x < kWindow; ++x) {
        double dy = y - kHalf, dx = x - kHalf;
        double v = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
        out[static_cast<size_t>(y * kWindow + x)] = v;
        sum += v;
      }
    for (double& v : out) v /= sum;
    return out;
  }();
  return w;
}

}  // namespace

double dssim(const Tensor32& a, const Tensor32& b, const Mask& mask) {
  check(a.same_shape(b), "dssim: shape mismatch");
  check(a.ndim() == 3 && a.dim(0) == 3, "dssim: expected {3,H,W}");
  const int h = static_cast<int>(a.dim(1)), w = static_cast<int>(a.dim(2));
  check(h == mask.height && w == mask.width, "dssim: mask shape mismatch");
  check(h >= kWindow && w >= kWindow, "dssim: image smaller than the SSIM window");
  const auto& win = gaussian_window();
  const int64_t plane = static_cast<int64_t>(h) * w;

  double total = 0.0;
  int64_t count = 0;
  for (int cy = kHalf; cy < h - kHalf; ++cy) {
    for (int cx = kHalf; cx < w - kHalf; ++cx) {
      if (!mask.at(cx, cy)) continue;
      for (int c = 0; c < 3; ++c) {
        const float* pa = a.data() + c * plane;
        const float* pb = b.data() + c * plane;
        double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
        for (int dy = -kHalf; dy <= kHalf; ++dy)
          for (int dx = -kHalf; dx <= kHalf; ++dx) {
            double wgt = win[static_cast<size_t>((dy + kHalf) * kWindow + (dx + kHalf))];
            double xa = pa[(cy + dy) * w + (cx + dx)];
            double xb = pb[(cy + dy) * w + (cx + dx)];
            ma += wgt * xa;
            mb += wgt * xb;
            va += wgt * xa * xa;
            vb += wgt * xb * xb;
            cov += wgt * xa * xb;
          }
        va -= ma * ma;
        vb -= mb * mb;
        cov -= ma * mb;
        double ssim = ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
                      ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
        total += (1.0 - ssim) / 2.0;
        ++count;
      }
    }
  }
  check(count > 0, "dssim: no valid windows with centers in the mask");
  return total / static_cast<double>(count);
}

double psnr(const Tensor32& a, const Tensor32& b) {
  check(a.same_shape(b), "psnr: shape mismatch");
  double sum = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  double mse = sum / static_cast<double>(a.numel());
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

}  // namespace relight::eval
