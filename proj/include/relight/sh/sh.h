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

#include <Eigen/Core>
#include <array>
#include <cstdint>

#include "relight/core/rng.h"

namespace relight::sh {

// Real second-order spherical harmonics, 9 basis functions over bands 0..2.
//
// Fixed ordering (no Condon-Shortley signs, standard orthonormal
// normalization over the plain sphere integral):
//   0: 1/(2*sqrt(pi))
//   1: k1 * y         2: k1 * z        3: k1 * x
//   4: k2 * x*y       5: k2 * y*z      6: k2z * (3z^2 - 1)
//   7: k2 * x*z       8: k2x * (x^2 - y^2)
inline constexpr int kNumBasis = 9;

using BasisVector = std::array<double, kNumBasis>;
using Rgb = Eigen::Vector3d;

// Band-0 basis constant 1/(2*sqrt(pi)).
inline constexpr double kBand0 = 0.28209479177387814;

// Evaluate the 9 basis functions at a unit direction.
// Throws ValidationError if |direction| deviates from 1 by more than 1e-6
// or the input is not finite.
BasisVector basis(const Eigen::Vector3d& direction);

// 9x3 RGB lighting coefficients; rows follow the basis ordering above.
struct LightSH {
  Eigen::Matrix<double, kNumBasis, 3> coeffs = Eigen::Matrix<double, kNumBasis, 3>::Zero();

  // Light whose shading equals `value` for every normal (band 0 only).
  static LightSH constant(double value);

  // Flat row-major [27] view used by sidecar files.
  std::array<double, 27> flat() const;
  static LightSH from_flat(const std::array<double, 27>& v);

  bool finite() const;

  LightSH operator+(const LightSH& o) const {
    LightSH r;
    r.coeffs = coeffs + o.coeffs;
    return r;
  }
  LightSH operator*(double s) const {
    LightSH r;
    r.coeffs = coeffs * s;
    return r;
  }
};

// A ⊙ Σ_k l_k H_k(n), clamped below at 0 per channel. Values above 1 are
// kept; they only clamp at 8-bit quantization.
Rgb shade_point(const Eigen::Vector3d& normal, const Rgb& albedo, const LightSH& light);

// Same sum without the clamp (linearity checks).
Rgb shade_point_unclamped(const Eigen::Vector3d& normal, const Rgb& albedo, const LightSH& light);

// Second-order SH projection of the clamped-cosine lobe max(n·d, 0) around
// direction d. shade with this light reproduces a directional Lambertian
// term up to band-2 truncation.
LightSH cosine_lobe(const Eigen::Vector3d& direction, const Rgb& strength);

struct LightSampleConfig {
  double band0_min = 0.6;
  double band0_max = 1.1;
  // Per-channel band-0 tint jitter, relative.
  double tint = 0.08;
  // Raw scale of band-1/2 draws before the dominance rescale.
  double higher_scale = 0.35;
  // Enforce band0 >= dominance_ratio * sum(|band1..2|) per channel.
  double dominance_ratio = 2.0;

  void validate() const;
};

// Deterministic in seed. Band-0 dominates so shading stays mostly
// non-negative over the sphere.
LightSH sample_plausible_light(uint64_t seed, const LightSampleConfig& config = {});

}  // namespace relight::sh
