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

#include "relight/sh/sh.h"

#include <cmath>

#include "relight/core/error.h"

namespace relight::sh {

namespace {

// sqrt(3/(4pi)), 0.5*sqrt(15/pi), 0.25*sqrt(5/pi), 0.25*sqrt(15/pi)
constexpr double kBand1 = 0.4886025119029199;
constexpr double kBand2 = 1.0925484305920792;
constexpr double kBand2zz = 0.31539156525252005;
constexpr double kBand2xx = 0.5462742152960396;

// Zonal coefficients of the clamped cosine lobe around +z:
// a0 = sqrt(pi)/2, a1 = sqrt(pi/3), a2 = sqrt(5*pi)/4.
constexpr double kCosLobe0 = 0.8862269254527580;
constexpr double kCosLobe1 = 1.0233267079464885;
constexpr double kCosLobe2 = 0.4954159360435398;

}  // namespace

BasisVector basis(const Eigen::Vector3d& d) {
  check(d.allFinite(), "sh::basis: direction must be finite");
  check(std::abs(d.norm() - 1.0) <= 1e-6, "sh::basis: direction must be unit length");
  const double x = d.x(), y = d.y(), z = d.z();
  return BasisVector{
      kBand0,
      kBand1 * y,
      kBand1 * z,
      kBand1 * x,
      kBand2 * x * y,
      kBand2 * y * z,
      kBand2zz * (3.0 * z * z - 1.0),
      kBand2 * x * z,
      kBand2xx * (x * x - y * y),
  };
}

LightSH LightSH::constant(double value) {
  LightSH l;
  l.coeffs.row(0).setConstant(value / kBand0);
  return l;
}

std::array<double, 27> LightSH::flat() const {
  std::array<double, 27> out;
  for (int k = 0; k < kNumBasis; ++k)
    for (int c = 0; c < 3; ++c) out[static_cast<size_t>(k * 3 + c)] = coeffs(k, c);
  return out;
}

LightSH LightSH::from_flat(const std::array<double, 27>& v) {
  LightSH l;
  for (int k = 0; k < kNumBasis; ++k)
    for (int c = 0; c < 3; ++c) l.coeffs(k, c) = v[static_cast<size_t>(k * 3 + c)];
  check(l.finite(), "LightSH: coefficients must be finite");
  return l;
}

bool LightSH::finite() const { return coeffs.allFinite(); }

Rgb shade_point_unclamped(const Eigen::Vector3d& normal, const Rgb& albedo, const LightSH& light) {
  check(light.finite(), "shade_point: light must be finite");
  BasisVector h = basis(normal);
  Rgb irradiance = Rgb::Zero();
  for (int k = 0; k < kNumBasis; ++k)
    irradiance += h[static_cast<size_t>(k)] * light.coeffs.row(k).transpose();
  return albedo.cwiseProduct(irradiance);
}

Rgb shade_point(const Eigen::Vector3d& normal, const Rgb& albedo, const LightSH& light) {
  return shade_point_unclamped(normal, albedo, light).cwiseMax(0.0);
}

LightSH cosine_lobe(const Eigen::Vector3d& direction, const Rgb& strength) {
  check(std::abs(direction.norm() - 1.0) <= 1e-6, "cosine_lobe: direction must be unit length");
  // Rotate the zonal lobe to `direction`: coeff_k = a_l * sqrt(4pi/(2l+1)) * H_k(d).
  BasisVector h = basis(direction);
  const double s0 = kCosLobe0 * std::sqrt(4.0 * M_PI / 1.0);
  const double s1 = kCosLobe1 * std::sqrt(4.0 * M_PI / 3.0);
  const double s2 = kCosLobe2 * std::sqrt(4.0 * M_PI / 5.0);
  const double band_scale[kNumBasis] = {s0, s1, s1, s1, s2, s2, s2, s2, s2};
  LightSH l;
  for (int k = 0; k < kNumBasis; ++k)
    l.coeffs.row(k) = (band_scale[k] * h[static_cast<size_t>(k)]) * strength.transpose();
  return l;
}

void LightSampleConfig::validate() const {
  check(band0_min > 0.0 && band0_max >= band0_min, "light sampling: band-0 interval must be positive");
  check(tint >= 0.0 && tint < 1.0, "light sampling: tint must be in [0,1)");
  check(higher_scale >= 0.0, "light sampling: higher_scale must be non-negative");
  check(dominance_ratio > 0.0, "light sampling: dominance_ratio must be positive");
}

LightSH sample_plausible_light(uint64_t seed, const LightSampleConfig& config) {
  config.validate();
  Rng rng(splitmix64(hash_combine(seed, 0x5348u)));
  LightSH l;
  double base = rng.uniform(config.band0_min, config.band0_max);
  for (int c = 0; c < 3; ++c) {
    double b0 = base * (1.0 + config.tint * rng.uniform(-1.0, 1.0));
    b0 = std::min(std::max(b0, config.band0_min), config.band0_max);
    l.coeffs(0, c) = b0;
  }
  // Shared spatial pattern with per-channel tint keeps the light plausible
  // (one environment, slightly colored).
  std::array<double, kNumBasis> pattern{};
  for (int k = 1; k < kNumBasis; ++k) pattern[static_cast<size_t>(k)] = rng.normal() * config.higher_scale;
  for (int c = 0; c < 3; ++c) {
    double channel_gain = 1.0 + config.tint * rng.uniform(-1.0, 1.0);
    double abs_sum = 0.0;
    for (int k = 1; k < kNumBasis; ++k) abs_sum += std::abs(pattern[static_cast<size_t>(k)] * channel_gain);
    double limit = l.coeffs(0, c) / config.dominance_ratio;
    double scale = (abs_sum > limit && abs_sum > 0.0) ? limit / abs_sum : 1.0;
    for (int k = 1; k < kNumBasis; ++k)
      l.coeffs(k, c) = pattern[static_cast<size_t>(k)] * channel_gain * scale;
  }
  return l;
}

}  // namespace relight::sh
