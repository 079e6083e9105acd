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

#include "relight/core/image.h"

namespace relight::eval {

// Mean squared difference over masked pixels and channels; images in [0,1].
double masked_mse(const Tensor32& a, const Tensor32& b, const Mask& mask);

// DSSIM = (1 - SSIM)/2 with an 11x11 Gaussian window (sigma 1.5),
// c1 = (0.01)^2, c2 = (0.03)^2 (dynamic range 1), averaged per channel over
// windows that fit inside the image and whose centers lie in the mask.
double dssim(const Tensor32& a, const Tensor32& b, const Mask& mask);

// PSNR in dB over all pixels, peak 1.
double psnr(const Tensor32& a, const Tensor32& b);

}  // namespace relight::eval
