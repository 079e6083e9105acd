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
#include <string>
#include <vector>

#include "relight/core/tensor.h"

namespace relight {

// RGB images are Tensor32 in CHW layout ({3, H, W}) with linear values.
// Unless stated otherwise, values are in [0,1] on disk boundaries and in
// [-1,1] inside the diffusion model.

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> on;  // row-major, 0 or 1

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), on(static_cast<size_t>(w) * h, 0) {}

  bool at(int x, int y) const { return on[static_cast<size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { on[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
  int64_t count() const;
};

// 8-bit quantization used on every PNG boundary: clamp to [0,1], scale by
// 255, round half up.
uint8_t quantize8(float v);

// Quantize in place to the exact values an 8-bit PNG round trip would give.
Tensor32 png_round_trip(const Tensor32& chw);

void write_png_rgb(const std::string& path, const Tensor32& chw);
void write_png_mask(const std::string& path, const Mask& mask);

Tensor32 read_png_rgb(const std::string& path);   // values in [0,1]
Mask read_png_mask(const std::string& path);      // nonzero -> true

// [0,1] <-> [-1,1] helpers.
Tensor32 to_signed_range(const Tensor32& img01);
Tensor32 to_unit_range(const Tensor32& imgs);

}  // namespace relight
