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

#include "relight/core/image.h"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "relight/core/error.h"

namespace relight {

int64_t Mask::count() const {
  int64_t n = 0;
  for (uint8_t v : on) n += v != 0;
  return n;
}

uint8_t quantize8(float v) {
  if (!(v > 0.f)) v = 0.f;
  if (v > 1.f) v = 1.f;
  return static_cast<uint8_t>(std::floor(v * 255.f + 0.5f));
}

Tensor32 png_round_trip(const Tensor32& chw) {
  Tensor32 out(chw.shape());
  for (int64_t i = 0; i < chw.numel(); ++i)
    out[i] = static_cast<float>(quantize8(chw[i])) / 255.f;
  return out;
}

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void write_png(const std::string& path, int width, int height, int channels,
               const std::vector<uint8_t>& rows_interleaved) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng write error: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(height));
  for (int y = 0; y < height; ++y)
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(rows_interleaved.data() + static_cast<size_t>(y) * width * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void read_png(const std::string& path, int* width, int* height, int want_channels,
              std::vector<uint8_t>* out) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open for reading: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng read error: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_packing(png);
  png_set_expand(png);
  if (want_channels == 3) {
    png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
  } else {
    int color = png_get_color_type(png, info);
    if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);

  *width = static_cast<int>(png_get_image_width(png, info));
  *height = static_cast<int>(png_get_image_height(png, info));
  size_t rowbytes = png_get_rowbytes(png, info);
  out->assign(rowbytes * static_cast<size_t>(*height), 0);
  std::vector<png_bytep> rows(static_cast<size_t>(*height));
  for (int y = 0; y < *height; ++y)
    rows[static_cast<size_t>(y)] = out->data() + static_cast<size_t>(y) * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
}

}  // namespace

void write_png_rgb(const std::string& path, const Tensor32& chw) {
  check(chw.ndim() == 3 && chw.dim(0) == 3, "write_png_rgb expects a {3,H,W} tensor");
  int h = static_cast<int>(chw.dim(1));
  int w = static_cast<int>(chw.dim(2));
  std::vector<uint8_t> rows(static_cast<size_t>(w) * h * 3);
  const float* base = chw.data();
  int64_t plane = static_cast<int64_t>(h) * w;
  for (int64_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c)
      rows[static_cast<size_t>(p) * 3 + static_cast<size_t>(c)] = quantize8(base[c * plane + p]);
  write_png(path, w, h, 3, rows);
}

void write_png_mask(const std::string& path, const Mask& mask) {
  std::vector<uint8_t> rows(mask.on.size());
  for (size_t i = 0; i < mask.on.size(); ++i) rows[i] = mask.on[i] ? 255 : 0;
  write_png(path, mask.width, mask.height, 1, rows);
}

Tensor32 read_png_rgb(const std::string& path) {
  int w = 0, h = 0;
  std::vector<uint8_t> rows;
  read_png(path, &w, &h, 3, &rows);
  Tensor32 out({3, h, w});
  int64_t plane = static_cast<int64_t>(h) * w;
  for (int64_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c)
      out[c * plane + p] = static_cast<float>(rows[static_cast<size_t>(p) * 3 + static_cast<size_t>(c)]) / 255.f;
  return out;
}

Mask read_png_mask(const std::string& path) {
  int w = 0, h = 0;
  std::vector<uint8_t> rows;
  read_png(path, &w, &h, 1, &rows);
  Mask m(w, h);
  for (size_t i = 0; i < m.on.size(); ++i) m.on[i] = rows[i] ? 1 : 0;
  return m;
}

Tensor32 to_signed_range(const Tensor32& img01) {
  Tensor32 out(img01.shape());
  for (int64_t i = 0; i < img01.numel(); ++i) out[i] = img01[i] * 2.f - 1.f;
  return out;
}

Tensor32 to_unit_range(const Tensor32& imgs) {
  Tensor32 out(imgs.shape());
  for (int64_t i = 0; i < imgs.numel(); ++i) out[i] = (imgs[i] + 1.f) * 0.5f;
  return out;
}

}  // namespace relight
