#pragma once

#include "apvit/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace apvit {

// 8-bit raster, HWC layout. c == 1 maps to PGM (P5), c == 3 to PPM (P6).
struct ImageU8 {
  int h = 0, w = 0, c = 1;
  std::vector<std::uint8_t> data;

  std::uint8_t& at(int y, int x, int ch = 0) { return data[(y * w + x) * c + ch]; }
  std::uint8_t at(int y, int x, int ch = 0) const { return data[(y * w + x) * c + ch]; }

  static ImageU8 make(int h, int w, int c, std::uint8_t fill = 0) {
    ImageU8 img;
    img.h = h;
    img.w = w;
    img.c = c;
    img.data.assign(static_cast<size_t>(h) * w * c, fill);
    return img;
  }
};

// Float tensor in HWC layout, the shape the model consumes.
struct TensorImage {
  int h = 0, w = 0, c = 1;
  std::vector<float> data;

  float& at(int y, int x, int ch = 0) { return data[(y * w + x) * c + ch]; }
  float at(int y, int x, int ch = 0) const { return data[(y * w + x) * c + ch]; }

  static TensorImage make(int h, int w, int c, float fill = 0.f) {
    TensorImage t;
    t.h = h;
    t.w = w;
    t.c = c;
    t.data.assign(static_cast<size_t>(h) * w * c, fill);
    return t;
  }
};

ImageU8 read_pnm(const std::string& path);
void write_pnm(const ImageU8& img, const std::string& path);

ImageU8 center_crop(const ImageU8& img, int size);
ImageU8 resize_bilinear(const ImageU8& img, int out_h, int out_w);
ImageU8 rotate90(const ImageU8& img, int quarter_turns);
// Rotation about the image center, bilinear, border filled with `fill`.
ImageU8 rotate_angle(const ImageU8& img, double degrees, std::uint8_t fill = 0);

// [0,1] grayscale matrix to an 8-bit raster and back.
ImageU8 gray_to_u8(const MatD& m);
MatD u8_to_gray(const ImageU8& img);

// Heatmap in [0,1] alpha-blended over a grayscale base image, 3-stop color map.
ImageU8 overlay_heatmap(const ImageU8& base, const MatD& heat, double alpha = 0.45);

}  // namespace apvit
