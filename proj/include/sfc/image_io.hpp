#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sfc/tensor.hpp"

namespace sfc {

// Single-channel 8-bit image (labels, heatmaps).
struct ByteImage {
  int w = 0, h = 0;
  std::vector<uint8_t> px;

  ByteImage() = default;
  ByteImage(int w_, int h_, uint8_t fill = 0)
      : w(w_), h(h_), px(static_cast<size_t>(w_) * h_, fill) {
    if (w_ < 1 || h_ < 1) throw ShapeError("image: invalid dims");
  }
  uint8_t& at(int x, int y) { return px[static_cast<size_t>(y) * w + x]; }
  uint8_t at(int x, int y) const { return px[static_cast<size_t>(y) * w + x]; }
};

// Interleaved 8-bit RGB image.
struct RgbImage {
  int w = 0, h = 0;
  std::vector<uint8_t> px;

  RgbImage() = default;
  RgbImage(int w_, int h_) : w(w_), h(h_), px(static_cast<size_t>(w_) * h_ * 3, 0) {
    if (w_ < 1 || h_ < 1) throw ShapeError("image: invalid dims");
  }
  uint8_t* at(int x, int y) { return px.data() + (static_cast<size_t>(y) * w + x) * 3; }
  const uint8_t* at(int x, int y) const {
    return px.data() + (static_cast<size_t>(y) * w + x) * 3;
  }
};

// Binary portable pixmaps, maxval 255 only. Parse failures carry the byte
// offset of the offending data.
RgbImage read_ppm(const std::string& path);
void write_ppm(const std::string& path, const RgbImage& img);
ByteImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const ByteImage& img);

// [3,H,W] float tensor in [0,1] <-> 8-bit RGB.
Tensor tensor_from_rgb(const RgbImage& img);
RgbImage rgb_from_tensor(const Tensor& t);

}  // namespace sfc
