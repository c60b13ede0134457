#pragma once

#include <cstdint>
#include <vector>

#include "core/common.hpp"

namespace foodpipe {

// 8-bit RGB raster, row-major, interleaved channels. Origin is top-left.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;  // size = width * height * 3

  static RgbImage filled(int width, int height, uint8_t r, uint8_t g, uint8_t b);

  uint8_t* pixel(int x, int y) { return data.data() + 3 * (static_cast<size_t>(y) * width + x); }
  const uint8_t* pixel(int x, int y) const {
    return data.data() + 3 * (static_cast<size_t>(y) * width + x);
  }
  bool empty() const { return width <= 0 || height <= 0; }
};

// Single-channel nonnegative raster aligned with its source image. Pixel
// values are in stored units; physical kcal per pixel = value * energy_scale.
struct EnergyMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // size = width * height
  double energy_scale = 1.0;

  static EnergyMap zeros(int width, int height, double energy_scale);

  float& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
  float at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
  bool empty() const { return width <= 0 || height <= 0; }
};

namespace raster {

// Copies the window [x0, x0+w) x [y0, y0+h) of a row-major interleaved raster.
template <typename T>
std::vector<T> crop(const std::vector<T>& src, int width, int height, int channels,
                    int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w < 1 || h < 1 || x0 + w > width || y0 + h > height) {
    raise(ErrorKind::InvalidArgument, "raster crop window [", x0, ",", y0, ",", x0 + w, ",",
          y0 + h, "] outside ", width, "x", height);
  }
  std::vector<T> out(static_cast<size_t>(w) * h * channels);
  for (int y = 0; y < h; ++y) {
    const T* in_row = src.data() + (static_cast<size_t>(y0 + y) * width + x0) * channels;
    T* out_row = out.data() + static_cast<size_t>(y) * w * channels;
    std::copy(in_row, in_row + static_cast<size_t>(w) * channels, out_row);
  }
  return out;
}

}  // namespace raster

}  // namespace foodpipe
