#pragma once

#include <string>

#include "core/image.hpp"

namespace foodpipe::io {

// 8-bit 3-channel PNG.
RgbImage load_rgb_png(const std::string& path);
void save_rgb_png(const std::string& path, const RgbImage& image);

// 16-bit single-channel PNG. Values are rounded to the nearest integer on
// save; out-of-range values are an error. energy_scale travels in the
// manifest, not the file.
EnergyMap load_energy_png(const std::string& path, double energy_scale);
void save_energy_png(const std::string& path, const EnergyMap& map);

// Area interpolation when shrinking, bilinear when growing.
RgbImage resize_rgb(const RgbImage& image, int out_width, int out_height);
EnergyMap resize_energy(const EnergyMap& map, int out_width, int out_height);

struct Color {
  uint8_t r = 0, g = 0, b = 0;
};

void draw_rect(RgbImage& image, int x1, int y1, int x2, int y2, Color color, int thickness);
void draw_text(RgbImage& image, const std::string& text, int x, int y, Color color,
               double scale);
void draw_line(RgbImage& image, int x1, int y1, int x2, int y2, Color color, int thickness);
void draw_filled_circle(RgbImage& image, int cx, int cy, int radius, Color color);

}  // namespace foodpipe::io
