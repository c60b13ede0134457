#include "core/image.hpp"

namespace foodpipe {

RgbImage RgbImage::filled(int width, int height, uint8_t r, uint8_t g, uint8_t b) {
  RgbImage img;
  img.width = width;
  img.height = height;
  img.data.resize(static_cast<size_t>(width) * height * 3);
  for (size_t i = 0; i < img.data.size(); i += 3) {
    img.data[i] = r;
    img.data[i + 1] = g;
    img.data[i + 2] = b;
  }
  return img;
}

EnergyMap EnergyMap::zeros(int width, int height, double energy_scale) {
  EnergyMap m;
  m.width = width;
  m.height = height;
  m.values.assign(static_cast<size_t>(width) * height, 0.0f);
  m.energy_scale = energy_scale;
  return m;
}

}  // namespace foodpipe
