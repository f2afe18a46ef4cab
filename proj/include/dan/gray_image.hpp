#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace dan {

/// Single-channel image with double-valued pixels in row-major order. Pixel
/// (x, y) sits at integer coordinates; intensities are nominally in [0, 1]
/// but intermediate processing (standardization) may leave that range.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  GrayImage() = default;

  GrayImage(int w, int h, double value = 0.0) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("image extents must be positive");
    pixels.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), value);
  }

  bool empty() const { return pixels.empty(); }
  bool contains(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  bool same_size(const GrayImage& other) const { return width == other.width && height == other.height; }

  double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

}  // namespace dan
