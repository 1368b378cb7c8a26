#pragma once

#include <cstddef>
#include <vector>

namespace lungcrowd {

/// Row-major 2D raster.
template <typename T>
struct Image2D {
  int width = 0;
  int height = 0;
  std::vector<T> pixels;

  Image2D() = default;
  Image2D(int w, int h, T fill = T{})
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  T& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  const T& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const Image2D&, const Image2D&) = default;
};

}  // namespace lungcrowd
