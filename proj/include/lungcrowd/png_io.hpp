#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lungcrowd/image.hpp"

namespace lungcrowd {

/// RGBA pixel, 8 bits per channel.
struct Rgba {
  std::uint8_t r = 0, g = 0, b = 0, a = 0;
  friend bool operator==(const Rgba&, const Rgba&) = default;
};

/// Writes an 8-bit grayscale, non-interlaced PNG with fixed compression
/// settings, so identical pixels always produce identical bytes.
void write_gray_png(const std::filesystem::path& path, const Image2D<std::uint8_t>& image);

Image2D<std::uint8_t> read_gray_png(const std::filesystem::path& path);

/// Reads any PNG and converts it to RGBA.
Image2D<Rgba> read_rgba_png(const std::filesystem::path& path);
void write_rgba_png(const std::filesystem::path& path, const Image2D<Rgba>& image);

}  // namespace lungcrowd
