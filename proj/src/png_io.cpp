#include "lungcrowd/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <string>

#include "lungcrowd/error.hpp"

namespace lungcrowd {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) fail(ErrorKind::io, "cannot open " + path.string());
  return f;
}

void write_png(const std::filesystem::path& path, int width, int height, int color_type, int channels,
               const std::uint8_t* data) {
  auto file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorKind::io, "png allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::io, "png write failed for " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_write_info(png, info);
  const auto stride = static_cast<std::size_t>(width) * static_cast<std::size_t>(channels);
  for (int y = 0; y < height; ++y) png_write_row(png, data + stride * static_cast<std::size_t>(y));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Reads the file into 8-bit rows with the requested number of channels (1 or 4).
std::vector<std::uint8_t> read_png(const std::filesystem::path& path, int channels, int& width, int& height) {
  auto file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(ErrorKind::io, "png allocation failed");
  }
  std::vector<std::uint8_t> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::format, "malformed png " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (channels == 4) {
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    png_set_filler(png, 0xFF, PNG_FILLER_AFTER);
  } else {
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE)
      png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);
  const auto rowbytes = png_get_rowbytes(png, info);
  if (rowbytes != static_cast<std::size_t>(width) * static_cast<std::size_t>(channels)) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::format, "unsupported png layout in " + path.string());
  }
  pixels.resize(rowbytes * static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) png_read_row(png, pixels.data() + rowbytes * static_cast<std::size_t>(y), nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return pixels;
}

}  // namespace

void write_gray_png(const std::filesystem::path& path, const Image2D<std::uint8_t>& image) {
  write_png(path, image.width, image.height, PNG_COLOR_TYPE_GRAY, 1, image.pixels.data());
}

Image2D<std::uint8_t> read_gray_png(const std::filesystem::path& path) {
  Image2D<std::uint8_t> image;
  image.pixels = read_png(path, 1, image.width, image.height);
  return image;
}

Image2D<Rgba> read_rgba_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto raw = read_png(path, 4, w, h);
  Image2D<Rgba> image(w, h);
  for (std::size_t i = 0; i < image.pixels.size(); ++i)
    image.pixels[i] = Rgba{raw[4 * i], raw[4 * i + 1], raw[4 * i + 2], raw[4 * i + 3]};
  return image;
}

void write_rgba_png(const std::filesystem::path& path, const Image2D<Rgba>& image) {
  std::vector<std::uint8_t> raw(image.pixels.size() * 4);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    raw[4 * i] = image.pixels[i].r;
    raw[4 * i + 1] = image.pixels[i].g;
    raw[4 * i + 2] = image.pixels[i].b;
    raw[4 * i + 3] = image.pixels[i].a;
  }
  write_png(path, image.width, image.height, PNG_COLOR_TYPE_RGB_ALPHA, 4, raw.data());
}

}  // namespace lungcrowd
