#pragma once

#include <png.h>

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <string_view>
#include <vector>

#include "mles/core/error.hpp"

namespace mles {

struct RgbImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB, 3 bytes per pixel
};

inline std::string encode_png(const RgbImage& img) {
  if (img.width == 0 || img.height == 0 || img.pixels.size() != std::size_t{img.width} * img.height * 3) {
    fail(ErrorCode::InvalidArgument, "pixel buffer does not match image dimensions");
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = img.width;
  image.height = img.height;
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    fail(ErrorCode::IoError, std::string("png sizing failed: ") + image.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    fail(ErrorCode::IoError, std::string("png encoding failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

inline RgbImage decode_png(std::string_view bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    fail(ErrorCode::InvalidArgument, std::string("not a PNG: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = image.width;
  out.height = image.height;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    fail(ErrorCode::InvalidArgument, std::string("PNG decode failed: ") + image.message);
  }
  return out;
}

/// 2x2 box filter; odd trailing rows/columns are averaged with what exists.
inline RgbImage downscale_half(const RgbImage& img) {
  RgbImage out;
  out.width = std::max<std::uint32_t>(1, (img.width + 1) / 2);
  out.height = std::max<std::uint32_t>(1, (img.height + 1) / 2);
  out.pixels.resize(std::size_t{out.width} * out.height * 3);
  for (std::uint32_t y = 0; y < out.height; ++y) {
    for (std::uint32_t x = 0; x < out.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        unsigned sum = 0;
        unsigned n = 0;
        for (std::uint32_t dy = 0; dy < 2; ++dy) {
          for (std::uint32_t dx = 0; dx < 2; ++dx) {
            const auto sx = 2 * x + dx;
            const auto sy = 2 * y + dy;
            if (sx >= img.width || sy >= img.height) continue;
            sum += img.pixels[(std::size_t{sy} * img.width + sx) * 3 + c];
            ++n;
          }
        }
        out.pixels[(std::size_t{y} * out.width + x) * 3 + c] = static_cast<std::uint8_t>(sum / n);
      }
    }
  }
  return out;
}

/// Halves the resolution until the encoded PNG fits in max_bytes. Returns the
/// input untouched when it already fits.
inline std::string fit_png(std::string_view png, std::size_t max_bytes) {
  if (png.size() <= max_bytes) return std::string(png);
  auto img = decode_png(png);
  std::string encoded;
  do {
    img = downscale_half(img);
    encoded = encode_png(img);
  } while (encoded.size() > max_bytes && (img.width > 1 || img.height > 1));
  if (encoded.size() > max_bytes) fail(ErrorCode::InvalidArgument, "image cannot be reduced below the size limit");
  return encoded;
}

} // namespace mles
