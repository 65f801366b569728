#pragma once

#include "enscope/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace enscope {

/// Decoded 8-bit image, channels = 1 (gray) or 3 (RGB), row-major.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int row, int col, int channel = 0) const {
    return pixels[static_cast<std::size_t>((row * width + col) * channels + channel)];
  }
};

/// Gray level of a density: round(255 (1 - x)), x clamped to [0,1]. Solid is black.
std::uint8_t density_gray(double x);

/// Grayscale PNG of an nely x nelx density field.
std::string density_png(const Matrix& field);

/// RGB PNG of a signed field on a diverging blue-white-red ramp scaled by
/// max |value| (zero maps to white).
std::string signed_png(const Matrix& field);

std::string encode_png(const Image& image);
Image decode_png(const std::string& bytes);

}  // namespace enscope
