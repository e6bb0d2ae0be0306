#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dcesynth/image.hpp"

namespace dcesynth {

/// Unit float -> 8-bit code with round-half-up; values are clamped to [0,1].
std::uint8_t to_u8(float unit_value);

/// Lossless 8-bit grayscale PNG; pixel p stored as round-half-up(p * 255).
void write_png_gray(const Image2D& unit_image, const std::filesystem::path& path);

/// Reads any 8-bit PNG as grayscale and maps codes to [0,1] by dividing by 255.
Image2D read_png_gray(const std::filesystem::path& path);

/// Interleaved 8-bit RGB raster used for figure output.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3, 0) {}

  void set(int row, int col, std::array<std::uint8_t, 3> color);
  std::array<std::uint8_t, 3> get(int row, int col) const;
};

void write_png_rgb(const RgbImage& image, const std::filesystem::path& path);
RgbImage read_png_rgb(const std::filesystem::path& path);

}  // namespace dcesynth
