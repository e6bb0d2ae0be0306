#include "dcesynth/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "dcesynth/error.hpp"

namespace dcesynth {

namespace {

void write_image(png_image& image, const void* buffer, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  if (png_image_write_to_file(&image, path.string().c_str(), 0, buffer, 0, nullptr) == 0) {
    std::string message = image.message;
    png_image_free(&image);
    throw IoError("failed to write PNG " + path.string() + ": " + message);
  }
}

std::vector<std::uint8_t> read_image(const std::filesystem::path& path, png_uint_32 format,
                                     int& height, int& width) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&image, path.string().c_str()) == 0) {
    throw IoError("failed to open PNG " + path.string() + ": " + image.message);
  }
  image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr) == 0) {
    std::string message = image.message;
    png_image_free(&image);
    throw IoError("failed to decode PNG " + path.string() + ": " + message);
  }
  height = static_cast<int>(image.height);
  width = static_cast<int>(image.width);
  return buffer;
}

}  // namespace

std::uint8_t to_u8(float unit_value) {
  const double clamped = std::clamp(static_cast<double>(unit_value), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

void write_png_gray(const Image2D& unit_image, const std::filesystem::path& path) {
  std::vector<std::uint8_t> codes(unit_image.size());
  std::transform(unit_image.pixels().begin(), unit_image.pixels().end(), codes.begin(), to_u8);

  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(unit_image.width());
  image.height = static_cast<png_uint_32>(unit_image.height());
  image.format = PNG_FORMAT_GRAY;
  write_image(image, codes.data(), path);
}

Image2D read_png_gray(const std::filesystem::path& path) {
  int height = 0;
  int width = 0;
  auto codes = read_image(path, PNG_FORMAT_GRAY, height, width);
  std::vector<float> pixels(codes.size());
  std::transform(codes.begin(), codes.end(), pixels.begin(),
                 [](std::uint8_t c) { return static_cast<float>(c) / 255.0f; });
  return Image2D(height, width, std::move(pixels));
}

void RgbImage::set(int row, int col, std::array<std::uint8_t, 3> color) {
  const auto offset = (static_cast<std::size_t>(row) * width + col) * 3;
  std::copy(color.begin(), color.end(), rgb.begin() + static_cast<std::ptrdiff_t>(offset));
}

std::array<std::uint8_t, 3> RgbImage::get(int row, int col) const {
  const auto offset = (static_cast<std::size_t>(row) * width + col) * 3;
  return {rgb[offset], rgb[offset + 1], rgb[offset + 2]};
}

void write_png_rgb(const RgbImage& raster, const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(raster.width);
  image.height = static_cast<png_uint_32>(raster.height);
  image.format = PNG_FORMAT_RGB;
  write_image(image, raster.rgb.data(), path);
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
  RgbImage out;
  out.rgb = read_image(path, PNG_FORMAT_RGB, out.height, out.width);
  return out;
}

}  // namespace dcesynth
