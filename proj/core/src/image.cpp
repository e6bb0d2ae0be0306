#include "dcesynth/image.hpp"

#include <algorithm>
#include <string>

namespace dcesynth {

namespace {

std::size_t checked_count(int a, int b, int c = 1) {
  if (a < 0 || b < 0 || c < 0) {
    throw ContractError("negative grid dimension");
  }
  return static_cast<std::size_t>(a) * static_cast<std::size_t>(b) * static_cast<std::size_t>(c);
}

}  // namespace

Image2D::Image2D(int height, int width, float fill)
    : height_(height), width_(width), pixels_(checked_count(height, width), fill) {}

Image2D::Image2D(int height, int width, std::vector<float> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  if (pixels_.size() != checked_count(height, width)) {
    throw ContractError("pixel count " + std::to_string(pixels_.size()) + " does not match " +
                        std::to_string(height) + "x" + std::to_string(width));
  }
}

Image2D Image2D::crop(int row0, int col0, int rows, int cols) const {
  if (row0 < 0 || col0 < 0 || rows < 0 || cols < 0 || row0 + rows > height_ ||
      col0 + cols > width_) {
    throw ContractError("crop window outside image bounds");
  }
  Image2D out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      out(r, c) = (*this)(row0 + r, col0 + c);
    }
  }
  return out;
}

float Image2D::min() const {
  return pixels_.empty() ? 0.0f : *std::min_element(pixels_.begin(), pixels_.end());
}

float Image2D::max() const {
  return pixels_.empty() ? 0.0f : *std::max_element(pixels_.begin(), pixels_.end());
}

Volume3D::Volume3D(int depth, int height, int width, float fill)
    : depth_(depth), height_(height), width_(width), voxels_(checked_count(depth, height, width), fill) {}

Volume3D::Volume3D(int depth, int height, int width, std::vector<float> voxels)
    : depth_(depth), height_(height), width_(width), voxels_(std::move(voxels)) {
  if (voxels_.size() != checked_count(depth, height, width)) {
    throw ContractError("voxel count does not match volume shape");
  }
}

Image2D Volume3D::slice(int z) const {
  if (z < 0 || z >= depth_) {
    throw ContractError("slice index " + std::to_string(z) + " out of range");
  }
  const auto plane = static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  const auto begin = voxels_.begin() + static_cast<std::ptrdiff_t>(plane * static_cast<std::size_t>(z));
  return Image2D(height_, width_, std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(plane)));
}

}  // namespace dcesynth
