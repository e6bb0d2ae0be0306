#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dcesynth/error.hpp"

namespace dcesynth {

/// Dense row-major 2D grid of floats. The general-purpose pixel container
/// used outside the model; no range invariant attached.
class Image2D {
 public:
  Image2D() = default;
  Image2D(int height, int width, float fill = 0.0f);
  Image2D(int height, int width, std::vector<float> pixels);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  float& operator()(int row, int col) { return pixels_[index(row, col)]; }
  float operator()(int row, int col) const { return pixels_[index(row, col)]; }

  std::span<float> pixels() { return pixels_; }
  std::span<const float> pixels() const { return pixels_; }
  const std::vector<float>& vector() const { return pixels_; }

  bool same_shape(const Image2D& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  /// Copy of rows [row0, row0 + rows) and columns [col0, col0 + cols).
  Image2D crop(int row0, int col0, int rows, int cols) const;

  float min() const;
  float max() const;

  friend bool operator==(const Image2D&, const Image2D&) = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> pixels_;
};

/// Dense 3D grid indexed (slice, row, col); slices are axial.
class Volume3D {
 public:
  Volume3D() = default;
  Volume3D(int depth, int height, int width, float fill = 0.0f);
  Volume3D(int depth, int height, int width, std::vector<float> voxels);

  int depth() const { return depth_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return voxels_.size(); }

  float& operator()(int z, int row, int col) { return voxels_[index(z, row, col)]; }
  float operator()(int z, int row, int col) const { return voxels_[index(z, row, col)]; }

  std::span<float> voxels() { return voxels_; }
  std::span<const float> voxels() const { return voxels_; }

  bool same_shape(const Volume3D& other) const {
    return depth_ == other.depth_ && height_ == other.height_ && width_ == other.width_;
  }

  Image2D slice(int z) const;

  friend bool operator==(const Volume3D&, const Volume3D&) = default;

 private:
  std::size_t index(int z, int row, int col) const {
    return (static_cast<std::size_t>(z) * static_cast<std::size_t>(height_) +
            static_cast<std::size_t>(row)) *
               static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int depth_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> voxels_;
};

}  // namespace dcesynth
