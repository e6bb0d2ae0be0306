#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "dcesynth/image.hpp"

namespace dcesynth {

/// Reader seam for 3D volumes. Implementations are selected by file
/// extension through read_volume().
class VolumeReader {
 public:
  virtual ~VolumeReader() = default;
  virtual bool accepts(const std::filesystem::path& path) const = 0;
  virtual Volume3D read(const std::filesystem::path& path) const = 0;
};

/// Raw container: 8-byte magic "DCEVOL1\n", uint32 LE depth/height/width,
/// then depth*height*width float32 LE voxels with the column index fastest.
class RawVolumeReader final : public VolumeReader {
 public:
  bool accepts(const std::filesystem::path& path) const override;
  Volume3D read(const std::filesystem::path& path) const override;
};

/// Uncompressed single-file NIfTI-1 (.nii). Supports the common scalar
/// datatypes and applies scl_slope/scl_inter. Orientation is not resolved:
/// the third axis is taken as axial.
class NiftiVolumeReader final : public VolumeReader {
 public:
  bool accepts(const std::filesystem::path& path) const override;
  Volume3D read(const std::filesystem::path& path) const override;
};

inline constexpr const char* kRawVolumeExtension = ".dvol";

void write_raw_volume(const Volume3D& volume, const std::filesystem::path& path);

/// Dispatches to the first built-in reader that accepts the path.
Volume3D read_volume(const std::filesystem::path& path);

}  // namespace dcesynth
