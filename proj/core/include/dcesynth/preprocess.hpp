#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dcesynth/data_model.hpp"
#include "dcesynth/image.hpp"

namespace dcesynth::preprocess {

/// Paired pre/post volumes with the binary tumor mask of one patient.
struct VolumeCase {
  Volume3D pre_volume;
  Volume3D post_volume;
  Volume3D mask_volume;
  std::string patient_id;
  Laterality laterality = Laterality::bilateral;
};

enum class SideSplit { none, midline };
enum class Side { left, right };

struct SlicePolicy {
  double adjacent_fraction = 0.20;
  SideSplit side_split = SideSplit::none;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Tumor-bearing axial indices plus round(fraction * tumor_count) adjacent
/// non-tumor indices, split before/after the tumor block with the odd one
/// placed before. Sorted, unique, clipped to the volume.
std::vector<int> select_slices(const Volume3D& mask_volume, const SlicePolicy& policy);

/// Per-image min-max normalization; a constant slice maps to all zeros.
SliceImage normalize_slice(const Image2D& raw);

/// 8-bit lossless grayscale PNG.
void export_slice(const SliceImage& image, const std::filesystem::path& path);

/// Left keeps columns [0, floor(W/2)); right keeps the remaining columns.
SlicePair crop_single_breast(const SlicePair& pair, Side side);

struct BuildResult {
  DatasetManifest manifest;
  std::vector<std::string> warnings;
};

/// Extracts, normalizes and exports every selected slice of every case and
/// writes manifest.jsonl / header.json under `out_dir`.
BuildResult build_dataset(const std::vector<VolumeCase>& cases, const SlicePolicy& policy,
                          const std::map<std::string, Split>& split_map,
                          const std::filesystem::path& out_dir);

/// Case directory layout: <dir>/case.json with patient_id, laterality, split
/// and file names for pre/post/mask volumes.
struct CaseOnDisk {
  VolumeCase volume_case;
  Split split = Split::train;
};

CaseOnDisk read_case_dir(const std::filesystem::path& dir);
void write_case_dir(const VolumeCase& volume_case, Split split, const std::filesystem::path& dir);

/// Every immediate subdirectory holding a case.json, sorted by name.
std::vector<CaseOnDisk> read_cases(const std::filesystem::path& root);

}  // namespace dcesynth::preprocess
