#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dcesynth/image.hpp"

namespace dcesynth {

enum class BitSource { float_native, u8_rescaled };
enum class Laterality { unilateral, bilateral };
enum class Split { train, test };

std::string_view to_string(Laterality laterality);
std::string_view to_string(Split split);
Laterality parse_laterality(std::string_view text);
Split parse_split(std::string_view text);

inline constexpr int kMinSliceExtent = 16;

/// Unit-interval image. Construction enforces the range and size invariants.
class SliceImage {
 public:
  SliceImage() = default;
  explicit SliceImage(Image2D pixels, BitSource source = BitSource::float_native);

  const Image2D& pixels() const { return pixels_; }
  int height() const { return pixels_.height(); }
  int width() const { return pixels_.width(); }
  BitSource bit_source() const { return source_; }

  /// Non-throwing check of the SliceImage invariants.
  static bool satisfies_invariants(const Image2D& pixels);

 private:
  Image2D pixels_;
  BitSource source_ = BitSource::float_native;
};

/// Aligned pre/post slices with an optional binary tumor mask. Kept as a
/// plain aggregate so malformed pairs can be represented and reported by
/// validate_pair().
struct SlicePair {
  SliceImage pre;
  SliceImage post;
  std::optional<Image2D> mask;
  std::string patient_id;
  int slice_index = 0;
  bool tumor_label = false;
  Laterality laterality = Laterality::bilateral;
};

/// Returns the names of every violated SlicePair invariant; empty when valid.
std::vector<std::string> validate_pair(const SlicePair& pair);

bool mask_has_voxels(const Image2D& mask);

/// Scaled residual (post - pre) / 0.5, bounded by +-2.
class SubtractionImage {
 public:
  static constexpr float kScale = 0.5f;

  explicit SubtractionImage(Image2D pixels);
  static SubtractionImage from_pair(const SlicePair& pair);

  const Image2D& pixels() const { return pixels_; }

 private:
  Image2D pixels_;
};

struct ManifestRecord {
  std::string relative_path_pre;
  std::string relative_path_post;
  std::optional<std::string> relative_path_mask;
  std::string patient_id;
  int slice_index = 0;
  bool tumor_label = false;
  Laterality laterality = Laterality::bilateral;
  Split split = Split::train;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct DatasetManifest {
  static constexpr int kSchemaVersion = 1;

  int schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  std::vector<ManifestRecord> records;

  std::vector<ManifestRecord> records_in(Split split) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline constexpr std::string_view kManifestFileName = "manifest.jsonl";
inline constexpr std::string_view kManifestHeaderName = "header.json";

/// Throws ContractError naming the first patient found in both splits.
void check_patient_disjoint(const DatasetManifest& manifest);

/// Writes manifest.jsonl and header.json into `dir`.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& dir);

/// Reads a manifest from its directory (or from the manifest.jsonl path).
/// When `verify_paths` is set every referenced file must exist.
DatasetManifest read_manifest(const std::filesystem::path& location, bool verify_paths = true);

/// Directory holding manifest.jsonl for either form accepted by read_manifest().
std::filesystem::path manifest_root(const std::filesystem::path& location);

/// Loads the images referenced by a record into a SlicePair.
SlicePair load_pair(const std::filesystem::path& root, const ManifestRecord& record);

/// FNV-1a over the manifest file bytes; stable content fingerprint.
std::string manifest_hash(const std::filesystem::path& location);

}  // namespace dcesynth
