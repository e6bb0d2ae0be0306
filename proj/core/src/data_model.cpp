#include "dcesynth/data_model.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dcesynth/png_io.hpp"
#include "dcesynth/rng.hpp"

namespace dcesynth {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(Laterality laterality) {
  return laterality == Laterality::unilateral ? "unilateral" : "bilateral";
}

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

Laterality parse_laterality(std::string_view text) {
  if (text == "unilateral") return Laterality::unilateral;
  if (text == "bilateral") return Laterality::bilateral;
  throw ContractError("unknown laterality '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  throw ContractError("unknown split '" + std::string(text) + "'");
}

bool SliceImage::satisfies_invariants(const Image2D& pixels) {
  if (pixels.height() < kMinSliceExtent || pixels.width() < kMinSliceExtent) {
    return false;
  }
  for (float p : pixels.pixels()) {
    if (!(p >= 0.0f && p <= 1.0f)) return false;
  }
  return true;
}

SliceImage::SliceImage(Image2D pixels, BitSource source) : pixels_(std::move(pixels)), source_(source) {
  if (pixels_.height() < kMinSliceExtent || pixels_.width() < kMinSliceExtent) {
    throw ContractError("slice must be at least 16x16, got " + std::to_string(pixels_.height()) +
                        "x" + std::to_string(pixels_.width()));
  }
  for (float p : pixels_.pixels()) {
    if (!(p >= 0.0f && p <= 1.0f)) {
      throw ContractError("slice pixel outside [0,1]: " + std::to_string(p));
    }
  }
}

bool mask_has_voxels(const Image2D& mask) {
  for (float v : mask.pixels()) {
    if (v != 0.0f) return true;
  }
  return false;
}

std::vector<std::string> validate_pair(const SlicePair& pair) {
  std::vector<std::string> violations;
  if (!pair.pre.pixels().same_shape(pair.post.pixels())) {
    violations.emplace_back("shape_mismatch:post");
  }
  if (pair.mask) {
    if (!pair.mask->same_shape(pair.pre.pixels())) {
      violations.emplace_back("shape_mismatch:mask");
    }
    for (float v : pair.mask->pixels()) {
      if (v != 0.0f && v != 1.0f) {
        violations.emplace_back("mask_not_binary");
        break;
      }
    }
  }
  const bool has_voxels = pair.mask && mask_has_voxels(*pair.mask);
  if (pair.tumor_label && !pair.mask) {
    violations.emplace_back("tumor_label_without_mask");
  } else if (pair.tumor_label && !has_voxels) {
    violations.emplace_back("tumor_label_without_mask_voxels");
  } else if (!pair.tumor_label && has_voxels) {
    violations.emplace_back("mask_voxels_without_tumor_label");
  }
  return violations;
}

SubtractionImage::SubtractionImage(Image2D pixels) : pixels_(std::move(pixels)) {
  for (float p : pixels_.pixels()) {
    if (!(p >= -2.0f && p <= 2.0f)) {
      throw ContractError("subtraction pixel outside [-2,2]: " + std::to_string(p));
    }
  }
}

SubtractionImage SubtractionImage::from_pair(const SlicePair& pair) {
  const auto& pre = pair.pre.pixels();
  const auto& post = pair.post.pixels();
  if (!pre.same_shape(post)) {
    throw ContractError("pre/post shape mismatch");
  }
  Image2D sub(pre.height(), pre.width());
  for (std::size_t i = 0; i < sub.size(); ++i) {
    sub.pixels()[i] = (post.pixels()[i] - pre.pixels()[i]) / kScale;
  }
  return SubtractionImage(std::move(sub));
}

std::vector<ManifestRecord> DatasetManifest::records_in(Split split) const {
  std::vector<ManifestRecord> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

void check_patient_disjoint(const DatasetManifest& manifest) {
  std::map<std::string, Split> first_split;
  for (const auto& r : manifest.records) {
    auto [it, inserted] = first_split.emplace(r.patient_id, r.split);
    if (!inserted && it->second != r.split) {
      throw ContractError("patient '" + r.patient_id + "' appears in both train and test splits");
    }
  }
}

namespace {

ordered_json record_to_json(const ManifestRecord& r) {
  ordered_json j;
  j["relative_path_pre"] = r.relative_path_pre;
  j["relative_path_post"] = r.relative_path_post;
  j["relative_path_mask"] = r.relative_path_mask ? ordered_json(*r.relative_path_mask) : ordered_json(nullptr);
  j["patient_id"] = r.patient_id;
  j["slice_index"] = r.slice_index;
  j["tumor_label"] = r.tumor_label;
  j["laterality"] = to_string(r.laterality);
  j["split"] = to_string(r.split);
  return j;
}

ManifestRecord record_from_json(const ordered_json& j) {
  ManifestRecord r;
  r.relative_path_pre = j.at("relative_path_pre").get<std::string>();
  r.relative_path_post = j.at("relative_path_post").get<std::string>();
  if (j.contains("relative_path_mask") && !j.at("relative_path_mask").is_null()) {
    r.relative_path_mask = j.at("relative_path_mask").get<std::string>();
  }
  r.patient_id = j.at("patient_id").get<std::string>();
  r.slice_index = j.at("slice_index").get<int>();
  r.tumor_label = j.at("tumor_label").get<bool>();
  r.laterality = parse_laterality(j.at("laterality").get<std::string>());
  r.split = parse_split(j.at("split").get<std::string>());
  return r;
}

}  // namespace

fs::path manifest_root(const fs::path& location) {
  if (fs::is_directory(location)) return location;
  return location.has_parent_path() ? location.parent_path() : fs::path(".");
}

void write_manifest(const DatasetManifest& manifest, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / kManifestFileName, std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / kManifestFileName).string());
    for (const auto& r : manifest.records) {
      out << record_to_json(r).dump() << '\n';
    }
  }
  ordered_json header;
  header["schema_version"] = manifest.schema_version;
  header["seed"] = manifest.seed;
  header["record_count"] = manifest.records.size();
  std::ofstream out(dir / kManifestHeaderName, std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / kManifestHeaderName).string());
  out << header.dump(2) << '\n';
}

DatasetManifest read_manifest(const fs::path& location, bool verify_paths) {
  const fs::path root = manifest_root(location);
  const fs::path header_path = root / kManifestHeaderName;
  const fs::path records_path = root / kManifestFileName;

  DatasetManifest manifest;
  {
    std::ifstream in(header_path);
    if (!in) throw IoError("missing manifest header " + header_path.string());
    const auto header = ordered_json::parse(in);
    manifest.schema_version = header.at("schema_version").get<int>();
    manifest.seed = header.at("seed").get<std::uint64_t>();
    if (manifest.schema_version != DatasetManifest::kSchemaVersion) {
      throw IoError("unsupported manifest schema_version " + std::to_string(manifest.schema_version));
    }
  }
  std::ifstream in(records_path);
  if (!in) throw IoError("missing manifest " + records_path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      manifest.records.push_back(record_from_json(ordered_json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(records_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (verify_paths) {
    for (const auto& r : manifest.records) {
      for (const auto* rel : {&r.relative_path_pre, &r.relative_path_post}) {
        if (!fs::exists(root / *rel)) throw IoError("manifest references missing file " + (root / *rel).string());
      }
      if (r.relative_path_mask && !fs::exists(root / *r.relative_path_mask)) {
        throw IoError("manifest references missing file " + (root / *r.relative_path_mask).string());
      }
    }
  }
  return manifest;
}

SlicePair load_pair(const fs::path& root, const ManifestRecord& record) {
  SlicePair pair;
  pair.pre = SliceImage(read_png_gray(root / record.relative_path_pre), BitSource::u8_rescaled);
  pair.post = SliceImage(read_png_gray(root / record.relative_path_post), BitSource::u8_rescaled);
  if (record.relative_path_mask) {
    Image2D mask = read_png_gray(root / *record.relative_path_mask);
    for (float& v : mask.pixels()) v = v >= 0.5f ? 1.0f : 0.0f;
    pair.mask = std::move(mask);
  }
  pair.patient_id = record.patient_id;
  pair.slice_index = record.slice_index;
  pair.tumor_label = record.tumor_label;
  pair.laterality = record.laterality;
  return pair;
}

std::string manifest_hash(const fs::path& location) {
  const fs::path records_path = manifest_root(location) / kManifestFileName;
  std::ifstream in(records_path, std::ios::binary);
  if (!in) throw IoError("missing manifest " + records_path.string());
  std::ostringstream bytes;
  bytes << in.rdbuf();
  return hex64(fnv1a64(bytes.str()));
}

}  // namespace dcesynth
