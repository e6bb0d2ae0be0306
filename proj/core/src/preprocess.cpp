#include "dcesynth/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "dcesynth/png_io.hpp"
#include "dcesynth/volume_io.hpp"

namespace dcesynth::preprocess {

namespace fs = std::filesystem;

void SlicePolicy::validate() const {
  if (!(adjacent_fraction >= 0.0 && adjacent_fraction <= 1.0)) {
    throw ContractError("adjacent_fraction must lie in [0,1]");
  }
}

namespace {

bool slice_has_voxels(const Volume3D& mask, int z) {
  const auto plane = static_cast<std::size_t>(mask.height()) * mask.width();
  const auto voxels = mask.voxels().subspan(plane * static_cast<std::size_t>(z), plane);
  return std::any_of(voxels.begin(), voxels.end(), [](float v) { return v != 0.0f; });
}

Image2D binarize(Image2D mask) {
  for (float& v : mask.pixels()) v = v != 0.0f ? 1.0f : 0.0f;
  return mask;
}

long mask_count(const Image2D& mask, int col0, int col1) {
  long n = 0;
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = col0; c < col1; ++c) n += mask(r, c) != 0.0f;
  }
  return n;
}

}  // namespace

std::vector<int> select_slices(const Volume3D& mask_volume, const SlicePolicy& policy) {
  policy.validate();
  if (mask_volume.size() == 0) throw ContractError("mask volume is empty");

  std::vector<int> tumor;
  for (int z = 0; z < mask_volume.depth(); ++z) {
    if (slice_has_voxels(mask_volume, z)) tumor.push_back(z);
  }
  if (tumor.empty()) return {};

  const long adjacent = std::lround(policy.adjacent_fraction * static_cast<double>(tumor.size()));
  const long after = adjacent / 2;
  const long before = adjacent - after;

  std::set<int> selected(tumor.begin(), tumor.end());
  for (long k = 1; k <= before && tumor.front() - k >= 0; ++k) {
    selected.insert(tumor.front() - static_cast<int>(k));
  }
  for (long k = 1; k <= after && tumor.back() + k < mask_volume.depth(); ++k) {
    selected.insert(tumor.back() + static_cast<int>(k));
  }
  return {selected.begin(), selected.end()};
}

SliceImage normalize_slice(const Image2D& raw) {
  double lo = 0.0;
  double hi = 0.0;
  bool first = true;
  for (float v : raw.pixels()) {
    if (!std::isfinite(v)) throw ContractError("normalize_slice: non-finite input value");
    if (first) {
      lo = hi = v;
      first = false;
    }
    lo = std::min(lo, static_cast<double>(v));
    hi = std::max(hi, static_cast<double>(v));
  }
  Image2D out(raw.height(), raw.width(), 0.0f);
  if (hi > lo) {
    const double range = hi - lo;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double v = (static_cast<double>(raw.pixels()[i]) - lo) / range;
      out.pixels()[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return SliceImage(std::move(out));
}

void export_slice(const SliceImage& image, const fs::path& path) { write_png_gray(image.pixels(), path); }

SlicePair crop_single_breast(const SlicePair& pair, Side side) {
  const int width = pair.pre.width();
  if (width < 2) throw ContractError("crop_single_breast: width must be at least 2");
  const int half = width / 2;
  const int col0 = side == Side::left ? 0 : half;
  const int cols = side == Side::left ? half : width - half;
  const int rows = pair.pre.height();

  SlicePair out;
  out.pre = SliceImage(pair.pre.pixels().crop(0, col0, rows, cols), pair.pre.bit_source());
  out.post = SliceImage(pair.post.pixels().crop(0, col0, rows, cols), pair.post.bit_source());
  if (pair.mask) out.mask = pair.mask->crop(0, col0, rows, cols);
  out.patient_id = pair.patient_id;
  out.slice_index = pair.slice_index;
  out.tumor_label = out.mask && mask_has_voxels(*out.mask);
  out.laterality = Laterality::unilateral;
  return out;
}

BuildResult build_dataset(const std::vector<VolumeCase>& cases, const SlicePolicy& policy,
                          const std::map<std::string, Split>& split_map, const fs::path& out_dir) {
  policy.validate();
  for (const auto& c : cases) {
    if (!split_map.contains(c.patient_id)) {
      throw ContractError("split_map has no entry for patient '" + c.patient_id + "'");
    }
  }

  BuildResult result;
  result.manifest.seed = policy.rng_seed;
  for (const auto& c : cases) {
    if (!c.pre_volume.same_shape(c.post_volume) || !c.pre_volume.same_shape(c.mask_volume)) {
      throw ContractError("volume shapes differ for patient '" + c.patient_id + "'");
    }
    const auto indices = select_slices(c.mask_volume, policy);
    if (indices.empty()) {
      result.warnings.push_back("patient '" + c.patient_id + "' has no tumor voxels; case skipped");
      continue;
    }

    // Cases without a tumor on the current slice keep the side where most
    // of the lesion volume lies.
    Side case_side = Side::left;
    if (policy.side_split == SideSplit::midline) {
      long left = 0;
      long right = 0;
      for (int z = 0; z < c.mask_volume.depth(); ++z) {
        const Image2D m = c.mask_volume.slice(z);
        left += mask_count(m, 0, m.width() / 2);
        right += mask_count(m, m.width() / 2, m.width());
      }
      case_side = right > left ? Side::right : Side::left;
    }

    for (int z : indices) {
      SlicePair pair;
      pair.pre = normalize_slice(c.pre_volume.slice(z));
      pair.post = normalize_slice(c.post_volume.slice(z));
      pair.mask = binarize(c.mask_volume.slice(z));
      pair.patient_id = c.patient_id;
      pair.slice_index = z;
      pair.tumor_label = mask_has_voxels(*pair.mask);
      pair.laterality = c.laterality;

      if (policy.side_split == SideSplit::midline) {
        const Image2D& m = *pair.mask;
        const long left = mask_count(m, 0, m.width() / 2);
        const long right = mask_count(m, m.width() / 2, m.width());
        const Side side = left == right ? case_side : (right > left ? Side::right : Side::left);
        pair = crop_single_breast(pair, side);
      }

      const std::string stem = c.patient_id + "_" + std::to_string(z);
      ManifestRecord record;
      record.relative_path_pre = "images/" + stem + "_pre.png";
      record.relative_path_post = "images/" + stem + "_post.png";
      record.relative_path_mask = "masks/" + stem + ".png";
      record.patient_id = c.patient_id;
      record.slice_index = z;
      record.tumor_label = pair.tumor_label;
      record.laterality = pair.laterality;
      record.split = split_map.at(c.patient_id);

      export_slice(pair.pre, out_dir / record.relative_path_pre);
      export_slice(pair.post, out_dir / record.relative_path_post);
      write_png_gray(*pair.mask, out_dir / *record.relative_path_mask);
      result.manifest.records.push_back(std::move(record));
    }
  }
  check_patient_disjoint(result.manifest);
  write_manifest(result.manifest, out_dir);
  return result;
}

namespace {

constexpr const char* kCaseFile = "case.json";

}  // namespace

CaseOnDisk read_case_dir(const fs::path& dir) {
  std::ifstream in(dir / kCaseFile);
  if (!in) throw IoError("missing " + (dir / kCaseFile).string());
  const auto j = nlohmann::json::parse(in);
  CaseOnDisk out;
  auto& c = out.volume_case;
  c.patient_id = j.at("patient_id").get<std::string>();
  c.laterality = parse_laterality(j.at("laterality").get<std::string>());
  out.split = parse_split(j.at("split").get<std::string>());
  c.pre_volume = read_volume(dir / j.value("pre", std::string("pre.dvol")));
  c.post_volume = read_volume(dir / j.value("post", std::string("post.dvol")));
  c.mask_volume = read_volume(dir / j.value("mask", std::string("mask.dvol")));
  return out;
}

void write_case_dir(const VolumeCase& c, Split split, const fs::path& dir) {
  fs::create_directories(dir);
  write_raw_volume(c.pre_volume, dir / "pre.dvol");
  write_raw_volume(c.post_volume, dir / "post.dvol");
  write_raw_volume(c.mask_volume, dir / "mask.dvol");
  nlohmann::ordered_json j;
  j["patient_id"] = c.patient_id;
  j["laterality"] = to_string(c.laterality);
  j["split"] = to_string(split);
  j["pre"] = "pre.dvol";
  j["post"] = "post.dvol";
  j["mask"] = "mask.dvol";
  std::ofstream out(dir / kCaseFile);
  if (!out) throw IoError("cannot write " + (dir / kCaseFile).string());
  out << j.dump(2) << '\n';
}

std::vector<CaseOnDisk> read_cases(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("case directory not found: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / kCaseFile)) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<CaseOnDisk> cases;
  cases.reserve(dirs.size());
  for (const auto& d : dirs) cases.push_back(read_case_dir(d));
  return cases;
}

}  // namespace dcesynth::preprocess
