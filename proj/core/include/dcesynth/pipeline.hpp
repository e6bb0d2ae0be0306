#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcesynth/config.hpp"
#include "dcesynth/preprocess.hpp"

namespace dcesynth {

/// Raised when a pipeline stage fails; what() starts with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error("stage '" + stage + "' failed: " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// File-system-safe variant tag, e.g. "SUB-ROI(L)" -> "SUB-ROI_L".
std::string variant_slug(const training::VariantSpec& variant);

/// Reads every case directory under `cases_dir` and builds the slice dataset
/// in `out_dir`. With `single_breast` each slice keeps the half holding the
/// larger share of the tumor mask (the case's dominant half when tied).
preprocess::BuildResult preprocess_cases(const std::filesystem::path& cases_dir, const std::filesystem::path& out_dir,
                                         double adjacent_fraction, bool single_breast, std::uint64_t seed);

struct GridInfo {
  std::filesystem::path path;
  int rows = 0;
  int columns = 0;
  int cell_height = 0;
  int cell_width = 0;
  std::vector<std::string> labels;
};

/// Qualitative figure: one row per tumor-bearing test slice (at most
/// `max_rows`), columns pre, real post, then one generated image per entry
/// of `generated_dirs`. Lesion bounding boxes are drawn in green.
GridInfo write_qualitative_grid(const std::filesystem::path& manifest,
                                const std::vector<std::pair<std::string, std::filesystem::path>>& generated_dirs,
                                const std::filesystem::path& out_path, int max_rows = 4);

struct RunOptions {
  bool force = false;
  std::function<void(const std::string& stage, const std::string& message)> log;
};

inline constexpr std::string_view kRunManifestName = "run_manifest.json";

/// data -> train -> sample -> evaluate -> figures. Writes run_manifest.json
/// into the output directory and returns its contents. Refuses to rerun a
/// completed run with the same config hash unless `force` is set.
nlohmann::ordered_json run_pipeline(const ExperimentConfig& config, const RunOptions& options = {});

}  // namespace dcesynth
