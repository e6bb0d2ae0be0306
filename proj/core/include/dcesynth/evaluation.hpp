#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcesynth/data_model.hpp"
#include "dcesynth/features.hpp"
#include "dcesynth/image.hpp"
#include "dcesynth/metrics.hpp"

namespace dcesynth::eval {

enum class Mode { full_image, roi };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);
/// "full,roi" style list; "full" and "full_image" are both accepted.
std::vector<Mode> parse_modes(std::string_view list);

/// Images the generated set is compared against.
enum class Reference { post, sub };

std::string_view to_string(Reference reference);
Reference parse_reference(std::string_view text);

inline constexpr int kDefaultRoiMargin = 4;
inline constexpr int kRoiFeatureSize = 64;

struct Box {
  int row0 = 0;
  int col0 = 0;
  int rows = 0;
  int cols = 0;

  friend bool operator==(const Box&, const Box&) = default;
};

/// Tight bounding box of mask pixels >= 0.5, grown by `margin` and clipped to
/// the image. nullopt for an empty mask.
std::optional<Box> roi_box(const Image2D& mask, int margin = kDefaultRoiMargin);

/// Crop of `img` to roi_box(mask, margin). Throws on an empty mask.
Image2D roi_view(const Image2D& img, const Image2D& mask, int margin = kDefaultRoiMargin);

/// Min-max rescale to [0,1]; constant images map to zeros.
Image2D minmax_rescale(const Image2D& img);

struct Summary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

/// Mean and population std. Infinite entries (identical-image PSNR) give an
/// infinite mean; the std is 0 when every entry is infinite and infinite
/// otherwise. An empty list yields NaN for both.
Summary summarize(const std::vector<double>& values);

struct PerImage {
  std::string patient_id;
  int slice_index = 0;
  PairedMetrics metrics;

  friend bool operator==(const PerImage& a, const PerImage& b);
};

struct MetricSet {
  Summary mae;
  Summary ssim;
  Summary psnr;
  Summary lpips;
  std::optional<double> fid;
  std::optional<double> frd;
};

struct ReportRow {
  std::string row_name;
  Mode mode = Mode::full_image;
  bool baseline = false;
  MetricSet metrics;
  std::vector<PerImage> per_image;
};

struct EvalReport {
  std::string manifest_hash;
  std::string model_checkpoint_id;
  Reference reference = Reference::post;
  int roi_margin = kDefaultRoiMargin;
  std::vector<ReportRow> rows;

  const ReportRow* find(std::string_view row_name, Mode mode) const;
};

std::string baseline_row_name(Reference reference);

/// Row metrics from gen/real pairs: paired metrics per image plus FID over
/// pooled features and FRD over z-scored radiomics of the two sets.
/// `resize_for_fid` > 0 resizes every image to that square size first.
ReportRow compute_row(std::string row_name, Mode mode, bool baseline, const std::vector<Image2D>& gen,
                      const std::vector<Image2D>& real, const std::vector<std::pair<std::string, int>>& ids,
                      const features::FeatureExtractor& extractor, int resize_for_fid = 0);

struct EvalOptions {
  std::vector<Mode> modes{Mode::full_image, Mode::roi};
  Reference reference = Reference::post;
  std::string row_name = "Generated";
  std::string model_checkpoint_id;
  int roi_margin = kDefaultRoiMargin;
  Split split = Split::test;
  std::shared_ptr<const features::FeatureExtractor> extractor = features::default_extractor();
};

/// Compares `<generated_dir>/<patient>_<slice>.png` against the real test
/// images and emits the model row and the matching baseline row per mode.
/// Throws NotFoundError listing every missing generated file.
EvalReport evaluate_run(const std::filesystem::path& manifest, const std::filesystem::path& generated_dir,
                        const EvalOptions& options = {});

nlohmann::ordered_json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::ordered_json& j);
void write_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_report(const std::filesystem::path& path);

/// Concatenates rows of several reports; baseline rows already present are
/// not repeated.
EvalReport merge_reports(const std::vector<EvalReport>& reports);

/// Fixed-width table: one line per row, mean +- std for paired metrics.
std::string render_table(const EvalReport& report);

/// row_name,mode,baseline,patient_id,slice_index,mae,ssim,psnr,lpips
void write_per_case_csv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace dcesynth::eval
