#include "dcesynth/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "dcesynth/frechet.hpp"
#include "dcesynth/png_io.hpp"
#include "dcesynth/radiomics.hpp"
#include "dcesynth/tensor_bridge.hpp"
#include "dcesynth/training.hpp"

namespace dcesynth::eval {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string_view to_string(Mode mode) { return mode == Mode::full_image ? "full_image" : "roi"; }

Mode parse_mode(std::string_view text) {
  if (text == "full" || text == "full_image") return Mode::full_image;
  if (text == "roi") return Mode::roi;
  throw ConfigError("unknown evaluation mode '" + std::string(text) + "' (expected full or roi)");
}

std::vector<Mode> parse_modes(std::string_view list) {
  std::vector<Mode> modes;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto end = std::min(list.find(',', start), list.size());
    const auto item = list.substr(start, end - start);
    if (!item.empty()) {
      const Mode m = parse_mode(item);
      if (std::find(modes.begin(), modes.end(), m) == modes.end()) modes.push_back(m);
    }
    start = end + 1;
  }
  if (modes.empty()) throw ConfigError("no evaluation modes given");
  return modes;
}

std::string_view to_string(Reference reference) { return reference == Reference::post ? "post" : "sub"; }

Reference parse_reference(std::string_view text) {
  if (text == "post" || text == "PC") return Reference::post;
  if (text == "sub" || text == "SUB") return Reference::sub;
  throw ConfigError("unknown reference '" + std::string(text) + "' (expected post or sub)");
}

std::optional<Box> roi_box(const Image2D& mask, int margin) {
  if (margin < 0) throw ContractError("roi margin must be >= 0");
  int r0 = mask.height(), r1 = -1, c0 = mask.width(), c1 = -1;
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (mask(r, c) >= 0.5f) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
    }
  }
  if (r1 < 0) return std::nullopt;
  r0 = std::max(0, r0 - margin);
  c0 = std::max(0, c0 - margin);
  r1 = std::min(mask.height() - 1, r1 + margin);
  c1 = std::min(mask.width() - 1, c1 + margin);
  return Box{r0, c0, r1 - r0 + 1, c1 - c0 + 1};
}

Image2D roi_view(const Image2D& img, const Image2D& mask, int margin) {
  if (!img.same_shape(mask)) throw ContractError("roi_view: mask shape mismatch");
  const auto box = roi_box(mask, margin);
  if (!box) throw ContractError("roi_view: mask has no voxels");
  return img.crop(box->row0, box->col0, box->rows, box->cols);
}

Image2D minmax_rescale(const Image2D& img) {
  const float lo = img.min();
  const float hi = img.max();
  Image2D out(img.height(), img.width(), 0.0f);
  if (hi > lo) {
    for (std::size_t i = 0; i < img.size(); ++i) out.pixels()[i] = (img.pixels()[i] - lo) / (hi - lo);
  }
  return out;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) {
    s.mean = s.std = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  const auto n_inf = std::count_if(values.begin(), values.end(), [](double v) { return std::isinf(v); });
  if (n_inf > 0) {
    s.mean = std::numeric_limits<double>::infinity();
    s.std = n_inf == static_cast<long>(values.size()) ? 0.0 : std::numeric_limits<double>::infinity();
    return s;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

bool operator==(const PerImage& a, const PerImage& b) {
  auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
  return a.patient_id == b.patient_id && a.slice_index == b.slice_index && same(a.metrics.mae, b.metrics.mae) &&
         same(a.metrics.ssim, b.metrics.ssim) && same(a.metrics.psnr, b.metrics.psnr) &&
         same(a.metrics.lpips, b.metrics.lpips);
}

const ReportRow* EvalReport::find(std::string_view row_name, Mode mode) const {
  for (const auto& r : rows) {
    if (r.row_name == row_name && r.mode == mode) return &r;
  }
  return nullptr;
}

std::string baseline_row_name(Reference reference) {
  return reference == Reference::post ? "Real Pre vs Real PC" : "Real Pre vs Real SUB";
}

namespace {

Image2D resize_image(const Image2D& img, int size) {
  if (img.height() == size && img.width() == size) return img;
  torch::NoGradGuard no_grad;
  return to_image(features::resize_to(to_tensor(img), size));
}

std::optional<double> radiomics_distance(const std::vector<Image2D>& gen, const std::vector<Image2D>& real) {
  std::vector<std::vector<double>> fg, fr;
  for (const auto& im : gen) {
    if (auto f = radiomics_features(im)) fg.push_back(std::move(*f));
  }
  for (const auto& im : real) {
    if (auto f = radiomics_features(im)) fr.push_back(std::move(*f));
  }
  if (fg.size() < 2 || fr.size() < 2) return std::nullopt;
  Eigen::MatrixXd a = to_matrix(fg);
  Eigen::MatrixXd b = to_matrix(fr);
  const Eigen::MatrixXd reference = b;
  zscore_against(reference, a, b);
  return frechet_between(a, b);
}

}  // namespace

ReportRow compute_row(std::string row_name, Mode mode, bool baseline, const std::vector<Image2D>& gen,
                      const std::vector<Image2D>& real, const std::vector<std::pair<std::string, int>>& ids,
                      const features::FeatureExtractor& extractor, int resize_for_fid) {
  if (gen.size() != real.size() || gen.size() != ids.size()) throw ContractError("compute_row: set sizes differ");
  ReportRow row;
  row.row_name = std::move(row_name);
  row.mode = mode;
  row.baseline = baseline;
  std::vector<double> mae_v, ssim_v, psnr_v, lpips_v;
  for (std::size_t i = 0; i < gen.size(); ++i) {
    PerImage p{ids[i].first, ids[i].second, paired_metrics(gen[i], real[i], extractor)};
    mae_v.push_back(p.metrics.mae);
    ssim_v.push_back(p.metrics.ssim);
    psnr_v.push_back(p.metrics.psnr);
    lpips_v.push_back(p.metrics.lpips);
    row.per_image.push_back(std::move(p));
  }
  row.metrics.mae = summarize(mae_v);
  row.metrics.ssim = summarize(ssim_v);
  row.metrics.psnr = summarize(psnr_v);
  row.metrics.lpips = summarize(lpips_v);

  if (gen.size() >= 2) {
    std::vector<Image2D> g = gen, r = real;
    if (resize_for_fid > 0) {
      for (auto& im : g) im = resize_image(im, resize_for_fid);
      for (auto& im : r) im = resize_image(im, resize_for_fid);
    }
    row.metrics.fid = frechet_between(embed_for_fid(g, extractor), embed_for_fid(r, extractor));
  }
  row.metrics.frd = radiomics_distance(gen, real);
  return row;
}

EvalReport evaluate_run(const fs::path& manifest_path, const fs::path& generated_dir, const EvalOptions& options) {
  if (options.modes.empty()) throw ConfigError("no evaluation modes given");
  const auto manifest = read_manifest(manifest_path);
  const auto root = manifest_root(manifest_path);
  const auto records = manifest.records_in(options.split);
  if (records.empty()) throw ContractError("manifest has no records in the evaluated split");

  std::vector<std::string> missing;
  for (const auto& r : records) {
    const auto p = generated_dir / training::generated_file_name(r);
    if (!fs::exists(p)) missing.push_back(p.string());
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " generated file(s) missing:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw NotFoundError(msg);
  }

  // gen, reference and pre images in the compared representation.
  std::vector<Image2D> gen, ref, pre, masks;
  std::vector<std::pair<std::string, int>> ids;
  for (const auto& r : records) {
    const auto pair = load_pair(root, r);
    const Image2D gen_post = read_png_gray(generated_dir / training::generated_file_name(r));
    if (!gen_post.same_shape(pair.pre.pixels())) {
      throw ContractError("generated image shape differs for " + r.patient_id + "/" + std::to_string(r.slice_index));
    }
    if (options.reference == Reference::post) {
      gen.push_back(gen_post);
      ref.push_back(pair.post.pixels());
    } else {
      // Real and generated subtraction share the affine map that rescales
      // the real subtraction image to [0,1].
      const Image2D real_sub = SubtractionImage::from_pair(pair).pixels();
      const float lo = real_sub.min();
      const float hi = real_sub.max();
      const float span = hi > lo ? hi - lo : 1.0f;
      Image2D rs(real_sub.height(), real_sub.width());
      Image2D gs(real_sub.height(), real_sub.width());
      for (std::size_t i = 0; i < rs.size(); ++i) {
        rs.pixels()[i] = hi > lo ? (real_sub.pixels()[i] - lo) / span : 0.0f;
        const float g = (gen_post.pixels()[i] - pair.pre.pixels().pixels()[i]) / SubtractionImage::kScale;
        gs.pixels()[i] = std::clamp((g - lo) / span, 0.0f, 1.0f);
      }
      gen.push_back(std::move(gs));
      ref.push_back(std::move(rs));
    }
    pre.push_back(pair.pre.pixels());
    masks.push_back(pair.mask ? *pair.mask : Image2D(pair.pre.height(), pair.pre.width(), 0.0f));
    ids.emplace_back(r.patient_id, r.slice_index);
  }

  EvalReport report;
  report.manifest_hash = manifest_hash(manifest_path);
  report.model_checkpoint_id = options.model_checkpoint_id;
  report.reference = options.reference;
  report.roi_margin = options.roi_margin;
  const auto& extractor = *options.extractor;
  const std::string baseline = baseline_row_name(options.reference);

  for (const Mode mode : options.modes) {
    if (mode == Mode::full_image) {
      report.rows.push_back(compute_row(options.row_name, mode, false, gen, ref, ids, extractor));
      report.rows.push_back(compute_row(baseline, mode, true, pre, ref, ids, extractor));
      continue;
    }
    std::vector<Image2D> g, r, p;
    std::vector<std::pair<std::string, int>> roi_ids;
    for (std::size_t i = 0; i < gen.size(); ++i) {
      if (!mask_has_voxels(masks[i])) continue;
      g.push_back(roi_view(gen[i], masks[i], options.roi_margin));
      r.push_back(roi_view(ref[i], masks[i], options.roi_margin));
      p.push_back(roi_view(pre[i], masks[i], options.roi_margin));
      roi_ids.push_back(ids[i]);
    }
    report.rows.push_back(compute_row(options.row_name, mode, false, g, r, roi_ids, extractor, kRoiFeatureSize));
    report.rows.push_back(compute_row(baseline, mode, true, p, r, roi_ids, extractor, kRoiFeatureSize));
  }
  return report;
}

namespace {

ordered_json number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double number_from(const ordered_json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw IoError("report: invalid number '" + s + "'");
  }
  return j.get<double>();
}

ordered_json summary_json(const Summary& s) { return {{"mean", number(s.mean)}, {"std", number(s.std)}, {"n", s.n}}; }

Summary summary_from(const ordered_json& j) {
  return {number_from(j.at("mean")), number_from(j.at("std")), j.at("n").get<std::size_t>()};
}

ordered_json optional_json(const std::optional<double>& v) { return v ? number(*v) : ordered_json(nullptr); }

std::optional<double> optional_from(const ordered_json& j) {
  if (j.is_null()) return std::nullopt;
  return number_from(j);
}

}  // namespace

ordered_json to_json(const EvalReport& report) {
  ordered_json j;
  j["manifest_hash"] = report.manifest_hash;
  j["model_checkpoint_id"] = report.model_checkpoint_id;
  j["reference"] = to_string(report.reference);
  j["roi_margin"] = report.roi_margin;
  j["rows"] = ordered_json::array();
  for (const auto& row : report.rows) {
    ordered_json r;
    r["row_name"] = row.row_name;
    r["mode"] = to_string(row.mode);
    r["baseline"] = row.baseline;
    r["metrics"] = {{"mae", summary_json(row.metrics.mae)},
                    {"ssim", summary_json(row.metrics.ssim)},
                    {"psnr", summary_json(row.metrics.psnr)},
                    {"lpips", summary_json(row.metrics.lpips)},
                    {"fid", optional_json(row.metrics.fid)},
                    {"frd", optional_json(row.metrics.frd)}};
    r["per_image"] = ordered_json::array();
    for (const auto& p : row.per_image) {
      r["per_image"].push_back({{"patient_id", p.patient_id},
                                {"slice_index", p.slice_index},
                                {"mae", number(p.metrics.mae)},
                                {"ssim", number(p.metrics.ssim)},
                                {"psnr", number(p.metrics.psnr)},
                                {"lpips", number(p.metrics.lpips)}});
    }
    j["rows"].push_back(std::move(r));
  }
  return j;
}

EvalReport report_from_json(const ordered_json& j) {
  EvalReport report;
  try {
    report.manifest_hash = j.at("manifest_hash").get<std::string>();
    report.model_checkpoint_id = j.at("model_checkpoint_id").get<std::string>();
    report.reference = parse_reference(j.at("reference").get<std::string>());
    report.roi_margin = j.at("roi_margin").get<int>();
    for (const auto& r : j.at("rows")) {
      ReportRow row;
      row.row_name = r.at("row_name").get<std::string>();
      row.mode = parse_mode(r.at("mode").get<std::string>());
      row.baseline = r.at("baseline").get<bool>();
      const auto& m = r.at("metrics");
      row.metrics.mae = summary_from(m.at("mae"));
      row.metrics.ssim = summary_from(m.at("ssim"));
      row.metrics.psnr = summary_from(m.at("psnr"));
      row.metrics.lpips = summary_from(m.at("lpips"));
      row.metrics.fid = optional_from(m.at("fid"));
      row.metrics.frd = optional_from(m.at("frd"));
      for (const auto& p : r.at("per_image")) {
        row.per_image.push_back({p.at("patient_id").get<std::string>(),
                                 p.at("slice_index").get<int>(),
                                 {number_from(p.at("mae")), number_from(p.at("ssim")), number_from(p.at("psnr")),
                                  number_from(p.at("lpips"))}});
      }
      report.rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed report: ") + e.what());
  }
  return report;
}

void write_report(const EvalReport& report, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(report).dump(2) << '\n';
}

EvalReport read_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return report_from_json(j);
}

EvalReport merge_reports(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ContractError("merge_reports: nothing to merge");
  EvalReport out = reports.front();
  out.rows.clear();
  std::vector<std::string> checkpoints;
  for (const auto& rep : reports) {
    if (rep.manifest_hash != out.manifest_hash) throw ContractError("reports were computed on different manifests");
    if (!rep.model_checkpoint_id.empty()) checkpoints.push_back(rep.model_checkpoint_id);
    for (const auto& row : rep.rows) {
      if (row.baseline && out.find(row.row_name, row.mode) != nullptr) continue;
      out.rows.push_back(row);
    }
  }
  out.model_checkpoint_id.clear();
  for (std::size_t i = 0; i < checkpoints.size(); ++i) out.model_checkpoint_id += (i ? "," : "") + checkpoints[i];
  return out;
}

namespace {

std::string fmt(double v, int decimals) {
  if (std::isnan(v)) return "-";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string pm(const Summary& s, int decimals) { return fmt(s.mean, decimals) + " +- " + fmt(s.std, decimals); }

std::string opt(const std::optional<double>& v) { return v ? fmt(*v, 3) : "n/a"; }

}  // namespace

std::string render_table(const EvalReport& report) {
  std::ostringstream out;
  char line[512];
  std::snprintf(line, sizeof line, "%-24s %-10s %-18s %-18s %-20s %-18s %-10s %-10s\n", "Row", "Mode", "MAE", "SSIM",
                "PSNR", "LPIPS", "FID", "FRD");
  out << line;
  for (const Mode mode : {Mode::full_image, Mode::roi}) {
    for (const auto& r : report.rows) {
      if (r.mode != mode) continue;
      std::snprintf(line, sizeof line, "%-24s %-10s %-18s %-18s %-20s %-18s %-10s %-10s\n", r.row_name.c_str(),
                    std::string(to_string(r.mode)).c_str(), pm(r.metrics.mae, 3).c_str(),
                    pm(r.metrics.ssim, 3).c_str(), pm(r.metrics.psnr, 2).c_str(), pm(r.metrics.lpips, 3).c_str(),
                    opt(r.metrics.fid).c_str(), opt(r.metrics.frd).c_str());
      out << line;
    }
  }
  return out.str();
}

void write_per_case_csv(const EvalReport& report, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "row_name,mode,baseline,patient_id,slice_index,mae,ssim,psnr,lpips\n";
  auto num = [](double v) {
    if (std::isinf(v)) return std::string(v > 0 ? "inf" : "-inf");
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  };
  for (const auto& r : report.rows) {
    for (const auto& p : r.per_image) {
      out << '"' << r.row_name << "\"," << to_string(r.mode) << ',' << (r.baseline ? 1 : 0) << ',' << p.patient_id
          << ',' << p.slice_index << ',' << num(p.metrics.mae) << ',' << num(p.metrics.ssim) << ','
          << num(p.metrics.psnr) << ',' << num(p.metrics.lpips) << '\n';
    }
  }
}

}  // namespace dcesynth::eval
