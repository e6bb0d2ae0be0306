#include "dcesynth/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "dcesynth/evaluation.hpp"
#include "dcesynth/png_io.hpp"

namespace dcesynth {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string variant_slug(const training::VariantSpec& variant) {
  std::string s;
  for (char ch : variant.name()) {
    if (ch == '(') {
      s += '_';
    } else if (ch != ')') {
      s += ch;
    }
  }
  return s;
}

preprocess::BuildResult preprocess_cases(const fs::path& cases_dir, const fs::path& out_dir, double adjacent_fraction,
                                         bool single_breast, std::uint64_t seed) {
  const auto on_disk = preprocess::read_cases(cases_dir);
  if (on_disk.empty()) throw NotFoundError("no case directories under " + cases_dir.string());
  std::vector<preprocess::VolumeCase> cases;
  std::map<std::string, Split> split_map;
  for (const auto& c : on_disk) {
    split_map[c.volume_case.patient_id] = c.split;
    cases.push_back(c.volume_case);
  }
  preprocess::SlicePolicy policy;
  policy.adjacent_fraction = adjacent_fraction;
  policy.side_split = single_breast ? preprocess::SideSplit::midline : preprocess::SideSplit::none;
  policy.rng_seed = seed;
  return preprocess::build_dataset(cases, policy, split_map, out_dir);
}

namespace {

void draw_box(RgbImage& img, int row_off, int col_off, const eval::Box& b) {
  auto put = [&](int r, int c) { img.set(row_off + r, col_off + c, {0, 255, 0}); };
  for (int c = b.col0; c < b.col0 + b.cols; ++c) {
    put(b.row0, c);
    put(b.row0 + b.rows - 1, c);
  }
  for (int r = b.row0; r < b.row0 + b.rows; ++r) {
    put(r, b.col0);
    put(r, b.col0 + b.cols - 1);
  }
}

}  // namespace

GridInfo write_qualitative_grid(const fs::path& manifest_path,
                                const std::vector<std::pair<std::string, fs::path>>& generated_dirs,
                                const fs::path& out_path, int max_rows) {
  const auto manifest = read_manifest(manifest_path);
  const auto root = manifest_root(manifest_path);
  std::vector<SlicePair> pairs;
  std::vector<ManifestRecord> picked;
  for (const auto& r : manifest.records_in(Split::test)) {
    if (static_cast<int>(picked.size()) >= max_rows) break;
    auto pair = load_pair(root, r);
    if (!r.tumor_label || !pair.mask) continue;
    pairs.push_back(std::move(pair));
    picked.push_back(r);
  }
  if (picked.empty()) throw ContractError("no tumor-bearing test slices for the qualitative grid");

  GridInfo info;
  info.path = out_path;
  info.rows = static_cast<int>(picked.size());
  info.columns = 2 + static_cast<int>(generated_dirs.size());
  info.cell_height = pairs.front().pre.height();
  info.cell_width = pairs.front().pre.width();
  info.labels = {"pre", "real post"};
  for (const auto& [label, dir] : generated_dirs) info.labels.push_back(label);

  RgbImage grid(info.rows * info.cell_height, info.columns * info.cell_width);
  for (int row = 0; row < info.rows; ++row) {
    const auto& pair = pairs[static_cast<std::size_t>(row)];
    if (pair.pre.height() != info.cell_height || pair.pre.width() != info.cell_width) {
      throw ContractError("qualitative grid needs equally sized slices");
    }
    std::vector<Image2D> cells{pair.pre.pixels(), pair.post.pixels()};
    for (const auto& [label, dir] : generated_dirs) {
      cells.push_back(read_png_gray(dir / training::generated_file_name(picked[static_cast<std::size_t>(row)])));
    }
    const auto box = eval::roi_box(*pair.mask, 0);
    for (int col = 0; col < info.columns; ++col) {
      const auto& cell = cells[static_cast<std::size_t>(col)];
      const int r0 = row * info.cell_height;
      const int c0 = col * info.cell_width;
      for (int r = 0; r < info.cell_height; ++r) {
        for (int c = 0; c < info.cell_width; ++c) {
          const auto v = to_u8(cell(r, c));
          grid.set(r0 + r, c0 + c, {v, v, v});
        }
      }
      if (box) draw_box(grid, r0, c0, *box);
    }
  }
  write_png_rgb(grid, out_path);
  return info;
}

namespace {

void write_json(const ordered_json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

template <typename F>
auto stage(const std::string& name, ordered_json& run, const fs::path& run_path, F&& body) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    run["status"] = "failed";
    run["failed_stage"] = name;
    run["error"] = e.what();
    write_json(run, run_path);
    throw StageError(name, e.what());
  }
}

}  // namespace

ordered_json run_pipeline(const ExperimentConfig& config, const RunOptions& options) {
  if (config.variants.empty()) throw ConfigError("config lists no variants");
  if (config.output_dir.empty()) throw ConfigError("config has no output_dir");
  if (!config.data.manifest && !config.data.preprocess && !config.data.phantom) {
    throw ConfigError("config.data needs manifest, preprocess or phantom");
  }
  auto log = [&](const std::string& s, const std::string& m) {
    if (options.log) options.log(s, m);
  };

  const fs::path out = config.output_dir;
  const fs::path run_path = out / kRunManifestName;
  const std::string config_hash = config.hash();
  if (fs::exists(run_path)) {
    std::ifstream in(run_path);
    const auto previous = ordered_json::parse(in, nullptr, false);
    if (!previous.is_discarded() && previous.value("config_hash", "") == config_hash &&
        previous.value("status", "") == "complete" && !options.force) {
      throw ConfigError("run with config hash " + config_hash + " already exists in " + out.string() +
                        " (use --force to rerun)");
    }
  }
  fs::create_directories(out);

  ordered_json run;
  run["config_hash"] = config_hash;
  run["config"] = config.canonical();
  run["status"] = "running";
  write_json(run, run_path);

  const fs::path manifest = stage("data", run, run_path, [&]() -> fs::path {
    if (config.data.manifest) {
      read_manifest(*config.data.manifest);
      return *config.data.manifest;
    }
    fs::path cases_dir;
    double fraction = 0.2;
    if (config.data.phantom) {
      cases_dir = out / "cases";
      fs::remove_all(cases_dir);
      log("data", "writing phantom corpus to " + cases_dir.string());
      phantom::write_corpus(*config.data.phantom, cases_dir);
    } else {
      cases_dir = config.data.preprocess->cases_dir;
      fraction = config.data.preprocess->adjacent_fraction;
    }
    const fs::path data_dir = out / "data";
    fs::remove_all(data_dir);
    log("data", "preprocessing " + cases_dir.string());
    const auto built = preprocess_cases(cases_dir, data_dir, fraction, config.data.single_breast, config.seed);
    for (const auto& w : built.warnings) log("data", "warning: " + w);
    return data_dir;
  });
  run["data"] = {{"manifest", manifest.string()}, {"manifest_hash", manifest_hash(manifest)}};
  write_json(run, run_path);

  const auto loss_settings = config.loss_settings();
  std::vector<eval::EvalReport> reports;
  std::vector<std::pair<std::string, fs::path>> generated_dirs;
  run["variants"] = ordered_json::array();
  for (const auto& variant : config.variants) {
    const fs::path vdir = out / "variants" / variant_slug(variant);
    ordered_json entry;
    entry["variant"] = variant.name();

    const auto trained = stage("train:" + variant.name(), run, run_path, [&] {
      training::TrainOptions t;
      t.variant = variant;
      t.manifest = manifest;
      t.out_dir = vdir / "train";
      t.model = config.model;
      t.optimizer = config.optimizer;
      t.losses = loss_settings;
      t.T = config.T;
      t.cosine_s = config.cosine_s;
      t.steps = config.training.steps;
      t.batch_size = config.training.batch_size;
      t.checkpoint_every = config.training.checkpoint_every;
      t.ema_lambda = config.training.ema_lambda;
      t.seed = config.seed;
      t.on_step = [&](std::int64_t step, const losses::LossBreakdown& loss) {
        if (step % 100 == 0) log("train:" + variant.name(), "step " + std::to_string(step) + " loss " + std::to_string(loss.total));
      };
      fs::remove_all(t.out_dir);
      return training::train(t);
    });
    entry["checkpoint"] = trained.final_checkpoint.string();
    entry["checkpoint_id"] = training::checkpoint_id(trained.final_checkpoint);
    entry["steps"] = trained.steps;

    const fs::path gen_dir = vdir / "generated";
    stage("sample:" + variant.name(), run, run_path, [&] {
      const auto ckpt = training::load_checkpoint(trained.final_checkpoint);
      training::SampleOptions s;
      s.sampler = config.sampler_options();
      s.seed = config.sampling_seed();
      s.batch_size = config.sampling.batch_size;
      fs::remove_all(gen_dir);
      log("sample:" + variant.name(), "sampling test split");
      return training::sample_split(ckpt, manifest, gen_dir, s);
    });
    entry["generated_dir"] = gen_dir.string();

    const fs::path report_path = vdir / "report.json";
    stage("evaluate:" + variant.name(), run, run_path, [&] {
      eval::EvalOptions e;
      e.modes = config.evaluation.modes;
      e.reference = config.evaluation.reference;
      e.roi_margin = config.evaluation.roi_margin;
      e.row_name = variant.name();
      e.model_checkpoint_id = entry["checkpoint_id"].get<std::string>();
      e.extractor = loss_settings.extractor;
      auto report = eval::evaluate_run(manifest, gen_dir, e);
      eval::write_report(report, report_path);
      reports.push_back(std::move(report));
      return 0;
    });
    entry["report"] = report_path.string();
    generated_dirs.emplace_back(variant.name(), gen_dir);
    run["variants"].push_back(entry);
    write_json(run, run_path);
  }

  stage("report", run, run_path, [&] {
    const auto merged = eval::merge_reports(reports);
    eval::write_report(merged, out / "report.json");
    std::ofstream(out / "report.txt") << eval::render_table(merged);
    eval::write_per_case_csv(merged, out / "per_case.csv");
    return 0;
  });
  run["report"] = (out / "report.json").string();
  run["report_table"] = (out / "report.txt").string();
  run["per_case_csv"] = (out / "per_case.csv").string();

  const auto grid = stage("figures", run, run_path, [&] {
    return write_qualitative_grid(manifest, generated_dirs, out / "figures" / "qualitative.png");
  });
  run["figures"] = ordered_json::array();
  run["figures"].push_back({{"path", grid.path.string()},
                            {"rows", grid.rows},
                            {"columns", grid.columns},
                            {"cell_height", grid.cell_height},
                            {"cell_width", grid.cell_width},
                            {"labels", grid.labels}});
  run["status"] = "complete";
  write_json(run, run_path);
  return run;
}

}  // namespace dcesynth
