#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "dcesynth/config.hpp"
#include "dcesynth/evaluation.hpp"
#include "dcesynth/pipeline.hpp"
#include "dcesynth/png_io.hpp"
#include "helpers.hpp"

using namespace dcesynth;
using nlohmann::json;

namespace fs = std::filesystem;

namespace {

json tiny_run(const fs::path& out) {
  auto j = json::parse(R"J({
    "variants": ["PC(Vanilla)", "SUB-ROI(L)"],
    "seed": 3,
    "data": {"phantom": {"cases": 3, "size": 32, "depth": 8, "seed": 1, "test_fraction": 0.34}},
    "model": {"base_width": 8, "depth": 2, "time_embed_dim": 16},
    "diffusion": {"T": 20},
    "sampling": {"steps": 4, "batch_size": 4},
    "training": {"steps": 3, "batch_size": 2, "checkpoint_every": 0},
    "evaluation": {"modes": ["full", "roi"]}
  })J");
  j["output_dir"] = out.string();
  return j;
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  const auto c = parse_config(json{{"variant", "SUB(Vanilla)"}, {"seed", 5}, {"data", {{"manifest", "m"}}}}, "/base");
  ASSERT_EQ(c.variants.size(), 1u);
  EXPECT_EQ(c.variants[0].name(), "SUB(Vanilla)");
  EXPECT_EQ(*c.data.manifest, fs::path("/base/m"));
  EXPECT_EQ(c.T, 1000);
  EXPECT_EQ(c.training.ema_lambda, 0.999);
  EXPECT_EQ(c.sampling_seed(), 5u);
  EXPECT_EQ(c.loss_settings().global.perceptual, 0.6);
  EXPECT_EQ(c.sampler_options().mean_rule, diffusion::MeanRule::q_posterior);

  auto j = tiny_run("/tmp/x");
  j["loss"] = {{"global", {{"weights", {0.1, 0.2, 0.3, 0.4}}}}};
  j["sampling"]["seed"] = 77;
  const auto o = parse_config(j);
  EXPECT_EQ(o.global_weights.tv, 0.3);
  EXPECT_EQ(o.sampling_seed(), 77u);
  EXPECT_EQ(o.model.base_width, 8);
}

TEST(Config, RejectsUnknownKeysAndMissingSeed) {
  auto j = tiny_run("/tmp/x");
  j["trainig"] = json::object();
  try {
    parse_config(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("trainig"), std::string::npos);
  }
  j = tiny_run("/tmp/x");
  j["model"]["widht"] = 3;
  EXPECT_THROW(parse_config(j), ConfigError);
  j = tiny_run("/tmp/x");
  j.erase("seed");
  EXPECT_THROW(parse_config(j), ConfigError);
  j = tiny_run("/tmp/x");
  j["training"]["steps"] = "many";
  EXPECT_THROW(parse_config(j), ConfigError);
  j = tiny_run("/tmp/x");
  j["loss"] = {{"tumor", {{"weights", {0.3, 0.6}}}}};
  EXPECT_THROW(parse_config(j), ConfigError);
}

TEST(Config, HashIsCanonical) {
  const auto a = parse_config(tiny_run("/tmp/x"));
  auto reordered = json::parse(tiny_run("/tmp/x").dump());
  const auto b = parse_config(reordered);
  EXPECT_EQ(a.hash(), b.hash());
  auto j = tiny_run("/tmp/x");
  j["seed"] = 4;
  EXPECT_NE(parse_config(j).hash(), a.hash());
}

TEST(Config, LoadResolvesRelativePaths) {
  testutil::TempDir dir("cfg");
  std::ofstream(dir / "exp.json") << R"J({"variant": "PC(Vanilla)", "seed": 1, "data": {"manifest": "data"},
                                         "output_dir": "out"})J";
  const auto c = load_config(dir / "exp.json");
  EXPECT_EQ(*c.data.manifest, dir / "data");
  EXPECT_EQ(c.output_dir, dir / "out");
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
}

TEST(Pipeline, VariantSlug) {
  EXPECT_EQ(variant_slug(training::parse_variant("SUB-ROI(L)")), "SUB-ROI_L");
  EXPECT_EQ(variant_slug(training::parse_variant("PC(Vanilla100)")), "PC_Vanilla100");
}

TEST(Pipeline, EndToEndOnTinyPhantom) {
  testutil::TempDir dir("pipeline");
  const auto config = parse_config(tiny_run(dir / "run"));
  const auto manifest = run_pipeline(config);
  EXPECT_EQ(manifest["status"], "complete");
  EXPECT_EQ(manifest["config_hash"], config.hash());
  ASSERT_EQ(manifest["variants"].size(), 2u);

  const auto report = eval::read_report(dir / "run" / "report.json");
  for (const char* name : {"PC(Vanilla)", "SUB-ROI(L)"}) {
    for (auto mode : {eval::Mode::full_image, eval::Mode::roi}) {
      const auto* row = report.find(name, mode);
      ASSERT_NE(row, nullptr) << name;
      EXPECT_TRUE(std::isfinite(row->metrics.mae.mean));
      EXPECT_TRUE(row->metrics.fid.has_value());
    }
  }
  EXPECT_NE(report.find("Real Pre vs Real PC", eval::Mode::full_image), nullptr);
  EXPECT_TRUE(fs::exists(dir / "run" / "report.txt"));
  EXPECT_TRUE(fs::exists(dir / "run" / "per_case.csv"));

  const auto grid = read_png_rgb(dir / "run" / "figures" / "qualitative.png");
  const auto& fig = manifest["figures"][0];
  EXPECT_EQ(fig["columns"], 4);
  EXPECT_EQ(grid.width, fig["columns"].get<int>() * fig["cell_width"].get<int>());

  // Same config again is refused; force reruns.
  EXPECT_THROW(run_pipeline(config), ConfigError);
  EXPECT_NO_THROW(run_pipeline(config, RunOptions{.force = true}));
}

TEST(Pipeline, QualitativeGridLayout) {
  testutil::TempDir dir("grid");
  const auto data = testutil::make_phantom_dataset(dir.path(), 3, 32, 8, 4);
  fs::create_directories(dir / "a");
  for (const auto& r : read_manifest(data).records) {
    if (r.split == Split::test) fs::copy_file(data / r.relative_path_post, dir / "a" / (r.patient_id + "_" + std::to_string(r.slice_index) + ".png"));
  }
  const auto info = write_qualitative_grid(data, {{"A", dir / "a"}, {"B", dir / "a"}, {"C", dir / "a"}}, dir / "g.png", 2);
  EXPECT_EQ(info.columns, 5);
  EXPECT_LE(info.rows, 2);
  EXPECT_EQ(info.labels.size(), 5u);
  const auto img = read_png_rgb(info.path);
  EXPECT_EQ(img.width, info.columns * info.cell_width);
  EXPECT_EQ(img.height, info.rows * info.cell_height);
}

TEST(Pipeline, FailedStageIsRecorded) {
  testutil::TempDir dir("pipefail");
  auto j = tiny_run(dir / "run");
  j["data"] = {{"manifest", (dir / "missing").string()}};
  EXPECT_THROW(run_pipeline(parse_config(j)), StageError);
  std::ifstream in(dir / "run" / std::string(kRunManifestName));
  const auto m = json::parse(in);
  EXPECT_EQ(m["status"], "failed");
  EXPECT_EQ(m["failed_stage"], "data");
}
