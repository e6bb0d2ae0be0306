#include <gtest/gtest.h>

#include "dcesynth/evaluation.hpp"
#include "dcesynth/png_io.hpp"
#include "dcesynth/training.hpp"
#include "helpers.hpp"

using namespace dcesynth;
using namespace dcesynth::eval;

namespace fs = std::filesystem;

TEST(RoiBox, SinglePixelWithMargin) {
  Image2D m(32, 32, 0.0f);
  m(10, 10) = 1.0f;
  const auto b = roi_box(m, 4);
  ASSERT_TRUE(b);
  EXPECT_EQ(*b, (Box{6, 6, 9, 9}));
  const auto img = testutil::random_image(32, 32, 1);
  const auto crop = roi_view(img, m, 4);
  EXPECT_EQ(crop.height(), 9);
  EXPECT_EQ(crop.width(), 9);
  EXPECT_EQ(crop(4, 4), img(10, 10));
}

TEST(RoiBox, CornerClippedAndFullMask) {
  Image2D m(20, 30, 0.0f);
  m(0, 29) = 1.0f;
  EXPECT_EQ(*roi_box(m, 4), (Box{0, 25, 5, 5}));
  const auto full = testutil::constant_image(20, 30, 1.0f);
  const auto img = testutil::random_image(20, 30, 2);
  EXPECT_EQ(roi_view(img, full), img);
  EXPECT_FALSE(roi_box(Image2D(8, 8, 0.0f)).has_value());
  EXPECT_THROW(roi_view(img, Image2D(20, 30, 0.0f)), Error);
  Image2D soft(8, 8, 0.49f);
  EXPECT_FALSE(roi_box(soft).has_value());
}

TEST(Summaries, MeanStdAndInfinity) {
  const auto s = summarize({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(1.25));
  EXPECT_EQ(s.n, 4u);
  const double inf = std::numeric_limits<double>::infinity();
  const auto all_inf = summarize({inf, inf});
  EXPECT_TRUE(std::isinf(all_inf.mean));
  EXPECT_EQ(all_inf.std, 0.0);
  EXPECT_TRUE(std::isinf(summarize({inf, 3.0}).std));
  EXPECT_TRUE(std::isnan(summarize({}).mean));
}

TEST(Rescale, MinMax) {
  Image2D img(2, 2, std::vector<float>{-1.0f, 0.0f, 1.0f, 3.0f});
  const auto r = minmax_rescale(img);
  EXPECT_FLOAT_EQ(r(0, 0), 0.0f);
  EXPECT_FLOAT_EQ(r(0, 1), 0.25f);
  EXPECT_FLOAT_EQ(r(1, 1), 1.0f);
  const auto flat = minmax_rescale(Image2D(3, 3, 5.0f));
  for (float v : flat.pixels()) EXPECT_EQ(v, 0.0f);
}

TEST(Parsing, ModesAndReference) {
  EXPECT_EQ(parse_modes("full,roi"), (std::vector<Mode>{Mode::full_image, Mode::roi}));
  EXPECT_EQ(parse_modes("full_image"), std::vector<Mode>{Mode::full_image});
  EXPECT_THROW(parse_modes("full,bogus"), Error);
  EXPECT_EQ(parse_reference("sub"), Reference::sub);
  EXPECT_EQ(baseline_row_name(Reference::post), "Real Pre vs Real PC");
  EXPECT_EQ(baseline_row_name(Reference::sub), "Real Pre vs Real SUB");
}

TEST(ComputeRow, RoiWithFullMaskEqualsFullImage) {
  std::vector<Image2D> gen, real, gen_crop, real_crop;
  std::vector<std::pair<std::string, int>> ids;
  const auto full = testutil::constant_image(32, 32, 1.0f);
  for (int i = 0; i < 4; ++i) {
    gen.push_back(testutil::random_image(32, 32, 10 + i));
    real.push_back(testutil::random_image(32, 32, 20 + i));
    gen_crop.push_back(roi_view(gen.back(), full));
    real_crop.push_back(roi_view(real.back(), full));
    ids.emplace_back("P", i);
  }
  const auto& ex = *features::default_extractor();
  const auto a = compute_row("x", Mode::full_image, false, gen, real, ids, ex);
  const auto b = compute_row("x", Mode::roi, false, gen_crop, real_crop, ids, ex);
  EXPECT_DOUBLE_EQ(a.metrics.mae.mean, b.metrics.mae.mean);
  EXPECT_DOUBLE_EQ(a.metrics.ssim.mean, b.metrics.ssim.mean);
  EXPECT_DOUBLE_EQ(*a.metrics.fid, *b.metrics.fid);
  EXPECT_DOUBLE_EQ(*a.metrics.frd, *b.metrics.frd);
}

TEST(ComputeRow, SummariesMatchPerImageValues) {
  std::vector<Image2D> gen, real;
  std::vector<std::pair<std::string, int>> ids;
  for (int i = 0; i < 5; ++i) {
    gen.push_back(testutil::random_image(16, 16, 30 + i));
    real.push_back(testutil::random_image(16, 16, 40 + i));
    ids.emplace_back("Q", i);
  }
  const auto row = compute_row("r", Mode::full_image, false, gen, real, ids, *features::default_extractor());
  ASSERT_EQ(row.per_image.size(), 5u);
  std::vector<double> maes, psnrs;
  for (const auto& p : row.per_image) {
    maes.push_back(p.metrics.mae);
    psnrs.push_back(p.metrics.psnr);
  }
  double m = 0;
  for (double v : maes) m += v;
  m /= 5;
  double var = 0;
  for (double v : maes) var += (v - m) * (v - m);
  EXPECT_NEAR(row.metrics.mae.mean, m, 1e-12);
  EXPECT_NEAR(row.metrics.mae.std, std::sqrt(var / 5), 1e-12);
  EXPECT_NEAR(row.metrics.psnr.mean, summarize(psnrs).mean, 1e-12);

  const auto single = compute_row("r", Mode::full_image, false, {gen[0]}, {real[0]}, {ids[0]},
                                  *features::default_extractor());
  EXPECT_FALSE(single.metrics.fid.has_value());
  EXPECT_FALSE(single.metrics.frd.has_value());
}

class EvaluateRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testutil::TempDir("evalrun");
    data_ = testutil::make_phantom_dataset(dir_->path(), 3, 32, 10, 6);
    const auto manifest = read_manifest(data_);
    for (const auto& r : manifest.records) {
      if (r.split != Split::test) continue;
      fs::create_directories(*dir_ / "post_copy");
      fs::create_directories(*dir_ / "pre_copy");
      fs::copy_file(data_ / r.relative_path_post, *dir_ / "post_copy" / training::generated_file_name(r));
      fs::copy_file(data_ / r.relative_path_pre, *dir_ / "pre_copy" / training::generated_file_name(r));
    }
  }
  static void TearDownTestSuite() { delete dir_; }

  static testutil::TempDir* dir_;
  static fs::path data_;
};

testutil::TempDir* EvaluateRun::dir_ = nullptr;
fs::path EvaluateRun::data_;

TEST_F(EvaluateRun, CopiesOfPostAreAPerfectScore) {
  const auto report = evaluate_run(data_, *dir_ / "post_copy");
  EXPECT_EQ(report.rows.size(), 4u);
  for (auto mode : {Mode::full_image, Mode::roi}) {
    const auto* row = report.find("Generated", mode);
    ASSERT_NE(row, nullptr);
    EXPECT_EQ(row->metrics.mae.mean, 0.0);
    EXPECT_NEAR(row->metrics.ssim.mean, 1.0, 1e-9);
    EXPECT_TRUE(std::isinf(row->metrics.psnr.mean));
    EXPECT_NEAR(*row->metrics.fid, 0.0, 1e-6);
    EXPECT_NEAR(*row->metrics.frd, 0.0, 1e-6);
    ASSERT_NE(report.find("Real Pre vs Real PC", mode), nullptr);
    EXPECT_TRUE(report.find("Real Pre vs Real PC", mode)->baseline);
  }
  EXPECT_EQ(report.manifest_hash, manifest_hash(data_));
}

TEST_F(EvaluateRun, CopiesOfPreEqualTheBaseline) {
  const auto report = evaluate_run(data_, *dir_ / "pre_copy");
  for (auto mode : {Mode::full_image, Mode::roi}) {
    const auto& g = report.find("Generated", mode)->metrics;
    const auto& b = report.find("Real Pre vs Real PC", mode)->metrics;
    EXPECT_NEAR(g.mae.mean, b.mae.mean, 1e-6);
    EXPECT_NEAR(g.ssim.mean, b.ssim.mean, 1e-6);
    EXPECT_NEAR(g.psnr.mean, b.psnr.mean, 1e-6);
    EXPECT_NEAR(g.lpips.mean, b.lpips.mean, 1e-6);
    EXPECT_NEAR(*g.fid, *b.fid, 1e-6);
    EXPECT_NEAR(*g.frd, *b.frd, 1e-6);
  }
}

TEST_F(EvaluateRun, SubReferenceUsesSubBaseline) {
  EvalOptions o;
  o.reference = Reference::sub;
  o.modes = {Mode::full_image};
  const auto report = evaluate_run(data_, *dir_ / "post_copy", o);
  ASSERT_NE(report.find("Real Pre vs Real SUB", Mode::full_image), nullptr);
  EXPECT_EQ(report.find("Generated", Mode::full_image)->metrics.mae.mean, 0.0);
}

TEST_F(EvaluateRun, MissingFilesAreAllListed) {
  const auto partial = *dir_ / "partial";
  fs::create_directories(partial);
  std::vector<std::string> missing;
  for (const auto& r : read_manifest(data_).records) {
    if (r.split == Split::test) missing.push_back(training::generated_file_name(r));
  }
  ASSERT_GE(missing.size(), 2u);
  fs::copy_file(*dir_ / "post_copy" / missing[0], partial / missing[0]);
  try {
    evaluate_run(data_, partial);
    FAIL() << "expected NotFoundError";
  } catch (const NotFoundError& e) {
    const std::string msg = e.what();
    EXPECT_EQ(msg.find(missing[0]), std::string::npos);
    for (std::size_t i = 1; i < missing.size(); ++i) EXPECT_NE(msg.find(missing[i]), std::string::npos) << missing[i];
  }
}

TEST_F(EvaluateRun, ReportRoundTripsAndMerges) {
  EvalOptions o;
  o.model_checkpoint_id = "abc";
  const auto report = evaluate_run(data_, *dir_ / "post_copy", o);
  write_report(report, *dir_ / "r.json");
  const auto back = read_report(*dir_ / "r.json");
  EXPECT_EQ(to_json(back), to_json(report));
  ASSERT_EQ(back.rows.size(), report.rows.size());
  EXPECT_EQ(back.rows[0].per_image, report.rows[0].per_image);
  EXPECT_TRUE(std::isinf(back.find("Generated", Mode::full_image)->metrics.psnr.mean));

  auto other = evaluate_run(data_, *dir_ / "pre_copy", EvalOptions{.row_name = "Other", .model_checkpoint_id = "def"});
  const auto merged = merge_reports({report, other});
  EXPECT_EQ(merged.rows.size(), 6u);
  EXPECT_EQ(merged.model_checkpoint_id, "abc,def");
  const auto table = render_table(merged);
  EXPECT_NE(table.find("Other"), std::string::npos);
  EXPECT_NE(table.find("Real Pre vs Real PC"), std::string::npos);

  other.manifest_hash = "different";
  EXPECT_THROW(merge_reports({report, other}), Error);

  write_per_case_csv(report, *dir_ / "cases.csv");
  std::ifstream csv(*dir_ / "cases.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "row_name,mode,baseline,patient_id,slice_index,mae,ssim,psnr,lpips");
}
