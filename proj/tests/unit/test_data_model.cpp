#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "dcesynth/data_model.hpp"
#include "dcesynth/png_io.hpp"
#include "dcesynth/rng.hpp"
#include "dcesynth/volume_io.hpp"
#include "helpers.hpp"

using namespace dcesynth;

TEST(SliceImage, RejectsOutOfRangeAndTinyImages) {
  EXPECT_NO_THROW(SliceImage(Image2D(16, 16, 0.5f)));
  EXPECT_THROW(SliceImage(Image2D(15, 16, 0.5f)), ContractError);
  EXPECT_THROW(SliceImage(Image2D(16, 16, 1.01f)), ContractError);
  EXPECT_THROW(SliceImage(Image2D(16, 16, -0.01f)), ContractError);
  EXPECT_TRUE(SliceImage::satisfies_invariants(Image2D(20, 30, 1.0f)));
  EXPECT_FALSE(SliceImage::satisfies_invariants(Image2D(20, 30, 2.0f)));
}

TEST(ValidatePair, WellFormedPairHasNoViolations) {
  auto p = testutil::random_pair(64, 64, 1);
  EXPECT_TRUE(validate_pair(p).empty());
}

TEST(ValidatePair, MaskShapeMismatch) {
  auto p = testutil::random_pair(64, 64, 1);
  p.mask = Image2D(64, 63, 0.0f);
  p.tumor_label = false;
  EXPECT_EQ(validate_pair(p), std::vector<std::string>{"shape_mismatch:mask"});
}

TEST(ValidatePair, TumorLabelWithEmptyMask) {
  auto p = testutil::random_pair(64, 64, 1);
  p.mask = Image2D(64, 64, 0.0f);
  p.tumor_label = true;
  EXPECT_EQ(validate_pair(p), std::vector<std::string>{"tumor_label_without_mask_voxels"});
}

TEST(ValidatePair, OtherViolations) {
  auto p = testutil::random_pair(64, 64, 1);
  p.tumor_label = false;
  EXPECT_EQ(validate_pair(p), std::vector<std::string>{"mask_voxels_without_tumor_label"});
  p.tumor_label = true;
  (*p.mask)(0, 0) = 0.5f;
  EXPECT_EQ(validate_pair(p), std::vector<std::string>{"mask_not_binary"});
  auto q = testutil::random_pair(64, 64, 2, false);
  q.tumor_label = true;
  EXPECT_EQ(validate_pair(q), std::vector<std::string>{"tumor_label_without_mask"});
  q.tumor_label = false;
  q.post = SliceImage(Image2D(32, 64, 0.0f));
  EXPECT_EQ(validate_pair(q), std::vector<std::string>{"shape_mismatch:post"});
}

TEST(SubtractionImage, ScaledResidualWithinBounds) {
  auto p = testutil::random_pair(32, 32, 3);
  const auto sub = SubtractionImage::from_pair(p);
  for (std::size_t i = 0; i < sub.pixels().size(); ++i) {
    const float expect = (p.post.pixels().pixels()[i] - p.pre.pixels().pixels()[i]) / 0.5f;
    EXPECT_FLOAT_EQ(sub.pixels().pixels()[i], expect);
    EXPECT_LE(std::abs(sub.pixels().pixels()[i]), 2.0f);
  }
  EXPECT_THROW(SubtractionImage(Image2D(16, 16, 2.5f)), ContractError);
}

namespace {

DatasetManifest sample_manifest(const testutil::TempDir& dir) {
  DatasetManifest m;
  m.seed = 42;
  for (int i = 0; i < 3; ++i) {
    auto pair = testutil::random_pair(16, 16, 10 + i, i != 1);
    ManifestRecord r;
    r.patient_id = i < 2 ? "A" : "B";
    r.slice_index = i;
    r.relative_path_pre = "images/" + std::to_string(i) + "_pre.png";
    r.relative_path_post = "images/" + std::to_string(i) + "_post.png";
    write_png_gray(pair.pre.pixels(), dir.path() / r.relative_path_pre);
    write_png_gray(pair.post.pixels(), dir.path() / r.relative_path_post);
    if (pair.mask) {
      r.relative_path_mask = "masks/" + std::to_string(i) + ".png";
      write_png_gray(*pair.mask, dir.path() / *r.relative_path_mask);
      r.tumor_label = true;
    }
    r.laterality = i == 2 ? Laterality::unilateral : Laterality::bilateral;
    r.split = i < 2 ? Split::train : Split::test;
    m.records.push_back(r);
  }
  return m;
}

}  // namespace

TEST(Manifest, RoundTripPreservesRecordsAndOrder) {
  testutil::TempDir dir("manifest");
  const auto m = sample_manifest(dir);
  write_manifest(m, dir.path());
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(dir / "header.json"));
  const auto back = read_manifest(dir.path());
  EXPECT_EQ(back, m);
  EXPECT_EQ(read_manifest(dir / "manifest.jsonl"), m);
  EXPECT_EQ(back.records_in(Split::test).size(), 1u);
}

TEST(Manifest, MissingFileIsReported) {
  testutil::TempDir dir("manifest_missing");
  const auto m = sample_manifest(dir);
  write_manifest(m, dir.path());
  std::filesystem::remove(dir.path() / m.records[0].relative_path_post);
  EXPECT_THROW(read_manifest(dir.path()), IoError);
  EXPECT_NO_THROW(read_manifest(dir.path(), false));
}

TEST(Manifest, PatientDisjointness) {
  testutil::TempDir dir("manifest_disjoint");
  auto m = sample_manifest(dir);
  EXPECT_NO_THROW(check_patient_disjoint(m));
  m.records[2].patient_id = "A";
  EXPECT_THROW(check_patient_disjoint(m), ContractError);
}

TEST(Manifest, LoadPairMatchesFiles) {
  testutil::TempDir dir("manifest_load");
  const auto m = sample_manifest(dir);
  write_manifest(m, dir.path());
  const auto pair = load_pair(dir.path(), m.records[0]);
  EXPECT_TRUE(validate_pair(pair).empty());
  EXPECT_EQ(pair.patient_id, "A");
  ASSERT_TRUE(pair.mask.has_value());
  EXPECT_FALSE(load_pair(dir.path(), m.records[1]).mask.has_value());
}

TEST(Manifest, HashChangesWithContent) {
  testutil::TempDir dir("manifest_hash");
  auto m = sample_manifest(dir);
  write_manifest(m, dir.path());
  const auto h1 = manifest_hash(dir.path());
  EXPECT_EQ(h1, manifest_hash(dir.path()));
  m.seed = 43;
  m.records[0].slice_index = 9;
  write_manifest(m, dir.path());
  EXPECT_NE(h1, manifest_hash(dir.path()));
}

TEST(PngIo, RoundHalfUpAndEndpoints) {
  EXPECT_EQ(to_u8(1.0f), 255);
  EXPECT_EQ(to_u8(0.5f), 128);
  EXPECT_EQ(to_u8(0.0f), 0);
  EXPECT_EQ(to_u8(-1.0f), 0);
  EXPECT_EQ(to_u8(2.0f), 255);
}

TEST(PngIo, GrayRoundTripWithinHalfStep) {
  testutil::TempDir dir("png");
  const auto img = testutil::random_image(17, 23, 5);
  write_png_gray(img, dir / "a.png");
  const auto back = read_png_gray(dir / "a.png");
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_LE(std::abs(back.pixels()[i] - img.pixels()[i]), 1.0f / 510.0f + 1e-7f);
  EXPECT_THROW(read_png_gray(dir / "missing.png"), IoError);
}

TEST(PngIo, RgbRoundTrip) {
  testutil::TempDir dir("png_rgb");
  RgbImage img(4, 5);
  img.set(1, 2, {10, 200, 30});
  write_png_rgb(img, dir / "c.png");
  const auto back = read_png_rgb(dir / "c.png");
  EXPECT_EQ(back.rgb, img.rgb);
  EXPECT_EQ(back.get(1, 2), (std::array<std::uint8_t, 3>{10, 200, 30}));
}

TEST(Rng, SeedMixingIsStableAndGaussianIsStandard) {
  EXPECT_EQ(mix_seed(1, 2), mix_seed(1, 2));
  EXPECT_NE(mix_seed(1, 2), mix_seed(2, 1));
  Rng rng(7);
  std::vector<float> v(20000);
  fill_gaussian(rng, v);
  double mean = 0, sq = 0;
  for (float x : v) {
    mean += x;
    sq += double(x) * x;
  }
  mean /= v.size();
  sq = sq / v.size() - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.03);
  EXPECT_NEAR(sq, 1.0, 0.05);
  EXPECT_EQ(hex64(fnv1a64("")), "cbf29ce484222325");
}

TEST(VolumeIo, RawRoundTrip) {
  testutil::TempDir dir("vol");
  Volume3D v(3, 4, 5);
  for (std::size_t i = 0; i < v.size(); ++i) v.voxels()[i] = static_cast<float>(i) * 0.5f;
  write_raw_volume(v, dir / "v.dvol");
  EXPECT_EQ(read_volume(dir / "v.dvol"), v);
  EXPECT_EQ(v.slice(1)(2, 3), v(1, 2, 3));
}

TEST(VolumeIo, NiftiFloatAndInt16) {
  testutil::TempDir dir("nifti");
  auto write_nifti = [](const std::filesystem::path& p, short datatype, short bitpix, const void* data,
                        std::size_t bytes, float slope, float inter) {
    std::vector<char> header(352, 0);
    auto put_i32 = [&](int off, std::int32_t v) { std::memcpy(&header[off], &v, 4); };
    auto put_i16 = [&](int off, std::int16_t v) { std::memcpy(&header[off], &v, 2); };
    auto put_f32 = [&](int off, float v) { std::memcpy(&header[off], &v, 4); };
    put_i32(0, 348);
    put_i16(40, 3);
    put_i16(42, 4);  // x = columns
    put_i16(44, 3);  // y = rows
    put_i16(46, 2);  // z = slices
    put_i16(70, datatype);
    put_i16(72, bitpix);
    put_f32(108, 352.0f);
    put_f32(112, slope);
    put_f32(116, inter);
    std::memcpy(&header[344], "n+1\0", 4);
    std::ofstream out(p, std::ios::binary);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  };
  std::vector<float> f(24);
  std::vector<std::int16_t> s(24);
  for (int i = 0; i < 24; ++i) {
    f[i] = i * 0.25f;
    s[i] = static_cast<std::int16_t>(i);
  }
  write_nifti(dir / "f.nii", 16, 32, f.data(), f.size() * 4, 0.0f, 0.0f);
  write_nifti(dir / "s.nii", 4, 16, s.data(), s.size() * 2, 2.0f, 1.0f);
  const auto vf = read_volume(dir / "f.nii");
  const auto vs = read_volume(dir / "s.nii");
  ASSERT_EQ(vf.depth(), 2);
  ASSERT_EQ(vf.height(), 3);
  ASSERT_EQ(vf.width(), 4);
  EXPECT_FLOAT_EQ(vf(1, 2, 3), 23 * 0.25f);
  EXPECT_FLOAT_EQ(vs(1, 0, 1), 13 * 2.0f + 1.0f);
  EXPECT_THROW(read_volume(dir / "x.unknown"), Error);
}
