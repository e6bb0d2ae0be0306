#include <gtest/gtest.h>

#include "dcesynth/phantom.hpp"
#include "dcesynth/preprocess.hpp"
#include "helpers.hpp"

using namespace dcesynth;
using namespace dcesynth::phantom;

namespace {

double max_diff_in_mask(const preprocess::VolumeCase& c) {
  double best = -1.0;
  for (std::size_t i = 0; i < c.mask_volume.size(); ++i) {
    if (c.mask_volume.voxels()[i] > 0.5f) {
      best = std::max(best, double(c.post_volume.voxels()[i]) - c.pre_volume.voxels()[i]);
    }
  }
  return best;
}

}  // namespace

TEST(Phantom, NoLesionsMeansParenchymaOnly) {
  PhantomParams p;
  p.n_lesions = 0;
  const auto c = generate_case(p);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < c.pre_volume.size(); ++i) {
    max_diff = std::max(max_diff, double(c.post_volume.voxels()[i]) - c.pre_volume.voxels()[i]);
    ASSERT_EQ(c.mask_volume.voxels()[i], 0.0f);
  }
  EXPECT_LE(max_diff, 0.05 + 1e-6);
}

TEST(Phantom, PeakEnhancementInsideMask) {
  PhantomParams p;
  p.enhancement_range = {0.4, 0.4};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    p.seed = seed;
    const double peak = max_diff_in_mask(generate_case(p));
    EXPECT_GE(peak, 0.3);
    EXPECT_LE(peak, 0.4 + 1e-6);
  }
}

TEST(Phantom, DeterministicPerSeed) {
  PhantomParams p;
  p.seed = 9;
  const auto a = generate_case(p);
  const auto b = generate_case(p);
  EXPECT_EQ(a.pre_volume, b.pre_volume);
  EXPECT_EQ(a.post_volume, b.post_volume);
  EXPECT_EQ(a.mask_volume, b.mask_volume);
  p.seed = 10;
  EXPECT_NE(generate_case(p).pre_volume, a.pre_volume);
}

TEST(Phantom, EnhancementLocality) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    PhantomParams p;
    p.seed = seed;
    const auto c = generate_case(p);
    double in = 0, out = 0;
    std::size_t n_in = 0, n_out = 0;
    for (std::size_t i = 0; i < c.pre_volume.size(); ++i) {
      const double d = double(c.post_volume.voxels()[i]) - c.pre_volume.voxels()[i];
      if (c.mask_volume.voxels()[i] > 0.5f) {
        in += d;
        ++n_in;
      } else {
        out += d;
        ++n_out;
      }
    }
    ASSERT_GT(n_in, 0u);
    EXPECT_GE(in / n_in, 3.0 * (out / n_out)) << "seed " << seed;
  }
}

TEST(Phantom, ValuesInUnitRangeAndUnilateralVariant) {
  PhantomParams p;
  p.laterality = Laterality::unilateral;
  const auto c = generate_case(p);
  EXPECT_EQ(c.laterality, Laterality::unilateral);
  for (float v : c.pre_volume.voxels()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  for (float v : c.post_volume.voxels()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
}

TEST(Phantom, InvalidParamsRejected) {
  PhantomParams p;
  p.enhancement_range = {0.0, 0.3};
  EXPECT_THROW(generate_case(p), ContractError);
  p.enhancement_range = {0.2, 0.7};
  EXPECT_THROW(generate_case(p), ContractError);
}

TEST(Phantom, CorpusPreprocessesWithoutWarnings) {
  testutil::TempDir cases("corpus"), out("corpus_out");
  CorpusOptions o;
  o.cases = 4;
  o.image_size = 32;
  o.depth = 12;
  o.seed = 3;
  write_corpus(o, cases.path());
  const auto on_disk = preprocess::read_cases(cases.path());
  ASSERT_EQ(on_disk.size(), 4u);
  EXPECT_EQ(on_disk.back().split, Split::test);
  EXPECT_EQ(on_disk.front().split, Split::train);
  std::vector<preprocess::VolumeCase> vc;
  std::map<std::string, Split> split;
  for (const auto& c : on_disk) {
    vc.push_back(c.volume_case);
    split[c.volume_case.patient_id] = c.split;
  }
  const auto result = preprocess::build_dataset(vc, {}, split, out.path());
  EXPECT_TRUE(result.warnings.empty());
  for (const auto& r : result.manifest.records) EXPECT_TRUE(validate_pair(load_pair(out.path(), r)).empty());
}
