#include <gtest/gtest.h>

#include <cmath>

#include "dcesynth/features.hpp"
#include "dcesynth/metrics.hpp"
#include "helpers.hpp"

using namespace dcesynth;
using namespace dcesynth::eval;

namespace {

// Direct windowed SSIM: explicit 2D Gaussian weights per window position.
double ssim_oracle(const Image2D& a, const Image2D& b, int win = 11, double sigma = 1.5) {
  const int r = win / 2;
  std::vector<double> wts;
  double wsum = 0.0;
  for (int i = -r; i <= r; ++i) {
    for (int j = -r; j <= r; ++j) {
      wts.push_back(std::exp(-(i * i + j * j) / (2 * sigma * sigma)));
      wsum += wts.back();
    }
  }
  for (auto& v : wts) v /= wsum;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  int count = 0;
  for (int y = r; y < a.height() - r; ++y) {
    for (int x = r; x < a.width() - r; ++x) {
      double mx = 0, my = 0;
      std::size_t k = 0;
      for (int i = -r; i <= r; ++i) {
        for (int j = -r; j <= r; ++j, ++k) {
          mx += wts[k] * a(y + i, x + j);
          my += wts[k] * b(y + i, x + j);
        }
      }
      double vx = 0, vy = 0, cxy = 0;
      k = 0;
      for (int i = -r; i <= r; ++i) {
        for (int j = -r; j <= r; ++j, ++k) {
          const double dx = a(y + i, x + j) - mx, dy = b(y + i, x + j) - my;
          vx += wts[k] * dx * dx;
          vy += wts[k] * dy * dy;
          cxy += wts[k] * dx * dy;
        }
      }
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / count;
}

}  // namespace

TEST(Metrics, IdentityPair) {
  const auto a = testutil::random_image(32, 32, 1);
  const auto m = paired_metrics(a, a, *features::default_extractor());
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_NEAR(m.ssim, 1.0, 1e-12);
  EXPECT_EQ(m.psnr, kPsnrIdentical);
  EXPECT_TRUE(std::isinf(m.psnr) && m.psnr > 0);
  EXPECT_EQ(m.lpips, 0.0);
}

TEST(Metrics, ConstantOffsetClosedForm) {
  const auto real = testutil::constant_image(16, 16, 0.0f);
  const auto gen = testutil::constant_image(16, 16, 0.5f);
  EXPECT_DOUBLE_EQ(mae(gen, real), 0.5);
  EXPECT_DOUBLE_EQ(mse(gen, real), 0.25);
  EXPECT_NEAR(psnr(gen, real), 10.0 * std::log10(4.0), 1e-12);
  EXPECT_NEAR(psnr(gen, real), 6.0206, 1e-4);
}

TEST(Metrics, PsnrMseRelation) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto a = testutil::random_image(16, 16, s), b = testutil::random_image(16, 16, s + 50);
    EXPECT_DOUBLE_EQ(psnr(a, b), -10.0 * std::log10(mse(a, b)));
  }
  EXPECT_EQ(psnr_from_mse(0.0), kPsnrIdentical);
}

TEST(Metrics, SsimMatchesBruteForce) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto a = testutil::random_image(32, 32, s);
    auto b = a;
    const auto noise = testutil::random_image(32, 32, s + 99, -0.2f, 0.2f);
    for (std::size_t i = 0; i < b.size(); ++i) b.pixels()[i] = std::clamp(b.pixels()[i] + noise.pixels()[i], 0.0f, 1.0f);
    EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b), 1e-5);
    const auto c = testutil::random_image(32, 32, s + 7);
    EXPECT_NEAR(ssim(a, c), ssim_oracle(a, c), 1e-5);
  }
}

TEST(Metrics, SsimSmallImageUsesFittingWindow) {
  const auto a = testutil::random_image(8, 10, 3), b = testutil::random_image(8, 10, 4);
  EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b, 7), 1e-5);
  const double v = ssim(a, b);
  EXPECT_GE(v, -1.0);
  EXPECT_LE(v, 1.0);
}

TEST(Metrics, ShapeMismatchRejected) {
  EXPECT_THROW(mae(Image2D(4, 4), Image2D(4, 5)), ContractError);
  EXPECT_THROW(ssim(Image2D(16, 16), Image2D(15, 16)), ContractError);
}

TEST(Metrics, LpipsIsPositiveAndMonotone) {
  const auto& ex = *features::default_extractor();
  const auto a = testutil::random_image(8, 8, 5);
  auto near = a, far = a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    near.pixels()[i] = std::min(1.0f, a.pixels()[i] + 0.02f);
    far.pixels()[i] = std::min(1.0f, a.pixels()[i] + 0.3f);
  }
  EXPECT_GT(lpips(a, near, ex), 0.0);
  EXPECT_GT(lpips(a, far, ex), lpips(a, near, ex));
}
