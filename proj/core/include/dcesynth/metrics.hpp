#pragma once

#include <limits>

#include "dcesynth/features.hpp"
#include "dcesynth/image.hpp"

namespace dcesynth::eval {

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

double mae(const Image2D& gen, const Image2D& real);
double mse(const Image2D& gen, const Image2D& real);

/// 10 log10(1 / MSE); +inf for identical images.
double psnr(const Image2D& gen, const Image2D& real);
double psnr_from_mse(double mse);

/// Mean SSIM over all fully contained Gaussian windows. Images smaller than
/// the window use the largest odd window that fits.
double ssim(const Image2D& gen, const Image2D& real, const SsimParams& params = {});

/// Perceptual distance of the feature extractor; inputs smaller than the
/// extractor minimum are upscaled first.
double lpips(const Image2D& gen, const Image2D& real, const features::FeatureExtractor& extractor);

struct PairedMetrics {
  double mae = 0.0;
  double ssim = 0.0;
  double psnr = 0.0;
  double lpips = 0.0;
};

PairedMetrics paired_metrics(const Image2D& gen, const Image2D& real, const features::FeatureExtractor& extractor);

}  // namespace dcesynth::eval
