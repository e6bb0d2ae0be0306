#include "dcesynth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dcesynth/losses.hpp"
#include "dcesynth/tensor_bridge.hpp"

namespace dcesynth::eval {

namespace {

void check_pair(const Image2D& gen, const Image2D& real) {
  if (gen.empty() || !gen.same_shape(real)) throw ContractError("metric inputs must be non-empty and equally shaped");
}

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    k[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Valid-mode separable filtering of a row-major h x w field.
std::vector<double> filter_valid(const std::vector<double>& in, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1;
  const int oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * in[static_cast<std::size_t>(r) * w + c + i];
      tmp[static_cast<std::size_t>(r) * ow + c] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * tmp[static_cast<std::size_t>(r + i) * ow + c];
      out[static_cast<std::size_t>(r) * ow + c] = s;
    }
  }
  return out;
}

}  // namespace

double mae(const Image2D& gen, const Image2D& real) {
  check_pair(gen, real);
  double s = 0.0;
  for (std::size_t i = 0; i < gen.size(); ++i) s += std::abs(double(gen.pixels()[i]) - real.pixels()[i]);
  return s / static_cast<double>(gen.size());
}

double mse(const Image2D& gen, const Image2D& real) {
  check_pair(gen, real);
  double s = 0.0;
  for (std::size_t i = 0; i < gen.size(); ++i) {
    const double d = double(gen.pixels()[i]) - real.pixels()[i];
    s += d * d;
  }
  return s / static_cast<double>(gen.size());
}

double psnr_from_mse(double m) {
  if (m < 0.0 || !std::isfinite(m)) throw ContractError("psnr: invalid MSE");
  if (m == 0.0) return kPsnrIdentical;
  return -10.0 * std::log10(m);
}

double psnr(const Image2D& gen, const Image2D& real) { return psnr_from_mse(mse(gen, real)); }

double ssim(const Image2D& gen, const Image2D& real, const SsimParams& params) {
  check_pair(gen, real);
  const int h = gen.height();
  const int w = gen.width();
  int win = std::min({params.window, h, w});
  if (win % 2 == 0) --win;
  const auto k = gaussian_kernel(win, params.sigma);

  const std::size_t n = gen.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = gen.pixels()[i];
    y[i] = real.pixels()[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, k);
  const auto my = filter_valid(y, h, w, k);
  const auto sxx = filter_valid(xx, h, w, k);
  const auto syy = filter_valid(yy, h, w, k);
  const auto sxy = filter_valid(xy, h, w, k);

  const double c1 = std::pow(params.k1 * params.data_range, 2);
  const double c2 = std::pow(params.k2 * params.data_range, 2);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

double lpips(const Image2D& gen, const Image2D& real, const features::FeatureExtractor& extractor) {
  check_pair(gen, real);
  torch::NoGradGuard no_grad;
  auto a = features::resize_to_min(to_tensor(gen), extractor.min_size());
  auto b = features::resize_to_min(to_tensor(real), extractor.min_size());
  return losses::perceptual_distance(a, b, extractor).item<double>();
}

PairedMetrics paired_metrics(const Image2D& gen, const Image2D& real, const features::FeatureExtractor& extractor) {
  PairedMetrics m;
  m.mae = mae(gen, real);
  m.ssim = ssim(gen, real);
  m.psnr = psnr(gen, real);
  m.lpips = lpips(gen, real, extractor);
  return m;
}

}  // namespace dcesynth::eval
