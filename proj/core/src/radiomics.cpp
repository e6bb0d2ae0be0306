#include "dcesynth/radiomics.hpp"

#include <algorithm>
#include <cmath>

#include "dcesynth/error.hpp"

namespace dcesynth::eval {

const std::array<std::string_view, kRadiomicsFeatureCount>& radiomics_feature_names() {
  static const std::array<std::string_view, kRadiomicsFeatureCount> names = {
      "mean", "std", "skewness", "kurtosis", "entropy", "p10", "p50", "p90", "energy",
      "glcm_contrast", "glcm_homogeneity", "glcm_energy", "glcm_correlation"};
  return names;
}

namespace {

bool in_region(const Image2D* mask, int r, int c) { return mask == nullptr || (*mask)(r, c) >= 0.5f; }

int quantize(float v, int levels) {
  const int q = static_cast<int>(std::floor(std::clamp(v, 0.0f, 1.0f) * static_cast<float>(levels)));
  return std::min(q, levels - 1);
}

// Linear interpolation between closest ranks.
double percentile(const std::vector<double>& sorted, double p) {
  const double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

Eigen::MatrixXd glcm(const Image2D& img, const Image2D* mask, int d_row, int d_col, int levels) {
  if (mask != nullptr && !mask->same_shape(img)) throw ContractError("glcm: mask shape mismatch");
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(levels, levels);
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      const int r2 = r + d_row;
      const int c2 = c + d_col;
      if (r2 < 0 || r2 >= img.height() || c2 < 0 || c2 >= img.width()) continue;
      if (!in_region(mask, r, c) || !in_region(mask, r2, c2)) continue;
      const int i = quantize(img(r, c), levels);
      const int j = quantize(img(r2, c2), levels);
      counts(i, j) += 1.0;
      counts(j, i) += 1.0;
    }
  }
  return counts;
}

GlcmFeatures glcm_features(const Eigen::MatrixXd& counts) {
  GlcmFeatures f;
  const double total = counts.sum();
  if (total <= 0.0) return f;
  const Eigen::MatrixXd p = counts / total;
  const auto n = p.rows();
  double mu_i = 0.0, mu_j = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      mu_i += double(i) * p(i, j);
      mu_j += double(j) * p(i, j);
    }
  }
  double var_i = 0.0, var_j = 0.0, cov = 0.0;
  f.contrast = 0.0;
  f.homogeneity = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = double(i - j);
      f.contrast += d * d * p(i, j);
      f.homogeneity += p(i, j) / (1.0 + d * d);
      var_i += (double(i) - mu_i) * (double(i) - mu_i) * p(i, j);
      var_j += (double(j) - mu_j) * (double(j) - mu_j) * p(i, j);
      cov += (double(i) - mu_i) * (double(j) - mu_j) * p(i, j);
    }
  }
  f.energy = std::sqrt(p.squaredNorm());
  const double denom = std::sqrt(var_i * var_j);
  f.correlation = denom > 1e-15 ? cov / denom : 1.0;
  return f;
}

std::optional<std::vector<double>> radiomics_features(const Image2D& img, const Image2D* mask) {
  if (mask != nullptr && !mask->same_shape(img)) throw ContractError("radiomics: mask shape mismatch");
  std::vector<double> v;
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      if (in_region(mask, r, c)) v.push_back(img(r, c));
    }
  }
  if (v.size() < kMinRegionPixels) return std::nullopt;

  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0, energy = 0.0;
  for (double x : v) {
    const double d = x - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
    energy += x * x;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  const double sd = std::sqrt(m2);
  const bool flat = m2 <= 1e-20;
  const double skew = flat ? 0.0 : m3 / std::pow(m2, 1.5);
  const double kurt = flat ? 0.0 : m4 / (m2 * m2);

  std::array<double, kEntropyBins> hist{};
  for (double x : v) hist[static_cast<std::size_t>(quantize(static_cast<float>(x), kEntropyBins))] += 1.0;
  double entropy = 0.0;
  for (double h : hist) {
    if (h > 0.0) entropy -= (h / n) * std::log2(h / n);
  }

  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end());

  const auto g0 = glcm(img, mask, 0, 1);
  const auto g90 = glcm(img, mask, 1, 0);
  std::vector<GlcmFeatures> angles;
  if (g0.sum() > 0.0) angles.push_back(glcm_features(g0));
  if (g90.sum() > 0.0) angles.push_back(glcm_features(g90));
  GlcmFeatures tex;
  if (!angles.empty()) {
    tex = {0.0, 0.0, 0.0, 0.0};
    for (const auto& a : angles) {
      tex.contrast += a.contrast / angles.size();
      tex.homogeneity += a.homogeneity / angles.size();
      tex.energy += a.energy / angles.size();
      tex.correlation += a.correlation / angles.size();
    }
  }

  return std::vector<double>{mean,
                             sd,
                             skew,
                             kurt,
                             entropy,
                             percentile(sorted, 10),
                             percentile(sorted, 50),
                             percentile(sorted, 90),
                             energy,
                             tex.contrast,
                             tex.homogeneity,
                             tex.energy,
                             tex.correlation};
}

void zscore_against(const Eigen::MatrixXd& reference, Eigen::MatrixXd& a, Eigen::MatrixXd& b) {
  if (reference.rows() == 0) throw ContractError("zscore: empty reference");
  const Eigen::RowVectorXd mean = reference.colwise().mean();
  Eigen::RowVectorXd sd = ((reference.rowwise() - mean).array().square().colwise().sum() /
                           static_cast<double>(reference.rows()))
                              .sqrt();
  for (Eigen::Index i = 0; i < sd.size(); ++i) {
    if (sd(i) <= 1e-12) sd(i) = 1.0;
  }
  a = (a.rowwise() - mean).array().rowwise() / sd.array();
  b = (b.rowwise() - mean).array().rowwise() / sd.array();
}

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Eigen::MatrixXd(0, kRadiomicsFeatureCount);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(Eigen::Index(r), Eigen::Index(c)) = rows[r][c];
  }
  return m;
}

}  // namespace dcesynth::eval
