#pragma once

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include "dcesynth/image.hpp"

namespace dcesynth::eval {

inline constexpr int kRadiomicsFeatureCount = 13;
inline constexpr int kGlcmLevels = 32;
inline constexpr int kEntropyBins = 64;
inline constexpr std::size_t kMinRegionPixels = 4;

/// Fixed feature order of radiomics_features().
const std::array<std::string_view, kRadiomicsFeatureCount>& radiomics_feature_names();

/// Symmetric co-occurrence counts at distance 1 for one offset, over pixel
/// pairs that both lie in the region. Levels are floor(v * levels) capped
/// at levels - 1.
Eigen::MatrixXd glcm(const Image2D& img, const Image2D* mask, int d_row, int d_col, int levels = kGlcmLevels);

struct GlcmFeatures {
  double contrast = 0.0;
  double homogeneity = 1.0;
  double energy = 1.0;
  double correlation = 1.0;
};

/// Texture features of a (normalized or raw) co-occurrence matrix. An empty
/// or single-level matrix gives contrast 0 and homogeneity, energy and
/// correlation 1.
GlcmFeatures glcm_features(const Eigen::MatrixXd& counts);

/// First-order statistics {mean, std, skewness, kurtosis, entropy, p10, p50,
/// p90, energy} followed by GLCM {contrast, homogeneity, energy,
/// correlation} averaged over 0 and 90 degrees. nullopt when the region has
/// fewer than four pixels.
std::optional<std::vector<double>> radiomics_features(const Image2D& img, const Image2D* mask = nullptr);

/// Standardizes both sets by the per-feature mean and std of `reference`
/// (std 0 is treated as 1).
void zscore_against(const Eigen::MatrixXd& reference, Eigen::MatrixXd& a, Eigen::MatrixXd& b);

/// Stacks feature vectors into a matrix (one row each).
Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows);

}  // namespace dcesynth::eval
