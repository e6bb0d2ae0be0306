#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "dcesynth/features.hpp"
#include "dcesynth/image.hpp"

namespace dcesynth::eval {

/// Sample mean and unbiased covariance of the rows of a feature matrix.
struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

Moments moments(const Eigen::MatrixXd& features);

/// |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)), clamped at zero.
double frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1, const Eigen::VectorXd& mu2,
                        const Eigen::MatrixXd& cov2);

/// Frechet distance between two feature sets; nullopt with fewer than two
/// rows in either set.
std::optional<double> frechet_between(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Pooled extractor features, one row per image. Images of differing shape
/// are embedded one at a time.
Eigen::MatrixXd embed_for_fid(const std::vector<Image2D>& images, const features::FeatureExtractor& extractor);

}  // namespace dcesynth::eval
