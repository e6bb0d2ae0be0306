#include "dcesynth/frechet.hpp"

#include <algorithm>
#include <cmath>

#include "dcesynth/error.hpp"
#include "dcesynth/tensor_bridge.hpp"

namespace dcesynth::eval {

namespace {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(m));
  Eigen::VectorXd values = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

Moments moments(const Eigen::MatrixXd& features) {
  if (features.rows() < 1) throw ContractError("moments: empty feature matrix");
  Moments m;
  m.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - m.mean.transpose();
  const double denom = features.rows() > 1 ? static_cast<double>(features.rows() - 1) : 1.0;
  m.cov = (centered.transpose() * centered) / denom;
  return m;
}

double frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1, const Eigen::VectorXd& mu2,
                        const Eigen::MatrixXd& cov2) {
  const auto d = mu1.size();
  if (mu2.size() != d || cov1.rows() != d || cov1.cols() != d || cov2.rows() != d || cov2.cols() != d) {
    throw ContractError("frechet_distance: dimension mismatch");
  }
  if (!mu1.allFinite() || !mu2.allFinite() || !cov1.allFinite() || !cov2.allFinite()) {
    throw ContractError("frechet_distance: non-finite input");
  }
  const Eigen::MatrixXd s1 = symmetrize(cov1);
  const Eigen::MatrixXd s2 = symmetrize(cov2);
  // Tr (S1 S2)^(1/2) = Tr (S1^(1/2) S2 S1^(1/2))^(1/2), which is symmetric.
  const Eigen::MatrixXd r1 = psd_sqrt(s1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(r1 * s2 * r1), Eigen::EigenvaluesOnly);
  const double tr_sqrt = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double dist = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
  return std::max(dist, 0.0);
}

std::optional<double> frechet_between(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() < 2 || b.rows() < 2) return std::nullopt;
  const auto ma = moments(a);
  const auto mb = moments(b);
  return frechet_distance(ma.mean, ma.cov, mb.mean, mb.cov);
}

Eigen::MatrixXd embed_for_fid(const std::vector<Image2D>& images, const features::FeatureExtractor& extractor) {
  if (images.empty()) throw ContractError("embed_for_fid: empty image set");
  torch::NoGradGuard no_grad;
  const bool uniform = std::all_of(images.begin(), images.end(),
                                   [&](const Image2D& im) { return im.same_shape(images.front()); });
  std::vector<torch::Tensor> rows;
  if (uniform) {
    constexpr std::size_t kChunk = 32;
    for (std::size_t i = 0; i < images.size(); i += kChunk) {
      std::vector<Image2D> chunk(images.begin() + i, images.begin() + std::min(images.size(), i + kChunk));
      rows.push_back(extractor.pooled(features::resize_to_min(stack_images(chunk), extractor.min_size())));
    }
  } else {
    for (const auto& im : images) {
      rows.push_back(extractor.pooled(features::resize_to_min(to_tensor(im), extractor.min_size())));
    }
  }
  auto feats = torch::cat(rows, 0).to(torch::kFloat64).contiguous();
  Eigen::MatrixXd out(feats.size(0), feats.size(1));
  auto acc = feats.accessor<double, 2>();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = acc[r][c];
  }
  return out;
}

}  // namespace dcesynth::eval
