#pragma once

#include <torch/torch.h>

#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dcesynth/features.hpp"

namespace dcesynth::losses {

/// Losses accept a single image ([H, W] or [1, H, W]) or a batch
/// [N, 1, H, W]. Batched values are the mean of the per-item values.

struct TermValue {
  double raw = 0.0;
  double weight = 0.0;
};

/// Weighted sum of named terms. `total_tensor` is the differentiable scalar
/// that training backpropagates; `total` equals the weighted sum of the
/// reported raw values.
struct LossBreakdown {
  torch::Tensor total_tensor;
  double total = 0.0;
  std::vector<std::pair<std::string, TermValue>> components;
  std::vector<std::string> flags;

  const TermValue& component(std::string_view name) const;
  double weighted_sum() const;
  bool has_flag(std::string_view flag) const;
};

struct GlobalWeights {
  double mae = 0.3;
  double perceptual = 0.6;
  double tv = 0.15;
  double mse = 0.05;
};

/// ROI sub-weights: the global proportions normalized to sum to one.
struct RoiWeights {
  double mae = 0.3 / 1.1;
  double perceptual = 0.6 / 1.1;
  double tv = 0.15 / 1.1;
  double mse = 0.05 / 1.1;
};

struct TumorWeights {
  double global = 0.3;
  double roi = 0.6;
  double contrast = 0.05;
  double intensity = 0.05;
};

struct LossSettings {
  GlobalWeights global;
  RoiWeights roi;
  TumorWeights tumor;
  std::shared_ptr<const features::FeatureExtractor> extractor = features::default_extractor();
};

inline constexpr std::string_view kRoiAbsent = "roi_absent";

torch::Tensor mae(const torch::Tensor& pred, const torch::Tensor& target);
torch::Tensor mse(const torch::Tensor& pred, const torch::Tensor& target);

/// Anisotropic TV: mean of |horizontal| and |vertical| neighbour differences,
/// normalized by the number of differences.
torch::Tensor total_variation(const torch::Tensor& image);

/// Mean over layers of the mean squared difference between feature maps.
/// Inputs smaller than the extractor minimum are bilinearly upscaled first.
torch::Tensor perceptual_distance(const torch::Tensor& a, const torch::Tensor& b,
                                  const features::FeatureExtractor& extractor);

/// 0.3 MAE + 0.6 Perceptual + 0.15 TV(pred) + 0.05 MSE.
LossBreakdown global_loss(const torch::Tensor& pred, const torch::Tensor& target, const LossSettings& settings = {});

/// Tumor-region composite: masked MAE/MSE, perceptual distance on the mask's
/// bounding box (upscaled to the extractor minimum) and TV over neighbour
/// pairs lying inside the mask. Items without mask voxels contribute 0.
LossBreakdown roi_loss(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& mask,
                       const LossSettings& settings = {});

struct MaskedValue {
  torch::Tensor value;
  bool roi_absent = false;
};

/// MAE over mask pixels between relu(pred*M - pre*M) and relu(target*M - pre*M).
MaskedValue contrast_mae(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& pre,
                         const torch::Tensor& mask);

/// |mean(pred over M) - mean(target over M)|.
MaskedValue intensity_loss(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& mask);

/// 0.3 L_global + 0.6 L_ROI + 0.05 L_MAEcontrast + 0.05 L_intensity.
LossBreakdown tumor_total_loss(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& pre,
                               const torch::Tensor& mask, const LossSettings& settings = {});

}  // namespace dcesynth::losses
