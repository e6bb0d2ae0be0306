#include "dcesynth/losses.hpp"

#include <algorithm>

#include "dcesynth/error.hpp"

namespace dcesynth::losses {

using torch::indexing::None;
using torch::indexing::Slice;

const TermValue& LossBreakdown::component(std::string_view name) const {
  for (const auto& [key, value] : components) {
    if (key == name) return value;
  }
  throw ContractError("loss breakdown has no component '" + std::string(name) + "'");
}

double LossBreakdown::weighted_sum() const {
  double sum = 0.0;
  for (const auto& [key, value] : components) sum += value.weight * value.raw;
  return sum;
}

bool LossBreakdown::has_flag(std::string_view flag) const {
  return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

namespace {

torch::Tensor as_batch(const torch::Tensor& x) {
  switch (x.dim()) {
    case 2: return x.unsqueeze(0).unsqueeze(0);
    case 3: return x.unsqueeze(0);
    case 4:
      if (x.size(1) != 1) throw ContractError("loss inputs must be single-channel");
      return x;
    default: throw ContractError("loss inputs must be [H,W], [1,H,W] or [N,1,H,W]");
  }
}

void require_same(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) throw ContractError(std::string(what) + ": shape mismatch");
}

LossBreakdown assemble(std::vector<std::pair<std::string, std::pair<torch::Tensor, double>>> terms) {
  LossBreakdown out;
  torch::Tensor total;
  for (auto& [name, term] : terms) {
    auto& [value, weight] = term;
    auto weighted = value * weight;
    total = total.defined() ? total + weighted : weighted;
    out.components.emplace_back(name, TermValue{value.detach().item<double>(), weight});
  }
  out.total_tensor = total;
  out.total = out.weighted_sum();
  return out;
}

/// Per-item mask pixel counts, [N].
torch::Tensor mask_counts(const torch::Tensor& mask) { return mask.sum({1, 2, 3}); }

bool all_absent(const torch::Tensor& counts) { return counts.max().item<double>() == 0.0; }

/// Per-item mean over mask pixels of `values` (already zero outside M), [N].
torch::Tensor masked_mean(const torch::Tensor& values, const torch::Tensor& counts) {
  return values.sum({1, 2, 3}) / counts.clamp_min(1.0);
}

}  // namespace

torch::Tensor mae(const torch::Tensor& pred, const torch::Tensor& target) {
  require_same(pred, target, "mae");
  return (pred - target).abs().mean();
}

torch::Tensor mse(const torch::Tensor& pred, const torch::Tensor& target) {
  require_same(pred, target, "mse");
  return (pred - target).square().mean();
}

torch::Tensor total_variation(const torch::Tensor& image) {
  auto x = as_batch(image);
  const auto h = x.size(2);
  const auto w = x.size(3);
  if (h < 2 || w < 2) throw ContractError("total_variation needs at least a 2x2 image");
  auto dx = (x.index({Slice(), Slice(), Slice(), Slice(1, None)}) - x.index({Slice(), Slice(), Slice(), Slice(None, -1)}))
                .abs()
                .sum({1, 2, 3});
  auto dy = (x.index({Slice(), Slice(), Slice(1, None), Slice()}) - x.index({Slice(), Slice(), Slice(None, -1), Slice()}))
                .abs()
                .sum({1, 2, 3});
  const double count = static_cast<double>(h * (w - 1) + (h - 1) * w);
  return ((dx + dy) / count).mean();
}

torch::Tensor perceptual_distance(const torch::Tensor& a, const torch::Tensor& b,
                                  const features::FeatureExtractor& extractor) {
  require_same(a, b, "perceptual_distance");
  auto fa = extractor.feature_maps(features::resize_to_min(as_batch(a), extractor.min_size()));
  auto fb = extractor.feature_maps(features::resize_to_min(as_batch(b), extractor.min_size()));
  torch::Tensor sum;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    auto d = (fa[i] - fb[i]).square().mean();
    sum = sum.defined() ? sum + d : d;
  }
  return sum / static_cast<double>(fa.size());
}

LossBreakdown global_loss(const torch::Tensor& pred_in, const torch::Tensor& target_in, const LossSettings& settings) {
  auto pred = as_batch(pred_in);
  auto target = as_batch(target_in);
  require_same(pred, target, "global_loss");
  const auto& w = settings.global;
  return assemble({
      {"mae", {mae(pred, target), w.mae}},
      {"perceptual", {perceptual_distance(pred, target, *settings.extractor), w.perceptual}},
      {"tv", {total_variation(pred), w.tv}},
      {"mse", {mse(pred, target), w.mse}},
  });
}

LossBreakdown roi_loss(const torch::Tensor& pred_in, const torch::Tensor& target_in, const torch::Tensor& mask_in,
                       const LossSettings& settings) {
  auto pred = as_batch(pred_in);
  auto target = as_batch(target_in);
  auto mask = as_batch(mask_in).to(pred.dtype());
  require_same(pred, target, "roi_loss");
  require_same(pred, mask, "roi_loss mask");

  const auto counts = mask_counts(mask);
  const auto diff = pred - target;
  auto roi_mae = masked_mean(diff.abs() * mask, counts).mean();
  auto roi_mse = masked_mean(diff.square() * mask, counts).mean();

  // TV over neighbour pairs with both pixels inside the mask.
  auto right = Slice(1, None);
  auto left = Slice(None, -1);
  auto pair_x = mask.index({Slice(), Slice(), Slice(), right}) * mask.index({Slice(), Slice(), Slice(), left});
  auto pair_y = mask.index({Slice(), Slice(), right, Slice()}) * mask.index({Slice(), Slice(), left, Slice()});
  auto dx = (pred.index({Slice(), Slice(), Slice(), right}) - pred.index({Slice(), Slice(), Slice(), left})).abs();
  auto dy = (pred.index({Slice(), Slice(), right, Slice()}) - pred.index({Slice(), Slice(), left, Slice()})).abs();
  auto pair_count = pair_x.sum({1, 2, 3}) + pair_y.sum({1, 2, 3});
  auto roi_tv = (((dx * pair_x).sum({1, 2, 3}) + (dy * pair_y).sum({1, 2, 3})) / pair_count.clamp_min(1.0)).mean();

  // Perceptual term on each item's mask bounding box.
  const auto n = pred.size(0);
  std::vector<torch::Tensor> per_item;
  per_item.reserve(static_cast<std::size_t>(n));
  const auto extent = settings.extractor->min_size();
  for (std::int64_t i = 0; i < n; ++i) {
    auto m = mask[i][0].detach();
    auto nz = torch::nonzero(m);
    if (nz.size(0) == 0) {
      per_item.push_back(torch::zeros({}, pred.options()));
      continue;
    }
    const auto r0 = nz.index({Slice(), 0}).min().item<std::int64_t>();
    const auto r1 = nz.index({Slice(), 0}).max().item<std::int64_t>() + 1;
    const auto c0 = nz.index({Slice(), 1}).min().item<std::int64_t>();
    const auto c1 = nz.index({Slice(), 1}).max().item<std::int64_t>() + 1;
    auto crop = [&](const torch::Tensor& x) {
      return features::resize_to_min(x.index({Slice(i, i + 1), Slice(), Slice(r0, r1), Slice(c0, c1)}), extent);
    };
    per_item.push_back(perceptual_distance(crop(pred), crop(target), *settings.extractor));
  }
  auto roi_perceptual = torch::stack(per_item).mean();

  const auto& w = settings.roi;
  auto out = assemble({
      {"mae", {roi_mae, w.mae}},
      {"perceptual", {roi_perceptual, w.perceptual}},
      {"tv", {roi_tv, w.tv}},
      {"mse", {roi_mse, w.mse}},
  });
  if (all_absent(counts)) out.flags.emplace_back(kRoiAbsent);
  return out;
}

MaskedValue contrast_mae(const torch::Tensor& pred_in, const torch::Tensor& target_in, const torch::Tensor& pre_in,
                         const torch::Tensor& mask_in) {
  auto pred = as_batch(pred_in);
  auto target = as_batch(target_in);
  auto pre = as_batch(pre_in);
  auto mask = as_batch(mask_in).to(pred.dtype());
  require_same(pred, target, "contrast_mae");
  require_same(pred, pre, "contrast_mae pre");
  require_same(pred, mask, "contrast_mae mask");

  const auto counts = mask_counts(mask);
  auto pre_m = pre * mask;
  auto r_hat = torch::relu(pred * mask - pre_m);
  auto r = torch::relu(target * mask - pre_m);
  return {masked_mean((r_hat - r).abs() * mask, counts).mean(), all_absent(counts)};
}

MaskedValue intensity_loss(const torch::Tensor& pred_in, const torch::Tensor& target_in, const torch::Tensor& mask_in) {
  auto pred = as_batch(pred_in);
  auto target = as_batch(target_in);
  auto mask = as_batch(mask_in).to(pred.dtype());
  require_same(pred, target, "intensity_loss");
  require_same(pred, mask, "intensity_loss mask");

  const auto counts = mask_counts(mask);
  auto mu_pred = masked_mean(pred * mask, counts);
  auto mu_target = masked_mean(target * mask, counts);
  return {(mu_pred - mu_target).abs().mean(), all_absent(counts)};
}

LossBreakdown tumor_total_loss(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& pre,
                               const torch::Tensor& mask, const LossSettings& settings) {
  auto global = global_loss(pred, target, settings);
  auto roi = roi_loss(pred, target, mask, settings);
  auto contrast = contrast_mae(pred, target, pre, mask);
  auto intensity = intensity_loss(pred, target, mask);

  const auto& w = settings.tumor;
  auto out = assemble({
      {"global", {global.total_tensor, w.global}},
      {"roi", {roi.total_tensor, w.roi}},
      {"mae_contrast", {contrast.value, w.contrast}},
      {"intensity", {intensity.value, w.intensity}},
  });
  out.flags = roi.flags;
  return out;
}

}  // namespace dcesynth::losses
