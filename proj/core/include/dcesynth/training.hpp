#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcesynth/data_model.hpp"
#include "dcesynth/diffusion.hpp"
#include "dcesynth/error.hpp"
#include "dcesynth/losses.hpp"
#include "dcesynth/schedule.hpp"
#include "dcesynth/unet.hpp"
#include "dcesynth/variants.hpp"

namespace dcesynth::training {

struct OptimizerSettings {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-2;
};

inline constexpr double kDefaultEmaLambda = 0.999;

/// Stacked training/inference batch; every tensor is [N, 1, H, W].
struct Batch {
  torch::Tensor pre;
  torch::Tensor post;
  std::optional<torch::Tensor> mask;

  std::int64_t size() const { return pre.size(0); }
};

/// Pairs without a mask get an all-zero mask when any pair in the batch has one.
Batch make_batch(std::span<const SlicePair> pairs);

/// Channel order [pre, noisy_target] or [pre, noisy_target, mask].
torch::Tensor make_model_input(const torch::Tensor& pre, const torch::Tensor& noisy_target,
                               const std::optional<torch::Tensor>& mask, const VariantSpec& variant);

/// PC: x_post. SUB: (x_post - x_pre) / 0.5.
torch::Tensor make_target(const torch::Tensor& pre, const torch::Tensor& post, const VariantSpec& variant);
Image2D make_target(const SlicePair& pair, const VariantSpec& variant);

/// clamp(0.5 * sub_pred + pre, 0, 1).
torch::Tensor reconstruct_post(const torch::Tensor& sub_pred, const torch::Tensor& pre);
Image2D reconstruct_post(const Image2D& sub_pred, const Image2D& pre);

/// ema <- lambda * ema + (1 - lambda) * weights, in place and without autograd.
void ema_update(const std::vector<torch::Tensor>& ema, const std::vector<torch::Tensor>& weights, double lambda);

/// Everything the trainer mutates. The per-step random streams are derived
/// from (seed, step), so restoring `step` restores the RNG state exactly.
struct TrainState {
  backbone::ConditionalUNet model{nullptr};
  backbone::ConditionalUNet ema{nullptr};
  std::unique_ptr<torch::optim::AdamW> optimizer;
  OptimizerSettings optimizer_settings;
  std::int64_t step = 0;
  double ema_lambda = kDefaultEmaLambda;
  std::uint64_t seed = 0;

  static TrainState create(const backbone::ModelConfig& config, const OptimizerSettings& settings,
                           std::uint64_t seed, double ema_lambda = kDefaultEmaLambda);
};

/// Raised when a step produces a non-finite loss; `dump` is a JSON document
/// with the timesteps, loss components and input statistics.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& message, std::string dump) : Error(message), dump_(std::move(dump)) {}
  const std::string& dump() const { return dump_; }

 private:
  std::string dump_;
};

/// One optimizer update plus one EMA update. Draws a timestep per item and
/// Gaussian noise, noises the variant target, predicts x0 and evaluates the
/// loss on the post-contrast image (reconstructed for SUB variants).
losses::LossBreakdown train_step(const Batch& batch, const VariantSpec& variant, TrainState& state,
                                 const diffusion::DiffusionSchedule& schedule, const losses::LossSettings& settings);

struct CheckpointMeta {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  std::string variant;
  backbone::ModelConfig model;
  int T = 1000;
  double cosine_s = 0.008;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  double ema_lambda = kDefaultEmaLambda;
  OptimizerSettings optimizer;
};

void save_checkpoint(const std::filesystem::path& path, const TrainState& state, const VariantSpec& variant,
                     const diffusion::DiffusionSchedule& schedule);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  VariantSpec variant;
  diffusion::DiffusionSchedule schedule;
  TrainState state;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Hash of checkpoint metadata plus model and EMA weights.
std::string checkpoint_id(const std::filesystem::path& path);

/// Max |reconstruct_post(make_target(pair, SUB), pre) - post| over all pairs.
double subtraction_roundtrip_error(std::span<const SlicePair> pairs);

std::vector<SlicePair> load_split(const DatasetManifest& manifest, const std::filesystem::path& root, Split split);

struct TrainOptions {
  VariantSpec variant;
  std::filesystem::path manifest;
  std::filesystem::path out_dir;
  backbone::ModelConfig model;
  OptimizerSettings optimizer;
  losses::LossSettings losses;
  int T = 1000;
  double cosine_s = 0.008;
  /// 0 derives the budget from the variant's epochs and the training set size.
  std::int64_t steps = 0;
  int batch_size = 8;
  std::int64_t checkpoint_every = 500;
  double ema_lambda = kDefaultEmaLambda;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> resume_from;
  std::function<void(std::int64_t step, const losses::LossBreakdown&)> on_step;
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::int64_t steps = 0;
  std::vector<double> loss_history;
};

/// Full training loop: checkpoints every `checkpoint_every` steps, appends
/// a JSON line per step to loss_log.jsonl and writes final.pt at the end.
TrainResult train(const TrainOptions& options);

struct SampleOptions {
  diffusion::SamplerOptions sampler;
  std::uint64_t seed = 0;
  int batch_size = 8;
  Split split = Split::test;
};

/// Output file name of the generated post-contrast image for a record.
std::string generated_file_name(const ManifestRecord& record);

/// Samples every record of `split` with the EMA weights and writes the
/// post-contrast estimate (reconstructed for SUB) as 8-bit PNG into `out_dir`.
/// Returns the number of images written.
std::size_t sample_split(const LoadedCheckpoint& checkpoint, const std::filesystem::path& manifest,
                         const std::filesystem::path& out_dir, const SampleOptions& options);

/// Clamp range of x0 predictions for the variant's target.
std::pair<double, double> target_range(const VariantSpec& variant);

}  // namespace dcesynth::training
