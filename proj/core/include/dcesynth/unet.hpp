#pragma once

#include <torch/torch.h>

#include <optional>
#include <vector>

namespace dcesynth::backbone {

/// Structural hyperparameters of the conditional U-Net.
struct ModelConfig {
  int in_channels = 2;  // 2: [pre, x_t]; 3: [pre, x_t, mask]
  int base_width = 32;
  int depth = 3;
  bool attention_at_bottleneck = true;
  int time_embed_dim = 128;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Conditioning images for one batch, each [N, 1, H, W].
struct ConditionBundle {
  torch::Tensor pre;
  std::optional<torch::Tensor> mask;
};

/// Sinusoidal embedding of integer timesteps, [N] -> [N, dim].
torch::Tensor timestep_embedding(const torch::Tensor& timesteps, int dim);

class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int in_ch, int out_ch, int time_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb);

 private:
  torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, skip{nullptr};
  torch::nn::Linear time_proj{nullptr};
};
TORCH_MODULE(ResBlock);

/// Single-head spatial self-attention with a residual connection.
class SelfAttentionImpl : public torch::nn::Module {
 public:
  explicit SelfAttentionImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::GroupNorm norm{nullptr};
  torch::nn::Conv2d qkv{nullptr}, proj{nullptr};
  int channels_;
};
TORCH_MODULE(SelfAttention);

/// x0-predicting U-Net: residual blocks per resolution, self-attention at
/// the bottleneck, timestep embedding injected into every residual block.
/// Conditioning is channel concatenation of the noisy target with the
/// pre-contrast image (and the mask for mask-conditioned variants).
class ConditionalUNetImpl : public torch::nn::Module {
 public:
  explicit ConditionalUNetImpl(ModelConfig config);

  /// Raw network call on an already stacked [N, in_channels, H, W] input.
  torch::Tensor forward(const torch::Tensor& input, const torch::Tensor& timesteps);

  /// Validates the conditioning against the config, stacks
  /// [pre, x_t(, mask)] and predicts x0 as [N, 1, H, W].
  torch::Tensor predict(const torch::Tensor& x_t, const ConditionBundle& cond, const torch::Tensor& timesteps);

  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  torch::nn::Sequential time_mlp{nullptr};
  torch::nn::Conv2d in_conv{nullptr};
  torch::nn::ModuleList down_blocks{nullptr}, downsamplers{nullptr};
  ResBlock mid1{nullptr}, mid2{nullptr};
  SelfAttention mid_attn{nullptr};
  torch::nn::ModuleList upsamplers{nullptr}, up_blocks{nullptr};
  torch::nn::GroupNorm out_norm{nullptr};
  torch::nn::Conv2d out_conv{nullptr};
};
TORCH_MODULE(ConditionalUNet);

/// Channel-stacks the model input in the fixed order [pre, x_t(, mask)].
/// Throws ContractError when mask presence disagrees with `in_channels`
/// or when shapes differ.
torch::Tensor stack_model_input(const torch::Tensor& x_t, const ConditionBundle& cond, int in_channels);

/// Deep copy with identical weights (used for EMA shadows and tests).
ConditionalUNet clone_model(const ConditionalUNet& model);

}  // namespace dcesynth::backbone
