#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dcesynth::features {

/// Frozen convolutional feature network applied to single-channel images.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;

  /// Multi-layer feature maps for a [N, 1, H, W] batch in [0,1]. Gradients
  /// flow to the input; the network itself is never trained.
  virtual std::vector<torch::Tensor> feature_maps(const torch::Tensor& images) const = 0;

  /// Smallest spatial extent the network accepts.
  virtual int min_size() const = 0;
  virtual std::string name() const = 0;

  /// Global-average-pooled features of every layer, concatenated: [N, D].
  torch::Tensor pooled(const torch::Tensor& images) const;
};

/// Deterministic random-weight pyramid: three conv stages (8, 16, 32
/// channels) with SiLU activations and 2x average pooling between stages.
/// Weights come from a fixed-seed stream, so results are reproducible
/// across runs and machines without any downloaded model.
class RandomPyramidExtractor final : public FeatureExtractor {
 public:
  explicit RandomPyramidExtractor(std::uint64_t seed = kDefaultSeed);

  std::vector<torch::Tensor> feature_maps(const torch::Tensor& images) const override;
  int min_size() const override { return 16; }
  std::string name() const override { return "fallback-pyramid"; }

  static constexpr std::uint64_t kDefaultSeed = 0x5EEDF00DULL;

 private:
  struct Layer {
    torch::Tensor weight;
    torch::Tensor bias;
  };
  std::vector<Layer> layers_;
};

/// Pretrained network exported as TorchScript. The module receives a
/// [N, 3, H, W] ImageNet-normalized batch (grayscale replicated) and must
/// return a tensor or a tuple/list of tensors (one per layer).
class TorchScriptExtractor final : public FeatureExtractor {
 public:
  explicit TorchScriptExtractor(const std::filesystem::path& model_path, int min_size = 32);
  ~TorchScriptExtractor() override;

  std::vector<torch::Tensor> feature_maps(const torch::Tensor& images) const override;
  int min_size() const override { return min_size_; }
  std::string name() const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int min_size_;
};

enum class Backend { pretrained, fallback };

Backend parse_backend(std::string_view text);
std::string_view to_string(Backend backend);

/// `pretrained` requires a TorchScript file; when it is missing the error
/// message points at the fallback backend.
std::shared_ptr<const FeatureExtractor> make_extractor(Backend backend,
                                                       const std::optional<std::filesystem::path>& model_path = {});

/// Shared default fallback instance.
std::shared_ptr<const FeatureExtractor> default_extractor();

/// Bilinear upscaling so that both spatial dims are at least `min_size`
/// (aspect ratio preserved; images already large enough are returned as is).
torch::Tensor resize_to_min(const torch::Tensor& images, int min_size);

/// Bilinear resize to exactly size x size.
torch::Tensor resize_to(const torch::Tensor& images, int size);

}  // namespace dcesynth::features
