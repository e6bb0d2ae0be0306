#pragma once

#include <torch/torch.h>

#include <vector>

#include "dcesynth/image.hpp"
#include "dcesynth/rng.hpp"

namespace dcesynth {

/// Image2D -> float32 tensor of shape [1, 1, H, W] (owning copy).
torch::Tensor to_tensor(const Image2D& image);

/// Stacks equally sized images into [N, 1, H, W].
torch::Tensor stack_images(const std::vector<Image2D>& images);

/// Any tensor with H*W elements arranged as [..., H, W] (single image).
Image2D to_image(const torch::Tensor& tensor);

/// Item `index` of an [N, 1, H, W] batch.
Image2D batch_item(const torch::Tensor& batch, std::int64_t index);

/// Standard normal tensor drawn from `rng` (float32, contiguous).
torch::Tensor gaussian_tensor(torch::IntArrayRef shape, Rng& rng);

}  // namespace dcesynth
