#include "dcesynth/tensor_bridge.hpp"

#include <algorithm>

namespace dcesynth {

torch::Tensor to_tensor(const Image2D& image) {
  auto t = torch::empty({1, 1, image.height(), image.width()}, torch::kFloat32);
  std::copy(image.pixels().begin(), image.pixels().end(), t.data_ptr<float>());
  return t;
}

torch::Tensor stack_images(const std::vector<Image2D>& images) {
  if (images.empty()) throw ContractError("stack_images: empty list");
  const int h = images.front().height();
  const int w = images.front().width();
  auto t = torch::empty({static_cast<std::int64_t>(images.size()), 1, h, w}, torch::kFloat32);
  float* dst = t.data_ptr<float>();
  for (const auto& img : images) {
    if (img.height() != h || img.width() != w) throw ContractError("stack_images: shape mismatch");
    dst = std::copy(img.pixels().begin(), img.pixels().end(), dst);
  }
  return t;
}

Image2D to_image(const torch::Tensor& tensor) {
  if (tensor.dim() < 2) throw ContractError("to_image: tensor needs at least 2 dims");
  const auto h = tensor.size(-2);
  const auto w = tensor.size(-1);
  if (tensor.numel() != h * w) throw ContractError("to_image: tensor holds more than one image");
  auto c = tensor.detach().to(torch::kFloat32).contiguous();
  const float* src = c.data_ptr<float>();
  return Image2D(static_cast<int>(h), static_cast<int>(w), std::vector<float>(src, src + h * w));
}

Image2D batch_item(const torch::Tensor& batch, std::int64_t index) { return to_image(batch[index]); }

torch::Tensor gaussian_tensor(torch::IntArrayRef shape, Rng& rng) {
  auto t = torch::empty(shape, torch::kFloat32);
  fill_gaussian(rng, std::span<float>(t.data_ptr<float>(), static_cast<std::size_t>(t.numel())));
  return t;
}

}  // namespace dcesynth
