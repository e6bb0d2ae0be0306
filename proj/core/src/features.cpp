#include "dcesynth/features.hpp"

#include <torch/script.h>

#include <cmath>

#include "dcesynth/error.hpp"
#include "dcesynth/rng.hpp"
#include "dcesynth/tensor_bridge.hpp"

namespace dcesynth::features {

namespace F = torch::nn::functional;

torch::Tensor FeatureExtractor::pooled(const torch::Tensor& images) const {
  std::vector<torch::Tensor> parts;
  for (const auto& fmap : feature_maps(images)) parts.push_back(fmap.mean({2, 3}));
  return torch::cat(parts, 1);
}

RandomPyramidExtractor::RandomPyramidExtractor(std::uint64_t seed) {
  Rng rng(splitmix64(seed));
  const std::vector<std::pair<int, int>> shapes = {{1, 8}, {8, 8}, {8, 16}, {16, 32}};
  for (auto [in_ch, out_ch] : shapes) {
    Layer layer;
    layer.weight = gaussian_tensor({out_ch, in_ch, 3, 3}, rng) * std::sqrt(2.0 / (in_ch * 9));
    layer.bias = gaussian_tensor({out_ch}, rng) * 0.1;
    layers_.push_back(std::move(layer));
  }
}

std::vector<torch::Tensor> RandomPyramidExtractor::feature_maps(const torch::Tensor& images) const {
  if (images.dim() != 4 || images.size(1) != 1) throw ContractError("feature extractor expects [N, 1, H, W]");
  if (images.size(2) < min_size() || images.size(3) < min_size()) {
    throw ContractError("feature extractor input smaller than " + std::to_string(min_size()));
  }
  const auto dtype = images.scalar_type();
  auto conv = [&](const torch::Tensor& x, const Layer& l) {
    return torch::silu(F::conv2d(x, l.weight.to(dtype), F::Conv2dFuncOptions().bias(l.bias.to(dtype)).padding(1)));
  };
  std::vector<torch::Tensor> out;
  auto x = images * 2.0 - 1.0;
  x = conv(conv(x, layers_[0]), layers_[1]);
  out.push_back(x);
  x = conv(F::avg_pool2d(x, F::AvgPool2dFuncOptions(2)), layers_[2]);
  out.push_back(x);
  x = conv(F::avg_pool2d(x, F::AvgPool2dFuncOptions(2)), layers_[3]);
  out.push_back(x);
  return out;
}

struct TorchScriptExtractor::Impl {
  mutable torch::jit::script::Module module;
  std::string path;
};

TorchScriptExtractor::TorchScriptExtractor(const std::filesystem::path& model_path, int min_size)
    : impl_(std::make_unique<Impl>()), min_size_(min_size) {
  if (!std::filesystem::exists(model_path)) {
    throw IoError("pretrained feature network not found at " + model_path.string() +
                  "; use the fallback extractor (loss.perceptual.backend = \"fallback\")");
  }
  try {
    impl_->module = torch::jit::load(model_path.string());
  } catch (const c10::Error& e) {
    throw IoError("cannot load TorchScript feature network " + model_path.string() + ": " + e.what_without_backtrace());
  }
  impl_->module.eval();
  for (auto p : impl_->module.parameters()) p.set_requires_grad(false);
  impl_->path = model_path.string();
}

TorchScriptExtractor::~TorchScriptExtractor() = default;

std::string TorchScriptExtractor::name() const { return "torchscript:" + impl_->path; }

std::vector<torch::Tensor> TorchScriptExtractor::feature_maps(const torch::Tensor& images) const {
  if (images.dim() != 4 || images.size(1) != 1) throw ContractError("feature extractor expects [N, 1, H, W]");
  const auto opts = images.options();
  auto mean = torch::tensor({0.485, 0.456, 0.406}, torch::kFloat64).to(opts).reshape({1, 3, 1, 1});
  auto stdev = torch::tensor({0.229, 0.224, 0.225}, torch::kFloat64).to(opts).reshape({1, 3, 1, 1});
  auto x = (images.expand({-1, 3, -1, -1}) - mean) / stdev;
  auto module_dtype = torch::kFloat32;
  for (const auto& p : impl_->module.parameters()) {
    module_dtype = p.scalar_type();
    break;
  }
  x = x.to(module_dtype);
  auto result = impl_->module.forward({x});
  std::vector<torch::Tensor> out;
  if (result.isTensor()) {
    out.push_back(result.toTensor().to(images.scalar_type()));
  } else if (result.isTuple()) {
    for (const auto& v : result.toTupleRef().elements()) out.push_back(v.toTensor().to(images.scalar_type()));
  } else if (result.isList()) {
    for (const auto& v : result.toListRef()) out.push_back(v.toTensor().to(images.scalar_type()));
  } else {
    throw Error("TorchScript feature network returned an unsupported type");
  }
  return out;
}

Backend parse_backend(std::string_view text) {
  if (text == "pretrained") return Backend::pretrained;
  if (text == "fallback") return Backend::fallback;
  throw ConfigError("unknown perceptual backend '" + std::string(text) + "' (expected pretrained|fallback)");
}

std::string_view to_string(Backend backend) { return backend == Backend::pretrained ? "pretrained" : "fallback"; }

std::shared_ptr<const FeatureExtractor> make_extractor(Backend backend,
                                                       const std::optional<std::filesystem::path>& model_path) {
  if (backend == Backend::fallback) return default_extractor();
  if (!model_path) {
    throw ConfigError("pretrained perceptual backend requires a TorchScript model path; "
                      "use the fallback extractor (loss.perceptual.backend = \"fallback\") when none is available");
  }
  return std::make_shared<TorchScriptExtractor>(*model_path);
}

std::shared_ptr<const FeatureExtractor> default_extractor() {
  static const auto instance = std::make_shared<const RandomPyramidExtractor>();
  return instance;
}

torch::Tensor resize_to_min(const torch::Tensor& images, int min_size) {
  const auto h = images.size(2);
  const auto w = images.size(3);
  if (h >= min_size && w >= min_size) return images;
  const double scale = static_cast<double>(min_size) / static_cast<double>(std::min(h, w));
  const auto nh = std::max<std::int64_t>(min_size, static_cast<std::int64_t>(std::ceil(h * scale)));
  const auto nw = std::max<std::int64_t>(min_size, static_cast<std::int64_t>(std::ceil(w * scale)));
  return F::interpolate(images, F::InterpolateFuncOptions()
                                    .size(std::vector<std::int64_t>{nh, nw})
                                    .mode(torch::kBilinear)
                                    .align_corners(false));
}

torch::Tensor resize_to(const torch::Tensor& images, int size) {
  if (images.size(2) == size && images.size(3) == size) return images;
  return F::interpolate(images, F::InterpolateFuncOptions()
                                    .size(std::vector<std::int64_t>{size, size})
                                    .mode(torch::kBilinear)
                                    .align_corners(false));
}

}  // namespace dcesynth::features
