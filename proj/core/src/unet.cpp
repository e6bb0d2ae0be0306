#include "dcesynth/unet.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "dcesynth/error.hpp"

namespace dcesynth::backbone {

namespace nn = torch::nn;

void ModelConfig::validate() const {
  if (in_channels != 2 && in_channels != 3) throw ContractError("in_channels must be 2 or 3");
  if (depth < 1) throw ContractError("depth must be >= 1");
  if (base_width < 8) throw ContractError("base_width must be >= 8");
  if (time_embed_dim < 4 || time_embed_dim % 2 != 0) throw ContractError("time_embed_dim must be an even number >= 4");
}

namespace {

nn::GroupNorm group_norm(int channels) { return nn::GroupNorm(nn::GroupNormOptions(std::gcd(8, channels), channels)); }

nn::Conv2d conv3x3(int in_ch, int out_ch, int stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in_ch, out_ch, 3).stride(stride).padding(1));
}

int stage_width(const ModelConfig& c, int stage) { return c.base_width << std::min(stage, 3); }

}  // namespace

torch::Tensor timestep_embedding(const torch::Tensor& timesteps, int dim) {
  const int half = dim / 2;
  auto t = timesteps.to(torch::kFloat32).reshape({-1, 1});
  auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, torch::kFloat32) / static_cast<double>(half));
  auto args = t * freqs.unsqueeze(0);
  return torch::cat({torch::sin(args), torch::cos(args)}, 1);
}

ResBlockImpl::ResBlockImpl(int in_ch, int out_ch, int time_dim) {
  norm1 = register_module("norm1", group_norm(in_ch));
  conv1 = register_module("conv1", conv3x3(in_ch, out_ch));
  time_proj = register_module("time_proj", nn::Linear(time_dim, out_ch));
  norm2 = register_module("norm2", group_norm(out_ch));
  conv2 = register_module("conv2", conv3x3(out_ch, out_ch));
  if (in_ch != out_ch) {
    skip = register_module("skip", nn::Conv2d(nn::Conv2dOptions(in_ch, out_ch, 1)));
  }
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb) {
  auto h = conv1->forward(torch::silu(norm1->forward(x)));
  h = h + time_proj->forward(torch::silu(temb)).unsqueeze(-1).unsqueeze(-1);
  h = conv2->forward(torch::silu(norm2->forward(h)));
  return (skip ? skip->forward(x) : x) + h;
}

SelfAttentionImpl::SelfAttentionImpl(int channels) : channels_(channels) {
  norm = register_module("norm", group_norm(channels));
  qkv = register_module("qkv", nn::Conv2d(nn::Conv2dOptions(channels, 3 * channels, 1)));
  proj = register_module("proj", nn::Conv2d(nn::Conv2dOptions(channels, channels, 1)));
}

torch::Tensor SelfAttentionImpl::forward(const torch::Tensor& x) {
  const auto n = x.size(0);
  const auto h = x.size(2);
  const auto w = x.size(3);
  auto parts = qkv->forward(norm->forward(x)).reshape({n, 3, channels_, h * w}).unbind(1);
  auto q = parts[0].transpose(1, 2);  // [N, HW, C]
  auto k = parts[1];                  // [N, C, HW]
  auto v = parts[2].transpose(1, 2);  // [N, HW, C]
  auto attn = torch::softmax(torch::bmm(q, k) / std::sqrt(static_cast<double>(channels_)), -1);
  auto out = torch::bmm(attn, v).transpose(1, 2).reshape({n, channels_, h, w});
  return x + proj->forward(out);
}

ConditionalUNetImpl::ConditionalUNetImpl(ModelConfig config) : config_(config) {
  config_.validate();
  const int temb = config_.time_embed_dim;
  time_mlp = register_module(
      "time_mlp", nn::Sequential(nn::Linear(config_.base_width, temb), nn::SiLU(), nn::Linear(temb, temb)));
  in_conv = register_module("in_conv", conv3x3(config_.in_channels, config_.base_width));

  down_blocks = register_module("down_blocks", nn::ModuleList());
  downsamplers = register_module("downsamplers", nn::ModuleList());
  int ch = config_.base_width;
  for (int i = 0; i < config_.depth; ++i) {
    const int out = stage_width(config_, i);
    down_blocks->push_back(ResBlock(ch, out, temb));
    downsamplers->push_back(conv3x3(out, out, 2));
    ch = out;
  }

  mid1 = register_module("mid1", ResBlock(ch, ch, temb));
  if (config_.attention_at_bottleneck) mid_attn = register_module("mid_attn", SelfAttention(ch));
  mid2 = register_module("mid2", ResBlock(ch, ch, temb));

  upsamplers = register_module("upsamplers", nn::ModuleList());
  up_blocks = register_module("up_blocks", nn::ModuleList());
  for (int i = config_.depth - 1; i >= 0; --i) {
    const int skip_ch = stage_width(config_, i);
    upsamplers->push_back(conv3x3(ch, ch));
    up_blocks->push_back(ResBlock(ch + skip_ch, skip_ch, temb));
    ch = skip_ch;
  }
  out_norm = register_module("out_norm", group_norm(ch));
  out_conv = register_module("out_conv", conv3x3(ch, 1));
}

torch::Tensor ConditionalUNetImpl::forward(const torch::Tensor& input, const torch::Tensor& timesteps) {
  if (input.dim() != 4 || input.size(1) != config_.in_channels) {
    throw ContractError("model expects [N, " + std::to_string(config_.in_channels) + ", H, W] input");
  }
  const std::int64_t factor = std::int64_t{1} << config_.depth;
  if (input.size(2) % factor != 0 || input.size(3) % factor != 0) {
    throw ContractError("spatial dims must be divisible by " + std::to_string(factor));
  }
  if (timesteps.numel() != input.size(0)) throw ContractError("one timestep per batch item required");

  auto temb = time_mlp->forward(timestep_embedding(timesteps, config_.base_width).to(input.dtype()));
  auto h = in_conv->forward(input);
  std::vector<torch::Tensor> skips;
  for (int i = 0; i < config_.depth; ++i) {
    h = down_blocks[static_cast<std::size_t>(i)]->as<ResBlock>()->forward(h, temb);
    skips.push_back(h);
    h = downsamplers[static_cast<std::size_t>(i)]->as<nn::Conv2d>()->forward(h);
  }
  h = mid1->forward(h, temb);
  if (mid_attn) h = mid_attn->forward(h);
  h = mid2->forward(h, temb);
  for (int i = 0; i < config_.depth; ++i) {
    h = torch::nn::functional::interpolate(
        h, torch::nn::functional::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
    h = upsamplers[static_cast<std::size_t>(i)]->as<nn::Conv2d>()->forward(h);
    h = torch::cat({h, skips[static_cast<std::size_t>(config_.depth - 1 - i)]}, 1);
    h = up_blocks[static_cast<std::size_t>(i)]->as<ResBlock>()->forward(h, temb);
  }
  return out_conv->forward(torch::silu(out_norm->forward(h)));
}

torch::Tensor stack_model_input(const torch::Tensor& x_t, const ConditionBundle& cond, int in_channels) {
  if (!cond.pre.defined()) throw ContractError("condition bundle has no pre-contrast image");
  if (cond.pre.sizes() != x_t.sizes()) throw ContractError("pre-contrast and noisy target shapes differ");
  const bool wants_mask = in_channels == 3;
  if (wants_mask && !cond.mask) throw ContractError("channel mismatch: mask-conditioned model requires a mask");
  if (!wants_mask && cond.mask) throw ContractError("channel mismatch: model without mask channel was given a mask");
  if (cond.mask) {
    if (cond.mask->sizes() != x_t.sizes()) throw ContractError("mask and noisy target shapes differ");
    return torch::cat({cond.pre, x_t, cond.mask->to(x_t.dtype())}, 1);
  }
  return torch::cat({cond.pre, x_t}, 1);
}

torch::Tensor ConditionalUNetImpl::predict(const torch::Tensor& x_t, const ConditionBundle& cond,
                                           const torch::Tensor& timesteps) {
  return forward(stack_model_input(x_t, cond, config_.in_channels), timesteps);
}

ConditionalUNet clone_model(const ConditionalUNet& model) {
  ConditionalUNet copy(model->config());
  auto src = model->parameters();
  if (!src.empty()) copy->to(src.front().scalar_type());
  torch::NoGradGuard no_grad;
  auto dst = copy->parameters();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i].copy_(src[i]);
  return copy;
}

}  // namespace dcesynth::backbone
