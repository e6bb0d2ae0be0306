#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <vector>

#include "dcesynth/schedule.hpp"
#include "dcesynth/unet.hpp"

namespace dcesynth::diffusion {

struct NoisedSample {
  torch::Tensor x_t;
  int t = 0;
  torch::Tensor eps;
};

/// x_t = sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps for a single timestep.
NoisedSample q_sample(const torch::Tensor& x0, int t, const torch::Tensor& eps, const DiffusionSchedule& schedule);

/// Batched variant with one timestep per item; x0/eps are [N, ...].
torch::Tensor q_sample_batch(const torch::Tensor& x0, const std::vector<int>& timesteps, const torch::Tensor& eps,
                             const DiffusionSchedule& schedule);

/// Reverse mean exactly as written for the x0-predicting model:
/// mu = (x_t - (1 - alpha_t) / sqrt(1 - abar_t) * x0_hat) / sqrt(alpha_t).
torch::Tensor posterior_mean(const torch::Tensor& x_t, const torch::Tensor& x0_hat, int t,
                             const DiffusionSchedule& schedule);

/// Same formula for a strided step t -> t_prev (alpha_t := abar_t / abar_prev).
torch::Tensor posterior_mean(const torch::Tensor& x_t, const torch::Tensor& x0_hat, const StepCoefficients& k);

/// Mean of q(x_prev | x_t, x0_hat), the Gaussian posterior of the forward process.
torch::Tensor q_posterior_mean(const torch::Tensor& x_t, const torch::Tensor& x0_hat, const StepCoefficients& k);

/// x0 predictor: (x_t [N,1,H,W], condition, timestep) -> x0_hat [N,1,H,W].
using X0Predictor =
    std::function<torch::Tensor(const torch::Tensor& x_t, const backbone::ConditionBundle& cond, int t)>;

struct SamplerOptions {
  int steps = 50;
  SigmaRule sigma_rule = SigmaRule::posterior;
  MeanRule mean_rule = MeanRule::q_posterior;
  double clamp_lo = 0.0;
  double clamp_hi = 1.0;
};

/// Ancestral sampling from x_T ~ N(0, I) down to t = 1. Item i of the batch
/// draws all its noise from a stream seeded by item_seeds[i]; no state is
/// shared between items. Returns the clamped x0_hat of the final step.
torch::Tensor sample(const X0Predictor& model, const backbone::ConditionBundle& cond,
                     const DiffusionSchedule& schedule, const std::vector<std::uint64_t>& item_seeds,
                     const SamplerOptions& options);

}  // namespace dcesynth::diffusion
