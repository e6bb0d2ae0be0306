#include "dcesynth/diffusion.hpp"

#include <cmath>
#include <string>

#include "dcesynth/error.hpp"
#include "dcesynth/rng.hpp"
#include "dcesynth/tensor_bridge.hpp"

namespace dcesynth::diffusion {

namespace {

void check_t(int t, const DiffusionSchedule& schedule) {
  if (t < 1 || t > schedule.T) {
    throw ContractError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(schedule.T) + "]");
  }
}

}  // namespace

NoisedSample q_sample(const torch::Tensor& x0, int t, const torch::Tensor& eps, const DiffusionSchedule& schedule) {
  check_t(t, schedule);
  if (x0.sizes() != eps.sizes()) throw ContractError("q_sample: x0 and eps shapes differ");
  auto x_t = schedule.sqrt_alpha_bar(t) * x0 + schedule.sqrt_one_minus_alpha_bar(t) * eps;
  return {x_t, t, eps};
}

torch::Tensor q_sample_batch(const torch::Tensor& x0, const std::vector<int>& timesteps, const torch::Tensor& eps,
                             const DiffusionSchedule& schedule) {
  if (x0.sizes() != eps.sizes()) throw ContractError("q_sample: x0 and eps shapes differ");
  if (static_cast<std::int64_t>(timesteps.size()) != x0.size(0)) throw ContractError("q_sample: one timestep per item");
  std::vector<double> a(timesteps.size());
  std::vector<double> b(timesteps.size());
  for (std::size_t i = 0; i < timesteps.size(); ++i) {
    check_t(timesteps[i], schedule);
    a[i] = schedule.sqrt_alpha_bar(timesteps[i]);
    b[i] = schedule.sqrt_one_minus_alpha_bar(timesteps[i]);
  }
  std::vector<std::int64_t> shape(static_cast<std::size_t>(x0.dim()), 1);
  shape[0] = x0.size(0);
  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto ta = torch::tensor(a, opts).reshape(shape).to(x0.dtype());
  auto tb = torch::tensor(b, opts).reshape(shape).to(x0.dtype());
  return ta * x0 + tb * eps;
}

torch::Tensor posterior_mean(const torch::Tensor& x_t, const torch::Tensor& x0_hat, const StepCoefficients& k) {
  if (x_t.sizes() != x0_hat.sizes()) throw ContractError("posterior_mean: shape mismatch");
  const double coef = (1.0 - k.alpha) / std::sqrt(1.0 - k.alpha_bar);
  return (x_t - coef * x0_hat) / std::sqrt(k.alpha);
}

torch::Tensor posterior_mean(const torch::Tensor& x_t, const torch::Tensor& x0_hat, int t,
                             const DiffusionSchedule& schedule) {
  check_t(t, schedule);
  return posterior_mean(x_t, x0_hat, step_coefficients(schedule, t, t - 1, SigmaRule::posterior));
}

torch::Tensor q_posterior_mean(const torch::Tensor& x_t, const torch::Tensor& x0_hat, const StepCoefficients& k) {
  if (x_t.sizes() != x0_hat.sizes()) throw ContractError("q_posterior_mean: shape mismatch");
  const double beta = 1.0 - k.alpha;
  const double denom = 1.0 - k.alpha_bar;
  const double c0 = std::sqrt(k.alpha_bar_prev) * beta / denom;
  const double ct = std::sqrt(k.alpha) * (1.0 - k.alpha_bar_prev) / denom;
  return c0 * x0_hat + ct * x_t;
}

torch::Tensor sample(const X0Predictor& model, const backbone::ConditionBundle& cond,
                     const DiffusionSchedule& schedule, const std::vector<std::uint64_t>& item_seeds,
                     const SamplerOptions& options) {
  torch::NoGradGuard no_grad;
  const auto n = cond.pre.size(0);
  if (static_cast<std::int64_t>(item_seeds.size()) != n) throw ContractError("sample: one seed per batch item");
  const auto item_shape = std::vector<std::int64_t>{1, cond.pre.size(1), cond.pre.size(2), cond.pre.size(3)};

  std::vector<Rng> streams;
  streams.reserve(item_seeds.size());
  for (auto s : item_seeds) streams.emplace_back(splitmix64(s));

  auto draw = [&]() {
    std::vector<torch::Tensor> parts;
    parts.reserve(streams.size());
    for (auto& rng : streams) parts.push_back(gaussian_tensor(item_shape, rng));
    return torch::cat(parts, 0).to(cond.pre.dtype());
  };

  const auto timesteps = sampling_timesteps(schedule.T, options.steps);
  auto x = draw();
  torch::Tensor x0_hat;
  for (std::size_t i = 0; i < timesteps.size(); ++i) {
    const int t = timesteps[i];
    const int t_prev = i + 1 < timesteps.size() ? timesteps[i + 1] : 0;
    try {
      x0_hat = model(x, cond, t);
    } catch (const std::exception& e) {
      throw Error("model failed at timestep " + std::to_string(t) + ": " + e.what());
    }
    x0_hat = x0_hat.clamp(options.clamp_lo, options.clamp_hi);
    if (t_prev == 0) break;
    const auto k = step_coefficients(schedule, t, t_prev, options.sigma_rule);
    auto mean = options.mean_rule == MeanRule::printed ? posterior_mean(x, x0_hat, k) : q_posterior_mean(x, x0_hat, k);
    x = mean + k.sigma * draw();
  }
  return x0_hat;
}

}  // namespace dcesynth::diffusion
