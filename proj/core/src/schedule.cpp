#include "dcesynth/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>

#include "dcesynth/error.hpp"

namespace dcesynth::diffusion {

double DiffusionSchedule::sqrt_alpha_bar(int t) const { return std::sqrt(alpha_bar.at(static_cast<std::size_t>(t))); }

double DiffusionSchedule::sqrt_one_minus_alpha_bar(int t) const {
  return std::sqrt(1.0 - alpha_bar.at(static_cast<std::size_t>(t)));
}

DiffusionSchedule make_cosine_schedule(int T, double s) {
  if (T < 1) throw ContractError("cosine schedule: T must be >= 1");
  if (!(s > 0.0)) throw ContractError("cosine schedule: offset s must be > 0");

  auto f = [&](int t) {
    const double c = std::cos(((static_cast<double>(t) / T + s) / (1.0 + s)) * std::numbers::pi / 2.0);
    return c * c;
  };

  DiffusionSchedule sched;
  sched.T = T;
  sched.offset_s = s;
  sched.alpha_bar.assign(static_cast<std::size_t>(T) + 1, 1.0);
  sched.alpha.assign(static_cast<std::size_t>(T) + 1, 1.0);
  for (int t = 1; t <= T; ++t) {
    const double ratio = f(t) / f(t - 1);
    const double a = std::clamp(ratio, kMinAlpha, kMaxAlpha);
    sched.alpha[static_cast<std::size_t>(t)] = a;
    sched.alpha_bar[static_cast<std::size_t>(t)] = sched.alpha_bar[static_cast<std::size_t>(t) - 1] * a;
  }
  return sched;
}

SigmaRule parse_sigma_rule(std::string_view text) {
  if (text == "posterior") return SigmaRule::posterior;
  if (text == "beta") return SigmaRule::beta;
  throw ConfigError("unknown sigma_rule '" + std::string(text) + "' (expected posterior|beta)");
}

MeanRule parse_mean_rule(std::string_view text) {
  if (text == "printed") return MeanRule::printed;
  if (text == "q_posterior") return MeanRule::q_posterior;
  throw ConfigError("unknown mean_rule '" + std::string(text) + "' (expected printed|q_posterior)");
}

std::string_view to_string(SigmaRule rule) { return rule == SigmaRule::posterior ? "posterior" : "beta"; }
std::string_view to_string(MeanRule rule) { return rule == MeanRule::printed ? "printed" : "q_posterior"; }

std::vector<int> sampling_timesteps(int T, int steps) {
  steps = std::clamp(steps, 1, T);
  std::set<int, std::greater<>> ts;
  for (int i = steps; i >= 1; --i) {
    const auto t = static_cast<int>(std::lround(static_cast<double>(i) * T / steps));
    ts.insert(std::clamp(t, 1, T));
  }
  return {ts.begin(), ts.end()};
}

StepCoefficients step_coefficients(const DiffusionSchedule& schedule, int t, int t_prev, SigmaRule rule) {
  if (t < 1 || t > schedule.T || t_prev < 0 || t_prev >= t) {
    throw ContractError("invalid reverse step " + std::to_string(t) + " -> " + std::to_string(t_prev));
  }
  StepCoefficients k{};
  k.alpha_bar = schedule.alpha_bar[static_cast<std::size_t>(t)];
  k.alpha_bar_prev = schedule.alpha_bar[static_cast<std::size_t>(t_prev)];
  k.alpha = k.alpha_bar / k.alpha_bar_prev;
  const double beta = 1.0 - k.alpha;
  const double variance =
      rule == SigmaRule::posterior ? (1.0 - k.alpha_bar_prev) / (1.0 - k.alpha_bar) * beta : beta;
  k.sigma = t_prev == 0 ? 0.0 : std::sqrt(std::max(variance, 0.0));
  return k;
}

}  // namespace dcesynth::diffusion
