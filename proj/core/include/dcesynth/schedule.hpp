#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace dcesynth::diffusion {

/// Cumulative signal retention table of a cosine noise schedule.
///
/// alpha_bar has T+1 entries (index 0 is the clean image, alpha_bar[0] == 1);
/// alpha has T+1 entries as well with alpha[0] unused (set to 1) so that
/// alpha[t] lines up with alpha_bar[t] for t in [1, T].
struct DiffusionSchedule {
  int T = 0;
  double offset_s = 0.008;
  std::vector<double> alpha_bar;
  std::vector<double> alpha;

  double sqrt_alpha_bar(int t) const;
  double sqrt_one_minus_alpha_bar(int t) const;
};

inline constexpr double kMinAlpha = 0.001;
inline constexpr double kMaxAlpha = 0.9999;

/// alpha_t = clip(f(t)/f(t-1), 0.001, 0.9999) with
/// f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2), and alpha_bar the running
/// product of the clipped per-step values.
DiffusionSchedule make_cosine_schedule(int T, double s = 0.008);

enum class SigmaRule { posterior, beta };
enum class MeanRule { printed, q_posterior };

SigmaRule parse_sigma_rule(std::string_view text);
MeanRule parse_mean_rule(std::string_view text);
std::string_view to_string(SigmaRule rule);
std::string_view to_string(MeanRule rule);

/// Descending sampling timesteps: K values spread uniformly over [1, T],
/// always including T; `steps` is clamped to [1, T].
std::vector<int> sampling_timesteps(int T, int steps);

/// Coefficients of one reverse step from `t` to `t_prev` (t_prev may be 0).
struct StepCoefficients {
  double alpha;            // alpha_bar[t] / alpha_bar[t_prev]
  double alpha_bar;        // alpha_bar[t]
  double alpha_bar_prev;   // alpha_bar[t_prev]
  double sigma;            // std of the injected noise
};

StepCoefficients step_coefficients(const DiffusionSchedule& schedule, int t, int t_prev, SigmaRule rule);

}  // namespace dcesynth::diffusion
