#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcesynth/diffusion.hpp"
#include "dcesynth/evaluation.hpp"
#include "dcesynth/features.hpp"
#include "dcesynth/losses.hpp"
#include "dcesynth/phantom.hpp"
#include "dcesynth/training.hpp"
#include "dcesynth/unet.hpp"

namespace dcesynth {

struct PreprocessSection {
  std::filesystem::path cases_dir;
  double adjacent_fraction = 0.2;
  bool single_breast = false;
};

struct DataSection {
  /// Existing manifest; mutually exclusive with `preprocess` and `phantom`.
  std::optional<std::filesystem::path> manifest;
  std::optional<PreprocessSection> preprocess;
  /// Generate a phantom corpus and preprocess it inside the run directory.
  std::optional<phantom::CorpusOptions> phantom;
  bool single_breast = false;
};

struct TrainingSection {
  std::int64_t steps = 0;
  int batch_size = 8;
  std::int64_t checkpoint_every = 500;
  double ema_lambda = training::kDefaultEmaLambda;
};

struct SamplingSection {
  int steps = 50;
  std::optional<std::uint64_t> seed;
  int batch_size = 8;
  diffusion::MeanRule mean_rule = diffusion::MeanRule::q_posterior;
};

struct EvaluationSection {
  std::vector<eval::Mode> modes{eval::Mode::full_image, eval::Mode::roi};
  eval::Reference reference = eval::Reference::post;
  int roi_margin = eval::kDefaultRoiMargin;
};

struct PerceptualSection {
  features::Backend backend = features::Backend::fallback;
  std::optional<std::filesystem::path> model_path;
};

/// Parsed experiment file. Every object is checked against its key set and
/// unknown keys are rejected; `seed` is mandatory.
struct ExperimentConfig {
  std::vector<training::VariantSpec> variants;
  DataSection data;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;

  backbone::ModelConfig model;
  int T = 1000;
  double cosine_s = 0.008;
  diffusion::SigmaRule sigma_rule = diffusion::SigmaRule::posterior;
  SamplingSection sampling;
  losses::GlobalWeights global_weights;
  losses::RoiWeights roi_weights;
  losses::TumorWeights tumor_weights;
  PerceptualSection perceptual;
  training::OptimizerSettings optimizer;
  TrainingSection training;
  EvaluationSection evaluation;

  /// Canonical JSON (all defaults filled in); its hash identifies a run.
  nlohmann::ordered_json canonical() const;
  std::string hash() const;

  losses::LossSettings loss_settings() const;
  diffusion::SamplerOptions sampler_options() const;
  std::uint64_t sampling_seed() const { return sampling.seed.value_or(seed); }
};

/// Relative paths inside the file resolve against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace dcesynth
