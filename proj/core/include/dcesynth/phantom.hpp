#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>

#include "dcesynth/preprocess.hpp"

namespace dcesynth::phantom {

/// Parameters of one synthetic breast DCE case.
struct PhantomParams {
  int image_size = 64;
  int depth = 16;
  int n_lesions = 1;
  std::pair<double, double> lesion_radius_range{5.0, 9.0};
  std::pair<double, double> enhancement_range{0.25, 0.5};
  double background_texture_scale = 6.0;
  double parenchyma_gradient = 0.08;
  double noise_sigma = 0.01;
  Laterality laterality = Laterality::bilateral;
  std::uint64_t seed = 0;
  std::string patient_id = "P0000";

  void validate() const;
};

/// Upper bound on the parenchymal (non-lesion) post-contrast uplift.
inline constexpr double kParenchymaUplift = 0.03;

/// Deterministic pre/post/mask volumes. The post volume equals the pre
/// volume plus lesion enhancement (cosine-tapered radial profile peaking at
/// the drawn uplift) and a mild parenchymal uplift; the mask is the part of
/// each lesion whose profile exceeds half its peak.
preprocess::VolumeCase generate_case(const PhantomParams& params);

struct CorpusOptions {
  int cases = 32;
  int image_size = 64;
  int depth = 16;
  std::uint64_t seed = 0;
  /// Fraction of cases assigned to the test split (taken from the end).
  double test_fraction = 0.25;
  enum class LateralityMode { bilateral, unilateral, mixed } laterality = LateralityMode::bilateral;
};

/// Writes `cases` case directories under `out_dir` in the preprocess input layout.
void write_corpus(const CorpusOptions& options, const std::filesystem::path& out_dir);

PhantomParams corpus_case_params(const CorpusOptions& options, int index);

}  // namespace dcesynth::phantom
