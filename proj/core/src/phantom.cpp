#include "dcesynth/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <vector>

#include "dcesynth/rng.hpp"

namespace dcesynth::phantom {

void PhantomParams::validate() const {
  if (image_size < kMinSliceExtent || depth < 1) throw ContractError("phantom: invalid volume size");
  if (n_lesions < 0) throw ContractError("phantom: n_lesions must be >= 0");
  const auto [e_lo, e_hi] = enhancement_range;
  if (n_lesions > 0 && !(e_lo > 0.0 && e_lo <= e_hi && e_hi <= 0.6)) {
    throw ContractError("phantom: enhancement_range must lie within (0, 0.6]");
  }
  const auto [r_lo, r_hi] = lesion_radius_range;
  if (!(r_lo > 0.0 && r_lo <= r_hi)) throw ContractError("phantom: invalid lesion_radius_range");
}

namespace {

struct Ellipsoid {
  double cz, cr, cc;  // centre (slice, row, col)
  double az, ar, ac;  // semi-axes
  double radius(double z, double r, double c) const {
    const double dz = (z - cz) / az;
    const double dr = (r - cr) / ar;
    const double dc = (c - cc) / ac;
    return std::sqrt(dz * dz + dr * dr + dc * dc);
  }
};

struct Lesion {
  double cz, cr, cc;
  double radius;    // in-plane radius (pixels)
  double radius_z;  // through-plane radius (slices)
  double peak;
  double distance(double z, double r, double c) const {
    const double dz = (z - cz) / radius_z;
    const double dr = (r - cr) / radius;
    const double dc = (c - cc) / radius;
    return std::sqrt(dz * dz + dr * dr + dc * dc);
  }
  /// Normalized profile in [0,1]: 1 at the centre, 0 beyond the radius.
  double profile(double z, double r, double c) const {
    const double d = distance(z, r, c);
    return d >= 1.0 ? 0.0 : 0.5 * (1.0 + std::cos(std::numbers::pi * d));
  }
};

struct Wave {
  double kz, kr, kc, phase, amplitude;
};

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

}  // namespace

preprocess::VolumeCase generate_case(const PhantomParams& params) {
  params.validate();
  Rng rng(splitmix64(params.seed));

  const int size = params.image_size;
  const int depth = params.depth;
  const double s = size;

  std::vector<Ellipsoid> breasts;
  const double az = std::max(1.0, depth * 0.75);
  const double cz = (depth - 1) / 2.0;
  if (params.laterality == Laterality::bilateral) {
    const double jitter = uniform(rng, -0.02, 0.02) * s;
    breasts.push_back({cz, 0.40 * s + jitter, 0.27 * s, az, 0.30 * s, 0.21 * s});
    breasts.push_back({cz, 0.40 * s - jitter, 0.73 * s, az, 0.30 * s, 0.21 * s});
  } else {
    breasts.push_back({cz, 0.40 * s, 0.50 * s, az, 0.32 * s, 0.36 * s});
  }

  std::array<Wave, 6> waves{};
  for (auto& w : waves) {
    const double wavelength = params.background_texture_scale * uniform(rng, 0.7, 1.6);
    const double theta = uniform(rng, 0.0, std::numbers::pi);
    const double k = 2.0 * std::numbers::pi / wavelength;
    w = {k * uniform(rng, -0.3, 0.3), k * std::cos(theta), k * std::sin(theta), uniform(rng, 0.0, 6.3),
         uniform(rng, 0.015, 0.035)};
  }
  const double base_tissue = uniform(rng, 0.24, 0.32);

  std::vector<Lesion> lesions;
  for (int i = 0; i < params.n_lesions; ++i) {
    const auto& host = breasts[static_cast<std::size_t>(i) % breasts.size()];
    const double radius = uniform(rng, params.lesion_radius_range.first, params.lesion_radius_range.second);
    const double radius_z = std::clamp(radius / 2.0, 1.5, std::max(1.5, depth / 3.0));
    // Keep the lesion well inside its host region and the volume.
    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double rho = uniform(rng, 0.0, 0.35);
    const double cr = std::clamp(host.cr + rho * host.ar * std::sin(angle), radius + 1.0, s - radius - 2.0);
    const double cc = std::clamp(host.cc + rho * host.ac * std::cos(angle), radius + 1.0, s - radius - 2.0);
    const double z_lo = std::min(radius_z, cz);
    const double z_hi = std::max(depth - 1 - radius_z, cz);
    const double lz = std::round(uniform(rng, z_lo, z_hi));
    const double peak = uniform(rng, params.enhancement_range.first, params.enhancement_range.second);
    lesions.push_back({lz, std::round(cr), std::round(cc), radius, radius_z, peak});
  }

  preprocess::VolumeCase out;
  out.patient_id = params.patient_id;
  out.laterality = params.laterality;
  out.pre_volume = Volume3D(depth, size, size);
  out.post_volume = Volume3D(depth, size, size);
  out.mask_volume = Volume3D(depth, size, size);

  std::vector<float> noise(static_cast<std::size_t>(depth) * size * size);
  fill_gaussian(rng, noise);

  std::size_t idx = 0;
  for (int z = 0; z < depth; ++z) {
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c, ++idx) {
        double tissue = 0.0;
        for (const auto& b : breasts) {
          // Smooth 0..1 indicator of the breast region.
          const double d = b.radius(z, r, c);
          tissue = std::max(tissue, 1.0 / (1.0 + std::exp((d - 1.0) * 12.0)));
        }
        // Chest wall band along the bottom rows.
        const double wall = 1.0 / (1.0 + std::exp((0.80 * s - r) * 0.8));

        double texture = 0.0;
        for (const auto& w : waves) texture += w.amplitude * std::sin(w.kz * z + w.kr * r + w.kc * c + w.phase);

        const double gradient = params.parenchyma_gradient * (r / s - 0.5);
        double pre = 0.04 + tissue * (base_tissue + gradient + texture) + wall * 0.18 +
                     params.noise_sigma * noise[idx];
        pre = std::clamp(pre, 0.0, 1.0);

        double lesion_uplift = 0.0;
        double lesion_weight = 0.0;
        bool in_mask = false;
        for (const auto& l : lesions) {
          const double p = l.profile(z, r, c);
          lesion_uplift = std::max(lesion_uplift, l.peak * p);
          lesion_weight = std::max(lesion_weight, p);
          in_mask = in_mask || p >= 0.5;
        }
        const double parenchyma = kParenchymaUplift * tissue * (1.0 - lesion_weight);
        const double post = std::clamp(pre + lesion_uplift + parenchyma, 0.0, 1.0);

        out.pre_volume.voxels()[idx] = static_cast<float>(pre);
        out.post_volume.voxels()[idx] = static_cast<float>(post);
        out.mask_volume.voxels()[idx] = in_mask ? 1.0f : 0.0f;
      }
    }
  }
  return out;
}

PhantomParams corpus_case_params(const CorpusOptions& options, int index) {
  PhantomParams p;
  p.image_size = options.image_size;
  p.depth = options.depth;
  p.seed = mix_seed(options.seed, static_cast<std::uint64_t>(index));
  char id[16];
  std::snprintf(id, sizeof(id), "P%04d", index);
  p.patient_id = id;
  switch (options.laterality) {
    case CorpusOptions::LateralityMode::bilateral: p.laterality = Laterality::bilateral; break;
    case CorpusOptions::LateralityMode::unilateral: p.laterality = Laterality::unilateral; break;
    case CorpusOptions::LateralityMode::mixed:
      p.laterality = index % 2 == 0 ? Laterality::bilateral : Laterality::unilateral;
      break;
  }
  const double scale = options.image_size / 64.0;
  p.lesion_radius_range = {5.0 * scale, 9.0 * scale};
  p.background_texture_scale = 6.0 * scale;
  return p;
}

void write_corpus(const CorpusOptions& options, const std::filesystem::path& out_dir) {
  if (options.cases < 1) throw ContractError("phantom corpus needs at least one case");
  const int n_test = static_cast<int>(std::lround(options.cases * options.test_fraction));
  for (int i = 0; i < options.cases; ++i) {
    const auto params = corpus_case_params(options, i);
    const Split split = i >= options.cases - n_test ? Split::test : Split::train;
    preprocess::write_case_dir(generate_case(params), split, out_dir / params.patient_id);
  }
}

}  // namespace dcesynth::phantom
