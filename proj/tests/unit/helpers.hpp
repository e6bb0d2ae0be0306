#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "dcesynth/data_model.hpp"
#include "dcesynth/image.hpp"
#include "dcesynth/phantom.hpp"
#include "dcesynth/preprocess.hpp"
#include "dcesynth/rng.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("dcesynth_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline dcesynth::Image2D random_image(int h, int w, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  dcesynth::Rng rng(seed);
  dcesynth::Image2D img(h, w);
  for (auto& v : img.pixels()) v = lo + (hi - lo) * static_cast<float>(dcesynth::uniform01(rng));
  return img;
}

inline dcesynth::Image2D constant_image(int h, int w, float v) { return dcesynth::Image2D(h, w, v); }

inline dcesynth::SlicePair random_pair(int h, int w, std::uint64_t seed, bool with_mask = true) {
  dcesynth::SlicePair p;
  p.pre = dcesynth::SliceImage(random_image(h, w, seed));
  p.post = dcesynth::SliceImage(random_image(h, w, seed + 1000003));
  if (with_mask) {
    dcesynth::Image2D m(h, w, 0.0f);
    for (int r = h / 4; r < h / 2; ++r) {
      for (int c = w / 4; c < w / 2; ++c) m(r, c) = 1.0f;
    }
    p.mask = m;
    p.tumor_label = true;
  }
  p.patient_id = "P" + std::to_string(seed);
  return p;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Uniform random tensor in [lo, hi) from a fixed generator seed.
inline torch::Tensor rand_tensor(torch::IntArrayRef shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0,
                                 torch::Dtype dtype = torch::kFloat32) {
  auto gen = at::detail::createCPUGenerator(seed);
  return torch::rand(shape, gen, torch::TensorOptions().dtype(dtype)) * (hi - lo) + lo;
}

/// Phantom corpus preprocessed into `<dir>/data`; returns that directory.
inline std::filesystem::path make_phantom_dataset(const std::filesystem::path& dir, int cases, int size, int depth,
                                                  std::uint64_t seed, double test_fraction = 0.34) {
  dcesynth::phantom::CorpusOptions o;
  o.cases = cases;
  o.image_size = size;
  o.depth = depth;
  o.seed = seed;
  o.test_fraction = test_fraction;
  dcesynth::phantom::write_corpus(o, dir / "cases");
  std::vector<dcesynth::preprocess::VolumeCase> vc;
  std::map<std::string, dcesynth::Split> split;
  for (const auto& c : dcesynth::preprocess::read_cases(dir / "cases")) {
    vc.push_back(c.volume_case);
    split[c.volume_case.patient_id] = c.split;
  }
  dcesynth::preprocess::build_dataset(vc, {}, split, dir / "data");
  return dir / "data";
}

}  // namespace testutil
