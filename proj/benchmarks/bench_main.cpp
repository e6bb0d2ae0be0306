#include <random>

#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "dcesynth/frechet.hpp"
#include "dcesynth/metrics.hpp"
#include "dcesynth/radiomics.hpp"
#include "dcesynth/unet.hpp"

namespace {

dcesynth::Image2D random_image(int size, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> uniform(0.0f, 1.0f);
  dcesynth::Image2D img(size, size);
  for (float& v : img.pixels()) v = uniform(rng);
  return img;
}

void BM_Ssim(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto a = random_image(size, 1);
  const auto b = random_image(size, 2);
  for (auto _ : state) benchmark::DoNotOptimize(dcesynth::eval::ssim(a, b));
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_Ssim)->Arg(64)->Arg(128)->Arg(256);

void BM_Glcm(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto img = random_image(size, 3);
  for (auto _ : state) benchmark::DoNotOptimize(dcesynth::eval::glcm(img, nullptr, 0, 1));
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_Glcm)->Arg(64)->Arg(256);

void BM_RadiomicsFeatures(benchmark::State& state) {
  const auto img = random_image(128, 4);
  for (auto _ : state) benchmark::DoNotOptimize(dcesynth::eval::radiomics_features(img));
}
BENCHMARK(BM_RadiomicsFeatures);

void BM_FrechetBetween(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const Eigen::MatrixXd a = Eigen::MatrixXd::Random(200, dim);
  const Eigen::MatrixXd b = Eigen::MatrixXd::Random(200, dim);
  for (auto _ : state) benchmark::DoNotOptimize(dcesynth::eval::frechet_between(a, b));
}
BENCHMARK(BM_FrechetBetween)->Arg(16)->Arg(64);

void BM_UNetForward(benchmark::State& state) {
  torch::set_num_threads(1);
  torch::manual_seed(0);
  const int size = static_cast<int>(state.range(0));
  dcesynth::backbone::ModelConfig config;
  dcesynth::backbone::ConditionalUNet model(config);
  model->eval();
  const auto input = torch::rand({1, config.in_channels, size, size});
  const auto t = torch::full({1}, 500, torch::kLong);
  torch::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model->forward(input, t));
}
BENCHMARK(BM_UNetForward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
