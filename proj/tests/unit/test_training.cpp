#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "dcesynth/phantom.hpp"
#include "dcesynth/preprocess.hpp"
#include "dcesynth/tensor_bridge.hpp"
#include "dcesynth/training.hpp"
#include "dcesynth/variants.hpp"
#include "helpers.hpp"

using namespace dcesynth;
using namespace dcesynth::training;

namespace {

backbone::ModelConfig tiny_model() {
  backbone::ModelConfig c;
  c.base_width = 8;
  c.depth = 2;
  c.time_embed_dim = 16;
  return c;
}

TrainState tiny_state(const VariantSpec& v, std::uint64_t seed, double lr = 1e-4) {
  auto cfg = tiny_model();
  cfg.in_channels = v.in_channels();
  OptimizerSettings o;
  o.lr = lr;
  return TrainState::create(cfg, o, seed);
}

std::vector<SlicePair> pairs(int n, bool with_mask, int size = 16) {
  std::vector<SlicePair> out;
  for (int i = 0; i < n; ++i) out.push_back(testutil::random_pair(size, size, 100 + i, with_mask));
  return out;
}

bool same_params(const backbone::ConditionalUNet& a, const backbone::ConditionalUNet& b) {
  const auto pa = a->parameters(), pb = b->parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!torch::equal(pa[i], pb[i])) return false;
  }
  return true;
}

}  // namespace

TEST(Targets, PcAndSubExamples) {
  const auto pre = torch::full({1, 1, 2, 2}, 0.2f);
  const auto post = torch::full({1, 1, 2, 2}, 0.5f);
  EXPECT_TRUE(torch::equal(make_target(pre, post, parse_variant("PC(Vanilla)")), post));
  EXPECT_TRUE(torch::allclose(make_target(pre, post, parse_variant("SUB(Vanilla)")), torch::full({1, 1, 2, 2}, 0.6f)));
  EXPECT_TRUE(torch::equal(reconstruct_post(torch::zeros({1, 1, 2, 2}), pre), pre));
  EXPECT_EQ(reconstruct_post(torch::full({1, 1, 2, 2}, 2.0f), torch::full({1, 1, 2, 2}, 0.5f)).max().item<float>(), 1.0f);
  EXPECT_EQ(reconstruct_post(torch::full({1, 1, 2, 2}, -2.0f), pre).min().item<float>(), 0.0f);
}

TEST(Targets, SubRoundTripOverRandomPairs) {
  const auto ps = pairs(20, false);
  EXPECT_LE(subtraction_roundtrip_error(ps), 1e-6);
  const auto sub = parse_variant("SUB(Vanilla)");
  for (const auto& p : ps) {
    const auto back = reconstruct_post(make_target(p, sub), p.pre.pixels());
    for (std::size_t i = 0; i < back.size(); ++i) ASSERT_NEAR(back.pixels()[i], p.post.pixels().pixels()[i], 1e-6);
  }
}

TEST(Ema, Examples) {
  auto ema = torch::zeros({3});
  const auto w = torch::ones({3});
  ema_update({ema}, {w}, 0.999);
  EXPECT_NEAR(ema[0].item<double>(), 0.001, 1e-7);

  auto fixed = torch::full({2}, 0.7f);
  ema_update({fixed}, {torch::full({2}, 0.7f)}, 0.9);
  EXPECT_FLOAT_EQ(fixed[0].item<float>(), 0.7f);

  auto conv = torch::zeros({1}, torch::kFloat64);
  const auto target = torch::ones({1}, torch::kFloat64);
  for (int k = 1; k <= 50; ++k) {
    ema_update({conv}, {target}, 0.9);
    EXPECT_NEAR(1.0 - conv.item<double>(), std::pow(0.9, k), 1e-12);
  }
  EXPECT_THROW(ema_update({torch::zeros({2})}, {torch::zeros({3})}, 0.9), ContractError);
}

TEST(Variants, RegistryMatchesTables) {
  std::vector<std::string> full, single;
  for (const auto& v : full_breast_variants()) full.push_back(v.name());
  for (const auto& v : single_breast_variants()) single.push_back(v.name());
  EXPECT_EQ(full, (std::vector<std::string>{"PC(Vanilla)", "PC(Vanilla100)", "PC-ROI(M)", "PC-ROI(M100)", "PC-ROI(L)",
                                            "SUB(Vanilla)", "SUB-ROI(L)"}));
  EXPECT_EQ(single, (std::vector<std::string>{"PC(Vanilla)", "PC-ROI(L)", "SUB(Vanilla)", "SUB-ROI(L)"}));
  for (const auto& v : full_breast_variants()) {
    EXPECT_EQ(parse_variant(v.name()), v);
    auto cfg = tiny_model();
    cfg.in_channels = v.in_channels();
    EXPECT_NO_THROW(cfg.validate());
  }
  EXPECT_EQ(parse_variant("SUB-ROI_L"), parse_variant("SUB-ROI(L)"));
  EXPECT_EQ(parse_variant("PC-ROI(M100)").epochs, kLongEpochs);
  EXPECT_TRUE(parse_variant("PC-ROI(M)").uses_mask_input());
  EXPECT_TRUE(parse_variant("SUB-ROI(L)").tumor_aware());
  EXPECT_THROW(parse_variant("PC-ROI(X)"), Error);
}

TEST(Variants, MaskConditionedRejectsMasklessBatch) {
  const auto batch = make_batch(pairs(2, false));
  const auto v = parse_variant("PC-ROI(M)");
  EXPECT_THROW(make_model_input(batch.pre, batch.post, batch.mask, v), ContractError);
  auto state = tiny_state(v, 1);
  const auto schedule = diffusion::make_cosine_schedule(10);
  EXPECT_THROW(train_step(batch, v, state, schedule, {}), ContractError);
  const auto in = make_model_input(batch.pre, batch.post, make_batch(pairs(2, true)).mask, v);
  EXPECT_EQ(in.size(1), 3);
}

TEST(Batching, MixedMaskPresenceGetsZeroMasks) {
  auto ps = pairs(2, true);
  ps.push_back(testutil::random_pair(16, 16, 7, false));
  const auto b = make_batch(ps);
  ASSERT_TRUE(b.mask.has_value());
  EXPECT_EQ(b.mask->sizes(), (std::vector<std::int64_t>{3, 1, 16, 16}));
  EXPECT_EQ((*b.mask)[2].sum().item<double>(), 0.0);
  EXPECT_FALSE(make_batch(pairs(2, false)).mask.has_value());
}

TEST(TrainStep, DeterministicGivenState) {
  const auto v = parse_variant("SUB-ROI(L)");
  const auto schedule = diffusion::make_cosine_schedule(100);
  const auto batch = make_batch(pairs(1, true));
  auto a = tiny_state(v, 5);
  auto b = tiny_state(v, 5);
  ASSERT_TRUE(same_params(a.model, b.model));
  const auto la = train_step(batch, v, a, schedule, {});
  const auto lb = train_step(batch, v, b, schedule, {});
  EXPECT_EQ(la.total, lb.total);
  EXPECT_TRUE(same_params(a.model, b.model));
  EXPECT_TRUE(same_params(a.ema, b.ema));
  EXPECT_EQ(a.step, 1);
}

TEST(TrainStep, EmaNeverReceivesGradients) {
  const auto v = parse_variant("PC(Vanilla)");
  auto s = tiny_state(v, 6);
  const auto schedule = diffusion::make_cosine_schedule(10);
  for (int i = 0; i < 3; ++i) train_step(make_batch(pairs(2, false)), v, s, schedule, {});
  for (const auto& p : s.ema->parameters()) {
    EXPECT_FALSE(p.requires_grad());
    EXPECT_FALSE(p.grad().defined());
  }
  EXPECT_FALSE(same_params(s.model, s.ema));
}

TEST(TrainStep, ZeroMaskTumorAwareIsThirtyPercentGlobal) {
  const auto v = parse_variant("PC-ROI(L)");
  auto s = tiny_state(v, 7);
  const auto loss = train_step(make_batch(pairs(2, false)), v, s, diffusion::make_cosine_schedule(10), {});
  EXPECT_DOUBLE_EQ(loss.total, 0.3 * loss.component("global").raw);
  EXPECT_TRUE(loss.has_flag(losses::kRoiAbsent));
}

TEST(TrainStep, MemorizesFourPairs) {
  const auto v = parse_variant("PC(Vanilla)");
  auto s = tiny_state(v, 8, 2e-3);
  const auto schedule = diffusion::make_cosine_schedule(10);
  const auto batch = make_batch(pairs(4, false));
  std::vector<double> hist;
  for (int i = 0; i < 200; ++i) hist.push_back(train_step(batch, v, s, schedule, {}).total);
  const double start = (hist[0] + hist[1] + hist[2] + hist[3] + hist[4]) / 5.0;
  const double end = (hist[195] + hist[196] + hist[197] + hist[198] + hist[199]) / 5.0;
  EXPECT_LE(end, 0.5 * start) << "start " << start << " end " << end;
}

TEST(TrainStep, ResumeFromCheckpointIsBitwiseIdentical) {
  testutil::TempDir dir("resume");
  const auto v = parse_variant("SUB-ROI(L)");
  const auto schedule = diffusion::make_cosine_schedule(50);
  const auto data = pairs(3, true);
  auto batch_for = [&](std::int64_t step) {
    return make_batch(std::span<const SlicePair>(&data[static_cast<std::size_t>(step % 3)], 1));
  };

  auto full = tiny_state(v, 9, 1e-3);
  std::vector<double> reference;
  for (int i = 0; i < 20; ++i) reference.push_back(train_step(batch_for(full.step), v, full, schedule, {}).total);

  auto part = tiny_state(v, 9, 1e-3);
  for (int i = 0; i < 10; ++i) train_step(batch_for(part.step), v, part, schedule, {});
  save_checkpoint(dir / "mid.pt", part, v, schedule);
  auto loaded = load_checkpoint(dir / "mid.pt");
  EXPECT_EQ(loaded.variant, v);
  EXPECT_EQ(loaded.meta.step, 10);
  EXPECT_EQ(loaded.schedule.alpha_bar, schedule.alpha_bar);
  EXPECT_TRUE(same_params(loaded.state.model, part.model));
  EXPECT_TRUE(same_params(loaded.state.ema, part.ema));
  for (int i = 10; i < 20; ++i) {
    const double l = train_step(batch_for(loaded.state.step), v, loaded.state, schedule, {}).total;
    EXPECT_EQ(l, reference[static_cast<std::size_t>(i)]) << "step " << i;
  }
  EXPECT_TRUE(same_params(loaded.state.model, full.model));
}

TEST(TrainStep, NonFiniteLossRaisesWithDump) {
  const auto v = parse_variant("PC(Vanilla)");
  auto s = tiny_state(v, 10);
  auto batch = make_batch(pairs(1, false));
  batch.post.index_put_({0, 0, 0, 0}, std::numeric_limits<float>::quiet_NaN());
  try {
    train_step(batch, v, s, diffusion::make_cosine_schedule(10), {});
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    const auto dump = nlohmann::json::parse(e.dump());
    EXPECT_TRUE(dump.contains("timesteps"));
  }
}

class TrainLoop : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testutil::TempDir("trainloop");
    testutil::make_phantom_dataset(dir_->path(), 3, 32, 8, 2);
  }
  static void TearDownTestSuite() { delete dir_; }

  TrainOptions options(const std::string& out, std::int64_t steps) const {
    TrainOptions o;
    o.variant = parse_variant("SUB-ROI(L)");
    o.manifest = *dir_ / "data";
    o.out_dir = *dir_ / out;
    o.model = tiny_model();
    o.T = 20;
    o.steps = steps;
    o.batch_size = 2;
    o.checkpoint_every = 3;
    o.seed = 4;
    return o;
  }

  static testutil::TempDir* dir_;
};

testutil::TempDir* TrainLoop::dir_ = nullptr;

TEST_F(TrainLoop, WritesLogsAndCheckpointsAndResumes) {
  const auto full = train(options("full", 6));
  EXPECT_EQ(full.steps, 6);
  EXPECT_TRUE(std::filesystem::exists(*dir_ / "full" / "step_3.pt"));
  EXPECT_TRUE(std::filesystem::exists(full.final_checkpoint));
  std::ifstream log(*dir_ / "full" / "loss_log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["step"].get<int>(), ++lines);
    EXPECT_TRUE(j["components"].contains("roi"));
  }
  EXPECT_EQ(lines, 6);

  auto first = options("resumed", 3);
  train(first);
  auto rest = options("resumed", 6);
  rest.resume_from = *dir_ / "resumed" / "final.pt";
  const auto resumed = train(rest);
  ASSERT_EQ(resumed.loss_history.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(resumed.loss_history[i], full.loss_history[3 + i]);
  EXPECT_EQ(checkpoint_id(resumed.final_checkpoint), checkpoint_id(full.final_checkpoint));

  auto wrong = options("wrong", 6);
  wrong.variant = parse_variant("PC(Vanilla)");
  wrong.resume_from = *dir_ / "resumed" / "final.pt";
  EXPECT_THROW(train(wrong), ConfigError);
}

TEST_F(TrainLoop, SampleSplitWritesOneImagePerTestRecord) {
  const auto result = train(options("for_sampling", 2));
  const auto ckpt = load_checkpoint(result.final_checkpoint);
  SampleOptions so;
  so.sampler.steps = 3;
  so.seed = 1;
  so.batch_size = 3;
  const auto n = sample_split(ckpt, *dir_ / "data", *dir_ / "gen_a", so);
  const auto manifest = read_manifest(*dir_ / "data");
  std::size_t expected = 0;
  for (const auto& r : manifest.records) {
    if (r.split != Split::test) continue;
    ++expected;
    const auto a = *dir_ / "gen_a" / generated_file_name(r);
    ASSERT_TRUE(std::filesystem::exists(a));
  }
  EXPECT_EQ(n, expected);
  // Batch size does not change the per-record outcome.
  so.batch_size = 1;
  sample_split(ckpt, *dir_ / "data", *dir_ / "gen_b", so);
  for (const auto& r : manifest.records) {
    if (r.split != Split::test) continue;
    EXPECT_EQ(testutil::read_file(*dir_ / "gen_a" / generated_file_name(r)),
              testutil::read_file(*dir_ / "gen_b" / generated_file_name(r)));
  }
}
