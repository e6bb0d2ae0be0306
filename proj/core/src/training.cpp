#include "dcesynth/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dcesynth/png_io.hpp"
#include "dcesynth/rng.hpp"
#include "dcesynth/tensor_bridge.hpp"

namespace dcesynth::training {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

Batch make_batch(std::span<const SlicePair> pairs) {
  if (pairs.empty()) throw ContractError("make_batch: empty batch");
  std::vector<Image2D> pre;
  std::vector<Image2D> post;
  std::vector<Image2D> mask;
  const bool any_mask = std::any_of(pairs.begin(), pairs.end(), [](const SlicePair& p) { return p.mask.has_value(); });
  for (const auto& p : pairs) {
    if (auto v = validate_pair(p); !v.empty()) {
      throw ContractError("invalid pair " + p.patient_id + "/" + std::to_string(p.slice_index) + ": " + v.front());
    }
    pre.push_back(p.pre.pixels());
    post.push_back(p.post.pixels());
    if (any_mask) mask.push_back(p.mask ? *p.mask : Image2D(p.pre.height(), p.pre.width(), 0.0f));
  }
  Batch batch{stack_images(pre), stack_images(post), std::nullopt};
  if (any_mask) batch.mask = stack_images(mask);
  return batch;
}

torch::Tensor make_model_input(const torch::Tensor& pre, const torch::Tensor& noisy_target,
                               const std::optional<torch::Tensor>& mask, const VariantSpec& variant) {
  if (variant.uses_mask_input() && !mask) {
    throw ContractError("variant " + variant.name() + " requires a mask channel");
  }
  if (!variant.uses_mask_input() && mask) {
    throw ContractError("variant " + variant.name() + " takes no mask channel");
  }
  return backbone::stack_model_input(noisy_target, {pre, mask}, variant.in_channels());
}

torch::Tensor make_target(const torch::Tensor& pre, const torch::Tensor& post, const VariantSpec& variant) {
  if (pre.sizes() != post.sizes()) throw ContractError("make_target: shape mismatch");
  return variant.target == Target::PC ? post : (post - pre) / 0.5;
}

Image2D make_target(const SlicePair& pair, const VariantSpec& variant) {
  if (variant.target == Target::PC) return pair.post.pixels();
  return SubtractionImage::from_pair(pair).pixels();
}

torch::Tensor reconstruct_post(const torch::Tensor& sub_pred, const torch::Tensor& pre) {
  if (sub_pred.sizes() != pre.sizes()) throw ContractError("reconstruct_post: shape mismatch");
  return (0.5 * sub_pred + pre).clamp(0.0, 1.0);
}

Image2D reconstruct_post(const Image2D& sub_pred, const Image2D& pre) {
  if (!sub_pred.same_shape(pre)) throw ContractError("reconstruct_post: shape mismatch");
  Image2D out(pre.height(), pre.width());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.pixels()[i] = std::clamp(0.5f * sub_pred.pixels()[i] + pre.pixels()[i], 0.0f, 1.0f);
  }
  return out;
}

void ema_update(const std::vector<torch::Tensor>& ema, const std::vector<torch::Tensor>& weights, double lambda) {
  if (ema.size() != weights.size()) throw ContractError("ema_update: parameter lists differ in length");
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < ema.size(); ++i) {
    if (ema[i].sizes() != weights[i].sizes()) throw ContractError("ema_update: parameter shape mismatch");
    ema[i].mul_(lambda).add_(weights[i].detach(), 1.0 - lambda);
  }
}

TrainState TrainState::create(const backbone::ModelConfig& config, const OptimizerSettings& settings,
                              std::uint64_t seed, double ema_lambda) {
  if (!(ema_lambda > 0.0 && ema_lambda < 1.0)) throw ContractError("ema_lambda must lie in (0,1)");
  TrainState state;
  torch::manual_seed(seed);
  state.model = backbone::ConditionalUNet(config);
  state.ema = backbone::clone_model(state.model);
  for (auto& p : state.ema->parameters()) p.set_requires_grad(false);
  state.optimizer = std::make_unique<torch::optim::AdamW>(
      state.model->parameters(), torch::optim::AdamWOptions(settings.lr)
                                     .betas({settings.beta1, settings.beta2})
                                     .weight_decay(settings.weight_decay));
  state.optimizer_settings = settings;
  state.ema_lambda = ema_lambda;
  state.seed = seed;
  return state;
}

namespace {

constexpr std::uint64_t kStreamTimestep = 2;
constexpr std::uint64_t kStreamBatch = 1;

ordered_json tensor_stats(const torch::Tensor& t) {
  auto d = t.detach().to(torch::kFloat64);
  return {{"min", d.min().item<double>()},
          {"max", d.max().item<double>()},
          {"mean", d.mean().item<double>()},
          {"finite", torch::isfinite(d).all().item<bool>()}};
}

}  // namespace

std::pair<double, double> target_range(const VariantSpec& variant) {
  return variant.target == Target::PC ? std::pair{0.0, 1.0} : std::pair{-2.0, 2.0};
}

losses::LossBreakdown train_step(const Batch& batch, const VariantSpec& variant, TrainState& state,
                                 const diffusion::DiffusionSchedule& schedule, const losses::LossSettings& settings) {
  if (batch.size() == 0) throw ContractError("train_step: empty batch");
  if (variant.in_channels() != state.model->config().in_channels) {
    throw ContractError("variant " + variant.name() + " does not match the model's input channels");
  }
  if (variant.uses_mask_input() && !batch.mask) {
    throw ContractError("variant " + variant.name() + " rejects batches without masks");
  }

  Rng rng(mix_seed(state.seed, static_cast<std::uint64_t>(state.step), kStreamTimestep));
  std::vector<int> timesteps(static_cast<std::size_t>(batch.size()));
  for (auto& t : timesteps) t = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(schedule.T));

  const auto target = make_target(batch.pre, batch.post, variant);
  const auto eps = gaussian_tensor(target.sizes(), rng);
  const auto x_t = diffusion::q_sample_batch(target, timesteps, eps, schedule);

  backbone::ConditionBundle cond{batch.pre, variant.uses_mask_input() ? batch.mask : std::nullopt};
  const auto t_tensor = torch::tensor(std::vector<std::int64_t>(timesteps.begin(), timesteps.end()), torch::kInt64);

  state.model->train();
  auto x0_hat = state.model->predict(x_t, cond, t_tensor);
  auto pred_post = variant.target == Target::PC ? x0_hat : reconstruct_post(x0_hat, batch.pre);

  losses::LossBreakdown loss;
  if (variant.tumor_aware()) {
    auto mask = batch.mask ? *batch.mask : torch::zeros_like(batch.pre);
    loss = losses::tumor_total_loss(pred_post, batch.post, batch.pre, mask, settings);
  } else {
    loss = losses::global_loss(pred_post, batch.post, settings);
  }

  if (!std::isfinite(loss.total)) {
    ordered_json dump;
    dump["step"] = state.step;
    dump["variant"] = variant.name();
    dump["timesteps"] = timesteps;
    for (const auto& [name, term] : loss.components) dump["components"][name] = {{"raw", term.raw}, {"weight", term.weight}};
    dump["inputs"] = {{"pre", tensor_stats(batch.pre)},
                      {"post", tensor_stats(batch.post)},
                      {"x_t", tensor_stats(x_t)},
                      {"x0_hat", tensor_stats(x0_hat)}};
    throw DivergenceError("non-finite loss at step " + std::to_string(state.step), dump.dump(2));
  }

  state.optimizer->zero_grad();
  loss.total_tensor.backward();
  state.optimizer->step();
  ema_update(state.ema->parameters(), state.model->parameters(), state.ema_lambda);
  ++state.step;
  return loss;
}

namespace {

ordered_json meta_to_json(const CheckpointMeta& m) {
  ordered_json j;
  j["format_version"] = m.format_version;
  j["variant"] = m.variant;
  j["model"] = {{"in_channels", m.model.in_channels},
                {"base_width", m.model.base_width},
                {"depth", m.model.depth},
                {"attention_at_bottleneck", m.model.attention_at_bottleneck},
                {"time_embed_dim", m.model.time_embed_dim}};
  j["schedule"] = {{"T", m.T}, {"cosine_s", m.cosine_s}};
  j["step"] = m.step;
  j["seed"] = m.seed;
  j["ema_lambda"] = m.ema_lambda;
  j["optimizer"] = {{"lr", m.optimizer.lr},
                    {"beta1", m.optimizer.beta1},
                    {"beta2", m.optimizer.beta2},
                    {"weight_decay", m.optimizer.weight_decay}};
  return j;
}

CheckpointMeta meta_from_json(const ordered_json& j) {
  CheckpointMeta m;
  m.format_version = j.at("format_version").get<int>();
  if (m.format_version != CheckpointMeta::kFormatVersion) {
    throw IoError("unsupported checkpoint format_version " + std::to_string(m.format_version));
  }
  m.variant = j.at("variant").get<std::string>();
  const auto& mj = j.at("model");
  m.model.in_channels = mj.at("in_channels").get<int>();
  m.model.base_width = mj.at("base_width").get<int>();
  m.model.depth = mj.at("depth").get<int>();
  m.model.attention_at_bottleneck = mj.at("attention_at_bottleneck").get<bool>();
  m.model.time_embed_dim = mj.at("time_embed_dim").get<int>();
  m.T = j.at("schedule").at("T").get<int>();
  m.cosine_s = j.at("schedule").at("cosine_s").get<double>();
  m.step = j.at("step").get<std::int64_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.ema_lambda = j.at("ema_lambda").get<double>();
  const auto& oj = j.at("optimizer");
  m.optimizer = {oj.at("lr").get<double>(), oj.at("beta1").get<double>(), oj.at("beta2").get<double>(),
                 oj.at("weight_decay").get<double>()};
  return m;
}

}  // namespace

void save_checkpoint(const fs::path& path, const TrainState& state, const VariantSpec& variant,
                     const diffusion::DiffusionSchedule& schedule) {
  CheckpointMeta meta;
  meta.variant = variant.name();
  meta.model = state.model->config();
  meta.T = schedule.T;
  meta.cosine_s = schedule.offset_s;
  meta.step = state.step;
  meta.seed = state.seed;
  meta.ema_lambda = state.ema_lambda;
  meta.optimizer = state.optimizer_settings;

  torch::serialize::OutputArchive archive;
  archive.write("meta", c10::IValue(meta_to_json(meta).dump()));
  torch::serialize::OutputArchive model_archive;
  state.model->save(model_archive);
  archive.write("model", model_archive);
  torch::serialize::OutputArchive ema_archive;
  state.ema->save(ema_archive);
  archive.write("ema", ema_archive);
  torch::serialize::OutputArchive optimizer_archive;
  state.optimizer->save(optimizer_archive);
  archive.write("optimizer", optimizer_archive);

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  try {
    archive.save_to(tmp.string());
  } catch (const c10::Error& e) {
    throw IoError("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  fs::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw IoError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  c10::IValue meta_value;
  archive.read("meta", meta_value);

  LoadedCheckpoint out;
  out.meta = meta_from_json(ordered_json::parse(meta_value.toStringRef()));
  out.variant = parse_variant(out.meta.variant);
  out.schedule = diffusion::make_cosine_schedule(out.meta.T, out.meta.cosine_s);
  out.state = TrainState::create(out.meta.model, out.meta.optimizer, out.meta.seed, out.meta.ema_lambda);
  out.state.step = out.meta.step;

  torch::serialize::InputArchive model_archive;
  archive.read("model", model_archive);
  out.state.model->load(model_archive);
  torch::serialize::InputArchive ema_archive;
  archive.read("ema", ema_archive);
  out.state.ema->load(ema_archive);
  for (auto& p : out.state.ema->parameters()) p.set_requires_grad(false);
  torch::serialize::InputArchive optimizer_archive;
  archive.read("optimizer", optimizer_archive);
  out.state.optimizer->load(optimizer_archive);
  return out;
}

std::string checkpoint_id(const fs::path& path) {
  // Archive bytes are not reproducible (random serialization ids, optimizer
  // state order), so hash the metadata and weights instead.
  const LoadedCheckpoint ckpt = load_checkpoint(path);
  std::string content = meta_to_json(ckpt.meta).dump();
  auto append_module = [&content](const torch::nn::Module& module) {
    for (const auto& item : module.named_parameters()) {
      const torch::Tensor t = item.value().detach().contiguous().cpu();
      content += item.key();
      content.append(static_cast<const char*>(t.data_ptr()), t.nbytes());
    }
    for (const auto& item : module.named_buffers()) {
      const torch::Tensor t = item.value().detach().contiguous().cpu();
      content += item.key();
      content.append(static_cast<const char*>(t.data_ptr()), t.nbytes());
    }
  };
  append_module(*ckpt.state.model);
  append_module(*ckpt.state.ema);
  return hex64(fnv1a64(content));
}

double subtraction_roundtrip_error(std::span<const SlicePair> pairs) {
  const VariantSpec sub{Target::SUB};
  double worst = 0.0;
  for (const auto& p : pairs) {
    const auto rebuilt = reconstruct_post(make_target(p, sub), p.pre.pixels());
    for (std::size_t i = 0; i < rebuilt.size(); ++i) {
      worst = std::max(worst, static_cast<double>(std::abs(rebuilt.pixels()[i] - p.post.pixels().pixels()[i])));
    }
  }
  return worst;
}

std::vector<SlicePair> load_split(const DatasetManifest& manifest, const fs::path& root, Split split) {
  std::vector<SlicePair> pairs;
  for (const auto& r : manifest.records) {
    if (r.split == split) pairs.push_back(load_pair(root, r));
  }
  return pairs;
}

TrainResult train(const TrainOptions& options) {
  const auto manifest = read_manifest(options.manifest);
  check_patient_disjoint(manifest);
  const auto pairs = load_split(manifest, manifest_root(options.manifest), Split::train);
  if (pairs.empty()) throw ContractError("manifest has no training records");
  if (options.batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (options.variant.target == Target::SUB) {
    const double err = subtraction_roundtrip_error(pairs);
    if (err > 1e-6) throw ContractError("subtraction round-trip audit failed (max error " + std::to_string(err) + ")");
  }

  auto model_config = options.model;
  model_config.in_channels = options.variant.in_channels();
  const auto schedule = diffusion::make_cosine_schedule(options.T, options.cosine_s);

  TrainState state;
  if (options.resume_from) {
    auto loaded = load_checkpoint(*options.resume_from);
    if (!(loaded.variant == options.variant)) {
      throw ConfigError("resume checkpoint was trained as " + loaded.meta.variant);
    }
    state = std::move(loaded.state);
  } else {
    state = TrainState::create(model_config, options.optimizer, options.seed, options.ema_lambda);
  }

  const auto n = static_cast<std::int64_t>(pairs.size());
  const std::int64_t steps_per_epoch = (n + options.batch_size - 1) / options.batch_size;
  const std::int64_t total_steps = options.steps > 0 ? options.steps : steps_per_epoch * options.variant.epochs;

  fs::create_directories(options.out_dir);
  std::ofstream log(options.out_dir / "loss_log.jsonl", options.resume_from ? std::ios::app : std::ios::trunc);

  TrainResult result;
  std::vector<SlicePair> batch_pairs;
  while (state.step < total_steps) {
    Rng rng(mix_seed(state.seed, static_cast<std::uint64_t>(state.step), kStreamBatch));
    batch_pairs.clear();
    for (int i = 0; i < options.batch_size; ++i) {
      batch_pairs.push_back(pairs[static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(n))]);
    }
    const auto batch = make_batch(batch_pairs);
    losses::LossBreakdown loss;
    try {
      loss = train_step(batch, options.variant, state, schedule, options.losses);
    } catch (const DivergenceError& e) {
      std::ofstream dump(options.out_dir / "divergence.json");
      dump << e.dump() << '\n';
      throw;
    }
    result.loss_history.push_back(loss.total);

    ordered_json line;
    line["step"] = state.step;
    line["total"] = loss.total;
    for (const auto& [name, term] : loss.components) line["components"][name] = {{"raw", term.raw}, {"weight", term.weight}};
    if (!loss.flags.empty()) line["flags"] = loss.flags;
    log << line.dump() << '\n';
    if (options.on_step) options.on_step(state.step, loss);

    if (options.checkpoint_every > 0 && state.step % options.checkpoint_every == 0 && state.step < total_steps) {
      save_checkpoint(options.out_dir / ("step_" + std::to_string(state.step) + ".pt"), state, options.variant,
                      schedule);
    }
  }
  result.steps = state.step;
  result.final_checkpoint = options.out_dir / "final.pt";
  save_checkpoint(result.final_checkpoint, state, options.variant, schedule);
  return result;
}

std::string generated_file_name(const ManifestRecord& record) {
  return record.patient_id + "_" + std::to_string(record.slice_index) + ".png";
}

std::size_t sample_split(const LoadedCheckpoint& checkpoint, const fs::path& manifest_path, const fs::path& out_dir,
                         const SampleOptions& options) {
  const auto manifest = read_manifest(manifest_path);
  const auto root = manifest_root(manifest_path);
  std::vector<ManifestRecord> records = manifest.records_in(options.split);
  fs::create_directories(out_dir);

  auto model = checkpoint.state.ema;
  model->eval();
  const auto& variant = checkpoint.variant;
  auto sampler = options.sampler;
  std::tie(sampler.clamp_lo, sampler.clamp_hi) = target_range(variant);

  const diffusion::X0Predictor predictor = [&](const torch::Tensor& x_t, const backbone::ConditionBundle& cond, int t) {
    auto ts = torch::full({x_t.size(0)}, static_cast<std::int64_t>(t), torch::kInt64);
    return model->predict(x_t, cond, ts);
  };

  const std::size_t batch_size = static_cast<std::size_t>(std::max(1, options.batch_size));
  std::size_t written = 0;
  for (std::size_t start = 0; start < records.size(); start += batch_size) {
    const std::size_t end = std::min(records.size(), start + batch_size);
    std::vector<SlicePair> pairs;
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = start; i < end; ++i) {
      pairs.push_back(load_pair(root, records[i]));
      seeds.push_back(mix_seed(options.seed, i));
    }
    const auto batch = make_batch(pairs);
    if (variant.uses_mask_input() && !batch.mask) {
      throw ContractError("variant " + variant.name() + " needs masks but the manifest has none");
    }
    backbone::ConditionBundle cond{batch.pre, variant.uses_mask_input() ? batch.mask : std::nullopt};
    auto x0 = diffusion::sample(predictor, cond, checkpoint.schedule, seeds, sampler);
    auto post = variant.target == Target::PC ? x0.clamp(0.0, 1.0) : reconstruct_post(x0, batch.pre);
    for (std::size_t i = start; i < end; ++i) {
      write_png_gray(batch_item(post, static_cast<std::int64_t>(i - start)), out_dir / generated_file_name(records[i]));
      ++written;
    }
  }
  return written;
}

}  // namespace dcesynth::training
