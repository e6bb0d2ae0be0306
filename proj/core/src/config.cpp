#include "dcesynth/config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>

#include "dcesynth/rng.hpp"

namespace dcesynth {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  require_object(j, where);
  for (const auto& item : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; })) {
      throw ConfigError("unknown key '" + (where.empty() ? "" : where + ".") + item.key() + "'");
    }
  }
}

template <typename T>
T get(const json& j, const char* key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("invalid value for '" + (where.empty() ? "" : where + ".") + key + "'");
  }
}

fs::path resolve(const fs::path& p, const fs::path& base) { return p.is_absolute() || base.empty() ? p : base / p; }

std::vector<double> weights(const json& j, const std::string& where, std::size_t n) {
  std::vector<double> w;
  try {
    w = j.get<std::vector<double>>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": expected a list of numbers");
  }
  if (w.size() != n) throw ConfigError(where + ": expected " + std::to_string(n) + " weights");
  for (double v : w) {
    if (!(v >= 0.0)) throw ConfigError(where + ": weights must be non-negative");
  }
  return w;
}

std::vector<double> weight_object(const json& j, const std::string& where, std::size_t n) {
  check_keys(j, where, {"weights"});
  if (!j.contains("weights")) throw ConfigError(where + ".weights is required");
  return weights(j.at("weights"), where + ".weights", n);
}

}  // namespace

namespace {

ExperimentConfig parse_config_impl(const json& j, const fs::path& base) {
  check_keys(j, "", {"variant", "variants", "data", "output_dir", "seed", "model", "diffusion", "sampling", "loss",
                     "optimizer", "training", "evaluation"});
  ExperimentConfig c;
  if (!j.contains("seed")) throw ConfigError("'seed' is required");
  c.seed = get<std::uint64_t>(j, "seed", "", 0);

  if (j.contains("variant") && j.contains("variants")) throw ConfigError("give either 'variant' or 'variants'");
  try {
    if (j.contains("variant")) c.variants.push_back(training::parse_variant(j.at("variant").get<std::string>()));
    if (j.contains("variants")) {
      for (const auto& v : j.at("variants")) c.variants.push_back(training::parse_variant(v.get<std::string>()));
    }
  } catch (const json::exception&) {
    throw ConfigError("variant names must be strings");
  }
  if (j.contains("output_dir")) c.output_dir = resolve(j.at("output_dir").get<std::string>(), base);

  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d, "data", {"manifest", "preprocess", "phantom", "single_breast"});
    int sources = 0;
    if (d.contains("manifest")) {
      c.data.manifest = resolve(d.at("manifest").get<std::string>(), base);
      ++sources;
    }
    if (d.contains("preprocess")) {
      const auto& p = d.at("preprocess");
      check_keys(p, "data.preprocess", {"cases", "adjacent_fraction"});
      if (!p.contains("cases")) throw ConfigError("data.preprocess.cases is required");
      PreprocessSection s;
      s.cases_dir = resolve(p.at("cases").get<std::string>(), base);
      s.adjacent_fraction = get<double>(p, "adjacent_fraction", "data.preprocess", 0.2);
      c.data.preprocess = s;
      ++sources;
    }
    if (d.contains("phantom")) {
      const auto& p = d.at("phantom");
      check_keys(p, "data.phantom", {"cases", "size", "depth", "seed", "test_fraction"});
      phantom::CorpusOptions o;
      o.cases = get<int>(p, "cases", "data.phantom", o.cases);
      o.image_size = get<int>(p, "size", "data.phantom", o.image_size);
      o.depth = get<int>(p, "depth", "data.phantom", o.depth);
      o.seed = get<std::uint64_t>(p, "seed", "data.phantom", c.seed);
      o.test_fraction = get<double>(p, "test_fraction", "data.phantom", o.test_fraction);
      c.data.phantom = o;
      ++sources;
    }
    if (sources > 1) throw ConfigError("data: give exactly one of manifest, preprocess, phantom");
    c.data.single_breast = get<bool>(d, "single_breast", "data", false);
  }

  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m, "model", {"base_width", "depth", "attention", "time_embed_dim"});
    c.model.base_width = get<int>(m, "base_width", "model", c.model.base_width);
    c.model.depth = get<int>(m, "depth", "model", c.model.depth);
    c.model.attention_at_bottleneck = get<bool>(m, "attention", "model", c.model.attention_at_bottleneck);
    c.model.time_embed_dim = get<int>(m, "time_embed_dim", "model", c.model.time_embed_dim);
    c.model.validate();
  }

  if (j.contains("diffusion")) {
    const auto& d = j.at("diffusion");
    check_keys(d, "diffusion", {"T", "cosine_s", "sigma_rule"});
    c.T = get<int>(d, "T", "diffusion", c.T);
    c.cosine_s = get<double>(d, "cosine_s", "diffusion", c.cosine_s);
    if (d.contains("sigma_rule")) c.sigma_rule = diffusion::parse_sigma_rule(d.at("sigma_rule").get<std::string>());
    if (c.T < 1) throw ConfigError("diffusion.T must be >= 1");
    if (!(c.cosine_s > 0.0)) throw ConfigError("diffusion.cosine_s must be > 0");
  }

  if (j.contains("sampling")) {
    const auto& s = j.at("sampling");
    check_keys(s, "sampling", {"steps", "seed", "batch_size", "mean_rule"});
    c.sampling.steps = get<int>(s, "steps", "sampling", c.sampling.steps);
    if (s.contains("seed")) c.sampling.seed = s.at("seed").get<std::uint64_t>();
    c.sampling.batch_size = get<int>(s, "batch_size", "sampling", c.sampling.batch_size);
    if (s.contains("mean_rule")) c.sampling.mean_rule = diffusion::parse_mean_rule(s.at("mean_rule").get<std::string>());
    if (c.sampling.steps < 1 || c.sampling.steps > c.T) throw ConfigError("sampling.steps must lie in [1, T]");
    if (c.sampling.batch_size < 1) throw ConfigError("sampling.batch_size must be >= 1");
  }

  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    check_keys(l, "loss", {"global", "roi", "tumor", "perceptual"});
    if (l.contains("global")) {
      const auto w = weight_object(l.at("global"), "loss.global", 4);
      c.global_weights = {w[0], w[1], w[2], w[3]};
    }
    if (l.contains("roi")) {
      const auto w = weight_object(l.at("roi"), "loss.roi", 4);
      c.roi_weights = {w[0], w[1], w[2], w[3]};
    }
    if (l.contains("tumor")) {
      const auto w = weight_object(l.at("tumor"), "loss.tumor", 4);
      c.tumor_weights = {w[0], w[1], w[2], w[3]};
    }
    if (l.contains("perceptual")) {
      const auto& p = l.at("perceptual");
      check_keys(p, "loss.perceptual", {"backend", "model_path"});
      if (p.contains("backend")) c.perceptual.backend = features::parse_backend(p.at("backend").get<std::string>());
      if (p.contains("model_path")) c.perceptual.model_path = resolve(p.at("model_path").get<std::string>(), base);
    }
  }

  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    check_keys(o, "optimizer", {"lr", "betas", "weight_decay"});
    c.optimizer.lr = get<double>(o, "lr", "optimizer", c.optimizer.lr);
    if (o.contains("betas")) {
      const auto b = weights(o.at("betas"), "optimizer.betas", 2);
      c.optimizer.beta1 = b[0];
      c.optimizer.beta2 = b[1];
    }
    c.optimizer.weight_decay = get<double>(o, "weight_decay", "optimizer", c.optimizer.weight_decay);
    if (!(c.optimizer.lr > 0.0)) throw ConfigError("optimizer.lr must be > 0");
  }

  if (j.contains("training")) {
    const auto& t = j.at("training");
    check_keys(t, "training", {"steps", "batch_size", "checkpoint_every", "ema_lambda"});
    c.training.steps = get<std::int64_t>(t, "steps", "training", c.training.steps);
    c.training.batch_size = get<int>(t, "batch_size", "training", c.training.batch_size);
    c.training.checkpoint_every = get<std::int64_t>(t, "checkpoint_every", "training", c.training.checkpoint_every);
    c.training.ema_lambda = get<double>(t, "ema_lambda", "training", c.training.ema_lambda);
    if (c.training.steps < 0) throw ConfigError("training.steps must be >= 0");
    if (c.training.batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
    if (!(c.training.ema_lambda > 0.0 && c.training.ema_lambda < 1.0)) {
      throw ConfigError("training.ema_lambda must lie in (0, 1)");
    }
  }

  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    check_keys(e, "evaluation", {"modes", "reference", "roi_margin"});
    if (e.contains("modes")) {
      c.evaluation.modes.clear();
      for (const auto& m : e.at("modes")) {
        const auto mode = eval::parse_mode(m.get<std::string>());
        if (std::find(c.evaluation.modes.begin(), c.evaluation.modes.end(), mode) == c.evaluation.modes.end()) {
          c.evaluation.modes.push_back(mode);
        }
      }
      if (c.evaluation.modes.empty()) throw ConfigError("evaluation.modes is empty");
    }
    if (e.contains("reference")) c.evaluation.reference = eval::parse_reference(e.at("reference").get<std::string>());
    c.evaluation.roi_margin = get<int>(e, "roi_margin", "evaluation", c.evaluation.roi_margin);
    if (c.evaluation.roi_margin < 0) throw ConfigError("evaluation.roi_margin must be >= 0");
  }
  return c;
}

}  // namespace

ExperimentConfig parse_config(const json& j, const fs::path& base) {
  try {
    return parse_config_impl(j, base);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

ordered_json ExperimentConfig::canonical() const {
  ordered_json j;
  j["variants"] = ordered_json::array();
  for (const auto& v : variants) j["variants"].push_back(v.name());
  ordered_json d = ordered_json::object();
  if (data.manifest) d["manifest"] = data.manifest->string();
  if (data.preprocess) {
    d["preprocess"] = {{"cases", data.preprocess->cases_dir.string()},
                       {"adjacent_fraction", data.preprocess->adjacent_fraction}};
  }
  if (data.phantom) {
    d["phantom"] = {{"cases", data.phantom->cases},
                    {"size", data.phantom->image_size},
                    {"depth", data.phantom->depth},
                    {"seed", data.phantom->seed},
                    {"test_fraction", data.phantom->test_fraction}};
  }
  d["single_breast"] = data.single_breast;
  j["data"] = d;
  j["output_dir"] = output_dir.string();
  j["seed"] = seed;
  j["model"] = {{"base_width", model.base_width},
                {"depth", model.depth},
                {"attention", model.attention_at_bottleneck},
                {"time_embed_dim", model.time_embed_dim}};
  j["diffusion"] = {{"T", T}, {"cosine_s", cosine_s}, {"sigma_rule", diffusion::to_string(sigma_rule)}};
  j["sampling"] = {{"steps", sampling.steps},
                   {"seed", sampling_seed()},
                   {"batch_size", sampling.batch_size},
                   {"mean_rule", diffusion::to_string(sampling.mean_rule)}};
  ordered_json perceptual_j = {{"backend", features::to_string(perceptual.backend)}};
  if (perceptual.model_path) perceptual_j["model_path"] = perceptual.model_path->string();
  j["loss"] = {
      {"global", {{"weights", {global_weights.mae, global_weights.perceptual, global_weights.tv, global_weights.mse}}}},
      {"roi", {{"weights", {roi_weights.mae, roi_weights.perceptual, roi_weights.tv, roi_weights.mse}}}},
      {"tumor",
       {{"weights", {tumor_weights.global, tumor_weights.roi, tumor_weights.contrast, tumor_weights.intensity}}}},
      {"perceptual", perceptual_j}};
  j["optimizer"] = {{"lr", optimizer.lr},
                    {"betas", {optimizer.beta1, optimizer.beta2}},
                    {"weight_decay", optimizer.weight_decay}};
  j["training"] = {{"steps", training.steps},
                   {"batch_size", training.batch_size},
                   {"checkpoint_every", training.checkpoint_every},
                   {"ema_lambda", training.ema_lambda}};
  ordered_json modes = ordered_json::array();
  for (auto m : evaluation.modes) modes.push_back(eval::to_string(m));
  j["evaluation"] = {{"modes", modes},
                     {"reference", eval::to_string(evaluation.reference)},
                     {"roi_margin", evaluation.roi_margin}};
  return j;
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a64(canonical().dump())); }

losses::LossSettings ExperimentConfig::loss_settings() const {
  losses::LossSettings s;
  s.global = global_weights;
  s.roi = roi_weights;
  s.tumor = tumor_weights;
  s.extractor = features::make_extractor(perceptual.backend, perceptual.model_path);
  return s;
}

diffusion::SamplerOptions ExperimentConfig::sampler_options() const {
  diffusion::SamplerOptions o;
  o.steps = sampling.steps;
  o.sigma_rule = sigma_rule;
  o.mean_rule = sampling.mean_rule;
  return o;
}

}  // namespace dcesynth
