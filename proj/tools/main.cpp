#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dcesynth/config.hpp"
#include "dcesynth/evaluation.hpp"
#include "dcesynth/phantom.hpp"
#include "dcesynth/pipeline.hpp"
#include "dcesynth/reader.hpp"
#include "dcesynth/training.hpp"
#include "reader_server.hpp"

namespace fs = std::filesystem;
using namespace dcesynth;

namespace {

void log_line(const std::string& stage, const std::string& message) {
  std::cerr << "[" << stage << "] " << message << '\n';
}

ExperimentConfig config_or_default(const std::string& path, std::optional<std::uint64_t> seed) {
  ExperimentConfig c;
  if (!path.empty()) {
    c = load_config(path);
  } else if (!seed) {
    throw ConfigError("either --config or --seed is required");
  }
  if (seed) c.seed = *seed;
  return c;
}

int cmd_phantom(const std::string& out, int cases, int size, int depth, std::uint64_t seed, double test_fraction,
                const std::string& laterality) {
  phantom::CorpusOptions o;
  o.cases = cases;
  o.image_size = size;
  o.depth = depth;
  o.seed = seed;
  o.test_fraction = test_fraction;
  if (laterality == "bilateral") {
    o.laterality = phantom::CorpusOptions::LateralityMode::bilateral;
  } else if (laterality == "unilateral") {
    o.laterality = phantom::CorpusOptions::LateralityMode::unilateral;
  } else {
    o.laterality = phantom::CorpusOptions::LateralityMode::mixed;
  }
  phantom::write_corpus(o, out);
  std::cout << "wrote " << cases << " cases to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pre-contrast conditioned diffusion synthesis of contrast-enhanced breast MRI"};
  app.require_subcommand(1);

  // phantom
  auto* phantom_cmd = app.add_subcommand("phantom", "Write a synthetic case corpus");
  std::string ph_out;
  int ph_cases = 32, ph_size = 64, ph_depth = 16;
  std::uint64_t ph_seed = 0;
  double ph_test = 0.25;
  std::string ph_lat = "bilateral";
  phantom_cmd->add_option("--out", ph_out, "Output directory")->required();
  phantom_cmd->add_option("--cases", ph_cases, "Number of cases")->check(CLI::PositiveNumber);
  phantom_cmd->add_option("--size", ph_size, "Image size in pixels")->check(CLI::Range(16, 1024));
  phantom_cmd->add_option("--depth", ph_depth, "Slices per volume")->check(CLI::PositiveNumber);
  phantom_cmd->add_option("--seed", ph_seed, "Random seed")->required();
  phantom_cmd->add_option("--test-fraction", ph_test, "Fraction of cases in the test split")->check(CLI::Range(0.0, 1.0));
  phantom_cmd->add_option("--laterality", ph_lat)->check(CLI::IsMember({"bilateral", "unilateral", "mixed"}));

  // preprocess
  auto* pre_cmd = app.add_subcommand("preprocess", "Extract, normalize and export slices");
  std::string pp_cases, pp_out;
  double pp_frac = 0.2;
  std::uint64_t pp_seed = 0;
  bool pp_single = false;
  pre_cmd->add_option("--cases", pp_cases, "Directory of case folders")->required()->check(CLI::ExistingDirectory);
  pre_cmd->add_option("--out", pp_out, "Dataset output directory")->required();
  pre_cmd->add_option("--adjacent-fraction", pp_frac)->check(CLI::Range(0.0, 1.0));
  pre_cmd->add_option("--seed", pp_seed)->required();
  pre_cmd->add_flag("--single-breast", pp_single, "Crop every slice to the tumor-bearing breast");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one model variant");
  std::string tr_variant, tr_manifest, tr_config, tr_out, tr_resume;
  std::optional<std::uint64_t> tr_seed;
  std::optional<std::int64_t> tr_steps;
  train_cmd->add_option("--variant", tr_variant, "Variant name, e.g. SUB-ROI_L")->required();
  train_cmd->add_option("--manifest", tr_manifest)->required();
  train_cmd->add_option("--config", tr_config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tr_out)->required();
  train_cmd->add_option("--seed", tr_seed);
  train_cmd->add_option("--steps", tr_steps, "Override training.steps");
  train_cmd->add_option("--resume", tr_resume, "Checkpoint to resume from")->check(CLI::ExistingFile);

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "Generate post-contrast images for a split");
  std::string sa_ckpt, sa_manifest, sa_out, sa_config, sa_split = "test";
  std::optional<std::uint64_t> sa_seed;
  std::optional<int> sa_steps;
  sample_cmd->add_option("--checkpoint", sa_ckpt)->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--manifest", sa_manifest)->required();
  sample_cmd->add_option("--out", sa_out)->required();
  sample_cmd->add_option("--config", sa_config)->check(CLI::ExistingFile);
  sample_cmd->add_option("--seed", sa_seed);
  sample_cmd->add_option("--steps", sa_steps, "Override sampling.steps");
  sample_cmd->add_option("--split", sa_split)->check(CLI::IsMember({"train", "test"}));

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Compute metric rows for generated images");
  std::string ev_manifest, ev_generated, ev_modes = "full,roi", ev_out, ev_ref = "post", ev_row = "Generated";
  std::string ev_ckpt, ev_backend = "fallback", ev_model, ev_csv, ev_table;
  int ev_margin = eval::kDefaultRoiMargin;
  eval_cmd->add_option("--manifest", ev_manifest)->required();
  eval_cmd->add_option("--generated", ev_generated)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--modes", ev_modes, "Comma list of full, roi");
  eval_cmd->add_option("--out", ev_out, "Report JSON path")->required();
  eval_cmd->add_option("--reference", ev_ref)->check(CLI::IsMember({"post", "sub"}));
  eval_cmd->add_option("--row-name", ev_row);
  eval_cmd->add_option("--checkpoint", ev_ckpt, "Checkpoint whose id is recorded")->check(CLI::ExistingFile);
  eval_cmd->add_option("--roi-margin", ev_margin)->check(CLI::NonNegativeNumber);
  eval_cmd->add_option("--perceptual-backend", ev_backend)->check(CLI::IsMember({"pretrained", "fallback"}));
  eval_cmd->add_option("--perceptual-model", ev_model, "TorchScript feature network");
  eval_cmd->add_option("--csv", ev_csv, "Per-case CSV path");
  eval_cmd->add_option("--table", ev_table, "Text table path");

  // report
  auto* report_cmd = app.add_subcommand("report", "Merge reports and print the metric table");
  std::vector<std::string> rp_in;
  std::string rp_out, rp_csv;
  report_cmd->add_option("reports", rp_in, "Report JSON files")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--out", rp_out, "Merged report path");
  report_cmd->add_option("--csv", rp_csv, "Per-case CSV path");

  // run
  auto* run_cmd = app.add_subcommand("run", "Run data, train, sample, evaluate and figures from a config");
  std::string rn_config;
  bool rn_force = false;
  run_cmd->add_option("--config", rn_config)->required()->check(CLI::ExistingFile);
  run_cmd->add_flag("--force", rn_force, "Rerun even if a run with the same config hash exists");

  // reader-serve
  auto* serve_cmd = app.add_subcommand("reader-serve", "Serve the reader-study API");
  std::string rs_pool, rs_host = "127.0.0.1";
  int rs_port = 8080;
  serve_cmd->add_option("--pool", rs_pool, "Image pool with real/, synthetic/, pre/")->required()->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--port", rs_port)->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--host", rs_host);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*phantom_cmd) return cmd_phantom(ph_out, ph_cases, ph_size, ph_depth, ph_seed, ph_test, ph_lat);

    if (*pre_cmd) {
      const auto built = preprocess_cases(pp_cases, pp_out, pp_frac, pp_single, pp_seed);
      for (const auto& w : built.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "wrote " << built.manifest.records.size() << " records to " << pp_out << '\n';
      return 0;
    }

    if (*train_cmd) {
      const auto cfg = config_or_default(tr_config, tr_seed);
      training::TrainOptions t;
      t.variant = training::parse_variant(tr_variant);
      t.manifest = tr_manifest;
      t.out_dir = tr_out;
      t.model = cfg.model;
      t.optimizer = cfg.optimizer;
      t.losses = cfg.loss_settings();
      t.T = cfg.T;
      t.cosine_s = cfg.cosine_s;
      t.steps = tr_steps.value_or(cfg.training.steps);
      t.batch_size = cfg.training.batch_size;
      t.checkpoint_every = cfg.training.checkpoint_every;
      t.ema_lambda = cfg.training.ema_lambda;
      t.seed = cfg.seed;
      if (!tr_resume.empty()) t.resume_from = fs::path(tr_resume);
      t.on_step = [](std::int64_t step, const losses::LossBreakdown& loss) {
        if (step % 50 == 0) log_line("train", "step " + std::to_string(step) + " loss " + std::to_string(loss.total));
      };
      const auto result = training::train(t);
      std::cout << result.final_checkpoint.string() << '\n';
      return 0;
    }

    if (*sample_cmd) {
      ExperimentConfig cfg;
      if (!sa_config.empty()) cfg = load_config(sa_config);
      const auto ckpt = training::load_checkpoint(sa_ckpt);
      training::SampleOptions s;
      s.sampler = cfg.sampler_options();
      if (sa_steps) s.sampler.steps = *sa_steps;
      s.seed = sa_seed.value_or(cfg.sampling_seed());
      s.batch_size = cfg.sampling.batch_size;
      s.split = parse_split(sa_split);
      const auto n = training::sample_split(ckpt, sa_manifest, sa_out, s);
      std::cout << "wrote " << n << " images to " << sa_out << '\n';
      return 0;
    }

    if (*eval_cmd) {
      eval::EvalOptions e;
      e.modes = eval::parse_modes(ev_modes);
      e.reference = eval::parse_reference(ev_ref);
      e.row_name = ev_row;
      e.roi_margin = ev_margin;
      if (!ev_ckpt.empty()) e.model_checkpoint_id = training::checkpoint_id(ev_ckpt);
      std::optional<fs::path> model_path;
      if (!ev_model.empty()) model_path = fs::path(ev_model);
      e.extractor = features::make_extractor(features::parse_backend(ev_backend), model_path);
      const auto report = eval::evaluate_run(ev_manifest, ev_generated, e);
      eval::write_report(report, ev_out);
      if (!ev_csv.empty()) eval::write_per_case_csv(report, ev_csv);
      const auto table = eval::render_table(report);
      if (!ev_table.empty()) std::ofstream(ev_table) << table;
      std::cout << table;
      return 0;
    }

    if (*report_cmd) {
      std::vector<eval::EvalReport> reports;
      for (const auto& p : rp_in) reports.push_back(eval::read_report(p));
      const auto merged = eval::merge_reports(reports);
      if (!rp_out.empty()) eval::write_report(merged, rp_out);
      if (!rp_csv.empty()) eval::write_per_case_csv(merged, rp_csv);
      std::cout << eval::render_table(merged);
      return 0;
    }

    if (*run_cmd) {
      const auto cfg = load_config(rn_config);
      RunOptions o;
      o.force = rn_force;
      o.log = log_line;
      const auto run = run_pipeline(cfg, o);
      std::cout << (cfg.output_dir / kRunManifestName).string() << '\n';
      return 0;
    }

    if (*serve_cmd) {
      reader::ReaderService service(reader::ImagePool::scan(rs_pool));
      std::signal(SIGINT, [](int) { reader::stop_reader_server(); });
      std::signal(SIGTERM, [](int) { reader::stop_reader_server(); });
      reader::serve(service, rs_host, rs_port, [&](int port) {
        std::cerr << "reader API listening on http://" << rs_host << ":" << port << '\n';
      });
      return 0;
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
