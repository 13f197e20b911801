// Command-line entry point: run / sweep / plot / pretrain.

#include "betrans/harness/experiment.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

using namespace betrans;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string experiment;
  std::string out;
  std::string method;
  std::string latent;
  int seed = -1;
  int seeds = -1;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool config_required = true) {
  auto* c = cmd->add_option("--config", o.config_path, "config file path");
  if (config_required) c->required();
  cmd->add_option("--experiment", o.experiment,
                  "experiment id (exp1|exp2|exp3|exp4|sweep|latent_study)");
  cmd->add_option("--out", o.out, "output directory root");
  cmd->add_option("--method", o.method, "restrict to a single method");
  cmd->add_option("--latent", o.latent, "latent mode (discrete|continuous)");
  cmd->add_option("--seed", o.seed, "single seed to run");
  cmd->add_option("--seeds", o.seeds, "number of seeds");
}

harness::ExperimentConfig build_config(const CommonOpts& o) {
  harness::ExperimentConfig cfg = harness::load_config(o.config_path);
  if (!o.experiment.empty()) cfg.experiment = o.experiment;
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (!o.method.empty()) cfg.methods = {o.method};
  if (!o.latent.empty()) {
    if (o.latent == "discrete")
      cfg.bt.latent_mode = model::LatentMode::kDiscrete;
    else if (o.latent == "continuous")
      cfg.bt.latent_mode = model::LatentMode::kContinuous;
    else
      throw ConfigError("--latent must be discrete or continuous");
  }
  if (o.seeds > 0) cfg.seeds = o.seeds;
  if (o.seed >= 0) {
    cfg.seed_base = o.seed;
    cfg.seeds = 1;
  }
  cfg.finalize();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"co-pass experiments: latent-conditioned SAC with a causal "
               "transformer and baselines"};
  app.require_subcommand(1);

  CommonOpts run_o, sweep_o, plot_o, pre_o;
  std::string plot_dir;
  std::string ckpt_out;

  auto* run_cmd = app.add_subcommand("run", "train methods × seeds");
  add_common(run_cmd, run_o);

  auto* sweep_cmd =
      app.add_subcommand("sweep", "grid over travel_steps / n_targets");
  add_common(sweep_cmd, sweep_o);

  auto* plot_cmd = app.add_subcommand("plot", "learning-curve figures");
  plot_cmd->add_option("--dir", plot_dir,
                       "experiment output directory (with CSV files)");
  add_common(plot_cmd, plot_o, /*config_required=*/false);

  auto* pre_cmd = app.add_subcommand(
      "pretrain", "random-action pre-training; writes a checkpoint");
  add_common(pre_cmd, pre_o);
  pre_cmd->add_option("--checkpoint", ckpt_out, "checkpoint output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      auto cfg = build_config(run_o);
      auto paths = harness::run_experiment(cfg);
      std::cout << "wrote " << paths.size() << " metric files under "
                << harness::experiment_dir(cfg) << "\n";
    } else if (sweep_cmd->parsed()) {
      auto cfg = build_config(sweep_o);
      harness::run_sweep(cfg);
      std::cout << "sweep summary under " << harness::experiment_dir(cfg)
                << "\n";
    } else if (plot_cmd->parsed()) {
      std::string dir = plot_dir;
      if (dir.empty()) {
        if (plot_o.config_path.empty())
          throw ConfigError("plot needs --dir or --config");
        dir = harness::experiment_dir(build_config(plot_o));
      }
      auto figs = harness::plot_experiment(dir);
      for (const auto& f : figs) std::cout << "wrote " << f << "\n";
      if (figs.empty()) std::cout << "no metric files found in " << dir << "\n";
    } else if (pre_cmd->parsed()) {
      auto cfg = build_config(pre_o);
      int seed = pre_o.seed >= 0 ? pre_o.seed : cfg.seed_base;
      baselines::BetransProvider<harness::F> provider(cfg.bt, cfg.dn,
                                                      derive_seed(seed, 5));
      replay::TrajectoryStore buffer(1, cfg.bt.block_steps);
      harness::pretrain_betrans(cfg, provider, derive_seed(seed, 6), &buffer);
      std::string out = ckpt_out.empty()
                            ? harness::experiment_dir(cfg) + "_pretrain_seed" +
                                  std::to_string(seed) + ".ckpt"
                            : ckpt_out;
      std::filesystem::create_directories(
          std::filesystem::path(out).parent_path().empty()
              ? "."
              : std::filesystem::path(out).parent_path().string());
      harness::save_checkpoint(out, cfg, *provider.nets());
      buffer.save(out + ".buffer", cfg.hash());
      std::cout << "wrote " << out << " and " << out << ".buffer\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
