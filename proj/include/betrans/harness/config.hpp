#pragma once

#include "betrans/common.hpp"
#include "betrans/env/copass.hpp"
#include "betrans/human/human_model.hpp"
#include "betrans/model/betrans_model.hpp"
#include "betrans/model/dynamics_network.hpp"
#include "betrans/rl/sac_agent.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace betrans::harness {

struct ExperimentConfig {
  std::string experiment = "exp1";  // exp1|exp2|exp3|exp4|sweep|latent_study
  std::string out_dir = "out";
  std::vector<std::string> methods = {"oracle", "sac", "lili", "rnn_lili",
                                      "betrans"};
  int seeds = 10;
  int seed_base = 1;
  std::int64_t total_steps = 150000;
  int eval_every = 2000;
  int eval_episodes = 20;

  env::EnvConfig env;
  human::PopulationParams pop;
  int episodes_per_human = 20;

  model::BTConfig bt;
  int pretrain_steps = 10000;
  int pretrain_updates = 300;
  // Latent-model (transformer/VAE) fit runs every K-th SAC update iteration;
  // 1 recovers the fully interleaved schedule.
  int latent_update_every = 1;

  model::DNConfig dn;
  rl::SACConfig sac;

  int lili_hidden = 256;
  int rnn_hidden = 128;
  double lili_kl_weight = 1.0;
  std::size_t buffer_capacity = 1'000'000;

  std::vector<int> sweep_travel;
  std::vector<int> sweep_targets;

  // Applies experiment presets, derives dependent fields, validates.
  // `explicit_keys` are the keys the config file set, used to reject values
  // that contradict an experiment's defining invariants.
  void finalize(const std::set<std::string>& explicit_keys = {});

  Real max_return() const { return env.max_passes * env.reward_hit; }
  // True when the task-difficulty ratio leaves the "> 2" regime where
  // predictions matter; the harness prints a warning for such configs.
  bool task_ratio_warning() const {
    return env::task_difficulty(env) <= 2.0;
  }
  std::uint64_t hash() const;
  // Canonical flat key=value echo (manifest + hashing).
  std::map<std::string, std::string> echo() const;
};

ExperimentConfig parse_config_text(const std::string& text,
                                   std::set<std::string>* keys_out = nullptr);
ExperimentConfig load_config(const std::string& path);

// Output root, honoring the BETRANS_OUT override.
std::string resolve_out_dir(const std::string& configured);

}  // namespace betrans::harness
