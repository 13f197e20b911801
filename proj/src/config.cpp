#include "betrans/harness/config.hpp"

#include "betrans/baselines/latent_providers.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace betrans::harness {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  auto e = s.find_last_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean for " + key + ": " + v);
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text,
                                   std::set<std::string>* keys_out) {
  ExperimentConfig c;
  std::set<std::string> keys;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    keys.insert(key);

    auto as_int = [&] { return std::stol(val); };
    auto as_real = [&] { return std::stod(val); };

    if (key == "experiment") c.experiment = val;
    else if (key == "out_dir") c.out_dir = val;
    else if (key == "methods") c.methods = split_list(val);
    else if (key == "seeds") c.seeds = as_int();
    else if (key == "seed_base") c.seed_base = as_int();
    else if (key == "total_steps") c.total_steps = as_int();
    else if (key == "eval_every") c.eval_every = as_int();
    else if (key == "eval_episodes") c.eval_episodes = as_int();
    else if (key == "n_targets") c.env.n_targets = as_int();
    else if (key == "travel_steps") c.env.travel_steps = as_int();
    else if (key == "max_passes") c.env.max_passes = as_int();
    else if (key == "noise_var_x") c.env.noise_var_x = as_real();
    else if (key == "noise_var_y") c.env.noise_var_y = as_real();
    else if (key == "paddle_halfwidth") c.env.paddle_halfwidth = as_real();
    else if (key == "reward_hit") c.env.reward_hit = as_real();
    else if (key == "reward_miss") c.env.reward_miss = as_real();
    else if (key == "discount") c.env.discount = as_real();
    else if (key == "lambda_c") c.pop.lambda_c = as_real();
    else if (key == "lambda_lf") c.pop.lambda_lf = as_real();
    else if (key == "lambda_hf") c.pop.lambda_hf = as_real();
    else if (key == "lambda_inf") c.pop.lambda_inf = as_real();
    else if (key == "use_constant") c.pop.use_constant = parse_bool(val, key);
    else if (key == "use_low_freq") c.pop.use_low_freq = parse_bool(val, key);
    else if (key == "use_high_freq") c.pop.use_high_freq = parse_bool(val, key);
    else if (key == "use_influence") c.pop.use_influence = parse_bool(val, key);
    else if (key == "p_left") c.pop.p_left = as_real();
    else if (key == "beta_alpha") c.pop.beta_alpha = as_real();
    else if (key == "beta_beta") c.pop.beta_beta = as_real();
    else if (key == "lf_lookback") c.pop.lf_lookback = as_int();
    else if (key == "kernel_peak") c.pop.kernel_peak = as_real();
    else if (key == "kernel_decay") c.pop.kernel_decay = as_real();
    else if (key == "episodes_per_human") c.episodes_per_human = as_int();
    else if (key == "latent_mode") {
      if (val == "discrete") c.bt.latent_mode = model::LatentMode::kDiscrete;
      else if (val == "continuous") c.bt.latent_mode = model::LatentMode::kContinuous;
      else throw ConfigError("latent_mode must be discrete or continuous");
    }
    else if (key == "latent_dim") c.bt.latent_dim = as_int();
    else if (key == "bt_layers") c.bt.n_layers = as_int();
    else if (key == "bt_embed") c.bt.embed_dim = as_int();
    else if (key == "bt_heads") c.bt.n_heads = as_int();
    else if (key == "block_steps") c.bt.block_steps = as_int();
    else if (key == "gumbel_temperature") c.bt.gumbel_temperature = as_real();
    else if (key == "kl_weight") c.bt.kl_weight = as_real();
    else if (key == "lr_bt") c.bt.lr_bt = as_real();
    else if (key == "pretrain_steps") c.pretrain_steps = as_int();
    else if (key == "pretrain_updates") c.pretrain_updates = as_int();
    else if (key == "latent_update_every") c.latent_update_every = as_int();
    else if (key == "dn_hidden") c.dn.hidden = as_int();
    else if (key == "dn_horizon") c.dn.horizon = as_int();
    else if (key == "lr_dn") c.dn.lr_dn = as_real();
    else if (key == "lr_policy") c.sac.lr_policy = as_real();
    else if (key == "lr_critic") c.sac.lr_critic = as_real();
    else if (key == "lr_alpha") c.sac.lr_alpha = as_real();
    else if (key == "sac_batch") c.sac.batch = as_int();
    else if (key == "update_every") c.sac.update_every = as_int();
    else if (key == "updates_per_trigger") c.sac.updates_per_trigger = as_int();
    else if (key == "tau") c.sac.tau = as_real();
    else if (key == "target_copy_every") c.sac.target_copy_every = as_int();
    else if (key == "autotune_alpha") c.sac.autotune_alpha = parse_bool(val, key);
    else if (key == "init_alpha") c.sac.init_alpha = as_real();
    else if (key == "target_entropy_scale") c.sac.target_entropy_scale = as_real();
    else if (key == "learning_starts") c.sac.learning_starts = as_int();
    else if (key == "sac_hidden") c.sac.hidden = as_int();
    else if (key == "lili_hidden") c.lili_hidden = as_int();
    else if (key == "rnn_hidden") c.rnn_hidden = as_int();
    else if (key == "lili_kl_weight") c.lili_kl_weight = as_real();
    else if (key == "buffer_capacity") c.buffer_capacity = as_int();
    else if (key == "sweep_travel") {
      c.sweep_travel.clear();
      for (auto& s : split_list(val)) c.sweep_travel.push_back(std::stoi(s));
    }
    else if (key == "sweep_targets") {
      c.sweep_targets.clear();
      for (auto& s : split_list(val)) c.sweep_targets.push_back(std::stoi(s));
    }
    else throw ConfigError("unknown config key: " + key);
  }
  if (keys_out) *keys_out = keys;
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  std::set<std::string> keys;
  ExperimentConfig c = parse_config_text(buf.str(), &keys);
  c.finalize(keys);
  return c;
}

void ExperimentConfig::finalize(const std::set<std::string>& explicit_keys) {
  auto forbid = [&](const std::string& key, bool ok, const std::string& msg) {
    if (explicit_keys.count(key) && !ok)
      throw ConfigError(experiment + " config contradiction: " + msg);
  };

  if (experiment == "exp1") {
    forbid("use_high_freq", !pop.use_high_freq,
           "exp1 freezes within-episode behaviour (use_high_freq = false)");
    pop.use_high_freq = false;
    forbid("noise_var_x", env.noise_var_x == 0.0, "exp1 is noiseless");
    forbid("noise_var_y", env.noise_var_y == 0.0, "exp1 is noiseless");
    env.noise_var_x = 0.0;
    env.noise_var_y = 0.0;
  } else if (experiment == "exp2") {
    forbid("noise_var_x", env.noise_var_x == 1.0, "exp2 sets noise_var_x = 1");
    forbid("noise_var_y", env.noise_var_y == 0.5, "exp2 sets noise_var_y = 0.5");
    env.noise_var_x = 1.0;
    env.noise_var_y = 0.5;
    forbid("use_high_freq", !pop.use_high_freq,
           "exp2 freezes within-episode behaviour (use_high_freq = false)");
    pop.use_high_freq = false;
  } else if (experiment == "exp3") {
    forbid("use_high_freq", pop.use_high_freq, "exp3 requires use_high_freq");
    pop.use_high_freq = true;
  } else if (experiment == "exp4") {
    forbid("lf_lookback", pop.lf_lookback == 10, "exp4 sets lf_lookback = 10");
    pop.lf_lookback = 10;
    forbid("use_high_freq", !pop.use_high_freq,
           "exp4 isolates the long-history component (use_high_freq = false)");
    pop.use_high_freq = false;
  } else if (experiment.rfind("sweep", 0) != 0 &&
             experiment.rfind("latent_study", 0) != 0) {
    // sweep cells carry grid suffixes ("sweep_t5_n12"); both families are
    // preset-free
    throw ConfigError("unknown experiment id: " + experiment);
  }

  if (bt.latent_dim <= 0) bt.latent_dim = env.n_targets;
  if (bt.latent_mode == model::LatentMode::kDiscrete &&
      bt.latent_dim < env.n_targets)
    throw ConfigError(
        "discrete latent_dim must be >= n_targets (" +
        std::to_string(env.n_targets) + ")");
  dn.obs_dim = env::Observation::kDim;
  dn.n_actions = env::kNumActions;
  dn.latent_dim = bt.latent_dim;
  sac.discount = env.discount;

  if (seeds < 1) throw ConfigError("seeds must be >= 1");
  if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
  if (episodes_per_human < 1)
    throw ConfigError("episodes_per_human must be >= 1");
  if (latent_update_every < 1)
    throw ConfigError("latent_update_every must be >= 1");
  env.validate();
  pop.validate();
  bt.validate();
  dn.validate();
  sac.validate();
  for (const auto& m : methods) baselines::method_from_string(m);
}

std::map<std::string, std::string> ExperimentConfig::echo() const {
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  std::map<std::string, std::string> m;
  m["experiment"] = experiment;
  m["out_dir"] = out_dir;
  std::string ms;
  for (std::size_t i = 0; i < methods.size(); ++i)
    ms += (i ? "," : "") + methods[i];
  m["methods"] = ms;
  m["seeds"] = std::to_string(seeds);
  m["seed_base"] = std::to_string(seed_base);
  m["total_steps"] = std::to_string(total_steps);
  m["eval_every"] = std::to_string(eval_every);
  m["eval_episodes"] = std::to_string(eval_episodes);
  m["n_targets"] = std::to_string(env.n_targets);
  m["travel_steps"] = std::to_string(env.travel_steps);
  m["max_passes"] = std::to_string(env.max_passes);
  m["noise_var_x"] = fmt(env.noise_var_x);
  m["noise_var_y"] = fmt(env.noise_var_y);
  m["paddle_halfwidth"] = fmt(env.paddle_halfwidth);
  m["reward_hit"] = fmt(env.reward_hit);
  m["reward_miss"] = fmt(env.reward_miss);
  m["discount"] = fmt(env.discount);
  m["lambda_c"] = fmt(pop.lambda_c);
  m["lambda_lf"] = fmt(pop.lambda_lf);
  m["lambda_hf"] = fmt(pop.lambda_hf);
  m["lambda_inf"] = fmt(pop.lambda_inf);
  m["use_constant"] = pop.use_constant ? "true" : "false";
  m["use_low_freq"] = pop.use_low_freq ? "true" : "false";
  m["use_high_freq"] = pop.use_high_freq ? "true" : "false";
  m["use_influence"] = pop.use_influence ? "true" : "false";
  m["p_left"] = fmt(pop.p_left);
  m["beta_alpha"] = fmt(pop.beta_alpha);
  m["beta_beta"] = fmt(pop.beta_beta);
  m["lf_lookback"] = std::to_string(pop.lf_lookback);
  m["kernel_peak"] = fmt(pop.kernel_peak);
  m["kernel_decay"] = fmt(pop.kernel_decay);
  m["episodes_per_human"] = std::to_string(episodes_per_human);
  m["latent_mode"] =
      bt.latent_mode == model::LatentMode::kDiscrete ? "discrete" : "continuous";
  m["latent_dim"] = std::to_string(bt.latent_dim);
  m["bt_layers"] = std::to_string(bt.n_layers);
  m["bt_embed"] = std::to_string(bt.embed_dim);
  m["bt_heads"] = std::to_string(bt.n_heads);
  m["block_steps"] = std::to_string(bt.block_steps);
  m["gumbel_temperature"] = fmt(bt.gumbel_temperature);
  m["kl_weight"] = fmt(bt.kl_weight);
  m["lr_bt"] = fmt(bt.lr_bt);
  m["pretrain_steps"] = std::to_string(pretrain_steps);
  m["pretrain_updates"] = std::to_string(pretrain_updates);
  m["latent_update_every"] = std::to_string(latent_update_every);
  m["dn_hidden"] = std::to_string(dn.hidden);
  m["dn_horizon"] = std::to_string(dn.horizon);
  m["lr_dn"] = fmt(dn.lr_dn);
  m["lr_policy"] = fmt(sac.lr_policy);
  m["lr_critic"] = fmt(sac.lr_critic);
  m["lr_alpha"] = fmt(sac.lr_alpha);
  m["sac_batch"] = std::to_string(sac.batch);
  m["update_every"] = std::to_string(sac.update_every);
  m["updates_per_trigger"] = std::to_string(sac.updates_per_trigger);
  m["tau"] = fmt(sac.tau);
  m["target_copy_every"] = std::to_string(sac.target_copy_every);
  m["autotune_alpha"] = sac.autotune_alpha ? "true" : "false";
  m["init_alpha"] = fmt(sac.init_alpha);
  m["target_entropy_scale"] = fmt(sac.target_entropy_scale);
  m["learning_starts"] = std::to_string(sac.learning_starts);
  m["sac_hidden"] = std::to_string(sac.hidden);
  m["lili_hidden"] = std::to_string(lili_hidden);
  m["rnn_hidden"] = std::to_string(rnn_hidden);
  m["lili_kl_weight"] = fmt(lili_kl_weight);
  m["buffer_capacity"] = std::to_string(buffer_capacity);
  return m;
}

std::uint64_t ExperimentConfig::hash() const {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (const auto& [k, v] : echo()) {
    for (char ch : k + "=" + v + ";") {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::string resolve_out_dir(const std::string& configured) {
  const char* env_override = std::getenv("BETRANS_OUT");
  if (env_override && *env_override) return env_override;
  return configured;
}

}  // namespace betrans::harness
