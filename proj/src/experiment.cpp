#include "betrans/harness/experiment.hpp"

#include "betrans/harness/svg_plot.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>
#include <tuple>

#ifdef __linux__
#include <sched.h>
#endif

namespace betrans::harness {

namespace fs = std::filesystem;
using baselines::Method;
using Clock = std::chrono::steady_clock;

int worker_count() {
  if (const char* w = std::getenv("BETRANS_WORKERS")) {
    int n = std::atoi(w);
    if (n > 0) return n;
  }
#ifdef __linux__
  cpu_set_t set;
  if (sched_getaffinity(0, sizeof(set), &set) == 0) {
    int n = CPU_COUNT(&set);
    if (n > 0) return n;
  }
#endif
  unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

std::unique_ptr<baselines::LatentProvider<F>> make_provider(
    const ExperimentConfig& cfg, Method m, std::uint64_t seed) {
  const int dim = cfg.bt.latent_dim;
  switch (m) {
    case Method::kSac:
      return std::make_unique<baselines::ZeroProvider<F>>(dim);
    case Method::kOracle:
      if (dim != cfg.env.n_targets)
        throw ConfigError("oracle requires latent_dim == n_targets");
      return std::make_unique<baselines::OracleProvider<F>>(dim);
    case Method::kLili:
      return std::make_unique<baselines::LiliProvider<F>>(
          dim, cfg.env.step_cap(), cfg.lili_hidden, cfg.dn.lr_dn,
          cfg.lili_kl_weight, /*recurrent=*/false, cfg.rnn_hidden, seed);
    case Method::kRnnLili:
      return std::make_unique<baselines::LiliProvider<F>>(
          dim, cfg.env.step_cap(), cfg.lili_hidden, cfg.dn.lr_dn,
          cfg.lili_kl_weight, /*recurrent=*/true, cfg.rnn_hidden, seed);
    case Method::kBetrans:
      return std::make_unique<baselines::BetransProvider<F>>(cfg.bt, cfg.dn,
                                                             seed);
  }
  throw ConfigError("unhandled method");
}

namespace {

replay::Transition make_transition(const env::Observation& s, int a,
                                   const env::StepOutcome& out,
                                   std::int64_t t_global, int episode_id,
                                   const Eigen::VectorXd& latent_before) {
  replay::Transition tr;
  tr.s = s;
  tr.a = a;
  tr.r = out.reward;
  tr.s_next = out.observation;
  tr.d = out.done;
  tr.t_global = t_global;
  tr.episode_id = episode_id;
  tr.true_latent = latent_before;
  return tr;
}

rl::SacBatch<F> build_batch(const replay::TrajectoryStore& store,
                            std::span<const std::int64_t> anchors,
                            baselines::LatentProvider<F>& provider) {
  const int B = static_cast<int>(anchors.size());
  const int od = env::Observation::kDim;
  rl::SacBatch<F> b;
  b.obs.resize(B, od);
  b.obs_next.resize(B, od);
  b.action.resize(B);
  b.reward.resize(B);
  b.done.resize(B);
  for (int i = 0; i < B; ++i) {
    const auto& tr = store.at(anchors[i]);
    for (int j = 0; j < od; ++j) {
      b.obs(i, j) = static_cast<F>(tr.s[j]);
      b.obs_next(i, j) = static_cast<F>(tr.s_next[j]);
    }
    b.action[i] = tr.a;
    b.reward(i) = static_cast<F>(tr.r);
    b.done(i) = tr.d ? F(1) : F(0);
  }
  provider.batch_latents(store, anchors, b.latent, b.latent_next);
  return b;
}

}  // namespace

void pretrain_betrans(const ExperimentConfig& cfg,
                      baselines::BetransProvider<F>& provider,
                      std::uint64_t seed,
                      replay::TrajectoryStore* buffer_out) {
  env::EnvConfig ecfg = cfg.env;
  ecfg.seed = derive_seed(seed, 21);
  env::CopassEnv penv(ecfg);
  Rng human_rng(derive_seed(seed, 22));
  Rng action_rng(derive_seed(seed, 23));
  Rng batch_rng(derive_seed(seed, 24));
  replay::TrajectoryStore store(std::max<std::size_t>(cfg.pretrain_steps, 1),
                                cfg.bt.block_steps);
  std::unique_ptr<human::HumanAgent> human;
  std::uniform_int_distribution<int> action_dist(0, env::kNumActions - 1);
  env::Observation obs;
  int episode_count = 0, episode_id = -1;
  bool need_reset = true;
  for (int step = 0; step < cfg.pretrain_steps; ++step) {
    if (need_reset) {
      if (episode_count % cfg.episodes_per_human == 0)
        human = std::make_unique<human::HumanAgent>(
            human::sample_profile(cfg.pop, human_rng));
      ++episode_id;
      obs = penv.reset(human.get());
      need_reset = false;
    }
    Eigen::VectorXd latent = penv.true_latent();
    int a = action_dist(action_rng);
    auto out = penv.step(a);
    store.push(make_transition(obs, a, out, step, episode_id, latent));
    obs = out.observation;
    if (out.done) {
      need_reset = true;
      ++episode_count;
    }
  }
  for (int u = 0; u < cfg.pretrain_updates; ++u) {
    auto anchors = store.sample_anchors(cfg.sac.batch, batch_rng);
    std::vector<replay::TokenWindow> windows;
    windows.reserve(anchors.size());
    for (auto t : anchors) windows.push_back(store.window_at(t));
    provider.transformer().pretrain_step(windows);
  }
  if (buffer_out) *buffer_out = std::move(store);
}

std::pair<Real, Real> evaluate(const rl::SacAgent<F>& agent,
                               baselines::LatentProvider<F>& provider,
                               const ExperimentConfig& cfg,
                               std::uint64_t eval_seed, int n_episodes) {
  auto policy = [&agent](const env::Observation& obs,
                         const Eigen::VectorXd& v) {
    Rng unused(0);
    return agent.act(obs, v, /*explore=*/false, unused);
  };
  return evaluate_policy(policy, &provider, cfg, eval_seed, n_episodes);
}

std::pair<Real, Real> evaluate_policy(const PolicyFn& policy,
                                      baselines::LatentProvider<F>* provider,
                                      const ExperimentConfig& cfg,
                                      std::uint64_t eval_seed, int n_episodes) {
  constexpr int kEpisodesPerHuman = 10;
  env::EnvConfig ecfg = cfg.env;
  ecfg.seed = derive_seed(eval_seed, 11);
  env::CopassEnv eenv(ecfg);
  Rng human_rng(derive_seed(eval_seed, 12));
  std::unique_ptr<baselines::LatentProvider<F>> clone;
  if (provider) clone = provider->make_eval_clone();
  std::unique_ptr<human::HumanAgent> human;
  std::vector<Real> returns;
  returns.reserve(n_episodes);
  std::int64_t t_global = 0;
  for (int ep = 0; ep < n_episodes; ++ep) {
    if (ep % kEpisodesPerHuman == 0)
      human = std::make_unique<human::HumanAgent>(
          human::sample_profile(cfg.pop, human_rng));
    env::Observation obs = eenv.reset(human.get());
    if (clone) clone->begin_episode(ep);
    Real ret = 0.0;
    while (!eenv.done()) {
      Eigen::VectorXd v =
          clone ? clone->latent_for_acting(eenv, obs, /*deterministic=*/true)
                : Eigen::VectorXd::Zero(cfg.bt.latent_dim);
      Eigen::VectorXd latent_before = eenv.true_latent();
      int a = policy(obs, v);
      auto out = eenv.step(a);
      if (clone)
        clone->observe_transition(
            make_transition(obs, a, out, t_global, ep, latent_before));
      ++t_global;
      ret += out.reward;
      obs = out.observation;
    }
    returns.push_back(ret);
  }
  return mean_stderr(returns);
}

std::vector<MetricRow> training_loop(const ExperimentConfig& cfg,
                                     const std::string& method_str, int seed,
                                     bool with_eval) {
  const Method m = baselines::method_from_string(method_str);
  env::EnvConfig ecfg = cfg.env;
  ecfg.seed = derive_seed(seed, 1);
  env::CopassEnv env(ecfg);
  replay::TrajectoryStore store(cfg.buffer_capacity, cfg.bt.block_steps);
  Rng human_rng(derive_seed(seed, 2));
  Rng action_rng(derive_seed(seed, 3));
  rl::SacAgent<F> agent(env::Observation::kDim, cfg.bt.latent_dim,
                        env::kNumActions, cfg.sac, derive_seed(seed, 4));
  auto provider = make_provider(cfg, m, derive_seed(seed, 5));
  if (m == Method::kBetrans) {
    auto* bp = static_cast<baselines::BetransProvider<F>*>(provider.get());
    pretrain_betrans(cfg, *bp, derive_seed(seed, 6));
  }

  const std::uint64_t eval_seed = derive_seed(seed, 777);
  std::uniform_int_distribution<int> action_dist(0, env::kNumActions - 1);

  std::unique_ptr<human::HumanAgent> human;
  env::Observation obs;
  int episode_count = 0, episode_id = -1;
  bool need_reset = true;
  double acc_sr = 0, acc_kl = 0, acc_q = 0, acc_pi = 0;
  int acc_n = 0, acc_latent = 0;
  std::int64_t update_iter = 0;
  std::vector<MetricRow> rows;
  const auto t0 = Clock::now();

  for (std::int64_t step = 0; step < cfg.total_steps; ++step) {
    if (need_reset) {
      if (episode_count % cfg.episodes_per_human == 0)
        human = std::make_unique<human::HumanAgent>(
            human::sample_profile(cfg.pop, human_rng));
      ++episode_id;
      obs = env.reset(human.get());
      provider->begin_episode(episode_id);
      need_reset = false;
    }
    Eigen::VectorXd latent_before = env.true_latent();
    int a;
    if (step < cfg.sac.learning_starts) {
      a = action_dist(action_rng);
    } else {
      Eigen::VectorXd v =
          provider->latent_for_acting(env, obs, /*deterministic=*/false);
      a = agent.act(obs, v, /*explore=*/true, action_rng);
    }
    auto out = env.step(a);
    store.push(make_transition(obs, a, out, step, episode_id, latent_before));
    provider->observe_transition(store.at(step));
    obs = out.observation;
    if (out.done) {
      need_reset = true;
      ++episode_count;
    }

    const std::int64_t n = step + 1;
    if (n >= cfg.sac.learning_starts) {
      if (n % cfg.sac.target_copy_every == 0)
        agent.sync_targets(static_cast<F>(cfg.sac.tau));
      if (n % cfg.sac.update_every == 0) {
        for (int it = 0; it < cfg.sac.updates_per_trigger; ++it) {
          auto anchors = store.sample_anchors(cfg.sac.batch, action_rng);
          if (update_iter % cfg.latent_update_every == 0) {
            auto pl = provider->update(store, anchors);
            acc_sr += pl.sr;
            acc_kl += pl.kl;
            ++acc_latent;
          }
          ++update_iter;
          auto batch = build_batch(store, anchors, *provider);
          acc_q += agent.critic_update(batch);
          acc_pi += agent.actor_update(batch);
          ++acc_n;
        }
      }
    }

    if (n % cfg.eval_every == 0) {
      Real mean = 0.0, se = 0.0;
      if (with_eval)
        std::tie(mean, se) =
            evaluate(agent, *provider, cfg, eval_seed, cfg.eval_episodes);
      MetricRow r;
      r.method = method_str;
      r.seed = seed;
      r.env_step = n;
      r.eval_return_mean = mean;
      r.eval_return_stderr = se;
      if (acc_n > 0) {
        r.loss_q = acc_q / acc_n;
        r.loss_pi = acc_pi / acc_n;
      }
      if (acc_latent > 0) {
        r.loss_sr = acc_sr / acc_latent;
        r.loss_kl = acc_kl / acc_latent;
      }
      r.wall_clock_s =
          std::chrono::duration<double>(Clock::now() - t0).count();
      rows.push_back(std::move(r));
      acc_sr = acc_kl = acc_q = acc_pi = 0;
      acc_n = acc_latent = 0;
    }
  }
  return rows;
}

std::string experiment_dir(const ExperimentConfig& cfg) {
  return (fs::path(resolve_out_dir(cfg.out_dir)) / cfg.experiment).string();
}

void write_manifest(const ExperimentConfig& cfg, const std::string& dir) {
  nlohmann::json j;
  j["experiment"] = cfg.experiment;
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(cfg.hash()));
  j["config_hash"] = hash;
  j["methods"] = cfg.methods;
  std::vector<int> seeds;
  for (int s = 0; s < cfg.seeds; ++s) seeds.push_back(cfg.seed_base + s);
  j["seeds"] = seeds;
  j["config"] = cfg.echo();
  std::ofstream os(fs::path(dir) / "manifest.json");
  if (!os) throw UsageError("cannot write manifest in " + dir);
  os << j.dump(2) << "\n";
}

std::vector<std::string> run_experiment(const ExperimentConfig& cfg) {
  const std::string dir = experiment_dir(cfg);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw UsageError("cannot create output dir " + dir);
  if (cfg.task_ratio_warning())
    std::cerr << "[betrans] warning: task difficulty ratio "
              << env::task_difficulty(cfg.env)
              << " <= 2; predictions barely matter in this regime\n";
  write_manifest(cfg, dir);

  struct Task {
    std::string method;
    int seed;
  };
  std::vector<Task> tasks;
  for (const auto& m : cfg.methods)
    for (int s = 0; s < cfg.seeds; ++s) tasks.push_back({m, cfg.seed_base + s});

  std::vector<std::string> paths(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::vector<std::string> errors;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        auto rows = training_loop(cfg, tasks[i].method, tasks[i].seed);
        fs::path p = fs::path(dir) / (tasks[i].method + "_seed" +
                                      std::to_string(tasks[i].seed) + ".csv");
        write_metrics_csv(p.string(), rows);
        paths[i] = p.string();
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mu);
        errors.push_back(tasks[i].method + " seed " +
                         std::to_string(tasks[i].seed) + ": " + e.what());
      }
    }
  };
  const int nw = std::min<int>(worker_count(), static_cast<int>(tasks.size()));
  std::vector<std::thread> pool;
  for (int i = 0; i < nw; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (!errors.empty()) {
    std::string msg = "run failures:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw std::runtime_error(msg);
  }
  return paths;
}

void run_sweep(const ExperimentConfig& cfg) {
  std::vector<int> travels =
      cfg.sweep_travel.empty() ? std::vector<int>{cfg.env.travel_steps}
                               : cfg.sweep_travel;
  std::vector<int> targets =
      cfg.sweep_targets.empty() ? std::vector<int>{cfg.env.n_targets}
                                : cfg.sweep_targets;
  const std::string root = experiment_dir(cfg);
  fs::create_directories(root);
  std::ofstream summary(fs::path(root) / "sweep_summary.csv");
  summary << "travel_steps,n_targets,ratio,ratio_le_2,method,"
             "mean_convergence_step,converged_seeds,final_return_mean\n";
  for (int tr : travels) {
    for (int nt : targets) {
      ExperimentConfig cell = cfg;
      cell.experiment = cfg.experiment + "_t" + std::to_string(tr) + "_n" +
                        std::to_string(nt);
      cell.env.travel_steps = tr;
      cell.env.n_targets = nt;
      cell.bt.latent_dim = 0;  // re-derive from the cell's target count
      cell.finalize();
      auto paths = run_experiment(cell);
      const Real threshold = 0.9 * cell.max_return();
      const std::int64_t sentinel = cell.total_steps + cell.eval_every;
      std::map<std::string, std::vector<std::vector<MetricRow>>> by_method;
      for (const auto& p : paths)
        if (!p.empty()) {
          auto rows = read_metrics_csv(p);
          if (!rows.empty()) by_method[rows.front().method].push_back(rows);
        }
      for (auto& [method, runs] : by_method) {
        Real conv_sum = 0.0, final_sum = 0.0;
        int converged = 0;
        for (auto& rows : runs) {
          std::int64_t c = convergence_step(rows, threshold, sentinel);
          if (c < sentinel) ++converged;
          conv_sum += static_cast<Real>(c);
          final_sum += final_smoothed_return(rows);
        }
        char line[256];
        std::snprintf(line, sizeof(line), "%d,%d,%.4g,%d,%s,%.1f,%d,%.6g\n",
                      tr, nt, task_difficulty(cell.env),
                      task_difficulty(cell.env) <= 2.0 ? 1 : 0, method.c_str(),
                      conv_sum / runs.size(), converged,
                      final_sum / runs.size());
        summary << line;
      }
    }
  }
}

std::vector<std::string> plot_experiment(const std::string& dir) {
  std::map<std::string, std::map<std::int64_t, std::vector<Real>>> by_method;
  std::vector<std::string> failures;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".csv") continue;
    if (entry.path().filename() == "sweep_summary.csv") continue;
    try {
      auto rows = read_metrics_csv(entry.path().string());
      for (const auto& r : rows)
        by_method[r.method][r.env_step].push_back(r.eval_return_mean);
    } catch (const std::exception& e) {
      failures.push_back(entry.path().string() + ": " + e.what());
    }
  }
  for (const auto& f : failures)
    std::cerr << "[betrans] plot: skipping " << f << "\n";
  if (by_method.empty()) return {};
  std::vector<svg::Series> series;
  for (auto& [method, steps] : by_method) {
    svg::Series s;
    s.name = method;
    for (auto& [step, vals] : steps) {
      auto [mean, se] = mean_stderr(vals);
      s.points.push_back({static_cast<Real>(step), mean, se});
    }
    series.push_back(std::move(s));
  }
  fs::path out = fs::path(dir) / ("curves_" + fs::path(dir).filename().string() + ".svg");
  svg::write_learning_curves(out.string(),
                             fs::path(dir).filename().string(), series);
  return {out.string()};
}

namespace {
constexpr std::uint32_t kCkptMagic = 0x4254434b;  // "BTCK"
constexpr std::uint32_t kCkptVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const ExperimentConfig& cfg,
                     baselines::BetransNets<F>& nets) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UsageError("cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(&kCkptMagic), sizeof(kCkptMagic));
  os.write(reinterpret_cast<const char*>(&kCkptVersion), sizeof(kCkptVersion));
  std::string echo;
  for (const auto& [k, v] : cfg.echo()) echo += k + " = " + v + "\n";
  std::uint64_t len = echo.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(echo.data(), static_cast<std::streamsize>(len));
  nets.bt.save(os);
  nets.dn.save(os);
}

void load_checkpoint(const std::string& path,
                     baselines::BetransNets<F>& nets) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("cannot open checkpoint: " + path);
  std::uint32_t magic = 0, version = 0;
  is.read(reinterpret_cast<char*>(&magic), sizeof(magic));
  is.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (magic != kCkptMagic || version != kCkptVersion)
    throw UsageError("unrecognized checkpoint format: " + path);
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof(len));
  is.seekg(static_cast<std::streamoff>(len), std::ios::cur);
  nets.bt.load(is);
  nets.dn.load(is);
}

}  // namespace betrans::harness
