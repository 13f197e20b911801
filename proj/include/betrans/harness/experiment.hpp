#pragma once

#include "betrans/baselines/latent_providers.hpp"
#include "betrans/harness/config.hpp"
#include "betrans/harness/metrics.hpp"
#include "betrans/rl/sac_agent.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace betrans::harness {

// Scalar used by all trained networks in experiment runs.
using F = float;

std::unique_ptr<baselines::LatentProvider<F>> make_provider(
    const ExperimentConfig& cfg, baselines::Method m, std::uint64_t seed);

// Fills the random-action pre-training buffer and fits the transformer on
// (s, a, r, s', d) prediction.
void pretrain_betrans(const ExperimentConfig& cfg,
                      baselines::BetransProvider<F>& provider,
                      std::uint64_t seed,
                      replay::TrajectoryStore* buffer_out = nullptr);

// One (method, seed) training run; returns the metric rows at eval cadence.
std::vector<MetricRow> training_loop(const ExperimentConfig& cfg,
                                     const std::string& method, int seed,
                                     bool with_eval = true);

// Greedy-mode rollouts on freshly seeded held-out episodes. No buffer writes.
std::pair<Real, Real> evaluate(const rl::SacAgent<F>& agent,
                               baselines::LatentProvider<F>& provider,
                               const ExperimentConfig& cfg,
                               std::uint64_t eval_seed, int n_episodes);

// Policy-function variant used by tests and diagnostics.
using PolicyFn =
    std::function<int(const env::Observation&, const Eigen::VectorXd&)>;
std::pair<Real, Real> evaluate_policy(const PolicyFn& policy,
                                      baselines::LatentProvider<F>* provider,
                                      const ExperimentConfig& cfg,
                                      std::uint64_t eval_seed, int n_episodes);

// Full fan-out over methods × seeds; writes one CSV per run plus a manifest.
// Returns the CSV paths.
std::vector<std::string> run_experiment(const ExperimentConfig& cfg);

// Parameter sweep over travel_steps/n_targets grids; aggregates
// steps-to-threshold statistics per cell into sweep_summary.csv.
void run_sweep(const ExperimentConfig& cfg);

// Learning-curve figures (SVG) for every experiment directory found.
// Returns the written figure paths; unreadable CSVs are reported and skipped.
std::vector<std::string> plot_experiment(const std::string& dir);

std::string experiment_dir(const ExperimentConfig& cfg);
void write_manifest(const ExperimentConfig& cfg, const std::string& dir);

// Checkpoint io (config echo + transformer + dynamics-network tensors).
void save_checkpoint(const std::string& path, const ExperimentConfig& cfg,
                     baselines::BetransNets<F>& nets);
void load_checkpoint(const std::string& path, baselines::BetransNets<F>& nets);

int worker_count();

}  // namespace betrans::harness
