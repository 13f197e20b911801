#pragma once

#include "betrans/common.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace betrans::human {

// Probability vector over the n_targets goal rows.
using GoalDistribution = Eigen::VectorXd;

enum class Handedness { kLeft, kRight };

struct PopulationParams {
  // Continuous Bernoulli shapes for the raw mixture-weight draws.
  Real lambda_c = 0.5;
  Real lambda_lf = 0.5;
  Real lambda_hf = 0.5;
  Real lambda_inf = 0.5;
  bool use_constant = true;
  bool use_low_freq = true;
  bool use_high_freq = true;
  bool use_influence = false;
  Real p_left = 0.3;
  Real beta_alpha = 5.0;
  Real beta_beta = 4.0;
  int lf_lookback = 1;
  // Peaked-categorical kernel shared by both hysteresis components.
  Real kernel_peak = 0.7;
  Real kernel_decay = 0.5;

  void validate() const;
};

struct HumanProfile {
  Real w_c = 1.0, w_lf = 0.0, w_hf = 0.0, w_inf = 0.0;
  Handedness handedness = Handedness::kRight;
  Real preference_strength = 0.5;
  int lf_lookback = 1;
  Real kernel_peak = 0.7;
  Real kernel_decay = 0.5;
  std::uint64_t rng_seed = 0;
};

struct EpisodeMemory {
  std::vector<std::vector<int>> completed;  // goal lists per finished episode
  std::vector<int> current;                 // goals drawn this episode
  int episode_index = -1;

  void begin_episode() {
    if (episode_index >= 0) completed.push_back(current);
    current.clear();
    ++episode_index;
  }
  void record(int goal) { current.push_back(goal); }
};

// Continuous Bernoulli(λ) sample via inverse CDF; uniform at λ = 0.5.
Real sample_continuous_bernoulli(Real lambda, Rng& rng);

Real sample_beta(Real alpha, Real beta, Rng& rng);

HumanProfile sample_profile(const PopulationParams& pop, Rng& rng);

GoalDistribution constant_component(const HumanProfile& profile, int n_targets);

GoalDistribution low_freq_component(const EpisodeMemory& memory, int n_targets,
                                    int lookback_k, Real kernel_peak,
                                    Real kernel_decay);

GoalDistribution high_freq_component(const std::vector<int>& current_goals,
                                     int n_targets, Real kernel_peak,
                                     Real kernel_decay);

GoalDistribution influence_component(std::optional<int> robot_signal,
                                     int n_targets);

GoalDistribution compose(const HumanProfile& profile,
                         const GoalDistribution& p_c,
                         const GoalDistribution& p_lf,
                         const GoalDistribution& p_hf,
                         const GoalDistribution* p_inf = nullptr);

int sample_goal(const GoalDistribution& dist, EpisodeMemory& memory, Rng& rng);

// Helper used by the hysteresis components and tests.
GoalDistribution peaked_categorical(int anchor, int n_targets, Real peak,
                                    Real decay);

// One simulated human: profile + episode memory + private rng.
class HumanAgent {
 public:
  HumanAgent(HumanProfile profile)
      : profile_(std::move(profile)), rng_(profile_.rng_seed) {}

  void begin_episode() { memory_.begin_episode(); }

  GoalDistribution goal_distribution(int n_targets,
                                     std::optional<int> robot_signal =
                                         std::nullopt) const;

  int draw_goal(int n_targets,
                std::optional<int> robot_signal = std::nullopt);

  // One-hot over goals at the current pass's sampled goal.
  Eigen::VectorXd ground_truth_latent(int n_targets) const;
  int current_goal() const;

  const HumanProfile& profile() const { return profile_; }
  const EpisodeMemory& memory() const { return memory_; }
  EpisodeMemory& memory() { return memory_; }

 private:
  HumanProfile profile_;
  EpisodeMemory memory_;
  Rng rng_;
};

}  // namespace betrans::human
