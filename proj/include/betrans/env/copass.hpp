#pragma once

#include "betrans/common.hpp"
#include "betrans/human/human_model.hpp"

#include <array>
#include <optional>

namespace betrans::env {

struct EnvConfig {
  int n_targets = 12;
  int travel_steps = 5;
  int max_passes = 5;
  Real noise_var_x = 0.0;
  Real noise_var_y = 0.0;
  Real paddle_halfwidth = 0.5;
  Real reward_hit = 1.0;
  Real reward_miss = -10.0;
  Real discount = 0.99;
  std::uint64_t seed = 0;

  void validate() const;
  int step_cap() const { return (2 * travel_steps + 2) * max_passes; }
};

struct EnvState {
  Real ball_x = 0.0;
  Real ball_y = 0.0;
  int vel_x = -1;  // ±1, never 0
  Real vel_y = 0.0;
  int robot_paddle_y = 0;
  int robot_orientation = 0;  // in {-1, 0, +1}
  Real human_paddle_y = 0.0;
  int passes_completed = 0;
  int t = 0;
};

// Normalized view: (ball_x, ball_y, vel_x, vel_y, robot_paddle_y,
// robot_orientation, human_paddle_y), each in [-1,1] before noise.
struct Observation {
  static constexpr int kDim = 7;
  std::array<Real, kDim> v{};

  Real operator[](int i) const { return v[i]; }
  Real& operator[](int i) { return v[i]; }
};

enum class Event { kNone, kRobotHit, kRobotMiss, kHumanPass };

struct StepInfo {
  int true_goal = -1;  // the current pass's sampled goal (oracle signal)
  Event event = Event::kNone;
  bool step_cap_hit = false;
};

struct StepOutcome {
  Observation observation;
  Real reward = 0.0;
  bool done = false;
  StepInfo info;
};

// Robot actions.
enum Action : int {
  kUp = 0,
  kDown = 1,
  kRotateCw = 2,   // orientation +1
  kRotateCcw = 3,  // orientation -1
};
constexpr int kNumActions = 4;

// One Euler step of ball motion; ball_y clamped to the lattice range.
EnvState advance_ball(EnvState state, const EnvConfig& config);

// Reflection at a paddle plane. At the robot plane the return slope follows
// the paddle orientation; at the human plane the ball is aimed so it arrives
// exactly at human_goal after travel_steps steps.
EnvState resolve_collision(EnvState state, int human_goal,
                           const EnvConfig& config);

Observation observe(const EnvState& state, const EnvConfig& config, Rng& rng);

// Inverse of the zero-noise observation map (diagnostics/tests).
EnvState denormalize(const Observation& obs, const EnvConfig& config);

Real task_difficulty(const EnvConfig& config);

class CopassEnv {
 public:
  explicit CopassEnv(EnvConfig config);

  // The human agent is owned by the caller and must outlive the episode.
  Observation reset(human::HumanAgent* human);
  StepOutcome step(int action);

  bool done() const { return done_; }
  const EnvState& state() const { return state_; }
  const EnvConfig& config() const { return config_; }
  int true_goal() const { return next_goal_; }
  Eigen::VectorXd true_latent() const;
  Real episode_return() const { return episode_return_; }

 private:
  EnvConfig config_;
  EnvState state_;
  human::HumanAgent* human_ = nullptr;
  Rng rng_;
  bool done_ = true;
  int next_goal_ = -1;     // goal of the upcoming human pass
  bool goal_consumed_ = false;
  Real episode_return_ = 0.0;
};

}  // namespace betrans::env
