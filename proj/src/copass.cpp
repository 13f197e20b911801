#include "betrans/env/copass.hpp"

#include <algorithm>
#include <cmath>

namespace betrans::env {

void EnvConfig::validate() const {
  if (n_targets < 3) throw ConfigError("n_targets must be >= 3");
  if (travel_steps < 1) throw ConfigError("travel_steps must be >= 1");
  if (max_passes < 1) throw ConfigError("max_passes must be >= 1");
  if (noise_var_x < 0.0 || noise_var_y < 0.0)
    throw ConfigError("noise variances must be >= 0");
  if (paddle_halfwidth <= 0.0)
    throw ConfigError("paddle_halfwidth must be > 0");
  if (discount < 0.0 || discount > 1.0)
    throw ConfigError("discount outside [0,1]");
}

Real task_difficulty(const EnvConfig& config) {
  return static_cast<Real>(config.n_targets) /
         static_cast<Real>(config.travel_steps);
}

EnvState advance_ball(EnvState state, const EnvConfig& config) {
  state.ball_x += state.vel_x;
  state.ball_y = std::clamp(state.ball_y + state.vel_y, Real(0),
                            Real(config.n_targets - 1));
  return state;
}

EnvState resolve_collision(EnvState state, int human_goal,
                           const EnvConfig& config) {
  const Real w = config.travel_steps;
  if (state.ball_x <= 0.0) {
    state.ball_x = 0.0;
    state.vel_x = +1;
    state.vel_y = static_cast<Real>(state.robot_orientation);  // slope unit 1
    state.passes_completed += 1;
    return state;
  }
  if (state.ball_x >= w) {
    state.ball_x = w;
    state.vel_x = -1;
    state.vel_y = (static_cast<Real>(human_goal) - state.ball_y) / w;
    return state;
  }
  throw std::logic_error("resolve_collision called off a paddle plane");
}

namespace {

Real norm_unit(Real v, Real lo, Real hi) {
  if (hi <= lo) return 0.0;
  return 2.0 * (v - lo) / (hi - lo) - 1.0;
}

Real denorm_unit(Real x, Real lo, Real hi) {
  return lo + (x + 1.0) * 0.5 * (hi - lo);
}

Real vel_y_range(const EnvConfig& c) {
  return std::max(Real(c.n_targets - 1) / Real(c.travel_steps), Real(1));
}

}  // namespace

Observation observe(const EnvState& state, const EnvConfig& config, Rng& rng) {
  Real bx = state.ball_x;
  Real by = state.ball_y;
  if (config.noise_var_x > 0.0) {
    std::normal_distribution<Real> nx(0.0, std::sqrt(config.noise_var_x));
    bx += nx(rng);
  }
  if (config.noise_var_y > 0.0) {
    std::normal_distribution<Real> ny(0.0, std::sqrt(config.noise_var_y));
    by += ny(rng);
  }
  const Real ymax = config.n_targets - 1;
  Observation o;
  o[0] = norm_unit(bx, 0.0, config.travel_steps);
  o[1] = norm_unit(by, 0.0, ymax);
  o[2] = static_cast<Real>(state.vel_x);
  o[3] = state.vel_y / vel_y_range(config);
  o[4] = norm_unit(state.robot_paddle_y, 0.0, ymax);
  o[5] = static_cast<Real>(state.robot_orientation);
  o[6] = norm_unit(state.human_paddle_y, 0.0, ymax);
  return o;
}

EnvState denormalize(const Observation& obs, const EnvConfig& config) {
  const Real ymax = config.n_targets - 1;
  EnvState s;
  s.ball_x = denorm_unit(obs[0], 0.0, config.travel_steps);
  s.ball_y = denorm_unit(obs[1], 0.0, ymax);
  s.vel_x = obs[2] >= 0.0 ? 1 : -1;
  s.vel_y = obs[3] * vel_y_range(config);
  s.robot_paddle_y =
      static_cast<int>(std::lround(denorm_unit(obs[4], 0.0, ymax)));
  s.robot_orientation = static_cast<int>(std::lround(obs[5]));
  s.human_paddle_y = denorm_unit(obs[6], 0.0, ymax);
  return s;
}

CopassEnv::CopassEnv(EnvConfig config)
    : config_(config), rng_(config.seed) {
  config_.validate();
}

Observation CopassEnv::reset(human::HumanAgent* human) {
  human_ = human;
  const int center = (config_.n_targets - 1) / 2;
  state_ = EnvState{};
  state_.ball_x = config_.travel_steps;  // human side, heading to the robot
  state_.ball_y = center;
  state_.vel_x = -1;
  state_.vel_y = 0.0;  // straight serve at the robot's reset row
  state_.robot_paddle_y = center;
  state_.robot_orientation = 0;
  state_.human_paddle_y = center;
  state_.passes_completed = 0;
  state_.t = 0;
  done_ = false;
  episode_return_ = 0.0;
  human_->begin_episode();
  next_goal_ = human_->draw_goal(config_.n_targets);  // first aimed pass
  goal_consumed_ = false;
  return observe(state_, config_, rng_);
}

StepOutcome CopassEnv::step(int action) {
  if (done_) throw UsageError("step() called on a finished episode");
  if (action < 0 || action >= kNumActions)
    throw UsageError("action index out of range");

  switch (action) {
    case kUp:
      state_.robot_paddle_y =
          std::min(state_.robot_paddle_y + 1, config_.n_targets - 1);
      break;
    case kDown:
      state_.robot_paddle_y = std::max(state_.robot_paddle_y - 1, 0);
      break;
    case kRotateCw:
      state_.robot_orientation = std::min(state_.robot_orientation + 1, 1);
      break;
    case kRotateCcw:
      state_.robot_orientation = std::max(state_.robot_orientation - 1, -1);
      break;
  }

  state_ = advance_ball(state_, config_);

  StepOutcome out;
  out.info.event = Event::kNone;

  const Real w = config_.travel_steps;
  if (state_.ball_x <= 0.0) {
    // Robot plane.
    if (std::abs(state_.ball_y - state_.robot_paddle_y) <=
        config_.paddle_halfwidth) {
      out.reward = config_.reward_hit;
      out.info.event = Event::kRobotHit;
      state_ = resolve_collision(state_, next_goal_, config_);
      if (state_.passes_completed >= config_.max_passes) {
        done_ = true;
      } else if (goal_consumed_) {
        // The human decides its next target while the ball travels back.
        next_goal_ = human_->draw_goal(config_.n_targets);
        goal_consumed_ = false;
      }
    } else {
      out.reward = config_.reward_miss;
      out.info.event = Event::kRobotMiss;
      done_ = true;
    }
  } else if (state_.ball_x >= w) {
    // Human plane: perfectly competent intercept, re-aimed at the pending
    // goal so the ball lands exactly on that lattice row.
    state_.human_paddle_y = state_.ball_y;
    state_ = resolve_collision(state_, next_goal_, config_);
    goal_consumed_ = true;
    out.info.event = Event::kHumanPass;
  } else if (state_.vel_x > 0) {
    // Ball outbound: the human paddle glides toward the predicted arrival.
    Real remaining = w - state_.ball_x;
    Real arrival = std::clamp(state_.ball_y + state_.vel_y * remaining,
                              Real(0), Real(config_.n_targets - 1));
    state_.human_paddle_y +=
        (arrival - state_.human_paddle_y) / std::max(remaining, Real(1));
  }

  state_.t += 1;
  if (!done_ && state_.t >= config_.step_cap()) {
    done_ = true;
    out.info.step_cap_hit = true;
  }

  episode_return_ += out.reward;
  out.done = done_;
  out.info.true_goal = next_goal_;
  out.observation = observe(state_, config_, rng_);
  return out;
}

Eigen::VectorXd CopassEnv::true_latent() const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(config_.n_targets);
  if (next_goal_ >= 0) v(next_goal_) = 1.0;
  return v;
}

}  // namespace betrans::env
