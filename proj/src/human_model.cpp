#include "betrans/human/human_model.hpp"

#include <algorithm>
#include <cmath>

namespace betrans::human {

void PopulationParams::validate() const {
  auto check_lambda = [](Real l, const char* name) {
    if (!(l > 0.0 && l < 1.0))
      throw ConfigError(std::string("continuous Bernoulli shape ") + name +
                        " must lie in (0,1)");
  };
  check_lambda(lambda_c, "lambda_c");
  check_lambda(lambda_lf, "lambda_lf");
  check_lambda(lambda_hf, "lambda_hf");
  check_lambda(lambda_inf, "lambda_inf");
  if (p_left < 0.0 || p_left > 1.0) throw ConfigError("p_left outside [0,1]");
  if (beta_alpha <= 0.0 || beta_beta <= 0.0)
    throw ConfigError("Beta shape parameters must be positive");
  if (lf_lookback < 1) throw ConfigError("lf_lookback must be >= 1");
  if (kernel_peak <= 0.0 || kernel_peak > 1.0)
    throw ConfigError("kernel_peak outside (0,1]");
  if (kernel_decay <= 0.0 || kernel_decay >= 1.0)
    throw ConfigError("kernel_decay outside (0,1)");
}

Real sample_continuous_bernoulli(Real lambda, Rng& rng) {
  std::uniform_real_distribution<Real> unif(0.0, 1.0);
  Real u = unif(rng);
  if (std::abs(lambda - 0.5) < 1e-12) return u;
  // Invert F(x) = (λ^x (1-λ)^{1-x} + λ - 1) / (2λ - 1).
  Real gamma = lambda / (1.0 - lambda);
  Real num = u * (2.0 * lambda - 1.0) + 1.0 - lambda;
  Real x = std::log(num / (1.0 - lambda)) / std::log(gamma);
  return std::clamp(x, Real(0), Real(1));
}

Real sample_beta(Real alpha, Real beta, Rng& rng) {
  std::gamma_distribution<Real> ga(alpha, 1.0), gb(beta, 1.0);
  Real a = ga(rng), b = gb(rng);
  return a / (a + b);
}

HumanProfile sample_profile(const PopulationParams& pop, Rng& rng) {
  pop.validate();
  HumanProfile p;
  Real rc = pop.use_constant ? sample_continuous_bernoulli(pop.lambda_c, rng) : 0.0;
  Real rlf = pop.use_low_freq ? sample_continuous_bernoulli(pop.lambda_lf, rng) : 0.0;
  Real rhf = pop.use_high_freq ? sample_continuous_bernoulli(pop.lambda_hf, rng) : 0.0;
  Real rinf = pop.use_influence ? sample_continuous_bernoulli(pop.lambda_inf, rng) : 0.0;
  Real sum = rc + rlf + rhf + rinf;
  if (sum <= 0.0) {  // all components disabled or degenerate draw
    rc = 1.0;
    sum = 1.0;
  }
  p.w_c = rc / sum;
  p.w_lf = rlf / sum;
  p.w_hf = rhf / sum;
  p.w_inf = rinf / sum;
  std::uniform_real_distribution<Real> unif(0.0, 1.0);
  p.handedness = unif(rng) < pop.p_left ? Handedness::kLeft : Handedness::kRight;
  p.preference_strength = sample_beta(pop.beta_alpha, pop.beta_beta, rng);
  p.lf_lookback = pop.lf_lookback;
  p.kernel_peak = pop.kernel_peak;
  p.kernel_decay = pop.kernel_decay;
  p.rng_seed = rng();
  return p;
}

GoalDistribution constant_component(const HumanProfile& profile, int n_targets) {
  if (n_targets < 3) throw ConfigError("n_targets must be >= 3");
  int preferred = profile.handedness == Handedness::kLeft ? 0 : n_targets - 1;
  Real s = profile.preference_strength;
  GoalDistribution d =
      GoalDistribution::Constant(n_targets, (1.0 - s) / (n_targets - 1));
  d(preferred) = s;
  return d;
}

GoalDistribution peaked_categorical(int anchor, int n_targets, Real peak,
                                    Real decay) {
  GoalDistribution d(n_targets);
  if (peak >= 1.0) {
    d.setZero();
    d(anchor) = 1.0;
    return d;
  }
  Real wsum = 0.0;
  for (int i = 0; i < n_targets; ++i) {
    if (i == anchor) continue;
    wsum += std::pow(decay, std::abs(i - anchor));
  }
  for (int i = 0; i < n_targets; ++i) {
    d(i) = i == anchor
               ? peak
               : (1.0 - peak) * std::pow(decay, std::abs(i - anchor)) / wsum;
  }
  return d;
}

GoalDistribution low_freq_component(const EpisodeMemory& memory, int n_targets,
                                    int lookback_k, Real kernel_peak,
                                    Real kernel_decay) {
  int n_eps = static_cast<int>(memory.completed.size());
  int k = std::min(lookback_k, n_eps);
  Real acc = 0.0;
  int used = 0;
  for (int e = n_eps - k; e < n_eps; ++e) {
    const auto& goals = memory.completed[e];
    if (goals.empty()) continue;
    Real m = 0.0;
    for (int g : goals) m += g;
    acc += m / goals.size();
    ++used;
  }
  if (used == 0)
    return GoalDistribution::Constant(n_targets, 1.0 / n_targets);
  int anchor = static_cast<int>(std::lround(acc / used));
  anchor = std::clamp(anchor, 0, n_targets - 1);
  return peaked_categorical(anchor, n_targets, kernel_peak, kernel_decay);
}

GoalDistribution high_freq_component(const std::vector<int>& current_goals,
                                     int n_targets, Real kernel_peak,
                                     Real kernel_decay) {
  if (current_goals.empty())
    return GoalDistribution::Constant(n_targets, 1.0 / n_targets);
  int anchor;
  if (current_goals.size() == 1) {
    anchor = current_goals.back();
  } else {
    int g1 = current_goals[current_goals.size() - 1];
    int g0 = current_goals[current_goals.size() - 2];
    anchor = std::clamp(g1 + (g1 - g0), 0, n_targets - 1);
  }
  return peaked_categorical(anchor, n_targets, kernel_peak, kernel_decay);
}

GoalDistribution influence_component(std::optional<int> robot_signal,
                                     int n_targets) {
  if (!robot_signal)
    return GoalDistribution::Constant(n_targets, 1.0 / n_targets);
  GoalDistribution d =
      GoalDistribution::Constant(n_targets, 1.0 / (n_targets + 1.0));
  d(*robot_signal) = 2.0 / (n_targets + 1.0);
  return d;
}

GoalDistribution compose(const HumanProfile& profile,
                         const GoalDistribution& p_c,
                         const GoalDistribution& p_lf,
                         const GoalDistribution& p_hf,
                         const GoalDistribution* p_inf) {
  if (p_c.size() != p_lf.size() || p_c.size() != p_hf.size() ||
      (p_inf && p_inf->size() != p_c.size()))
    throw std::logic_error("goal component length mismatch");
  GoalDistribution d = profile.w_c * p_c + profile.w_lf * p_lf +
                       profile.w_hf * p_hf;
  if (p_inf) d += profile.w_inf * *p_inf;
  Real s = d.sum();
  if (s <= 0.0) throw std::logic_error("degenerate composed distribution");
  return d / s;
}

int sample_goal(const GoalDistribution& dist, EpisodeMemory& memory, Rng& rng) {
  std::uniform_real_distribution<Real> unif(0.0, 1.0);
  Real u = unif(rng);
  Real acc = 0.0;
  int goal = static_cast<int>(dist.size()) - 1;
  for (int i = 0; i < dist.size(); ++i) {
    acc += dist(i);
    if (u < acc) {
      goal = i;
      break;
    }
  }
  memory.record(goal);
  return goal;
}

GoalDistribution HumanAgent::goal_distribution(
    int n_targets, std::optional<int> robot_signal) const {
  GoalDistribution p_c = constant_component(profile_, n_targets);
  GoalDistribution p_lf =
      low_freq_component(memory_, n_targets, profile_.lf_lookback,
                         profile_.kernel_peak, profile_.kernel_decay);
  GoalDistribution p_hf = high_freq_component(
      memory_.current, n_targets, profile_.kernel_peak, profile_.kernel_decay);
  if (profile_.w_inf > 0.0) {
    GoalDistribution p_inf = influence_component(robot_signal, n_targets);
    return compose(profile_, p_c, p_lf, p_hf, &p_inf);
  }
  return compose(profile_, p_c, p_lf, p_hf);
}

int HumanAgent::draw_goal(int n_targets, std::optional<int> robot_signal) {
  GoalDistribution d = goal_distribution(n_targets, robot_signal);
  return sample_goal(d, memory_, rng_);
}

int HumanAgent::current_goal() const {
  if (!memory_.current.empty()) return memory_.current.back();
  throw UsageError("ground-truth latent queried before the first goal draw");
}

Eigen::VectorXd HumanAgent::ground_truth_latent(int n_targets) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n_targets);
  v(current_goal()) = 1.0;
  return v;
}

}  // namespace betrans::human
