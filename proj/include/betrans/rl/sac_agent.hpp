#pragma once

// Discrete-action soft actor-critic conditioned on a latent vector appended
// to the observation. Twin Q networks with target copies, closed-form policy
// expectation losses, and autotuned entropy temperature.

#include "betrans/common.hpp"
#include "betrans/env/copass.hpp"
#include "betrans/nn/modules.hpp"

#include <vector>

namespace betrans::rl {

struct SACConfig {
  double lr_policy = 3e-4;
  double lr_critic = 3e-4;
  double lr_alpha = 3e-4;
  int batch = 32;
  int update_every = 1000;      // env steps between update triggers
  int updates_per_trigger = 5;  // batches per trigger
  double tau = 1.0;             // 1.0 = hard target copy
  int target_copy_every = 8000; // env steps between target syncs
  double discount = 0.99;
  bool autotune_alpha = true;
  double init_alpha = 0.2;
  double target_entropy_scale = 0.98;  // × log(n_actions)
  int learning_starts = 5000;
  int hidden = 256;

  void validate() const {
    if (lr_policy <= 0 || lr_critic <= 0 || lr_alpha <= 0)
      throw ConfigError("learning rates must be positive");
    if (tau <= 0.0 || tau > 1.0) throw ConfigError("tau outside (0,1]");
    if (batch < 1 || update_every < 1 || updates_per_trigger < 1)
      throw ConfigError("batch/update cadence must be positive");
    if (discount < 0.0 || discount > 1.0)
      throw ConfigError("discount outside [0,1]");
  }
};

template <class S>
struct SacBatch {
  nn::Mat<S> obs, latent, obs_next, latent_next;  // B×dim each
  std::vector<int> action;
  Eigen::Matrix<S, Eigen::Dynamic, 1> reward, done;
};

template <class S>
class SacAgent {
 public:
  SacAgent(int obs_dim, int latent_dim, int n_actions, SACConfig cfg,
           std::uint64_t seed)
      : obs_dim_(obs_dim),
        latent_dim_(latent_dim),
        n_actions_(n_actions),
        cfg_(cfg),
        rng_(seed) {
    cfg_.validate();
    const int in = obs_dim + latent_dim;
    const std::vector<int> hid = {cfg_.hidden, cfg_.hidden};
    policy_ = nn::Mlp<S>(in, hid, n_actions, policy_params_, rng_);
    q1_ = nn::Mlp<S>(in, hid, n_actions, critic_params_, rng_);
    q2_ = nn::Mlp<S>(in, hid, n_actions, critic_params_, rng_);
    tq1_ = nn::Mlp<S>(in, hid, n_actions, target_params_, rng_);
    tq2_ = nn::Mlp<S>(in, hid, n_actions, target_params_, rng_);
    log_alpha_ = alpha_params_.add(nn::Mat<S>::Constant(
        1, 1, std::log(static_cast<S>(cfg_.init_alpha))));
    policy_opt_ = nn::Adam<S>(policy_params_, S(cfg_.lr_policy));
    critic_opt_ = nn::Adam<S>(critic_params_, S(cfg_.lr_critic));
    alpha_opt_ = nn::Adam<S>(alpha_params_, S(cfg_.lr_alpha));
    sync_targets(S(1));
    target_entropy_ =
        static_cast<S>(cfg_.target_entropy_scale * std::log(double(n_actions)));
  }

  const SACConfig& config() const { return cfg_; }
  S alpha() const { return std::exp(log_alpha_.value()(0, 0)); }
  int input_dim() const { return obs_dim_ + latent_dim_; }

  // Policy distribution over actions for a single (obs, latent) pair.
  Eigen::Matrix<S, 1, Eigen::Dynamic> policy_probs(
      const env::Observation& obs, const Eigen::VectorXd& latent) const {
    nn::Mat<S> x = pack_input(obs, latent);
    nn::Mat<S> logits = policy_.plain(x);
    return softmax_row(logits.row(0));
  }

  int act(const env::Observation& obs, const Eigen::VectorXd& latent,
          bool explore, Rng& rng) const {
    auto p = policy_probs(obs, latent);
    if (!explore) {
      Eigen::Index arg;
      p.maxCoeff(&arg);
      return static_cast<int>(arg);
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = unif(rng), acc = 0.0;
    for (int a = 0; a < n_actions_; ++a) {
      acc += static_cast<double>(p(a));
      if (u < acc) return a;
    }
    return n_actions_ - 1;
  }

  static nn::Mat<S> hcat(const nn::Mat<S>& a, const nn::Mat<S>& b) {
    if (b.cols() == 0) return a;
    nn::Mat<S> x(a.rows(), a.cols() + b.cols());
    x << a, b;
    return x;
  }

  // Soft Bellman target from the target networks; no gradient flows here.
  Eigen::Matrix<S, Eigen::Dynamic, 1> critic_targets(const SacBatch<S>& b) const {
    nn::Mat<S> xn = hcat(b.obs_next, b.latent_next);
    nn::Mat<S> logits_n = policy_.plain(xn);
    nn::Mat<S> logp_n = log_softmax_rows_plain(logits_n);
    nn::Mat<S> p_n = logp_n.array().exp().matrix();
    nn::Mat<S> qmin = tq1_.plain(xn).cwiseMin(tq2_.plain(xn));
    const S a = alpha();
    Eigen::Matrix<S, Eigen::Dynamic, 1> v_next =
        (p_n.array() * (qmin.array() - a * logp_n.array()))
            .rowwise()
            .sum()
            .matrix();
    const Eigen::Index B = b.obs.rows();
    return b.reward +
           static_cast<S>(cfg_.discount) *
               (Eigen::Matrix<S, Eigen::Dynamic, 1>::Ones(B) - b.done)
                   .cwiseProduct(v_next);
  }

  // J_Q for the batch; accumulates critic gradients when backward is set.
  double critic_loss(const SacBatch<S>& b, bool backward) {
    const Eigen::Index B = b.obs.rows();
    Eigen::Matrix<S, Eigen::Dynamic, 1> y = critic_targets(b);
    nn::Mat<S> x = hcat(b.obs, b.latent);
    nn::Tape<S> t;
    auto xv = t.constant(x);
    auto q1a = nn::gather_per_row(t, q1_(t, xv), b.action);
    auto q2a = nn::gather_per_row(t, q2_(t, xv), b.action);
    Eigen::Matrix<S, Eigen::Dynamic, 1> w =
        Eigen::Matrix<S, Eigen::Dynamic, 1>::Constant(B, S(1) / S(B));
    auto l1 = nn::weighted_sumsq_rows(t, q1a, nn::Mat<S>(y), w);
    auto l2 = nn::weighted_sumsq_rows(t, q2a, nn::Mat<S>(y), w);
    auto loss = nn::add(t, l1, l2);
    if (backward) t.backward(loss);
    return static_cast<double>(loss.scalar());
  }

  // Soft Bellman residual step on the twin critics; returns J_Q.
  double critic_update(const SacBatch<S>& b) {
    critic_params_.zero_grad();
    double loss = critic_loss(b, /*backward=*/true);
    critic_opt_.step();
    return loss;
  }

  // J_π for the batch; accumulates policy gradients when backward is set.
  // mean_entropy_out, if given, receives H̄(π) over the batch.
  double actor_loss(const SacBatch<S>& b, bool backward,
                    S* mean_entropy_out = nullptr) {
    const Eigen::Index B = b.obs.rows();
    nn::Mat<S> x = hcat(b.obs, b.latent);
    nn::Mat<S> qmin = q1_.plain(x).cwiseMin(q2_.plain(x));  // constants
    const S a = alpha();
    nn::Tape<S> t;
    auto xv = t.constant(x);
    auto logits = policy_(t, xv);
    auto logp = nn::log_softmax_rows(t, logits);
    auto p = nn::exp_op(t, logp);
    auto inner = nn::add(t, nn::scale(t, logp, a), t.constant(nn::Mat<S>(-qmin)));
    auto loss = nn::scale(t, nn::sum_all(t, nn::mul(t, p, inner)), S(1) / S(B));
    if (backward) t.backward(loss);
    if (mean_entropy_out) {
      S ent = 0;
      for (Eigen::Index i = 0; i < B; ++i)
        ent -= p.val().row(i).cwiseProduct(logp.val().row(i)).sum();
      *mean_entropy_out = ent / S(B);
    }
    return static_cast<double>(loss.scalar());
  }

  // Policy (and entropy temperature) step; returns J_π.
  double actor_update(const SacBatch<S>& b) {
    policy_params_.zero_grad();
    S entropy = 0;
    double loss = actor_loss(b, /*backward=*/true, &entropy);
    policy_opt_.step();
    if (cfg_.autotune_alpha) {
      // d/d(logα) of  −logα · (target_H − H̄)  =  H̄ − target_H
      log_alpha_.grad()(0, 0) = entropy - target_entropy_;
      alpha_opt_.step();
      alpha_params_.zero_grad();
    }
    return loss;
  }

  void maybe_sync_targets(std::int64_t env_step) {
    if (env_step % cfg_.target_copy_every == 0) sync_targets(S(cfg_.tau));
  }

  void sync_targets(S tau) {
    auto& src = critic_params_.params();
    auto& dst = target_params_.params();
    for (std::size_t i = 0; i < src.size(); ++i)
      dst[i].value() = tau * src[i].value() + (S(1) - tau) * dst[i].value();
  }

  void save(std::ostream& os) const {
    policy_params_.save(os);
    critic_params_.save(os);
    target_params_.save(os);
    alpha_params_.save(os);
  }
  void load(std::istream& is) {
    policy_params_.load(is);
    critic_params_.load(is);
    target_params_.load(is);
    alpha_params_.load(is);
  }

  nn::ParamGroup<S>& policy_params() { return policy_params_; }
  nn::ParamGroup<S>& critic_params() { return critic_params_; }

  // Plain twin-critic values for diagnostics and oracle comparisons.
  std::pair<nn::Mat<S>, nn::Mat<S>> critic_values(const nn::Mat<S>& x) const {
    return {q1_.plain(x), q2_.plain(x)};
  }
  nn::Mat<S> policy_probs_mat(const nn::Mat<S>& x) const {
    nn::Mat<S> logp = log_softmax_rows_plain(policy_.plain(x));
    return logp.array().exp().matrix();
  }

  nn::Mat<S> pack_input(const env::Observation& obs,
                        const Eigen::VectorXd& latent) const {
    if (latent.size() != latent_dim_)
      throw UsageError("latent dimension mismatch in SAC input");
    nn::Mat<S> x(1, input_dim());
    for (int i = 0; i < obs_dim_; ++i) x(0, i) = static_cast<S>(obs[i]);
    for (int i = 0; i < latent_dim_; ++i)
      x(0, obs_dim_ + i) = static_cast<S>(latent(i));
    return x;
  }

 private:
  static Eigen::Matrix<S, 1, Eigen::Dynamic> softmax_row(
      const Eigen::Matrix<S, 1, Eigen::Dynamic>& z) {
    Eigen::Array<S, 1, Eigen::Dynamic> e = (z.array() - z.maxCoeff()).exp();
    return (e / e.sum()).matrix();
  }

  static nn::Mat<S> log_softmax_rows_plain(const nn::Mat<S>& z) {
    nn::Mat<S> out(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      S m = z.row(i).maxCoeff();
      S lse = std::log((z.row(i).array() - m).exp().sum()) + m;
      out.row(i) = z.row(i).array() - lse;
    }
    return out;
  }

  int obs_dim_, latent_dim_, n_actions_;
  SACConfig cfg_;
  Rng rng_;
  nn::ParamGroup<S> policy_params_, critic_params_, target_params_,
      alpha_params_;
  nn::Mlp<S> policy_, q1_, q2_, tq1_, tq2_;
  nn::Param<S> log_alpha_;
  nn::Adam<S> policy_opt_, critic_opt_, alpha_opt_;
  S target_entropy_ = S(0);
};

}  // namespace betrans::rl
