#pragma once

// MLP mapping (state, action, latent) to predicted next state and reward.
// Its reconstruction loss J_sr is the fine-tuning signal that shapes the
// transformer's latent.

#include "betrans/common.hpp"
#include "betrans/env/copass.hpp"
#include "betrans/nn/modules.hpp"

#include <vector>

namespace betrans::model {

struct DNConfig {
  int hidden = 256;  // two hidden layers of this size
  int horizon = 1;
  double lr_dn = 1e-3;
  int obs_dim = env::Observation::kDim;
  int n_actions = env::kNumActions;
  int latent_dim = 12;

  int input_dim() const { return obs_dim + n_actions + latent_dim; }
  void validate() const {
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    if (hidden < 1) throw ConfigError("hidden size must be >= 1");
  }
};

template <class S>
class DynamicsNetwork {
 public:
  DynamicsNetwork(DNConfig cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
    cfg_.validate();
    l1_ = nn::Linear<S>(cfg_.input_dim(), cfg_.hidden, params_, rng_);
    l2_ = nn::Linear<S>(cfg_.hidden, cfg_.hidden, params_, rng_);
    s_head_ = nn::Linear<S>(cfg_.hidden, cfg_.obs_dim, params_, rng_);
    r_head_ = nn::Linear<S>(cfg_.hidden, 1, params_, rng_);
    adam_ = nn::Adam<S>(params_, S(cfg_.lr_dn));
  }

  const DNConfig& config() const { return cfg_; }
  nn::ParamGroup<S>& params() { return params_; }
  nn::Adam<S>& optimizer() { return adam_; }

  struct Prediction {
    nn::Var<S> s_next;  // B×obs_dim
    nn::Var<S> r;       // B×1
  };

  // x rows are [s | a one-hot | v]; dimension checked against the config.
  Prediction predict(nn::Tape<S>& t, nn::Var<S> x) const {
    if (x.cols() != cfg_.input_dim())
      throw UsageError("dynamics network input dimension mismatch");
    auto h = nn::relu(t, l2_(t, nn::relu(t, l1_(t, x))));
    return {s_head_(t, h), r_head_(t, h)};
  }

  // Open-loop rollout: each predicted state feeds the next step, with the
  // latent held fixed across the horizon window.
  std::vector<Prediction> horizon_predict(nn::Tape<S>& t, nn::Var<S> s,
                                          const std::vector<nn::Mat<S>>& action_onehots,
                                          nn::Var<S> v, int n) const {
    if (n > cfg_.horizon) throw UsageError("rollout longer than config horizon");
    if (static_cast<int>(action_onehots.size()) < n)
      throw UsageError("not enough actions for the requested horizon");
    std::vector<Prediction> out;
    nn::Var<S> cur = s;
    for (int i = 0; i < n; ++i) {
      auto x = nn::concat_cols<S>(t, {cur, t.constant(action_onehots[i]), v});
      Prediction p = predict(t, x);
      out.push_back(p);
      cur = p.s_next;
    }
    return out;
  }

  void save(std::ostream& os) const { params_.save(os); }
  void load(std::istream& is) { params_.load(is); }

 private:
  DNConfig cfg_;
  Rng rng_;
  nn::ParamGroup<S> params_;
  nn::Adam<S> adam_;
  nn::Linear<S> l1_, l2_, s_head_, r_head_;
};

// J_sr = mean over rows of ||s − ŝ||² + (r − r̂)². Targets are constants.
template <class S>
nn::Var<S> reconstruction_loss(nn::Tape<S>& t, nn::Var<S> s_pred,
                               nn::Var<S> r_pred, nn::Mat<S> s_target,
                               nn::Mat<S> r_target) {
  const Eigen::Index B = s_pred.rows();
  Eigen::Matrix<S, Eigen::Dynamic, 1> w =
      Eigen::Matrix<S, Eigen::Dynamic, 1>::Constant(B, S(1) / S(B));
  auto ls = nn::weighted_sumsq_rows(t, s_pred, std::move(s_target), w);
  auto lr = nn::weighted_sumsq_rows(t, r_pred, std::move(r_target), w);
  return nn::add(t, ls, lr);
}

}  // namespace betrans::model
