#pragma once

#include <algorithm>

namespace betrans::baselines {

inline Method method_from_string(const std::string& name) {
  if (name == "oracle") return Method::kOracle;
  if (name == "sac") return Method::kSac;
  if (name == "lili") return Method::kLili;
  if (name == "rnn_lili") return Method::kRnnLili;
  if (name == "betrans") return Method::kBetrans;
  throw ConfigError("unknown method: " + name);
}

inline std::string method_name(Method m) {
  switch (m) {
    case Method::kOracle: return "oracle";
    case Method::kSac: return "sac";
    case Method::kLili: return "lili";
    case Method::kRnnLili: return "rnn_lili";
    case Method::kBetrans: return "betrans";
  }
  return "?";
}

template <class S>
nn::Mat<S> episode_features(std::span<const Transition* const> eps) {
  constexpr int od = env::Observation::kDim;
  const int fdim = 2 * od + env::kNumActions + 2;
  nn::Mat<S> f(eps.size(), fdim);
  f.setZero();
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const Transition& tr = *eps[i];
    for (int j = 0; j < od; ++j) {
      f(i, j) = static_cast<S>(tr.s[j]);
      f(i, od + env::kNumActions + 1 + j) = static_cast<S>(tr.s_next[j]);
    }
    f(i, od + tr.a) = S(1);
    f(i, od + env::kNumActions) = static_cast<S>(tr.r * replay::kRewardScale);
    f(i, fdim - 1) = tr.d ? S(1) : S(0);
  }
  return f;
}

template <class S>
struct LiliNets {
  int latent_dim, max_len, fdim;
  bool recurrent;
  nn::ParamGroup<S> params;
  nn::Adam<S> adam;
  // feed-forward encoder (LILI)
  nn::Mlp<S> enc_trunk;
  nn::Linear<S> enc_mean, enc_logstd;
  // recurrent encoder (RNN-LILI)
  nn::GruCell<S> gru;
  nn::Linear<S> gru_proj;
  int rnn_hidden = 0;
  // decoder: same shape as the dynamics network
  model::DynamicsNetwork<S> decoder;
  double kl_weight;
  Rng rng;

  LiliNets(int latent, int maxlen, int hidden, double lr, double klw,
           bool recur, int rnn_hid, std::uint64_t seed)
      : latent_dim(latent),
        max_len(maxlen),
        fdim(2 * env::Observation::kDim + env::kNumActions + 2),
        recurrent(recur),
        decoder(model::DNConfig{.hidden = hidden,
                                .horizon = 1,
                                .lr_dn = lr,
                                .latent_dim = latent},
                derive_seed(seed, 7)),
        kl_weight(klw),
        rng(derive_seed(seed, 8)) {
    Rng init(derive_seed(seed, 9));
    if (recurrent) {
      rnn_hidden = rnn_hid;
      gru = nn::GruCell<S>(fdim, rnn_hid, params, init);
      gru_proj = nn::Linear<S>(rnn_hid, latent, params, init);
    } else {
      enc_trunk = nn::Mlp<S>(maxlen * fdim, {hidden, hidden}, hidden, params, init);
      enc_mean = nn::Linear<S>(hidden, latent, params, init);
      enc_logstd = nn::Linear<S>(hidden, latent, params, init);
    }
    params.absorb(decoder.params());
    adam = nn::Adam<S>(params, S(lr));
  }

  // Graph-building encoder. For the VAE case the caller may request a
  // reparameterized sample; kl is valid only then.
  struct Encoded {
    nn::Var<S> z;
    nn::Var<S> kl;  // invalid for the recurrent (deterministic) encoder
  };

  Encoded encode(nn::Tape<S>& t, const nn::Mat<S>& feats, bool sample) {
    if (recurrent) {
      nn::Var<S> h = t.constant(nn::Mat<S>::Zero(1, rnn_hidden));
      for (Eigen::Index i = 0; i < feats.rows(); ++i) {
        auto x = t.constant(nn::Mat<S>(feats.row(i)));
        h = gru.step(t, x, h);
      }
      return {gru_proj(t, h), nn::Var<S>()};
    }
    nn::Mat<S> flat = nn::Mat<S>::Zero(1, max_len * fdim);
    const int rows = std::min<int>(max_len, static_cast<int>(feats.rows()));
    for (int i = 0; i < rows; ++i)
      flat.block(0, i * fdim, 1, fdim) = feats.row(i);
    auto h = nn::relu(t, enc_trunk(t, t.constant(std::move(flat))));
    auto mean = enc_mean(t, h);
    if (!sample) return {mean, nn::Var<S>()};
    auto logstd = enc_logstd(t, h);
    std::normal_distribution<double> nd(0.0, 1.0);
    nn::Mat<S> eps(1, latent_dim);
    for (int i = 0; i < latent_dim; ++i) eps(0, i) = static_cast<S>(nd(rng));
    auto z = nn::add(t, mean,
                     nn::mul(t, nn::exp_op(t, logstd), t.constant(std::move(eps))));
    auto two_logstd = nn::scale(t, logstd, S(2));
    auto var = nn::exp_op(t, two_logstd);
    auto inner = nn::sub(
        t, nn::add_const(t, nn::add(t, nn::square(t, mean), var), S(-1)),
        two_logstd);
    auto kl = nn::scale(t, nn::sum_all(t, inner), S(0.5));
    return {z, kl};
  }
};

template <class S>
LiliProvider<S>::LiliProvider(int latent_dim, int max_episode_len, int hidden,
                              double lr, double kl_weight, bool recurrent,
                              int rnn_hidden, std::uint64_t seed)
    : LatentProvider<S>(latent_dim),
      nets_(std::make_shared<LiliNets<S>>(latent_dim, max_episode_len, hidden,
                                          lr, kl_weight, recurrent, rnn_hidden,
                                          seed)),
      episode_latent_(Eigen::VectorXd::Zero(latent_dim)) {}

template <class S>
LiliProvider<S>::LiliProvider(std::shared_ptr<LiliNets<S>> nets, int latent_dim)
    : LatentProvider<S>(latent_dim),
      nets_(std::move(nets)),
      episode_latent_(Eigen::VectorXd::Zero(latent_dim)) {}

template <class S>
Eigen::VectorXd LiliProvider<S>::encode_episode(
    std::span<const Transition* const> eps) const {
  if (eps.empty()) return Eigen::VectorXd::Zero(this->dim_);
  nn::Mat<S> feats = episode_features<S>(eps);
  nn::Tape<S> t;
  auto enc = nets_->encode(t, feats, /*sample=*/false);
  Eigen::VectorXd out(this->dim_);
  for (int i = 0; i < this->dim_; ++i)
    out(i) = static_cast<Real>(enc.z.val()(0, i));
  return out;
}

template <class S>
void LiliProvider<S>::begin_episode(int) {
  prev_episode_ = std::move(current_episode_);
  current_episode_.clear();
  if (prev_episode_.empty()) {
    episode_latent_ = Eigen::VectorXd::Zero(this->dim_);
    return;
  }
  std::vector<const Transition*> ptrs;
  ptrs.reserve(prev_episode_.size());
  for (const auto& tr : prev_episode_) ptrs.push_back(&tr);
  episode_latent_ = encode_episode(ptrs);
}

template <class S>
void LiliProvider<S>::observe_transition(const Transition& tr) {
  current_episode_.push_back(tr);
}

template <class S>
Eigen::VectorXd LiliProvider<S>::latent_for_acting(const env::CopassEnv&,
                                                   const env::Observation&,
                                                   bool) {
  return episode_latent_;  // constant across the whole episode
}

template <class S>
void LiliProvider<S>::batch_latents(const TrajectoryStore& store,
                                    std::span<const std::int64_t> anchors,
                                    nn::Mat<S>& v, nn::Mat<S>& v_next) {
  v.resize(anchors.size(), this->dim_);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    int ep = store.at(anchors[i]).episode_id;
    Eigen::VectorXd z = Eigen::VectorXd::Zero(this->dim_);
    if (ep > 0) {
      auto prev = store.episode(ep - 1);
      if (!prev.empty()) z = encode_episode(prev);
    }
    v.row(i) = z.template cast<S>().transpose();
  }
  v_next = v;  // latent is constant within an episode
}

template <class S>
ProviderLosses LiliProvider<S>::update(const TrajectoryStore& store,
                                       std::span<const std::int64_t> anchors) {
  ProviderLosses out;
  nets_->params.zero_grad();
  const S inv = S(1) / static_cast<S>(anchors.size());
  int kl_count = 0;
  double sr_sum = 0.0, kl_sum = 0.0;
  for (std::int64_t a : anchors) {
    const Transition& tr = store.at(a);
    nn::Tape<S> t;
    nn::Var<S> z;
    nn::Var<S> kl;
    auto prev = tr.episode_id > 0 ? store.episode(tr.episode_id - 1)
                                  : std::vector<const Transition*>{};
    if (!prev.empty()) {
      auto enc = nets_->encode(t, episode_features<S>(prev),
                               /*sample=*/!nets_->recurrent);
      z = enc.z;
      kl = enc.kl;
    } else {
      z = t.constant(nn::Mat<S>::Zero(1, this->dim_));
    }
    nn::Mat<S> sa(1, env::Observation::kDim + env::kNumActions);
    sa.setZero();
    for (int j = 0; j < env::Observation::kDim; ++j)
      sa(0, j) = static_cast<S>(tr.s[j]);
    sa(0, env::Observation::kDim + tr.a) = S(1);
    auto x = nn::concat_cols<S>(t, {t.constant(std::move(sa)), z});
    auto pred = nets_->decoder.predict(t, x);
    nn::Mat<S> s_tgt(1, env::Observation::kDim), r_tgt(1, 1);
    for (int j = 0; j < env::Observation::kDim; ++j)
      s_tgt(0, j) = static_cast<S>(tr.s_next[j]);
    r_tgt(0, 0) = static_cast<S>(tr.r * replay::kRewardScale);
    auto j_sr = model::reconstruction_loss<S>(t, pred.s_next, pred.r,
                                              std::move(s_tgt), std::move(r_tgt));
    sr_sum += static_cast<double>(j_sr.scalar());
    nn::Var<S> total = j_sr;
    if (kl.valid()) {
      kl_sum += static_cast<double>(kl.scalar());
      ++kl_count;
      total = nn::add(t, total, nn::scale(t, kl, S(nets_->kl_weight)));
    }
    t.backward(nn::scale(t, total, inv));
  }
  nets_->adam.step();
  out.sr = sr_sum / anchors.size();
  out.kl = kl_count > 0 ? kl_sum / kl_count : 0.0;
  return out;
}

template <class S>
std::unique_ptr<LatentProvider<S>> LiliProvider<S>::make_eval_clone() {
  return std::unique_ptr<LatentProvider<S>>(
      new LiliProvider<S>(nets_, this->dim_));
}

// ---- BeTrans ---------------------------------------------------------------

template <class S>
BetransProvider<S>::BetransProvider(model::BTConfig btc, model::DNConfig dnc,
                                    std::uint64_t seed)
    : LatentProvider<S>(btc.latent_dim),
      nets_(std::make_shared<BetransNets<S>>(btc, dnc, seed)) {}

template <class S>
BetransProvider<S>::BetransProvider(std::shared_ptr<BetransNets<S>> nets)
    : LatentProvider<S>(nets->bt.config().latent_dim), nets_(std::move(nets)) {}

template <class S>
void BetransProvider<S>::observe_transition(const Transition& tr) {
  tail_.push_back(tr);
  const std::size_t cap = nets_->bt.config().block_steps;
  while (tail_.size() > cap) tail_.pop_front();
}

template <class S>
Eigen::VectorXd BetransProvider<S>::latent_for_acting(
    const env::CopassEnv&, const env::Observation& obs, bool deterministic) {
  std::vector<Transition> tail(tail_.begin(), tail_.end());
  TokenWindow w =
      replay::build_window(tail, nets_->bt.config().block_steps, &obs);
  return nets_->bt.infer_latent(w, nets_->rng, deterministic);
}

template <class S>
void BetransProvider<S>::batch_latents(const TrajectoryStore& store,
                                       std::span<const std::int64_t> anchors,
                                       nn::Mat<S>& v, nn::Mat<S>& v_next) {
  const int n = static_cast<int>(anchors.size());
  std::vector<TokenWindow> windows;
  windows.reserve(2 * n);
  for (int i = 0; i < n; ++i) windows.push_back(store.window_at(anchors[i]));
  for (int i = 0; i < n; ++i)
    windows.push_back(store.next_window_at(anchors[i]));
  nn::Mat<S> all = nets_->bt.infer_latents_batch(windows, nets_->rng, false);
  v = all.topRows(n);
  v_next = all.bottomRows(n);
}

template <class S>
ProviderLosses BetransProvider<S>::update(const TrajectoryStore& store,
                                          std::span<const std::int64_t> anchors) {
  auto& bt = nets_->bt;
  auto& dn = nets_->dn;
  const auto& cfg = bt.config();
  const int horizon = dn.config().horizon;
  bt.params().zero_grad();
  dn.params().zero_grad();
  const S inv = S(1) / static_cast<S>(anchors.size());
  double sr_sum = 0.0, kl_sum = 0.0;
  for (std::int64_t a : anchors) {
    nn::Tape<S> t;
    TokenWindow w = store.window_at(a);
    auto feats = bt.forward(t, w);
    auto latent = bt.latent_at_anchor(t, feats, nets_->rng, false);

    // Horizon slice: consecutive transitions from the anchor, truncated at
    // episode end or buffer edge; the latent is held fixed across it.
    std::vector<const Transition*> slice;
    for (int h = 0; h < horizon; ++h) {
      std::int64_t ti = a + h;
      if (ti > store.last_index()) break;
      const Transition& tr = store.at(ti);
      slice.push_back(&tr);
      if (tr.d) break;
    }
    const Transition& first = *slice.front();
    nn::Mat<S> s0(1, cfg.obs_dim);
    for (int j = 0; j < cfg.obs_dim; ++j) s0(0, j) = static_cast<S>(first.s[j]);
    std::vector<nn::Mat<S>> acts;
    nn::Mat<S> s_tgt(slice.size(), cfg.obs_dim), r_tgt(slice.size(), 1);
    for (std::size_t h = 0; h < slice.size(); ++h) {
      nn::Mat<S> a1 = nn::Mat<S>::Zero(1, cfg.n_actions);
      a1(0, slice[h]->a) = S(1);
      acts.push_back(std::move(a1));
      for (int j = 0; j < cfg.obs_dim; ++j)
        s_tgt(h, j) = static_cast<S>(slice[h]->s_next[j]);
      r_tgt(h, 0) = static_cast<S>(slice[h]->r * replay::kRewardScale);
    }
    auto rollout = dn.horizon_predict(t, t.constant(std::move(s0)), acts,
                                      latent.value,
                                      static_cast<int>(slice.size()));
    std::vector<nn::Var<S>> s_preds, r_preds;
    for (auto& p : rollout) {
      s_preds.push_back(p.s_next);
      r_preds.push_back(p.r);
    }
    auto sp = s_preds.size() == 1 ? s_preds[0] : nn::concat_rows(t, s_preds);
    auto rp = r_preds.size() == 1 ? r_preds[0] : nn::concat_rows(t, r_preds);
    auto j_sr = model::reconstruction_loss<S>(t, sp, rp, std::move(s_tgt),
                                              std::move(r_tgt));
    sr_sum += static_cast<double>(j_sr.scalar());
    nn::Var<S> total = j_sr;
    if (latent.kl.valid()) {
      kl_sum += static_cast<double>(latent.kl.scalar());
      total = nn::add(t, total,
                      nn::scale(t, latent.kl, static_cast<S>(cfg.kl_weight)));
    }
    t.backward(nn::scale(t, total, inv));
  }
  // Algorithm order: φ_BT ← ∇(J_sr + J_KL), then θ_DN ← ∇J_sr. The KL term
  // has no DN path, so one backward serves both optimizers.
  bt.optimizer().step();
  dn.optimizer().step();
  ProviderLosses out;
  out.sr = sr_sum / anchors.size();
  out.kl = kl_sum / anchors.size();
  return out;
}

template <class S>
std::unique_ptr<LatentProvider<S>> BetransProvider<S>::make_eval_clone() {
  return std::unique_ptr<LatentProvider<S>>(new BetransProvider<S>(nets_));
}

}  // namespace betrans::baselines
