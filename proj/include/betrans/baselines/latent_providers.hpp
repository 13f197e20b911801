#pragma once

// Latent providers for the method family: zero (vanilla SAC), ground-truth
// oracle, LILI (feed-forward VAE over the previous episode), RNN-LILI (GRU
// encoder), and the behaviour transformer. All methods share the same SAC
// core; the provider is the only varying factor.

#include "betrans/common.hpp"
#include "betrans/env/copass.hpp"
#include "betrans/model/betrans_model.hpp"
#include "betrans/model/dynamics_network.hpp"
#include "betrans/replay/trajectory_store.hpp"

#include <deque>
#include <memory>
#include <span>

namespace betrans::baselines {

using replay::TokenWindow;
using replay::Transition;
using replay::TrajectoryStore;

enum class Method { kOracle, kSac, kLili, kRnnLili, kBetrans };

Method method_from_string(const std::string& name);
std::string method_name(Method m);

struct ProviderLosses {
  double sr = 0.0;
  double kl = 0.0;
};

template <class S>
class LatentProvider {
 public:
  explicit LatentProvider(int dim) : dim_(dim) {}
  virtual ~LatentProvider() = default;

  int dim() const { return dim_; }

  virtual void begin_episode(int /*episode_id*/) {}
  virtual void observe_transition(const Transition& /*tr*/) {}

  // Latent conditioning the policy at the current step.
  virtual Eigen::VectorXd latent_for_acting(const env::CopassEnv& env,
                                            const env::Observation& obs,
                                            bool deterministic) = 0;

  // Latents for a sampled batch: anchor-time and next-state-time matrices.
  virtual void batch_latents(const TrajectoryStore& store,
                             std::span<const std::int64_t> anchors,
                             nn::Mat<S>& v, nn::Mat<S>& v_next) = 0;

  // Provider-side learning (VAE / transformer fine-tune); default: nothing.
  virtual ProviderLosses update(const TrajectoryStore& /*store*/,
                                std::span<const std::int64_t> /*anchors*/) {
    return {};
  }

  // History-fresh instance sharing the learned networks, for held-out
  // evaluation rollouts.
  virtual std::unique_ptr<LatentProvider<S>> make_eval_clone() = 0;

 protected:
  int dim_;
};

template <class S>
class ZeroProvider final : public LatentProvider<S> {
 public:
  explicit ZeroProvider(int dim) : LatentProvider<S>(dim) {}

  Eigen::VectorXd latent_for_acting(const env::CopassEnv&,
                                    const env::Observation&, bool) override {
    return Eigen::VectorXd::Zero(this->dim_);
  }

  void batch_latents(const TrajectoryStore&, std::span<const std::int64_t> anchors,
                     nn::Mat<S>& v, nn::Mat<S>& v_next) override {
    v = nn::Mat<S>::Zero(anchors.size(), this->dim_);
    v_next = nn::Mat<S>::Zero(anchors.size(), this->dim_);
  }

  std::unique_ptr<LatentProvider<S>> make_eval_clone() override {
    return std::make_unique<ZeroProvider<S>>(this->dim_);
  }
};

template <class S>
class OracleProvider final : public LatentProvider<S> {
 public:
  explicit OracleProvider(int dim) : LatentProvider<S>(dim) {}

  Eigen::VectorXd latent_for_acting(const env::CopassEnv& env,
                                    const env::Observation&, bool) override {
    Eigen::VectorXd v = env.true_latent();
    if (v.size() != this->dim_)
      throw UsageError("oracle latent dimension mismatch");
    return v;
  }

  void batch_latents(const TrajectoryStore& store,
                     std::span<const std::int64_t> anchors, nn::Mat<S>& v,
                     nn::Mat<S>& v_next) override {
    v.resize(anchors.size(), this->dim_);
    v_next.resize(anchors.size(), this->dim_);
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      const Transition& tr = store.at(anchors[i]);
      v.row(i) = tr.true_latent.template cast<S>().transpose();
      // The latent paired with s' is the one recorded at the next step.
      if (anchors[i] + 1 <= store.last_index() && !tr.d)
        v_next.row(i) =
            store.at(anchors[i] + 1).true_latent.template cast<S>().transpose();
      else
        v_next.row(i) = v.row(i);
    }
  }

  std::unique_ptr<LatentProvider<S>> make_eval_clone() override {
    return std::make_unique<OracleProvider<S>>(this->dim_);
  }
};

// ---- LILI family ---------------------------------------------------------

// Per-step features fed to the episode encoders: [s, a one-hot, r, s', d].
template <class S>
nn::Mat<S> episode_features(std::span<const Transition* const> eps);

// Shared nets of the LILI provider (encoder + decoder), so evaluation clones
// can reuse them without copying.
template <class S>
struct LiliNets;

template <class S>
class LiliProvider final : public LatentProvider<S> {
 public:
  LiliProvider(int latent_dim, int max_episode_len, int hidden, double lr,
               double kl_weight, bool recurrent, int rnn_hidden,
               std::uint64_t seed);
  LiliProvider(std::shared_ptr<LiliNets<S>> nets, int latent_dim);

  void begin_episode(int episode_id) override;
  void observe_transition(const Transition& tr) override;
  Eigen::VectorXd latent_for_acting(const env::CopassEnv&,
                                    const env::Observation&,
                                    bool deterministic) override;
  void batch_latents(const TrajectoryStore& store,
                     std::span<const std::int64_t> anchors, nn::Mat<S>& v,
                     nn::Mat<S>& v_next) override;
  ProviderLosses update(const TrajectoryStore& store,
                        std::span<const std::int64_t> anchors) override;
  std::unique_ptr<LatentProvider<S>> make_eval_clone() override;

  // Deterministic (mean) latent of an episode; exposed for tests.
  Eigen::VectorXd encode_episode(std::span<const Transition* const> eps) const;

 private:
  std::shared_ptr<LiliNets<S>> nets_;
  std::vector<Transition> prev_episode_, current_episode_;
  Eigen::VectorXd episode_latent_;
};

// ---- BeTrans ---------------------------------------------------------------

template <class S>
struct BetransNets {
  model::BehaviourTransformer<S> bt;
  model::DynamicsNetwork<S> dn;
  Rng rng;  // latent-draw stream used during training updates

  BetransNets(model::BTConfig btc, model::DNConfig dnc, std::uint64_t seed)
      : bt(btc, derive_seed(seed, 1)), dn(dnc, derive_seed(seed, 2)),
        rng(derive_seed(seed, 3)) {}
};

template <class S>
class BetransProvider final : public LatentProvider<S> {
 public:
  BetransProvider(model::BTConfig btc, model::DNConfig dnc, std::uint64_t seed);
  BetransProvider(std::shared_ptr<BetransNets<S>> nets);

  void observe_transition(const Transition& tr) override;
  Eigen::VectorXd latent_for_acting(const env::CopassEnv&,
                                    const env::Observation& obs,
                                    bool deterministic) override;
  void batch_latents(const TrajectoryStore& store,
                     std::span<const std::int64_t> anchors, nn::Mat<S>& v,
                     nn::Mat<S>& v_next) override;
  // J_DN = J_sr + kl_weight·J_KL into the transformer, J_sr into the DN.
  ProviderLosses update(const TrajectoryStore& store,
                        std::span<const std::int64_t> anchors) override;
  std::unique_ptr<LatentProvider<S>> make_eval_clone() override;

  model::BehaviourTransformer<S>& transformer() { return nets_->bt; }
  model::DynamicsNetwork<S>& dynamics() { return nets_->dn; }
  std::shared_ptr<BetransNets<S>> nets() { return nets_; }

 private:
  std::shared_ptr<BetransNets<S>> nets_;
  std::deque<Transition> tail_;  // recent history for window building
};

}  // namespace betrans::baselines

#include "betrans/baselines/latent_providers_impl.hpp"
