#include <doctest.h>

#include "betrans/baselines/latent_providers.hpp"

using namespace betrans;
using namespace betrans::baselines;
using replay::Transition;
using replay::TrajectoryStore;

namespace {

// Synthetic episodes whose transitions depend on a per-episode goal row:
// observations carry goal-correlated structure the encoders can pick up.
void fill_goal_episodes(TrajectoryStore& store, const std::vector<int>& goals,
                        int ep_len, int n_targets, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 0.05);
  std::uniform_int_distribution<int> au(0, 3);
  std::int64_t t = store.empty() ? 0 : store.last_index() + 1;
  for (std::size_t e = 0; e < goals.size(); ++e) {
    double g = (2.0 * goals[e]) / (n_targets - 1) - 1.0;
    for (int i = 0; i < ep_len; ++i, ++t) {
      Transition tr;
      for (int j = 0; j < env::Observation::kDim; ++j) {
        tr.s[j] = 0.3 * g + nd(rng);
        tr.s_next[j] = 0.3 * g + nd(rng);
      }
      tr.s[1] = g;  // ball row tracks the goal
      tr.s_next[1] = g + nd(rng);
      tr.a = au(rng);
      tr.r = g * 0.1 + nd(rng);
      tr.d = i == ep_len - 1;
      tr.t_global = t;
      tr.episode_id = static_cast<int>(e);
      tr.true_latent = Eigen::VectorXd::Zero(n_targets);
      tr.true_latent(goals[e]) = 1.0;
      store.push(tr);
    }
  }
}

}  // namespace

TEST_CASE("method names round-trip; unknown method rejected") {
  for (auto m : {Method::kOracle, Method::kSac, Method::kLili,
                 Method::kRnnLili, Method::kBetrans})
    CHECK(method_from_string(method_name(m)) == m);
  CHECK_THROWS_AS(method_from_string("dqn"), ConfigError);
}

TEST_CASE("zero provider always emits zeros") {
  ZeroProvider<double> z(5);
  TrajectoryStore store(100, 4);
  Rng rng(1);
  fill_goal_episodes(store, {0, 1}, 6, 4, rng);
  std::vector<std::int64_t> anchors = {0, 3, 7};
  nn::Mat<double> v, vn;
  z.batch_latents(store, anchors, v, vn);
  CHECK(v.cwiseAbs().maxCoeff() == 0.0);
  CHECK(vn.cwiseAbs().maxCoeff() == 0.0);
  CHECK(v.rows() == 3);
  CHECK(v.cols() == 5);
}

TEST_CASE("oracle provider passes through the stored one-hot latents") {
  OracleProvider<double> oracle(4);
  TrajectoryStore store(100, 4);
  Rng rng(2);
  fill_goal_episodes(store, {2, 0}, 5, 4, rng);
  std::vector<std::int64_t> anchors = {1, 4, 6};
  nn::Mat<double> v, vn;
  oracle.batch_latents(store, anchors, v, vn);
  CHECK(v(0, 2) == doctest::Approx(1.0));
  CHECK(v(1, 2) == doctest::Approx(1.0));
  CHECK(v(2, 0) == doctest::Approx(1.0));
  // next-step latent for a terminal anchor falls back to the anchor's own
  nn::Mat<double> v2, vn2;
  std::vector<std::int64_t> last = {4};
  oracle.batch_latents(store, last, v2, vn2);
  CHECK((v2 - vn2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("oracle latent tracks the live environment mid-episode") {
  env::EnvConfig ec;
  ec.n_targets = 4;
  ec.travel_steps = 3;  // reactive reach covers the whole lattice
  ec.seed = 9;
  env::CopassEnv env(ec);
  human::HumanProfile hp;
  hp.w_c = 0.2;
  hp.w_lf = 0.2;
  hp.w_hf = 0.6;
  hp.rng_seed = 11;
  human::HumanAgent h(hp);
  OracleProvider<double> oracle(4);
  int seen_change = 0;
  for (int ep = 0; ep < 5; ++ep) {
    env::Observation obs = env.reset(&h);
    Eigen::VectorXd first = oracle.latent_for_acting(env, obs, true);
    CHECK(first.sum() == doctest::Approx(1.0));
    CHECK(first(env.true_goal()) == doctest::Approx(1.0));
    int before = env.true_goal();
    while (!env.done()) {
      // keep the rally alive so goal redraws happen at robot hits
      const env::EnvState& s = env.state();
      int action = env::kRotateCw;
      if (s.vel_x < 0) {
        Real arrival = s.ball_y + s.vel_y * s.ball_x;
        if (s.robot_paddle_y + 0.5 < arrival) action = env::kUp;
        else if (s.robot_paddle_y - 0.5 > arrival) action = env::kDown;
      }
      auto out = env.step(action);
      Eigen::VectorXd v = oracle.latent_for_acting(env, out.observation, true);
      CHECK(v(env.true_goal()) == doctest::Approx(1.0));
      if (env.true_goal() != before) {
        ++seen_change;
        before = env.true_goal();
      }
    }
  }
  CHECK(seen_change > 0);
}

TEST_CASE("lili: cold start zero, constant within an episode") {
  LiliProvider<double> lili(4, 16, 32, 1e-3, 1.0, false, 16, 77);
  env::EnvConfig ec;
  ec.n_targets = 4;
  ec.travel_steps = 2;
  env::CopassEnv env(ec);
  lili.begin_episode(0);
  env::Observation obs;
  Eigen::VectorXd v0 = lili.latent_for_acting(env, obs, true);
  CHECK(v0.cwiseAbs().maxCoeff() == 0.0);

  // feed one episode, then the latent is fixed across the next episode
  Rng rng(5);
  TrajectoryStore store(100, 4);
  fill_goal_episodes(store, {3}, 6, 4, rng);
  for (int t = 0; t < 6; ++t) lili.observe_transition(store.at(t));
  lili.begin_episode(1);
  Eigen::VectorXd v1 = lili.latent_for_acting(env, obs, true);
  Eigen::VectorXd v2 = lili.latent_for_acting(env, obs, true);
  CHECK((v1 - v2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(v1.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("lili VAE training separates episode latents by goal") {
  const int n_targets = 4, ep_len = 8;
  TrajectoryStore store(4000, 4);
  Rng rng(6);
  std::vector<int> goals;
  for (int e = 0; e < 60; ++e) goals.push_back((e * 7) % n_targets);
  fill_goal_episodes(store, goals, ep_len, n_targets, rng);

  LiliProvider<double> lili(3, ep_len, 64, 2e-3, 1e-3, false, 16, 99);
  Rng arng(7);
  for (int it = 0; it < 400; ++it) {
    auto anchors = store.sample_anchors(16, arng);
    lili.update(store, anchors);
  }
  // encode each episode; latents should cluster by goal
  std::vector<Eigen::VectorXd> zs(goals.size());
  for (std::size_t e = 0; e < goals.size(); ++e)
    zs[e] = lili.encode_episode(store.episode(static_cast<int>(e)));
  double intra = 0, inter = 0;
  int n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < zs.size(); ++i)
    for (std::size_t j = i + 1; j < zs.size(); ++j) {
      double d = (zs[i] - zs[j]).norm();
      if (goals[i] == goals[j]) {
        intra += d;
        ++n_intra;
      } else {
        inter += d;
        ++n_inter;
      }
    }
  intra /= n_intra;
  inter /= n_inter;
  CHECK(intra < inter);
}

TEST_CASE("rnn-lili: order sensitivity and single-step determinism") {
  LiliProvider<double> rnn(4, 16, 32, 1e-3, 1.0, true, 24, 111);
  Rng rng(8);
  TrajectoryStore store(100, 4);
  fill_goal_episodes(store, {1}, 6, 4, rng);
  auto eps = store.episode(0);
  Eigen::VectorXd z = rnn.encode_episode(eps);
  // permuting the order changes the encoding (unlike an average)
  std::vector<const Transition*> rev(eps.rbegin(), eps.rend());
  Eigen::VectorXd zrev = rnn.encode_episode(rev);
  CHECK((z - zrev).cwiseAbs().maxCoeff() > 1e-9);

  // single-transition episode: latent is a pure function of that transition
  std::vector<const Transition*> one = {eps[2]};
  Eigen::VectorXd za = rnn.encode_episode(one);
  Eigen::VectorXd zb = rnn.encode_episode(one);
  CHECK((za - zb).cwiseAbs().maxCoeff() == 0.0);

  // cold start
  rnn.begin_episode(0);
  env::EnvConfig ec;
  ec.n_targets = 4;
  ec.travel_steps = 2;
  env::CopassEnv env(ec);
  env::Observation obs;
  CHECK(rnn.latent_for_acting(env, obs, true).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rnn-lili training reduces its reconstruction loss") {
  const int n_targets = 4, ep_len = 6;
  TrajectoryStore store(2000, 4);
  Rng rng(9);
  std::vector<int> goals;
  for (int e = 0; e < 40; ++e) goals.push_back(e % n_targets);
  fill_goal_episodes(store, goals, ep_len, n_targets, rng);
  LiliProvider<double> rnn(3, ep_len, 32, 2e-3, 0.0, true, 16, 123);
  Rng arng(10);
  double first = 0, last = 0;
  for (int it = 0; it < 150; ++it) {
    auto anchors = store.sample_anchors(16, arng);
    auto l = rnn.update(store, anchors);
    if (it == 0) first = l.sr;
    last = l.sr;
  }
  CHECK(last < first);
}

TEST_CASE("betrans provider: window tail, latent shape, eval clone shares nets") {
  model::BTConfig btc;
  btc.embed_dim = 16;
  btc.n_heads = 4;
  btc.n_layers = 1;
  btc.block_steps = 4;
  btc.latent_dim = 4;
  model::DNConfig dnc;
  dnc.hidden = 16;
  dnc.latent_dim = 4;
  BetransProvider<double> bp(btc, dnc, 555);

  env::EnvConfig ec;
  ec.n_targets = 4;
  ec.travel_steps = 2;
  env::CopassEnv env(ec);
  env::Observation obs;
  obs.v.fill(0.2);
  Eigen::VectorXd v = bp.latent_for_acting(env, obs, true);
  CHECK(v.size() == 4);
  CHECK(v.sum() == doctest::Approx(1.0));  // discrete one-hot

  auto clone = bp.make_eval_clone();
  Eigen::VectorXd vc = clone->latent_for_acting(env, obs, true);
  CHECK((v - vc).cwiseAbs().maxCoeff() == 0.0);  // same nets, same history
}

TEST_CASE("betrans fine-tune moves transformer parameters (gradient flows end to end)") {
  model::BTConfig btc;
  btc.embed_dim = 16;
  btc.n_heads = 4;
  btc.n_layers = 1;
  btc.block_steps = 4;
  btc.latent_dim = 4;
  btc.latent_mode = model::LatentMode::kContinuous;
  btc.lr_bt = 1e-3;
  model::DNConfig dnc;
  dnc.hidden = 16;
  dnc.latent_dim = 4;
  BetransProvider<double> bp(btc, dnc, 556);

  TrajectoryStore store(500, 4);
  Rng rng(11);
  fill_goal_episodes(store, {0, 3, 1, 2}, 6, 4, rng);
  std::vector<nn::Mat<double>> before;
  for (auto& p : bp.transformer().params().params()) before.push_back(p.value());
  auto anchors = store.sample_anchors(8, rng);
  auto losses = bp.update(store, anchors);
  CHECK(losses.sr > 0.0);
  double moved = 0.0;
  auto& params = bp.transformer().params().params();
  for (std::size_t i = 0; i < params.size(); ++i)
    moved = std::max(moved,
                     (params[i].value() - before[i]).cwiseAbs().maxCoeff());
  CHECK(moved > 0.0);
}

TEST_CASE("betrans batch latents have anchor and next shapes") {
  model::BTConfig btc;
  btc.embed_dim = 16;
  btc.n_heads = 4;
  btc.n_layers = 1;
  btc.block_steps = 4;
  btc.latent_dim = 4;
  model::DNConfig dnc;
  dnc.hidden = 16;
  dnc.latent_dim = 4;
  BetransProvider<double> bp(btc, dnc, 557);
  TrajectoryStore store(500, 4);
  Rng rng(12);
  fill_goal_episodes(store, {0, 2}, 6, 4, rng);
  std::vector<std::int64_t> anchors = {0, 5, 11};
  nn::Mat<double> v, vn;
  bp.batch_latents(store, anchors, v, vn);
  CHECK(v.rows() == 3);
  CHECK(v.cols() == 4);
  CHECK(vn.rows() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(v.row(i).sum() == doctest::Approx(1.0));
    CHECK(vn.row(i).sum() == doctest::Approx(1.0));
  }
}
