#include <doctest.h>

#include "betrans/replay/trajectory_store.hpp"

#include <filesystem>

using namespace betrans;
using namespace betrans::replay;

namespace {

Transition make_tr(std::int64_t t, int episode = 0, Real r = 1.0, int a = 2,
                   bool d = false) {
  Transition tr;
  for (int i = 0; i < env::Observation::kDim; ++i) {
    tr.s[i] = 0.01 * t + 0.001 * i;
    tr.s_next[i] = 0.01 * (t + 1) + 0.001 * i;
  }
  tr.a = a;
  tr.r = r;
  tr.d = d;
  tr.t_global = t;
  tr.episode_id = episode;
  tr.true_latent = Eigen::VectorXd::Zero(4);
  tr.true_latent(t % 4) = 1.0;
  return tr;
}

}  // namespace

TEST_CASE("push/read-back identity and FIFO eviction") {
  TrajectoryStore store(10, 25);
  for (int t = 0; t < 11; ++t) store.push(make_tr(t));
  CHECK(store.size() == 10);
  CHECK(store.first_index() == 1);
  CHECK(store.last_index() == 10);
  const Transition& tr = store.at(5);
  CHECK(tr.t_global == 5);
  CHECK(tr.s[0] == doctest::Approx(0.05));
  CHECK_THROWS_AS(store.at(0), std::out_of_range);
}

TEST_CASE("encode/decode round-trip on all token types") {
  Transition tr = make_tr(3, 1, -10.0, 1, true);
  StepTokens st = encode_step(tr);
  CHECK(st.r == doctest::Approx(-1.0));  // reward_miss scales to -1
  CHECK(st.d == doctest::Approx(1.0));
  Transition back = decode_step(st);
  CHECK(back.a == tr.a);
  CHECK(back.r == doctest::Approx(tr.r));
  CHECK(back.d == tr.d);
  for (int i = 0; i < env::Observation::kDim; ++i) {
    CHECK(back.s[i] == doctest::Approx(tr.s[i]));
    CHECK(back.s_next[i] == doctest::Approx(tr.s_next[i]));
  }
  // one-hot action encoding lives in the model embed; the token keeps the
  // index
  CHECK(st.a == 1);
}

TEST_CASE("window_at: full history, padding arithmetic, gap safety") {
  TrajectoryStore store(1000, 25);
  for (int t = 0; t <= 30; ++t) store.push(make_tr(t));

  TokenWindow w = store.window_at(30);
  CHECK(w.n_tokens() == 125);
  CHECK(w.n_steps() == 25);
  for (const auto& st : w.steps) CHECK(!st.pad);
  // chronological: first slot is t=6, last is t=30
  CHECK(w.steps.front().s[0] == doctest::Approx(0.06));
  CHECK(w.steps.back().s[0] == doctest::Approx(0.30));

  TokenWindow w2 = store.window_at(3);
  CHECK(w2.n_tokens() == 125);
  int pads = 0;
  for (const auto& st : w2.steps) pads += st.pad ? 1 : 0;
  CHECK(pads == 21);  // 4 real timesteps (0..3), 21 left pads
  CHECK(w2.steps.back().s[0] == doctest::Approx(0.03));

  CHECK_THROWS_AS(store.window_at(31), std::out_of_range);
}

TEST_CASE("windows cross episode boundaries and carry the done token") {
  TrajectoryStore store(1000, 25);
  for (int t = 0; t < 40; ++t)
    store.push(make_tr(t, t < 20 ? 0 : 1, 1.0, 0, t == 19));
  TokenWindow w = store.window_at(25);
  // step t=19 (done) sits inside the window
  bool has_done = false;
  for (const auto& st : w.steps) has_done = has_done || st.d > 0.5;
  CHECK(has_done);
}

TEST_CASE("next_window_at ends with the anchor's next state as partial step") {
  TrajectoryStore store(1000, 25);
  for (int t = 0; t < 40; ++t) store.push(make_tr(t));
  TokenWindow w = store.next_window_at(39);
  CHECK(w.steps.back().partial);
  CHECK(w.steps.back().s[0] == doctest::Approx(0.40));
  // second-to-last step is the anchor transition itself
  CHECK(w.steps[23].s[0] == doctest::Approx(0.39));
}

TEST_CASE("no future leakage: window tokens never exceed the anchor time") {
  TrajectoryStore store(1000, 25);
  for (int t = 0; t < 60; ++t) store.push(make_tr(t));
  TokenWindow w = store.window_at(42);
  for (const auto& st : w.steps)
    if (!st.pad) CHECK(st.s[0] <= 0.42 + 1e-12);
}

TEST_CASE("sample_batch: size, replacement on tiny buffers, uniform anchors") {
  TrajectoryStore store(1000, 25);
  store.push(make_tr(0));
  Rng rng(3);
  auto batch = store.sample_batch(32, rng);
  CHECK(batch.size() == 32);
  for (auto& [w, tr] : batch) CHECK(tr.t_global == 0);

  // chi-square uniformity over 100 cells
  TrajectoryStore big(1000, 25);
  for (int t = 0; t < 100; ++t) big.push(make_tr(t));
  std::vector<int> counts(100, 0);
  const int n = 100000;
  for (auto a : big.sample_anchors(n, rng)) counts[a] += 1;
  double expected = n / 100.0;
  double chi2 = 0;
  for (int cnt : counts) chi2 += (cnt - expected) * (cnt - expected) / expected;
  // 99 dof: mean 99, sd ~14; far tail bound
  CHECK(chi2 < 160.0);
}

TEST_CASE("global index monotone across episodes") {
  TrajectoryStore store(1000, 25);
  for (int t = 0; t < 50; ++t) store.push(make_tr(t, t / 10));
  for (int t = 1; t < 50; ++t)
    CHECK(store.at(t).t_global == store.at(t - 1).t_global + 1);
}

TEST_CASE("episode lookup returns contiguous transitions") {
  TrajectoryStore store(1000, 25);
  for (int t = 0; t < 30; ++t) store.push(make_tr(t, t / 10));
  auto ep1 = store.episode(1);
  CHECK(ep1.size() == 10);
  CHECK(ep1.front()->t_global == 10);
  CHECK(ep1.back()->t_global == 19);
}

TEST_CASE("serialization round-trips the buffer and config hash") {
  TrajectoryStore store(1000, 25);
  for (int t = 0; t < 20; ++t) store.push(make_tr(t, t / 7, t * 0.5, t % 4, t == 13));
  auto path = std::filesystem::temp_directory_path() / "betrans_buf_test.bin";
  store.save(path.string(), 0xabcdef1234ull);
  TrajectoryStore loaded(1000, 25);
  std::uint64_t h = loaded.load(path.string());
  CHECK(h == 0xabcdef1234ull);
  REQUIRE(loaded.size() == store.size());
  for (int t = 0; t < 20; ++t) {
    const auto &a = store.at(t), &b = loaded.at(t);
    CHECK(a.r == b.r);
    CHECK(a.a == b.a);
    CHECK(a.d == b.d);
    CHECK(a.episode_id == b.episode_id);
    for (int i = 0; i < env::Observation::kDim; ++i) CHECK(a.s[i] == b.s[i]);
    CHECK((a.true_latent - b.true_latent).norm() == 0.0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("build_window with a current observation marks a partial final step") {
  std::vector<Transition> hist;
  for (int t = 0; t < 5; ++t) hist.push_back(make_tr(t));
  env::Observation cur;
  cur.v.fill(0.5);
  TokenWindow w = build_window(hist, 25, &cur);
  CHECK(w.n_steps() == 25);
  CHECK(w.steps.back().partial);
  CHECK(w.steps.back().s[0] == doctest::Approx(0.5));
  int real = 0;
  for (auto& st : w.steps) real += st.pad ? 0 : 1;
  CHECK(real == 6);  // 5 history + 1 partial
  CHECK(w.anchor_state_pos() == 120);
}
