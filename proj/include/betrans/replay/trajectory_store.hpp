#pragma once

#include "betrans/common.hpp"
#include "betrans/env/copass.hpp"

#include <Eigen/Dense>

#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace betrans::replay {

using env::Observation;

// Rewards are carried in token space scaled so the default miss penalty -10
// maps to -1.
constexpr Real kRewardScale = 0.1;

struct Transition {
  Observation s;
  int a = 0;
  Real r = 0.0;
  Observation s_next;
  bool d = false;
  std::int64_t t_global = 0;
  int episode_id = 0;
  Eigen::VectorXd true_latent;  // one-hot goal, diagnostic/oracle only
};

// One timestep slot of a token window: the five typed tokens
// (s, a, r, s', d) plus padding flags.
struct StepTokens {
  bool pad = true;      // whole timestep is left-padding
  bool partial = false; // only the state token is real (inference-time step)
  std::array<Real, Observation::kDim> s{};
  int a = 0;
  Real r = 0.0;  // already scaled by kRewardScale
  std::array<Real, Observation::kDim> s_next{};
  Real d = 0.0;
};

// Encode one transition into its five typed raw tokens.
StepTokens encode_step(const Transition& tr);
// Inverse of encode_step for the real (non-pad) fields.
Transition decode_step(const StepTokens& st);

struct TokenWindow {
  static constexpr int kTokensPerStep = 5;
  std::vector<StepTokens> steps;  // chronological, length = block_steps

  int n_steps() const { return static_cast<int>(steps.size()); }
  int n_tokens() const { return kTokensPerStep * n_steps(); }
  // Token position of the final (current) state token, where the latent and
  // action heads are read.
  int anchor_state_pos() const { return (n_steps() - 1) * kTokensPerStep; }
};

// Builds a window from up to block_steps trailing transitions, optionally
// terminated by a current (incomplete) state-only step. Left-pads when the
// history is shorter than the block.
TokenWindow build_window(std::span<const Transition> tail, int block_steps,
                         const Observation* current = nullptr);

class TrajectoryStore {
 public:
  explicit TrajectoryStore(std::size_t capacity = 1'000'000,
                           int block_steps = 25);

  void push(const Transition& tr);

  std::size_t size() const { return buf_.size(); }
  bool empty() const { return buf_.empty(); }
  std::int64_t first_index() const { return first_; }
  std::int64_t last_index() const { return first_ + static_cast<std::int64_t>(buf_.size()) - 1; }
  const Transition& at(std::int64_t t_global) const;

  // Look-back window for the timesteps (t_global - block + 1 .. t_global).
  TokenWindow window_at(std::int64_t t_global) const;

  // Window whose final step is the (incomplete) state s_next of t_global —
  // i.e. the acting-time window at t_global + 1.
  TokenWindow next_window_at(std::int64_t t_global) const;

  std::vector<std::int64_t> sample_anchors(int batch_size, Rng& rng) const;
  std::vector<std::pair<TokenWindow, Transition>> sample_batch(int batch_size,
                                                               Rng& rng) const;

  // Transitions of one episode still fully resident in the buffer.
  std::vector<const Transition*> episode(int episode_id) const;

  int block_steps() const { return block_steps_; }

  void save(const std::string& path, std::uint64_t config_hash) const;
  // Returns the stored config hash.
  std::uint64_t load(const std::string& path);

 private:
  std::size_t capacity_;
  int block_steps_;
  std::deque<Transition> buf_;
  std::int64_t first_ = 0;  // t_global of buf_.front()
};

}  // namespace betrans::replay
