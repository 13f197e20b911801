#include "betrans/replay/trajectory_store.hpp"

#include <fstream>

namespace betrans::replay {

StepTokens encode_step(const Transition& tr) {
  StepTokens st;
  st.pad = false;
  st.partial = false;
  st.s = tr.s.v;
  st.a = tr.a;
  st.r = tr.r * kRewardScale;
  st.s_next = tr.s_next.v;
  st.d = tr.d ? 1.0 : 0.0;
  return st;
}

Transition decode_step(const StepTokens& st) {
  Transition tr;
  tr.s.v = st.s;
  tr.a = st.a;
  tr.r = st.r / kRewardScale;
  tr.s_next.v = st.s_next;
  tr.d = st.d >= 0.5;
  return tr;
}

TokenWindow build_window(std::span<const Transition> tail, int block_steps,
                         const Observation* current) {
  TokenWindow w;
  w.steps.resize(block_steps);
  int slots = block_steps - (current ? 1 : 0);
  int take = std::min<int>(slots, static_cast<int>(tail.size()));
  int out = slots - take;  // leading pads
  for (int i = 0; i < take; ++i)
    w.steps[out + i] = encode_step(tail[tail.size() - take + i]);
  if (current) {
    StepTokens st;
    st.pad = false;
    st.partial = true;
    st.s = current->v;
    w.steps[block_steps - 1] = st;
  }
  return w;
}

TrajectoryStore::TrajectoryStore(std::size_t capacity, int block_steps)
    : capacity_(capacity), block_steps_(block_steps) {
  if (capacity_ == 0) throw ConfigError("buffer capacity must be positive");
}

void TrajectoryStore::push(const Transition& tr) {
  buf_.push_back(tr);
  if (buf_.size() > capacity_) {
    buf_.pop_front();
    ++first_;
  }
}

const Transition& TrajectoryStore::at(std::int64_t t_global) const {
  if (t_global < first_ || t_global > last_index())
    throw std::out_of_range("t_global outside the buffer");
  return buf_[static_cast<std::size_t>(t_global - first_)];
}

TokenWindow TrajectoryStore::window_at(std::int64_t t_global) const {
  if (t_global < first_ || t_global > last_index())
    throw std::out_of_range("t_global outside the buffer");
  std::int64_t lo = std::max(first_, t_global - block_steps_ + 1);
  int count = static_cast<int>(t_global - lo + 1);
  std::vector<Transition> tmp;
  tmp.reserve(count);
  for (std::int64_t t = lo; t <= t_global; ++t)
    tmp.push_back(buf_[static_cast<std::size_t>(t - first_)]);
  return build_window(tmp, block_steps_, nullptr);
}

TokenWindow TrajectoryStore::next_window_at(std::int64_t t_global) const {
  if (t_global < first_ || t_global > last_index())
    throw std::out_of_range("t_global outside the buffer");
  std::int64_t lo = std::max(first_, t_global - block_steps_ + 2);
  std::vector<Transition> tmp;
  for (std::int64_t t = lo; t <= t_global; ++t)
    tmp.push_back(buf_[static_cast<std::size_t>(t - first_)]);
  const Observation& cur = at(t_global).s_next;
  return build_window(tmp, block_steps_, &cur);
}

std::vector<std::int64_t> TrajectoryStore::sample_anchors(int batch_size,
                                                          Rng& rng) const {
  if (buf_.empty()) throw UsageError("sampling from an empty buffer");
  std::uniform_int_distribution<std::int64_t> d(first_, last_index());
  std::vector<std::int64_t> out(batch_size);
  for (auto& t : out) t = d(rng);
  return out;
}

std::vector<std::pair<TokenWindow, Transition>> TrajectoryStore::sample_batch(
    int batch_size, Rng& rng) const {
  auto anchors = sample_anchors(batch_size, rng);
  std::vector<std::pair<TokenWindow, Transition>> out;
  out.reserve(anchors.size());
  for (auto t : anchors) out.emplace_back(window_at(t), at(t));
  return out;
}

std::vector<const Transition*> TrajectoryStore::episode(int episode_id) const {
  std::vector<const Transition*> out;
  for (const auto& tr : buf_)
    if (tr.episode_id == episode_id) out.push_back(&tr);
  return out;
}

namespace {
constexpr std::uint32_t kMagic = 0x42545242;  // "BTRB"
constexpr std::uint32_t kVersion = 1;

void write_obs(std::ofstream& os, const Observation& o) {
  os.write(reinterpret_cast<const char*>(o.v.data()),
           sizeof(Real) * Observation::kDim);
}
void read_obs(std::ifstream& is, Observation& o) {
  is.read(reinterpret_cast<char*>(o.v.data()), sizeof(Real) * Observation::kDim);
}
}  // namespace

void TrajectoryStore::save(const std::string& path,
                           std::uint64_t config_hash) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UsageError("cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(&kMagic), sizeof(kMagic));
  os.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
  os.write(reinterpret_cast<const char*>(&config_hash), sizeof(config_hash));
  std::uint64_t n = buf_.size();
  os.write(reinterpret_cast<const char*>(&n), sizeof(n));
  os.write(reinterpret_cast<const char*>(&first_), sizeof(first_));
  for (const auto& tr : buf_) {
    write_obs(os, tr.s);
    write_obs(os, tr.s_next);
    os.write(reinterpret_cast<const char*>(&tr.a), sizeof(tr.a));
    os.write(reinterpret_cast<const char*>(&tr.r), sizeof(tr.r));
    char d = tr.d ? 1 : 0;
    os.write(&d, 1);
    os.write(reinterpret_cast<const char*>(&tr.t_global), sizeof(tr.t_global));
    os.write(reinterpret_cast<const char*>(&tr.episode_id),
             sizeof(tr.episode_id));
    std::int32_t k = static_cast<std::int32_t>(tr.true_latent.size());
    os.write(reinterpret_cast<const char*>(&k), sizeof(k));
    os.write(reinterpret_cast<const char*>(tr.true_latent.data()),
             sizeof(Real) * k);
  }
}

std::uint64_t TrajectoryStore::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("cannot open " + path);
  std::uint32_t magic = 0, version = 0;
  std::uint64_t hash = 0, n = 0;
  is.read(reinterpret_cast<char*>(&magic), sizeof(magic));
  is.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (magic != kMagic || version != kVersion)
    throw UsageError("unrecognized buffer file format: " + path);
  is.read(reinterpret_cast<char*>(&hash), sizeof(hash));
  is.read(reinterpret_cast<char*>(&n), sizeof(n));
  is.read(reinterpret_cast<char*>(&first_), sizeof(first_));
  buf_.clear();
  for (std::uint64_t i = 0; i < n; ++i) {
    Transition tr;
    read_obs(is, tr.s);
    read_obs(is, tr.s_next);
    is.read(reinterpret_cast<char*>(&tr.a), sizeof(tr.a));
    is.read(reinterpret_cast<char*>(&tr.r), sizeof(tr.r));
    char d = 0;
    is.read(&d, 1);
    tr.d = d != 0;
    is.read(reinterpret_cast<char*>(&tr.t_global), sizeof(tr.t_global));
    is.read(reinterpret_cast<char*>(&tr.episode_id), sizeof(tr.episode_id));
    std::int32_t k = 0;
    is.read(reinterpret_cast<char*>(&k), sizeof(k));
    tr.true_latent.resize(k);
    is.read(reinterpret_cast<char*>(tr.true_latent.data()), sizeof(Real) * k);
    buf_.push_back(std::move(tr));
  }
  if (!is) throw UsageError("truncated buffer file: " + path);
  return hash;
}

}  // namespace betrans::replay
