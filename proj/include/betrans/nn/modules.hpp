#pragma once

#include "betrans/common.hpp"
#include "betrans/nn/autodiff.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace betrans::nn {

// A parameter is a leaf node shared across tapes; grads accumulate until the
// optimizer consumes them.
template <class S>
class Param {
 public:
  Param() = default;
  explicit Param(Mat<S> v) : n_(std::make_shared<Node<S>>()) {
    n_->val = std::move(v);
    n_->requires_grad = true;
    n_->is_param = true;
  }
  Var<S> use() const { return Var<S>(n_); }
  Mat<S>& value() { return n_->val; }
  const Mat<S>& value() const { return n_->val; }
  Mat<S>& grad() { n_->ensure_grad(); return n_->grad; }
  std::shared_ptr<Node<S>> node() const { return n_; }

 private:
  std::shared_ptr<Node<S>> n_;
};

template <class S>
class ParamGroup {
 public:
  Param<S> add(Mat<S> init) {
    Param<S> p(std::move(init));
    params_.push_back(p);
    return p;
  }
  void absorb(const ParamGroup<S>& other) {
    for (auto& p : other.params_) params_.push_back(p);
  }
  std::vector<Param<S>>& params() { return params_; }
  const std::vector<Param<S>>& params() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.node()->grad.resize(0, 0);
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto& p : params_) n += p.value().size();
    return n;
  }

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  std::vector<Param<S>> params_;
};

template <class S>
class Adam {
 public:
  Adam() = default;
  Adam(ParamGroup<S>& group, S lr, S beta1 = S(0.9), S beta2 = S(0.999),
       S eps = S(1e-8))
      : group_(&group), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (auto& p : group.params()) {
      m_.push_back(Mat<S>::Zero(p.value().rows(), p.value().cols()));
      v_.push_back(Mat<S>::Zero(p.value().rows(), p.value().cols()));
    }
  }

  void step() {
    ++t_;
    const S bc1 = S(1) - std::pow(b1_, S(t_));
    const S bc2 = S(1) - std::pow(b2_, S(t_));
    auto& ps = group_->params();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      auto& g = ps[i].node()->grad;
      if (g.size() == 0) continue;  // untouched this step
      m_[i] = b1_ * m_[i] + (S(1) - b1_) * g;
      v_[i] = (b2_ * v_[i].array() + (S(1) - b2_) * g.array().square()).matrix();
      ps[i].value().array() -=
          lr_ * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps_);
    }
  }

  S lr() const { return lr_; }
  void set_lr(S lr) { lr_ = lr; }

 private:
  ParamGroup<S>* group_ = nullptr;
  S lr_ = S(1e-3), b1_ = S(0.9), b2_ = S(0.999), eps_ = S(1e-8);
  std::int64_t t_ = 0;
  std::vector<Mat<S>> m_, v_;
};

// ---- initializers -------------------------------------------------------

template <class S>
Mat<S> normal_init(int rows, int cols, S std, Rng& rng) {
  std::normal_distribution<double> d(0.0, static_cast<double>(std));
  Mat<S> m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = static_cast<S>(d(rng));
  return m;
}

template <class S>
Mat<S> fanin_uniform_init(int rows, int cols, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> d(-bound, bound);
  Mat<S> m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = static_cast<S>(d(rng));
  return m;
}

// ---- layers -------------------------------------------------------------

// y = x W + b with x as rows of samples/positions.
template <class S>
struct Linear {
  Param<S> W, b;

  Linear() = default;
  Linear(int in, int out, ParamGroup<S>& g, Rng& rng, S wstd = S(-1)) {
    Mat<S> w = wstd > S(0) ? normal_init<S>(in, out, wstd, rng)
                           : fanin_uniform_init<S>(in, out, rng);
    W = g.add(std::move(w));
    b = g.add(Mat<S>::Zero(1, out));
  }

  Var<S> operator()(Tape<S>& t, Var<S> x) const {
    return add_rowvec(t, matmul(t, x, W.use()), b.use());
  }
};

template <class S>
struct LayerNorm {
  Param<S> gain, bias;

  LayerNorm() = default;
  LayerNorm(int dim, ParamGroup<S>& g) {
    gain = g.add(Mat<S>::Ones(1, dim));
    bias = g.add(Mat<S>::Zero(1, dim));
  }

  Var<S> operator()(Tape<S>& t, Var<S> x) const {
    return layernorm_rows(t, x, gain.use(), bias.use());
  }
};

// ReLU MLP with arbitrary hidden sizes, identity output.
template <class S>
struct Mlp {
  std::vector<Linear<S>> layers;

  Mlp() = default;
  Mlp(int in, const std::vector<int>& hidden, int out, ParamGroup<S>& g,
      Rng& rng) {
    int prev = in;
    for (int h : hidden) {
      layers.emplace_back(prev, h, g, rng);
      prev = h;
    }
    layers.emplace_back(prev, out, g, rng);
  }

  Var<S> operator()(Tape<S>& t, Var<S> x) const {
    for (std::size_t i = 0; i + 1 < layers.size(); ++i)
      x = relu(t, layers[i](t, x));
    return layers.back()(t, x);
  }

  // Tape-free forward for action selection and target computations.
  Mat<S> plain(Mat<S> x) const {
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
      x = ((x * layers[i].W.value()).rowwise() + layers[i].b.value().row(0))
              .cwiseMax(S(0));
    }
    return (x * layers.back().W.value()).rowwise() +
           layers.back().b.value().row(0);
  }
};

// Single GRU cell; step() consumes a 1×in input row and 1×hidden state row.
template <class S>
struct GruCell {
  Linear<S> zx, zh, rx, rh, hx, hh;
  int hidden = 0;

  GruCell() = default;
  GruCell(int in, int hid, ParamGroup<S>& g, Rng& rng) : hidden(hid) {
    zx = Linear<S>(in, hid, g, rng);
    zh = Linear<S>(hid, hid, g, rng);
    rx = Linear<S>(in, hid, g, rng);
    rh = Linear<S>(hid, hid, g, rng);
    hx = Linear<S>(in, hid, g, rng);
    hh = Linear<S>(hid, hid, g, rng);
  }

  Var<S> step(Tape<S>& t, Var<S> x, Var<S> h) const {
    Var<S> z = sigmoid(t, add(t, zx(t, x), zh(t, h)));
    Var<S> r = sigmoid(t, add(t, rx(t, x), rh(t, h)));
    Var<S> hcand = tanh_op(t, add(t, hx(t, x), hh(t, mul(t, r, h))));
    // h' = (1-z) ⊙ h + z ⊙ hcand
    Var<S> one_minus_z = add_const(t, scale(t, z, S(-1)), S(1));
    return add(t, mul(t, one_minus_z, h), mul(t, z, hcand));
  }
};

// ---- serialization ------------------------------------------------------

template <class S>
void ParamGroup<S>::save(std::ostream& os) const {
  std::uint64_t n = params_.size();
  os.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (auto& p : params_) {
    std::int64_t r = p.value().rows(), c = p.value().cols();
    os.write(reinterpret_cast<const char*>(&r), sizeof(r));
    os.write(reinterpret_cast<const char*>(&c), sizeof(c));
    os.write(reinterpret_cast<const char*>(p.value().data()),
             sizeof(S) * r * c);
  }
}

template <class S>
void ParamGroup<S>::load(std::istream& is) {
  std::uint64_t n = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (n != params_.size())
    throw UsageError("checkpoint parameter count mismatch");
  for (auto& p : params_) {
    std::int64_t r = 0, c = 0;
    is.read(reinterpret_cast<char*>(&r), sizeof(r));
    is.read(reinterpret_cast<char*>(&c), sizeof(c));
    if (r != p.value().rows() || c != p.value().cols())
      throw UsageError("checkpoint tensor shape mismatch");
    is.read(reinterpret_cast<char*>(p.value().data()), sizeof(S) * r * c);
  }
}

}  // namespace betrans::nn
