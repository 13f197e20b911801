#pragma once

// Reverse-mode autodiff over dense Eigen matrices. A Tape owns the nodes of
// one forward pass in creation order (a valid topological order); backward()
// walks it in reverse. Parameters live outside the tape and accumulate
// gradients across backward calls until zero_grad().

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

namespace betrans::nn {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <class S>
struct Node {
  Mat<S> val;
  Mat<S> grad;  // same shape as val once touched
  bool requires_grad = false;
  bool is_param = false;
  std::function<void(Node<S>&)> backward;  // pulls this->grad into parents
  std::vector<std::shared_ptr<Node<S>>> parents;

  void ensure_grad() {
    if (grad.rows() != val.rows() || grad.cols() != val.cols())
      grad = Mat<S>::Zero(val.rows(), val.cols());
  }
};

template <class S>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<S>> n) : n_(std::move(n)) {}

  const Mat<S>& val() const { return n_->val; }
  Mat<S>& val() { return n_->val; }
  const Mat<S>& grad() const { return n_->grad; }
  std::shared_ptr<Node<S>> node() const { return n_; }
  bool valid() const { return n_ != nullptr; }
  Eigen::Index rows() const { return n_->val.rows(); }
  Eigen::Index cols() const { return n_->val.cols(); }
  S scalar() const { return n_->val(0, 0); }

 private:
  std::shared_ptr<Node<S>> n_;
};

template <class S>
class Tape {
 public:
  Var<S> constant(Mat<S> v) {
    auto n = std::make_shared<Node<S>>();
    n->val = std::move(v);
    n->requires_grad = false;
    return track(n);
  }

  Var<S> input(Mat<S> v) {
    auto n = std::make_shared<Node<S>>();
    n->val = std::move(v);
    n->requires_grad = true;  // differentiable leaf (no parents)
    return track(n);
  }

  Var<S> track(std::shared_ptr<Node<S>> n) {
    nodes_.push_back(n);
    return Var<S>(n);
  }

  // Emits a node computed from parents with the given backward rule.
  Var<S> make(Mat<S> val, std::vector<std::shared_ptr<Node<S>>> parents,
              std::function<void(Node<S>&)> backward) {
    auto n = std::make_shared<Node<S>>();
    n->val = std::move(val);
    n->parents = std::move(parents);
    bool any = false;
    for (auto& p : n->parents) any = any || p->requires_grad;
    n->requires_grad = any;
    if (any) n->backward = std::move(backward);
    return track(n);
  }

  void backward(const Var<S>& loss) {
    assert(loss.val().size() == 1 && "backward expects a scalar loss");
    for (auto& n : nodes_) n->grad.resize(0, 0);
    auto ln = loss.node();
    ln->ensure_grad();
    ln->grad(0, 0) = S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<S>& n = **it;
      if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
      n.backward(n);
    }
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::shared_ptr<Node<S>>> nodes_;
};

namespace detail {
template <class S>
inline void accum(std::shared_ptr<Node<S>>& p, const Mat<S>& g) {
  if (!p->requires_grad) return;
  p->ensure_grad();
  p->grad.noalias() += g;
}
}  // namespace detail

// ---- primitive ops ----------------------------------------------------

template <class S>
Var<S> matmul(Tape<S>& t, Var<S> a, Var<S> b) {
  Mat<S> v = a.val() * b.val();
  auto an = a.node(), bn = b.node();
  return t.make(std::move(v), {an, bn}, [an, bn](Node<S>& out) mutable {
    if (an->requires_grad) {
      an->ensure_grad();
      an->grad.noalias() += out.grad * bn->val.transpose();
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      bn->grad.noalias() += an->val.transpose() * out.grad;
    }
  });
}

template <class S>
Var<S> add(Tape<S>& t, Var<S> a, Var<S> b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  Mat<S> v = a.val() + b.val();
  auto an = a.node(), bn = b.node();
  return t.make(std::move(v), {an, bn}, [an, bn](Node<S>& out) mutable {
    detail::accum(an, out.grad);
    detail::accum(bn, out.grad);
  });
}

template <class S>
Var<S> sub(Tape<S>& t, Var<S> a, Var<S> b) {
  Mat<S> v = a.val() - b.val();
  auto an = a.node(), bn = b.node();
  return t.make(std::move(v), {an, bn}, [an, bn](Node<S>& out) mutable {
    detail::accum(an, out.grad);
    detail::accum(bn, Mat<S>(-out.grad));
  });
}

// b is a 1×C row vector broadcast over the rows of a.
template <class S>
Var<S> add_rowvec(Tape<S>& t, Var<S> a, Var<S> b) {
  assert(b.rows() == 1 && b.cols() == a.cols());
  Mat<S> v = a.val().rowwise() + b.val().row(0);
  auto an = a.node(), bn = b.node();
  return t.make(std::move(v), {an, bn}, [an, bn](Node<S>& out) mutable {
    detail::accum(an, out.grad);
    if (bn->requires_grad) {
      bn->ensure_grad();
      bn->grad.row(0) += out.grad.colwise().sum();
    }
  });
}

template <class S>
Var<S> mul(Tape<S>& t, Var<S> a, Var<S> b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  Mat<S> v = a.val().cwiseProduct(b.val());
  auto an = a.node(), bn = b.node();
  return t.make(std::move(v), {an, bn}, [an, bn](Node<S>& out) mutable {
    detail::accum(an, Mat<S>(out.grad.cwiseProduct(bn->val)));
    detail::accum(bn, Mat<S>(out.grad.cwiseProduct(an->val)));
  });
}

template <class S>
Var<S> scale(Tape<S>& t, Var<S> a, S c) {
  Mat<S> v = a.val() * c;
  auto an = a.node();
  return t.make(std::move(v), {an}, [an, c](Node<S>& out) mutable {
    detail::accum(an, Mat<S>(out.grad * c));
  });
}

template <class S>
Var<S> add_const(Tape<S>& t, Var<S> a, S c) {
  Mat<S> v = a.val().array() + c;
  auto an = a.node();
  return t.make(std::move(v), {an}, [an](Node<S>& out) mutable {
    detail::accum(an, out.grad);
  });
}

template <class S>
Var<S> relu(Tape<S>& t, Var<S> a) {
  Mat<S> v = a.val().cwiseMax(S(0));
  auto an = a.node();
  return t.make(std::move(v), {an}, [an](Node<S>& out) mutable {
    Mat<S> g =
        out.grad.cwiseProduct((an->val.array() > S(0)).template cast<S>().matrix());
    detail::accum(an, g);
  });
}

template <class S>
Var<S> gelu(Tape<S>& t, Var<S> a) {
  const S inv_sqrt2 = S(0.7071067811865475);
  const S inv_sqrt2pi = S(0.3989422804014327);
  Mat<S> phi = a.val().unaryExpr([inv_sqrt2](S x) {
    return S(0.5) * (S(1) + std::erf(x * inv_sqrt2));
  });
  Mat<S> v = a.val().cwiseProduct(phi);
  auto an = a.node();
  return t.make(std::move(v), {an},
                [an, phi, inv_sqrt2pi](Node<S>& out) mutable {
                  Mat<S> pdf =
                      (inv_sqrt2pi *
                       (-S(0.5) * an->val.array().square()).exp())
                          .matrix();
                  Mat<S> d = phi + an->val.cwiseProduct(pdf);
                  detail::accum(an, Mat<S>(out.grad.cwiseProduct(d)));
                });
}

template <class S>
Var<S> tanh_op(Tape<S>& t, Var<S> a) {
  Mat<S> v = a.val().array().tanh().matrix();
  auto an = a.node();
  Mat<S> vc = v;
  return t.make(std::move(v), {an}, [an, vc](Node<S>& out) mutable {
    Mat<S> d = (S(1) - vc.array().square()).matrix();
    detail::accum(an, Mat<S>(out.grad.cwiseProduct(d)));
  });
}

template <class S>
Var<S> sigmoid(Tape<S>& t, Var<S> a) {
  Mat<S> v = (S(1) / (S(1) + (-a.val().array()).exp())).matrix();
  auto an = a.node();
  Mat<S> vc = v;
  return t.make(std::move(v), {an}, [an, vc](Node<S>& out) mutable {
    Mat<S> d = vc.cwiseProduct((S(1) - vc.array()).matrix());
    detail::accum(an, Mat<S>(out.grad.cwiseProduct(d)));
  });
}

template <class S>
Var<S> exp_op(Tape<S>& t, Var<S> a) {
  Mat<S> v = a.val().array().exp().matrix();
  auto an = a.node();
  Mat<S> vc = v;
  return t.make(std::move(v), {an}, [an, vc](Node<S>& out) mutable {
    detail::accum(an, Mat<S>(out.grad.cwiseProduct(vc)));
  });
}

template <class S>
Var<S> square(Tape<S>& t, Var<S> a) {
  Mat<S> v = a.val().array().square().matrix();
  auto an = a.node();
  return t.make(std::move(v), {an}, [an](Node<S>& out) mutable {
    detail::accum(an, Mat<S>(S(2) * out.grad.cwiseProduct(an->val)));
  });
}

template <class S>
Var<S> sum_all(Tape<S>& t, Var<S> a) {
  Mat<S> v(1, 1);
  v(0, 0) = a.val().sum();
  auto an = a.node();
  return t.make(std::move(v), {an}, [an](Node<S>& out) mutable {
    detail::accum(
        an, Mat<S>(Mat<S>::Constant(an->val.rows(), an->val.cols(), out.grad(0, 0))));
  });
}

template <class S>
Var<S> mean_all(Tape<S>& t, Var<S> a) {
  S inv = S(1) / S(a.val().size());
  return scale(t, sum_all(t, a), inv);
}

// Scales row i of a by w(i). w is captured by value (constant weights).
template <class S>
Var<S> scale_rows(Tape<S>& t, Var<S> a, Eigen::Matrix<S, Eigen::Dynamic, 1> w) {
  assert(w.size() == a.rows());
  Mat<S> v = w.asDiagonal() * a.val();
  auto an = a.node();
  return t.make(std::move(v), {an}, [an, w](Node<S>& out) mutable {
    detail::accum(an, Mat<S>(w.asDiagonal() * out.grad));
  });
}

template <class S>
Var<S> transpose(Tape<S>& t, Var<S> a) {
  Mat<S> v = a.val().transpose();
  auto an = a.node();
  return t.make(std::move(v), {an}, [an](Node<S>& out) mutable {
    detail::accum(an, Mat<S>(out.grad.transpose()));
  });
}

template <class S>
Var<S> slice_cols(Tape<S>& t, Var<S> a, int c0, int n) {
  Mat<S> v = a.val().middleCols(c0, n);
  auto an = a.node();
  return t.make(std::move(v), {an}, [an, c0, n](Node<S>& out) mutable {
    if (!an->requires_grad) return;
    an->ensure_grad();
    an->grad.middleCols(c0, n) += out.grad;
  });
}

template <class S>
Var<S> concat_cols(Tape<S>& t, const std::vector<Var<S>>& parts) {
  assert(!parts.empty());
  Eigen::Index rows = parts[0].rows(), cols = 0;
  for (auto& p : parts) cols += p.cols();
  Mat<S> v(rows, cols);
  std::vector<std::shared_ptr<Node<S>>> ps;
  std::vector<int> offs;
  int off = 0;
  for (auto& p : parts) {
    v.middleCols(off, p.cols()) = p.val();
    ps.push_back(p.node());
    offs.push_back(off);
    off += static_cast<int>(p.cols());
  }
  return t.make(std::move(v), ps, [ps, offs](Node<S>& out) mutable {
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (!ps[i]->requires_grad) continue;
      ps[i]->ensure_grad();
      ps[i]->grad += out.grad.middleCols(offs[i], ps[i]->val.cols());
    }
  });
}

template <class S>
Var<S> concat_rows(Tape<S>& t, const std::vector<Var<S>>& parts) {
  assert(!parts.empty());
  Eigen::Index cols = parts[0].cols(), rows = 0;
  for (auto& p : parts) rows += p.rows();
  Mat<S> v(rows, cols);
  std::vector<std::shared_ptr<Node<S>>> ps;
  std::vector<int> offs;
  int off = 0;
  for (auto& p : parts) {
    v.middleRows(off, p.rows()) = p.val();
    ps.push_back(p.node());
    offs.push_back(off);
    off += static_cast<int>(p.rows());
  }
  return t.make(std::move(v), ps, [ps, offs](Node<S>& out) mutable {
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (!ps[i]->requires_grad) continue;
      ps[i]->ensure_grad();
      ps[i]->grad += out.grad.middleRows(offs[i], ps[i]->val.rows());
    }
  });
}

template <class S>
Var<S> select_rows(Tape<S>& t, Var<S> a, std::vector<int> idx) {
  Mat<S> v(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) v.row(i) = a.val().row(idx[i]);
  auto an = a.node();
  return t.make(std::move(v), {an}, [an, idx](Node<S>& out) mutable {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      an->grad.row(idx[i]) += out.grad.row(i);
  });
}

// Gathers a(i, col[i]) into a column vector (used for Q(s, a) lookups).
template <class S>
Var<S> gather_per_row(Tape<S>& t, Var<S> a, std::vector<int> col) {
  assert(static_cast<Eigen::Index>(col.size()) == a.rows());
  Mat<S> v(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) v(i, 0) = a.val()(i, col[i]);
  auto an = a.node();
  return t.make(std::move(v), {an}, [an, col](Node<S>& out) mutable {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (Eigen::Index i = 0; i < an->val.rows(); ++i)
      an->grad(i, col[i]) += out.grad(i, 0);
  });
}

// Row-wise softmax with an optional additive mask (0 for keep, large negative
// for drop). Masked-out entries contribute exactly zero probability.
template <class S>
Var<S> softmax_rows(Tape<S>& t, Var<S> a, const Mat<S>* addmask = nullptr) {
  Mat<S> z = a.val();
  if (addmask) z += *addmask;
  Mat<S> v(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    S m = z.row(i).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (z.row(i).array() - m).exp();
    v.row(i) = (e / e.sum()).matrix();
  }
  auto an = a.node();
  Mat<S> vc = v;
  return t.make(std::move(v), {an}, [an, vc](Node<S>& out) mutable {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (Eigen::Index i = 0; i < vc.rows(); ++i) {
      S dot = out.grad.row(i).cwiseProduct(vc.row(i)).sum();
      an->grad.row(i) +=
          vc.row(i).cwiseProduct(out.grad.row(i).array().matrix()) - dot * vc.row(i);
    }
  });
}

// Softmax over a contiguous column range [lo[i], hi[i]] per row; entries
// outside the range are exactly zero. Used for causal attention, where the
// range is (first real token .. query position).
template <class S>
Var<S> causal_softmax_rows(Tape<S>& t, Var<S> a, std::vector<int> lo,
                           std::vector<int> hi) {
  const Eigen::Index R = a.rows();
  assert(static_cast<Eigen::Index>(lo.size()) == R &&
         static_cast<Eigen::Index>(hi.size()) == R);
  Mat<S> v = Mat<S>::Zero(R, a.cols());
  for (Eigen::Index i = 0; i < R; ++i) {
    int l = lo[i], h = hi[i];
    assert(l <= h && h < a.cols());
    int n = h - l + 1;
    Eigen::Array<S, 1, Eigen::Dynamic> seg =
        a.val().row(i).segment(l, n).array();
    seg = (seg - seg.maxCoeff()).exp();
    v.row(i).segment(l, n) = (seg / seg.sum()).matrix();
  }
  auto an = a.node();
  Mat<S> vc = v;
  return t.make(std::move(v), {an},
                [an, vc, lo, hi](Node<S>& out) mutable {
                  if (!an->requires_grad) return;
                  an->ensure_grad();
                  for (Eigen::Index i = 0; i < vc.rows(); ++i) {
                    int l = lo[i], n = hi[i] - lo[i] + 1;
                    auto y = vc.row(i).segment(l, n);
                    auto g = out.grad.row(i).segment(l, n);
                    S dot = g.cwiseProduct(y).sum();
                    an->grad.row(i).segment(l, n) +=
                        y.cwiseProduct(g) - dot * y;
                  }
                });
}

// Row-wise log-softmax.
template <class S>
Var<S> log_softmax_rows(Tape<S>& t, Var<S> a) {
  Mat<S> v(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    S m = a.val().row(i).maxCoeff();
    S lse = std::log((a.val().row(i).array() - m).exp().sum()) + m;
    v.row(i) = a.val().row(i).array() - lse;
  }
  auto an = a.node();
  Mat<S> p = v.array().exp().matrix();
  return t.make(std::move(v), {an}, [an, p](Node<S>& out) mutable {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      S rowsum = out.grad.row(i).sum();
      an->grad.row(i) += out.grad.row(i) - rowsum * p.row(i);
    }
  });
}

// Row-wise layer norm with learnable gain/bias (1×C each).
template <class S>
Var<S> layernorm_rows(Tape<S>& t, Var<S> a, Var<S> gain, Var<S> bias,
                      S eps = S(1e-5)) {
  const Eigen::Index R = a.rows(), C = a.cols();
  Mat<S> xhat(R, C);
  Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std(R);
  for (Eigen::Index i = 0; i < R; ++i) {
    S mu = a.val().row(i).mean();
    Eigen::Array<S, 1, Eigen::Dynamic> c = a.val().row(i).array() - mu;
    S var = c.square().mean();
    S is = S(1) / std::sqrt(var + eps);
    inv_std(i) = is;
    xhat.row(i) = (c * is).matrix();
  }
  Mat<S> v =
      (xhat.array().rowwise() * gain.val().row(0).array()).rowwise() +
      bias.val().row(0).array();
  auto an = a.node(), gn = gain.node(), bn = bias.node();
  return t.make(std::move(v), {an, gn, bn},
                [an, gn, bn, xhat, inv_std](Node<S>& out) mutable {
                  const Eigen::Index R = xhat.rows(), C = xhat.cols();
                  if (gn->requires_grad) {
                    gn->ensure_grad();
                    gn->grad.row(0) +=
                        out.grad.cwiseProduct(xhat).colwise().sum();
                  }
                  if (bn->requires_grad) {
                    bn->ensure_grad();
                    bn->grad.row(0) += out.grad.colwise().sum();
                  }
                  if (!an->requires_grad) return;
                  an->ensure_grad();
                  for (Eigen::Index i = 0; i < R; ++i) {
                    Eigen::Array<S, 1, Eigen::Dynamic> dy =
                        out.grad.row(i).array() * gn->val.row(0).array();
                    S m1 = dy.mean();
                    S m2 = (dy * xhat.row(i).array()).mean();
                    an->grad.row(i) +=
                        (inv_std(i) *
                         (dy - m1 - xhat.row(i).array() * m2))
                            .matrix();
                  }
                });
}

// Mean over rows (weighted by w, already normalized by caller) of the squared
// error against a constant target, summed over columns.
template <class S>
Var<S> weighted_sumsq_rows(Tape<S>& t, Var<S> pred, Mat<S> target,
                           Eigen::Matrix<S, Eigen::Dynamic, 1> w) {
  assert(pred.rows() == target.rows() && pred.cols() == target.cols());
  Mat<S> diff = pred.val() - target;
  Mat<S> v(1, 1);
  v(0, 0) = (w.asDiagonal() * diff.array().square().matrix()).sum();
  auto pn = pred.node();
  return t.make(std::move(v), {pn}, [pn, diff, w](Node<S>& out) mutable {
    detail::accum(pn, Mat<S>(S(2) * out.grad(0, 0) * (w.asDiagonal() * diff)));
  });
}

// Weighted cross-entropy from logits against integer labels.
template <class S>
Var<S> cross_entropy_rows(Tape<S>& t, Var<S> logits, std::vector<int> labels,
                          Eigen::Matrix<S, Eigen::Dynamic, 1> w) {
  const Eigen::Index R = logits.rows();
  assert(static_cast<Eigen::Index>(labels.size()) == R && w.size() == R);
  Mat<S> p(R, logits.cols());
  S loss = 0;
  for (Eigen::Index i = 0; i < R; ++i) {
    S m = logits.val().row(i).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (logits.val().row(i).array() - m).exp();
    S sum = e.sum();
    p.row(i) = (e / sum).matrix();
    loss -= w(i) * (logits.val()(i, labels[i]) - m - std::log(sum));
  }
  Mat<S> v(1, 1);
  v(0, 0) = loss;
  auto ln = logits.node();
  return t.make(std::move(v), {ln}, [ln, p, labels, w](Node<S>& out) mutable {
    if (!ln->requires_grad) return;
    ln->ensure_grad();
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      Eigen::Matrix<S, 1, Eigen::Dynamic> g = p.row(i);
      g(labels[i]) -= S(1);
      ln->grad.row(i) += out.grad(0, 0) * w(i) * g;
    }
  });
}

// Weighted binary cross-entropy from logits (single column).
template <class S>
Var<S> bce_logits_rows(Tape<S>& t, Var<S> logits, Mat<S> targets,
                       Eigen::Matrix<S, Eigen::Dynamic, 1> w) {
  const Eigen::Index R = logits.rows();
  Mat<S> p(R, 1);
  S loss = 0;
  for (Eigen::Index i = 0; i < R; ++i) {
    S x = logits.val()(i, 0);
    S pi = S(1) / (S(1) + std::exp(-x));
    p(i, 0) = pi;
    // numerically stable: log(1+e^x) = max(x,0) + log1p(e^{-|x|})
    S softplus = std::max(x, S(0)) + std::log1p(std::exp(-std::abs(x)));
    loss += w(i) * (softplus - targets(i, 0) * x);
  }
  Mat<S> v(1, 1);
  v(0, 0) = loss;
  auto ln = logits.node();
  return t.make(std::move(v), {ln}, [ln, p, targets, w](Node<S>& out) mutable {
    if (!ln->requires_grad) return;
    ln->ensure_grad();
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      ln->grad(i, 0) += out.grad(0, 0) * w(i) * (p(i, 0) - targets(i, 0));
  });
}

// Straight-through Gumbel-Softmax over a 1×K logits row. The forward value is
// exactly one-hot at argmax((logits+g)/T); gradients flow through the soft
// sample. The Gumbel noise g is supplied by the caller.
template <class S>
Var<S> gumbel_softmax_st(Tape<S>& t, Var<S> logits,
                         Eigen::Matrix<S, 1, Eigen::Dynamic> gumbel, S temp) {
  assert(logits.rows() == 1);
  assert(temp > S(0));
  Eigen::Array<S, 1, Eigen::Dynamic> z =
      (logits.val().row(0).array() + gumbel.array()) / temp;
  S m = z.maxCoeff();
  Eigen::Array<S, 1, Eigen::Dynamic> e = (z - m).exp();
  Eigen::Array<S, 1, Eigen::Dynamic> soft = e / e.sum();
  Eigen::Index arg;
  soft.maxCoeff(&arg);
  Mat<S> v = Mat<S>::Zero(1, logits.cols());
  v(0, arg) = S(1);
  auto ln = logits.node();
  Mat<S> softm = soft.matrix();
  return t.make(std::move(v), {ln}, [ln, softm, temp](Node<S>& out) mutable {
    if (!ln->requires_grad) return;
    ln->ensure_grad();
    // d soft_j / d logit_k = soft_j (δ_jk − soft_k) / T
    S dot = out.grad.row(0).cwiseProduct(softm.row(0)).sum();
    ln->grad.row(0) +=
        (softm.row(0).cwiseProduct(out.grad.row(0)) - dot * softm.row(0)) /
        temp;
  });
}

}  // namespace betrans::nn
