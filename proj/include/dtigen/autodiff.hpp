// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode differentiation over dense row-major matrices. A Tape records
// every operation of one forward pass; backward() replays the recorded
// closures in reverse order. The op set is exactly what the encoder-decoder
// needs: matmul, bias, residual add, ReLU, dropout, layer norm, multi-head
// scaled dot-product attention, embedding lookup, log-softmax and the
// label-smoothed negative log-likelihood.

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dtigen/error.hpp"
#include "dtigen/rng.hpp"

namespace dtigen {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <typename T>
class Tape {
 public:
  using Matrix = Mat<T>;

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A value that never receives a gradient.
  Var constant(Matrix value) { return push(std::move(value), nullptr, nullptr, false); }

  /// A value referenced in place. When `grad_sink` is non-null, backward()
  /// adds this node's gradient into it (it must already have the right shape).
  Var leaf(const Matrix& value, Matrix* grad_sink) {
    return push(Matrix(), &value, grad_sink, grad_sink != nullptr);
  }

  const Matrix& value(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    return n.ref ? *n.ref : n.value;
  }
  bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient of a node after backward(); empty if none flowed into it.
  const Matrix& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }

  void backward(Var root, T seed = T(1)) {
    Node& r = nodes_[static_cast<std::size_t>(root.id)];
    if (value(root).size() != 1) throw Error("backward: root must be a scalar");
    r.grad = Matrix::Constant(1, 1, seed);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(n.grad);
      if (n.sink) *n.sink += n.grad;
    }
  }

  // ---- ops ---------------------------------------------------------------

  Var matmul(Var a, Var b) {
    Matrix out = value(a) * value(b);
    return record(std::move(out), {a, b}, [this, a, b](const Matrix& g) {
      if (needs_grad(a)) accumulate(a, g * value(b).transpose());
      if (needs_grad(b)) accumulate(b, value(a).transpose() * g);
    });
  }

  /// a * b^T
  Var matmul_nt(Var a, Var b) {
    Matrix out = value(a) * value(b).transpose();
    return record(std::move(out), {a, b}, [this, a, b](const Matrix& g) {
      if (needs_grad(a)) accumulate(a, g * value(b));
      if (needs_grad(b)) accumulate(b, g.transpose() * value(a));
    });
  }

  Var add(Var a, Var b) {
    check_same(a, b, "add");
    Matrix out = value(a) + value(b);
    return record(std::move(out), {a, b}, [this, a, b](const Matrix& g) {
      if (needs_grad(a)) accumulate(a, g);
      if (needs_grad(b)) accumulate(b, g);
    });
  }

  /// Adds a 1 x m row vector to every row.
  Var add_row(Var a, Var row) {
    const Matrix& r = value(row);
    if (r.rows() != 1 || r.cols() != value(a).cols()) throw Error("add_row: shape mismatch");
    Matrix out = value(a).rowwise() + r.row(0);
    return record(std::move(out), {a, row}, [this, a, row](const Matrix& g) {
      if (needs_grad(a)) accumulate(a, g);
      if (needs_grad(row)) accumulate(row, g.colwise().sum());
    });
  }

  Var scale(Var a, T s) {
    Matrix out = value(a) * s;
    return record(std::move(out), {a}, [this, a, s](const Matrix& g) { accumulate(a, g * s); });
  }

  Var relu(Var a) {
    Matrix out = value(a).cwiseMax(T(0));
    return record(std::move(out), {a}, [this, a](const Matrix& g) {
      accumulate(a, (value(a).array() > T(0)).select(g, T(0)).matrix());
    });
  }

  /// Inverted dropout. Identity when p == 0.
  Var dropout(Var a, double p, Rng& rng) {
    if (p <= 0.0) return a;
    const Matrix& x = value(a);
    Matrix mask(x.rows(), x.cols());
    const T keep = T(1) / T(1.0 - p);
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
      mask.data()[i] = rng.bernoulli(p) ? T(0) : keep;
    }
    Matrix out = x.cwiseProduct(mask);
    return record(std::move(out), {a}, [this, a, mask = std::move(mask)](const Matrix& g) {
      accumulate(a, g.cwiseProduct(mask));
    });
  }

  /// Row-wise layer normalization with learned gain and bias (1 x d each).
  Var layer_norm(Var x, Var gain, Var bias, T eps = T(1e-5)) {
    const Matrix& X = value(x);
    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols();
    Matrix xhat(n, d);
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const T mean = X.row(i).mean();
      const auto centered = (X.row(i).array() - mean).matrix();
      const T var = centered.squaredNorm() / static_cast<T>(d);
      inv_std(i) = T(1) / std::sqrt(var + eps);
      xhat.row(i) = centered * inv_std(i);
    }
    const Matrix& G = value(gain);
    const Matrix& B = value(bias);
    Matrix out = (xhat.array().rowwise() * G.row(0).array()).matrix();
    out.rowwise() += B.row(0);
    return record(std::move(out), {x, gain, bias},
                  [this, x, gain, bias, xhat = std::move(xhat), inv_std](const Matrix& g) {
                    const Matrix& Gm = value(gain);
                    if (needs_grad(gain)) {
                      accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
                    }
                    if (needs_grad(bias)) accumulate(bias, g.colwise().sum());
                    if (!needs_grad(x)) return;
                    const auto dd = static_cast<T>(xhat.cols());
                    Matrix dxhat = (g.array().rowwise() * Gm.row(0).array()).matrix();
                    Matrix dx(dxhat.rows(), dxhat.cols());
                    for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
                      const T s1 = dxhat.row(i).sum();
                      const T s2 = dxhat.row(i).dot(xhat.row(i));
                      dx.row(i) = (inv_std(i) / dd) *
                                  (dd * dxhat.row(i).array() - s1 - xhat.row(i).array() * s2).matrix();
                    }
                    accumulate(x, dx);
                  });
  }

  /// Multi-head scaled dot-product attention on already projected inputs.
  /// q: n x d, k and v: m x d, split into `heads` column blocks. With
  /// `causal`, query i only sees keys j <= i. Attention weights are dropped
  /// out with probability p.
  Var attention(Var q, Var k, Var v, int heads, bool causal, double p, Rng* rng) {
    const Matrix& Q = value(q);
    const Matrix& K = value(k);
    const Matrix& V = value(v);
    const Eigen::Index n = Q.rows();
    const Eigen::Index m = K.rows();
    const Eigen::Index d = Q.cols();
    if (K.cols() != d || V.cols() != d || V.rows() != m) throw Error("attention: shape mismatch");
    if (heads <= 0 || d % heads != 0) throw Error("attention: dim not divisible by heads");
    const Eigen::Index dh = d / heads;
    const T sc = T(1) / std::sqrt(static_cast<T>(dh));
    std::vector<Matrix> probs(static_cast<std::size_t>(heads));
    std::vector<Matrix> masks;
    const bool drop = p > 0.0 && rng != nullptr;
    if (drop) masks.resize(static_cast<std::size_t>(heads));
    Matrix out(n, d);
    for (int h = 0; h < heads; ++h) {
      const auto hs = static_cast<std::size_t>(h);
      Matrix s = Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose() * sc;
      if (causal) {
        for (Eigen::Index i = 0; i < n; ++i) {
          for (Eigen::Index j = i + 1; j < m; ++j) s(i, j) = -std::numeric_limits<T>::infinity();
        }
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        const T mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp().matrix();
        s.row(i) /= s.row(i).sum();
      }
      Matrix pd = s;
      if (drop) {
        Matrix mask(n, m);
        const T keep = T(1) / T(1.0 - p);
        for (Eigen::Index i = 0; i < mask.size(); ++i) {
          mask.data()[i] = rng->bernoulli(p) ? T(0) : keep;
        }
        pd = pd.cwiseProduct(mask);
        masks[hs] = std::move(mask);
      }
      out.middleCols(h * dh, dh) = pd * V.middleCols(h * dh, dh);
      probs[hs] = std::move(s);
    }
    return record(std::move(out), {q, k, v},
                  [this, q, k, v, heads, dh, sc, probs = std::move(probs),
                   masks = std::move(masks)](const Matrix& g) {
                    const Matrix& Qv = value(q);
                    const Matrix& Kv = value(k);
                    const Matrix& Vv = value(v);
                    Matrix dq = Matrix::Zero(Qv.rows(), Qv.cols());
                    Matrix dk = Matrix::Zero(Kv.rows(), Kv.cols());
                    Matrix dv = Matrix::Zero(Vv.rows(), Vv.cols());
                    for (int h = 0; h < heads; ++h) {
                      const auto hs = static_cast<std::size_t>(h);
                      const Matrix& P = probs[hs];
                      const auto gh = g.middleCols(h * dh, dh);
                      Matrix pd = masks.empty() ? P : P.cwiseProduct(masks[hs]);
                      dv.middleCols(h * dh, dh) += pd.transpose() * gh;
                      Matrix dp = gh * Vv.middleCols(h * dh, dh).transpose();
                      if (!masks.empty()) dp = dp.cwiseProduct(masks[hs]);
                      Matrix ds = P.cwiseProduct(dp);
                      const Eigen::Matrix<T, Eigen::Dynamic, 1> rs = ds.rowwise().sum();
                      ds -= P.cwiseProduct(rs.replicate(1, P.cols()));
                      dq.middleCols(h * dh, dh) += ds * Kv.middleCols(h * dh, dh) * sc;
                      dk.middleCols(h * dh, dh) += ds.transpose() * Qv.middleCols(h * dh, dh) * sc;
                    }
                    if (needs_grad(q)) accumulate(q, dq);
                    if (needs_grad(k)) accumulate(k, dk);
                    if (needs_grad(v)) accumulate(v, dv);
                  });
  }

  /// Gathers rows of `table` (vocab x d) for each id.
  Var embed(Var table, const std::vector<int>& ids) {
    const Matrix& E = value(table);
    Matrix out(static_cast<Eigen::Index>(ids.size()), E.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= E.rows()) throw Error("embed: id out of range");
      out.row(static_cast<Eigen::Index>(i)) = E.row(ids[i]);
    }
    return record(std::move(out), {table}, [this, table, ids](const Matrix& g) {
      Node& n = nodes_[static_cast<std::size_t>(table.id)];
      ensure_grad(n, value(table));
      for (std::size_t i = 0; i < ids.size(); ++i) {
        n.grad.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
      }
    });
  }

  Var log_softmax(Var a) {
    const Matrix& X = value(a);
    Matrix out(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const T mx = X.row(i).maxCoeff();
      const T lse = mx + std::log((X.row(i).array() - mx).exp().sum());
      out.row(i) = (X.row(i).array() - lse).matrix();
    }
    Matrix sm = out.array().exp().matrix();
    return record(std::move(out), {a}, [this, a, sm = std::move(sm)](const Matrix& g) {
      const Eigen::Matrix<T, Eigen::Dynamic, 1> rs = g.rowwise().sum();
      accumulate(a, g - sm.cwiseProduct(rs.replicate(1, sm.cols())));
    });
  }

  /// Sum over rows of the label-smoothed negative log-likelihood: the target
  /// distribution puts 1 - eps on the gold id and eps / (V - 1) on every other
  /// id. Rows whose gold id equals `ignore_id` contribute nothing.
  Var smoothed_nll(Var logprobs, const std::vector<int>& gold, T eps, int ignore_id = -1) {
    const Matrix& LP = value(logprobs);
    if (static_cast<Eigen::Index>(gold.size()) != LP.rows()) throw Error("smoothed_nll: length mismatch");
    const Eigen::Index vocab = LP.cols();
    const T off = vocab > 1 ? eps / static_cast<T>(vocab - 1) : T(0);
    const T on = T(1) - eps;
    T total = 0;
    for (Eigen::Index i = 0; i < LP.rows(); ++i) {
      const int y = gold[static_cast<std::size_t>(i)];
      if (y == ignore_id) continue;
      const T row_sum = LP.row(i).sum();
      total -= off * (row_sum - LP(i, y)) + on * LP(i, y);
    }
    Matrix out = Matrix::Constant(1, 1, total);
    return record(std::move(out), {logprobs}, [this, logprobs, gold, off, on, ignore_id](const Matrix& g) {
      const Matrix& lp = value(logprobs);
      Matrix d = Matrix::Constant(lp.rows(), lp.cols(), -off * g(0, 0));
      for (Eigen::Index i = 0; i < lp.rows(); ++i) {
        const int y = gold[static_cast<std::size_t>(i)];
        if (y == ignore_id) {
          d.row(i).setZero();
        } else {
          d(i, y) = -on * g(0, 0);
        }
      }
      accumulate(logprobs, d);
    });
  }

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;
    Matrix* sink = nullptr;
    Matrix grad;
    bool needs_grad = false;
    std::function<void(const Matrix&)> backward;
  };

  Var push(Matrix value, const Matrix* ref, Matrix* sink, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.ref = ref;
    n.sink = sink;
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var record(Matrix value, std::initializer_list<Var> inputs,
             std::function<void(const Matrix&)> backward) {
    bool any = false;
    for (Var in : inputs) any = any || needs_grad(in);
    const Var out = push(std::move(value), nullptr, nullptr, any);
    if (any) nodes_[static_cast<std::size_t>(out.id)].backward = std::move(backward);
    return out;
  }

  static void ensure_grad(Node& n, const Matrix& like) {
    if (n.grad.size() == 0) n.grad = Matrix::Zero(like.rows(), like.cols());
  }

  template <typename Expr>
  void accumulate(Var v, const Expr& delta) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = delta;
    } else {
      n.grad += delta;
    }
  }

  void check_same(Var a, Var b, const char* op) const {
    const Matrix& x = value(a);
    const Matrix& y = value(b);
    if (x.rows() != y.rows() || x.cols() != y.cols()) {
      throw Error(std::string(op) + ": shape mismatch");
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace dtigen
