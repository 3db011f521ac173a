#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "framers/common.hpp"
#include "framers/rng.hpp"

namespace framers {

// Layer primitives with explicit backward passes. All parameters are stored
// as matrices (vectors as [n, 1]) so optimizers, checkpoints, and gradient
// checks can treat them uniformly. backward() accumulates into the grad
// buffers; zero_grad() clears them.

template <class S>
using ParamFn =
    std::function<void(const std::string&, MatX<S>&, MatX<S>&, bool decay)>;

template <class S>
S gelu_scalar(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * S(M_SQRT1_2)));
}

template <class S>
S gelu_grad_scalar(S x) {
  const S cdf = S(0.5) * (S(1) + std::erf(x * S(M_SQRT1_2)));
  const S pdf = std::exp(S(-0.5) * x * x) * S(0.3989422804014327);
  return cdf + x * pdf;
}

template <class S>
struct Linear {
  MatX<S> w;   // [out, in]
  MatX<S> b;   // [out, 1]
  MatX<S> gw;
  MatX<S> gb;

  void init(int out, int in, Rng& rng, double std_dev = 0.02) {
    w.resize(out, in);
    for (Eigen::Index i = 0; i < w.size(); ++i)
      w.data()[i] = S(normal_unit(rng) * std_dev);
    b = MatX<S>::Zero(out, 1);
    zero_grad();
  }
  void init_zero(int out, int in) {
    w = MatX<S>::Zero(out, in);
    b = MatX<S>::Zero(out, 1);
    zero_grad();
  }
  void zero_grad() {
    gw = MatX<S>::Zero(w.rows(), w.cols());
    gb = MatX<S>::Zero(b.rows(), 1);
  }

  MatX<S> forward(const MatX<S>& x) const {
    MatX<S> y = x * w.transpose();
    y.rowwise() += b.col(0).transpose();
    return y;
  }
  /// Returns dx; accumulates gw, gb. x must be the forward input.
  MatX<S> backward(const MatX<S>& x, const MatX<S>& dy) {
    accumulate_grads(x, dy);
    return dy * w;
  }
  /// For layers whose input needs no gradient (e.g. pixel patches).
  void accumulate_grads(const MatX<S>& x, const MatX<S>& dy) {
    gw.noalias() += dy.transpose() * x;
    gb.col(0).noalias() += dy.colwise().sum().transpose();
  }
  void visit(const std::string& prefix, const ParamFn<S>& fn) {
    fn(prefix + ".w", w, gw, true);
    fn(prefix + ".b", b, gb, false);
  }
};

template <class S>
struct LayerNorm {
  MatX<S> gamma;  // [dim, 1]
  MatX<S> beta;   // [dim, 1]
  MatX<S> ggamma;
  MatX<S> gbeta;
  static constexpr S kEps = S(1e-6);

  struct Cache {
    MatX<S> xhat;
    VecX<S> rstd;
  };

  void init(int dim) {
    gamma = MatX<S>::Ones(dim, 1);
    beta = MatX<S>::Zero(dim, 1);
    zero_grad();
  }
  void zero_grad() {
    ggamma = MatX<S>::Zero(gamma.rows(), 1);
    gbeta = MatX<S>::Zero(beta.rows(), 1);
  }

  MatX<S> forward(const MatX<S>& x, Cache* cache) const {
    const Eigen::Index n = x.rows(), d = x.cols();
    MatX<S> xhat(n, d);
    VecX<S> rstd(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const S mu = x.row(i).mean();
      const S var = (x.row(i).array() - mu).square().mean();
      const S r = S(1) / std::sqrt(var + kEps);
      xhat.row(i) = (x.row(i).array() - mu) * r;
      rstd(i) = r;
    }
    MatX<S> y =
        (xhat.array().rowwise() * gamma.col(0).transpose().array()).matrix();
    y.rowwise() += beta.col(0).transpose();
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->rstd = std::move(rstd);
    }
    return y;
  }

  MatX<S> backward(const MatX<S>& dy, const Cache& cache) {
    const Eigen::Index n = dy.rows(), d = dy.cols();
    ggamma.col(0).noalias() +=
        (dy.array() * cache.xhat.array()).colwise().sum().matrix().transpose();
    gbeta.col(0).noalias() += dy.colwise().sum().transpose();
    MatX<S> dxhat =
        (dy.array().rowwise() * gamma.col(0).transpose().array()).matrix();
    MatX<S> dx(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const S m1 = dxhat.row(i).mean();
      const S m2 = (dxhat.row(i).array() * cache.xhat.row(i).array()).mean();
      dx.row(i) = cache.rstd(i) *
                  (dxhat.row(i).array() - m1 - cache.xhat.row(i).array() * m2);
    }
    return dx;
  }
  void visit(const std::string& prefix, const ParamFn<S>& fn) {
    fn(prefix + ".g", gamma, ggamma, false);
    fn(prefix + ".b", beta, gbeta, false);
  }
};

template <class S>
struct Attention {
  int heads = 1;
  Linear<S> qkv;   // dim -> 3*dim
  Linear<S> proj;  // dim -> dim

  struct Cache {
    MatX<S> x;        // input rows
    MatX<S> qkv_out;  // [n, 3*dim]
    std::vector<MatX<S>> attn;  // per head softmax weights [n, n]
    MatX<S> concat;   // [n, dim] pre-projection
  };

  void init(int dim, int n_heads, Rng& rng) {
    heads = n_heads;
    qkv.init(3 * dim, dim, rng);
    proj.init(dim, dim, rng);
  }
  void zero_grad() {
    qkv.zero_grad();
    proj.zero_grad();
  }

  MatX<S> forward(const MatX<S>& x, Cache* cache) const {
    const Eigen::Index n = x.rows();
    const int dim = int(x.cols());
    const int dh = dim / heads;
    const S scale = S(1) / std::sqrt(S(dh));
    MatX<S> qkv_out = qkv.forward(x);
    MatX<S> concat(n, dim);
    std::vector<MatX<S>> attn_w;
    if (cache) attn_w.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      const auto q = qkv_out.middleCols(h * dh, dh);
      const auto k = qkv_out.middleCols(dim + h * dh, dh);
      const auto v = qkv_out.middleCols(2 * dim + h * dh, dh);
      MatX<S> scores = (q * k.transpose()) * scale;
      for (Eigen::Index i = 0; i < n; ++i) {
        const S mx = scores.row(i).maxCoeff();
        scores.row(i) = (scores.row(i).array() - mx).exp();
        scores.row(i) /= scores.row(i).sum();
      }
      concat.middleCols(h * dh, dh).noalias() = scores * v;
      if (cache) attn_w.push_back(std::move(scores));
    }
    MatX<S> out = proj.forward(concat);
    if (cache) {
      cache->x = x;
      cache->qkv_out = std::move(qkv_out);
      cache->attn = std::move(attn_w);
      cache->concat = std::move(concat);
    }
    return out;
  }

  MatX<S> backward(const MatX<S>& dy, const Cache& cache) {
    const int dim = int(cache.x.cols());
    const int dh = dim / heads;
    const S scale = S(1) / std::sqrt(S(dh));
    MatX<S> dconcat = proj.backward(cache.concat, dy);
    MatX<S> dqkv = MatX<S>::Zero(cache.qkv_out.rows(), cache.qkv_out.cols());
    for (int h = 0; h < heads; ++h) {
      const auto q = cache.qkv_out.middleCols(h * dh, dh);
      const auto k = cache.qkv_out.middleCols(dim + h * dh, dh);
      const auto v = cache.qkv_out.middleCols(2 * dim + h * dh, dh);
      const MatX<S>& a = cache.attn[h];
      const auto dout = dconcat.middleCols(h * dh, dh);
      MatX<S> da = dout * v.transpose();
      dqkv.middleCols(2 * dim + h * dh, dh).noalias() = a.transpose() * dout;
      // softmax backward: ds = a .* (da - rowsum(da .* a))
      VecX<S> rowsum = (da.array() * a.array()).rowwise().sum();
      MatX<S> ds =
          (a.array() * (da.array().colwise() - rowsum.array())).matrix();
      ds *= scale;
      dqkv.middleCols(h * dh, dh).noalias() = ds * k;
      dqkv.middleCols(dim + h * dh, dh).noalias() = ds.transpose() * q;
    }
    return qkv.backward(cache.x, dqkv);
  }
  void visit(const std::string& prefix, const ParamFn<S>& fn) {
    qkv.visit(prefix + ".qkv", fn);
    proj.visit(prefix + ".proj", fn);
  }
};

template <class S>
struct Mlp {
  Linear<S> fc1;
  Linear<S> fc2;

  struct Cache {
    MatX<S> x;
    MatX<S> pre;  // fc1 output before GELU
    MatX<S> act;
  };

  void init(int dim, int hidden, Rng& rng) {
    fc1.init(hidden, dim, rng);
    fc2.init(dim, hidden, rng);
  }
  void zero_grad() {
    fc1.zero_grad();
    fc2.zero_grad();
  }

  MatX<S> forward(const MatX<S>& x, Cache* cache) const {
    MatX<S> pre = fc1.forward(x);
    MatX<S> act = pre.unaryExpr([](S v) { return gelu_scalar(v); });
    MatX<S> out = fc2.forward(act);
    if (cache) {
      cache->x = x;
      cache->pre = std::move(pre);
      cache->act = std::move(act);
    }
    return out;
  }
  MatX<S> backward(const MatX<S>& dy, const Cache& cache) {
    MatX<S> dact = fc2.backward(cache.act, dy);
    MatX<S> dpre = dact.cwiseProduct(
        cache.pre.unaryExpr([](S v) { return gelu_grad_scalar(v); }));
    return fc1.backward(cache.x, dpre);
  }
  void visit(const std::string& prefix, const ParamFn<S>& fn) {
    fc1.visit(prefix + ".fc1", fn);
    fc2.visit(prefix + ".fc2", fn);
  }
};

/// Pre-norm transformer block: x + attn(ln1(x)), then x + mlp(ln2(x)).
template <class S>
struct Block {
  LayerNorm<S> ln1;
  Attention<S> attn;
  LayerNorm<S> ln2;
  Mlp<S> mlp;

  struct Cache {
    typename LayerNorm<S>::Cache ln1c;
    typename Attention<S>::Cache attnc;
    typename LayerNorm<S>::Cache ln2c;
    typename Mlp<S>::Cache mlpc;
  };

  void init(int dim, int n_heads, int hidden, Rng& rng) {
    ln1.init(dim);
    attn.init(dim, n_heads, rng);
    ln2.init(dim);
    mlp.init(dim, hidden, rng);
  }
  void zero_grad() {
    ln1.zero_grad();
    attn.zero_grad();
    ln2.zero_grad();
    mlp.zero_grad();
  }

  MatX<S> forward(const MatX<S>& x, Cache* cache) const {
    MatX<S> a = ln1.forward(x, cache ? &cache->ln1c : nullptr);
    MatX<S> x1 = x + attn.forward(a, cache ? &cache->attnc : nullptr);
    MatX<S> b = ln2.forward(x1, cache ? &cache->ln2c : nullptr);
    return x1 + mlp.forward(b, cache ? &cache->mlpc : nullptr);
  }
  MatX<S> backward(const MatX<S>& dy, const Cache& cache) {
    MatX<S> dx1 = dy + ln2.backward(mlp.backward(dy, cache.mlpc), cache.ln2c);
    return dx1 + ln1.backward(attn.backward(dx1, cache.attnc), cache.ln1c);
  }
  void visit(const std::string& prefix, const ParamFn<S>& fn) {
    ln1.visit(prefix + ".ln1", fn);
    attn.visit(prefix + ".attn", fn);
    ln2.visit(prefix + ".ln2", fn);
    mlp.visit(prefix + ".mlp", fn);
  }
};

}  // namespace framers
