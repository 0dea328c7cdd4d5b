#pragma once

#include "apvit/common.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace apvit {

// A named weight tensor with its gradient accumulator. Biases and tokens are
// kept as 1xD matrices so the optimizer and checkpoint treat everything
// uniformly.
template <class S>
struct Param {
  std::string name;
  Mat<S> w;
  Mat<S> g;
  bool is_prototype = false;

  void setup(const std::string& n, int rows, int cols) {
    name = n;
    w.setZero(rows, cols);
    g.setZero(rows, cols);
  }
};

template <class S>
using ParamRefs = std::vector<Param<S>*>;

template <class S>
struct Linear {
  Param<S> W;  // in x out
  Param<S> b;  // 1 x out

  void init(const std::string& name, int in, int out, Rng& rng) {
    W.setup(name + ".w", in, out);
    b.setup(name + ".b", 1, out);
    fill_normal(W.w, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  }

  Mat<S> forward(const Mat<S>& X) const {
    Mat<S> Y = X * W.w;
    Y.rowwise() += b.w.row(0);
    return Y;
  }

  // Accumulates parameter grads, returns dX. X must be the forward input.
  Mat<S> backward(const Mat<S>& X, const Mat<S>& dY) {
    W.g.noalias() += X.transpose() * dY;
    b.g.row(0) += dY.colwise().sum();
    return dY * W.w.transpose();
  }

  void collect(ParamRefs<S>& ps) {
    ps.push_back(&W);
    ps.push_back(&b);
  }
};

template <class S>
struct LayerNorm {
  static constexpr double kEps = 1e-5;
  Param<S> gamma;  // 1 x D
  Param<S> beta;   // 1 x D

  struct Cache {
    Mat<S> xhat;
    Vec<S> rstd;
  };

  void init(const std::string& name, int dim) {
    gamma.setup(name + ".gamma", 1, dim);
    beta.setup(name + ".beta", 1, dim);
    gamma.w.setOnes();
  }

  Mat<S> forward(const Mat<S>& X, Cache& c) const {
    const Eigen::Index R = X.rows(), D = X.cols();
    c.xhat.resize(R, D);
    c.rstd.resize(R);
    Mat<S> Y(R, D);
    for (Eigen::Index i = 0; i < R; ++i) {
      S mu = X.row(i).mean();
      S var = (X.row(i).array() - mu).square().mean();
      S rstd = S(1) / std::sqrt(var + S(kEps));
      c.rstd(i) = rstd;
      c.xhat.row(i) = (X.row(i).array() - mu) * rstd;
      Y.row(i) = c.xhat.row(i).cwiseProduct(gamma.w.row(0)) + beta.w.row(0);
    }
    return Y;
  }

  Mat<S> backward(const Mat<S>& dY, const Cache& c) {
    const Eigen::Index R = dY.rows(), D = dY.cols();
    Mat<S> dX(R, D);
    for (Eigen::Index i = 0; i < R; ++i) {
      gamma.g.row(0) += dY.row(i).cwiseProduct(c.xhat.row(i));
      beta.g.row(0) += dY.row(i);
      auto dxhat = dY.row(i).cwiseProduct(gamma.w.row(0));
      S m1 = dxhat.mean();
      S m2 = dxhat.cwiseProduct(c.xhat.row(i)).mean();
      dX.row(i) = c.rstd(i) * (dxhat.array() - m1 - c.xhat.row(i).array() * m2);
    }
    return dX;
  }

  void collect(ParamRefs<S>& ps) {
    ps.push_back(&gamma);
    ps.push_back(&beta);
  }
};

template <class S>
inline Mat<S> gelu(const Mat<S>& X) {
  return X.unaryExpr([](S x) {
    return S(0.5) * x * (S(1) + std::erf(x / S(std::sqrt(2.0))));
  });
}

template <class S>
inline Mat<S> gelu_grad(const Mat<S>& X) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  return X.unaryExpr([](S x) {
    double xd = static_cast<double>(x);
    return static_cast<S>(0.5 * (1.0 + std::erf(xd * inv_sqrt2)) +
                          xd * inv_sqrt2pi * std::exp(-0.5 * xd * xd));
  });
}

// Multi-head self-attention over per-sample blocks of a stacked (B*T) x D
// token matrix. QKV and output projections run as single batched GEMMs; the
// attention itself loops over samples and heads.
template <class S>
struct MultiHeadAttention {
  int dim = 0, heads = 0, head_dim = 0;
  Linear<S> qkv;  // D -> 3D, layout [q | k | v]
  Linear<S> out;  // D -> D

  struct Cache {
    Mat<S> x;                    // forward input
    Mat<S> qkv_out;              // (B*T) x 3D
    std::vector<Mat<S>> probs;   // per (sample, head): T x T softmax rows
    Mat<S> concat;               // (B*T) x D
  };

  void init(const std::string& name, int d, int h, Rng& rng) {
    dim = d;
    heads = h;
    head_dim = d / h;
    qkv.init(name + ".qkv", d, 3 * d, rng);
    out.init(name + ".out", d, d, rng);
  }

  Mat<S> forward(const Mat<S>& X, int B, int T, Cache& c) const {
    c.x = X;
    c.qkv_out = qkv.forward(X);
    c.probs.assign(static_cast<size_t>(B) * heads, Mat<S>());
    c.concat.resize(X.rows(), dim);
    const S scale = S(1) / std::sqrt(static_cast<S>(head_dim));
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < heads; ++h) {
        auto Q = c.qkv_out.block(b * T, h * head_dim, T, head_dim);
        auto K = c.qkv_out.block(b * T, dim + h * head_dim, T, head_dim);
        auto V = c.qkv_out.block(b * T, 2 * dim + h * head_dim, T, head_dim);
        Mat<S> scores = (Q * K.transpose()) * scale;
        for (int r = 0; r < T; ++r) {
          S m = scores.row(r).maxCoeff();
          scores.row(r) = (scores.row(r).array() - m).exp();
          scores.row(r) /= scores.row(r).sum();
        }
        c.concat.block(b * T, h * head_dim, T, head_dim).noalias() = scores * V;
        c.probs[static_cast<size_t>(b) * heads + h] = std::move(scores);
      }
    }
    return out.forward(c.concat);
  }

  Mat<S> backward(const Mat<S>& dY, int B, int T, Cache& c) {
    Mat<S> dConcat = out.backward(c.concat, dY);
    Mat<S> dQkv = Mat<S>::Zero(c.qkv_out.rows(), 3 * dim);
    const S scale = S(1) / std::sqrt(static_cast<S>(head_dim));
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < heads; ++h) {
        const Mat<S>& P = c.probs[static_cast<size_t>(b) * heads + h];
        auto Q = c.qkv_out.block(b * T, h * head_dim, T, head_dim);
        auto K = c.qkv_out.block(b * T, dim + h * head_dim, T, head_dim);
        auto V = c.qkv_out.block(b * T, 2 * dim + h * head_dim, T, head_dim);
        auto dOh = dConcat.block(b * T, h * head_dim, T, head_dim);
        Mat<S> dP = dOh * V.transpose();
        dQkv.block(b * T, 2 * dim + h * head_dim, T, head_dim).noalias() =
            P.transpose() * dOh;
        Mat<S> dScores(T, T);
        for (int r = 0; r < T; ++r) {
          S dot = P.row(r).dot(dP.row(r));
          dScores.row(r) =
              P.row(r).cwiseProduct((dP.row(r).array() - dot).matrix());
        }
        dScores *= scale;
        dQkv.block(b * T, h * head_dim, T, head_dim).noalias() = dScores * K;
        dQkv.block(b * T, dim + h * head_dim, T, head_dim).noalias() =
            dScores.transpose() * Q;
      }
    }
    return qkv.backward(c.x, dQkv);
  }

  void collect(ParamRefs<S>& ps) {
    qkv.collect(ps);
    out.collect(ps);
  }
};

template <class S>
struct Mlp {
  Linear<S> fc1;  // D -> 4D
  Linear<S> fc2;  // 4D -> D

  struct Cache {
    Mat<S> x, h, act;
  };

  void init(const std::string& name, int dim, Rng& rng) {
    fc1.init(name + ".fc1", dim, 4 * dim, rng);
    fc2.init(name + ".fc2", 4 * dim, dim, rng);
  }

  Mat<S> forward(const Mat<S>& X, Cache& c) const {
    c.x = X;
    c.h = fc1.forward(X);
    c.act = gelu(c.h);
    return fc2.forward(c.act);
  }

  Mat<S> backward(const Mat<S>& dY, Cache& c) {
    Mat<S> dAct = fc2.backward(c.act, dY);
    Mat<S> dH = dAct.cwiseProduct(gelu_grad(c.h));
    return fc1.backward(c.x, dH);
  }

  void collect(ParamRefs<S>& ps) {
    fc1.collect(ps);
    fc2.collect(ps);
  }
};

// Pre-norm transformer block: x + Attn(LN1(x)), then y + MLP(LN2(y)).
// Zeroed output projections (attn.out, mlp.fc2) reduce it to the identity.
template <class S>
struct EncoderBlock {
  LayerNorm<S> ln1, ln2;
  MultiHeadAttention<S> attn;
  Mlp<S> mlp;

  struct Cache {
    typename LayerNorm<S>::Cache ln1c, ln2c;
    typename MultiHeadAttention<S>::Cache attnc;
    typename Mlp<S>::Cache mlpc;
  };

  void init(const std::string& name, int dim, int heads, Rng& rng) {
    ln1.init(name + ".ln1", dim);
    ln2.init(name + ".ln2", dim);
    attn.init(name + ".attn", dim, heads, rng);
    mlp.init(name + ".mlp", dim, rng);
  }

  Mat<S> forward(const Mat<S>& X, int B, int T, Cache& c) const {
    Mat<S> y = X + attn.forward(ln1.forward(X, c.ln1c), B, T, c.attnc);
    y += mlp.forward(ln2.forward(y, c.ln2c), c.mlpc);
    return y;
  }

  Mat<S> backward(const Mat<S>& dY, int B, int T, Cache& c) {
    Mat<S> dY1 = dY + ln2.backward(mlp.backward(dY, c.mlpc), c.ln2c);
    return dY1 + ln1.backward(attn.backward(dY1, B, T, c.attnc), c.ln1c);
  }

  void collect(ParamRefs<S>& ps) {
    ln1.collect(ps);
    attn.collect(ps);
    ln2.collect(ps);
    mlp.collect(ps);
  }
};

template <class S>
struct Encoder {
  std::vector<EncoderBlock<S>> blocks;
  int heads = 0;

  struct Cache {
    std::vector<typename EncoderBlock<S>::Cache> blockc;
  };

  void init(const std::string& name, int layers, int dim, int n_heads, Rng& rng) {
    heads = n_heads;
    blocks.resize(layers);
    for (int i = 0; i < layers; ++i)
      blocks[i].init(name + ".block" + std::to_string(i), dim, n_heads, rng);
  }

  Mat<S> forward(const Mat<S>& X, int B, int T, Cache& c) const {
    c.blockc.resize(blocks.size());
    Mat<S> y = X;
    for (size_t i = 0; i < blocks.size(); ++i)
      y = blocks[i].forward(y, B, T, c.blockc[i]);
    return y;
  }

  Mat<S> backward(const Mat<S>& dY, int B, int T, Cache& c) {
    Mat<S> d = dY;
    for (size_t i = blocks.size(); i-- > 0;)
      d = blocks[i].backward(d, B, T, c.blockc[i]);
    return d;
  }

  // Final-layer class-token attention over the T-1 non-class positions,
  // averaged over heads and renormalized to sum 1.
  Vec<S> class_token_attention(const Cache& c, int b, int T) const {
    const auto& probs = c.blockc.back().attnc.probs;
    Vec<S> att = Vec<S>::Zero(T - 1);
    for (int h = 0; h < heads; ++h) {
      const Mat<S>& P = probs[static_cast<size_t>(b) * heads + h];
      att += P.row(0).segment(1, T - 1).transpose();
    }
    S total = att.sum();
    if (total > S(0)) att /= total;
    return att;
  }

  // Head-averaged T x T attention of one layer (for rollout composition).
  Mat<S> mean_head_attention(const Cache& c, int b, int layer, int T) const {
    const auto& probs = c.blockc[layer].attnc.probs;
    Mat<S> M = Mat<S>::Zero(T, T);
    for (int h = 0; h < heads; ++h)
      M += probs[static_cast<size_t>(b) * heads + h];
    return M / static_cast<S>(heads);
  }

  void collect(ParamRefs<S>& ps) {
    for (auto& blk : blocks) blk.collect(ps);
  }
};

}  // namespace apvit
