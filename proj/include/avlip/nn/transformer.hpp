#pragma once

#include "avlip/nn/layers.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace avlip::nn {

struct TransformerShape {
  int d_model = 32;
  int n_layers = 2;
  int n_heads = 4;
  int head_dim = 8;
  int ff_dim = 64;
  double dropout = 0.1;
};

// Multi-head self-attention over a prefix-valid sequence: keys at positions
// >= valid_len receive zero attention weight. The key projection carries no
// bias because a shared key offset cancels inside the softmax.
template <typename T>
struct SelfAttention {
  Linear<T> wq, wk, wv, wo;
  int n_heads = 1, head_dim = 1;

  struct Cache {
    Mat<T> x, q, k, v, o;
    std::vector<Mat<T>> probs;
  };

  SelfAttention() = default;
  SelfAttention(const std::string& name, int d_model, int heads, int hd)
      : wq(name + ".wq", d_model, heads * hd), wk(name + ".wk", d_model, heads * hd, false),
        wv(name + ".wv", d_model, heads * hd), wo(name + ".wo", heads * hd, d_model),
        n_heads(heads), head_dim(hd) {}

  void init(Rng& rng) {
    wq.init(rng);
    wk.init(rng);
    wv.init(rng);
    wo.init(rng);
  }

  Mat<T> forward(const Mat<T>& x, int valid_len, Cache* cache) const {
    const Eigen::Index len = x.rows();
    Mat<T> q = wq.forward(x), k = wk.forward(x), v = wv.forward(x);
    Mat<T> o(len, n_heads * head_dim);
    std::vector<Mat<T>> probs;
    const T scale = T(1) / std::sqrt(static_cast<T>(head_dim));
    for (int h = 0; h < n_heads; ++h) {
      const auto qh = q.middleCols(h * head_dim, head_dim);
      const auto kh = k.middleCols(h * head_dim, head_dim).topRows(valid_len);
      const auto vh = v.middleCols(h * head_dim, head_dim).topRows(valid_len);
      Mat<T> s = (qh * kh.transpose()) * scale;  // len x valid_len
      for (Eigen::Index i = 0; i < len; ++i) {
        const T mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
      }
      o.middleCols(h * head_dim, head_dim).noalias() = s * vh;
      probs.push_back(std::move(s));
    }
    Mat<T> y = wo.forward(o);
    if (cache) {
      cache->x = x;
      cache->q = std::move(q);
      cache->k = std::move(k);
      cache->v = std::move(v);
      cache->o = std::move(o);
      cache->probs = std::move(probs);
    }
    return y;
  }

  Mat<T> backward(const Cache& c, const Mat<T>& dy) {
    const Eigen::Index len = c.x.rows();
    const Eigen::Index valid = c.probs.front().cols();
    const Mat<T> d_o = wo.backward(c.o, dy);
    Mat<T> dq = Mat<T>::Zero(len, n_heads * head_dim);
    Mat<T> dk = Mat<T>::Zero(len, n_heads * head_dim);
    Mat<T> dv = Mat<T>::Zero(len, n_heads * head_dim);
    const T scale = T(1) / std::sqrt(static_cast<T>(head_dim));
    for (int h = 0; h < n_heads; ++h) {
      const Mat<T>& p = c.probs[static_cast<std::size_t>(h)];
      const auto doh = d_o.middleCols(h * head_dim, head_dim);
      const auto qh = c.q.middleCols(h * head_dim, head_dim);
      const auto kh = c.k.middleCols(h * head_dim, head_dim).topRows(valid);
      const auto vh = c.v.middleCols(h * head_dim, head_dim).topRows(valid);
      const Mat<T> dp = doh * vh.transpose();
      dv.middleCols(h * head_dim, head_dim).topRows(valid).noalias() = p.transpose() * doh;
      Mat<T> ds = p.cwiseProduct(dp);
      const Vec<T> rs = ds.rowwise().sum();
      ds -= p.cwiseProduct(rs.replicate(1, valid));
      ds *= scale;
      dq.middleCols(h * head_dim, head_dim).noalias() = ds * kh;
      dk.middleCols(h * head_dim, head_dim).topRows(valid).noalias() = ds.transpose() * qh;
    }
    Mat<T> dx = wq.backward(c.x, dq);
    dx += wk.backward(c.x, dk);
    dx += wv.backward(c.x, dv);
    return dx;
  }

  template <typename F>
  void visit(F&& f) {
    wq.visit(f);
    wk.visit(f);
    wv.visit(f);
    wo.visit(f);
  }
};

// Pre-norm encoder layer.
template <typename T>
struct TransformerLayer {
  LayerNorm<T> ln1, ln2;
  SelfAttention<T> attn;
  Mlp<T> ffn;
  double dropout = 0.0;

  struct Cache {
    typename LayerNorm<T>::Cache ln1, ln2;
    typename SelfAttention<T>::Cache attn;
    typename Mlp<T>::Cache ffn;
    Mat<T> drop_attn, drop_ffn;
  };

  TransformerLayer() = default;
  TransformerLayer(const std::string& name, const TransformerShape& s)
      : ln1(name + ".ln1", s.d_model), ln2(name + ".ln2", s.d_model),
        attn(name + ".attn", s.d_model, s.n_heads, s.head_dim), ffn(name + ".ffn", s.d_model, s.ff_dim, s.d_model),
        dropout(s.dropout) {}

  void init(Rng& rng) {
    attn.init(rng);
    ffn.init(rng);
  }

  Mat<T> forward(const Mat<T>& x, int valid_len, Mode mode, Rng* rng, Cache* c) const {
    const Mat<T> a_in = ln1.forward(x, c ? &c->ln1 : nullptr);
    const Mat<T> a = attn.forward(a_in, valid_len, c ? &c->attn : nullptr);
    Mat<T> x1 = x + dropout_forward(a, dropout, mode, rng, c ? &c->drop_attn : nullptr);
    const Mat<T> f_in = ln2.forward(x1, c ? &c->ln2 : nullptr);
    const Mat<T> f = ffn.forward(f_in, c ? &c->ffn : nullptr);
    x1 += dropout_forward(f, dropout, mode, rng, c ? &c->drop_ffn : nullptr);
    return x1;
  }

  Mat<T> backward(const Cache& c, const Mat<T>& dout) {
    Mat<T> dx1 = dout;
    const Mat<T> df = dropout_backward(c.drop_ffn, dout);
    dx1 += ln2.backward(c.ln2, ffn.backward(c.ffn, df));
    Mat<T> dx = dx1;
    const Mat<T> da = dropout_backward(c.drop_attn, dx1);
    dx += ln1.backward(c.ln1, attn.backward(c.attn, da));
    return dx;
  }

  template <typename F>
  void visit(F&& f) {
    ln1.visit(f);
    attn.visit(f);
    ln2.visit(f);
    ffn.visit(f);
  }
};

// Layer stack followed by a final LayerNorm.
template <typename T>
struct Transformer {
  std::vector<TransformerLayer<T>> layers;
  LayerNorm<T> final_ln;

  struct Cache {
    std::vector<typename TransformerLayer<T>::Cache> layers;
    typename LayerNorm<T>::Cache final_ln;
  };

  Transformer() = default;
  Transformer(const std::string& name, const TransformerShape& s) : final_ln(name + ".final_ln", s.d_model) {
    for (int i = 0; i < s.n_layers; ++i) layers.emplace_back(name + ".layer" + std::to_string(i), s);
  }

  void init(Rng& rng) {
    for (auto& l : layers) l.init(rng);
  }

  Mat<T> forward(Mat<T> x, int valid_len, Mode mode, Rng* rng, Cache* c) const {
    if (c) c->layers.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) x = layers[i].forward(x, valid_len, mode, rng, c ? &c->layers[i] : nullptr);
    return final_ln.forward(x, c ? &c->final_ln : nullptr);
  }

  Mat<T> backward(const Cache& c, const Mat<T>& dout) {
    Mat<T> d = final_ln.backward(c.final_ln, dout);
    for (std::size_t i = layers.size(); i-- > 0;) d = layers[i].backward(c.layers[i], d);
    return d;
  }

  template <typename F>
  void visit(F&& f) {
    for (auto& l : layers) l.visit(f);
    final_ln.visit(f);
  }
};

// Temporal adaptive average pooling: bin k covers
// [floor(k*n/K), ceil((k+1)*n/K)) of the n valid rows.
inline std::pair<int, int> adaptive_bin(int k, int n, int bins) {
  const int start = (k * n) / bins;
  const int end = ((k + 1) * n + bins - 1) / bins;
  return {start, end};
}

template <typename T>
Mat<T> adaptive_avg_pool(const Mat<T>& x, int valid_len, int bins) {
  Mat<T> out(bins, x.cols());
  for (int k = 0; k < bins; ++k) {
    const auto [s, e] = adaptive_bin(k, valid_len, bins);
    out.row(k) = x.middleRows(s, e - s).colwise().sum() / static_cast<T>(e - s);
  }
  return out;
}

template <typename T>
Mat<T> adaptive_avg_pool_backward(const Mat<T>& dout, Eigen::Index rows, int valid_len) {
  const int bins = static_cast<int>(dout.rows());
  Mat<T> dx = Mat<T>::Zero(rows, dout.cols());
  for (int k = 0; k < bins; ++k) {
    const auto [s, e] = adaptive_bin(k, valid_len, bins);
    dx.middleRows(s, e - s).rowwise() += dout.row(k) / static_cast<T>(e - s);
  }
  return dx;
}

// Row-major flatten of a K x d block into a 1 x (K*d) row.
template <typename T>
RowVec<T> flatten(const Mat<T>& m) {
  return Eigen::Map<const RowVec<T>>(m.data(), m.size());
}

template <typename T>
Mat<T> unflatten(const RowVec<T>& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Mat<T>>(v.data(), rows, cols);
}

}  // namespace avlip::nn
