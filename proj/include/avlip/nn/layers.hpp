#pragma once

#include "avlip/nn/param.hpp"

#include <cmath>
#include <string>

namespace avlip::nn {

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(M_SQRT1_2)));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
  const T pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014327);
  return cdf + x * pdf;
}

// y = x W^T + b, rows of x are independent samples/tokens.
template <typename T>
struct Linear {
  Param<T> weight;
  Param<T> bias;
  int in_dim = 0;
  int out_dim = 0;
  bool has_bias = true;

  Linear() = default;
  Linear(const std::string& name, int in, int out, bool use_bias = true)
      : weight(name + ".weight", out, in), bias(name + ".bias", 1, use_bias ? out : 0, false),
        in_dim(in), out_dim(out), has_bias(use_bias) {}

  void init(Rng& rng) { init_xavier(weight, rng, in_dim, out_dim); }

  Mat<T> forward(const Mat<T>& x) const {
    if (x.cols() != in_dim) throw ShapeError(weight.name + ": input width mismatch");
    Mat<T> y = x * weight.value.transpose();
    if (has_bias) y.rowwise() += bias.value.row(0);
    return y;
  }

  // Accumulates parameter gradients; returns dL/dx.
  Mat<T> backward(const Mat<T>& x, const Mat<T>& dy) {
    weight.grad.noalias() += dy.transpose() * x;
    if (has_bias) bias.grad.row(0) += dy.colwise().sum();
    return dy * weight.value;
  }

  template <typename F>
  void visit(F&& f) {
    f(weight);
    if (has_bias) f(bias);
  }
};

template <typename T>
struct LayerNorm {
  Param<T> gamma;
  Param<T> beta;
  int dim = 0;
  T eps = T(1e-5);

  struct Cache {
    Mat<T> xhat;
    Vec<T> rstd;
  };

  LayerNorm() = default;
  LayerNorm(const std::string& name, int d) : gamma(name + ".gamma", 1, d, false), beta(name + ".beta", 1, d, false), dim(d) {
    gamma.value.setOnes();
  }

  Mat<T> forward(const Mat<T>& x, Cache* cache) const {
    const Eigen::Index n = x.rows();
    Mat<T> xhat(n, dim);
    Vec<T> rstd(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const T mean = x.row(i).mean();
      const T var = (x.row(i).array() - mean).square().mean();
      rstd(i) = T(1) / std::sqrt(var + eps);
      xhat.row(i) = (x.row(i).array() - mean) * rstd(i);
    }
    Mat<T> y = (xhat.array().rowwise() * gamma.value.row(0).array()).rowwise() + beta.value.row(0).array();
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->rstd = std::move(rstd);
    }
    return y;
  }

  Mat<T> backward(const Cache& c, const Mat<T>& dy) {
    gamma.grad.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    beta.grad.row(0) += dy.colwise().sum();
    Mat<T> dxhat = dy.array().rowwise() * gamma.value.row(0).array();
    Mat<T> dx(dy.rows(), dim);
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
      const T m1 = dxhat.row(i).mean();
      const T m2 = (dxhat.row(i).array() * c.xhat.row(i).array()).mean();
      dx.row(i) = (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2) * c.rstd(i);
    }
    return dx;
  }

  template <typename F>
  void visit(F&& f) {
    f(gamma);
    f(beta);
  }
};

// Inverted dropout. An empty mask means identity (evaluation mode or p = 0).
template <typename T>
Mat<T> dropout_forward(const Mat<T>& x, double p, Mode mode, Rng* rng, Mat<T>* mask) {
  if (mode == Mode::eval || p <= 0.0 || rng == nullptr) {
    if (mask) mask->resize(0, 0);
    return x;
  }
  Mat<T> m(x.rows(), x.cols());
  const T keep = T(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng->uniform() < p ? T(0) : keep;
  Mat<T> y = x.cwiseProduct(m);
  if (mask) *mask = std::move(m);
  return y;
}

template <typename T>
Mat<T> dropout_backward(const Mat<T>& mask, const Mat<T>& dy) {
  if (mask.size() == 0) return dy;
  return dy.cwiseProduct(mask);
}

// Two-layer perceptron with a GELU between the layers.
template <typename T>
struct Mlp {
  Linear<T> fc1;
  Linear<T> fc2;

  struct Cache {
    Mat<T> x;
    Mat<T> pre;
    Mat<T> act;
  };

  Mlp() = default;
  Mlp(const std::string& name, int in, int hidden, int out)
      : fc1(name + ".fc1", in, hidden), fc2(name + ".fc2", hidden, out) {}

  void init(Rng& rng, bool zero_last = false) {
    fc1.init(rng);
    fc2.init(rng);
    if (zero_last) {
      fc2.weight.value.setZero();
      fc2.bias.value.setZero();
    }
  }

  Mat<T> forward(const Mat<T>& x, Cache* cache) const {
    Mat<T> pre = fc1.forward(x);
    Mat<T> act = pre.unaryExpr([](T v) { return gelu(v); });
    Mat<T> y = fc2.forward(act);
    if (cache) {
      cache->x = x;
      cache->pre = std::move(pre);
      cache->act = std::move(act);
    }
    return y;
  }

  Mat<T> backward(const Cache& c, const Mat<T>& dy) {
    Mat<T> dact = fc2.backward(c.act, dy);
    Mat<T> dpre = dact.cwiseProduct(c.pre.unaryExpr([](T v) { return gelu_grad(v); }));
    return fc1.backward(c.x, dpre);
  }

  template <typename F>
  void visit(F&& f) {
    fc1.visit(f);
    fc2.visit(f);
  }
};

// Row vector L2 normalisation and its vector-Jacobian product.
template <typename T>
RowVec<T> l2_normalize(const RowVec<T>& y, T* norm_out) {
  const T norm = y.norm();
  if (!(norm > T(0))) throw ContractError("cannot normalise a zero vector");
  if (norm_out) *norm_out = norm;
  return y / norm;
}

template <typename T>
RowVec<T> l2_normalize_backward(const RowVec<T>& z, T norm, const RowVec<T>& dz) {
  return (dz - z * z.dot(dz)) / norm;
}

}  // namespace avlip::nn
