#pragma once

#include "avlip/common.hpp"

#include <cmath>
#include <utility>

namespace avlip {

struct ContrastiveConfig {
  double temperature = 0.1;
};

template <typename T>
struct InfoNceResult {
  T loss = T(0);
  T loss_va = T(0);
  T loss_av = T(0);
  Mat<T> logits;  // B x B, logits(i, j) = zv_i . za_j / tau
  Mat<T> grad_v;  // dL/dZv
  Mat<T> grad_a;  // dL/dZa
};

namespace detail {

template <typename T>
void check_pair_batch(const Mat<T>& zv, const Mat<T>& za) {
  if (zv.rows() != za.rows() || zv.cols() != za.cols()) throw ArgumentError("info_nce: batch shape mismatch");
  if (zv.rows() < 2) throw ArgumentError("info_nce: batch size must be >= 2");
  for (Eigen::Index i = 0; i < zv.rows(); ++i) {
    if (std::abs(zv.row(i).norm() - T(1)) > T(1e-5) || std::abs(za.row(i).norm() - T(1)) > T(1e-5))
      throw ContractError("info_nce: embedding rows must be unit-norm");
  }
}

// Row-wise softmax of m, numerically stabilised.
template <typename T>
Mat<T> softmax_rows(const Mat<T>& m) {
  Mat<T> p(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const T mx = m.row(i).maxCoeff();
    p.row(i) = (m.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

template <typename T>
T mean_diag_nll(const Mat<T>& m) {
  T total = T(0);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const T mx = m.row(i).maxCoeff();
    const T lse = mx + std::log((m.row(i).array() - mx).exp().sum());
    total += lse - m(i, i);
  }
  return total / static_cast<T>(m.rows());
}

}  // namespace detail

// Symmetric InfoNCE with in-batch negatives: row i of zv pairs with row i of
// za; every other row of the opposite modality is a negative.
template <typename T>
InfoNceResult<T> info_nce(const Mat<T>& zv, const Mat<T>& za, double tau, bool with_grad = true) {
  if (!(tau > 0.0)) throw ArgumentError("info_nce: temperature must be positive");
  detail::check_pair_batch(zv, za);
  const Eigen::Index b = zv.rows();
  InfoNceResult<T> r;
  r.logits = (zv * za.transpose()) / static_cast<T>(tau);
  r.loss_va = detail::mean_diag_nll<T>(r.logits);
  const Mat<T> lt = r.logits.transpose();
  r.loss_av = detail::mean_diag_nll<T>(lt);
  r.loss = T(0.5) * (r.loss_va + r.loss_av);
  if (with_grad) {
    const Mat<T> eye = Mat<T>::Identity(b, b);
    Mat<T> dlogits = (detail::softmax_rows<T>(r.logits) - eye) * (T(0.5) / static_cast<T>(b));
    dlogits += (detail::softmax_rows<T>(lt) - eye).transpose() * (T(0.5) / static_cast<T>(b));
    r.grad_v = dlogits * za / static_cast<T>(tau);
    r.grad_a = dlogits.transpose() * zv / static_cast<T>(tau);
  }
  return r;
}

struct RetrievalAccuracy {
  double v2a_top1 = 0.0;
  double a2v_top1 = 0.0;
};

// Fraction of rows (columns) whose diagonal similarity is the strict maximum.
template <typename T>
RetrievalAccuracy batch_retrieval_accuracy(const Mat<T>& zv, const Mat<T>& za) {
  detail::check_pair_batch(zv, za);
  const Mat<T> s = zv * za.transpose();
  const Eigen::Index b = s.rows();
  int v2a = 0, a2v = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    bool row_ok = true, col_ok = true;
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j == i) continue;
      if (!(s(i, i) > s(i, j))) row_ok = false;
      if (!(s(i, i) > s(j, i))) col_ok = false;
    }
    v2a += row_ok;
    a2v += col_ok;
  }
  return {static_cast<double>(v2a) / b, static_cast<double>(a2v) / b};
}

}  // namespace avlip
