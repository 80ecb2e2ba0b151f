#pragma once

#include "avlip/common.hpp"
#include "avlip/rng.hpp"

#include <cmath>
#include <string>

namespace avlip::nn {

// A named learnable tensor with its gradient accumulator. Shapes are kept as
// matrices; 1-D parameters are stored as 1 x n rows.
template <typename T>
struct Param {
  std::string name;
  Mat<T> value;
  Mat<T> grad;
  bool decay = true;  // subject to decoupled weight decay

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols, bool wd = true)
      : name(std::move(n)), value(Mat<T>::Zero(rows, cols)), grad(Mat<T>::Zero(rows, cols)), decay(wd) {}

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

template <typename T>
void init_normal(Param<T>& p, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<T>(rng.normal(0.0, stddev));
}

// He-normal for ReLU fan-in.
template <typename T>
void init_he(Param<T>& p, Rng& rng, int fan_in, double gain = 1.0) {
  init_normal(p, rng, gain * std::sqrt(2.0 / fan_in));
}

template <typename T>
void init_xavier(Param<T>& p, Rng& rng, int fan_in, int fan_out) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<T>(rng.uniform(-a, a));
}

}  // namespace avlip::nn
