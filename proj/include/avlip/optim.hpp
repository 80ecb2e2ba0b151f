#pragma once

#include "avlip/nn/param.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace avlip {

// Adam with decoupled weight decay. Per-parameter learning rates come from a
// callback so that layer-wise schedules need no parameter-group bookkeeping.
// Only parameters passed to step() are ever touched.
template <typename T>
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW() = default;
  explicit AdamW(Options o) : opt_(o) {}

  void step(const std::vector<nn::Param<T>*>& params, const std::function<double(const nn::Param<T>&)>& lr_of) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, t_);
    const double bc2 = 1.0 - std::pow(opt_.beta2, t_);
    for (auto* p : params) {
      auto& s = state_[p->name];
      if (s.m.size() == 0) {
        s.m = Mat<T>::Zero(p->value.rows(), p->value.cols());
        s.v = Mat<T>::Zero(p->value.rows(), p->value.cols());
      }
      const double lr = lr_of(*p);
      const T b1 = T(opt_.beta1), b2 = T(opt_.beta2);
      s.m = b1 * s.m + (T(1) - b1) * p->grad;
      s.v = b2 * s.v + (T(1) - b2) * p->grad.cwiseAbs2();
      if (p->decay && opt_.weight_decay > 0.0) p->value *= T(1.0 - lr * opt_.weight_decay);
      const T step_size = T(lr / bc1);
      const T denom_scale = T(1.0 / std::sqrt(bc2));
      p->value.array() -= step_size * s.m.array() / ((s.v.array().sqrt() * denom_scale) + T(opt_.eps));
    }
  }

  long long steps() const { return t_; }
  const Options& options() const { return opt_; }

 private:
  struct State {
    Mat<T> m, v;
  };
  Options opt_{};
  long long t_ = 0;
  std::unordered_map<std::string, State> state_;
};

}  // namespace avlip
