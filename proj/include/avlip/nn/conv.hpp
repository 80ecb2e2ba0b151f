#pragma once

#include "avlip/nn/param.hpp"
#include "avlip/tensor.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

namespace avlip::nn {

inline int conv_out(int in, int kernel, int stride, int pad) { return (in + 2 * pad - kernel) / stride + 1; }

// 2-D convolution applied independently to each of the N frames of a
// C x N x H x W block (im2col + GEMM).
template <typename T>
struct Conv2d {
  Param<T> weight;  // out x (in * k * k)
  Param<T> bias;    // 1 x out
  int in_ch = 0, out_ch = 0, kernel = 3, stride = 1, pad = 1;

  Conv2d() = default;
  Conv2d(const std::string& name, int in, int out, int k, int s, int p)
      : weight(name + ".weight", out, in * k * k), bias(name + ".bias", 1, out, false),
        in_ch(in), out_ch(out), kernel(k), stride(s), pad(p) {}

  void init(Rng& rng, double gain = 1.0) { init_he(weight, rng, in_ch * kernel * kernel, gain); }

  Mat<T> im2col(const Feature4<T>& x, int ho, int wo) const {
    const int kk = kernel * kernel;
    Mat<T> col = Mat<T>::Zero(in_ch * kk, static_cast<Eigen::Index>(x.count) * ho * wo);
    for (int c = 0; c < in_ch; ++c)
      for (int ky = 0; ky < kernel; ++ky)
        for (int kx = 0; kx < kernel; ++kx) {
          T* row = col.row((c * kernel + ky) * kernel + kx).data();
          for (int n = 0; n < x.count; ++n)
            for (int oy = 0; oy < ho; ++oy) {
              const int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= x.height) continue;
              T* out = row + (static_cast<std::size_t>(n) * ho + oy) * wo;
              for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride - pad + kx;
                if (ix >= 0 && ix < x.width) out[ox] = x.at(c, n, iy, ix);
              }
            }
        }
    return col;
  }

  void col2im(const Mat<T>& col, Feature4<T>& dx, int ho, int wo) const {
    for (int c = 0; c < in_ch; ++c)
      for (int ky = 0; ky < kernel; ++ky)
        for (int kx = 0; kx < kernel; ++kx) {
          const T* row = col.row((c * kernel + ky) * kernel + kx).data();
          for (int n = 0; n < dx.count; ++n)
            for (int oy = 0; oy < ho; ++oy) {
              const int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= dx.height) continue;
              const T* src = row + (static_cast<std::size_t>(n) * ho + oy) * wo;
              for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride - pad + kx;
                if (ix >= 0 && ix < dx.width) dx.at(c, n, iy, ix) += src[ox];
              }
            }
        }
  }

  Feature4<T> forward(const Feature4<T>& x) const {
    if (x.channels != in_ch) throw ShapeError(weight.name + ": channel mismatch");
    const int ho = conv_out(x.height, kernel, stride, pad);
    const int wo = conv_out(x.width, kernel, stride, pad);
    Feature4<T> y(out_ch, x.count, ho, wo);
    auto ym = y.as_matrix();
    ym.noalias() = weight.value * im2col(x, ho, wo);
    ym.colwise() += bias.value.row(0).transpose();
    return y;
  }

  // `x` is the forward input. Returns dL/dx unless `need_input_grad` is false.
  Feature4<T> backward(const Feature4<T>& x, const Feature4<T>& dy, bool need_input_grad = true) {
    const Mat<T> col = im2col(x, dy.height, dy.width);
    const auto dym = dy.as_matrix();
    weight.grad.noalias() += dym * col.transpose();
    bias.grad.row(0) += dym.rowwise().sum().transpose();
    Feature4<T> dx;
    if (!need_input_grad) return dx;
    dx = Feature4<T>(in_ch, x.count, x.height, x.width);
    const Mat<T> dcol = weight.value.transpose() * dym;
    col2im(dcol, dx, dy.height, dy.width);
    return dx;
  }

  template <typename F>
  void visit(F&& f) {
    f(weight);
    f(bias);
  }
};

// Single-channel spatio-temporal stem: kernel (kt, k, k), stride (1, s, s),
// padding (kt/2, k/2, k/2). Output frame t sees input frames t-2..t+2 only.
template <typename T>
struct Conv3dStem {
  Param<T> weight;  // out x (kt * k * k)
  Param<T> bias;
  int out_ch = 0, kt = 5, k = 7, stride = 2;

  Conv3dStem() = default;
  Conv3dStem(const std::string& name, int out, int kt_, int k_, int s)
      : weight(name + ".weight", out, kt_ * k_ * k_), bias(name + ".bias", 1, out, false),
        out_ch(out), kt(kt_), k(k_), stride(s) {}

  void init(Rng& rng) { init_he(weight, rng, kt * k * k); }

  int out_size(int in) const { return conv_out(in, k, stride, k / 2); }

  Mat<T> im2col(const VideoTensor<T>& clip, int ho, int wo) const {
    const int pt = kt / 2, ps = k / 2;
    Mat<T> col = Mat<T>::Zero(kt * k * k, static_cast<Eigen::Index>(clip.frames) * ho * wo);
    for (int dt = 0; dt < kt; ++dt)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          T* row = col.row((dt * k + ky) * k + kx).data();
          for (int t = 0; t < clip.frames; ++t) {
            const int it = t - pt + dt;
            if (it < 0 || it >= clip.frames) continue;
            for (int oy = 0; oy < ho; ++oy) {
              const int iy = oy * stride - ps + ky;
              if (iy < 0 || iy >= clip.height) continue;
              T* out = row + (static_cast<std::size_t>(t) * ho + oy) * wo;
              for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride - ps + kx;
                if (ix >= 0 && ix < clip.width) out[ox] = clip.at(it, iy, ix);
              }
            }
          }
        }
    return col;
  }

  Feature4<T> forward(const VideoTensor<T>& clip) const {
    const int ho = out_size(clip.height), wo = out_size(clip.width);
    Feature4<T> y(out_ch, clip.frames, ho, wo);
    auto ym = y.as_matrix();
    ym.noalias() = weight.value * im2col(clip, ho, wo);
    ym.colwise() += bias.value.row(0).transpose();
    return y;
  }

  // Parameter gradients only; the stem is the first layer.
  void backward(const VideoTensor<T>& clip, const Feature4<T>& dy) {
    const Mat<T> col = im2col(clip, dy.height, dy.width);
    const auto dym = dy.as_matrix();
    weight.grad.noalias() += dym * col.transpose();
    bias.grad.row(0) += dym.rowwise().sum().transpose();
  }

  template <typename F>
  void visit(F&& f) {
    f(weight);
    f(bias);
  }
};

template <typename T>
Feature4<T> relu_forward(Feature4<T> x) {
  for (auto& v : x.data) v = v > T(0) ? v : T(0);
  return x;
}

// `y` is the ReLU output.
template <typename T>
Feature4<T> relu_backward(const Feature4<T>& y, Feature4<T> dy) {
  for (std::size_t i = 0; i < dy.data.size(); ++i)
    if (!(y.data[i] > T(0))) dy.data[i] = T(0);
  return dy;
}

// 3x3 max pool, stride 2, padding 1.
template <typename T>
struct MaxPool2d {
  int kernel = 3, stride = 2, pad = 1;

  struct Cache {
    std::vector<int> argmax;  // flat input index per output element
    int in_h = 0, in_w = 0;
  };

  Feature4<T> forward(const Feature4<T>& x, Cache* cache) const {
    const int ho = conv_out(x.height, kernel, stride, pad), wo = conv_out(x.width, kernel, stride, pad);
    Feature4<T> y(x.channels, x.count, ho, wo);
    std::vector<int> arg(y.data.size());
    std::size_t o = 0;
    for (int c = 0; c < x.channels; ++c)
      for (int n = 0; n < x.count; ++n)
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox, ++o) {
            T best = -std::numeric_limits<T>::infinity();
            int best_idx = -1;
            for (int ky = 0; ky < kernel; ++ky) {
              const int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= x.height) continue;
              for (int kx = 0; kx < kernel; ++kx) {
                const int ix = ox * stride - pad + kx;
                if (ix < 0 || ix >= x.width) continue;
                const int idx = static_cast<int>(((static_cast<std::size_t>(c) * x.count + n) * x.height + iy) * x.width + ix);
                if (x.data[static_cast<std::size_t>(idx)] > best) {
                  best = x.data[static_cast<std::size_t>(idx)];
                  best_idx = idx;
                }
              }
            }
            y.data[o] = best;
            arg[o] = best_idx;
          }
    if (cache) {
      cache->argmax = std::move(arg);
      cache->in_h = x.height;
      cache->in_w = x.width;
    }
    return y;
  }

  Feature4<T> backward(const Cache& c, const Feature4<T>& dy) const {
    Feature4<T> dx(dy.channels, dy.count, c.in_h, c.in_w);
    for (std::size_t o = 0; o < dy.data.size(); ++o) dx.data[static_cast<std::size_t>(c.argmax[o])] += dy.data[o];
    return dx;
  }
};

// Basic residual block: conv3x3(stride) - ReLU - conv3x3 (+ 1x1 projection
// shortcut when the shape changes) - ReLU.
template <typename T>
struct ResidualBlock {
  Conv2d<T> conv1;
  Conv2d<T> conv2;
  Conv2d<T> shortcut;
  bool project = false;

  struct Cache {
    Feature4<T> x;
    Feature4<T> h1;   // after first ReLU
    Feature4<T> out;  // after final ReLU
  };

  ResidualBlock() = default;
  ResidualBlock(const std::string& name, int in, int out, int stride)
      : conv1(name + ".conv1", in, out, 3, stride, 1), conv2(name + ".conv2", out, out, 3, 1, 1),
        shortcut(name + ".shortcut", in, out, 1, stride, 0), project(in != out || stride != 1) {}

  void init(Rng& rng) {
    conv1.init(rng);
    // Residual branch starts small so the block is close to its shortcut.
    conv2.init(rng, 0.25);
    if (project) shortcut.init(rng);
  }

  Feature4<T> forward(const Feature4<T>& x, Cache* cache) const {
    Feature4<T> h1 = relu_forward(conv1.forward(x));
    Feature4<T> y = conv2.forward(h1);
    if (project) {
      const Feature4<T> s = shortcut.forward(x);
      for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += s.data[i];
    } else {
      for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += x.data[i];
    }
    y = relu_forward(std::move(y));
    if (cache) {
      cache->x = x;
      cache->h1 = std::move(h1);
      cache->out = y;
    }
    return y;
  }

  Feature4<T> backward(const Cache& c, const Feature4<T>& dout, bool need_input_grad = true) {
    const Feature4<T> dy = relu_backward(c.out, dout);
    Feature4<T> dh1 = conv2.backward(c.h1, dy);
    dh1 = relu_backward(c.h1, std::move(dh1));
    Feature4<T> dx = conv1.backward(c.x, dh1, need_input_grad);
    if (project) {
      Feature4<T> ds = shortcut.backward(c.x, dy, need_input_grad);
      if (need_input_grad)
        for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += ds.data[i];
    } else if (need_input_grad) {
      for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dy.data[i];
    }
    return dx;
  }

  template <typename F>
  void visit(F&& f) {
    conv1.visit(f);
    conv2.visit(f);
    if (project) shortcut.visit(f);
  }
};

// Spatial mean per (channel, frame) -> N x C matrix (one row per frame).
template <typename T>
Mat<T> global_avg_pool(const Feature4<T>& x) {
  Mat<T> out(x.count, x.channels);
  const std::size_t plane = x.plane();
  for (int c = 0; c < x.channels; ++c)
    for (int n = 0; n < x.count; ++n) {
      const T* p = x.data.data() + (static_cast<std::size_t>(c) * x.count + n) * plane;
      T s = T(0);
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      out(n, c) = s / static_cast<T>(plane);
    }
  return out;
}

template <typename T>
Feature4<T> global_avg_pool_backward(const Mat<T>& dout, int h, int w) {
  Feature4<T> dx(static_cast<int>(dout.cols()), static_cast<int>(dout.rows()), h, w);
  const std::size_t plane = dx.plane();
  for (int c = 0; c < dx.channels; ++c)
    for (int n = 0; n < dx.count; ++n) {
      const T g = dout(n, c) / static_cast<T>(plane);
      T* p = dx.data.data() + (static_cast<std::size_t>(c) * dx.count + n) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] = g;
    }
  return dx;
}

}  // namespace avlip::nn
