#pragma once

#include "avlip/video_encoder.hpp"

#include <numeric>
#include <span>

namespace avlip {

struct AudioEncoderConfig {
  std::vector<int> conv_strides{10, 8, 8};
  std::vector<int> conv_channels{16, 32, 32};
  nn::TransformerShape transformer{};
  int max_tokens = 50;
  int pool_tokens = 4;
  int proj_dim = 256;
  bool conv_frozen = false;

  int samples_per_token() const {
    return std::accumulate(conv_strides.begin(), conv_strides.end(), 1, std::multiplies<>());
  }

  void validate() const {
    if (conv_strides.empty() || conv_strides.size() != conv_channels.size())
      throw ConfigError("audio.conv_strides and audio.conv_channels must be non-empty and equally long");
    for (std::size_t i = 0; i < conv_strides.size(); ++i)
      if (conv_strides[i] < 1 || conv_channels[i] < 1) throw ConfigError("audio conv sizes must be positive");
    const int spt = samples_per_token();
    if (kSamplesPerFrame % spt != 0 && spt % kSamplesPerFrame != 0)
      throw ConfigError("audio: stride product must divide 640 or be a multiple of it");
    const auto& t = transformer;
    if (t.n_heads * t.head_dim != t.d_model) throw ConfigError("audio: n_heads * head_dim must equal d_model");
    if (!(t.dropout >= 0.0 && t.dropout < 1.0)) throw ConfigError("audio.dropout must lie in [0, 1)");
    if (max_tokens < 1 || pool_tokens < 1 || proj_dim < 1) throw ConfigError("audio: sizes must be positive");
  }
};

inline void to_json(nlohmann::json& j, const AudioEncoderConfig& c) {
  j = {{"conv_strides", c.conv_strides}, {"conv_channels", c.conv_channels}, {"transformer", c.transformer},
       {"max_tokens", c.max_tokens},     {"pool_tokens", c.pool_tokens},     {"proj_dim", c.proj_dim},
       {"conv_frozen", c.conv_frozen}};
}
inline void from_json(const nlohmann::json& j, AudioEncoderConfig& c) {
  c.conv_strides = j.value("conv_strides", c.conv_strides);
  c.conv_channels = j.value("conv_channels", c.conv_channels);
  if (j.contains("transformer")) c.transformer = j.at("transformer").get<nn::TransformerShape>();
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.pool_tokens = j.value("pool_tokens", c.pool_tokens);
  c.proj_dim = j.value("proj_dim", c.proj_dim);
  c.conv_frozen = j.value("conv_frozen", c.conv_frozen);
}

namespace nn {

// Non-overlapping 1-D convolution (kernel == stride) over a C x L signal.
template <typename T>
struct PatchConv1d {
  Param<T> weight;  // out x (in * stride)
  Param<T> bias;
  int in_ch = 1, out_ch = 1, stride = 1;

  PatchConv1d() = default;
  PatchConv1d(const std::string& name, int in, int out, int s)
      : weight(name + ".weight", out, in * s), bias(name + ".bias", 1, out, false), in_ch(in), out_ch(out), stride(s) {}

  void init(Rng& rng) { init_he(weight, rng, in_ch * stride); }

  Mat<T> im2col(const Mat<T>& x) const {
    const Eigen::Index m = x.cols() / stride;
    Mat<T> col(in_ch * stride, m);
    for (int c = 0; c < in_ch; ++c)
      for (int j = 0; j < stride; ++j)
        for (Eigen::Index p = 0; p < m; ++p) col(c * stride + j, p) = x(c, p * stride + j);
    return col;
  }

  Mat<T> forward(const Mat<T>& x) const {
    Mat<T> y = weight.value * im2col(x);
    y.colwise() += bias.value.row(0).transpose();
    return y;
  }

  Mat<T> backward(const Mat<T>& x, const Mat<T>& dy) {
    weight.grad.noalias() += dy * im2col(x).transpose();
    bias.grad.row(0) += dy.rowwise().sum().transpose();
    const Mat<T> dcol = weight.value.transpose() * dy;
    Mat<T> dx = Mat<T>::Zero(x.rows(), x.cols());
    for (int c = 0; c < in_ch; ++c)
      for (int j = 0; j < stride; ++j)
        for (Eigen::Index p = 0; p < dy.cols(); ++p) dx(c, p * stride + j) = dcol(c * stride + j, p);
    return dx;
  }

  template <typename F>
  void visit(F&& f) {
    f(weight);
    f(bias);
  }
};

}  // namespace nn

// Strided 1-D conv token extractor + transformer + pooling + projection.
// Shape-compatible stand-in for a wav2vec2-style backbone, trained from scratch.
template <typename T>
struct AudioEncoder {
  AudioEncoderConfig cfg;
  std::vector<nn::PatchConv1d<T>> convs;
  TemporalBackend<T> backend;
  std::optional<nn::Mlp<T>> proj_head;

  struct FrontendCache {
    std::vector<Mat<T>> inputs;  // input to each conv
    std::vector<Mat<T>> pre;     // pre-activation of each conv
  };

  explicit AudioEncoder(const AudioEncoderConfig& c) : cfg(c) {
    cfg.validate();
    int in = 1;
    for (std::size_t i = 0; i < cfg.conv_strides.size(); ++i) {
      convs.emplace_back("audio.frontend.conv" + std::to_string(i), in, cfg.conv_channels[i], cfg.conv_strides[i]);
      in = cfg.conv_channels[i];
    }
    backend = TemporalBackend<T>("audio.backend", in, cfg.transformer, cfg.max_tokens, cfg.pool_tokens);
  }

  int flat_dim() const { return cfg.pool_tokens * cfg.transformer.d_model; }

  void init(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& c : convs) c.init(rng);
    backend.init(rng);
    proj_head.emplace("audio.proj", flat_dim(), cfg.transformer.d_model, cfg.proj_dim);
    proj_head->init(rng);
  }

  int token_count(std::size_t samples) const { return static_cast<int>(samples / static_cast<std::size_t>(cfg.samples_per_token())); }

  // Conv features, one row per token (M x C_last).
  Mat<T> wave_frontend(std::span<const T> wave, FrontendCache* c = nullptr) const {
    const int m = token_count(wave.size());
    if (m < 1) throw ArgumentError("audio: wave shorter than one token");
    Mat<T> x(1, static_cast<Eigen::Index>(m) * cfg.samples_per_token());
    for (Eigen::Index i = 0; i < x.cols(); ++i) x(0, i) = wave[static_cast<std::size_t>(i)];
    if (c) {
      c->inputs.clear();
      c->pre.clear();
    }
    for (const auto& conv : convs) {
      Mat<T> pre = conv.forward(x);
      if (c) c->inputs.push_back(x);
      x = pre.unaryExpr([](T v) { return nn::gelu(v); });
      if (c) c->pre.push_back(std::move(pre));
    }
    return x.transpose();
  }

  void wave_frontend_backward(const FrontendCache& c, const Mat<T>& dtokens) {
    Mat<T> d = dtokens.transpose();
    for (std::size_t i = convs.size(); i-- > 0;) {
      d = d.cwiseProduct(c.pre[i].unaryExpr([](T v) { return nn::gelu_grad(v); }));
      d = convs[i].backward(c.inputs[i], d);
    }
  }

  Mat<T> backend_forward(const Mat<T>& tokens, Mode mode, Rng* rng = nullptr,
                         typename TemporalBackend<T>::Cache* c = nullptr) const {
    return backend.forward(tokens, static_cast<int>(tokens.rows()), mode, rng, c);
  }

  RowVec<T> project(const Mat<T>& pooled, ProjectionCache<T>* c = nullptr) const {
    if (!proj_head) throw StateError("audio encoder has no projection head");
    return project_forward(*proj_head, pooled, c);
  }

  Mat<T> project_backward(const ProjectionCache<T>& c, const RowVec<T>& dz) {
    return avlip::project_backward(*proj_head, c, dz, cfg.pool_tokens, cfg.transformer.d_model);
  }

  Embedding<T> audio_forward(std::span<const T> wave, Mode mode = Mode::eval, Rng* rng = nullptr) const {
    Mat<T> pooled = backend_forward(wave_frontend(wave), mode, rng);
    RowVec<T> z = project(pooled);
    return {std::move(pooled), std::move(z)};
  }

  template <typename F>
  void visit_frontend(F&& f) {
    for (auto& c : convs) c.visit(f);
  }
  template <typename F>
  void visit(F&& f) {
    visit_frontend(f);
    backend.visit(f);
    if (proj_head) proj_head->visit(f);
  }
};

}  // namespace avlip
