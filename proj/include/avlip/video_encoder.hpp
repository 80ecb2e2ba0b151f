#pragma once

#include "avlip/nn/conv.hpp"
#include "avlip/nn/transformer.hpp"
#include "avlip/tensor.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace avlip {

struct VideoEncoderConfig {
  std::vector<int> frontend_channels{16, 32, 64};
  int resnet_blocks_per_stage = 2;
  int frontend_out_dim = 64;  // equals the last stage width
  int input_size = 44;        // square crop fed to the stem
  nn::TransformerShape transformer{};
  int max_seq_len = 50;
  int pool_tokens = 4;
  int proj_dim = 256;

  void validate() const {
    if (frontend_channels.empty()) throw ConfigError("video.frontend_channels must not be empty");
    for (int c : frontend_channels)
      if (c <= 0) throw ConfigError("video.frontend_channels entries must be positive");
    if (frontend_out_dim != frontend_channels.back())
      throw ConfigError("video.frontend_out_dim must equal the last frontend stage width");
    if (resnet_blocks_per_stage < 1) throw ConfigError("video.resnet_blocks_per_stage must be >= 1");
    if (input_size < 8) throw ConfigError("video.input_size too small");
    const auto& t = transformer;
    if (t.n_heads * t.head_dim != t.d_model) throw ConfigError("video: n_heads * head_dim must equal d_model");
    if (t.n_layers < 1 || t.ff_dim < 1) throw ConfigError("video: transformer needs >= 1 layer and ff_dim >= 1");
    if (!(t.dropout >= 0.0 && t.dropout < 1.0)) throw ConfigError("video.dropout must lie in [0, 1)");
    if (max_seq_len < 1 || pool_tokens < 1 || proj_dim < 1) throw ConfigError("video: sizes must be positive");
  }
};

namespace nn {
inline void to_json(nlohmann::json& j, const TransformerShape& s) {
  j = {{"d_model", s.d_model}, {"n_layers", s.n_layers}, {"n_heads", s.n_heads},
       {"head_dim", s.head_dim}, {"ff_dim", s.ff_dim}, {"dropout", s.dropout}};
}
inline void from_json(const nlohmann::json& j, TransformerShape& s) {
  s.d_model = j.value("d_model", s.d_model);
  s.n_layers = j.value("n_layers", s.n_layers);
  s.n_heads = j.value("n_heads", s.n_heads);
  s.head_dim = j.value("head_dim", s.head_dim);
  s.ff_dim = j.value("ff_dim", s.ff_dim);
  s.dropout = j.value("dropout", s.dropout);
}
}  // namespace nn

inline void to_json(nlohmann::json& j, const VideoEncoderConfig& c) {
  j = {{"frontend_channels", c.frontend_channels},
       {"resnet_blocks_per_stage", c.resnet_blocks_per_stage},
       {"frontend_out_dim", c.frontend_out_dim},
       {"input_size", c.input_size},
       {"transformer", c.transformer},
       {"max_seq_len", c.max_seq_len},
       {"pool_tokens", c.pool_tokens},
       {"proj_dim", c.proj_dim}};
}
inline void from_json(const nlohmann::json& j, VideoEncoderConfig& c) {
  c.frontend_channels = j.value("frontend_channels", c.frontend_channels);
  c.resnet_blocks_per_stage = j.value("resnet_blocks_per_stage", c.resnet_blocks_per_stage);
  c.frontend_out_dim = j.value("frontend_out_dim", c.frontend_out_dim);
  c.input_size = j.value("input_size", c.input_size);
  if (j.contains("transformer")) c.transformer = j.at("transformer").get<nn::TransformerShape>();
  c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  c.pool_tokens = j.value("pool_tokens", c.pool_tokens);
  c.proj_dim = j.value("proj_dim", c.proj_dim);
}

// One feature vector per input frame; rows past valid_len are padding.
template <typename T>
struct FrameFeatureSeq {
  Mat<T> features;
  int valid_len = 0;

  FrameFeatureSeq padded_to(int len) const {
    if (len < valid_len) throw ArgumentError("cannot pad below the valid length");
    FrameFeatureSeq out{Mat<T>::Zero(len, features.cols()), valid_len};
    out.features.topRows(valid_len) = features.topRows(valid_len);
    return out;
  }
};

template <typename T>
struct Embedding {
  Mat<T> pooled;  // K x d_model
  RowVec<T> z;    // unit norm, proj_dim
};

// Caches carried from a forward pass to the matching backward pass.
template <typename T>
struct ProjectionCache {
  typename nn::Mlp<T>::Cache mlp;
  RowVec<T> z;
  T norm = T(0);
};

template <typename T>
RowVec<T> project_forward(const nn::Mlp<T>& head, const Mat<T>& pooled, ProjectionCache<T>* cache) {
  const Mat<T> y = head.forward(nn::flatten(pooled), cache ? &cache->mlp : nullptr);
  T norm{};
  RowVec<T> z = nn::l2_normalize<T>(y.row(0), &norm);
  if (cache) {
    cache->z = z;
    cache->norm = norm;
  }
  return z;
}

// Returns dL/dpooled.
template <typename T>
Mat<T> project_backward(nn::Mlp<T>& head, const ProjectionCache<T>& c, const RowVec<T>& dz, Eigen::Index k, Eigen::Index d) {
  const RowVec<T> dy = nn::l2_normalize_backward<T>(c.z, c.norm, dz);
  const Mat<T> dflat = head.backward(c.mlp, Mat<T>(dy));
  return nn::unflatten<T>(dflat.row(0), k, d);
}

// Shared temporal backend: linear projection, learnable positional
// embeddings, pre-norm transformer, K-bin adaptive average pooling.
template <typename T>
struct TemporalBackend {
  nn::Linear<T> in_proj;
  nn::Param<T> pos_emb;
  nn::Transformer<T> transformer;
  int pool_tokens = 4;
  double dropout = 0.0;

  struct Cache {
    Mat<T> input;
    Mat<T> drop;
    typename nn::Transformer<T>::Cache transformer;
    Eigen::Index rows = 0;
    int valid_len = 0;
  };

  TemporalBackend() = default;
  TemporalBackend(const std::string& name, int in_dim, const nn::TransformerShape& shape, int max_len, int k)
      : in_proj(name + ".in_proj", in_dim, shape.d_model), pos_emb(name + ".pos_emb", max_len, shape.d_model, false),
        transformer(name + ".transformer", shape), pool_tokens(k), dropout(shape.dropout) {}

  void init(Rng& rng) {
    in_proj.init(rng);
    nn::init_normal(pos_emb, rng, 0.02);
    transformer.init(rng);
  }

  int max_len() const { return static_cast<int>(pos_emb.value.rows()); }

  Mat<T> forward(const Mat<T>& input, int valid_len, Mode mode, Rng* rng, Cache* c) const {
    if (valid_len < 1) throw ArgumentError("backend: valid_len must be >= 1");
    if (valid_len > input.rows()) throw ArgumentError("backend: valid_len exceeds sequence length");
    if (input.rows() > max_len()) throw ConfigError("backend: padded length exceeds max_seq_len");
    Mat<T> x = in_proj.forward(input) + pos_emb.value.topRows(input.rows());
    x = nn::dropout_forward(x, dropout, mode, rng, c ? &c->drop : nullptr);
    const Mat<T> h = transformer.forward(std::move(x), valid_len, mode, rng, c ? &c->transformer : nullptr);
    if (c) {
      c->input = input;
      c->rows = input.rows();
      c->valid_len = valid_len;
    }
    return nn::adaptive_avg_pool(h, valid_len, pool_tokens);
  }

  // Returns dL/dinput.
  Mat<T> backward(const Cache& c, const Mat<T>& dpooled) {
    const Mat<T> dh = nn::adaptive_avg_pool_backward(dpooled, c.rows, c.valid_len);
    Mat<T> dx = transformer.backward(c.transformer, dh);
    dx = nn::dropout_backward(c.drop, dx);
    pos_emb.grad.topRows(c.rows) += dx;
    return in_proj.backward(c.input, dx);
  }

  template <typename F>
  void visit(F&& f) {
    in_proj.visit(f);
    f(pos_emb);
    transformer.visit(f);
  }
};

template <typename T>
struct VideoEncoder {
  VideoEncoderConfig cfg;
  nn::Conv3dStem<T> stem;
  nn::MaxPool2d<T> pool;
  std::vector<nn::ResidualBlock<T>> blocks;
  TemporalBackend<T> backend;
  std::optional<nn::Mlp<T>> proj_head;  // contrastive projection (pre-training)
  std::optional<nn::Mlp<T>> cls_head;   // classification head (fine-tuning)

  struct FrontendCache {
    VideoTensor<T> clip;
    Feature4<T> stem_out;
    typename nn::MaxPool2d<T>::Cache pool;
    std::vector<typename nn::ResidualBlock<T>::Cache> blocks;
    int out_h = 0, out_w = 0;
  };

  explicit VideoEncoder(const VideoEncoderConfig& c) : cfg(c) {
    cfg.validate();
    stem = nn::Conv3dStem<T>("video.frontend.stem", cfg.frontend_channels.front(), 5, 7, 2);
    int in = cfg.frontend_channels.front();
    for (std::size_t s = 0; s < cfg.frontend_channels.size(); ++s) {
      const int out = cfg.frontend_channels[s];
      for (int b = 0; b < cfg.resnet_blocks_per_stage; ++b) {
        const int stride = (s > 0 && b == 0) ? 2 : 1;
        blocks.emplace_back("video.frontend.stage" + std::to_string(s) + ".block" + std::to_string(b), in, out, stride);
        in = out;
      }
    }
    backend = TemporalBackend<T>("video.backend", cfg.frontend_out_dim, cfg.transformer, cfg.max_seq_len, cfg.pool_tokens);
  }

  int flat_dim() const { return cfg.pool_tokens * cfg.transformer.d_model; }

  void init(std::uint64_t seed) {
    Rng rng(seed);
    stem.init(rng);
    for (auto& b : blocks) b.init(rng);
    backend.init(rng);
    add_proj_head(rng);
  }

  void add_proj_head(Rng& rng) {
    proj_head.emplace("video.proj", flat_dim(), cfg.transformer.d_model, cfg.proj_dim);
    proj_head->init(rng);
  }

  // Classification head; the final layer starts at zero so the initial
  // logit is exactly 0.
  void add_cls_head(std::uint64_t seed) {
    Rng rng(seed);
    cls_head.emplace("video.head", flat_dim(), cfg.transformer.d_model, 1);
    cls_head->init(rng, /*zero_last=*/true);
  }

  FrameFeatureSeq<T> frontend_forward(const VideoTensor<T>& clip, FrontendCache* c = nullptr) const {
    if (clip.frames < 5) throw ArgumentError("frontend: clip needs at least 5 frames");
    if (clip.height != cfg.input_size || clip.width != cfg.input_size)
      throw ShapeError("frontend: expected " + std::to_string(cfg.input_size) + "x" + std::to_string(cfg.input_size) +
                       " frames, got " + std::to_string(clip.height) + "x" + std::to_string(clip.width));
    Feature4<T> x = nn::relu_forward(stem.forward(clip));
    Feature4<T> h = pool.forward(x, c ? &c->pool : nullptr);
    if (c) {
      c->clip = clip;
      c->stem_out = std::move(x);
      c->blocks.resize(blocks.size());
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) h = blocks[i].forward(h, c ? &c->blocks[i] : nullptr);
    if (c) {
      c->out_h = h.height;
      c->out_w = h.width;
    }
    return {nn::global_avg_pool(h), clip.frames};
  }

  void frontend_backward(const FrontendCache& c, const Mat<T>& dfeat) {
    Feature4<T> d = nn::global_avg_pool_backward<T>(dfeat, c.out_h, c.out_w);
    for (std::size_t i = blocks.size(); i-- > 0;) d = blocks[i].backward(c.blocks[i], d);
    d = pool.backward(c.pool, d);
    d = nn::relu_backward(c.stem_out, std::move(d));
    stem.backward(c.clip, d);
  }

  // Temporal backend up to the pooled K x d_model tensor.
  Mat<T> backend_forward(const FrameFeatureSeq<T>& seq, Mode mode, Rng* rng = nullptr,
                         typename TemporalBackend<T>::Cache* c = nullptr) const {
    return backend.forward(seq.features, seq.valid_len, mode, rng, c);
  }

  Mat<T> backend_backward(const typename TemporalBackend<T>::Cache& c, const Mat<T>& dpooled) {
    return backend.backward(c, dpooled);
  }

  RowVec<T> project(const Mat<T>& pooled, ProjectionCache<T>* c = nullptr) const {
    if (!proj_head) throw StateError("video encoder has no projection head");
    return project_forward(*proj_head, pooled, c);
  }

  Mat<T> project_backward(const ProjectionCache<T>& c, const RowVec<T>& dz) {
    return avlip::project_backward(*proj_head, c, dz, cfg.pool_tokens, cfg.transformer.d_model);
  }

  Embedding<T> embed(const VideoTensor<T>& clip, Mode mode = Mode::eval, Rng* rng = nullptr) const {
    Mat<T> pooled = backend_forward(frontend_forward(clip), mode, rng);
    RowVec<T> z = project(pooled);
    return {std::move(pooled), std::move(z)};
  }

  T classify_head(const Mat<T>& pooled, typename nn::Mlp<T>::Cache* c = nullptr) const {
    if (!cls_head) throw StateError("no classification head: checkpoint was not prepared for fine-tuning");
    return cls_head->forward(nn::flatten(pooled), c)(0, 0);
  }

  // dL/dpooled given dL/dlogit.
  Mat<T> classify_backward(const typename nn::Mlp<T>::Cache& c, T dlogit) {
    Mat<T> dy(1, 1);
    dy(0, 0) = dlogit;
    const Mat<T> dflat = cls_head->backward(c, dy);
    return nn::unflatten<T>(dflat.row(0), cfg.pool_tokens, cfg.transformer.d_model);
  }

  T logit(const VideoTensor<T>& clip) const { return classify_head(backend_forward(frontend_forward(clip), Mode::eval)); }

  template <typename F>
  void visit_frontend(F&& f) {
    stem.visit(f);
    for (auto& b : blocks) b.visit(f);
  }
  template <typename F>
  void visit_backend(F&& f) {
    backend.visit(f);
  }
  template <typename F>
  void visit(F&& f) {
    visit_frontend(f);
    visit_backend(f);
    if (proj_head) proj_head->visit(f);
    if (cls_head) cls_head->visit(f);
  }
};

}  // namespace avlip
