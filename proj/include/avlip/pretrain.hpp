#pragma once

#include "avlip/audio_encoder.hpp"
#include "avlip/augment.hpp"
#include "avlip/checkpoint.hpp"
#include "avlip/contrastive.hpp"
#include "avlip/data.hpp"
#include "avlip/optim.hpp"
#include "avlip/synth/corpus.hpp"
#include "avlip/video_encoder.hpp"

#include <chrono>
#include <functional>

namespace avlip {

struct PretrainConfig {
  int clip_len = 50;
  int batch_size = 8;
  double lr0 = 0.01;
  double lr_decay = 0.9;
  double lr_floor = 1e-4;
  int plateau_epochs = 3;
  double plateau_threshold = 1e-4;
  int max_epochs = 100;
  int steps_per_epoch = 0;  // 0: one pass over the corpus per epoch
  double weight_decay = 0.01;
  double temperature = 0.1;
  std::uint64_t seed = 0;
  AugmentConfig augment{};

  void validate() const {
    if (clip_len < 5) throw ConfigError("pretrain.clip_len must be >= 5");
    if (batch_size < 2) throw ConfigError("pretrain.batch_size must be >= 2");
    if (!(lr_floor > 0.0)) throw ConfigError("pretrain.lr_floor must be > 0");
    if (lr0 < lr_floor) throw ConfigError("pretrain.lr0 must be >= lr_floor");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("pretrain.lr_decay must lie in (0, 1]");
    if (plateau_epochs < 1) throw ConfigError("pretrain.plateau_epochs must be >= 1");
    if (max_epochs < 1) throw ConfigError("pretrain.max_epochs must be >= 1");
    if (steps_per_epoch < 0) throw ConfigError("pretrain.steps_per_epoch must be >= 0");
    if (!(temperature > 0.0)) throw ConfigError("pretrain.temperature must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const PretrainConfig& c) {
  j = {{"clip_len", c.clip_len},         {"batch_size", c.batch_size},
       {"lr0", c.lr0},                   {"lr_decay", c.lr_decay},
       {"lr_floor", c.lr_floor},         {"plateau_epochs", c.plateau_epochs},
       {"plateau_threshold", c.plateau_threshold}, {"max_epochs", c.max_epochs},
       {"steps_per_epoch", c.steps_per_epoch},     {"weight_decay", c.weight_decay},
       {"temperature", c.temperature},   {"seed", c.seed},
       {"augment", c.augment}};
}
inline void from_json(const nlohmann::json& j, PretrainConfig& c) {
  c.clip_len = j.value("clip_len", c.clip_len);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr0 = j.value("lr0", c.lr0);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.lr_floor = j.value("lr_floor", c.lr_floor);
  c.plateau_epochs = j.value("plateau_epochs", c.plateau_epochs);
  c.plateau_threshold = j.value("plateau_threshold", c.plateau_threshold);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.temperature = j.value("temperature", c.temperature);
  c.seed = j.value("seed", c.seed);
  if (j.contains("augment")) c.augment = j.at("augment").get<AugmentConfig>();
}

// lr at epoch k: max(lr0 * decay^k, floor).
inline double pretrain_lr(int epoch, const PretrainConfig& c) {
  return std::max(c.lr0 * std::pow(c.lr_decay, epoch), c.lr_floor);
}

struct TrainState {
  int epoch = 0;
  long long step = 0;
  double current_lr = 0.0;
  double best_loss = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;
};

struct PretrainEpoch {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  double retrieval_v2a = 0.0;
  double retrieval_a2v = 0.0;
  double wall_time_s = 0.0;
};

inline void to_json(nlohmann::json& j, const PretrainEpoch& e) {
  j = {{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"lr", e.lr}, {"retrieval_v2a", e.retrieval_v2a},
       {"retrieval_a2v", e.retrieval_a2v}, {"wall_time_s", e.wall_time_s}};
}

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<PretrainEpoch> log;
  std::vector<double> step_losses;
  std::string stop_reason;  // "plateau" or "max_epochs"
  RetrievalAccuracy final_retrieval;
};

// A video/audio encoder pair trained jointly.
struct AvModel {
  VideoEncoder<float> video;
  AudioEncoder<float> audio;

  AvModel(const VideoEncoderConfig& vc, const AudioEncoderConfig& ac) : video(vc), audio(ac) {}

  void init(std::uint64_t seed) {
    video.init(derive_seed(seed, {1}));
    audio.init(derive_seed(seed, {2}));
  }

  template <typename F>
  void visit(F&& f) {
    video.visit(f);
    audio.visit(f);
  }
};

// Deterministic view of a clip for evaluation: first `len` frames, centre crop.
inline Segment eval_segment(const ClipFile& c, int len, int crop) {
  if (c.frames.frames < len) throw ArgumentError("clip shorter than segment length");
  Segment s;
  s.frames = eval_view(c.frames.slice(0, len), crop);
  s.wave.assign(c.wave.begin(), c.wave.begin() + static_cast<std::ptrdiff_t>(len) * kSamplesPerFrame);
  return s;
}

// Mean batch retrieval top-1 over consecutive held-out batches of size b.
inline RetrievalAccuracy heldout_retrieval(const AvModel& m, const ClipSet& clips, int b, int len) {
  const std::size_t batches = clips.size() / static_cast<std::size_t>(b);
  if (batches == 0) throw ArgumentError("held-out set smaller than one batch");
  RetrievalAccuracy acc{0.0, 0.0};
  const int d = m.video.cfg.proj_dim;
  for (std::size_t k = 0; k < batches; ++k) {
    Mat<float> zv(b, d), za(b, d);
    for (int i = 0; i < b; ++i) {
      const auto seg = eval_segment(clips.get(k * static_cast<std::size_t>(b) + static_cast<std::size_t>(i)), len,
                                    m.video.cfg.input_size);
      zv.row(i) = m.video.embed(seg.frames).z;
      za.row(i) = m.audio.audio_forward(std::span<const float>(seg.wave)).z;
    }
    const auto r = batch_retrieval_accuracy<float>(zv, za);
    acc.v2a_top1 += r.v2a_top1;
    acc.a2v_top1 += r.a2v_top1;
  }
  acc.v2a_top1 /= static_cast<double>(batches);
  acc.a2v_top1 /= static_cast<double>(batches);
  return acc;
}

namespace detail {

// Endless stream of clip indices: successive seeded permutations.
class IndexStream {
 public:
  IndexStream(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) {}
  std::size_t next() {
    if (pos_ == order_.size()) {
      Rng rng(derive_seed(seed_, {0x0DE5, pass_++}));
      order_ = rng.permutation(static_cast<int>(n_));
      pos_ = 0;
    }
    return static_cast<std::size_t>(order_[pos_++]);
  }

 private:
  std::size_t n_;
  std::uint64_t seed_;
  std::uint64_t pass_ = 0;
  std::vector<int> order_;
  std::size_t pos_ = 0;
};

struct ItemCaches {
  VideoEncoder<float>::FrontendCache vf;
  TemporalBackend<float>::Cache vb;
  ProjectionCache<float> vp;
  AudioEncoder<float>::FrontendCache af;
  TemporalBackend<float>::Cache ab;
  ProjectionCache<float> ap;
};

}  // namespace detail

// One contrastive step on a batch; returns the loss. Gradients are zeroed,
// accumulated and applied inside.
inline double pretrain_step(AvModel& m, AdamW<float>& opt, const std::vector<Segment>& batch, double lr, double tau,
                            std::uint64_t dropout_seed) {
  std::vector<nn::Param<float>*> params;
  m.visit([&](nn::Param<float>& p) {
    p.zero_grad();
    params.push_back(&p);
  });
  const int b = static_cast<int>(batch.size());
  const int d = m.video.cfg.proj_dim;
  Mat<float> zv(b, d), za(b, d);
  std::vector<detail::ItemCaches> caches(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) {
    auto& c = caches[static_cast<std::size_t>(i)];
    Rng drop(derive_seed(dropout_seed, {static_cast<std::uint64_t>(i)}));
    const auto& seg = batch[static_cast<std::size_t>(i)];
    const auto seq = m.video.frontend_forward(seg.frames, &c.vf);
    zv.row(i) = m.video.project(m.video.backend_forward(seq, Mode::train, &drop, &c.vb), &c.vp);
    const Mat<float> tokens = m.audio.wave_frontend(std::span<const float>(seg.wave), &c.af);
    za.row(i) = m.audio.project(m.audio.backend_forward(tokens, Mode::train, &drop, &c.ab), &c.ap);
  }
  const auto r = info_nce<float>(zv, za, static_cast<float>(tau), true);
  if (!std::isfinite(r.loss)) return r.loss;
  for (int i = 0; i < b; ++i) {
    auto& c = caches[static_cast<std::size_t>(i)];
    const Mat<float> dpv = m.video.project_backward(c.vp, r.grad_v.row(i));
    m.video.frontend_backward(c.vf, m.video.backend_backward(c.vb, dpv));
    const Mat<float> dpa = m.audio.project_backward(c.ap, r.grad_a.row(i));
    m.audio.wave_frontend_backward(c.af, m.audio.backend.backward(c.ab, dpa));
  }
  if (m.audio.cfg.conv_frozen) {
    std::vector<nn::Param<float>*> trainable;
    std::set<const nn::Param<float>*> frozen;
    m.audio.visit_frontend([&](nn::Param<float>& p) { frozen.insert(&p); });
    for (auto* p : params)
      if (!frozen.count(p)) trainable.push_back(p);
    params.swap(trainable);
  }
  opt.step(params, [lr](const nn::Param<float>&) { return lr; });
  return r.loss;
}

// Self-supervised audio-visual pre-training with per-epoch lr decay and
// plateau stopping.
inline PretrainResult run_pretrain(const ClipSet& train, const ClipSet& heldout, const PretrainConfig& cfg,
                                   const VideoEncoderConfig& vcfg, const AudioEncoderConfig& acfg,
                                   const std::function<void(const PretrainEpoch&)>& on_epoch = {}) {
  cfg.validate();
  if (train.size() < static_cast<std::size_t>(cfg.batch_size))
    throw ArgumentError("pretrain: corpus has fewer clips than one batch");
  if (cfg.augment.crop_size != vcfg.input_size) throw ConfigError("pretrain.augment.crop_size must equal video.input_size");
  AvModel m(vcfg, acfg);
  m.init(cfg.seed);
  AdamW<float> opt({0.9, 0.999, 1e-8, cfg.weight_decay});
  detail::IndexStream stream(train.size(), derive_seed(cfg.seed, {3}));
  const int steps_per_epoch =
      cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : static_cast<int>(train.size() / static_cast<std::size_t>(cfg.batch_size));

  PretrainResult res;
  TrainState st;
  const auto t0 = std::chrono::steady_clock::now();
  for (st.epoch = 0; st.epoch < cfg.max_epochs; ++st.epoch) {
    st.current_lr = pretrain_lr(st.epoch, cfg);
    double sum = 0.0;
    for (int s = 0; s < steps_per_epoch; ++s, ++st.step) {
      std::vector<Segment> batch;
      for (int i = 0; i < cfg.batch_size; ++i) {
        Rng rng(derive_seed(cfg.seed, {4, static_cast<std::uint64_t>(st.step), static_cast<std::uint64_t>(i)}));
        const ClipFile clip = train.get(stream.next());
        Segment seg = sample_segment(clip.frames, clip.wave, cfg.clip_len, rng);
        seg.frames = augment_clip(seg.frames, cfg.augment, rng);
        batch.push_back(std::move(seg));
      }
      const std::string where = "epoch " + std::to_string(st.epoch) + ", step " + std::to_string(st.step) +
                                " (lr " + std::to_string(st.current_lr) + ")";
      double loss = 0.0;
      try {
        loss = pretrain_step(m, opt, batch, st.current_lr, cfg.temperature,
                             derive_seed(cfg.seed, {5, static_cast<std::uint64_t>(st.step)}));
      } catch (const ContractError& e) {
        // Non-finite activations surface as degenerate embeddings.
        throw TrainingError("pretrain: numerical failure at " + where + ": " + e.what());
      }
      if (!std::isfinite(loss)) throw TrainingError("pretrain: non-finite loss at " + where);
      res.step_losses.push_back(loss);
      sum += loss;
    }
    PretrainEpoch rec;
    rec.epoch = st.epoch;
    rec.mean_loss = sum / steps_per_epoch;
    rec.lr = st.current_lr;
    if (heldout.size() >= static_cast<std::size_t>(cfg.batch_size)) {
      const auto r = heldout_retrieval(m, heldout, cfg.batch_size, cfg.clip_len);
      rec.retrieval_v2a = r.v2a_top1;
      rec.retrieval_a2v = r.a2v_top1;
      res.final_retrieval = r;
    }
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.mean_loss < st.best_loss - cfg.plateau_threshold) {
      st.best_loss = rec.mean_loss;
      st.epochs_since_best = 0;
    } else if (++st.epochs_since_best >= cfg.plateau_epochs) {
      res.stop_reason = "plateau";
      break;
    }
  }
  if (res.stop_reason.empty()) res.stop_reason = "max_epochs";

  auto& ck = res.checkpoint;
  ck.stage = "pretrained";
  ck.config = {{"video", vcfg}, {"audio", acfg}, {"pretrain", cfg}};
  ck.config_hash = hex64(fnv1a64(ck.config.dump()));
  ck.extra["log"] = res.log;
  ck.extra["stop_reason"] = res.stop_reason;
  ck.extra["steps"] = st.step;
  capture(m, ck);
  return res;
}

}  // namespace avlip
