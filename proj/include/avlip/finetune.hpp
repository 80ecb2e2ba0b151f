#pragma once

#include "avlip/augment.hpp"
#include "avlip/checkpoint.hpp"
#include "avlip/data.hpp"
#include "avlip/optim.hpp"
#include "avlip/scoring.hpp"
#include "avlip/video_encoder.hpp"

#include <chrono>
#include <functional>

namespace avlip {

struct FinetuneConfig {
  int clip_len = 25;
  double head_lr = 0.01;
  double last_layer_lr = 0.005;
  double layer_decay = 0.9;
  int batch_size = 8;
  int epochs = 20;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  AugmentConfig augment{};

  void validate() const {
    if (clip_len < 5) throw ConfigError("finetune.clip_len must be >= 5");
    if (!(head_lr > 0.0) || !(last_layer_lr > 0.0)) throw ConfigError("finetune learning rates must be > 0");
    if (!(layer_decay > 0.0 && layer_decay <= 1.0)) throw ConfigError("finetune.layer_decay must lie in (0, 1]");
    if (batch_size < 1) throw ConfigError("finetune.batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("finetune.epochs must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const FinetuneConfig& c) {
  j = {{"clip_len", c.clip_len},       {"head_lr", c.head_lr},       {"last_layer_lr", c.last_layer_lr},
       {"layer_decay", c.layer_decay}, {"batch_size", c.batch_size}, {"epochs", c.epochs},
       {"weight_decay", c.weight_decay}, {"seed", c.seed},           {"augment", c.augment}};
}
inline void from_json(const nlohmann::json& j, FinetuneConfig& c) {
  c.clip_len = j.value("clip_len", c.clip_len);
  c.head_lr = j.value("head_lr", c.head_lr);
  c.last_layer_lr = j.value("last_layer_lr", c.last_layer_lr);
  c.layer_decay = j.value("layer_decay", c.layer_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
  if (j.contains("augment")) c.augment = j.at("augment").get<AugmentConfig>();
}

// Front-to-back learning rates: the last layer gets last_layer_lr and each
// earlier layer one more factor of layer_decay.
inline std::vector<double> layer_lr_schedule(int n_layers, const FinetuneConfig& c) {
  if (n_layers < 1) throw ArgumentError("layer_lr_schedule: n_layers must be >= 1");
  std::vector<double> lr(static_cast<std::size_t>(n_layers));
  for (int i = 0; i < n_layers; ++i) lr[static_cast<std::size_t>(i)] = c.last_layer_lr * std::pow(c.layer_decay, n_layers - 1 - i);
  return lr;
}

// Learning rate for a trainable video parameter. Positional embeddings and the
// input projection sit below the first layer and share its rate; the final
// LayerNorm shares the last layer's.
inline double finetune_param_lr(const std::string& name, const std::vector<double>& layer_lr, const FinetuneConfig& c) {
  if (name.starts_with("video.head.")) return c.head_lr;
  const std::string layer_prefix = "video.backend.transformer.layer";
  if (name.starts_with(layer_prefix)) {
    const auto rest = name.substr(layer_prefix.size());
    const int i = std::stoi(rest.substr(0, rest.find('.')));
    return layer_lr.at(static_cast<std::size_t>(i));
  }
  if (name.starts_with("video.backend.transformer.final_ln")) return layer_lr.back();
  if (name.starts_with("video.backend.pos_emb") || name.starts_with("video.backend.in_proj")) return layer_lr.front();
  throw StateError("no fine-tune learning rate for parameter " + name);
}

// Numerically stable -[y log s(l) + (1-y) log(1-s(l))].
inline double bce_loss(double logit, int y) {
  if (!std::isfinite(logit)) throw ArgumentError("bce_loss: logit must be finite");
  if (y != 0 && y != 1) throw ArgumentError("bce_loss: label must be 0 or 1");
  return std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
}
inline double bce_grad(double logit, int y) { return sigmoid(logit) - y; }

struct FinetuneEpoch {
  int epoch = 0;
  double train_loss = 0.0;
  double val_auc = std::numeric_limits<double>::quiet_NaN();
  double wall_time_s = 0.0;
};

inline void to_json(nlohmann::json& j, const FinetuneEpoch& e) {
  j = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"wall_time_s", e.wall_time_s}};
  j["val_auc"] = std::isfinite(e.val_auc) ? nlohmann::json(e.val_auc) : nlohmann::json(nullptr);
}

struct FinetuneResult {
  Checkpoint checkpoint;
  std::vector<FinetuneEpoch> log;
  std::vector<double> step_losses;
  long long steps = 0;
};

// Builds the detector: a video encoder restored from a pre-trained checkpoint
// (or randomly initialised when `pretrained` is null) plus a fresh head.
inline VideoEncoder<float> prepare_detector(const VideoEncoderConfig& vcfg, const Checkpoint* pretrained,
                                            std::uint64_t seed) {
  VideoEncoder<float> v(vcfg);
  v.init(derive_seed(seed, {1}));
  v.proj_head.reset();  // the contrastive projection is not used for detection
  if (pretrained) {
    if (pretrained->stage != "pretrained")
      throw StateError("fine-tune expects a pre-trained checkpoint, got stage '" + pretrained->stage + "'");
    restore(v, *pretrained, /*require_all=*/true);
  }
  v.add_cls_head(derive_seed(seed, {2}));
  return v;
}

inline std::set<std::string> frontend_param_names(VideoEncoder<float>& v) {
  std::set<std::string> s;
  v.visit_frontend([&](nn::Param<float>& p) { s.insert(p.name); });
  return s;
}

// Evaluation scores for every video of a labeled set.
inline std::vector<VideoScore> score_set(const VideoEncoder<float>& model, const LabeledSet& set, int chunk_len) {
  std::vector<VideoScore> out;
  for (std::size_t i = 0; i < set.size(); ++i)
    out.push_back(video_score(model, set.get(i).frames, chunk_len, set.entries[i].video_id()));
  return out;
}

inline double set_auc(const std::vector<VideoScore>& scores, const LabeledSet& set) {
  std::vector<double> s;
  for (const auto& v : scores) s.push_back(v.score);
  return roc_auc(s, set.labels());
}

// Supervised fine-tuning with the frontend frozen. One random chunk per
// video per epoch; per-layer learning rates on the transformer.
inline FinetuneResult run_finetune(const Checkpoint* pretrained, const LabeledSet& train, const LabeledSet& val,
                                   const FinetuneConfig& cfg, const VideoEncoderConfig& vcfg,
                                   const std::function<void(const FinetuneEpoch&)>& on_epoch = {}) {
  cfg.validate();
  if (train.size() == 0) throw ArgumentError("fine-tune: empty training set");
  if (!train.has_both_classes()) throw ArgumentError("fine-tune: training set needs real and fake videos");
  if (cfg.augment.crop_size != vcfg.input_size) throw ConfigError("finetune.augment.crop_size must equal video.input_size");

  VideoEncoder<float> model = prepare_detector(vcfg, pretrained, cfg.seed);
  const auto frozen = frontend_param_names(model);
  std::vector<nn::Param<float>*> trainable;
  model.visit([&](nn::Param<float>& p) {
    if (!frozen.count(p.name)) trainable.push_back(&p);
  });
  const auto layer_lr = layer_lr_schedule(vcfg.transformer.n_layers, cfg);
  std::map<const nn::Param<float>*, double> lr_of;
  for (auto* p : trainable) lr_of[p] = finetune_param_lr(p->name, layer_lr, cfg);
  AdamW<float> opt({0.9, 0.999, 1e-8, cfg.weight_decay});

  FinetuneResult res;
  const auto t0 = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng order_rng(derive_seed(cfg.seed, {3, static_cast<std::uint64_t>(epoch)}));
    const auto order = order_rng.permutation(static_cast<int>(train.size()));
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++res.steps) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      for (auto* p : trainable) p->zero_grad();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto idx = static_cast<std::size_t>(order[k]);
        Rng rng(derive_seed(cfg.seed, {4, static_cast<std::uint64_t>(epoch), idx}));
        const ClipFile clip = train.get(idx);
        Segment seg = sample_segment(clip.frames, clip.wave, cfg.clip_len, rng);
        const Clip x = augment_clip(seg.frames, cfg.augment, rng);
        // Frozen frontend: forward only, no cache.
        const auto seq = model.frontend_forward(x);
        TemporalBackend<float>::Cache bc;
        const Mat<float> pooled = model.backend_forward(seq, Mode::train, &rng, &bc);
        nn::Mlp<float>::Cache hc;
        const double logit = model.classify_head(pooled, &hc);
        const int y = train.entries[idx].label;
        const double loss = bce_loss(logit, y);
        batch_loss += loss;
        const double scale = 1.0 / static_cast<double>(end - start);
        model.backend_backward(bc, model.classify_backward(hc, static_cast<float>(bce_grad(logit, y) * scale)));
      }
      opt.step(trainable, [&](const nn::Param<float>& p) { return lr_of.at(&p); });
      res.step_losses.push_back(batch_loss / static_cast<double>(end - start));
      loss_sum += batch_loss;
      seen += end - start;
      if (!std::isfinite(batch_loss))
        throw TrainingError("fine-tune: non-finite loss at epoch " + std::to_string(epoch));
    }
    FinetuneEpoch rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    if (val.has_both_classes()) rec.val_auc = set_auc(score_set(model, val, cfg.clip_len), val);
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }

  auto& ck = res.checkpoint;
  ck.stage = "finetuned";
  ck.config = {{"video", vcfg}, {"finetune", cfg}, {"from_scratch", pretrained == nullptr}};
  if (pretrained) ck.config["pretrained_config_hash"] = pretrained->config_hash;
  ck.config_hash = hex64(fnv1a64(ck.config.dump()));
  ck.frozen = frozen;
  ck.extra["log"] = res.log;
  ck.extra["steps"] = res.steps;
  capture(model, ck);
  return res;
}

// Rebuilds a fine-tuned detector from its checkpoint.
inline VideoEncoder<float> load_detector(const Checkpoint& ck) {
  if (ck.stage != "finetuned") throw StateError("expected a fine-tuned checkpoint, got stage '" + ck.stage + "'");
  VideoEncoder<float> v(ck.config.at("video").get<VideoEncoderConfig>());
  v.proj_head.reset();
  v.add_cls_head(0);
  restore(v, ck, true);
  return v;
}

}  // namespace avlip
