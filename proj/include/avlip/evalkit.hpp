#pragma once

#include "avlip/data.hpp"
#include "avlip/finetune.hpp"
#include "avlip/scoring.hpp"

#include <fstream>
#include <memory>
#include <sstream>

namespace avlip {

struct MetricsCell {
  std::string name;
  double auc = 0.0;
  double accuracy = 0.0;
  int n_videos = 0;
  // Audit trail: what the detector for this cell was trained on.
  std::vector<std::string> train_ids;
  std::set<std::string> train_families;
  std::set<std::string> train_renderers;
};

struct MetricsReport {
  std::string protocol;
  std::vector<MetricsCell> cells;
  double average_auc = 0.0;
  double average_accuracy = 0.0;
  std::vector<std::string> config_hashes;
  std::vector<std::uint64_t> seeds;

  void finalize() {
    average_auc = average_accuracy = 0.0;
    for (const auto& c : cells) {
      average_auc += c.auc;
      average_accuracy += c.accuracy;
    }
    if (!cells.empty()) {
      average_auc /= static_cast<double>(cells.size());
      average_accuracy /= static_cast<double>(cells.size());
    }
  }

  const MetricsCell& cell(const std::string& name) const {
    for (const auto& c : cells)
      if (c.name == name) return c;
    throw ArgumentError("report has no cell " + name);
  }
};

inline void to_json(nlohmann::json& j, const MetricsCell& c) {
  j = {{"name", c.name},
       {"auc", c.auc},
       {"accuracy", c.accuracy},
       {"n_videos", c.n_videos},
       {"train_families", c.train_families},
       {"train_renderers", c.train_renderers},
       {"n_train", c.train_ids.size()}};
}
inline void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = {{"protocol", r.protocol},          {"cells", r.cells},   {"average_auc", r.average_auc},
       {"average_accuracy", r.average_accuracy}, {"config_hashes", r.config_hashes}, {"seeds", r.seeds}};
}

// Metrics of a score list against a labeled set.
inline MetricsCell score_cell(const std::string& name, const std::vector<VideoScore>& scores, const LabeledSet& set) {
  std::vector<double> s;
  for (const auto& v : scores) s.push_back(v.score);
  const auto y = set.labels();
  MetricsCell c;
  c.name = name;
  c.auc = roc_auc(s, y);
  c.accuracy = accuracy(s, y);
  c.n_videos = static_cast<int>(set.size());
  return c;
}

// Trains a detector on (train, val) and returns it; the protocols below only
// decide which data each run sees.
using DetectorTrainer =
    std::function<std::pair<VideoEncoder<float>, std::string>(const LabeledSet& train, const LabeledSet& val, const std::string& tag)>;

// The standard trainer: fine-tune from `pretrained` (null for from-scratch)
// with a run seed derived from the cell tag.
inline DetectorTrainer finetune_trainer(std::shared_ptr<const Checkpoint> pretrained, const FinetuneConfig& cfg,
                                        const VideoEncoderConfig& vcfg) {
  return [pretrained, cfg, vcfg](const LabeledSet& train, const LabeledSet& val, const std::string& tag) {
    FinetuneConfig c = cfg;
    c.seed = derive_seed(cfg.seed, {fnv1a64(tag)});
    const auto res = run_finetune(pretrained.get(), train, val, c, vcfg);
    return std::make_pair(load_detector(res.checkpoint), res.checkpoint.config_hash);
  };
}

inline void record_training_set(MetricsCell& c, const LabeledSet& train) {
  for (const auto& e : train.entries) {
    c.train_ids.push_back(e.video_id());
    c.train_families.insert(e.family);
    c.train_renderers.insert(e.renderer_id);
  }
}

// For each family f: train on reals plus every other fake family, test on
// reals versus f. Reals are subsampled so training stays balanced.
inline MetricsReport leave_one_out_eval(const LabeledSet& train, const LabeledSet& val, const LabeledSet& test,
                                        const std::vector<std::string>& families, const DetectorTrainer& trainer,
                                        int chunk_len, std::uint64_t seed) {
  if (families.size() < 2) throw ArgumentError("leave-one-out needs at least two fake families");
  for (const auto& f : families) {
    const bool present = std::any_of(test.entries.begin(), test.entries.end(), [&](const auto& e) { return e.family == f; }) &&
                         std::any_of(train.entries.begin(), train.entries.end(), [&](const auto& e) { return e.family == f; });
    if (!present) throw ArgumentError("family " + f + " absent from corpus");
  }
  MetricsReport rep;
  rep.protocol = "leave_one_out";
  rep.seeds = {seed};
  for (const auto& f : families) {
    auto keep = [&](const synth::ManifestEntry& e) { return e.family != f; };
    const LabeledSet tr = balance_reals(train.filter(keep), derive_seed(seed, {fnv1a64(f)}));
    const LabeledSet va = val.filter(keep);
    const LabeledSet te = test.filter([&](const synth::ManifestEntry& e) { return e.label == 0 || e.family == f; });
    auto [model, hash] = trainer(tr, va, "loo_" + f);
    MetricsCell c = score_cell(f, score_set(model, te, chunk_len), te);
    record_training_set(c, tr);
    rep.cells.push_back(std::move(c));
    rep.config_hashes.push_back(hash);
  }
  rep.finalize();
  return rep;
}

// Train on renderer A only; report AUC on the A and B test sets separately.
inline MetricsReport cross_renderer_eval(const LabeledSet& train, const LabeledSet& val, const LabeledSet& test,
                                         const std::string& renderer_a, const std::string& renderer_b,
                                         const DetectorTrainer& trainer, int chunk_len, std::uint64_t seed) {
  std::set<std::string> renderers;
  for (const auto& e : test.entries) renderers.insert(e.renderer_id);
  if (renderers.size() < 2) throw ArgumentError("cross-renderer eval needs at least two renderers in the test split");
  if (!renderers.count(renderer_a) || !renderers.count(renderer_b))
    throw ArgumentError("renderer " + (renderers.count(renderer_a) ? renderer_b : renderer_a) + " absent from test split");
  auto on = [](const std::string& r) { return [r](const synth::ManifestEntry& e) { return e.renderer_id == r; }; };
  const LabeledSet tr = balance_reals(train.filter(on(renderer_a)), derive_seed(seed, {0xC505}));
  auto [model, hash] = trainer(tr, val.filter(on(renderer_a)), "cross_" + renderer_a);
  MetricsReport rep;
  rep.protocol = "cross_renderer";
  rep.seeds = {seed};
  for (const auto& r : {renderer_a, renderer_b}) {
    const LabeledSet te = test.filter(on(r));
    MetricsCell c = score_cell(r, score_set(model, te, chunk_len), te);
    record_training_set(c, tr);
    rep.cells.push_back(std::move(c));
  }
  rep.config_hashes.push_back(hash);
  rep.finalize();
  return rep;
}

inline std::string scores_csv(const std::vector<VideoScore>& scores, const LabeledSet& set) {
  std::ostringstream os;
  os.precision(17);
  os << "video_id,label,family,renderer,score\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& e = set.entries[i];
    os << scores[i].video_id << ',' << e.label << ',' << e.family << ',' << e.renderer_id << ',' << scores[i].score << '\n';
  }
  return os.str();
}

enum class FeatureStage { frontend, backend };

// One row per video: mean frontend feature over the first chunk's frames
// (N values), or the pooled backend output flattened (K * d values).
inline std::string export_features(const VideoEncoder<float>& model, const LabeledSet& set, FeatureStage stage,
                                   int chunk_len, const std::string& corruption_tag = "clean",
                                   const std::function<Clip(const Clip&)>& corrupt = {}) {
  std::ostringstream os;
  os.precision(9);
  const int dim = stage == FeatureStage::frontend ? model.cfg.frontend_out_dim : model.flat_dim();
  os << "video_id,label,family,renderer,corruption";
  for (int i = 0; i < dim; ++i) os << ",f" << i;
  os << '\n';
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& e = set.entries[i];
    Clip chunk = set.get(i).frames.slice(0, chunk_len);
    if (corrupt) chunk = corrupt(chunk);
    const auto seq = model.frontend_forward(eval_view(chunk, model.cfg.input_size));
    RowVec<float> f = stage == FeatureStage::frontend
                          ? RowVec<float>(seq.features.colwise().mean())
                          : RowVec<float>(nn::flatten(model.backend_forward(seq, Mode::eval)));
    os << e.video_id() << ',' << e.label << ',' << e.family << ',' << e.renderer_id << ',' << corruption_tag;
    for (Eigen::Index k = 0; k < f.size(); ++k) os << ',' << f(k);
    os << '\n';
  }
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  write_bytes(path, std::vector<unsigned char>(text.begin(), text.end()));
}

}  // namespace avlip
