#include "avlip/evalkit.hpp"
#include "labeled_fixture.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace avlip;
using avlip::testing::SmallDetector;

namespace {

// All positive/negative pairs, ties counted one half.
double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        den += 1.0;
      }
  return num / den;
}

struct Instance {
  std::vector<double> s;
  std::vector<int> y;
};

// Random instance with both classes; coarse scores when `ties` is set.
Instance random_instance(Rng& rng, bool ties) {
  Instance in;
  const int n = rng.between(2, 200);
  for (int i = 0; i < n; ++i) {
    in.y.push_back(rng.below(2));
    in.s.push_back(ties ? std::floor(rng.uniform() * 5.0) / 5.0 : rng.normal());
  }
  in.y[0] = 0;
  in.y[1] = 1;
  return in;
}

}  // namespace

TEST(RocAuc, Examples) {
  EXPECT_EQ(roc_auc({0.9, 0.1}, {1, 0}), 1.0);
  EXPECT_EQ(roc_auc({0.3, 0.3, 0.3, 0.3}, {1, 0, 0, 1}), 0.5);
  EXPECT_EQ(roc_auc({0.8, 0.6, 0.4, 0.2}, {1, 0, 1, 0}), 0.75);
  EXPECT_THROW(roc_auc({0.1, 0.2}, {1, 1}), MetricError);
  EXPECT_THROW(roc_auc({0.1, 0.2}, {0, 0}), MetricError);
  EXPECT_THROW(roc_auc({0.1}, {0, 1}), ArgumentError);
}

TEST(RocAuc, MatchesAllPairsOracle) {
  Rng rng(2024);
  for (int k = 0; k < 100; ++k) {
    const auto in = random_instance(rng, k % 2 == 0);
    EXPECT_NEAR(roc_auc(in.s, in.y), brute_auc(in.s, in.y), 1e-12) << k;
  }
}

TEST(RocAuc, MonotoneInvarianceAndComplement) {
  Rng rng(77);
  for (int k = 0; k < 30; ++k) {
    const auto in = random_instance(rng, k % 3 == 0);
    const double a = roc_auc(in.s, in.y);
    std::vector<double> t;
    for (double v : in.s) t.push_back(std::exp(3.0 * v) + 2.0);
    EXPECT_NEAR(roc_auc(t, in.y), a, 1e-12);
    std::vector<int> flip;
    for (int v : in.y) flip.push_back(1 - v);
    EXPECT_NEAR(roc_auc(in.s, flip), 1.0 - a, 1e-12);
  }
}

TEST(Accuracy, Examples) {
  EXPECT_EQ(accuracy({0.9, 0.6, 0.2, 0.4}, {1, 1, 0, 0}), 1.0);
  const std::vector<double> s{0.9, 0.3, 0.7, 0.1, 0.5};
  const std::vector<int> y{1, 1, 0, 0, 1};
  std::vector<int> flip;
  for (int v : y) flip.push_back(1 - v);
  EXPECT_NEAR(accuracy(s, flip), 1.0 - accuracy(s, y), 1e-15);
  EXPECT_THROW(accuracy({}, {}), MetricError);
}

TEST(Accuracy, RandomScoresNearHalf) {
  Rng rng(5);
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 10000; ++i) {
    s.push_back(rng.uniform());
    y.push_back(rng.below(2));
  }
  EXPECT_NEAR(accuracy(s, y), 0.5, 0.02);
}

TEST(VideoScore, ChunksAndAggregation) {
  const SmallDetector s;
  auto model = prepare_detector(s.video, nullptr, 4);
  const auto test = render_split(s.corpus, "test");
  const Clip frames = test.get(0).frames;  // 16 frames
  ASSERT_EQ(frames.frames, 16);
  // Zero-initialised head: constant logit 0.
  const auto z = video_score(model, frames, 8, "a");
  EXPECT_EQ(z.n_chunks, 2);
  EXPECT_EQ(z.score, 0.5);
  EXPECT_EQ(video_score(model, frames, 5).n_chunks, 3);  // trailing frame dropped
  EXPECT_THROW(video_score(model, frames, 17), ArgumentError);

  // Non-trivial head: score is the mean of independently scored chunks.
  Rng rng(1);
  for (auto* fc : {&model.cls_head->fc1, &model.cls_head->fc2}) nn::init_normal(fc->weight, rng, 0.5);
  const auto v = video_score(model, frames, 8, "a");
  double mean = 0.0;
  for (int c = 0; c < 2; ++c) mean += sigmoid(model.logit(eval_view(frames.slice(8 * c, 8), s.video.input_size)));
  EXPECT_NEAR(v.score, mean / 2.0, 1e-7);
  EXPECT_NE(v.score, 0.5);
  const auto l = video_score(model, frames, 8, "a", Aggregation::mean_logit);
  EXPECT_GT(l.score, 0.0);
  EXPECT_LT(l.score, 1.0);
}

namespace {

// Cheap stand-in for fine-tuning: the protocols only need a model and a hash.
DetectorTrainer recording_trainer(const SmallDetector& s, std::vector<std::vector<synth::ManifestEntry>>& seen) {
  return [&s, &seen](const LabeledSet& train, const LabeledSet&, const std::string& tag) {
    seen.push_back(train.entries);
    auto m = prepare_detector(s.video, nullptr, fnv1a64(tag));
    Rng rng(fnv1a64(tag));
    nn::init_normal(m.cls_head->fc2.weight, rng, 0.5);
    return std::make_pair(std::move(m), hex64(fnv1a64(tag)));
  };
}

}  // namespace

TEST(LeaveOneOut, ShapeAndAudit) {
  SmallDetector s;
  s.corpus.train = {6, 6};
  const auto train = render_split(s.corpus, "train");
  const auto val = render_split(s.corpus, "val");
  const auto test = render_split(s.corpus, "test");
  std::vector<std::vector<synth::ManifestEntry>> seen;
  const std::vector<std::string> fams{"DESYNC", "SHUFFLE", "JITTER"};
  const auto rep = leave_one_out_eval(train, val, test, fams, recording_trainer(s, seen), 8, 1);
  ASSERT_EQ(rep.cells.size(), 3u);
  ASSERT_EQ(seen.size(), 3u);
  double mean = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& c = rep.cells[k];
    EXPECT_EQ(c.name, fams[k]);
    EXPECT_GE(c.auc, 0.0);
    EXPECT_LE(c.auc, 1.0);
    EXPECT_FALSE(c.train_families.count(fams[k]));
    for (const auto& e : seen[k]) EXPECT_NE(e.family, fams[k]);
    int reals = 0, fakes = 0;
    for (const auto& e : seen[k]) (e.label ? fakes : reals)++;
    EXPECT_EQ(reals, fakes);
    EXPECT_EQ(c.n_videos, 6 + 2);  // test reals + the held-out family's fakes
    mean += c.auc;
  }
  EXPECT_NEAR(rep.average_auc, mean / 3.0, 1e-9);
  EXPECT_EQ(rep.config_hashes.size(), 3u);
  const nlohmann::json j = rep;
  EXPECT_EQ(j.at("cells").size(), 3u);

  EXPECT_THROW(leave_one_out_eval(train, val, test, {"DESYNC"}, recording_trainer(s, seen), 8, 1), ArgumentError);
  const auto no_jitter = train.filter([](const synth::ManifestEntry& e) { return e.family != "JITTER"; });
  EXPECT_THROW(leave_one_out_eval(no_jitter, val, test, fams, recording_trainer(s, seen), 8, 1), ArgumentError);
}

TEST(CrossRenderer, ShapeAuditAndDeterminism) {
  SmallDetector s;
  s.corpus.renderers = {"studio", "street"};
  const auto train = render_split(s.corpus, "train");
  const auto val = render_split(s.corpus, "val");
  const auto test = render_split(s.corpus, "test");
  std::vector<std::vector<synth::ManifestEntry>> seen;
  const auto rep = cross_renderer_eval(train, val, test, "studio", "street", recording_trainer(s, seen), 8, 1);
  ASSERT_EQ(rep.cells.size(), 2u);
  EXPECT_EQ(rep.cells[0].name, "studio");
  EXPECT_EQ(rep.cells[1].name, "street");
  ASSERT_EQ(seen.size(), 1u);
  for (const auto& e : seen[0]) EXPECT_EQ(e.renderer_id, "studio");
  EXPECT_EQ(rep.cells[1].train_renderers, std::set<std::string>{"studio"});
  const auto again = cross_renderer_eval(train, val, test, "studio", "street", recording_trainer(s, seen), 8, 1);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(again.cells[k].auc, rep.cells[k].auc);

  const auto studio_only = test.filter([](const synth::ManifestEntry& e) { return e.renderer_id == "studio"; });
  EXPECT_THROW(cross_renderer_eval(train, val, studio_only, "studio", "street", recording_trainer(s, seen), 8, 1),
               ArgumentError);
}

TEST(ExportFeatures, RowsAndDims) {
  const SmallDetector s;
  const auto model = prepare_detector(s.video, nullptr, 4);
  const auto test = render_split(s.corpus, "test");
  auto rows = [](const std::string& csv) {
    std::vector<std::string> out;
    std::istringstream is(csv);
    for (std::string line; std::getline(is, line);) out.push_back(line);
    return out;
  };
  auto fields = [](const std::string& line) { return std::count(line.begin(), line.end(), ',') + 1; };
  const auto fe = export_features(model, test, FeatureStage::frontend, 8);
  const auto fr = rows(fe);
  ASSERT_EQ(fr.size(), test.size() + 1);
  EXPECT_EQ(fields(fr[1]), 5 + s.video.frontend_out_dim);
  const auto be = rows(export_features(model, test, FeatureStage::backend, 8, "blur", [](const Clip& c) { return c; }));
  EXPECT_EQ(fields(be[1]), 5 + s.video.pool_tokens * s.video.transformer.d_model);
  EXPECT_NE(be[1].find(",blur,"), std::string::npos);
  EXPECT_EQ(export_features(model, test, FeatureStage::frontend, 8), fe);
}

TEST(ScoresCsv, OneRowPerVideo) {
  const SmallDetector s;
  const auto model = prepare_detector(s.video, nullptr, 4);
  const auto test = render_split(s.corpus, "test");
  const auto csv = scores_csv(score_set(model, test, 8), test);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), test.size() + 1);
  EXPECT_EQ(csv.rfind("video_id,label,family,renderer,score\n", 0), 0u);
}
