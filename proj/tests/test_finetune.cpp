#include "labeled_fixture.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace avlip;
using avlip::testing::SmallDetector;

TEST(LayerLrSchedule, SixLayerExample) {
  const FinetuneConfig c;
  const auto lr = layer_lr_schedule(6, c);
  const std::vector<double> expect{0.0029524, 0.0032805, 0.0036450, 0.00405, 0.0045, 0.005};
  ASSERT_EQ(lr.size(), 6u);
  // Reference values are printed to seven decimals (0.00295245 shows as 0.0029524).
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(lr[i], expect[i], 1e-7) << i;
  EXPECT_EQ(lr.back(), 0.005);
}

TEST(LayerLrSchedule, ClosedFormUpToTwelveLayers) {
  const FinetuneConfig c;
  for (int n = 1; n <= 12; ++n) {
    const auto lr = layer_lr_schedule(n, c);
    ASSERT_EQ(lr.size(), static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) EXPECT_EQ(lr[static_cast<std::size_t>(n - 1 - k)], 0.005 * std::pow(0.9, k)) << n << " " << k;
  }
}

TEST(LayerLrSchedule, DegenerateCases) {
  FinetuneConfig c;
  EXPECT_EQ(layer_lr_schedule(1, c), std::vector<double>{0.005});
  EXPECT_THROW(layer_lr_schedule(0, c), ArgumentError);
  c.layer_decay = 1.0;
  for (double v : layer_lr_schedule(7, c)) EXPECT_EQ(v, 0.005);
}

TEST(LayerLrSchedule, ParameterMapping) {
  const FinetuneConfig c;
  const auto lr = layer_lr_schedule(3, c);
  EXPECT_EQ(finetune_param_lr("video.head.fc1.weight", lr, c), 0.01);
  EXPECT_EQ(finetune_param_lr("video.backend.transformer.layer0.attn.wq", lr, c), lr[0]);
  EXPECT_EQ(finetune_param_lr("video.backend.transformer.layer2.ff.fc1.weight", lr, c), lr[2]);
  EXPECT_EQ(finetune_param_lr("video.backend.pos_emb", lr, c), lr[0]);
  EXPECT_EQ(finetune_param_lr("video.backend.in_proj.weight", lr, c), lr[0]);
  EXPECT_EQ(finetune_param_lr("video.backend.transformer.final_ln.gamma", lr, c), lr[2]);
  EXPECT_THROW(finetune_param_lr("video.frontend.stem.weight", lr, c), StateError);
}

TEST(FinetuneConfig, ValidationAndJson) {
  FinetuneConfig c;
  c.layer_decay = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.layer_decay = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.head_lr = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  const nlohmann::json j = c;
  const auto back = j.get<FinetuneConfig>();
  EXPECT_EQ(back.head_lr, 0.01);
  EXPECT_EQ(back.last_layer_lr, 0.005);
  EXPECT_EQ(back.clip_len, 25);
}

TEST(BceLoss, Examples) {
  EXPECT_NEAR(bce_loss(0.0, 1), std::log(2.0), 1e-15);
  for (double l : {-30.0, -3.5, -0.2, 0.0, 0.7, 4.0, 25.0}) EXPECT_NEAR(bce_loss(l, 1), bce_loss(-l, 0), 1e-14) << l;
  // Unstable-form oracle log(1 + e^l) - y l is still finite at l = 100.
  EXPECT_NEAR(bce_loss(100.0, 0), std::log(1.0 + std::exp(100.0)), 1e-12);
  EXPECT_NEAR(bce_loss(-100.0, 1), 100.0, 1e-12);
  EXPECT_TRUE(std::isfinite(bce_loss(1e6, 0)));
  EXPECT_THROW(bce_loss(std::numeric_limits<double>::infinity(), 0), ArgumentError);
  EXPECT_THROW(bce_loss(std::nan(""), 1), ArgumentError);
  EXPECT_THROW(bce_loss(0.0, 2), ArgumentError);
}

TEST(BceLoss, GradientMatchesFiniteDifference) {
  for (int y : {0, 1})
    for (double l : {-4.0, -0.3, 0.0, 1.2, 6.0}) {
      const double h = 1e-6;
      const double fd = (bce_loss(l + h, y) - bce_loss(l - h, y)) / (2 * h);
      EXPECT_NEAR(bce_grad(l, y), fd, 1e-8) << l << " " << y;
    }
}

TEST(Finetune, InitialLossIsLn2) {
  const SmallDetector s;
  const auto ck = avlip::testing::random_pretrained(s.video, s.audio, 9);
  const auto model = prepare_detector(s.video, &ck, 1);
  const auto train = render_split(s.corpus, "train");
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto chunk = eval_view(train.get(i).frames.slice(0, s.ft.clip_len), s.video.input_size);
    const double l = model.logit(chunk);
    EXPECT_EQ(l, 0.0);
    EXPECT_EQ(bce_loss(l, train.entries[i].label), std::log1p(1.0));
  }
}

TEST(Finetune, FrontendBitwiseFrozenOthersMove) {
  SmallDetector s;
  s.ft.epochs = 12;  // 36 videos in batches of 4: 108 steps
  s.corpus.train = {18, 18};
  const auto ck = avlip::testing::random_pretrained(s.video, s.audio, 9);
  const auto train = render_split(s.corpus, "train");
  const auto val = render_split(s.corpus, "val");
  const auto before = prepare_detector(s.video, &ck, s.ft.seed);
  const auto res = run_finetune(&ck, train, val, s.ft, s.video);
  ASSERT_GE(res.steps, 100);
  Checkpoint init;
  auto copy = before;
  capture(copy, init);
  int frozen = 0, moved = 0;
  for (const auto& [name, value] : init.tensors) {
    const Mat<float>& after = res.checkpoint.tensors.at(name);
    ASSERT_EQ(after.rows(), value.rows());
    ASSERT_EQ(after.cols(), value.cols());
    if (res.checkpoint.frozen.count(name)) {
      EXPECT_TRUE(std::memcmp(after.data(), value.data(), sizeof(float) * static_cast<std::size_t>(value.size())) == 0) << name;
      ++frozen;
    } else {
      EXPECT_GT((after - value).cwiseAbs().maxCoeff(), 0.0f) << name;
      ++moved;
    }
  }
  EXPECT_GT(frozen, 0);
  EXPECT_GT(moved, 0);
  for (const auto& n : res.checkpoint.frozen) EXPECT_TRUE(n.starts_with("video.frontend.")) << n;
  EXPECT_EQ(res.checkpoint.stage, "finetuned");
}

TEST(Finetune, SameSeedSameCurve) {
  const SmallDetector s;
  const auto ck = avlip::testing::random_pretrained(s.video, s.audio, 9);
  const auto train = render_split(s.corpus, "train");
  const auto val = render_split(s.corpus, "val");
  const auto a = run_finetune(&ck, train, val, s.ft, s.video);
  const auto b = run_finetune(&ck, train, val, s.ft, s.video);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].val_auc, b.log[i].val_auc);
    EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
  }
  EXPECT_EQ(a.step_losses, b.step_losses);
  for (const auto& [name, v] : a.checkpoint.tensors) EXPECT_TRUE(v == b.checkpoint.tensors.at(name)) << name;
}

TEST(Finetune, LogAndCheckpointRoundTrip) {
  const SmallDetector s;
  const auto ck = avlip::testing::random_pretrained(s.video, s.audio, 9);
  const auto train = render_split(s.corpus, "train");
  const auto val = render_split(s.corpus, "val");
  const auto res = run_finetune(&ck, train, val, s.ft, s.video);
  ASSERT_EQ(res.log.size(), static_cast<std::size_t>(s.ft.epochs));
  for (const auto& e : res.log) {
    EXPECT_TRUE(std::isfinite(e.train_loss));
    EXPECT_GE(e.val_auc, 0.0);
    EXPECT_LE(e.val_auc, 1.0);
  }
  EXPECT_EQ(res.checkpoint.config.at("pretrained_config_hash"), ck.config_hash);
  const auto loaded = load_detector(decode_checkpoint(encode_checkpoint(res.checkpoint)));
  const auto direct = load_detector(res.checkpoint);
  const auto chunk = eval_view(val.get(0).frames.slice(0, s.ft.clip_len), s.video.input_size);
  EXPECT_EQ(loaded.logit(chunk), direct.logit(chunk));
}

TEST(Finetune, FromScratchRunsSamePipeline) {
  const SmallDetector s;
  const auto train = render_split(s.corpus, "train");
  const auto val = render_split(s.corpus, "val");
  const auto res = run_finetune(nullptr, train, val, s.ft, s.video);
  EXPECT_TRUE(res.checkpoint.config.at("from_scratch").get<bool>());
  EXPECT_FALSE(res.checkpoint.frozen.empty());
  EXPECT_EQ(res.log.size(), static_cast<std::size_t>(s.ft.epochs));
}

TEST(Finetune, Errors) {
  const SmallDetector s;
  auto ck = avlip::testing::random_pretrained(s.video, s.audio, 9);
  const auto train = render_split(s.corpus, "train");
  const auto val = render_split(s.corpus, "val");
  ck.stage = "finetuned";
  EXPECT_THROW(run_finetune(&ck, train, val, s.ft, s.video), StateError);
  ck.stage = "pretrained";
  const auto reals = train.filter([](const synth::ManifestEntry& e) { return e.label == 0; });
  EXPECT_THROW(run_finetune(&ck, reals, val, s.ft, s.video), ArgumentError);
  ck.tensors.erase("video.backend.pos_emb");
  EXPECT_THROW(run_finetune(&ck, train, val, s.ft, s.video), StateError);
  EXPECT_THROW(load_detector(avlip::testing::random_pretrained(s.video, s.audio, 9)), StateError);
}
