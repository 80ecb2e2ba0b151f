#pragma once

#include "avlip/audio_encoder.hpp"
#include "avlip/video_encoder.hpp"

#include <vector>

namespace avlip::testing {

// Small float64 configuration for gradient checks: d_model 16, 16x16 frames.
inline VideoEncoderConfig gradcheck_video_config() {
  VideoEncoderConfig c;
  c.frontend_channels = {4, 6, 8};
  c.resnet_blocks_per_stage = 1;
  c.frontend_out_dim = 8;
  c.input_size = 16;
  c.transformer = {16, 2, 2, 8, 32, 0.0};
  c.max_seq_len = 8;
  c.pool_tokens = 2;
  c.proj_dim = 8;
  return c;
}

inline AudioEncoderConfig gradcheck_audio_config() {
  AudioEncoderConfig c;
  c.conv_strides = {4, 4, 4};
  c.conv_channels = {3, 4, 5};
  c.transformer = {16, 2, 2, 8, 32, 0.0};
  c.max_tokens = 8;
  c.pool_tokens = 2;
  c.proj_dim = 8;
  return c;
}

template <typename T>
VideoTensor<T> random_clip(int t, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  VideoTensor<T> c(t, h, w);
  for (auto& v : c.data) v = static_cast<T>(rng.uniform());
  return c;
}

template <typename T>
std::vector<T> random_wave(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<T> w(n);
  for (auto& v : w) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  return w;
}

template <typename Model>
std::vector<nn::Param<double>*> collect_params(Model& m) {
  std::vector<nn::Param<double>*> out;
  m.visit([&](nn::Param<double>& p) { out.push_back(&p); });
  return out;
}

}  // namespace avlip::testing
