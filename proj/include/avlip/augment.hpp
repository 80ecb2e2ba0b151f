#pragma once

#include "avlip/rng.hpp"
#include "avlip/tensor.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <span>
#include <vector>

namespace avlip {

// Clip-level image augmentation. One parameter draw per clip, applied to
// every frame, so motion between frames is left intact.
struct AugmentConfig {
  int crop_size = 44;
  int blur_max_len = 5;             // motion-blur kernel length drawn from 1..max (1 = none)
  double noise_sigma_max = 0.03;    // per-clip sigma drawn from [0, max]
  double brightness_max = 0.08;     // per-clip delta drawn from [-max, max]
};

inline void to_json(nlohmann::json& j, const AugmentConfig& c) {
  j = {{"crop_size", c.crop_size}, {"blur_max_len", c.blur_max_len},
       {"noise_sigma_max", c.noise_sigma_max}, {"brightness_max", c.brightness_max}};
}
inline void from_json(const nlohmann::json& j, AugmentConfig& c) {
  c.crop_size = j.value("crop_size", c.crop_size);
  c.blur_max_len = j.value("blur_max_len", c.blur_max_len);
  c.noise_sigma_max = j.value("noise_sigma_max", c.noise_sigma_max);
  c.brightness_max = j.value("brightness_max", c.brightness_max);
}

enum class BlurDirection { horizontal, vertical, diagonal, anti_diagonal };

struct AugmentDraw {
  int y0 = 0, x0 = 0;
  int blur_len = 1;
  BlurDirection direction = BlurDirection::horizontal;
  double noise_sigma = 0.0;
  double brightness = 0.0;
};

// Line-average blur of length `len` centred on each pixel, edge-clamped.
inline void motion_blur_frame(std::span<const float> in, std::span<float> out, int h, int w, int len, BlurDirection d) {
  if (len <= 1) {
    std::copy(in.begin(), in.end(), out.begin());
    return;
  }
  int dy = 0, dx = 0;
  switch (d) {
    case BlurDirection::horizontal: dx = 1; break;
    case BlurDirection::vertical: dy = 1; break;
    case BlurDirection::diagonal: dy = dx = 1; break;
    case BlurDirection::anti_diagonal: dy = 1, dx = -1; break;
  }
  const int lo = -(len - 1) / 2;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float s = 0.0f;
      for (int k = lo; k < lo + len; ++k) {
        const int yy = std::clamp(y + k * dy, 0, h - 1), xx = std::clamp(x + k * dx, 0, w - 1);
        s += in[static_cast<std::size_t>(yy) * w + xx];
      }
      out[static_cast<std::size_t>(y) * w + x] = s / static_cast<float>(len);
    }
}

inline AugmentDraw draw_augment(int height, int width, const AugmentConfig& cfg, Rng& rng) {
  if (cfg.crop_size > height || cfg.crop_size > width || cfg.crop_size < 1)
    throw ArgumentError("augment: crop larger than frame");
  AugmentDraw d;
  d.y0 = rng.between(0, height - cfg.crop_size);
  d.x0 = rng.between(0, width - cfg.crop_size);
  d.blur_len = rng.between(1, std::max(1, cfg.blur_max_len));
  d.direction = static_cast<BlurDirection>(rng.below(4));
  d.noise_sigma = rng.uniform(0.0, cfg.noise_sigma_max);
  d.brightness = rng.uniform(-cfg.brightness_max, cfg.brightness_max);
  return d;
}

inline Clip apply_augment(const Clip& clip, const AugmentDraw& d, int crop_size, Rng& rng) {
  Clip cropped = clip.crop(d.y0, d.x0, crop_size, crop_size);
  Clip out(cropped.frames, crop_size, crop_size);
  for (int t = 0; t < cropped.frames; ++t) {
    auto f = out.frame(t);
    motion_blur_frame(cropped.frame(t), f, crop_size, crop_size, d.blur_len, d.direction);
    for (auto& v : f) {
      double x = v + d.brightness;
      if (d.noise_sigma > 0.0) x += d.noise_sigma * rng.normal();
      v = static_cast<float>(std::clamp(x, 0.0, 1.0));
    }
  }
  return out;
}

inline Clip augment_clip(const Clip& clip, const AugmentConfig& cfg, Rng& rng) {
  const auto d = draw_augment(clip.height, clip.width, cfg, rng);
  return apply_augment(clip, d, cfg.crop_size, rng);
}

// Evaluation-time preprocessing: centre crop only.
inline Clip eval_view(const Clip& clip, int crop_size) {
  if (crop_size > clip.height || crop_size > clip.width) throw ArgumentError("crop larger than frame");
  return clip.center_crop(crop_size, crop_size);
}

struct Segment {
  Clip frames;
  std::vector<float> wave;
  int offset = 0;  // frame offset; wave starts at 640 * offset
};

inline Segment sample_segment(const Clip& frames, const std::vector<float>& wave, int length, Rng& rng) {
  if (length < 1 || frames.frames < length) throw ArgumentError("sample_segment: clip shorter than segment length");
  if (wave.size() != static_cast<std::size_t>(frames.frames) * kSamplesPerFrame)
    throw ContractError("sample_segment: wave length must equal 640 x frame count");
  Segment s;
  s.offset = rng.between(0, frames.frames - length);
  s.frames = frames.slice(s.offset, length);
  const auto start = wave.begin() + static_cast<std::ptrdiff_t>(s.offset) * kSamplesPerFrame;
  s.wave.assign(start, start + static_cast<std::ptrdiff_t>(length) * kSamplesPerFrame);
  return s;
}

}  // namespace avlip
