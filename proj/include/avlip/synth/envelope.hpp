#pragma once

#include "avlip/common.hpp"
#include "avlip/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

namespace avlip::synth {

// Parameters of the synthetic speech-energy envelope.
struct EnvelopeConfig {
  double node_rate_hz = 100.0;   // control-rate of the underlying noise
  double smooth_sigma_s = 0.06;  // Gaussian low-pass width (syllable-scale)
  double gap_rate_hz = 0.5;      // expected silent gaps per second
  double gap_min_s = 0.15;
  double gap_max_s = 0.4;
  double ramp_s = 0.02;          // fade in/out at gap edges
  double env_max_slope = 0.01;   // bound on |env[n+1] - env[n]|
};

inline void to_json(nlohmann::json& j, const EnvelopeConfig& c) {
  j = {{"node_rate_hz", c.node_rate_hz}, {"smooth_sigma_s", c.smooth_sigma_s}, {"gap_rate_hz", c.gap_rate_hz},
       {"gap_min_s", c.gap_min_s},       {"gap_max_s", c.gap_max_s},           {"ramp_s", c.ramp_s},
       {"env_max_slope", c.env_max_slope}};
}
inline void from_json(const nlohmann::json& j, EnvelopeConfig& c) {
  c.node_rate_hz = j.value("node_rate_hz", c.node_rate_hz);
  c.smooth_sigma_s = j.value("smooth_sigma_s", c.smooth_sigma_s);
  c.gap_rate_hz = j.value("gap_rate_hz", c.gap_rate_hz);
  c.gap_min_s = j.value("gap_min_s", c.gap_min_s);
  c.gap_max_s = j.value("gap_max_s", c.gap_max_s);
  c.ramp_s = j.value("ramp_s", c.ramp_s);
  c.env_max_slope = j.value("env_max_slope", c.env_max_slope);
}

struct Envelope {
  std::vector<float> samples;  // 16 kHz, values in [0, 1]
  double duration_s = 0.0;
};

// Zero-mean, unit-variance Gaussian-smoothed white noise of length n.
inline std::vector<double> smooth_noise(int n, double sigma, Rng& rng) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> raw(static_cast<std::size_t>(n + 2 * radius));
  for (auto& v : raw) v = rng.normal();
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double w = sigma > 0 ? std::exp(-0.5 * k * k / (sigma * sigma)) : (k == 0 ? 1.0 : 0.0);
    kernel[static_cast<std::size_t>(k + radius)] = w;
    ksum += w;
  }
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = 0; k <= 2 * radius; ++k) s += raw[static_cast<std::size_t>(i + k)] * kernel[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(i)] = s / ksum;
  }
  double mean = 0.0, var = 0.0;
  for (double v : out) mean += v;
  mean /= n;
  for (double v : out) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  for (auto& v : out) v = sd > 0 ? (v - mean) / sd : 0.0;
  return out;
}

// Low-pass-filtered seeded noise rescaled to [0, 1], with silent gaps.
// Deterministic in (duration_s, seed, cfg).
inline Envelope gen_envelope(double duration_s, std::uint64_t seed, const EnvelopeConfig& cfg = {}) {
  if (!(duration_s > 0.0)) throw ArgumentError("gen_envelope: duration must be positive");
  const int n = static_cast<int>(std::lround(kSampleRate * duration_s));
  const double step = kSampleRate / cfg.node_rate_hz;  // samples between nodes
  const int nodes = static_cast<int>(std::ceil(n / step)) + 2;
  Rng rng(derive_seed(seed, {0xE17E}));
  std::vector<double> node = smooth_noise(nodes, cfg.smooth_sigma_s * cfg.node_rate_hz, rng);
  const auto [lo, hi] = std::minmax_element(node.begin(), node.end());
  const double range = *hi - *lo;
  for (auto& v : node) v = range > 0 ? (v - *lo) / range : 0.0;

  Envelope env;
  env.duration_s = duration_s;
  env.samples.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double pos = i / step;
    const int k = static_cast<int>(pos);
    const double f = pos - k;
    env.samples[static_cast<std::size_t>(i)] =
        static_cast<float>((1.0 - f) * node[static_cast<std::size_t>(k)] + f * node[static_cast<std::size_t>(k + 1)]);
  }

  // Silent gaps with linear ramps.
  std::vector<double> gate(static_cast<std::size_t>(n), 1.0);
  const double ramp = std::max(1.0, cfg.ramp_s * kSampleRate);
  double t = 0.0;
  while (cfg.gap_rate_hz > 0.0) {
    t += -std::log(1.0 - rng.uniform()) / cfg.gap_rate_hz;
    if (t >= duration_s) break;
    const double len = rng.uniform(cfg.gap_min_s, cfg.gap_max_s);
    const double a = t * kSampleRate, b = (t + len) * kSampleRate;
    for (int i = std::max(0, static_cast<int>(a - ramp)); i < std::min(n, static_cast<int>(b + ramp) + 1); ++i) {
      double g = 1.0;
      if (i < a) g = (a - i) / ramp;
      else if (i > b) g = (i - b) / ramp;
      else g = 0.0;
      gate[static_cast<std::size_t>(i)] = std::min(gate[static_cast<std::size_t>(i)], std::clamp(g, 0.0, 1.0));
    }
    t += len;
  }
  for (int i = 0; i < n; ++i)
    env.samples[static_cast<std::size_t>(i)] =
        std::clamp(static_cast<float>(env.samples[static_cast<std::size_t>(i)] * gate[static_cast<std::size_t>(i)]), 0.0f, 1.0f);
  return env;
}

// Mean envelope over each 640-sample frame window.
inline std::vector<double> per_frame_mean(const std::vector<float>& samples) {
  const std::size_t frames = samples.size() / kSamplesPerFrame;
  std::vector<double> out(frames, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    double s = 0.0;
    for (int i = 0; i < kSamplesPerFrame; ++i) s += samples[t * kSamplesPerFrame + static_cast<std::size_t>(i)];
    out[t] = s / kSamplesPerFrame;
  }
  return out;
}

}  // namespace avlip::synth
