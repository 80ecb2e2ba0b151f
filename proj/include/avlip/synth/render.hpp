#pragma once

#include "avlip/synth/envelope.hpp"
#include "avlip/tensor.hpp"

#include <array>
#include <optional>
#include <string>

namespace avlip::synth {

// Appearance statistics of one synthetic "camera". Two renderers with
// different texture and noise stand in for a dataset domain shift.
struct RendererConfig {
  std::string id = "studio";
  int size = 48;                   // square frame side
  double skin = 0.62;              // base intensity
  double texture_contrast = 0.05;  // static per-clip texture amplitude
  double texture_sigma_px = 2.0;   // texture smoothness
  double sensor_noise = 0.01;      // per-frame per-pixel noise
  double brightness_range = 0.06;  // per-clip offset in [-r, r]
  double jitter_px = 0.6;          // slow head-motion amplitude
  double mouth_width = 0.30;       // semi-axis, fraction of size
  double min_aperture = 0.02;      // vertical semi-axis at silence, fraction of size
  double max_aperture = 0.17;      // at full envelope
  double lip_thickness = 0.045;    // fraction of size
  double lip_value = 0.38;
  double interior_value = 0.08;
  double aperture_noise = 0.01;    // renderer noise on the aperture track
};

inline RendererConfig builtin_renderer(const std::string& id, int size) {
  RendererConfig r;
  r.size = size;
  r.id = id;
  if (id == "studio") return r;
  if (id == "street") {
    r.skin = 0.55;
    r.texture_contrast = 0.09;
    r.texture_sigma_px = 1.0;
    r.sensor_noise = 0.03;
    r.brightness_range = 0.1;
    r.jitter_px = 1.0;
    r.lip_value = 0.30;
    r.interior_value = 0.12;
    return r;
  }
  throw ArgumentError("unknown renderer id: " + id);
}

enum class Family { real, desync, shuffle, jitter };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::real: return "REAL";
    case Family::desync: return "DESYNC";
    case Family::shuffle: return "SHUFFLE";
    case Family::jitter: return "JITTER";
  }
  return "?";
}

inline Family family_from_string(const std::string& s) {
  if (s == "REAL") return Family::real;
  if (s == "DESYNC") return Family::desync;
  if (s == "SHUFFLE") return Family::shuffle;
  if (s == "JITTER") return Family::jitter;
  throw ArgumentError("unknown forgery family: " + s);
}

struct FakeConfig {
  int shuffle_window = 5;
  double jitter_sigma = 0.15;      // i.i.d. aperture noise
  double desync_wobble_px = 0.6;   // per-frame mouth placement error of frame-wise synthesis
  double desync_width_jitter = 0.05;
};

inline void to_json(nlohmann::json& j, const FakeConfig& c) {
  j = {{"shuffle_window", c.shuffle_window}, {"jitter_sigma", c.jitter_sigma},
       {"desync_wobble_px", c.desync_wobble_px}, {"desync_width_jitter", c.desync_width_jitter}};
}
inline void from_json(const nlohmann::json& j, FakeConfig& c) {
  c.shuffle_window = j.value("shuffle_window", c.shuffle_window);
  c.jitter_sigma = j.value("jitter_sigma", c.jitter_sigma);
  c.desync_wobble_px = j.value("desync_wobble_px", c.desync_wobble_px);
  c.desync_width_jitter = j.value("desync_width_jitter", c.desync_width_jitter);
}

// Synchronised lip clip and waveform; wave.size() == 640 * frames.frames.
struct AVPair {
  Clip frames;
  std::vector<float> wave;
  std::vector<double> aperture;  // rendered aperture track in [0, 1]
  std::vector<float> envelope;
  int fps = kFps;
  int sample_rate = kSampleRate;
  std::uint64_t seed = 0;
  std::uint64_t envelope_seed = 0;
  double duration_s = 0.0;
  RendererConfig renderer;
  EnvelopeConfig envelope_cfg;
};

struct LabeledVideo {
  Clip frames;
  std::vector<float> wave;  // reference audio of the source pair
  int label = 0;            // 0 real, 1 fake
  Family family = Family::real;
  std::string renderer_id;
  std::uint64_t seed = 0;
  std::uint64_t envelope_seed = 0;
  std::optional<std::uint64_t> driving_envelope_seed;  // DESYNC only
  std::vector<double> aperture;
};

namespace detail {

// Everything needed to draw a clip frame by frame.
struct RenderPlan {
  int frames = 0;
  std::vector<double> aperture;  // [0, 1]
  std::vector<double> dx, dy;    // mouth centre offsets, pixels
  std::vector<double> width_scale;
  std::vector<std::uint64_t> frame_noise_seed;
};

struct Nuisance {
  std::vector<double> texture;  // size x size
  double brightness = 0.0;
  std::vector<double> drift_x, drift_y;
};

inline Nuisance make_nuisance(const RendererConfig& r, int frames, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x4E55}));
  Nuisance n;
  const int s = r.size;
  // Separable Gaussian-smoothed texture, unit variance, scaled by contrast.
  std::vector<double> rows(static_cast<std::size_t>(s) * s);
  for (int y = 0; y < s; ++y) {
    auto line = smooth_noise(s, r.texture_sigma_px, rng);
    for (int x = 0; x < s; ++x) rows[static_cast<std::size_t>(y * s + x)] = line[static_cast<std::size_t>(x)];
  }
  n.texture.assign(rows.size(), 0.0);
  const int rad = std::max(1, static_cast<int>(std::ceil(2 * r.texture_sigma_px)));
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      double acc = 0.0, wsum = 0.0;
      for (int k = -rad; k <= rad; ++k) {
        const int yy = std::clamp(y + k, 0, s - 1);
        const double w = std::exp(-0.5 * k * k / (r.texture_sigma_px * r.texture_sigma_px));
        acc += w * rows[static_cast<std::size_t>(yy * s + x)];
        wsum += w;
      }
      n.texture[static_cast<std::size_t>(y * s + x)] = r.texture_contrast * acc / wsum;
    }
  n.brightness = rng.uniform(-r.brightness_range, r.brightness_range);
  n.drift_x = smooth_noise(frames, 4.0, rng);
  n.drift_y = smooth_noise(frames, 4.0, rng);
  for (auto& v : n.drift_x) v *= r.jitter_px;
  for (auto& v : n.drift_y) v *= r.jitter_px;
  return n;
}

inline RenderPlan base_plan(const RendererConfig& r, const Nuisance& n, const std::vector<double>& aperture,
                            std::uint64_t seed) {
  RenderPlan p;
  p.frames = static_cast<int>(aperture.size());
  p.aperture = aperture;
  p.dx = n.drift_x;
  p.dy = n.drift_y;
  p.width_scale.assign(aperture.size(), 1.0);
  for (int t = 0; t < p.frames; ++t) p.frame_noise_seed.push_back(derive_seed(seed, {0xF0, static_cast<std::uint64_t>(t)}));
  (void)r;
  return p;
}

// Signed distance (pixels, negative inside) of (px, py) to an axis-aligned
// ellipse, radial approximation.
inline double ellipse_sdf(double px, double py, double ax, double ay) {
  const double dist = std::hypot(px, py);
  if (dist == 0.0) return -std::min(ax, ay);
  const double d = std::hypot(px / ax, py / ay);
  return dist * (1.0 - 1.0 / d);
}

inline Clip render(const RendererConfig& r, const Nuisance& n, const RenderPlan& p) {
  const int s = r.size;
  Clip clip(p.frames, s, s);
  const double cx0 = (s - 1) / 2.0, cy0 = (s - 1) * 0.55;
  for (int t = 0; t < p.frames; ++t) {
    Rng noise(p.frame_noise_seed[static_cast<std::size_t>(t)]);
    const double ax = r.mouth_width * s * p.width_scale[static_cast<std::size_t>(t)];
    const double ay = (r.min_aperture + (r.max_aperture - r.min_aperture) * p.aperture[static_cast<std::size_t>(t)]) * s;
    const double lip = r.lip_thickness * s;
    const double cx = cx0 + p.dx[static_cast<std::size_t>(t)], cy = cy0 + p.dy[static_cast<std::size_t>(t)];
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        double v = r.skin + n.brightness + n.texture[static_cast<std::size_t>(y * s + x)];
        const double px = x - cx, py = y - cy;
        const double cov_lip = std::clamp(0.5 - ellipse_sdf(px, py, ax + lip, ay + lip), 0.0, 1.0);
        v = v * (1.0 - cov_lip) + r.lip_value * cov_lip;
        const double cov_in = std::clamp(0.5 - ellipse_sdf(px, py, ax, ay), 0.0, 1.0);
        v = v * (1.0 - cov_in) + r.interior_value * cov_in;
        if (r.sensor_noise > 0) v += r.sensor_noise * noise.normal();
        clip.at(t, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  }
  return clip;
}

inline std::vector<float> harmonic_wave(const std::vector<float>& env, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0xA0D10}));
  const double f0 = rng.uniform(80.0, 200.0);
  std::array<double, 3> phase{};
  for (auto& ph : phase) ph = rng.uniform(0.0, 2.0 * M_PI);
  constexpr std::array<double, 3> amp{1.0, 0.5, 0.25};
  std::vector<float> w(env.size());
  for (std::size_t i = 0; i < env.size(); ++i) {
    double s = 0.0;
    for (int h = 0; h < 3; ++h)
      s += amp[static_cast<std::size_t>(h)] * std::sin(2.0 * M_PI * f0 * (h + 1) * static_cast<double>(i) / kSampleRate + phase[static_cast<std::size_t>(h)]);
    w[i] = static_cast<float>(env[i] * s / 1.75);
  }
  return w;
}

inline std::vector<double> aperture_track(const std::vector<float>& env, const RendererConfig& r, std::uint64_t seed) {
  std::vector<double> a = per_frame_mean(env);
  Rng rng(derive_seed(seed, {0xA9E}));
  for (auto& v : a) v = std::clamp(v + (r.aperture_noise > 0 ? r.aperture_noise * rng.normal() : 0.0), 0.0, 1.0);
  return a;
}

}  // namespace detail

inline int frame_count_for(double duration_s) {
  const double frames = duration_s * kFps;
  const long n = std::lround(frames);
  if (std::abs(frames - static_cast<double>(n)) > 1e-9) throw ArgumentError("duration must be a multiple of 1/25 s");
  return static_cast<int>(n);
}

// Elliptical mouth whose vertical aperture follows the per-frame mean
// envelope, paired with an envelope-modulated harmonic tone.
// Renders a pair from an explicit envelope (16 kHz, length 640 * frames).
inline AVPair render_pair_from_envelope(std::vector<float> envelope, std::uint64_t seed, const RendererConfig& renderer,
                                        const EnvelopeConfig& env_cfg = {}) {
  if (envelope.size() % kSamplesPerFrame != 0) throw ArgumentError("envelope length must be a multiple of 640");
  const int frames = static_cast<int>(envelope.size() / kSamplesPerFrame);
  if (frames < 5) throw ArgumentError("render_real_pair: need at least 5 frames");
  AVPair p;
  p.seed = seed;
  p.envelope_seed = seed;
  p.duration_s = static_cast<double>(frames) / kFps;
  p.renderer = renderer;
  p.envelope_cfg = env_cfg;
  p.envelope = std::move(envelope);
  p.wave = detail::harmonic_wave(p.envelope, seed);
  p.aperture = detail::aperture_track(p.envelope, renderer, seed);
  const auto nuisance = detail::make_nuisance(renderer, frames, seed);
  p.frames = detail::render(renderer, nuisance, detail::base_plan(renderer, nuisance, p.aperture, seed));
  return p;
}

// Elliptical mouth whose vertical aperture follows the per-frame mean
// envelope, paired with an envelope-modulated harmonic tone.
inline AVPair render_real_pair(double duration_s, std::uint64_t seed, const RendererConfig& renderer,
                               const EnvelopeConfig& env_cfg = {}) {
  const int frames = frame_count_for(duration_s);
  if (frames < 5) throw ArgumentError("render_real_pair: need at least 5 frames");
  return render_pair_from_envelope(gen_envelope(duration_s, seed, env_cfg).samples, seed, renderer, env_cfg);
}

inline LabeledVideo as_labeled(const AVPair& p) {
  LabeledVideo v;
  v.frames = p.frames;
  v.wave = p.wave;
  v.label = 0;
  v.family = Family::real;
  v.renderer_id = p.renderer.id;
  v.seed = p.seed;
  v.envelope_seed = p.envelope_seed;
  v.aperture = p.aperture;
  return v;
}

inline std::uint64_t desync_envelope_seed(std::uint64_t fake_seed) { return derive_seed(fake_seed, {0xDE5C}); }

// Forgery families that break temporal or cross-modal coherence while keeping
// per-frame appearance statistics.
inline LabeledVideo make_fake(const AVPair& pair, Family family, std::uint64_t seed, const FakeConfig& cfg = {}) {
  if (family == Family::real) throw ArgumentError("make_fake: REAL is not a forgery family");
  LabeledVideo v;
  v.wave = pair.wave;
  v.label = 1;
  v.family = family;
  v.renderer_id = pair.renderer.id;
  v.seed = seed;
  v.envelope_seed = pair.envelope_seed;
  const int frames = pair.frames.frames;
  Rng rng(derive_seed(seed, {0xFA4E}));
  const auto nuisance = detail::make_nuisance(pair.renderer, frames, pair.seed);

  switch (family) {
    case Family::shuffle: {
      const int w = std::max(1, cfg.shuffle_window);
      v.frames = pair.frames;
      v.aperture = pair.aperture;
      for (int start = 0; start < frames; start += w) {
        const int len = std::min(w, frames - start);
        const auto perm = rng.permutation(len);
        for (int i = 0; i < len; ++i) {
          const int src = start + perm[static_cast<std::size_t>(i)];
          std::copy(pair.frames.frame(src).begin(), pair.frames.frame(src).end(), v.frames.frame(start + i).begin());
          v.aperture[static_cast<std::size_t>(start + i)] = pair.aperture[static_cast<std::size_t>(src)];
        }
      }
      break;
    }
    case Family::jitter: {
      std::vector<double> a = pair.aperture;
      for (auto& x : a) x = std::clamp(x + cfg.jitter_sigma * rng.normal(), 0.0, 1.0);
      v.aperture = a;
      v.frames = detail::render(pair.renderer, nuisance, detail::base_plan(pair.renderer, nuisance, a, pair.seed));
      break;
    }
    case Family::desync: {
      const auto driving = desync_envelope_seed(seed);
      v.driving_envelope_seed = driving;
      const auto env = gen_envelope(pair.duration_s, driving, pair.envelope_cfg).samples;
      const auto a = detail::aperture_track(env, pair.renderer, driving);
      auto plan = detail::base_plan(pair.renderer, nuisance, a, pair.seed);
      // Frame-wise synthesis: each frame's mouth is placed independently.
      for (int t = 0; t < frames; ++t) {
        plan.dx[static_cast<std::size_t>(t)] += cfg.desync_wobble_px * rng.normal();
        plan.dy[static_cast<std::size_t>(t)] += cfg.desync_wobble_px * rng.normal();
        plan.width_scale[static_cast<std::size_t>(t)] = 1.0 + cfg.desync_width_jitter * rng.normal();
      }
      v.aperture = a;
      v.frames = detail::render(pair.renderer, nuisance, plan);
      break;
    }
    case Family::real: break;
  }
  return v;
}

// Mouth-aperture proxy measured from pixels: total darkness below the skin
// level inside the central mouth box. Used by tests and diagnostics only.
inline std::vector<double> measure_aperture(const Clip& clip) {
  std::vector<double> out(static_cast<std::size_t>(clip.frames));
  const int s = clip.width;
  const int x0 = s / 8, x1 = s - s / 8;
  const int y0 = static_cast<int>(s * 0.25), y1 = static_cast<int>(s * 0.85);
  for (int t = 0; t < clip.frames; ++t) {
    double dark = 0.0;
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) dark += std::max(0.0, 0.3 - static_cast<double>(clip.at(t, y, x)));
    out[static_cast<std::size_t>(t)] = dark;
  }
  return out;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = std::min(a.size(), b.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return (saa > 0 && sbb > 0) ? sab / std::sqrt(saa * sbb) : 0.0;
}

}  // namespace avlip::synth
