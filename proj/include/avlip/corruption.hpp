#pragma once

#include "avlip/evalkit.hpp"

#include <array>
#include <numbers>

namespace avlip {

enum class CorruptionKind { gauss_blur, blockwise, compression, pixelation };

inline std::string to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::gauss_blur: return "GAUSS_BLUR";
    case CorruptionKind::blockwise: return "BLOCKWISE";
    case CorruptionKind::compression: return "COMPRESSION";
    case CorruptionKind::pixelation: return "PIXELATION";
  }
  return "?";
}

inline CorruptionKind corruption_from_string(const std::string& s) {
  if (s == "GAUSS_BLUR") return CorruptionKind::gauss_blur;
  if (s == "BLOCKWISE") return CorruptionKind::blockwise;
  if (s == "COMPRESSION") return CorruptionKind::compression;
  if (s == "PIXELATION") return CorruptionKind::pixelation;
  throw ArgumentError("unknown corruption kind: " + s);
}

inline const std::array<CorruptionKind, 4> kAllCorruptions{CorruptionKind::gauss_blur, CorruptionKind::blockwise,
                                                           CorruptionKind::compression, CorruptionKind::pixelation};

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::gauss_blur;
  int severity = 0;  // 0 (identity) .. 5
  std::uint64_t seed = 0;
};

// Severity tables, index = severity.
inline constexpr std::array<double, 6> kBlurSigma{0.0, 0.5, 1.0, 2.0, 3.0, 4.0};
inline constexpr std::array<int, 6> kPixelFactor{1, 2, 4, 6, 8, 12};
inline constexpr std::array<int, 6> kBlockCount{0, 2, 4, 6, 8, 10};
inline constexpr std::array<double, 6> kBlockFraction{0.0, 0.08, 0.10, 0.12, 0.14, 0.16};  // side / frame size
inline constexpr std::array<int, 6> kJpegQuality{100, 80, 50, 30, 15, 5};

namespace detail {

inline void gauss_blur_frame(std::span<float> f, int h, int w, double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double ks = 0.0;
  for (int i = -r; i <= r; ++i) ks += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= ks;
  std::vector<double> tmp(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i) s += k[static_cast<std::size_t>(i + r)] * f[static_cast<std::size_t>(y) * w + std::clamp(x + i, 0, w - 1)];
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i) s += k[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
      f[static_cast<std::size_t>(y) * w + x] = static_cast<float>(s);
    }
}

// Block averages over f x f tiles anchored at the origin, written back
// nearest-neighbour; edge tiles average the pixels they contain.
inline void pixelate_frame(std::span<float> img, int h, int w, int f) {
  for (int by = 0; by < h; by += f)
    for (int bx = 0; bx < w; bx += f) {
      const int y1 = std::min(h, by + f), x1 = std::min(w, bx + f);
      double s = 0.0;
      for (int y = by; y < y1; ++y)
        for (int x = bx; x < x1; ++x) s += img[static_cast<std::size_t>(y) * w + x];
      const float m = static_cast<float>(s / ((y1 - by) * (x1 - bx)));
      for (int y = by; y < y1; ++y)
        for (int x = bx; x < x1; ++x) img[static_cast<std::size_t>(y) * w + x] = m;
    }
}

inline const std::array<int, 64>& jpeg_luma_table() {
  static const std::array<int, 64> q{16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                                     14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                                     18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                                     49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
  return q;
}

// 8x8 block DCT with a JPEG-style quantiser; partial edge blocks are padded by
// edge replication and cropped back.
inline void dct_quantize_frame(std::span<float> img, int h, int w, int quality) {
  const double scale = quality < 50 ? 5000.0 / quality : 200.0 - 2.0 * quality;
  std::array<double, 64> qt{};
  for (int i = 0; i < 64; ++i)
    qt[static_cast<std::size_t>(i)] = std::max(1.0, std::floor((jpeg_luma_table()[static_cast<std::size_t>(i)] * scale + 50.0) / 100.0));
  std::array<double, 64> basis{};  // basis[u*8+x] = c(u) cos((2x+1)u pi / 16)
  for (int u = 0; u < 8; ++u)
    for (int x = 0; x < 8; ++x)
      basis[static_cast<std::size_t>(u * 8 + x)] =
          (u == 0 ? std::sqrt(0.125) : 0.5) * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
  std::array<double, 64> blk{}, tmp{}, coef{};
  for (int by = 0; by < h; by += 8)
    for (int bx = 0; bx < w; bx += 8) {
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          blk[static_cast<std::size_t>(y * 8 + x)] =
              255.0 * img[static_cast<std::size_t>(std::min(by + y, h - 1)) * w + std::min(bx + x, w - 1)] - 128.0;
      for (int u = 0; u < 8; ++u)  // rows
        for (int x = 0; x < 8; ++x) {
          double s = 0.0;
          for (int y = 0; y < 8; ++y) s += basis[static_cast<std::size_t>(u * 8 + y)] * blk[static_cast<std::size_t>(y * 8 + x)];
          tmp[static_cast<std::size_t>(u * 8 + x)] = s;
        }
      for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
          double s = 0.0;
          for (int x = 0; x < 8; ++x) s += tmp[static_cast<std::size_t>(u * 8 + x)] * basis[static_cast<std::size_t>(v * 8 + x)];
          const double q = qt[static_cast<std::size_t>(u * 8 + v)];
          coef[static_cast<std::size_t>(u * 8 + v)] = std::round(s / q) * q;
        }
      for (int y = 0; y < 8; ++y)
        for (int v = 0; v < 8; ++v) {
          double s = 0.0;
          for (int u = 0; u < 8; ++u) s += basis[static_cast<std::size_t>(u * 8 + y)] * coef[static_cast<std::size_t>(u * 8 + v)];
          tmp[static_cast<std::size_t>(y * 8 + v)] = s;
        }
      for (int y = 0; y < 8 && by + y < h; ++y)
        for (int x = 0; x < 8 && bx + x < w; ++x) {
          double s = 0.0;
          for (int v = 0; v < 8; ++v) s += tmp[static_cast<std::size_t>(y * 8 + v)] * basis[static_cast<std::size_t>(v * 8 + x)];
          img[static_cast<std::size_t>(by + y) * w + bx + x] = static_cast<float>((s + 128.0) / 255.0);
        }
    }
}

}  // namespace detail

// Applies one corruption to every frame. Severity 0 returns the input
// unchanged; block positions are drawn once per clip.
inline Clip apply_corruption(const Clip& clip, const CorruptionSpec& spec) {
  if (spec.severity < 0 || spec.severity > 5) throw ArgumentError("corruption severity must lie in 0..5");
  if (spec.severity == 0) return clip;
  const auto s = static_cast<std::size_t>(spec.severity);
  Clip out = clip;
  const int h = clip.height, w = clip.width;
  switch (spec.kind) {
    case CorruptionKind::gauss_blur:
      for (int t = 0; t < out.frames; ++t) detail::gauss_blur_frame(out.frame(t), h, w, kBlurSigma[s]);
      break;
    case CorruptionKind::pixelation:
      for (int t = 0; t < out.frames; ++t) detail::pixelate_frame(out.frame(t), h, w, kPixelFactor[s]);
      break;
    case CorruptionKind::compression:
      for (int t = 0; t < out.frames; ++t) detail::dct_quantize_frame(out.frame(t), h, w, kJpegQuality[s]);
      break;
    case CorruptionKind::blockwise: {
      const int side = std::max(1, static_cast<int>(std::lround(kBlockFraction[s] * std::min(h, w))));
      Rng rng(derive_seed(spec.seed, {0xB10C, s}));
      for (int k = 0; k < kBlockCount[s]; ++k) {
        const int y0 = static_cast<int>(rng.between(0, h - side)), x0 = static_cast<int>(rng.between(0, w - side));
        for (int t = 0; t < out.frames; ++t)
          for (int y = y0; y < y0 + side; ++y)
            for (int x = x0; x < x0 + side; ++x) out.at(t, y, x) = 0.5f;
      }
      break;
    }
  }
  for (auto& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

struct RobustnessResult {
  MetricsReport report;
  double clean_auc = 0.0;
  std::string curve_csv;  // kind,severity,auc,accuracy,n_videos
};

// AUC of a fine-tuned detector on the test set under each (kind, severity).
inline RobustnessResult robustness_eval(const VideoEncoder<float>& model, const LabeledSet& test,
                                        const std::vector<CorruptionKind>& kinds, const std::vector<int>& severities,
                                        int chunk_len, std::uint64_t seed) {
  RobustnessResult res;
  res.report.protocol = "robustness";
  res.report.seeds = {seed};
  res.clean_auc = set_auc(score_set(model, test, chunk_len), test);
  std::ostringstream csv;
  csv.precision(17);
  csv << "kind,severity,auc,accuracy,n_videos\n";
  for (auto kind : kinds)
    for (int sev : severities) {
      std::vector<VideoScore> scores;
      for (std::size_t i = 0; i < test.size(); ++i) {
        const auto& e = test.entries[i];
        const CorruptionSpec spec{kind, sev, derive_seed(seed, {fnv1a64(e.video_id())})};
        scores.push_back(video_score(model, apply_corruption(test.get(i).frames, spec), chunk_len, e.video_id()));
      }
      MetricsCell c = score_cell(to_string(kind) + "@" + std::to_string(sev), scores, test);
      csv << to_string(kind) << ',' << sev << ',' << c.auc << ',' << c.accuracy << ',' << c.n_videos << '\n';
      res.report.cells.push_back(std::move(c));
    }
  res.report.finalize();
  res.curve_csv = csv.str();
  return res;
}

// Mean AUC over the non-zero severities of every kind.
inline double severity_averaged_auc(const MetricsReport& r) {
  double s = 0.0;
  int n = 0;
  for (const auto& c : r.cells)
    if (!c.name.ends_with("@0")) {
      s += c.auc;
      ++n;
    }
  if (n == 0) throw MetricError("no corrupted cells in report");
  return s / n;
}

}  // namespace avlip
