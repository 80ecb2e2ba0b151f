#pragma once

#include "avlip/augment.hpp"
#include "avlip/video_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace avlip {

inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// Probability that a random positive outranks a random negative, ties
// counted one half, via the Mann-Whitney rank sum with mid-ranks.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ArgumentError("roc_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]] == 1) {
        pos_rank_sum += mid;
        ++pos;
      }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw MetricError("roc_auc: both classes must be present");
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

inline double accuracy(const std::vector<double>& scores, const std::vector<int>& labels, double threshold = 0.5) {
  if (scores.empty()) throw MetricError("accuracy: empty input");
  if (scores.size() != labels.size()) throw ArgumentError("accuracy: scores and labels differ in length");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) ok += (scores[i] >= threshold) == (labels[i] == 1);
  return static_cast<double>(ok) / static_cast<double>(scores.size());
}

enum class Aggregation { mean_probability, mean_logit };

struct VideoScore {
  std::string video_id;
  double score = 0.0;
  int n_chunks = 0;
  std::vector<double> chunk_probs;
};

// Non-overlapping chunks of `chunk_len` frames (a trailing partial chunk is
// dropped), each centre-cropped and scored in evaluation mode.
template <typename T>
VideoScore video_score(const VideoEncoder<T>& model, const Clip& frames, int chunk_len, std::string video_id = {},
                       Aggregation agg = Aggregation::mean_probability) {
  if (chunk_len < 1 || frames.frames < chunk_len) throw ArgumentError("video_score: video shorter than chunk length");
  VideoScore s;
  s.video_id = std::move(video_id);
  s.n_chunks = frames.frames / chunk_len;
  double logit_sum = 0.0;
  for (int c = 0; c < s.n_chunks; ++c) {
    const Clip chunk = eval_view(frames.slice(c * chunk_len, chunk_len), model.cfg.input_size);
    const double l = static_cast<double>(model.logit(chunk.template cast<T>()));
    s.chunk_probs.push_back(sigmoid(l));
    logit_sum += l;
  }
  s.score = agg == Aggregation::mean_probability
                ? std::accumulate(s.chunk_probs.begin(), s.chunk_probs.end(), 0.0) / s.n_chunks
                : sigmoid(logit_sum / s.n_chunks);
  return s;
}

}  // namespace avlip
