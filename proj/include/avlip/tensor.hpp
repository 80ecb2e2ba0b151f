#pragma once

#include "avlip/common.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace avlip {

// T x H x W grayscale video, row-major per frame.
template <typename S>
struct VideoTensor {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<S> data;

  VideoTensor() = default;
  VideoTensor(int t, int h, int w, S fill = S(0))
      : frames(t), height(h), width(w), data(static_cast<std::size_t>(t) * h * w, fill) {}

  std::size_t frame_size() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return data.size(); }

  S& at(int t, int y, int x) { return data[(static_cast<std::size_t>(t) * height + y) * width + x]; }
  const S& at(int t, int y, int x) const {
    return data[(static_cast<std::size_t>(t) * height + y) * width + x];
  }

  std::span<S> frame(int t) { return {data.data() + t * frame_size(), frame_size()}; }
  std::span<const S> frame(int t) const { return {data.data() + t * frame_size(), frame_size()}; }

  // Frames [start, start + count).
  VideoTensor slice(int start, int count) const {
    if (start < 0 || count < 0 || start + count > frames) throw ArgumentError("frame slice out of range");
    VideoTensor out(count, height, width);
    std::copy(data.begin() + static_cast<std::ptrdiff_t>(start * frame_size()),
              data.begin() + static_cast<std::ptrdiff_t>((start + count) * frame_size()), out.data.begin());
    return out;
  }

  VideoTensor crop(int y0, int x0, int h, int w) const {
    if (y0 < 0 || x0 < 0 || y0 + h > height || x0 + w > width) throw ArgumentError("crop window out of range");
    VideoTensor out(frames, h, w);
    for (int t = 0; t < frames; ++t)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(t, y, x) = at(t, y0 + y, x0 + x);
    return out;
  }

  VideoTensor center_crop(int h, int w) const { return crop((height - h) / 2, (width - w) / 2, h, w); }

  template <typename U>
  VideoTensor<U> cast() const {
    VideoTensor<U> out(frames, height, width);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  bool operator==(const VideoTensor&) const = default;
};

using Clip = VideoTensor<float>;

// Storage for buffers viewed through Eigen maps. Vectorised reductions peel
// differently depending on the start address, so a fixed alignment keeps
// results bit-reproducible across runs.
template <typename S>
using AlignedVector = std::vector<S, Eigen::aligned_allocator<S>>;

// Channel-major activation block: C x N x H x W, where N indexes frames.
// Keeping channels outermost lets a convolution write its GEMM output in place.
template <typename S>
struct Feature4 {
  int channels = 0;
  int count = 0;
  int height = 0;
  int width = 0;
  AlignedVector<S> data;

  Feature4() = default;
  Feature4(int c, int n, int h, int w)
      : channels(c), count(n), height(h), width(w), data(static_cast<std::size_t>(c) * n * h * w, S(0)) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t per_channel() const { return plane() * count; }

  S& at(int c, int n, int y, int x) {
    return data[((static_cast<std::size_t>(c) * count + n) * height + y) * width + x];
  }
  const S& at(int c, int n, int y, int x) const {
    return data[((static_cast<std::size_t>(c) * count + n) * height + y) * width + x];
  }

  MatMap<S> as_matrix() {
    return MatMap<S>(data.data(), channels, static_cast<Eigen::Index>(per_channel()));
  }
  ConstMatMap<S> as_matrix() const {
    return ConstMatMap<S>(data.data(), channels, static_cast<Eigen::Index>(per_channel()));
  }
};

}  // namespace avlip
