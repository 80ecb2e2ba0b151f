#pragma once

#include "avlip/common.hpp"
#include "avlip/tensor.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace avlip {

// On-disk clip: "AVSF", u16 version, u32 T/H/W/fps/sample_rate, then T*H*W
// float32 frames (row-major) and 640*T float32 wave samples. Little-endian.
struct ClipFile {
  Clip frames;
  std::vector<float> wave;
  std::uint32_t fps = kFps;
  std::uint32_t sample_rate = kSampleRate;
};

inline constexpr std::array<char, 4> kClipMagic{'A', 'V', 'S', 'F'};
inline constexpr std::uint16_t kClipVersion = 1;

namespace detail {

template <typename U>
void put_le(std::vector<unsigned char>& buf, U v) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
  return v;
}

inline void put_floats(std::vector<unsigned char>& buf, const std::vector<float>& xs) {
  for (float f : xs) put_le(buf, std::bit_cast<std::uint32_t>(f));
}

}  // namespace detail

inline std::vector<unsigned char> encode_clip(const ClipFile& c) {
  if (c.wave.size() != static_cast<std::size_t>(c.frames.frames) * kSamplesPerFrame)
    throw ContractError("clip wave length must equal 640 x frame count");
  std::vector<unsigned char> buf;
  buf.reserve(26 + 4 * (c.frames.size() + c.wave.size()));
  buf.insert(buf.end(), kClipMagic.begin(), kClipMagic.end());
  detail::put_le<std::uint16_t>(buf, kClipVersion);
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(c.frames.frames));
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(c.frames.height));
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(c.frames.width));
  detail::put_le<std::uint32_t>(buf, c.fps);
  detail::put_le<std::uint32_t>(buf, c.sample_rate);
  detail::put_floats(buf, c.frames.data);
  detail::put_floats(buf, c.wave);
  return buf;
}

inline ClipFile decode_clip(const std::vector<unsigned char>& buf) {
  constexpr std::size_t header = 4 + 2 + 5 * 4;
  if (buf.size() < header || std::memcmp(buf.data(), kClipMagic.data(), 4) != 0) throw IoError("not an AVSF clip");
  const auto version = detail::get_le<std::uint16_t>(buf.data() + 4);
  if (version != kClipVersion) throw IoError("unsupported AVSF version " + std::to_string(version));
  const unsigned char* p = buf.data() + 6;
  ClipFile c;
  const auto t = detail::get_le<std::uint32_t>(p), h = detail::get_le<std::uint32_t>(p + 4),
             w = detail::get_le<std::uint32_t>(p + 8);
  c.fps = detail::get_le<std::uint32_t>(p + 12);
  c.sample_rate = detail::get_le<std::uint32_t>(p + 16);
  const std::size_t n_frames = static_cast<std::size_t>(t) * h * w;
  const std::size_t n_wave = static_cast<std::size_t>(t) * kSamplesPerFrame;
  if (buf.size() != header + 4 * (n_frames + n_wave)) throw IoError("AVSF payload size mismatch");
  c.frames = Clip(static_cast<int>(t), static_cast<int>(h), static_cast<int>(w));
  c.wave.resize(n_wave);
  const unsigned char* q = buf.data() + header;
  for (std::size_t i = 0; i < n_frames; ++i, q += 4) c.frames.data[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(q));
  for (std::size_t i = 0; i < n_wave; ++i, q += 4) c.wave[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(q));
  return c;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

inline void write_clip(const std::filesystem::path& path, const ClipFile& c) { write_bytes(path, encode_clip(c)); }
inline ClipFile read_clip(const std::filesystem::path& path) { return decode_clip(read_bytes(path)); }

}  // namespace avlip
