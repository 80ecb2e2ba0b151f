#pragma once

#include "avlip/clip_io.hpp"
#include "avlip/common.hpp"
#include "avlip/nn/param.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace avlip {

// Encoder checkpoint: "AVCK", u16 version, u64 header length, a JSON header,
// then each tensor as row-major float32 in header order. Little-endian.
struct Checkpoint {
  std::string stage;               // "pretrained", "finetuned" or "scratch"
  nlohmann::json config;           // resolved run configuration
  std::string config_hash;
  std::set<std::string> frozen;    // freeze mask: names of frozen parameters
  nlohmann::json extra = nlohmann::json::object();  // training logs, seeds
  std::map<std::string, Mat<float>> tensors;

  bool has(const std::string& name) const { return tensors.count(name) != 0; }
};

inline constexpr std::array<char, 4> kCheckpointMagic{'A', 'V', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

// Copies every parameter the model visits into the checkpoint.
template <typename Model>
void capture(Model& model, Checkpoint& ck) {
  model.visit([&](nn::Param<float>& p) { ck.tensors[p.name] = p.value; });
}

// Loads matching tensors into the model. With `require_all`, a parameter
// missing from the checkpoint is an error; otherwise it keeps its value.
// Returns the number of parameters restored.
template <typename Model>
int restore(Model& model, const Checkpoint& ck, bool require_all = true) {
  int n = 0;
  model.visit([&](nn::Param<float>& p) {
    const auto it = ck.tensors.find(p.name);
    if (it == ck.tensors.end()) {
      if (require_all) throw StateError("checkpoint has no tensor " + p.name);
      return;
    }
    if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols())
      throw ShapeError("checkpoint tensor " + p.name + " has shape " + std::to_string(it->second.rows()) + "x" +
                       std::to_string(it->second.cols()) + ", model expects " + std::to_string(p.value.rows()) + "x" +
                       std::to_string(p.value.cols()));
    p.value = it->second;
    ++n;
  });
  return n;
}

inline std::vector<unsigned char> encode_checkpoint(const Checkpoint& ck) {
  nlohmann::json header{{"stage", ck.stage},
                        {"config", ck.config},
                        {"config_hash", ck.config_hash},
                        {"frozen", ck.frozen},
                        {"extra", ck.extra}};
  auto& list = header["tensors"] = nlohmann::json::array();
  for (const auto& [name, m] : ck.tensors) list.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  const std::string text = header.dump();

  std::vector<unsigned char> buf(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_le<std::uint16_t>(buf, kCheckpointVersion);
  detail::put_le<std::uint64_t>(buf, text.size());
  buf.insert(buf.end(), text.begin(), text.end());
  for (const auto& [name, m] : ck.tensors)
    for (Eigen::Index i = 0; i < m.size(); ++i) detail::put_le(buf, std::bit_cast<std::uint32_t>(m.data()[i]));
  return buf;
}

inline Checkpoint decode_checkpoint(const std::vector<unsigned char>& buf) {
  constexpr std::size_t fixed = 4 + 2 + 8;
  if (buf.size() < fixed || std::memcmp(buf.data(), kCheckpointMagic.data(), 4) != 0) throw IoError("not an AVCK checkpoint");
  const auto version = detail::get_le<std::uint16_t>(buf.data() + 4);
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto hlen = detail::get_le<std::uint64_t>(buf.data() + 6);
  if (hlen > buf.size() - fixed) throw IoError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.begin() + fixed, buf.begin() + static_cast<std::ptrdiff_t>(fixed + hlen));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint header: ") + e.what());
  }
  Checkpoint ck;
  ck.stage = header.at("stage").get<std::string>();
  ck.config = header.at("config");
  ck.config_hash = header.at("config_hash").get<std::string>();
  ck.frozen = header.at("frozen").get<std::set<std::string>>();
  ck.extra = header.at("extra");
  std::size_t pos = fixed + hlen;
  for (const auto& t : header.at("tensors")) {
    const auto rows = t.at("rows").get<Eigen::Index>(), cols = t.at("cols").get<Eigen::Index>();
    const auto n = static_cast<std::size_t>(rows * cols);
    if (pos + 4 * n > buf.size()) throw IoError("checkpoint payload truncated");
    Mat<float> m(rows, cols);
    for (std::size_t i = 0; i < n; ++i, pos += 4)
      m.data()[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(buf.data() + pos));
    ck.tensors.emplace(t.at("name").get<std::string>(), std::move(m));
  }
  if (pos != buf.size()) throw IoError("checkpoint has trailing bytes");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_bytes(path, encode_checkpoint(ck));
}
inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_bytes(path)); }

}  // namespace avlip
