#pragma once

#include "avlip/audio_encoder.hpp"
#include "avlip/corruption.hpp"
#include "avlip/finetune.hpp"
#include "avlip/pretrain.hpp"
#include "avlip/synth/corpus.hpp"
#include "avlip/video_encoder.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace avlip {

struct EvalConfig {
  int chunk_len = 25;
  std::vector<std::string> families{"DESYNC", "SHUFFLE", "JITTER"};
  std::string renderer_a = "studio";
  std::string renderer_b = "street";
  std::vector<std::string> corruptions{"GAUSS_BLUR", "BLOCKWISE", "COMPRESSION", "PIXELATION"};
  std::vector<int> severities{0, 1, 2, 3, 4, 5};
};

inline void to_json(nlohmann::json& j, const EvalConfig& c) {
  j = {{"chunk_len", c.chunk_len},   {"families", c.families},       {"renderer_a", c.renderer_a},
       {"renderer_b", c.renderer_b}, {"corruptions", c.corruptions}, {"severities", c.severities}};
}
inline void from_json(const nlohmann::json& j, EvalConfig& c) {
  c.chunk_len = j.value("chunk_len", c.chunk_len);
  c.families = j.value("families", c.families);
  c.renderer_a = j.value("renderer_a", c.renderer_a);
  c.renderer_b = j.value("renderer_b", c.renderer_b);
  c.corruptions = j.value("corruptions", c.corruptions);
  c.severities = j.value("severities", c.severities);
}

// Everything one run needs. Component seeds are derived from `seed`, so a
// single number fixes every output.
struct RunConfig {
  std::string profile = "tiny";
  std::uint64_t seed = 0;
  synth::CorpusConfig corpus;           // labeled real/fake videos
  synth::CorpusConfig pretrain_corpus;  // real-only clips for self-supervision
  VideoEncoderConfig video;
  AudioEncoderConfig audio;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  EvalConfig eval;

  // Overwrites every component seed with one derived from `seed`.
  void derive_seeds() {
    corpus.master_seed = derive_seed(seed, {1});
    pretrain_corpus.master_seed = derive_seed(seed, {2});
    pretrain.seed = derive_seed(seed, {3});
    finetune.seed = derive_seed(seed, {4});
  }

  std::vector<CorruptionKind> corruption_kinds() const {
    std::vector<CorruptionKind> k;
    for (const auto& s : eval.corruptions) k.push_back(corruption_from_string(s));
    return k;
  }

  // Re-raises a component's validation error under the key path it was
  // loaded from ("corpus.frame_size" inside pretrain_corpus, for instance).
  template <typename F>
  static void section(const std::string& key, const std::string& prefix, F&& check) {
    try {
      check();
    } catch (const std::exception& e) {
      const std::string msg = e.what();
      if (msg.starts_with(prefix + ".")) throw ConfigError(key + msg.substr(prefix.size()));
      if (msg.starts_with(key)) throw ConfigError(msg);
      throw ConfigError(key + ": " + msg);
    }
  }

  void validate() const {
    if (profile != "tiny" && profile != "paper") throw ConfigError("profile must be tiny or paper");
    section("corpus", "corpus", [&] { corpus.validate(); });
    section("pretrain_corpus", "corpus", [&] { pretrain_corpus.validate(); });
    if (!pretrain_corpus.real_only) throw ConfigError("pretrain_corpus.real_only must be true");
    section("video", "video", [&] { video.validate(); });
    section("audio", "audio", [&] { audio.validate(); });
    section("pretrain", "pretrain", [&] { pretrain.validate(); });
    section("finetune", "finetune", [&] { finetune.validate(); });
    if (pretrain.augment.crop_size != video.input_size)
      throw ConfigError("pretrain.augment.crop_size must equal video.input_size");
    if (finetune.augment.crop_size != video.input_size)
      throw ConfigError("finetune.augment.crop_size must equal video.input_size");
    if (video.input_size > corpus.frame_size || video.input_size > pretrain_corpus.frame_size)
      throw ConfigError("video.input_size exceeds the corpus frame_size");
    const int pre_frames = synth::frame_count_for(pretrain_corpus.duration_s);
    const int ft_frames = synth::frame_count_for(corpus.duration_s);
    if (pretrain.clip_len > pre_frames) throw ConfigError("pretrain.clip_len exceeds the pre-train clip length");
    if (pretrain.clip_len > video.max_seq_len || pretrain.clip_len > audio.max_tokens)
      throw ConfigError("pretrain.clip_len exceeds the encoders' maximum sequence length");
    if (finetune.clip_len > ft_frames) throw ConfigError("finetune.clip_len exceeds the labeled video length");
    if (finetune.clip_len > video.max_seq_len) throw ConfigError("finetune.clip_len exceeds video.max_seq_len");
    if (eval.chunk_len < 5 || eval.chunk_len > ft_frames || eval.chunk_len > video.max_seq_len)
      throw ConfigError("eval.chunk_len must lie in 5..min(video length, video.max_seq_len)");
    for (const auto& f : eval.families)
      if (std::find(corpus.families.begin(), corpus.families.end(), f) == corpus.families.end())
        throw ConfigError("eval.families lists " + f + ", which corpus.families does not generate");
    for (const auto& r : {eval.renderer_a, eval.renderer_b}) synth::builtin_renderer(r, corpus.frame_size);
    for (const auto& s : eval.corruptions) {
      try {
        corruption_from_string(s);
      } catch (const ArgumentError& e) {
        throw ConfigError(std::string("eval.corruptions: ") + e.what());
      }
    }
    for (int s : eval.severities)
      if (s < 0 || s > 5) throw ConfigError("eval.severities entries must lie in 0..5");
  }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"profile", c.profile},   {"seed", c.seed},         {"corpus", c.corpus},
       {"pretrain_corpus", c.pretrain_corpus},             {"video", c.video},
       {"audio", c.audio},       {"pretrain", c.pretrain}, {"finetune", c.finetune},
       {"eval", c.eval}};
}

inline RunConfig profile_defaults(const std::string& profile) {
  RunConfig c;
  c.profile = profile;
  c.pretrain_corpus.real_only = true;
  c.pretrain_corpus.train = {512, 0};
  c.pretrain_corpus.val = {64, 0};
  c.pretrain_corpus.test = {0, 0};
  if (profile == "tiny") {
    // At 1e-2 (and 1e-3 with full augmentation) the small encoders sit at the
    // collapsed ln B solution; 3e-4 escapes it within two epochs.
    c.pretrain.lr0 = 3e-4;
    c.pretrain.steps_per_epoch = 32;
    c.pretrain.max_epochs = 10;
    c.finetune.epochs = 20;
    return c;
  }
  if (profile == "paper") {
    c.corpus.profile = c.pretrain_corpus.profile = "paper";
    c.corpus.frame_size = c.pretrain_corpus.frame_size = 96;
    c.video.frontend_channels = {64, 128, 256, 512};
    c.video.frontend_out_dim = 512;
    c.video.input_size = 88;
    c.video.transformer = {1024, 6, 8, 128, 2048, 0.2};
    c.audio.conv_channels = {512, 512, 512};
    c.audio.transformer = c.video.transformer;
    c.pretrain.augment.crop_size = c.finetune.augment.crop_size = 88;
    return c;
  }
  throw ConfigError("unknown profile: " + profile);
}

namespace detail {

struct TextPos {
  int line = 1;
  int col = 1;
};

inline TextPos position_of(const std::string& text, std::size_t byte) {
  TextPos p;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++p.line;
      p.col = 1;
    } else {
      ++p.col;
    }
  }
  return p;
}

// Position of every object key in a JSON document, by dotted path. Keys inside
// arrays are not addressed.
inline std::map<std::string, TextPos> key_positions(const std::string& text) {
  std::map<std::string, TextPos> out;
  std::vector<std::string> path;  // "" marks an array level
  std::vector<char> open;
  std::string last_string;
  std::size_t last_start = 0;
  bool pending_key = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (ch == '"') {
      last_start = i;
      std::string s;
      for (++i; i < text.size() && text[i] != '"'; ++i) {
        if (text[i] == '\\' && i + 1 < text.size()) ++i;
        s += text[i];
      }
      last_string = s;
      pending_key = true;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) continue;
    if (ch == ':' && pending_key && !open.empty() && open.back() == '{') {
      if (!path.empty()) path.back() = last_string;
      std::string full;
      bool in_array = false;
      for (std::size_t k = 0; k < path.size(); ++k) {
        if (path[k].empty()) in_array = true;
        full += (k ? "." : "") + path[k];
      }
      if (!in_array && !out.count(full)) out[full] = position_of(text, last_start);
    } else if (ch == '{' || ch == '[') {
      open.push_back(ch);
      path.push_back(ch == '{' ? "?" : "");
    } else if (ch == '}' || ch == ']') {
      if (!open.empty()) {
        open.pop_back();
        path.pop_back();
      }
    }
    pending_key = false;
  }
  return out;
}

// First key of `user` (depth first) that the schema does not know.
inline std::optional<std::string> unknown_key(const nlohmann::json& user, const nlohmann::json& schema,
                                              const std::string& prefix = {}) {
  if (!user.is_object() || !schema.is_object()) return std::nullopt;
  for (const auto& [k, v] : user.items()) {
    const std::string full = prefix.empty() ? k : prefix + "." + k;
    if (!schema.contains(k)) return full;
    if (auto deeper = unknown_key(v, schema.at(k), full)) return deeper;
  }
  return std::nullopt;
}

inline std::string anchored(const std::string& source, TextPos p, const std::string& msg) {
  return source + ":" + std::to_string(p.line) + ":" + std::to_string(p.col) + ": error: " + msg;
}

// Anchor for a validation message: the first dotted name in it that resolves
// (longest prefix first) to a key present in the document.
inline TextPos locate_message(const std::string& msg, const std::map<std::string, TextPos>& keys) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : msg + " ") {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '.') {
      cur += ch;
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  for (auto token : tokens) {
    while (!token.empty()) {
      if (auto it = keys.find(token); it != keys.end()) return it->second;
      const auto dot = token.rfind('.');
      if (dot == std::string::npos) break;
      token.resize(dot);
    }
  }
  return {1, 1};
}

}  // namespace detail

// Parses a JSON run configuration layered over the profile defaults. Every
// error names the file, line and column it refers to.
inline RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>",
                                  const std::optional<std::string>& profile_override = std::nullopt) {
  nlohmann::json user;
  try {
    user = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
    std::string what = e.what();
    if (const auto p = what.find("syntax error"); p != std::string::npos) what = what.substr(p);
    throw ConfigError(detail::anchored(source, detail::position_of(text, byte), what));
  }
  const auto keys = detail::key_positions(text);
  if (!user.is_object()) throw ConfigError(detail::anchored(source, {1, 1}, "top level must be an object"));
  const std::string profile = profile_override.value_or(user.value("profile", std::string("tiny")));
  RunConfig c;
  try {
    c = profile_defaults(profile);
  } catch (const ConfigError& e) {
    throw ConfigError(detail::anchored(source, detail::locate_message("profile", keys), e.what()));
  }
  const nlohmann::json schema = c;
  if (auto k = detail::unknown_key(user, schema)) {
    throw ConfigError(detail::anchored(source, keys.count(*k) ? keys.at(*k) : detail::TextPos{},
                                       "unknown key '" + *k + "'"));
  }
  nlohmann::json merged = schema;
  merged.merge_patch(user);
  merged["profile"] = profile;
  try {
    c.profile = merged.at("profile").get<std::string>();
    c.seed = merged.at("seed").get<std::uint64_t>();
    c.corpus = merged.at("corpus").get<synth::CorpusConfig>();
    c.pretrain_corpus = merged.at("pretrain_corpus").get<synth::CorpusConfig>();
    c.video = merged.at("video").get<VideoEncoderConfig>();
    c.audio = merged.at("audio").get<AudioEncoderConfig>();
    c.pretrain = merged.at("pretrain").get<PretrainConfig>();
    c.finetune = merged.at("finetune").get<FinetuneConfig>();
    c.eval = merged.at("eval").get<EvalConfig>();
  } catch (const nlohmann::json::type_error& e) {
    std::string what = e.what();
    if (const auto p = what.find("] "); p != std::string::npos) what = what.substr(p + 2);
    throw ConfigError(detail::anchored(source, {1, 1}, "wrong value type: " + what));
  }
  c.derive_seeds();
  try {
    c.validate();
  } catch (const std::exception& e) {
    // Section-prefixed messages ("corpus.x", "video: ...") anchor on their key.
    std::string msg = e.what();
    throw ConfigError(detail::anchored(source, detail::locate_message(msg, keys), msg));
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path,
                                 const std::optional<std::string>& profile_override = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string(), profile_override);
}

inline std::string run_config_hash(const RunConfig& c) { return hex64(fnv1a64(nlohmann::json(c).dump())); }

}  // namespace avlip
