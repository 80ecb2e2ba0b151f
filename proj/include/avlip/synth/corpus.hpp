#pragma once

#include "avlip/clip_io.hpp"
#include "avlip/synth/render.hpp"

#include <atomic>
#include <filesystem>
#include <map>
#include <set>
#include <thread>

namespace avlip::synth {

struct SplitCounts {
  int real = 0;
  int fake = 0;
};

struct CorpusConfig {
  std::string profile = "tiny";
  int frame_size = 48;
  double duration_s = 2.0;
  std::vector<std::string> renderers{"studio"};
  std::vector<std::string> families{"DESYNC", "SHUFFLE", "JITTER"};
  SplitCounts train{64, 64};
  SplitCounts val{16, 16};
  SplitCounts test{48, 48};
  // Real-only corpora feed self-supervised pre-training; no labels, no balance.
  bool real_only = false;
  std::uint64_t master_seed = 1;
  FakeConfig fakes{};
  EnvelopeConfig envelope{};

  void validate() const {
    if (frame_size < 16) throw ConfigError("corpus.frame_size must be >= 16");
    frame_count_for(duration_s);
    if (renderers.empty()) throw ConfigError("corpus.renderers must not be empty");
    for (const auto& r : renderers) builtin_renderer(r, frame_size);
    for (const auto* s : {&train, &val, &test})
      if (s->real < 0 || s->fake < 0) throw ConfigError("corpus split counts must be non-negative");
    if (real_only) {
      if (train.fake + val.fake + test.fake != 0) throw ArgumentError("real-only corpus cannot request fake clips");
      return;
    }
    if (families.empty()) throw ConfigError("corpus.families must not be empty");
    for (const auto& f : families)
      if (family_from_string(f) == Family::real) throw ConfigError("corpus.families lists fake families only");
    if (train.real != train.fake)
      throw ArgumentError("corpus.train: count not satisfiable under balance constraint, real must equal fake");
  }
};

inline void to_json(nlohmann::json& j, const SplitCounts& s) { j = {{"real", s.real}, {"fake", s.fake}}; }
inline void from_json(const nlohmann::json& j, SplitCounts& s) {
  s.real = j.value("real", s.real);
  s.fake = j.value("fake", s.fake);
}

inline void to_json(nlohmann::json& j, const CorpusConfig& c) {
  j = {{"profile", c.profile},       {"frame_size", c.frame_size}, {"duration_s", c.duration_s},
       {"renderers", c.renderers},   {"families", c.families},     {"train", c.train},
       {"val", c.val},               {"test", c.test},             {"real_only", c.real_only},
       {"master_seed", c.master_seed}, {"fakes", c.fakes},         {"envelope", c.envelope}};
}
inline void from_json(const nlohmann::json& j, CorpusConfig& c) {
  c.profile = j.value("profile", c.profile);
  c.frame_size = j.value("frame_size", c.profile == "paper" ? 96 : c.frame_size);
  c.duration_s = j.value("duration_s", c.duration_s);
  c.renderers = j.value("renderers", c.renderers);
  c.families = j.value("families", c.families);
  if (j.contains("train")) c.train = j.at("train").get<SplitCounts>();
  if (j.contains("val")) c.val = j.at("val").get<SplitCounts>();
  if (j.contains("test")) c.test = j.at("test").get<SplitCounts>();
  c.real_only = j.value("real_only", c.real_only);
  c.master_seed = j.value("master_seed", c.master_seed);
  if (j.contains("fakes")) c.fakes = j.at("fakes").get<FakeConfig>();
  if (j.contains("envelope")) c.envelope = j.at("envelope").get<EnvelopeConfig>();
}

inline std::string config_hash(const nlohmann::json& j) { return hex64(fnv1a64(j.dump())); }

struct ManifestEntry {
  std::string path;  // relative to the manifest directory
  int label = 0;
  std::string family = "REAL";
  std::string split = "train";
  std::string renderer_id;
  std::uint64_t seed = 0;
  std::uint64_t envelope_seed = 0;
  std::optional<std::uint64_t> driving_envelope_seed;

  std::string video_id() const { return std::filesystem::path(path).stem().string() + "@" + split; }
};

inline void to_json(nlohmann::json& j, const ManifestEntry& e) {
  j = {{"path", e.path},   {"label", e.label},   {"family", e.family},         {"split", e.split},
       {"renderer_id", e.renderer_id}, {"seed", e.seed}, {"envelope_seed", e.envelope_seed}};
  if (e.driving_envelope_seed) j["driving_envelope_seed"] = *e.driving_envelope_seed;
}
inline void from_json(const nlohmann::json& j, ManifestEntry& e) {
  e.path = j.at("path").get<std::string>();
  e.label = j.at("label").get<int>();
  e.family = j.at("family").get<std::string>();
  e.split = j.at("split").get<std::string>();
  e.renderer_id = j.at("renderer_id").get<std::string>();
  e.seed = j.at("seed").get<std::uint64_t>();
  e.envelope_seed = j.at("envelope_seed").get<std::uint64_t>();
  if (j.contains("driving_envelope_seed")) e.driving_envelope_seed = j.at("driving_envelope_seed").get<std::uint64_t>();
}

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::string corpus_config_hash;
  nlohmann::json config;
  std::filesystem::path root;  // directory holding manifest.json (not serialised)

  std::vector<ManifestEntry> select(const std::string& split) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
      if (e.split == split) out.push_back(e);
    return out;
  }

  // Every envelope seed used by a split, including DESYNC driving envelopes.
  std::set<std::uint64_t> envelope_seeds(const std::string& split) const {
    std::set<std::uint64_t> s;
    for (const auto& e : entries)
      if (e.split == split) {
        s.insert(e.envelope_seed);
        if (e.driving_envelope_seed) s.insert(*e.driving_envelope_seed);
      }
    return s;
  }

  ClipFile load(const ManifestEntry& e) const { return read_clip(root / e.path); }
};

inline nlohmann::json manifest_json(const CorpusManifest& m) {
  return {{"corpus_config_hash", m.corpus_config_hash}, {"config", m.config}, {"entries", m.entries}};
}

inline void write_manifest(const CorpusManifest& m, const std::filesystem::path& path) {
  const std::string text = manifest_json(m).dump(1) + "\n";
  write_bytes(path, std::vector<unsigned char>(text.begin(), text.end()));
}

inline CorpusManifest load_manifest(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& ex) {
    throw IoError("manifest " + path.string() + ": " + ex.what());
  }
  CorpusManifest m;
  m.corpus_config_hash = j.at("corpus_config_hash").get<std::string>();
  m.config = j.at("config");
  m.entries = j.at("entries").get<std::vector<ManifestEntry>>();
  m.root = path.parent_path();
  return m;
}

// Pure generation of one manifest slot; shared by the builder and tests.
struct ClipJob {
  ManifestEntry entry;
  bool fake = false;
  std::uint64_t pair_seed = 0;
};

inline ClipFile render_job(const CorpusConfig& cfg, const ClipJob& job, LabeledVideo* out = nullptr) {
  const auto renderer = builtin_renderer(job.entry.renderer_id, cfg.frame_size);
  const AVPair pair = render_real_pair(cfg.duration_s, job.pair_seed, renderer, cfg.envelope);
  LabeledVideo v = job.fake ? make_fake(pair, family_from_string(job.entry.family), job.entry.seed, cfg.fakes) : as_labeled(pair);
  ClipFile f{v.frames, v.wave, kFps, kSampleRate};
  if (out) *out = std::move(v);
  return f;
}

inline std::vector<ClipJob> plan_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  std::vector<ClipJob> jobs;
  const std::array<std::pair<const char*, SplitCounts>, 3> splits{{{"train", cfg.train}, {"val", cfg.val}, {"test", cfg.test}}};
  for (std::uint64_t si = 0; si < splits.size(); ++si) {
    const auto& [name, counts] = splits[si];
    int idx = 0;
    for (int kind = 0; kind < 2; ++kind) {
      const int n = kind == 0 ? counts.real : counts.fake;
      for (int i = 0; i < n; ++i, ++idx) {
        ClipJob job;
        job.fake = kind == 1;
        job.pair_seed = derive_seed(cfg.master_seed, {si, static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(i)});
        auto& e = job.entry;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%06d.avsf", idx);
        e.path = std::string("clips/") + name + "/" + buf;
        e.split = name;
        e.renderer_id = cfg.renderers[static_cast<std::size_t>(i) % cfg.renderers.size()];
        e.envelope_seed = job.pair_seed;
        if (job.fake) {
          e.label = 1;
          e.family = cfg.families[static_cast<std::size_t>(i) % cfg.families.size()];
          e.seed = derive_seed(job.pair_seed, {0xFA});
          if (e.family == "DESYNC") e.driving_envelope_seed = desync_envelope_seed(e.seed);
        } else {
          e.seed = job.pair_seed;
        }
        jobs.push_back(std::move(job));
      }
    }
  }
  return jobs;
}

// Renders every clip and writes clips + manifest.json under `dest`.
inline CorpusManifest build_corpus(const CorpusConfig& cfg, const std::filesystem::path& dest, int n_jobs = 1) {
  const auto jobs = plan_corpus(cfg);
  CorpusManifest m;
  m.config = cfg;
  m.corpus_config_hash = config_hash(m.config);
  m.root = dest;
  for (const auto& j : jobs) m.entries.push_back(j.entry);

  const auto tr = m.envelope_seeds("train"), va = m.envelope_seeds("val"), te = m.envelope_seeds("test");
  for (auto s : tr)
    if (va.count(s) || te.count(s)) throw ContractError("envelope seed shared across splits");
  for (auto s : va)
    if (te.count(s)) throw ContractError("envelope seed shared across splits");

  std::error_code ec;
  for (const char* split : {"train", "val", "test"}) {
    std::filesystem::create_directories(dest / "clips" / split, ec);
    if (ec) throw IoError("cannot create " + (dest / "clips" / split).string() + ": " + ec.message());
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        write_clip(dest / jobs[i].entry.path, render_job(cfg, jobs[i]));
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, n_jobs);
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  write_manifest(m, dest / "manifest.json");
  return m;
}

}  // namespace avlip::synth
