#pragma once

#include "avlip/clip_io.hpp"
#include "avlip/synth/corpus.hpp"

#include <functional>
#include <memory>

namespace avlip {

// Random-access clip source; decouples training loops from storage.
struct ClipSet {
  std::size_t count = 0;
  std::function<ClipFile(std::size_t)> get;

  std::size_t size() const { return count; }

  static ClipSet in_memory(std::vector<ClipFile> clips) {
    auto shared = std::make_shared<std::vector<ClipFile>>(std::move(clips));
    return {shared->size(), [shared](std::size_t i) { return (*shared)[i]; }};
  }

  // Clips of one split, read from disk on demand.
  static ClipSet from_manifest(const synth::CorpusManifest& m, const std::string& split, std::size_t limit = 0) {
    auto entries = std::make_shared<std::vector<synth::ManifestEntry>>(m.select(split));
    if (limit > 0 && entries->size() > limit) entries->resize(limit);
    const auto root = m.root;
    return {entries->size(), [entries, root](std::size_t i) { return read_clip(root / (*entries)[i].path); }};
  }
};

// Clips with their manifest metadata (label, family, renderer).
struct LabeledSet {
  std::vector<synth::ManifestEntry> entries;
  std::function<ClipFile(const synth::ManifestEntry&)> load;

  std::size_t size() const { return entries.size(); }
  ClipFile get(std::size_t i) const { return load(entries[i]); }

  std::vector<int> labels() const {
    std::vector<int> y;
    for (const auto& e : entries) y.push_back(e.label);
    return y;
  }
  bool has_both_classes() const {
    bool r = false, f = false;
    for (const auto& e : entries) (e.label ? f : r) = true;
    return r && f;
  }

  LabeledSet filter(const std::function<bool(const synth::ManifestEntry&)>& keep) const {
    LabeledSet out{{}, load};
    for (const auto& e : entries)
      if (keep(e)) out.entries.push_back(e);
    return out;
  }

  static LabeledSet from_manifest(const synth::CorpusManifest& m, const std::string& split) {
    const auto root = m.root;
    return {m.select(split), [root](const synth::ManifestEntry& e) { return read_clip(root / e.path); }};
  }

  // Clips held in memory, keyed by entry path.
  static LabeledSet in_memory(std::vector<synth::ManifestEntry> entries, std::vector<ClipFile> clips) {
    if (entries.size() != clips.size()) throw ArgumentError("labeled set: entries and clips differ in length");
    auto table = std::make_shared<std::map<std::string, ClipFile>>();
    for (std::size_t i = 0; i < clips.size(); ++i) (*table)[entries[i].path] = std::move(clips[i]);
    return {std::move(entries), [table](const synth::ManifestEntry& e) { return table->at(e.path); }};
  }
};

// Renders one split of a corpus plan straight into memory, skipping disk.
inline LabeledSet render_split(const synth::CorpusConfig& cfg, const std::string& split) {
  std::vector<synth::ManifestEntry> entries;
  std::vector<ClipFile> clips;
  for (const auto& job : synth::plan_corpus(cfg))
    if (job.entry.split == split) {
      entries.push_back(job.entry);
      clips.push_back(synth::render_job(cfg, job));
    }
  return LabeledSet::in_memory(std::move(entries), std::move(clips));
}

// Keeps every fake and the first reals (in a seeded order) up to the fake count.
inline LabeledSet balance_reals(const LabeledSet& s, std::uint64_t seed) {
  std::vector<std::size_t> reals, fakes;
  for (std::size_t i = 0; i < s.size(); ++i) (s.entries[i].label ? fakes : reals).push_back(i);
  if (reals.size() <= fakes.size()) return s;
  Rng rng(seed);
  rng.shuffle(reals.begin(), reals.end());
  reals.resize(fakes.size());
  std::vector<std::size_t> keep(reals);
  keep.insert(keep.end(), fakes.begin(), fakes.end());
  std::sort(keep.begin(), keep.end());
  LabeledSet out{{}, s.load};
  for (auto i : keep) out.entries.push_back(s.entries[i]);
  return out;
}

}  // namespace avlip
