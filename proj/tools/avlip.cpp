#include "avlip/config.hpp"
#include "avlip/corruption.hpp"
#include "avlip/evalkit.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;
using namespace avlip;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> profile;
  int jobs = 1;
  std::string out_dir = "avlip_out";
  std::string checkpoint;
  bool from_scratch = false;
  // subcommand-specific
  std::string protocol = "test";
  std::string stage = "frontend";
  std::string corruption;
  std::string verify_dir;
};

RunConfig resolve_config(const Options& o) {
  RunConfig c;
  if (o.config.empty()) {
    c = parse_run_config("{}", "<defaults>", o.profile);
  } else {
    c = load_run_config(o.config, o.profile);
  }
  if (o.seed) {
    c.seed = *o.seed;
    c.derive_seeds();
  }
  return c;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
  return os.str();
}

std::string file_hash(const fs::path& p) {
  const auto b = read_bytes(p);
  return hex64(fnv1a64(std::string(b.begin(), b.end())));
}

fs::path data_root(const Options& o) {
  if (const char* env = std::getenv("AVSF_DATA_DIR"); env && *env) return env;
  return fs::path(o.out_dir) / "data";
}

fs::path corpus_dir(const Options& o, const std::string& kind, const synth::CorpusConfig& c) {
  return data_root(o) / (kind + "-" + synth::config_hash(json(c)).substr(0, 12));
}

// An append-only run directory: resolved config, artifacts, and a provenance
// record listing content hashes of everything written.
class Run {
 public:
  Run(const Options& o, const std::string& command, const RunConfig& cfg, std::vector<std::string> argv)
      : cfg_(cfg), hash_(run_config_hash(cfg)) {
    const fs::path base = fs::path(o.out_dir) / "runs";
    std::string name = command + "-" + timestamp() + "-" + hash_.substr(0, 8);
    dir_ = base / name;
    for (int k = 1; fs::exists(dir_); ++k) dir_ = base / (name + "." + std::to_string(k));
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create run directory " + dir_.string() + ": " + ec.message());
    prov_ = {{"command", command}, {"argv", argv}, {"config_hash", hash_}, {"started", timestamp()},
             {"inputs", json::array()}, {"artifacts", json::array()}};
    json c = cfg;
    c["config_hash"] = hash_;
    write_text_raw("config.json", c.dump(2) + "\n");
  }

  const fs::path& dir() const { return dir_; }
  const std::string& hash() const { return hash_; }

  void input(const fs::path& p) { prov_["inputs"].push_back({{"path", p.string()}, {"hash", file_hash(p)}}); }

  fs::path text(const std::string& name, const std::string& body) {
    const auto p = write_text_raw(name, body);
    record(name);
    return p;
  }
  fs::path report(const std::string& name, json j) {
    j["config_hash"] = hash_;
    return text(name, j.dump(2) + "\n");
  }
  fs::path checkpoint(const std::string& name, Checkpoint ck) {
    ck.extra["run_config_hash"] = hash_;
    save_checkpoint(dir_ / name, ck);
    record(name);
    return dir_ / name;
  }

  void finish() {
    prov_["finished"] = timestamp();
    write_text_raw("provenance.json", prov_.dump(2) + "\n");
  }

 private:
  fs::path write_text_raw(const std::string& name, const std::string& body) {
    write_text(dir_ / name, body);
    return dir_ / name;
  }
  void record(const std::string& name) {
    prov_["artifacts"].push_back({{"name", name}, {"hash", file_hash(dir_ / name)}});
  }

  RunConfig cfg_;
  std::string hash_;
  fs::path dir_;
  json prov_;
};

synth::CorpusManifest require_manifest(const fs::path& dir, const std::string& what) {
  const auto path = dir / "manifest.json";
  if (!fs::exists(path))
    throw IoError(what + " corpus not found at " + dir.string() + " (run `avlip corpus` with the same config first)");
  return synth::load_manifest(path);
}

Checkpoint require_checkpoint(const Options& o, const std::string& stage) {
  if (o.checkpoint.empty()) throw ArgumentError("--checkpoint is required (stage '" + stage + "')");
  if (!fs::exists(o.checkpoint)) throw IoError("checkpoint not found: " + o.checkpoint);
  Checkpoint ck = load_checkpoint(o.checkpoint);
  if (ck.stage != stage)
    throw StateError("checkpoint " + o.checkpoint + " has stage '" + ck.stage + "', expected '" + stage + "'");
  if (hex64(fnv1a64(ck.config.dump())) != ck.config_hash)
    throw StateError("checkpoint " + o.checkpoint + " fails its config hash check");
  return ck;
}

void check_video_config(const Checkpoint& ck, const RunConfig& cfg) {
  if (ck.config.at("video") != json(cfg.video))
    throw ConfigError("checkpoint video encoder config differs from the run config");
}

std::shared_ptr<const Checkpoint> pretrained_or_scratch(const Options& o, const RunConfig& cfg) {
  if (o.from_scratch) {
    if (!o.checkpoint.empty()) throw ArgumentError("--from-scratch and --checkpoint are mutually exclusive");
    return nullptr;
  }
  auto ck = std::make_shared<Checkpoint>(require_checkpoint(o, "pretrained"));
  check_video_config(*ck, cfg);
  return ck;
}

int cmd_corpus(const Options& o, Run& run, const RunConfig& cfg) {
  json out;
  for (const auto& [kind, cc] : {std::pair<std::string, synth::CorpusConfig>{"labeled", cfg.corpus},
                                 std::pair<std::string, synth::CorpusConfig>{"pretrain", cfg.pretrain_corpus}}) {
    const auto dir = corpus_dir(o, kind, cc);
    const auto manifest = dir / "manifest.json";
    const auto want = synth::config_hash(json(cc));
    if (fs::exists(manifest) && synth::load_manifest(manifest).corpus_config_hash == want) {
      std::cerr << kind << " corpus up to date: " << manifest.string() << "\n";
    } else {
      std::cerr << "building " << kind << " corpus in " << dir.string() << "\n";
      synth::build_corpus(cc, dir, o.jobs);
    }
    out[kind] = {{"manifest", manifest.string()}, {"corpus_config_hash", want}};
    std::cout << manifest.string() << "\n";
  }
  run.report("corpus.json", out);
  return 0;
}

int cmd_pretrain(const Options& o, Run& run, const RunConfig& cfg) {
  const auto m = require_manifest(corpus_dir(o, "pretrain", cfg.pretrain_corpus), "pre-train");
  run.input(m.root / "manifest.json");
  const auto train = ClipSet::from_manifest(m, "train");
  const auto heldout = ClipSet::from_manifest(m, "val");
  std::ostringstream csv;
  csv << "epoch,mean_loss,lr,retrieval_v2a,retrieval_a2v,wall_time_s\n";
  const auto res = run_pretrain(train, heldout, cfg.pretrain, cfg.video, cfg.audio, [&](const PretrainEpoch& e) {
    std::cerr << "pretrain epoch " << e.epoch << " loss " << e.mean_loss << " lr " << e.lr << " v2a "
              << e.retrieval_v2a << " a2v " << e.retrieval_a2v << "\n";
    csv << e.epoch << ',' << e.mean_loss << ',' << e.lr << ',' << e.retrieval_v2a << ',' << e.retrieval_a2v << ','
        << e.wall_time_s << '\n';
  });
  const auto ck = run.checkpoint("pretrained.ckpt", res.checkpoint);
  run.report("pretrain_log.json", {{"log", res.log}, {"stop_reason", res.stop_reason}});
  run.text("pretrain_log.csv", csv.str());
  std::cout << ck.string() << "\n";
  return 0;
}

int cmd_finetune(const Options& o, Run& run, const RunConfig& cfg) {
  const auto pre = pretrained_or_scratch(o, cfg);
  if (pre) run.input(o.checkpoint);
  const auto m = require_manifest(corpus_dir(o, "labeled", cfg.corpus), "labeled");
  run.input(m.root / "manifest.json");
  const auto train = LabeledSet::from_manifest(m, "train");
  const auto val = LabeledSet::from_manifest(m, "val");
  std::ostringstream csv;
  csv << "epoch,train_loss,val_auc,wall_time_s\n";
  const auto res = run_finetune(pre.get(), train, val, cfg.finetune, cfg.video, [&](const FinetuneEpoch& e) {
    std::cerr << "finetune epoch " << e.epoch << " loss " << e.train_loss << " val_auc " << e.val_auc << "\n";
    csv << e.epoch << ',' << e.train_loss << ',' << e.val_auc << ',' << e.wall_time_s << '\n';
  });
  const auto ck = run.checkpoint("finetuned.ckpt", res.checkpoint);
  run.report("finetune_log.json", {{"log", res.log}, {"steps", res.steps}, {"from_scratch", o.from_scratch}});
  run.text("finetune_log.csv", csv.str());
  std::cout << ck.string() << "\n";
  return 0;
}

MetricsReport test_report(const VideoEncoder<float>& model, const LabeledSet& test, int chunk_len,
                          std::vector<VideoScore>& scores) {
  scores = score_set(model, test, chunk_len);
  MetricsReport rep;
  rep.protocol = "test";
  rep.cells.push_back(score_cell("all", scores, test));
  std::set<std::string> fams;
  for (const auto& e : test.entries)
    if (e.label) fams.insert(e.family);
  for (const auto& f : fams) {
    std::vector<VideoScore> sub;
    LabeledSet part{{}, test.load};
    for (std::size_t i = 0; i < test.size(); ++i)
      if (test.entries[i].label == 0 || test.entries[i].family == f) {
        part.entries.push_back(test.entries[i]);
        sub.push_back(scores[i]);
      }
    rep.cells.push_back(score_cell(f, sub, part));
  }
  rep.finalize();
  return rep;
}

int cmd_eval(const Options& o, Run& run, const RunConfig& cfg) {
  const auto m = require_manifest(corpus_dir(o, "labeled", cfg.corpus), "labeled");
  run.input(m.root / "manifest.json");
  const auto train = LabeledSet::from_manifest(m, "train");
  const auto val = LabeledSet::from_manifest(m, "val");
  const auto test = LabeledSet::from_manifest(m, "test");
  MetricsReport rep;
  if (o.protocol == "test") {
    const auto ck = require_checkpoint(o, "finetuned");
    run.input(o.checkpoint);
    std::vector<VideoScore> scores;
    rep = test_report(load_detector(ck), test, cfg.eval.chunk_len, scores);
    run.text("scores.csv", scores_csv(scores, test));
  } else {
    const auto pre = pretrained_or_scratch(o, cfg);
    if (pre) run.input(o.checkpoint);
    const auto trainer = finetune_trainer(pre, cfg.finetune, cfg.video);
    if (o.protocol == "loo") {
      rep = leave_one_out_eval(train, val, test, cfg.eval.families, trainer, cfg.eval.chunk_len, cfg.seed);
    } else if (o.protocol == "cross") {
      rep = cross_renderer_eval(train, val, test, cfg.eval.renderer_a, cfg.eval.renderer_b, trainer,
                                cfg.eval.chunk_len, cfg.seed);
    } else {
      throw ArgumentError("unknown protocol " + o.protocol + " (expected test, loo or cross)");
    }
  }
  json j = rep;
  j["audit"] = json::array();
  for (const auto& c : rep.cells) j["audit"].push_back({{"cell", c.name}, {"train_ids", c.train_ids}});
  run.report("metrics.json", j);
  for (const auto& c : rep.cells) std::cout << c.name << " auc " << c.auc << " accuracy " << c.accuracy << "\n";
  std::cout << "average auc " << rep.average_auc << "\n";
  return 0;
}

int cmd_robust(const Options& o, Run& run, const RunConfig& cfg) {
  const auto ck = require_checkpoint(o, "finetuned");
  run.input(o.checkpoint);
  const auto m = require_manifest(corpus_dir(o, "labeled", cfg.corpus), "labeled");
  run.input(m.root / "manifest.json");
  const auto test = LabeledSet::from_manifest(m, "test");
  const auto res = robustness_eval(load_detector(ck), test, cfg.corruption_kinds(), cfg.eval.severities,
                                   cfg.eval.chunk_len, cfg.seed);
  json j = res.report;
  j["clean_auc"] = res.clean_auc;
  run.report("robustness.json", j);
  run.text("robustness_curve.csv", res.curve_csv);
  std::cout << res.curve_csv;
  return 0;
}

int cmd_export(const Options& o, Run& run, const RunConfig& cfg) {
  if (o.checkpoint.empty()) throw ArgumentError("--checkpoint is required");
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  run.input(o.checkpoint);
  VideoEncoder<float> model = ck.stage == "finetuned" ? load_detector(ck) : prepare_detector(cfg.video, &ck, cfg.seed);
  const auto m = require_manifest(corpus_dir(o, "labeled", cfg.corpus), "labeled");
  run.input(m.root / "manifest.json");
  const auto test = LabeledSet::from_manifest(m, "test");
  FeatureStage stage;
  if (o.stage == "frontend") stage = FeatureStage::frontend;
  else if (o.stage == "backend") stage = FeatureStage::backend;
  else throw ArgumentError("--stage must be frontend or backend");
  std::function<Clip(const Clip&)> corrupt;
  std::string tag = "clean";
  if (!o.corruption.empty()) {
    const auto at = o.corruption.find('@');
    if (at == std::string::npos) throw ArgumentError("--corruption expects KIND@SEVERITY, e.g. PIXELATION@3");
    const CorruptionSpec spec{corruption_from_string(o.corruption.substr(0, at)), std::stoi(o.corruption.substr(at + 1)),
                              cfg.seed};
    corrupt = [spec](const Clip& c) { return apply_corruption(c, spec); };
    tag = o.corruption;
  }
  const auto p = run.text("features_" + o.stage + ".csv", export_features(model, test, stage, cfg.eval.chunk_len, tag, corrupt));
  std::cout << p.string() << "\n";
  return 0;
}

// Re-hashes a run directory: resolved config, artifact contents, and the
// config hash embedded in each report and checkpoint.
int cmd_verify(const Options& o) {
  const fs::path dir = o.verify_dir;
  int bad = 0;
  auto fail = [&](const std::string& what) {
    std::cout << "FAIL " << what << "\n";
    ++bad;
  };
  const auto cfg_text = read_bytes(dir / "config.json");
  json cj = json::parse(cfg_text.begin(), cfg_text.end());
  const std::string recorded = cj.at("config_hash").get<std::string>();
  cj.erase("config_hash");
  const RunConfig cfg = parse_run_config(cj.dump(), (dir / "config.json").string());
  if (run_config_hash(cfg) != recorded) fail("config.json: hash " + run_config_hash(cfg) + " != recorded " + recorded);
  const auto pb = read_bytes(dir / "provenance.json");
  const json prov = json::parse(pb.begin(), pb.end());
  if (prov.at("config_hash") != recorded) fail("provenance.json: config hash mismatch");
  for (const auto& a : prov.at("artifacts")) {
    const std::string name = a.at("name");
    const fs::path p = dir / name;
    if (!fs::exists(p)) {
      fail(name + ": missing");
      continue;
    }
    const int before = bad;
    if (file_hash(p) != a.at("hash")) fail(name + ": content hash mismatch");
    if (p.extension() == ".json") {
      const auto b = read_bytes(p);
      if (json::parse(b.begin(), b.end()).value("config_hash", std::string()) != recorded) fail(name + ": embedded config hash");
    } else if (p.extension() == ".ckpt") {
      const auto ck = load_checkpoint(p);
      if (ck.extra.value("run_config_hash", std::string()) != recorded) fail(name + ": embedded run config hash");
      if (hex64(fnv1a64(ck.config.dump())) != ck.config_hash) fail(name + ": checkpoint config hash");
    }
    if (bad == before) std::cout << "ok " << name << "\n";
  }
  std::cout << (bad ? "verify failed" : "verify ok") << " (" << recorded << ")\n";
  return bad ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual lip pre-training and deepfake detection on synthetic corpora"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config, "Run configuration (JSON); defaults come from --profile");
  app.add_option("--seed", o.seed, "Run seed; every component seed is derived from it");
  app.add_option("--profile", o.profile, "Configuration profile")->check(CLI::IsMember({"tiny", "paper"}));
  app.add_option("--jobs", o.jobs, "Worker threads for corpus rendering")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", o.out_dir, "Root for run directories (and data, unless AVSF_DATA_DIR is set)");
  app.add_option("--checkpoint", o.checkpoint, "Input checkpoint");
  app.add_flag("--from-scratch", o.from_scratch, "Fine-tune a randomly initialised encoder instead of a checkpoint");

  auto* corpus = app.add_subcommand("corpus", "Render the labeled and pre-train corpora");
  auto* pretrain = app.add_subcommand("pretrain", "Contrastive audio-visual pre-training");
  auto* finetune = app.add_subcommand("finetune", "Fine-tune a detector with the frontend frozen");
  auto* eval = app.add_subcommand("eval", "Score the test split or run a generalisation protocol");
  eval->add_option("--protocol", o.protocol, "test, loo (leave one family out) or cross (cross-renderer)")
      ->check(CLI::IsMember({"test", "loo", "cross"}));
  auto* robust = app.add_subcommand("robust", "AUC under corruptions at every severity");
  auto* exportc = app.add_subcommand("export", "Write per-video frontend or backend features");
  exportc->add_option("--stage", o.stage, "frontend or backend")->check(CLI::IsMember({"frontend", "backend"}));
  exportc->add_option("--corruption", o.corruption, "Optional KIND@SEVERITY applied before extraction");
  auto* verify = app.add_subcommand("verify", "Re-hash a run directory and its artifacts");
  verify->add_option("run_dir", o.verify_dir, "Run directory")->required();

  CLI11_PARSE(app, argc, argv);
  const std::vector<std::string> args(argv, argv + argc);
  try {
    if (verify->parsed()) return cmd_verify(o);
    const RunConfig cfg = resolve_config(o);
    const std::string name = app.get_subcommands().front()->get_name();
    Run run(o, name, cfg, args);
    int rc = 0;
    if (corpus->parsed()) rc = cmd_corpus(o, run, cfg);
    else if (pretrain->parsed()) rc = cmd_pretrain(o, run, cfg);
    else if (finetune->parsed()) rc = cmd_finetune(o, run, cfg);
    else if (eval->parsed()) rc = cmd_eval(o, run, cfg);
    else if (robust->parsed()) rc = cmd_robust(o, run, cfg);
    else if (exportc->parsed()) rc = cmd_export(o, run, cfg);
    run.finish();
    std::cerr << "run directory: " << run.dir().string() << "\n";
    return rc;
  } catch (const ConfigError& e) {
    const std::string msg = e.what();  // anchored parse errors already carry "file:line:col: error:"
    std::cerr << (msg.find(": error: ") != std::string::npos ? msg : "avlip: error: " + msg) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "avlip: error: " << e.what() << "\n";
    return 1;
  }
}
