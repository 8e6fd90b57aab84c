// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtigen/bpe.hpp"
#include "dtigen/checkpoint.hpp"
#include "dtigen/corpus.hpp"
#include "dtigen/datagen.hpp"
#include "dtigen/features.hpp"
#include "dtigen/fuzzymatch.hpp"
#include "dtigen/generate.hpp"
#include "dtigen/metrics.hpp"
#include "dtigen/semisup.hpp"
#include "dtigen/train.hpp"

#ifndef DTIGEN_VERSION
#define DTIGEN_VERSION "0.0.0-dev"
#endif

namespace dtigen {

namespace fs = std::filesystem;

using Logger = std::function<void(const std::string&)>;

// ---------------------------------------------------------------------------
// Configuration

struct DataConfig {
  bool synthesize = true;
  GenConfig gen;
  std::string raw;        // labeled pairs (JSONL) when not synthesizing
  std::string lexicons;   // lexicon directory when not synthesizing
  std::string unlabeled;  // optional unlabeled pool (JSONL)
  std::size_t top_k = 0;  // 0: keep as many as the splits need
  SplitSizes split{16, 16, 32};
};

struct ProviderConfig {
  std::string kind = "random";  // random | reconstruction
  int dim = 0;                  // 0: model dim
  ReconstructionConfig recon;
};

struct SemisupConfig {
  bool enabled = false;
  Provenance mode = Provenance::kKD;
  int min_occurrence = 10;
  int upsample = 5;
  int finetune_steps = 500;
  double finetune_lr = 3e-4;
  int finetune_warmup = 1;
  bool control = true;  // also fine-tune on labeled data alone for the same steps
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  DataConfig data;
  std::size_t bpe_merges = 4000;
  ModelConfig model;
  ProviderConfig provider;
  TrainConfig train;
  DecodeConfig decode;
  SemisupConfig semisup;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(known.begin(), known.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

template <typename V>
void read(const nlohmann::json& j, const char* key, V& dst) {
  if (auto it = j.find(key); it != j.end()) dst = it->get<V>();
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  auto& d = j["data"];
  d["synthesize"] = c.data.synthesize;
  if (c.data.synthesize) {
    d["generate"] = to_json(c.data.gen);
  } else {
    d["raw"] = c.data.raw;
    d["lexicons"] = c.data.lexicons;
    d["unlabeled"] = c.data.unlabeled;
  }
  d["top_k"] = c.data.top_k;
  d["split"] = {c.data.split.test, c.data.split.valid, c.data.split.train};
  j["bpe_merges"] = c.bpe_merges;
  j["model"] = to_json(c.model);
  auto& p = j["provider"];
  p["kind"] = c.provider.kind;
  p["dim"] = c.provider.dim;
  if (c.provider.kind == "reconstruction") {
    const auto& r = c.provider.recon;
    p["recon"] = {{"dim", r.dim},         {"heads", r.heads}, {"ffn_dim", r.ffn_dim},
                  {"steps", r.steps},     {"mask_prob", r.mask_prob}, {"lr", r.lr},
                  {"warmup_steps", r.warmup_steps}, {"batch_sequences", r.batch_sequences}};
  }
  j["train"] = to_json(c.train);
  j["decode"] = {{"beam", c.decode.beam}, {"max_len", c.decode.max_len}};
  auto& s = j["semisup"];
  s["enabled"] = c.semisup.enabled;
  s["mode"] = to_string(c.semisup.mode);
  s["min_occurrence"] = c.semisup.min_occurrence;
  s["upsample"] = c.semisup.upsample;
  s["finetune_steps"] = c.semisup.finetune_steps;
  s["finetune_lr"] = c.semisup.finetune_lr;
  s["finetune_warmup"] = c.semisup.finetune_warmup;
  s["control"] = c.semisup.control;
  return j;
}

/// Reads a pipeline config over the defaults in `c`. Unknown keys are
/// rejected so that typos do not silently fall back to defaults.
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, PipelineConfig c = {}) {
  using detail::read;
  try {
    detail::reject_unknown(j, {"seed", "data", "bpe_merges", "model", "provider", "train", "decode", "semisup"},
                           "pipeline config");
    read(j, "seed", c.seed);
    // The generator follows the run seed unless it has its own.
    const auto d = j.find("data");
    const bool own_gen_seed = d != j.end() && d->contains("generate") && (*d)["generate"].contains("seed");
    if (!own_gen_seed) c.data.gen.seed = c.seed;
    read(j, "bpe_merges", c.bpe_merges);
    if (auto it = j.find("data"); it != j.end()) {
      const auto& d = *it;
      detail::reject_unknown(d, {"synthesize", "generate", "raw", "lexicons", "unlabeled", "top_k", "split"}, "data");
      read(d, "synthesize", c.data.synthesize);
      if (auto g = d.find("generate"); g != d.end()) c.data.gen = gen_config_from_json(*g, c.data.gen);
      read(d, "raw", c.data.raw);
      read(d, "lexicons", c.data.lexicons);
      read(d, "unlabeled", c.data.unlabeled);
      read(d, "top_k", c.data.top_k);
      if (auto s = d.find("split"); s != d.end()) {
        if (!s->is_array() || s->size() != 3) throw ConfigError("data.split must be [test, valid, train]");
        c.data.split = {(*s)[0].get<std::size_t>(), (*s)[1].get<std::size_t>(), (*s)[2].get<std::size_t>()};
      }
    }
    if (auto it = j.find("model"); it != j.end()) c.model = model_config_from_json(*it, c.model);
    if (auto it = j.find("provider"); it != j.end()) {
      const auto& p = *it;
      detail::reject_unknown(p, {"kind", "dim", "recon"}, "provider");
      read(p, "kind", c.provider.kind);
      read(p, "dim", c.provider.dim);
      if (auto r = p.find("recon"); r != p.end()) {
        auto& rc = c.provider.recon;
        read(*r, "dim", rc.dim);
        read(*r, "heads", rc.heads);
        read(*r, "ffn_dim", rc.ffn_dim);
        read(*r, "steps", rc.steps);
        read(*r, "mask_prob", rc.mask_prob);
        read(*r, "lr", rc.lr);
        read(*r, "warmup_steps", rc.warmup_steps);
        read(*r, "batch_sequences", rc.batch_sequences);
      }
    }
    if (auto it = j.find("train"); it != j.end()) c.train = train_config_from_json(*it, c.train);
    if (auto it = j.find("decode"); it != j.end()) {
      read(*it, "beam", c.decode.beam);
      read(*it, "max_len", c.decode.max_len);
    }
    if (auto it = j.find("semisup"); it != j.end()) {
      const auto& s = *it;
      detail::reject_unknown(s, {"enabled", "mode", "min_occurrence", "upsample", "finetune_steps", "finetune_lr",
                                 "finetune_warmup", "control"},
                             "semisup");
      read(s, "enabled", c.semisup.enabled);
      if (auto m = s.find("mode"); m != s.end()) c.semisup.mode = parse_provenance(m->get<std::string>());
      read(s, "min_occurrence", c.semisup.min_occurrence);
      read(s, "upsample", c.semisup.upsample);
      read(s, "finetune_steps", c.semisup.finetune_steps);
      read(s, "finetune_lr", c.semisup.finetune_lr);
      read(s, "finetune_warmup", c.semisup.finetune_warmup);
      read(s, "control", c.semisup.control);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
  if (c.provider.kind != "random" && c.provider.kind != "reconstruction") {
    throw ConfigError("provider.kind must be 'random' or 'reconstruction'");
  }
  if (c.semisup.mode == Provenance::kRuleFilter) throw ConfigError("semisup.mode must be kd, ds or ds_with_interaction");
  if (c.semisup.finetune_steps < 1) throw ConfigError("semisup.finetune_steps must be >= 1");
  if (c.decode.beam < 1) throw ConfigError("decode.beam must be >= 1");
  if (c.data.synthesize) c.data.gen.validate();
  return c;
}

inline PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return pipeline_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Run plumbing

class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

template <typename Fn>
auto run_stage(const std::string& name, const Logger& log, Fn&& fn) -> decltype(fn()) {
  if (log) log("[" + name + "]");
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

/// Exclusive ownership of an output directory for the lifetime of the
/// object, through a lock file created with O_EXCL.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      throw IoError("output directory " + dir.string() + " is locked by another run (remove " + path_.string() +
                    " if that run is gone)");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return hex64(fnv1a64(ss.str()));
}

/// Provenance record written next to every artifact-producing command.
struct RunManifest {
  std::vector<std::string> argv;
  std::string command;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::vector<std::pair<std::string, std::string>> inputs;   // path, hash
  std::vector<std::pair<std::string, std::string>> outputs;  // path, hash
  std::uint64_t seed = 0;
  std::string started_at = utc_timestamp();
  std::string finished_at;

  void add_input(const fs::path& p) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) inputs.emplace_back(f.string(), file_hash(f));
    } else {
      inputs.emplace_back(p.string(), file_hash(p));
    }
  }
  void add_output(const fs::path& p) { outputs.emplace_back(p.string(), file_hash(p)); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["argv"] = argv;
    j["version"] = DTIGEN_VERSION;
    j["seed"] = seed;
    j["config"] = config;
    j["config_hash"] = hex64(fnv1a64(config.dump()));
    auto pairs = [](const auto& xs) {
      nlohmann::ordered_json a = nlohmann::ordered_json::array();
      for (const auto& [p, h] : xs) a.push_back({{"path", p}, {"fnv1a64", h}});
      return a;
    };
    j["inputs"] = pairs(inputs);
    j["outputs"] = pairs(outputs);
    j["started_at"] = started_at;
    j["finished_at"] = finished_at.empty() ? utc_timestamp() : finished_at;
    return j;
  }

  void write(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_json().dump(2) << '\n';
  }
};

inline void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Stages

struct CorpusSplits {
  std::vector<LabeledExample> train, valid, test;
  std::vector<Document> unlabeled;
  Lexicons lexicons;
  std::size_t n_input = 0;
  std::size_t n_negative = 0;
};

inline void save_splits(const CorpusSplits& s, const fs::path& dir) {
  save_corpus(s.train, dir / "train.jsonl");
  save_corpus(s.valid, dir / "valid.jsonl");
  save_corpus(s.test, dir / "test.jsonl");
  save_corpus(as_unlabeled(s.unlabeled), dir / "unlabeled.jsonl");
  save_lexicons(s.lexicons, dir / "lexicons");
}

/// Reads a corpus directory written by save_splits. Only train.jsonl is
/// required.
inline CorpusSplits load_splits(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("corpus directory not found: " + dir.string());
  CorpusSplits s;
  s.train = load_corpus(dir / "train.jsonl");
  if (fs::exists(dir / "valid.jsonl")) s.valid = load_corpus(dir / "valid.jsonl");
  if (fs::exists(dir / "test.jsonl")) s.test = load_corpus(dir / "test.jsonl");
  if (fs::exists(dir / "unlabeled.jsonl")) s.unlabeled = documents_of(load_corpus(dir / "unlabeled.jsonl"));
  if (fs::is_directory(dir / "lexicons")) s.lexicons = load_lexicons(dir / "lexicons");
  return s;
}

/// Obtains labeled pairs (synthetic or from disk), scores them against the
/// lexicons and cuts the test / valid / train splits.
inline CorpusSplits build_corpus(const DataConfig& cfg, std::uint64_t seed) {
  std::vector<LabeledExample> pairs;
  CorpusSplits out;
  if (cfg.synthesize) {
    auto g = generate_corpus(cfg.gen);
    pairs = std::move(g.labeled);
    out.unlabeled = std::move(g.unlabeled);
    out.lexicons = std::move(g.lexicons);
  } else {
    if (cfg.raw.empty()) throw ConfigError("data.raw is required when data.synthesize is false");
    if (cfg.lexicons.empty()) throw ConfigError("data.lexicons is required when data.synthesize is false");
    if (!fs::is_directory(cfg.lexicons)) throw IoError("lexicon directory not found: " + cfg.lexicons);
    pairs = load_corpus(cfg.raw);
    out.lexicons = load_lexicons(cfg.lexicons);
    if (!cfg.unlabeled.empty()) out.unlabeled = documents_of(load_corpus(cfg.unlabeled));
  }
  const std::size_t top_k = cfg.top_k ? cfg.top_k : cfg.split.total();
  auto f = filter_and_split(pairs, out.lexicons, top_k, cfg.split, seed);
  out.train = std::move(f.train);
  out.valid = std::move(f.valid);
  out.test = std::move(f.test);
  out.n_input = f.n_input;
  out.n_negative = f.n_negative;
  return out;
}

/// Tokenizer texts: training documents, the unlabeled pool and the
/// linearized training targets.
inline BpeModel train_tokenizer(const CorpusSplits& s, std::size_t merges, TripletOrder order) {
  std::vector<std::string> texts;
  for (const auto& ex : s.train) {
    texts.push_back(ex.document.text());
    texts.push_back(serialize(ex.triplets, order));
  }
  for (const auto& d : s.unlabeled) texts.push_back(d.text());
  return train_bpe(texts, merges);
}

template <typename T>
std::unique_ptr<FeatureProvider<T>> build_provider(const ProviderConfig& cfg, const ModelConfig& model,
                                                   const BpeModel& bpe, const CorpusSplits& s, std::uint64_t seed,
                                                   const Logger& log = {}) {
  const std::uint64_t pseed = mix_seed(seed, 0x9e0f);
  if (cfg.kind == "random") {
    const int dim = cfg.dim > 0 ? cfg.dim : model.dim;
    return std::make_unique<RandomFeatureProvider<T>>(bpe.vocab_size(), dim, pseed, model.max_source_len);
  }
  if (cfg.kind == "reconstruction") {
    ReconstructionConfig rc = cfg.recon;
    if (cfg.dim > 0) rc.dim = cfg.dim;
    rc.max_len = model.max_source_len;
    auto p = std::make_unique<ReconstructionFeatureProvider<T>>(bpe.vocab_size(), rc, bpe.unk_id(), pseed);
    std::vector<std::vector<int>> sources;
    for (const auto& d : s.unlabeled) sources.push_back(source_ids(bpe, d, model.max_source_len));
    for (const auto& ex : s.train) sources.push_back(source_ids(bpe, ex.document, model.max_source_len));
    const auto [first, last] = p->pretrain(sources);
    if (log) log("provider pretraining loss " + std::to_string(first) + " -> " + std::to_string(last));
    return p;
  }
  throw ConfigError("unknown feature provider kind '" + cfg.kind + "'");
}

inline nlohmann::ordered_json to_json(const TrainResult& r) {
  nlohmann::ordered_json j;
  j["steps"] = r.steps;
  j["final_loss"] = r.final_loss;
  j["stopped_early"] = r.stopped_early;
  if (r.best_valid_f1) {
    j["best_valid_f1"] = *r.best_valid_f1;
    j["best_step"] = r.best_step;
  }
  return j;
}

inline std::function<void(const TrainEvent&)> event_logger(const Logger& log) {
  if (!log) return {};
  return [log](const TrainEvent& e) {
    std::ostringstream ss;
    ss << "step " << e.step << " loss " << e.loss << " lr " << e.lr;
    if (e.valid_f1) ss << " valid_f1 " << *e.valid_f1;
    log(ss.str());
  };
}

template <typename T>
TrainResult train_model(Transformer<T>& model, const FeatureProvider<T>& provider, const BpeModel& bpe,
                        const std::vector<LabeledExample>& train, const std::vector<LabeledExample>& valid,
                        const TrainConfig& tc, std::uint64_t seed, const Logger& log = {},
                        Adam<T>* adam_out = nullptr, const Adam<T>* resume = nullptr) {
  std::size_t truncated = 0;
  const auto prepared = prepare_examples<T>(train, bpe, &provider, model.config(), &truncated);
  if (truncated && log) log(std::to_string(truncated) + " training targets truncated to max_target_len");
  Trainer<T> trainer(model, tc, seed);
  if (resume) {
    auto& opt = trainer.optimizer();
    if (resume->first_moments().size() != opt.first_moments().size()) {
      throw Error("optimizer state does not match the model");
    }
    opt.first_moments() = resume->first_moments();
    opt.second_moments() = resume->second_moments();
    opt.set_step(resume->step());
  }
  auto r = trainer.fit(prepared, valid, &provider, bpe, event_logger(log));
  if (adam_out) *adam_out = trainer.optimizer();
  return r;
}

template <typename T>
EvalReport evaluate_model(const Transformer<T>& model, const FeatureProvider<T>& provider, const BpeModel& bpe,
                          const std::vector<LabeledExample>& gold, const DecodeConfig& decode,
                          std::vector<LabeledExample>* pred_out = nullptr) {
  auto pred = predict_corpus(model, provider, bpe, documents_of(gold), decode);
  auto report = evaluate_corpus(gold, pred);
  if (pred_out) *pred_out = std::move(pred);
  return report;
}

/// Pseudo labels for the unlabeled pool in the configured mode.
template <typename T>
std::vector<PseudoLabeledExample> make_pseudo_labels(const SemisupConfig& cfg, const CorpusSplits& s,
                                                     const Transformer<T>& model, const FeatureProvider<T>& provider,
                                                     const BpeModel& bpe, const DecodeConfig& decode,
                                                     std::vector<PseudoLabeledExample>* semi_out = nullptr) {
  if (s.unlabeled.empty()) throw Error("semi-supervision needs an unlabeled pool");
  if (cfg.mode == Provenance::kKD) {
    auto semi = rule_filter(s.unlabeled, s.lexicons, cfg.min_occurrence);
    const auto pred = predict_corpus(model, provider, bpe, documents_of(as_labeled(semi)), decode);
    std::vector<TripletSet> generated;
    generated.reserve(pred.size());
    for (const auto& p : pred) generated.push_back(p.triplets);
    auto kd = kd_label(generated, semi);
    if (semi_out) *semi_out = std::move(semi);
    return kd;
  }
  return ds_label(s.train, s.unlabeled, cfg.mode == Provenance::kDSWithInteraction, s.lexicons);
}

struct PipelineResult {
  EvalReport report;
  TrainResult train;
  std::optional<EvalReport> semi_report;
  std::optional<EvalReport> control_report;
  std::size_t n_pseudo = 0;
};

inline nlohmann::ordered_json report_json(const std::string& stage, const PipelineConfig& cfg, const EvalReport& r,
                                          const TrainResult& tr, std::size_t n_train) {
  nlohmann::ordered_json j;
  j["stage"] = stage;
  j["seed"] = cfg.seed;
  j["config_hash"] = hex64(fnv1a64(to_json(cfg).dump()));
  j["n_train"] = n_train;
  j["train"] = to_json(tr);
  j["metrics"] = to_json(r);
  return j;
}

/// build corpus -> tokenizer -> provider -> train -> generate -> evaluate,
/// then optionally pseudo-label the unlabeled pool and fine-tune. Every
/// intermediate artifact is written under `out_dir`; a failing stage throws
/// StageError and leaves earlier artifacts in place.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, const fs::path& out_dir, const Logger& log = {}) {
  using T = float;
  DirLock lock(out_dir);
  PipelineResult result;
  const fs::path corpus_dir = out_dir / "corpus";

  const auto splits = run_stage("build-corpus", log, [&] {
    auto s = build_corpus(cfg.data, cfg.seed);
    save_splits(s, corpus_dir);
    if (log) {
      log("corpus: " + std::to_string(s.train.size()) + " train, " + std::to_string(s.valid.size()) + " valid, " +
          std::to_string(s.test.size()) + " test, " + std::to_string(s.unlabeled.size()) + " unlabeled");
    }
    return s;
  });

  const auto bpe = run_stage("train-bpe", log, [&] {
    auto b = train_tokenizer(splits, cfg.bpe_merges, cfg.model.order);
    save_bpe(b, out_dir / "bpe.json");
    return b;
  });

  ModelConfig mc = cfg.model;
  mc.vocab_size = bpe.vocab_size();
  const auto provider = run_stage("provider", log, [&] {
    auto p = build_provider<T>(cfg.provider, mc, bpe, splits, cfg.seed, log);
    mc.feature_dim = p->dim();
    mc.validate();
    return p;
  });

  Transformer<T> model(mc, mix_seed(cfg.seed, 0x30de1));
  run_stage("train", log, [&] {
    Adam<T> adam(model.params(), cfg.train.adam);
    result.train = train_model(model, *provider, bpe, splits.train, splits.valid, cfg.train, cfg.seed, log, &adam);
    save_checkpoint(out_dir / "model.ckpt", model, provider.get(), bpe, &adam, {{"stage", "train"}});
  });

  run_stage("evaluate", log, [&] {
    std::vector<LabeledExample> pred;
    result.report = evaluate_model(model, *provider, bpe, splits.test, cfg.decode, &pred);
    save_corpus(pred, out_dir / "pred_test.jsonl");
    write_json(out_dir / "report.json", report_json("baseline", cfg, result.report, result.train, splits.train.size()));
    if (log) log("test triplet F1 " + std::to_string(result.report.triplet.f1));
  });

  if (!cfg.semisup.enabled) return result;

  const fs::path semi_dir = out_dir / "semisup";
  const auto pseudo = run_stage("pseudo-label", log, [&] {
    std::vector<PseudoLabeledExample> semi;
    auto p = make_pseudo_labels(cfg.semisup, splits, model, *provider, bpe, cfg.decode, &semi);
    if (!semi.empty()) save_pseudo(semi, semi_dir / "dsemi.jsonl");
    save_pseudo(p, semi_dir / "pseudo.jsonl");
    if (log) log(std::to_string(p.size()) + " pseudo-labeled documents (" + to_string(cfg.semisup.mode) + ")");
    return p;
  });
  result.n_pseudo = pseudo.size();

  TrainConfig ft = cfg.train;
  ft.max_steps = cfg.semisup.finetune_steps;
  ft.adam.lr = cfg.semisup.finetune_lr;
  ft.adam.warmup_steps = cfg.semisup.finetune_warmup;

  auto finetune = [&](const std::string& name, const std::vector<LabeledExample>& data, std::uint64_t salt) {
    Transformer<T> m = model;
    TrainResult tr;
    EvalReport rep;
    run_stage(name, log, [&] {
      Adam<T> adam(m.params(), ft.adam);
      tr = train_model(m, *provider, bpe, data, splits.valid, ft, mix_seed(cfg.seed, salt), log, &adam);
      save_checkpoint(semi_dir / (name + ".ckpt"), m, provider.get(), bpe, &adam, {{"stage", name}});
      std::vector<LabeledExample> pred;
      rep = evaluate_model(m, *provider, bpe, splits.test, cfg.decode, &pred);
      save_corpus(pred, semi_dir / ("pred_test_" + name + ".jsonl"));
      if (log) log(name + " test triplet F1 " + std::to_string(rep.triplet.f1));
    });
    return std::make_pair(rep, tr);
  };

  const auto merged = merge_and_upsample(splits.train, pseudo, cfg.semisup.upsample, mix_seed(cfg.seed, 0x3e5));
  save_corpus(merged, semi_dir / "merged.jsonl");
  auto [semi_rep, semi_tr] = finetune("finetune", merged, 0xf1);
  result.semi_report = semi_rep;
  write_json(out_dir / "report_semi.json", report_json("semisup", cfg, semi_rep, semi_tr, merged.size()));

  if (cfg.semisup.control) {
    auto [ctl_rep, ctl_tr] = finetune("control", splits.train, 0xc7);
    result.control_report = ctl_rep;
    write_json(out_dir / "report_control.json", report_json("control", cfg, ctl_rep, ctl_tr, splits.train.size()));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Order ablation

struct AblationRow {
  TripletOrder order;
  Prf triplet;
  long steps = 0;
};

inline nlohmann::ordered_json to_json(const std::vector<AblationRow>& rows) {
  nlohmann::ordered_json a = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    a.push_back({{"order", to_string(r.order)},
                 {"precision", r.triplet.p},
                 {"recall", r.triplet.r},
                 {"f1", r.triplet.f1},
                 {"steps", r.steps}});
  }
  return a;
}

inline std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream ss;
  ss << "order\tP\tR\tF1\n";
  ss.setf(std::ios::fixed);
  ss.precision(4);
  for (const auto& r : rows) {
    ss << to_string(r.order) << '\t' << r.triplet.p << '\t' << r.triplet.r << '\t' << r.triplet.f1 << '\n';
  }
  return ss.str();
}

/// Trains one model per triplet order on the same corpus, tokenizer,
/// provider and seed, and evaluates each on the test split. The table is
/// rewritten after every row so a failure keeps the finished rows.
inline std::vector<AblationRow> ablate_orders(const PipelineConfig& cfg, const fs::path& out_dir,
                                              const Logger& log = {}) {
  using T = float;
  DirLock lock(out_dir);
  const auto splits = run_stage("build-corpus", log, [&] {
    auto s = build_corpus(cfg.data, cfg.seed);
    save_splits(s, out_dir / "corpus");
    return s;
  });
  // Tags are atomic tokens, so the merges do not depend on the order.
  const auto bpe = run_stage("train-bpe", log, [&] {
    auto b = train_tokenizer(splits, cfg.bpe_merges, TripletOrder::kDIT);
    save_bpe(b, out_dir / "bpe.json");
    return b;
  });
  ModelConfig base = cfg.model;
  base.vocab_size = bpe.vocab_size();
  const auto provider = run_stage("provider", log, [&] {
    auto p = build_provider<T>(cfg.provider, base, bpe, splits, cfg.seed, log);
    base.feature_dim = p->dim();
    base.validate();
    return p;
  });
  std::vector<AblationRow> rows;
  for (const auto order : kAllOrders) {
    const std::string name = "train-" + to_string(order);
    run_stage(name, log, [&] {
      ModelConfig mc = base;
      mc.order = order;
      Transformer<T> model(mc, mix_seed(cfg.seed, 0x30de1));
      const auto tr = train_model(model, *provider, bpe, splits.train, splits.valid, cfg.train, cfg.seed, log);
      const auto rep = evaluate_model(model, *provider, bpe, splits.test, cfg.decode);
      rows.push_back({order, rep.triplet, tr.steps});
      write_json(out_dir / "ablation.json", to_json(rows));
      std::ofstream(out_dir / "ablation.tsv", std::ios::trunc) << ablation_table(rows);
      if (log) log(to_string(order) + " triplet F1 " + std::to_string(rep.triplet.f1));
    });
  }
  return rows;
}

}  // namespace dtigen
