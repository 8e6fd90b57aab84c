// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

// dtigen command-line driver.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtigen/bpe.hpp"
#include "dtigen/checkpoint.hpp"
#include "dtigen/corpus.hpp"
#include "dtigen/datagen.hpp"
#include "dtigen/generate.hpp"
#include "dtigen/metrics.hpp"
#include "dtigen/pipeline.hpp"
#include "dtigen/semisup.hpp"
#include "dtigen/stats.hpp"

namespace fs = std::filesystem;
using dtigen::RunManifest;
using json = nlohmann::json;

namespace {

using T = float;

std::vector<std::string> g_argv;
bool g_quiet = false;

void log_line(const std::string& s) {
  if (!g_quiet) std::cerr << "dtigen: " << s << '\n';
}

RunManifest manifest(const std::string& command, std::uint64_t seed) {
  RunManifest m;
  m.argv = g_argv;
  m.command = command;
  m.seed = seed;
  return m;
}

// Artifacts get "<file>.manifest.json"; directories get "manifest.json".
void write_manifest(RunManifest& m, const fs::path& out) {
  if (fs::is_directory(out)) {
    m.write(out / "manifest.json");
  } else {
    m.add_output(out);
    m.write(out.string() + ".manifest.json");
  }
}

// "a.b.c=value" -> sets j["a"]["b"]["c"]; value is JSON when it parses,
// a string otherwise.
void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw dtigen::ConfigError("--set expects key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw dtigen::ConfigError("bad --set path: " + path);
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

struct ConfigArgs {
  std::string path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("--config", path, "Pipeline-style JSON config");
    app->add_option("--set", sets, "Override a config field, e.g. --set train.max_steps=500")->take_all();
    app->add_option("--seed", seed, "Random seed (overrides the config)");
  }

  json raw() const {
    json j = json::object();
    if (!path.empty()) {
      std::ifstream in(path);
      if (!in) throw dtigen::IoError("cannot open config " + path);
      try {
        j = json::parse(in);
      } catch (const json::exception& e) {
        throw dtigen::ConfigError(path + ": " + e.what());
      }
    }
    for (const auto& s : sets) apply_override(j, s);
    if (seed) j["seed"] = *seed;
    return j;
  }

  dtigen::PipelineConfig load() const { return dtigen::pipeline_config_from_json(raw()); }
};

dtigen::SplitSizes parse_split(const std::string& s) {
  std::vector<std::size_t> v;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const std::string part = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      std::size_t used = 0;
      const long long n = std::stoll(part, &used);
      if (used != part.size() || n < 0) throw std::invalid_argument(part);
      v.push_back(static_cast<std::size_t>(n));
    } catch (const std::exception&) {
      throw dtigen::ConfigError("--split expects test,valid,train counts, got '" + s + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (v.size() != 3) throw dtigen::ConfigError("--split expects three counts: test,valid,train");
  return {v[0], v[1], v[2]};
}

std::vector<dtigen::Document> load_documents(const fs::path& p) { return dtigen::documents_of(dtigen::load_corpus(p)); }

// ---------------------------------------------------------------------------

void cmd_datagen(const std::string& config, const std::vector<std::string>& sets, std::optional<std::uint64_t> seed,
                 const std::string& out) {
  json j = json::object();
  if (!config.empty()) {
    std::ifstream in(config);
    if (!in) throw dtigen::IoError("cannot open config " + config);
    j = json::parse(in);
  }
  for (const auto& s : sets) apply_override(j, s);
  if (seed) j["seed"] = *seed;
  auto gc = dtigen::gen_config_from_json(j);
  gc.validate();
  const auto g = dtigen::generate_corpus(gc);
  dtigen::save_generated(g, out);
  dtigen::save_corpus(
      [&] {
        std::vector<dtigen::LabeledExample> hidden;
        for (std::size_t i = 0; i < g.unlabeled.size(); ++i) hidden.push_back({g.unlabeled[i], g.unlabeled_gold[i]});
        return hidden;
      }(),
      fs::path(out) / "unlabeled_gold.jsonl");
  auto m = manifest("datagen", gc.seed);
  m.config = dtigen::to_json(gc);
  for (const char* f : {"labeled.jsonl", "unlabeled.jsonl", "unlabeled_gold.jsonl"}) m.add_output(fs::path(out) / f);
  write_manifest(m, out);
  log_line("wrote " + std::to_string(g.labeled.size()) + " labeled and " + std::to_string(g.unlabeled.size()) +
           " unlabeled documents to " + out);
}

void cmd_build_corpus(const std::string& in, const std::string& lexicons, const std::string& unlabeled,
                      std::size_t top_k, const std::string& split, std::uint64_t seed, const std::string& out) {
  dtigen::DataConfig dc;
  dc.synthesize = false;
  dc.raw = in;
  dc.lexicons = lexicons;
  dc.unlabeled = unlabeled;
  dc.top_k = top_k;
  dc.split = parse_split(split);
  const auto s = dtigen::build_corpus(dc, seed);
  dtigen::save_splits(s, out);
  auto m = manifest("build-corpus", seed);
  m.config = {{"top_k", top_k}, {"split", split}};
  m.add_input(in);
  m.add_input(lexicons);
  if (!unlabeled.empty()) m.add_input(unlabeled);
  for (const char* f : {"train.jsonl", "valid.jsonl", "test.jsonl"}) m.add_output(fs::path(out) / f);
  write_manifest(m, out);
  log_line(std::to_string(s.n_input) + " pairs, " + std::to_string(s.n_negative) + " dropped with negative score; " +
           std::to_string(s.test.size()) + "/" + std::to_string(s.valid.size()) + "/" + std::to_string(s.train.size()) +
           " test/valid/train");
}

void cmd_train_bpe(const std::string& corpus, const std::string& unlabeled, std::size_t merges,
                   const std::string& order, std::uint64_t seed, const std::string& out) {
  dtigen::CorpusSplits s;
  s.train = dtigen::load_corpus(corpus);
  if (!unlabeled.empty()) s.unlabeled = load_documents(unlabeled);
  const auto bpe = dtigen::train_tokenizer(s, merges, dtigen::parse_order(order));
  dtigen::save_bpe(bpe, out);
  auto m = manifest("train-bpe", seed);
  m.config = {{"merges", merges}, {"order", order}};
  m.add_input(corpus);
  if (!unlabeled.empty()) m.add_input(unlabeled);
  write_manifest(m, out);
  log_line("vocabulary of " + std::to_string(bpe.vocab_size()) + " tokens written to " + out);
}

void cmd_train(const std::string& corpus_dir, const ConfigArgs& cargs, const std::string& bpe_path,
               const std::string& init, bool resume, const std::string& out) {
  const json raw = cargs.raw();
  const auto cfg = dtigen::pipeline_config_from_json(raw);
  const auto splits = dtigen::load_splits(corpus_dir);
  std::optional<dtigen::Checkpoint<T>> ck;
  dtigen::BpeModel bpe;
  std::unique_ptr<dtigen::FeatureProvider<T>> provider;
  std::unique_ptr<dtigen::Transformer<T>> model;
  if (!init.empty()) {
    ck = dtigen::load_checkpoint<T>(init);
    bpe = ck->bpe;
    provider = std::move(ck->provider);
    model = std::move(ck->model);
    if (!provider && model->config().fusion) throw dtigen::Error("checkpoint has no feature provider");
  } else {
    bpe = bpe_path.empty() ? dtigen::train_tokenizer(splits, cfg.bpe_merges, cfg.model.order)
                           : dtigen::load_bpe(bpe_path);
    dtigen::ModelConfig mc = cfg.model;
    mc.vocab_size = bpe.vocab_size();
    provider = dtigen::build_provider<T>(cfg.provider, mc, bpe, splits, cfg.seed, log_line);
    mc.feature_dim = provider->dim();
    mc.validate();
    model = std::make_unique<dtigen::Transformer<T>>(mc, dtigen::mix_seed(cfg.seed, 0x30de1));
  }
  std::optional<dtigen::Adam<T>> prev;
  if (resume) {
    if (!ck || ck->adam_m.empty()) throw dtigen::Error("--resume needs --init with a checkpoint holding optimizer state");
    prev.emplace(model->params(), cfg.train.adam);
    dtigen::restore_optimizer(*prev, *ck);
  }
  dtigen::Adam<T> adam(model->params(), cfg.train.adam);
  const auto r = dtigen::train_model(*model, *provider, bpe, splits.train, splits.valid, cfg.train, cfg.seed, log_line,
                                     &adam, prev ? &*prev : nullptr);
  dtigen::save_checkpoint(out, *model, provider.get(), bpe, &adam, {{"train", dtigen::to_json(r)}});
  auto m = manifest("train", cfg.seed);
  m.config = dtigen::to_json(cfg);
  m.add_input(fs::path(corpus_dir) / "train.jsonl");
  if (!bpe_path.empty()) m.add_input(bpe_path);
  if (!init.empty()) m.add_input(init);
  write_manifest(m, out);
  log_line("trained " + std::to_string(r.steps) + " steps, final loss " + std::to_string(r.final_loss));
}

void cmd_generate(const std::string& ckpt, const std::string& in, int beam, const std::string& order,
                  std::uint64_t seed, const std::string& out) {
  auto ck = dtigen::load_checkpoint<T>(ckpt);
  if (!order.empty() && dtigen::parse_order(order) != ck.config.order) {
    throw dtigen::ConfigError("model was trained with order " + dtigen::to_string(ck.config.order) +
                              ", not " + order);
  }
  if (ck.config.fusion && !ck.provider) throw dtigen::Error("checkpoint has no feature provider");
  const auto docs = load_documents(in);
  dtigen::DecodeConfig dc;
  dc.beam = beam;
  const auto pred = dtigen::predict_corpus(*ck.model, *ck.provider, ck.bpe, docs, dc);
  dtigen::save_corpus(pred, out);
  auto m = manifest("generate", seed);
  m.config = {{"beam", beam}, {"order", dtigen::to_string(ck.config.order)}};
  m.add_input(ckpt);
  m.add_input(in);
  write_manifest(m, out);
  log_line("generated triplets for " + std::to_string(pred.size()) + " documents");
}

void cmd_evaluate(const std::string& gold_path, const std::vector<std::string>& preds, bool per_document,
                  std::uint64_t seed, const std::string& out) {
  const auto gold = dtigen::load_corpus(gold_path);
  std::vector<dtigen::EvalReport> reports;
  for (const auto& p : preds) reports.push_back(dtigen::evaluate_corpus(gold, dtigen::load_corpus(p)));
  nlohmann::ordered_json j;
  if (reports.size() == 1) {
    j = dtigen::to_json(reports[0], per_document);
  } else {
    j["runs"] = nlohmann::ordered_json::array();
    for (const auto& r : reports) j["runs"].push_back(dtigen::to_json(r, per_document));
    j["aggregate"] = dtigen::to_json(dtigen::aggregate_runs(reports));
  }
  const std::string text = j.dump(2);
  if (out.empty()) {
    std::cout << text << '\n';
    return;
  }
  dtigen::write_json(out, j);
  auto m = manifest("evaluate", seed);
  m.add_input(gold_path);
  for (const auto& p : preds) m.add_input(p);
  write_manifest(m, out);
  const auto& r = reports.front();
  log_line("triplet F1 " + std::to_string(r.triplet.f1) + ", ontology F1 " + std::to_string(r.ontology.f1));
}

void cmd_rule_filter(const std::string& unlabeled, const std::string& lexicons, int min_occ, std::uint64_t seed,
                     const std::string& out) {
  const auto docs = load_documents(unlabeled);
  const auto lex = dtigen::load_lexicons(lexicons);
  const auto semi = dtigen::rule_filter(docs, lex, min_occ);
  dtigen::save_pseudo(semi, out);
  auto m = manifest("semisup rule-filter", seed);
  m.config = {{"min_occurrence", min_occ}};
  m.add_input(unlabeled);
  m.add_input(lexicons);
  write_manifest(m, out);
  log_line(std::to_string(semi.size()) + " of " + std::to_string(docs.size()) + " documents kept");
}

void cmd_kd_label(const std::string& ckpt, const std::string& in, int beam, std::uint64_t seed,
                  const std::string& out) {
  auto ck = dtigen::load_checkpoint<T>(ckpt);
  if (ck.config.fusion && !ck.provider) throw dtigen::Error("checkpoint has no feature provider");
  const auto semi = dtigen::load_pseudo(in);
  dtigen::DecodeConfig dc;
  dc.beam = beam;
  const auto pred = dtigen::predict_corpus(*ck.model, *ck.provider, ck.bpe, dtigen::documents_of(dtigen::as_labeled(semi)), dc);
  std::vector<dtigen::TripletSet> generated;
  for (const auto& p : pred) generated.push_back(p.triplets);
  const auto kd = dtigen::kd_label(generated, semi);
  dtigen::save_pseudo(kd, out);
  auto m = manifest("semisup kd-label", seed);
  m.config = {{"beam", beam}};
  m.add_input(ckpt);
  m.add_input(in);
  write_manifest(m, out);
  log_line(std::to_string(kd.size()) + " of " + std::to_string(semi.size()) + " documents kept");
}

void cmd_ds_label(const std::string& labeled, const std::string& unlabeled, const std::string& lexicons,
                  bool with_interaction, std::uint64_t seed, const std::string& out) {
  const auto lab = dtigen::load_corpus(labeled);
  const auto docs = load_documents(unlabeled);
  const auto lex = lexicons.empty() ? dtigen::Lexicons{} : dtigen::load_lexicons(lexicons);
  const auto ds = dtigen::ds_label(lab, docs, with_interaction, lex);
  dtigen::save_pseudo(ds, out);
  auto m = manifest("semisup ds-label", seed);
  m.config = {{"with_interaction", with_interaction}};
  m.add_input(labeled);
  m.add_input(unlabeled);
  if (!lexicons.empty()) m.add_input(lexicons);
  write_manifest(m, out);
  log_line(std::to_string(ds.size()) + " of " + std::to_string(docs.size()) + " documents labeled");
}

void cmd_merge(const std::string& labeled, const std::vector<std::string>& pseudo, int upsample, std::uint64_t seed,
               const std::string& out) {
  const auto lab = dtigen::load_corpus(labeled);
  std::vector<dtigen::PseudoLabeledExample> ps;
  for (const auto& p : pseudo) {
    auto xs = dtigen::load_pseudo(p);
    ps.insert(ps.end(), xs.begin(), xs.end());
  }
  const auto merged = dtigen::merge_and_upsample(lab, ps, upsample, seed);
  dtigen::save_corpus(merged, out);
  auto m = manifest("semisup merge", seed);
  m.config = {{"upsample", upsample}};
  m.add_input(labeled);
  for (const auto& p : pseudo) m.add_input(p);
  write_manifest(m, out);
  log_line(std::to_string(merged.size()) + " training examples");
}

void cmd_stats(const std::string& corpus, const std::string& lexicons, std::uint64_t seed, const std::string& out) {
  const auto xs = dtigen::load_corpus(corpus);
  const auto lex = lexicons.empty() ? dtigen::Lexicons{} : dtigen::load_lexicons(lexicons);
  const auto s = dtigen::corpus_stats(xs, lex);
  const auto j = dtigen::to_json(s);
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  dtigen::write_json(out, j);
  auto m = manifest("stats", seed);
  m.add_input(corpus);
  if (!lexicons.empty()) m.add_input(lexicons);
  write_manifest(m, out);
}

void cmd_ablate(const ConfigArgs& cargs, const std::string& out) {
  const auto cfg = cargs.load();
  const auto rows = dtigen::ablate_orders(cfg, out, log_line);
  std::cout << dtigen::ablation_table(rows);
  auto m = manifest("ablate-orders", cfg.seed);
  m.config = dtigen::to_json(cfg);
  if (!cfg.data.synthesize) m.add_input(cfg.data.raw);
  m.add_output(fs::path(out) / "ablation.json");
  write_manifest(m, out);
}

void cmd_pipeline(const ConfigArgs& cargs, bool semisup, const std::string& out) {
  auto cfg = cargs.load();
  if (semisup) cfg.semisup.enabled = true;
  auto m = manifest("pipeline", cfg.seed);
  m.config = dtigen::to_json(cfg);
  if (!cfg.data.synthesize) {
    m.add_input(cfg.data.raw);
    m.add_input(cfg.data.lexicons);
    if (!cfg.data.unlabeled.empty()) m.add_input(cfg.data.unlabeled);
  }
  const auto r = dtigen::run_pipeline(cfg, out, log_line);
  m.add_output(fs::path(out) / "report.json");
  if (r.semi_report) m.add_output(fs::path(out) / "report_semi.json");
  if (r.control_report) m.add_output(fs::path(out) / "report_control.json");
  write_manifest(m, out);
  std::cout << "triplet F1 " << r.report.triplet.f1;
  if (r.semi_report) std::cout << "  semisup " << r.semi_report->triplet.f1;
  if (r.control_report) std::cout << "  control " << r.control_report->triplet.f1;
  std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  g_argv.assign(argv, argv + argc);
  CLI::App app{"dtigen: drug-target interaction triplet generation toolkit"};
  app.set_version_flag("--version", std::string(DTIGEN_VERSION));
  app.add_flag("-q,--quiet", g_quiet, "Suppress progress messages");
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::string out;

  // datagen
  auto* datagen = app.add_subcommand("datagen", "Generate a synthetic corpus with lexicons");
  std::string dg_config;
  std::vector<std::string> dg_sets;
  std::optional<std::uint64_t> dg_seed;
  datagen->add_option("--config", dg_config, "Generator config JSON");
  datagen->add_option("--set", dg_sets, "Override a generator field, e.g. --set n_docs=128")->take_all();
  datagen->add_option("--seed", dg_seed, "Random seed");
  datagen->add_option("--out", out, "Output directory")->required();

  // build-corpus
  auto* build = app.add_subcommand("build-corpus", "Score, filter and split labeled pairs");
  std::string bc_in, bc_lex, bc_unlabeled, bc_split = "0,0,0";
  std::size_t bc_top_k = 0;
  build->add_option("--in", bc_in, "Raw labeled pairs (JSONL)")->required()->check(CLI::ExistingFile);
  build->add_option("--lexicons", bc_lex, "Lexicon directory")->required()->check(CLI::ExistingDirectory);
  build->add_option("--unlabeled", bc_unlabeled, "Unlabeled pool copied into the corpus")->check(CLI::ExistingFile);
  build->add_option("--top-k", bc_top_k, "Keep the K best-scoring pairs (0: as many as the splits need)");
  build->add_option("--split", bc_split, "Split sizes test,valid,train")->required();
  build->add_option("--seed", seed, "Random seed");
  build->add_option("--out", out, "Output directory")->required();

  // train-bpe
  auto* tbpe = app.add_subcommand("train-bpe", "Train the subword tokenizer");
  std::string tb_corpus, tb_unlabeled, tb_order = "DIT";
  std::size_t tb_merges = 4000;
  tbpe->add_option("--corpus", tb_corpus, "Training corpus (JSONL)")->required()->check(CLI::ExistingFile);
  tbpe->add_option("--unlabeled", tb_unlabeled, "Extra unlabeled documents")->check(CLI::ExistingFile);
  tbpe->add_option("--merges", tb_merges, "Number of merges");
  tbpe->add_option("--order", tb_order, "Triplet order of the linearized targets");
  tbpe->add_option("--seed", seed, "Random seed");
  tbpe->add_option("--out", out, "Tokenizer JSON")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a model on a corpus directory");
  std::string tr_corpus, tr_bpe, tr_init;
  bool tr_resume = false;
  ConfigArgs tr_cfg;
  train->add_option("--corpus", tr_corpus, "Corpus directory with train.jsonl")->required();
  tr_cfg.add(train);
  train->add_option("--bpe", tr_bpe, "Tokenizer JSON (trained from the corpus when omitted)");
  train->add_option("--init", tr_init, "Start from this checkpoint")->check(CLI::ExistingFile);
  train->add_flag("--resume", tr_resume, "Also restore the optimizer state of --init");
  train->add_option("--out", out, "Checkpoint path")->required();

  // generate
  auto* generate = app.add_subcommand("generate", "Generate triplets for documents");
  std::string ge_ckpt, ge_in, ge_order;
  int beam = 1;
  generate->add_option("--ckpt", ge_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  generate->add_option("--in", ge_in, "Documents (JSONL)")->required()->check(CLI::ExistingFile);
  generate->add_option("--beam", beam, "Beam width (1: greedy)");
  generate->add_option("--order", ge_order, "Expected triplet order of the model");
  generate->add_option("--seed", seed, "Random seed");
  generate->add_option("--out", out, "Predictions (JSONL)")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against gold triplets");
  std::string ev_gold;
  std::vector<std::string> ev_pred;
  bool ev_per_doc = false;
  evaluate->add_option("--gold", ev_gold, "Gold corpus (JSONL)")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--pred", ev_pred, "Predictions; several runs are aggregated")->required()->check(CLI::ExistingFile);
  evaluate->add_flag("--per-document", ev_per_doc, "Include per-document scores");
  evaluate->add_option("--seed", seed, "Random seed");
  evaluate->add_option("--out", out, "Report JSON (stdout when omitted)");

  // semisup
  auto* semisup = app.add_subcommand("semisup", "Pseudo-labeling tools");
  semisup->require_subcommand(1);
  auto* rf = semisup->add_subcommand("rule-filter", "Lexicon spotting plus occurrence filtering");
  std::string ss_unlabeled, ss_lex, ss_labeled, ss_in, ss_ckpt;
  std::vector<std::string> ss_pseudo;
  int min_occ = 10, upsample = 5;
  bool with_interaction = false;
  rf->add_option("--unlabeled", ss_unlabeled, "Unlabeled documents")->required()->check(CLI::ExistingFile);
  rf->add_option("--lexicons", ss_lex, "Lexicon directory")->required()->check(CLI::ExistingDirectory);
  rf->add_option("--min-occ", min_occ, "Minimum document count per triplet");
  rf->add_option("--seed", seed, "Random seed");
  rf->add_option("--out", out, "Pseudo-labeled JSONL")->required();
  auto* kd = semisup->add_subcommand("kd-label", "Filter pseudo labels with a trained model");
  kd->add_option("--ckpt", ss_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  kd->add_option("--in", ss_in, "Rule-filtered JSONL")->required()->check(CLI::ExistingFile);
  kd->add_option("--beam", beam, "Beam width");
  kd->add_option("--seed", seed, "Random seed");
  kd->add_option("--out", out, "Pseudo-labeled JSONL")->required();
  auto* ds = semisup->add_subcommand("ds-label", "Distant supervision from labeled triplets");
  ds->add_option("--labeled", ss_labeled, "Labeled corpus")->required()->check(CLI::ExistingFile);
  ds->add_option("--unlabeled", ss_unlabeled, "Unlabeled documents")->required()->check(CLI::ExistingFile);
  ds->add_option("--lexicons", ss_lex, "Lexicon directory for synonyms")->check(CLI::ExistingDirectory);
  ds->add_flag("--with-interaction", with_interaction, "Also require the interaction to be mentioned");
  ds->add_option("--seed", seed, "Random seed");
  ds->add_option("--out", out, "Pseudo-labeled JSONL")->required();
  auto* merge = semisup->add_subcommand("merge", "Upsample labeled data and add pseudo labels");
  merge->add_option("--labeled", ss_labeled, "Labeled corpus")->required()->check(CLI::ExistingFile);
  merge->add_option("--pseudo", ss_pseudo, "Pseudo-labeled JSONL files")->required()->check(CLI::ExistingFile);
  merge->add_option("--upsample", upsample, "Copies of the labeled corpus");
  merge->add_option("--seed", seed, "Shuffle seed");
  merge->add_option("--out", out, "Merged corpus")->required();

  // stats
  auto* stats = app.add_subcommand("stats", "Corpus statistics");
  std::string st_corpus, st_lex;
  stats->add_option("--corpus", st_corpus, "Corpus (JSONL)")->required()->check(CLI::ExistingFile);
  stats->add_option("--lexicons", st_lex, "Lexicon directory for mention search")->check(CLI::ExistingDirectory);
  stats->add_option("--seed", seed, "Random seed");
  stats->add_option("--out", out, "Report JSON (stdout when omitted)");

  // ablate-orders
  auto* ablate = app.add_subcommand("ablate-orders", "Train one model per triplet order");
  ConfigArgs ab_cfg;
  ab_cfg.add(ablate);
  ablate->add_option("--out", out, "Output directory")->required();

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "Run the end-to-end pipeline");
  ConfigArgs pl_cfg;
  bool pl_semisup = false;
  pl_cfg.add(pipeline);
  pipeline->add_flag("--semisup", pl_semisup, "Enable the semi-supervised stage");
  pipeline->add_option("--out", out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*datagen) cmd_datagen(dg_config, dg_sets, dg_seed, out);
    if (*build) cmd_build_corpus(bc_in, bc_lex, bc_unlabeled, bc_top_k, bc_split, seed, out);
    if (*tbpe) cmd_train_bpe(tb_corpus, tb_unlabeled, tb_merges, tb_order, seed, out);
    if (*train) cmd_train(tr_corpus, tr_cfg, tr_bpe, tr_init, tr_resume, out);
    if (*generate) cmd_generate(ge_ckpt, ge_in, beam, ge_order, seed, out);
    if (*evaluate) cmd_evaluate(ev_gold, ev_pred, ev_per_doc, seed, out);
    if (*rf) cmd_rule_filter(ss_unlabeled, ss_lex, min_occ, seed, out);
    if (*kd) cmd_kd_label(ss_ckpt, ss_in, beam, seed, out);
    if (*ds) cmd_ds_label(ss_labeled, ss_unlabeled, ss_lex, with_interaction, seed, out);
    if (*merge) cmd_merge(ss_labeled, ss_pseudo, upsample, seed, out);
    if (*stats) cmd_stats(st_corpus, st_lex, seed, out);
    if (*ablate) cmd_ablate(ab_cfg, out);
    if (*pipeline) cmd_pipeline(pl_cfg, pl_semisup, out);
  } catch (const std::exception& e) {
    std::cerr << "dtigen: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
