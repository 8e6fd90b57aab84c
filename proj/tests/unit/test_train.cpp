// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "dtigen/checkpoint.hpp"
#include "dtigen/datagen.hpp"
#include "dtigen/train.hpp"

namespace fs = std::filesystem;
using namespace dtigen;

namespace {

struct Setup {
  GeneratedCorpus corpus;
  BpeModel bpe;
  ModelConfig cfg;
  std::unique_ptr<RandomFeatureProvider<float>> provider;
  std::vector<PreparedExample<float>> prepared;
};

Setup small_setup(bool fusion = true) {
  Setup s;
  GenConfig gc;
  gc.n_docs = 12;
  gc.seed = 4;
  s.corpus = generate_corpus(gc);
  std::vector<std::string> texts;
  for (const auto& ex : s.corpus.labeled) {
    texts.push_back(ex.document.text());
    texts.push_back(serialize(ex.triplets));
  }
  s.bpe = train_bpe(texts, 120);
  s.cfg.layers = 1;
  s.cfg.dim = 16;
  s.cfg.heads = 2;
  s.cfg.ffn_dim = 32;
  s.cfg.dropout = 0.1;
  s.cfg.attention_dropout = 0.1;
  s.cfg.fusion = fusion;
  s.cfg.vocab_size = s.bpe.vocab_size();
  s.cfg.feature_dim = 8;
  s.cfg.max_source_len = 256;
  s.cfg.max_target_len = 64;
  s.provider = std::make_unique<RandomFeatureProvider<float>>(s.bpe.vocab_size(), 8, 3, s.cfg.max_source_len);
  s.prepared = prepare_examples<float>(s.corpus.labeled, s.bpe, s.provider.get(), s.cfg);
  return s;
}

TrainConfig small_train(int steps) {
  TrainConfig tc;
  tc.max_steps = steps;
  tc.batch_tokens = 2000;
  tc.adam.lr = 2e-3;
  tc.adam.warmup_steps = 5;
  return tc;
}

std::vector<Mat<float>> values(const Transformer<float>& m) {
  std::vector<Mat<float>> out;
  for (const auto& e : m.params().entries()) out.push_back(e.value);
  return out;
}

class ScopedThreads {
 public:
  explicit ScopedThreads(const char* n) {
    if (const char* v = std::getenv("DTIGEN_THREADS")) old_ = v;
    setenv("DTIGEN_THREADS", n, 1);
  }
  ~ScopedThreads() {
    if (old_) {
      setenv("DTIGEN_THREADS", old_->c_str(), 1);
    } else {
      unsetenv("DTIGEN_THREADS");
    }
  }

 private:
  std::optional<std::string> old_;
};

}  // namespace

TEST(Schedule, InverseSquareRootWithWarmup) {
  EXPECT_DOUBLE_EQ(inverse_sqrt_lr(1.0, 4, 1), 0.25);
  EXPECT_DOUBLE_EQ(inverse_sqrt_lr(1.0, 4, 4), 1.0);
  EXPECT_DOUBLE_EQ(inverse_sqrt_lr(1.0, 4, 16), 0.5);
  EXPECT_DOUBLE_EQ(inverse_sqrt_lr(2.0, 0, 4), 1.0);
  EXPECT_DOUBLE_EQ(inverse_sqrt_lr(1.0, 4, 0), 0.25);
}

TEST(Adam, FirstStepMovesBySignTimesLearningRate) {
  ParamStore<double> ps;
  Mat<double> v(1, 3);
  v << 1.0, 2.0, 3.0;
  ps.add("w", v);
  ps[0].grad << 0.5, -2.0, 0.0;
  AdamConfig ac;
  ac.lr = 0.1;
  ac.warmup_steps = 0;
  Adam<double> adam(ps, ac);
  const double norm = adam.apply(ps);
  EXPECT_NEAR(norm, std::sqrt(0.25 + 4.0), 1e-12);
  EXPECT_NEAR(ps[0].value(0, 0), 1.0 - 0.1 * 0.5 / (0.5 + ac.eps), 1e-12);
  EXPECT_NEAR(ps[0].value(0, 1), 2.0 + 0.1 * 2.0 / (2.0 + ac.eps), 1e-12);
  EXPECT_EQ(ps[0].value(0, 2), 3.0);
  EXPECT_EQ(ps[0].grad.squaredNorm(), 0.0);
  EXPECT_EQ(adam.step(), 1);
}

TEST(Adam, ClippingBoundsTheUpdateDirection) {
  ParamStore<double> ps;
  ps.add("w", Mat<double>::Zero(1, 2));
  ps[0].grad << 30.0, 40.0;
  AdamConfig ac;
  ac.clip_norm = 5.0;
  ac.warmup_steps = 0;
  Adam<double> adam(ps, ac);
  EXPECT_NEAR(adam.apply(ps), 50.0, 1e-12);
  EXPECT_NEAR(adam.first_moments()[0](0, 0), (1 - ac.beta1) * 3.0, 1e-12);
}

TEST(BatchSampler, EachEpochCoversEveryExampleOnce) {
  const std::vector<int> sizes = {5, 3, 9, 1, 4, 7, 2, 6, 8, 10};
  BatchSampler s(sizes, 12, 42);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::multiset<std::size_t> seen;
    while (seen.size() < sizes.size()) {
      const auto batch = s.next();
      ASSERT_FALSE(batch.empty());
      int used = 0;
      for (auto i : batch) {
        used += sizes[i];
        seen.insert(i);
      }
      EXPECT_LE(used, 12);
    }
    ASSERT_EQ(seen.size(), sizes.size());
    for (std::size_t i = 0; i < sizes.size(); ++i) EXPECT_EQ(seen.count(i), 1u);
    EXPECT_EQ(s.epoch(), epoch + 1);
  }
}

TEST(BatchSampler, RejectsOversizeAndEmpty) {
  EXPECT_THROW(BatchSampler({3, 20}, 10, 1), Error);
  EXPECT_THROW(BatchSampler({}, 10, 1), Error);
}

TEST(Prepare, TargetsEndWithEosAndFeaturesMatchSource) {
  auto s = small_setup();
  ASSERT_EQ(s.prepared.size(), s.corpus.labeled.size());
  for (const auto& p : s.prepared) {
    EXPECT_EQ(p.src.back(), s.bpe.eos_id());
    EXPECT_EQ(p.tgt.back(), s.bpe.eos_id());
    EXPECT_EQ(p.feats.rows(), static_cast<Eigen::Index>(p.src.size()));
    EXPECT_EQ(p.feats.cols(), 8);
  }
  auto short_cfg = s.cfg;
  short_cfg.max_target_len = 4;
  std::size_t cut = 0;
  prepare_examples<float>(s.corpus.labeled, s.bpe, s.provider.get(), short_cfg, &cut);
  EXPECT_EQ(cut, s.corpus.labeled.size());
  EXPECT_THROW(prepare_examples<float>(s.corpus.labeled, s.bpe, nullptr, s.cfg), ConfigError);
}

TEST(Trainer, LossDecreases) {
  auto s = small_setup();
  Transformer<float> model(s.cfg, 1);
  auto tc = small_train(60);
  tc.batch_tokens = 10000;
  Trainer<float> trainer(model, tc, 1);
  std::vector<const PreparedExample<float>*> batch;
  for (std::size_t i = 0; i < 6; ++i) batch.push_back(&s.prepared[i]);
  const double before = trainer.step(batch, s.bpe.sos_id()).loss;
  double after = 0;
  for (int i = 0; i < 30; ++i) after = trainer.step(batch, s.bpe.sos_id()).loss;
  EXPECT_LT(after, before - 0.3);
  EXPECT_TRUE(model.params().all_finite());
}

TEST(Trainer, StepRejectsOverBudgetBatch) {
  auto s = small_setup();
  Transformer<float> model(s.cfg, 1);
  auto tc = small_train(1);
  tc.batch_tokens = s.prepared[0].tokens() - 1;
  Trainer<float> trainer(model, tc, 1);
  EXPECT_THROW(trainer.step({&s.prepared[0]}, s.bpe.sos_id()), Error);
  EXPECT_THROW(trainer.step({}, s.bpe.sos_id()), Error);
}

TEST(Trainer, ThreadCountDoesNotChangeTheResult) {
  auto s = small_setup();
  std::vector<std::vector<Mat<float>>> runs;
  for (const char* n : {"1", "3"}) {
    ScopedThreads threads(n);
    Transformer<float> model(s.cfg, 5);
    Trainer<float> trainer(model, small_train(6), 9);
    trainer.fit(s.prepared, {}, s.provider.get(), s.bpe);
    runs.push_back(values(model));
  }
  ASSERT_EQ(runs[0].size(), runs[1].size());
  for (std::size_t i = 0; i < runs[0].size(); ++i) EXPECT_EQ(runs[0][i], runs[1][i]) << i;
}

TEST(Trainer, SameSeedSameParameters) {
  auto s = small_setup(false);
  std::vector<std::vector<Mat<float>>> runs;
  for (std::uint64_t seed : {3u, 3u, 4u}) {
    Transformer<float> model(s.cfg, 5);
    Trainer<float> trainer(model, small_train(4), seed);
    trainer.fit(s.prepared, {}, nullptr, s.bpe);
    runs.push_back(values(model));
  }
  EXPECT_EQ(runs[0], runs[1]);
  EXPECT_NE(runs[0], runs[2]);
}

TEST(Trainer, ValidationRestoresBestAndStopsEarly) {
  auto s = small_setup();
  Transformer<float> model(s.cfg, 2);
  auto tc = small_train(30);
  tc.eval_every = 2;
  tc.patience = 1;
  tc.eval_decode.max_len = 8;
  Trainer<float> trainer(model, tc, 2);
  int events = 0;
  const auto r = trainer.fit(s.prepared, s.corpus.labeled, s.provider.get(), s.bpe,
                             [&](const TrainEvent&) { ++events; });
  ASSERT_TRUE(r.best_valid_f1.has_value());
  EXPECT_EQ(events, static_cast<int>(r.evals.size()));
  EXPECT_LE(r.best_step, r.steps);
  EXPECT_EQ(trainer.validation_f1(s.corpus.labeled, *s.provider, s.bpe), *r.best_valid_f1);
  if (r.stopped_early) {
    EXPECT_LT(r.steps, 30);
  }
}

TEST(Checkpoint, RoundTripKeepsParametersAndOutputs) {
  auto s = small_setup();
  Transformer<float> model(s.cfg, 8);
  Trainer<float> trainer(model, small_train(3), 8);
  trainer.fit(s.prepared, {}, s.provider.get(), s.bpe);
  const fs::path path = fs::temp_directory_path() / "dtigen_ck_test.bin";
  save_checkpoint(path, model, static_cast<const FeatureProvider<float>*>(s.provider.get()), s.bpe,
                  &trainer.optimizer(), nlohmann::json{{"note", "x"}});
  const auto ck = load_checkpoint<float>(path);
  EXPECT_EQ(values(*ck.model), values(model));
  EXPECT_EQ(ck.step, 3);
  EXPECT_EQ(ck.extra["note"], "x");
  EXPECT_EQ(ck.bpe.vocab_hash(), s.bpe.vocab_hash());
  ASSERT_TRUE(ck.provider);
  const auto& src = s.prepared[0].src;
  EXPECT_EQ(ck.provider->features(src), s.provider->features(src));
  const auto& doc = s.corpus.labeled[0].document;
  DecodeConfig dc;
  dc.max_len = 20;
  EXPECT_TRUE(generate_triplets(*ck.model, *ck.provider, ck.bpe, doc, dc) ==
              generate_triplets(model, *s.provider, s.bpe, doc, dc));

  Adam<float> adam(ck.model->params(), AdamConfig{});
  restore_optimizer(adam, ck);
  EXPECT_EQ(adam.step(), 3);
  EXPECT_EQ(adam.first_moments(), trainer.optimizer().first_moments());

  EXPECT_THROW(load_checkpoint<double>(path), Error);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  EXPECT_THROW(load_checkpoint<float>(path), ParseError);
  fs::resize_file(path, 20);
  EXPECT_THROW(load_checkpoint<float>(path), ParseError);
  fs::remove(path);
  EXPECT_THROW(load_checkpoint<float>(path), IoError);
}

TEST(Checkpoint, TruncatedTensorDataIsAParseError) {
  auto s = small_setup(false);
  Transformer<float> model(s.cfg, 8);
  const fs::path path = fs::temp_directory_path() / "dtigen_ck_trunc.bin";
  save_checkpoint<float>(path, model, nullptr, s.bpe);
  EXPECT_FALSE(load_checkpoint<float>(path).provider);
  fs::resize_file(path, fs::file_size(path) - 16);
  EXPECT_THROW(load_checkpoint<float>(path), ParseError);
  fs::remove(path);
}

TEST(Features, ReconstructionPretrainingLowersLoss) {
  auto s = small_setup();
  ReconstructionConfig rc;
  rc.dim = 16;
  rc.ffn_dim = 32;
  rc.steps = 80;
  rc.max_len = 256;
  ReconstructionFeatureProvider<float> p(s.bpe.vocab_size(), rc, s.bpe.unk_id(), 1);
  std::vector<std::vector<int>> sources;
  for (const auto& x : s.prepared) sources.push_back(x.src);
  const auto [first, last] = p.pretrain(sources);
  EXPECT_LT(last, first);
  const auto f = p.features(sources[0]);
  EXPECT_EQ(f.rows(), static_cast<Eigen::Index>(sources[0].size()));
  EXPECT_EQ(f.cols(), 16);
  EXPECT_EQ(p.features(sources[0]), f);
}

TEST(Features, RandomProviderIsDeterministicPerSeed) {
  RandomFeatureProvider<float> a(50, 4, 1, 32), b(50, 4, 1, 32), c(50, 4, 2, 32);
  const std::vector<int> src = {3, 7, 7, 9};
  EXPECT_EQ(a.features(src), b.features(src));
  EXPECT_NE(a.features(src), c.features(src));
  const auto f = a.features(src);
  EXPECT_NE(f.row(1), f.row(2));
}
