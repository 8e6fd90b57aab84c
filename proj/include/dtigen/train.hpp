// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtigen/bpe.hpp"
#include "dtigen/corpus.hpp"
#include "dtigen/features.hpp"
#include "dtigen/generate.hpp"
#include "dtigen/metrics.hpp"
#include "dtigen/model.hpp"
#include "dtigen/optim.hpp"
#include "dtigen/parallel.hpp"

namespace dtigen {

struct TrainConfig {
  int max_steps = 2000;
  int batch_tokens = 4096;  // source + target tokens per batch
  int eval_every = 0;       // 0: no validation, keep the last parameters
  int patience = 5;         // evaluations without improvement before stopping
  int log_every = 0;
  AdamConfig adam;
  DecodeConfig eval_decode;
};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["max_steps"] = c.max_steps;
  j["batch_tokens"] = c.batch_tokens;
  j["eval_every"] = c.eval_every;
  j["patience"] = c.patience;
  j["log_every"] = c.log_every;
  j["adam"] = to_json(c.adam);
  j["eval_beam"] = c.eval_decode.beam;
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  auto get = [&](const char* k, auto& dst) {
    if (auto it = j.find(k); it != j.end()) dst = it->get<std::decay_t<decltype(dst)>>();
  };
  get("max_steps", c.max_steps);
  get("batch_tokens", c.batch_tokens);
  get("eval_every", c.eval_every);
  get("patience", c.patience);
  get("log_every", c.log_every);
  get("eval_beam", c.eval_decode.beam);
  if (auto it = j.find("adam"); it != j.end()) c.adam = adam_config_from_json(*it, c.adam);
  if (c.max_steps < 1) throw ConfigError("train: max_steps must be >= 1");
  if (c.batch_tokens < 2) throw ConfigError("train: batch_tokens must be >= 2");
  if (c.patience < 1) throw ConfigError("train: patience must be >= 1");
  return c;
}

template <typename T>
struct PreparedExample {
  std::string id;
  std::vector<int> src;
  std::vector<int> tgt;  // ends with EOS
  Mat<T> feats;          // empty when fusion is off

  int tokens() const { return static_cast<int>(src.size() + tgt.size()); }
};

/// Encodes examples and computes their (frozen) feature matrices once.
template <typename T>
std::vector<PreparedExample<T>> prepare_examples(const std::vector<LabeledExample>& examples,
                                                 const BpeModel& bpe, const FeatureProvider<T>* provider,
                                                 const ModelConfig& cfg, std::size_t* truncated = nullptr) {
  if (cfg.fusion && !provider) throw ConfigError("fusion model needs a feature provider");
  std::vector<PreparedExample<T>> out(examples.size());
  std::vector<char> cut(examples.size(), 0);
  parallel_for(examples.size(), [&](std::size_t i) {
    auto& p = out[i];
    p.id = examples[i].document.id;
    p.src = source_ids(bpe, examples[i].document, cfg.max_source_len);
    bool fits = true;
    p.tgt = target_ids(bpe, examples[i].triplets, cfg.order, cfg.max_target_len, &fits);
    cut[i] = !fits;
    if (cfg.fusion) p.feats = provider->features(p.src);
  });
  if (truncated) {
    *truncated = 0;
    for (char c : cut) *truncated += static_cast<std::size_t>(c);
  }
  return out;
}

/// Shuffles once per epoch and packs consecutive examples into batches that
/// stay within the token budget.
class BatchSampler {
 public:
  BatchSampler(std::vector<int> sizes, int budget, std::uint64_t seed)
      : sizes_(std::move(sizes)), budget_(budget), seed_(seed) {
    if (sizes_.empty()) throw Error("batch sampler: no training examples");
    for (std::size_t i = 0; i < sizes_.size(); ++i) {
      if (sizes_[i] > budget_) {
        throw Error("example " + std::to_string(i) + " has " + std::to_string(sizes_[i]) +
                    " tokens, more than the batch budget of " + std::to_string(budget_));
      }
    }
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> batch;
    int used = 0;
    for (;;) {
      if (cursor_ >= order_.size()) {
        if (!batch.empty()) return batch;
        refill();
      }
      const std::size_t i = order_[cursor_];
      if (!batch.empty() && used + sizes_[i] > budget_) return batch;
      batch.push_back(i);
      used += sizes_[i];
      ++cursor_;
    }
  }

  int epoch() const { return epoch_; }

 private:
  void refill() {
    order_.resize(sizes_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    Rng rng(mix_seed(seed_, static_cast<std::uint64_t>(epoch_)));
    rng.shuffle(order_);
    cursor_ = 0;
    ++epoch_;
  }

  std::vector<int> sizes_;
  int budget_;
  std::uint64_t seed_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  int epoch_ = 0;
};

struct StepResult {
  double loss = 0.0;  // label-smoothed NLL per target token
  int tokens = 0;
  double grad_norm = 0.0;
  double lr = 0.0;
};

struct TrainEvent {
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::optional<double> valid_f1;
};

struct TrainResult {
  long steps = 0;
  bool stopped_early = false;
  double final_loss = 0.0;
  std::optional<double> best_valid_f1;
  long best_step = 0;
  std::vector<TrainEvent> evals;
};

template <typename T>
class Trainer {
 public:
  Trainer(Transformer<T>& model, const TrainConfig& cfg, std::uint64_t seed)
      : model_(model), cfg_(cfg), seed_(seed), adam_(model.params(), cfg.adam) {}

  Adam<T>& optimizer() { return adam_; }
  const TrainConfig& config() const { return cfg_; }

  /// One optimizer update on a batch. Gradients of the per-token mean loss
  /// are accumulated example by example in batch order, so the update does
  /// not depend on the worker count.
  StepResult step(const std::vector<const PreparedExample<T>*>& batch, int sos_id) {
    if (batch.empty()) throw Error("train_step: empty batch");
    int tokens = 0;
    int budget_used = 0;
    for (const auto* ex : batch) {
      tokens += static_cast<int>(ex->tgt.size());
      budget_used += ex->tokens();
    }
    if (budget_used > cfg_.batch_tokens) {
      throw Error("train_step: batch has " + std::to_string(budget_used) + " tokens, budget is " +
                  std::to_string(cfg_.batch_tokens));
    }
    const long step_no = adam_.step() + 1;
    const T seed_grad = T(1) / static_cast<T>(tokens);
    std::vector<double> losses(batch.size(), 0.0);
    auto& params = model_.params();
    auto run_one = [&](std::size_t i, ParamStore<T>* sink) {
      Rng rng(mix_seed(mix_seed(seed_, static_cast<std::uint64_t>(step_no)), i));
      RunMode mode{true, &rng};
      Tape<T> tape;
      Binder<T> p(tape, params, sink);
      const auto* ex = batch[i];
      const Var loss = model_.example_loss(p, ex->src, ex->feats, ex->tgt, sos_id, mode);
      losses[i] = static_cast<double>(tape.value(loss)(0, 0));
      if (!std::isfinite(losses[i])) {
        throw Error("train_step: non-finite loss " + std::to_string(losses[i]) + " at step " +
                    std::to_string(step_no) + " on example " + ex->id);
      }
      tape.backward(loss, seed_grad);
    };
    const int threads = thread_count();
    if (threads <= 1 || batch.size() == 1) {
      for (std::size_t i = 0; i < batch.size(); ++i) run_one(i, &params);
    } else {
      std::vector<std::unique_ptr<ParamStore<T>>> sinks(batch.size());
      parallel_for(
          batch.size(),
          [&](std::size_t i) {
            sinks[i] = std::make_unique<ParamStore<T>>(params);
            sinks[i]->zero_grad();
            run_one(i, sinks[i].get());
          },
          threads);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        for (std::size_t k = 0; k < params.size(); ++k) {
          params[static_cast<int>(k)].grad += (*sinks[i])[static_cast<int>(k)].grad;
        }
      }
    }
    StepResult r;
    for (double l : losses) r.loss += l;
    r.loss /= tokens;
    r.tokens = tokens;
    r.lr = inverse_sqrt_lr(cfg_.adam.lr, cfg_.adam.warmup_steps, step_no);
    r.grad_norm = adam_.apply(params);
    if (!params.all_finite()) {
      throw Error("train_step: parameters became non-finite at step " + std::to_string(step_no));
    }
    return r;
  }

  /// Trains for up to max_steps. With validation data and eval_every > 0 the
  /// triplet F1 on `valid` is checked periodically; training stops after
  /// `patience` checks without improvement and the best parameters are
  /// restored.
  TrainResult fit(const std::vector<PreparedExample<T>>& train, const std::vector<LabeledExample>& valid,
                  const FeatureProvider<T>* provider, const BpeModel& bpe,
                  const std::function<void(const TrainEvent&)>& on_event = {}) {
    std::vector<int> sizes;
    sizes.reserve(train.size());
    for (const auto& ex : train) sizes.push_back(ex.tokens());
    BatchSampler sampler(std::move(sizes), cfg_.batch_tokens, mix_seed(seed_, 0xba7c));
    const bool validate = cfg_.eval_every > 0 && !valid.empty();
    if (validate && model_.config().fusion && !provider) throw ConfigError("validation needs a feature provider");
    TrainResult result;
    std::optional<std::vector<Mat<T>>> best_values;
    int bad = 0;
    double recent = 0.0;
    int recent_n = 0;
    for (int s = 1; s <= cfg_.max_steps; ++s) {
      const auto idx = sampler.next();
      std::vector<const PreparedExample<T>*> batch;
      for (auto i : idx) batch.push_back(&train[i]);
      const StepResult r = step(batch, bpe.sos_id());
      result.steps = s;
      result.final_loss = r.loss;
      recent += r.loss;
      ++recent_n;
      TrainEvent ev{s, r.loss, r.lr, std::nullopt};
      const bool check = validate && (s % cfg_.eval_every == 0 || s == cfg_.max_steps);
      if (check) {
        ev.loss = recent / recent_n;
        const double f1 = validation_f1(valid, *provider, bpe);
        ev.valid_f1 = f1;
        result.evals.push_back(ev);
        if (!result.best_valid_f1 || f1 > *result.best_valid_f1) {
          result.best_valid_f1 = f1;
          result.best_step = s;
          best_values = snapshot();
          bad = 0;
        } else if (++bad >= cfg_.patience) {
          result.stopped_early = true;
        }
      }
      const bool log = cfg_.log_every > 0 && s % cfg_.log_every == 0;
      if (on_event && (check || log)) {
        if (!check) ev.loss = recent / recent_n;
        on_event(ev);
      }
      if (check || log) {
        recent = 0.0;
        recent_n = 0;
      }
      if (result.stopped_early) break;
    }
    if (best_values) restore(*best_values);
    return result;
  }

  double validation_f1(const std::vector<LabeledExample>& valid, const FeatureProvider<T>& provider,
                       const BpeModel& bpe) const {
    const auto pred = predict_corpus(model_, provider, bpe, documents_of(valid), cfg_.eval_decode);
    std::vector<TripletSet> g, p;
    for (std::size_t i = 0; i < valid.size(); ++i) {
      g.push_back(valid[i].triplets);
      p.push_back(pred[i].triplets);
    }
    return triplet_prf(g, p).f1;
  }

 private:
  std::vector<Mat<T>> snapshot() const {
    std::vector<Mat<T>> v;
    for (const auto& e : model_.params().entries()) v.push_back(e.value);
    return v;
  }
  void restore(const std::vector<Mat<T>>& v) {
    auto& es = model_.params().entries();
    for (std::size_t i = 0; i < es.size(); ++i) es[i].value = v[i];
  }

  Transformer<T>& model_;
  TrainConfig cfg_;
  std::uint64_t seed_;
  Adam<T> adam_;
};

}  // namespace dtigen
