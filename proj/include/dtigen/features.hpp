// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

// Frozen per-token feature providers. A provider maps a source id sequence to
// one feature vector per token and is never updated by model training.

#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtigen/autodiff.hpp"
#include "dtigen/model.hpp"
#include "dtigen/optim.hpp"
#include "dtigen/params.hpp"
#include "dtigen/rng.hpp"

namespace dtigen {

template <typename T>
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual int dim() const = 0;
  virtual Mat<T> features(const std::vector<int>& src) const = 0;
  /// Kind and settings; enough to rebuild the provider together with
  /// parameters() when it has any.
  virtual nlohmann::ordered_json describe() const = 0;
  virtual const ParamStore<T>* parameters() const { return nullptr; }
};

/// Random N(0, 1) embedding table plus sinusoidal positions.
template <typename T>
class RandomFeatureProvider final : public FeatureProvider<T> {
 public:
  RandomFeatureProvider(int vocab_size, int dim, std::uint64_t seed, int max_len = 1024)
      : vocab_(vocab_size), dim_(dim), seed_(seed), max_len_(max_len) {
    if (vocab_size < 1 || dim < 1) throw ConfigError("random feature provider: bad shape");
    Rng rng(mix_seed(seed, 0xfea7));
    table_.resize(vocab_size, dim);
    for (Eigen::Index i = 0; i < table_.size(); ++i) table_.data()[i] = static_cast<T>(rng.normal());
    pos_ = sinusoidal_positions<T>(max_len, dim);
  }

  int dim() const override { return dim_; }

  Mat<T> features(const std::vector<int>& src) const override {
    if (static_cast<int>(src.size()) > max_len_) throw Error("feature provider: source too long");
    Mat<T> out(static_cast<Eigen::Index>(src.size()), dim_);
    for (std::size_t i = 0; i < src.size(); ++i) {
      const int id = (src[i] >= 0 && src[i] < vocab_) ? src[i] : 0;
      out.row(static_cast<Eigen::Index>(i)) = table_.row(id) + pos_.row(static_cast<Eigen::Index>(i));
    }
    return out;
  }

  nlohmann::ordered_json describe() const override {
    nlohmann::ordered_json j;
    j["kind"] = "random";
    j["vocab_size"] = vocab_;
    j["dim"] = dim_;
    j["seed"] = seed_;
    j["max_len"] = max_len_;
    return j;
  }

 private:
  int vocab_;
  int dim_;
  std::uint64_t seed_;
  int max_len_;
  Mat<T> table_;
  Mat<T> pos_;
};

struct ReconstructionConfig {
  int dim = 32;
  int heads = 2;
  int ffn_dim = 64;
  int max_len = 1024;
  int steps = 300;
  double mask_prob = 0.15;
  double lr = 1e-3;
  int warmup_steps = 50;
  int batch_sequences = 8;
};

/// Small one-layer self-attention encoder pretrained to reconstruct masked
/// tokens of unlabeled sources, then frozen. Its last hidden states are the
/// features.
template <typename T>
class ReconstructionFeatureProvider final : public FeatureProvider<T> {
 public:
  ReconstructionFeatureProvider(int vocab_size, const ReconstructionConfig& cfg, int mask_id,
                                std::uint64_t seed)
      : vocab_(vocab_size), cfg_(cfg), mask_id_(mask_id), seed_(seed) {
    Rng rng(mix_seed(seed, 0x4ec0));
    const int d = cfg.dim;
    embed_ = params_.add_normal("provider.embed", vocab_size, d, 1.0 / std::sqrt(double(d)), rng);
    attn_ = nn::add_attention(params_, "provider.self_attn", d, rng);
    norm1_ = nn::add_norm(params_, "provider.norm1", d);
    ffn_ = nn::add_ffn(params_, "provider.ffn", d, cfg.ffn_dim, rng);
    norm2_ = nn::add_norm(params_, "provider.norm2", d);
    out_w_ = params_.add_xavier("provider.output.w", d, vocab_size, rng);
    out_b_ = params_.add_zeros("provider.output.b", 1, vocab_size);
    pos_ = sinusoidal_positions<T>(cfg.max_len, d);
  }

  int dim() const override { return cfg_.dim; }
  const ReconstructionConfig& config() const { return cfg_; }
  ParamStore<T>& mutable_parameters() { return params_; }
  const ParamStore<T>* parameters() const override { return &params_; }

  Mat<T> features(const std::vector<int>& src) const override {
    Tape<T> tape;
    Binder<T> p(tape, params_);
    return tape.value(hidden(p, src));
  }

  /// Masked-token reconstruction loss (mean over masked positions) of one
  /// sequence; used by pretrain() and exposed for tests.
  double reconstruction_loss(const std::vector<int>& src, std::uint64_t mask_seed) const {
    Tape<T> tape;
    Binder<T> p(tape, params_);
    Rng rng(mask_seed);
    std::vector<int> gold;
    const auto masked = mask(src, rng, gold);
    int n = 0;
    for (int g : gold) n += g >= 0;
    const Var loss = tape.smoothed_nll(logits(p, masked), gold, T(0), -1);
    return n ? static_cast<double>(tape.value(loss)(0, 0)) / n : 0.0;
  }

  /// Trains on the given sources, then leaves the parameters frozen. Returns
  /// the mean loss of the first and last 10% of steps.
  std::pair<double, double> pretrain(const std::vector<std::vector<int>>& sources) {
    if (sources.empty()) throw ConfigError("reconstruction provider: no pretraining data");
    AdamConfig ac;
    ac.lr = cfg_.lr;
    ac.warmup_steps = cfg_.warmup_steps;
    Adam<T> adam(params_, ac);
    Rng rng(mix_seed(seed_, 0x9e7));
    std::vector<std::size_t> order(sources.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();
    const int window = std::max(1, cfg_.steps / 10);
    double first = 0, last = 0;
    for (int step = 0; step < cfg_.steps; ++step) {
      double total = 0;
      int count = 0;
      for (int b = 0; b < cfg_.batch_sequences; ++b) {
        if (cursor >= order.size()) {
          rng.shuffle(order);
          cursor = 0;
        }
        const auto& src = sources[order[cursor++]];
        Tape<T> tape;
        Binder<T> p(tape, params_, &params_);
        std::vector<int> gold;
        const auto masked = mask(src, rng, gold);
        int n = 0;
        for (int g : gold) n += g >= 0;
        if (n == 0) continue;
        const Var loss = tape.smoothed_nll(logits(p, masked), gold, T(0), -1);
        total += static_cast<double>(tape.value(loss)(0, 0));
        count += n;
        tape.backward(loss, T(1) / static_cast<T>(cfg_.batch_sequences));
      }
      adam.apply(params_);
      const double mean = count ? total / count : 0.0;
      if (step < window) first += mean / window;
      if (step >= cfg_.steps - window) last += mean / window;
    }
    return {first, last};
  }

  nlohmann::ordered_json describe() const override {
    nlohmann::ordered_json j;
    j["kind"] = "reconstruction";
    j["vocab_size"] = vocab_;
    j["dim"] = cfg_.dim;
    j["heads"] = cfg_.heads;
    j["ffn_dim"] = cfg_.ffn_dim;
    j["max_len"] = cfg_.max_len;
    j["mask_id"] = mask_id_;
    j["seed"] = seed_;
    return j;
  }

 private:
  std::vector<int> mask(const std::vector<int>& src, Rng& rng, std::vector<int>& gold) const {
    std::vector<int> out = src;
    gold.assign(src.size(), -1);
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (rng.bernoulli(cfg_.mask_prob)) {
        gold[i] = src[i];
        out[i] = mask_id_;
      }
    }
    return out;
  }

  Var hidden(Binder<T>& p, const std::vector<int>& src) const {
    if (src.empty()) throw Error("feature provider: empty source");
    if (static_cast<int>(src.size()) > cfg_.max_len) throw Error("feature provider: source too long");
    auto& t = p.tape();
    RunMode mode;
    std::vector<int> ids = src;
    for (auto& id : ids) {
      if (id < 0 || id >= vocab_) id = mask_id_;
    }
    const Var e = t.scale(t.embed(p(embed_), ids), static_cast<T>(std::sqrt(double(cfg_.dim))));
    const Var x = t.add(e, t.constant(pos_.topRows(static_cast<Eigen::Index>(ids.size()))));
    const Var a = nn::attend(p, attn_, x, x, cfg_.heads, false, 0.0, mode);
    const Var h = nn::norm(p, norm1_, t.add(x, a));
    return nn::norm(p, norm2_, t.add(h, nn::ffn(p, ffn_, h)));
  }

  Var logits(Binder<T>& p, const std::vector<int>& src) const {
    return p.tape().log_softmax(nn::linear(p, hidden(p, src), out_w_, out_b_));
  }

  int vocab_;
  ReconstructionConfig cfg_;
  int mask_id_;
  std::uint64_t seed_;
  ParamStore<T> params_;
  int embed_ = -1;
  nn::AttentionIdx attn_{};
  nn::NormIdx norm1_{};
  nn::FfnIdx ffn_{};
  nn::NormIdx norm2_{};
  int out_w_ = -1;
  int out_b_ = -1;
  Mat<T> pos_;
};

}  // namespace dtigen
