// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

// Encoder-decoder Transformer whose attention sublayers can additionally
// attend over a frozen per-token feature matrix B.
//
// Encoder layer l (fusion on):
//   A_l  = 1/2 (Attn(H_{l-1}, H_{l-1}) + Attn(H_{l-1}, B))
//   H~_l = LN(H_{l-1} + A_l)
//   H_l  = LN(H~_l + FFN(H~_l))
// Decoder layer l:
//   A~'_l = LN(H'_{l-1} + Attn(H'_{l-1}, H'_{l-1}))      (causal)
//   A'_l  = 1/2 (Attn(A~'_l, R) + Attn(A~'_l, B))
//   H~'_l = LN(A~'_l + A'_l)
//   H'_l  = LN(H~'_l + FFN(H~'_l))
// With fusion off the B terms disappear and both reduce to the standard
// post-norm Transformer. B is mapped to the model width by a learned linear
// adapter shared by all layers; B itself never receives a gradient.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtigen/autodiff.hpp"
#include "dtigen/error.hpp"
#include "dtigen/linearize.hpp"
#include "dtigen/params.hpp"
#include "dtigen/rng.hpp"

namespace dtigen {

struct ModelConfig {
  int layers = 2;
  int dim = 256;
  int heads = 4;
  int ffn_dim = 1024;
  double dropout = 0.2;
  double attention_dropout = 0.1;
  double label_smoothing = 0.2;
  TripletOrder order = TripletOrder::kDIT;
  bool fusion = true;
  // Test mode: the feature attention reuses the self/cross attention weights.
  bool share_fusion_params = false;
  int max_source_len = 512;
  int max_target_len = 128;
  int vocab_size = 0;
  int feature_dim = 0;  // 0 means "same as dim"

  int effective_feature_dim() const { return feature_dim > 0 ? feature_dim : dim; }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
    if (layers < 1) fail("layers must be >= 1");
    if (dim < 1 || heads < 1 || dim % heads != 0) fail("dim must be divisible by heads");
    if (ffn_dim < 1) fail("ffn_dim must be >= 1");
    if (dropout < 0 || dropout >= 1) fail("dropout must be in [0, 1)");
    if (attention_dropout < 0 || attention_dropout >= 1) fail("attention_dropout must be in [0, 1)");
    if (label_smoothing < 0 || label_smoothing >= 1) fail("label_smoothing must be in [0, 1)");
    if (max_source_len < 2 || max_target_len < 2) fail("max lengths must be >= 2");
    if (vocab_size < 2) fail("vocab_size must be >= 2");
    if (feature_dim < 0) fail("feature_dim must be >= 0");
  }
};

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["layers"] = c.layers;
  j["dim"] = c.dim;
  j["heads"] = c.heads;
  j["ffn_dim"] = c.ffn_dim;
  j["dropout"] = c.dropout;
  j["attention_dropout"] = c.attention_dropout;
  j["label_smoothing"] = c.label_smoothing;
  j["order"] = to_string(c.order);
  j["fusion"] = c.fusion;
  j["share_fusion_params"] = c.share_fusion_params;
  j["max_source_len"] = c.max_source_len;
  j["max_target_len"] = c.max_target_len;
  j["vocab_size"] = c.vocab_size;
  j["feature_dim"] = c.feature_dim;
  return j;
}

/// Reads the fields present in `j` over the defaults in `base`.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {}) {
  auto get = [&](const char* k, auto& dst) {
    if (auto it = j.find(k); it != j.end()) dst = it->get<std::decay_t<decltype(dst)>>();
  };
  get("layers", base.layers);
  get("dim", base.dim);
  get("heads", base.heads);
  get("ffn_dim", base.ffn_dim);
  get("dropout", base.dropout);
  get("attention_dropout", base.attention_dropout);
  get("label_smoothing", base.label_smoothing);
  if (auto it = j.find("order"); it != j.end()) base.order = parse_order(it->get<std::string>());
  get("fusion", base.fusion);
  get("share_fusion_params", base.share_fusion_params);
  get("max_source_len", base.max_source_len);
  get("max_target_len", base.max_target_len);
  get("vocab_size", base.vocab_size);
  get("feature_dim", base.feature_dim);
  return base;
}

/// Dropout switch and randomness for one forward pass.
struct RunMode {
  bool training = false;
  Rng* rng = nullptr;

  double p(double rate) const { return training && rng ? rate : 0.0; }
};

/// Fixed sinusoidal position table, rows = positions.
template <typename T>
Mat<T> sinusoidal_positions(int length, int dim) {
  Mat<T> pe(length, dim);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
      const double a = pos * rate;
      pe(pos, i) = static_cast<T>((i % 2 == 0) ? std::sin(a) : std::cos(a));
    }
  }
  return pe;
}

namespace nn {

struct AttentionIdx {
  int wq, bq, wk, bk, wv, bv, wo, bo;
};
struct NormIdx {
  int gain, bias;
};
struct FfnIdx {
  int w1, b1, w2, b2;
};

template <typename T>
AttentionIdx add_attention(ParamStore<T>& ps, const std::string& prefix, int dim, Rng& rng) {
  AttentionIdx a{};
  a.wq = ps.add_xavier(prefix + ".wq", dim, dim, rng);
  a.bq = ps.add_zeros(prefix + ".bq", 1, dim);
  a.wk = ps.add_xavier(prefix + ".wk", dim, dim, rng);
  a.bk = ps.add_zeros(prefix + ".bk", 1, dim);
  a.wv = ps.add_xavier(prefix + ".wv", dim, dim, rng);
  a.bv = ps.add_zeros(prefix + ".bv", 1, dim);
  a.wo = ps.add_xavier(prefix + ".wo", dim, dim, rng);
  a.bo = ps.add_zeros(prefix + ".bo", 1, dim);
  return a;
}

template <typename T>
NormIdx add_norm(ParamStore<T>& ps, const std::string& prefix, int dim) {
  return {ps.add_ones(prefix + ".gain", 1, dim), ps.add_zeros(prefix + ".bias", 1, dim)};
}

template <typename T>
FfnIdx add_ffn(ParamStore<T>& ps, const std::string& prefix, int dim, int hidden, Rng& rng) {
  FfnIdx f{};
  f.w1 = ps.add_xavier(prefix + ".w1", dim, hidden, rng);
  f.b1 = ps.add_zeros(prefix + ".b1", 1, hidden);
  f.w2 = ps.add_xavier(prefix + ".w2", hidden, dim, rng);
  f.b2 = ps.add_zeros(prefix + ".b2", 1, dim);
  return f;
}

template <typename T>
Var linear(Binder<T>& p, Var x, int w, int b) {
  auto& t = p.tape();
  return t.add_row(t.matmul(x, p(w)), p(b));
}

/// Multi-head attention: queries from x, keys and values from kv.
template <typename T>
Var attend(Binder<T>& p, const AttentionIdx& a, Var x, Var kv, int heads, bool causal,
           double attn_dropout, const RunMode& mode) {
  auto& t = p.tape();
  const Var q = linear(p, x, a.wq, a.bq);
  const Var k = linear(p, kv, a.wk, a.bk);
  const Var v = linear(p, kv, a.wv, a.bv);
  const Var o = t.attention(q, k, v, heads, causal, mode.p(attn_dropout), mode.rng);
  return linear(p, o, a.wo, a.bo);
}

template <typename T>
Var norm(Binder<T>& p, const NormIdx& n, Var x) {
  return p.tape().layer_norm(x, p(n.gain), p(n.bias));
}

template <typename T>
Var ffn(Binder<T>& p, const FfnIdx& f, Var x) {
  auto& t = p.tape();
  return linear(p, t.relu(linear(p, x, f.w1, f.b1)), f.w2, f.b2);
}

}  // namespace nn

template <typename T>
class Transformer {
 public:
  struct EncoderLayer {
    nn::AttentionIdx self;
    nn::AttentionIdx feat;
    nn::NormIdx norm1;
    nn::FfnIdx ffn;
    nn::NormIdx norm2;
  };
  struct DecoderLayer {
    nn::AttentionIdx self;
    nn::NormIdx norm1;
    nn::AttentionIdx cross;
    nn::AttentionIdx feat;
    nn::NormIdx norm2;
    nn::FfnIdx ffn;
    nn::NormIdx norm3;
  };

  Transformer(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(mix_seed(seed, 0x5eed));
    const int d = config_.dim;
    const int v = config_.vocab_size;
    const double emb_std = 1.0 / std::sqrt(static_cast<double>(d));
    src_embed_ = params_.add_normal("src_embed", v, d, emb_std, rng);
    tgt_embed_ = params_.add_normal("tgt_embed", v, d, emb_std, rng);
    if (config_.fusion && !config_.share_fusion_params) {
      adapter_w_ = params_.add_xavier("feature_adapter.w", config_.effective_feature_dim(), d, rng);
      adapter_b_ = params_.add_zeros("feature_adapter.b", 1, d);
    }
    for (int l = 0; l < config_.layers; ++l) {
      const std::string pre = "encoder." + std::to_string(l);
      EncoderLayer e{};
      e.self = nn::add_attention(params_, pre + ".self_attn", d, rng);
      e.feat = fusion_attention(pre + ".feature_attn", e.self, rng);
      e.norm1 = nn::add_norm(params_, pre + ".norm1", d);
      e.ffn = nn::add_ffn(params_, pre + ".ffn", d, config_.ffn_dim, rng);
      e.norm2 = nn::add_norm(params_, pre + ".norm2", d);
      enc_.push_back(e);
    }
    for (int l = 0; l < config_.layers; ++l) {
      const std::string pre = "decoder." + std::to_string(l);
      DecoderLayer e{};
      e.self = nn::add_attention(params_, pre + ".self_attn", d, rng);
      e.norm1 = nn::add_norm(params_, pre + ".norm1", d);
      e.cross = nn::add_attention(params_, pre + ".cross_attn", d, rng);
      e.feat = fusion_attention(pre + ".feature_attn", e.cross, rng);
      e.norm2 = nn::add_norm(params_, pre + ".norm2", d);
      e.ffn = nn::add_ffn(params_, pre + ".ffn", d, config_.ffn_dim, rng);
      e.norm3 = nn::add_norm(params_, pre + ".norm3", d);
      dec_.push_back(e);
    }
    out_w_ = params_.add_xavier("output.w", d, v, rng);
    out_b_ = params_.add_zeros("output.b", 1, v);
    src_pos_ = sinusoidal_positions<T>(config_.max_source_len, d);
    tgt_pos_ = sinusoidal_positions<T>(config_.max_target_len, d);
  }

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  /// Maps B (n x feature_dim) to model width. In shared test mode B must
  /// already have model width and is used as is.
  Var adapt_features(Binder<T>& p, const Mat<T>& features) const {
    auto& t = p.tape();
    const Var b = t.constant(features);
    if (config_.share_fusion_params) {
      if (features.cols() != config_.dim) throw Error("shared fusion mode needs feature_dim == dim");
      return b;
    }
    if (features.cols() != config_.effective_feature_dim()) {
      throw Error("feature matrix has " + std::to_string(features.cols()) + " columns, expected " +
                  std::to_string(config_.effective_feature_dim()));
    }
    return nn::linear(p, b, adapter_w_, adapter_b_);
  }

  Var embed_source(Binder<T>& p, const std::vector<int>& ids, const RunMode& mode) const {
    return embed(p, src_embed_, src_pos_, ids, mode);
  }

  /// Attention sublayer output A_l of encoder layer l (before the residual).
  Var encoder_attention(Binder<T>& p, int layer, Var h, Var feats, const RunMode& mode) const {
    const auto& e = enc_[static_cast<std::size_t>(layer)];
    auto& t = p.tape();
    const Var self = nn::attend(p, e.self, h, h, config_.heads, false, config_.attention_dropout, mode);
    if (!config_.fusion) return self;
    const Var feat = nn::attend(p, e.feat, h, feats, config_.heads, false, config_.attention_dropout, mode);
    return t.scale(t.add(self, feat), T(0.5));
  }

  Var encoder_layer(Binder<T>& p, int layer, Var h, Var feats, const RunMode& mode) const {
    const auto& e = enc_[static_cast<std::size_t>(layer)];
    auto& t = p.tape();
    const Var a = t.dropout(encoder_attention(p, layer, h, feats, mode), mode.p(config_.dropout), *rng_or_dummy(mode));
    const Var h1 = nn::norm(p, e.norm1, t.add(h, a));
    const Var f = t.dropout(nn::ffn(p, e.ffn, h1), mode.p(config_.dropout), *rng_or_dummy(mode));
    return nn::norm(p, e.norm2, t.add(h1, f));
  }

  /// R = H_L for a source sequence. `feats` is the adapted feature matrix
  /// (ignored when fusion is off).
  Var encode(Binder<T>& p, const std::vector<int>& src, Var feats, const RunMode& mode) const {
    if (config_.fusion) {
      if (!feats.valid()) throw Error("encode: fusion is on but no feature matrix was given");
      if (p.tape().value(feats).rows() != static_cast<Eigen::Index>(src.size())) {
        throw Error("encode: feature matrix has " + std::to_string(p.tape().value(feats).rows()) +
                    " rows for a source of length " + std::to_string(src.size()));
      }
    }
    Var h = embed_source(p, src, mode);
    for (int l = 0; l < config_.layers; ++l) h = encoder_layer(p, l, h, feats, mode);
    return h;
  }

  /// Log-probabilities over the vocabulary for every target position.
  Var decode(Binder<T>& p, const std::vector<int>& tgt_in, Var memory, Var feats,
             const RunMode& mode) const {
    auto& t = p.tape();
    Var y = embed(p, tgt_embed_, tgt_pos_, tgt_in, mode);
    const double pd = mode.p(config_.dropout);
    for (const auto& e : dec_) {
      const Var s = nn::attend(p, e.self, y, y, config_.heads, true, config_.attention_dropout, mode);
      const Var a1 = nn::norm(p, e.norm1, t.add(y, t.dropout(s, pd, *rng_or_dummy(mode))));
      Var a = nn::attend(p, e.cross, a1, memory, config_.heads, false, config_.attention_dropout, mode);
      if (config_.fusion) {
        const Var f = nn::attend(p, e.feat, a1, feats, config_.heads, false, config_.attention_dropout, mode);
        a = t.scale(t.add(a, f), T(0.5));
      }
      const Var h = nn::norm(p, e.norm2, t.add(a1, t.dropout(a, pd, *rng_or_dummy(mode))));
      const Var f = t.dropout(nn::ffn(p, e.ffn, h), pd, *rng_or_dummy(mode));
      y = nn::norm(p, e.norm3, t.add(h, f));
    }
    return t.log_softmax(nn::linear(p, y, out_w_, out_b_));
  }

  /// Summed label-smoothed NLL of one (source, B, target) example, where
  /// `target` excludes SOS and includes EOS. Also returns the token count.
  Var example_loss(Binder<T>& p, const std::vector<int>& src, const Mat<T>& features,
                   const std::vector<int>& target, int sos_id, const RunMode& mode) const {
    const Var feats = config_.fusion ? adapt_features(p, features) : Var{};
    const Var memory = encode(p, src, feats, mode);
    std::vector<int> tgt_in;
    tgt_in.reserve(target.size());
    tgt_in.push_back(sos_id);
    for (std::size_t i = 0; i + 1 < target.size(); ++i) tgt_in.push_back(target[i]);
    const Var lp = decode(p, tgt_in, memory, feats, mode);
    return p.tape().smoothed_nll(lp, target, static_cast<T>(config_.label_smoothing));
  }

  // ---- inference helpers ---------------------------------------------------

  /// Encoder output and adapted features for repeated decoding.
  struct Encoded {
    Mat<T> memory;
    Mat<T> feats;
  };

  Encoded encode_value(const std::vector<int>& src, const Mat<T>& features) const {
    Tape<T> tape;
    Binder<T> p(tape, params_);
    RunMode mode;
    const Var feats = config_.fusion ? adapt_features(p, features) : Var{};
    const Var memory = encode(p, src, feats, mode);
    Encoded out;
    out.memory = tape.value(memory);
    if (feats.valid()) out.feats = tape.value(feats);
    return out;
  }

  Mat<T> decode_logprobs(const std::vector<int>& tgt_in, const Encoded& enc) const {
    Tape<T> tape;
    Binder<T> p(tape, params_);
    RunMode mode;
    const Var memory = tape.constant(enc.memory);
    const Var feats = config_.fusion ? tape.constant(enc.feats) : Var{};
    return tape.value(decode(p, tgt_in, memory, feats, mode));
  }

 private:
  nn::AttentionIdx fusion_attention(const std::string& name, const nn::AttentionIdx& shared, Rng& rng) {
    if (!config_.fusion) return {};
    if (config_.share_fusion_params) return shared;
    return nn::add_attention(params_, name, config_.dim, rng);
  }

  Var embed(Binder<T>& p, int table, const Mat<T>& pos, const std::vector<int>& ids,
            const RunMode& mode) const {
    if (ids.empty()) throw Error("embed: empty sequence");
    if (static_cast<Eigen::Index>(ids.size()) > pos.rows()) {
      throw Error("sequence of length " + std::to_string(ids.size()) + " exceeds max length " +
                  std::to_string(pos.rows()));
    }
    auto& t = p.tape();
    const Var e = t.scale(t.embed(p(table), ids), static_cast<T>(std::sqrt(static_cast<double>(config_.dim))));
    const Var x = t.add(e, t.constant(pos.topRows(static_cast<Eigen::Index>(ids.size()))));
    return t.dropout(x, mode.p(config_.dropout), *rng_or_dummy(mode));
  }

  static Rng* rng_or_dummy(const RunMode& mode) {
    static thread_local Rng dummy(0);
    return mode.rng ? mode.rng : &dummy;
  }

  ModelConfig config_;
  ParamStore<T> params_;
  int src_embed_ = -1;
  int tgt_embed_ = -1;
  int adapter_w_ = -1;
  int adapter_b_ = -1;
  int out_w_ = -1;
  int out_b_ = -1;
  std::vector<EncoderLayer> enc_;
  std::vector<DecoderLayer> dec_;
  Mat<T> src_pos_;
  Mat<T> tgt_pos_;
};

}  // namespace dtigen
