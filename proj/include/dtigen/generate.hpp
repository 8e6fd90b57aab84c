// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <limits>
#include <vector>

#include "dtigen/bpe.hpp"
#include "dtigen/corpus.hpp"
#include "dtigen/features.hpp"
#include "dtigen/linearize.hpp"
#include "dtigen/model.hpp"
#include "dtigen/parallel.hpp"

namespace dtigen {

/// Source ids of a document: BPE of title + abstract, cut to leave room for
/// the closing EOS.
inline std::vector<int> source_ids(const BpeModel& bpe, const Document& doc, int max_len) {
  std::vector<int> ids = bpe.encode(doc.text());
  if (static_cast<int>(ids.size()) > max_len - 1) ids.resize(static_cast<std::size_t>(max_len - 1));
  ids.push_back(bpe.eos_id());
  return ids;
}

/// Target ids: BPE of the linearized triplets (in key order) plus EOS.
/// Returns false in `*fits` when the sequence had to be cut.
inline std::vector<int> target_ids(const BpeModel& bpe, const TripletSet& triplets, TripletOrder order,
                                   int max_len, bool* fits = nullptr) {
  std::vector<int> ids = bpe.encode(serialize(triplets, order));
  const bool ok = static_cast<int>(ids.size()) <= max_len - 1;
  if (!ok) ids.resize(static_cast<std::size_t>(max_len - 1));
  ids.push_back(bpe.eos_id());
  if (fits) *fits = ok;
  return ids;
}

struct DecodeConfig {
  int beam = 1;
  int max_len = 0;  // generated tokens; 0 means the model's max target length
};

namespace detail {

template <typename T>
int decode_limit(const Transformer<T>& model, const DecodeConfig& cfg) {
  const int cap = model.config().max_target_len;
  return cfg.max_len > 0 ? std::min(cfg.max_len, cap) : cap;
}

}  // namespace detail

/// Argmax decoding; ties go to the lowest id. Returns tokens without EOS.
template <typename T>
std::vector<int> greedy_decode(const Transformer<T>& model, const typename Transformer<T>::Encoded& enc,
                               int sos, int eos, const DecodeConfig& cfg = {}) {
  const int limit = detail::decode_limit(model, cfg);
  std::vector<int> prefix{sos};
  for (int step = 0; step < limit; ++step) {
    const Mat<T> lp = model.decode_logprobs(prefix, enc);
    Eigen::Index best = 0;
    lp.row(lp.rows() - 1).maxCoeff(&best);
    if (static_cast<int>(best) == eos) break;
    prefix.push_back(static_cast<int>(best));
  }
  return {prefix.begin() + 1, prefix.end()};
}

/// Beam search over summed log-probabilities (no length normalization).
/// Candidates are ranked by score, then parent rank, then token id, so a
/// beam of 1 follows the greedy path exactly.
template <typename T>
std::vector<int> beam_decode(const Transformer<T>& model, const typename Transformer<T>::Encoded& enc,
                             int sos, int eos, const DecodeConfig& cfg) {
  if (cfg.beam < 1) throw ConfigError("beam width must be >= 1");
  if (cfg.beam == 1) return greedy_decode(model, enc, sos, eos, cfg);
  struct Hyp {
    std::vector<int> tokens;
    double score;
  };
  struct Cand {
    double score;
    std::size_t parent;
    int token;
  };
  const int limit = detail::decode_limit(model, cfg);
  const std::size_t width = static_cast<std::size_t>(cfg.beam);
  std::vector<Hyp> alive{{{sos}, 0.0}};
  std::vector<Hyp> finished;
  for (int step = 0; step < limit && !alive.empty(); ++step) {
    std::vector<Cand> cands;
    for (std::size_t h = 0; h < alive.size(); ++h) {
      const Mat<T> lp = model.decode_logprobs(alive[h].tokens, enc);
      const auto row = lp.row(lp.rows() - 1);
      std::vector<int> ids(static_cast<std::size_t>(row.size()));
      for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
      const std::size_t k = std::min(width, ids.size());
      std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                        [&](int a, int b) { return row(a) > row(b) || (row(a) == row(b) && a < b); });
      for (std::size_t i = 0; i < k; ++i) {
        cands.push_back({alive[h].score + static_cast<double>(row(ids[i])), h, ids[i]});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.token < b.token;
    });
    std::vector<Hyp> next;
    for (std::size_t i = 0; i < std::min(width, cands.size()); ++i) {
      const auto& c = cands[i];
      Hyp h{alive[c.parent].tokens, c.score};
      if (c.token == eos) {
        finished.push_back(std::move(h));
      } else {
        h.tokens.push_back(c.token);
        next.push_back(std::move(h));
      }
    }
    alive = std::move(next);
    if (!finished.empty()) {
      double best_done = -std::numeric_limits<double>::infinity();
      for (const auto& f : finished) best_done = std::max(best_done, f.score);
      double best_alive = -std::numeric_limits<double>::infinity();
      for (const auto& a : alive) best_alive = std::max(best_alive, a.score);
      // Scores only decrease with length, so no live hypothesis can win.
      if (best_done >= best_alive) break;
    }
  }
  const Hyp* best = nullptr;
  for (const auto& f : finished) {
    if (!best || f.score > best->score) best = &f;
  }
  for (const auto& a : alive) {
    if (!best || a.score > best->score) best = &a;
  }
  return {best->tokens.begin() + 1, best->tokens.end()};
}

template <typename T>
std::vector<int> decode_tokens(const Transformer<T>& model, const typename Transformer<T>::Encoded& enc,
                               int sos, int eos, const DecodeConfig& cfg) {
  return cfg.beam <= 1 ? greedy_decode(model, enc, sos, eos, cfg) : beam_decode(model, enc, sos, eos, cfg);
}

/// Generated triplet set for one document, parsed with the model's order.
template <typename T>
TripletSet generate_triplets(const Transformer<T>& model, const FeatureProvider<T>& provider,
                             const BpeModel& bpe, const Document& doc, const DecodeConfig& cfg = {},
                             std::string* text_out = nullptr) {
  const auto src = source_ids(bpe, doc, model.config().max_source_len);
  const Mat<T> feats = model.config().fusion ? provider.features(src) : Mat<T>();
  const auto enc = model.encode_value(src, feats);
  const auto ids = decode_tokens(model, enc, bpe.sos_id(), bpe.eos_id(), cfg);
  const std::string text = bpe.decode(ids);
  if (text_out) *text_out = text;
  return parse(text, model.config().order);
}

/// Generated triplets for every document, in input order.
template <typename T>
std::vector<LabeledExample> predict_corpus(const Transformer<T>& model, const FeatureProvider<T>& provider,
                                           const BpeModel& bpe, const std::vector<Document>& docs,
                                           const DecodeConfig& cfg = {}) {
  std::vector<LabeledExample> out(docs.size());
  parallel_for(docs.size(), [&](std::size_t i) {
    out[i].document = docs[i];
    out[i].triplets = generate_triplets(model, provider, bpe, docs[i], cfg);
  });
  return out;
}

}  // namespace dtigen
