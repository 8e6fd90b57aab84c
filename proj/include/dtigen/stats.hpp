// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dtigen/corpus.hpp"
#include "dtigen/metrics.hpp"
#include "dtigen/text.hpp"

namespace dtigen {

/// Sentences in a piece of text: a sentence ends at a run of '.', '!' or
/// '?' followed by whitespace or the end of the text, and needs at least one
/// other non-space character. Unterminated trailing text counts as one.
inline std::size_t count_sentences(std::string_view text) {
  std::size_t n = 0;
  bool open = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '.' || c == '!' || c == '?') {
      if (open && (i + 1 == text.size() || is_space(text[i + 1]))) {
        ++n;
        open = false;
      }
    } else if (!is_space(c)) {
      open = true;
    }
  }
  return n + (open ? 1 : 0);
}

/// The title is one sentence when it has any content.
inline std::size_t count_sentences(const Document& doc) {
  const bool title = !split_whitespace(doc.title).empty();
  return (title ? 1 : 0) + count_sentences(doc.abstract);
}

inline std::size_t count_words(const Document& doc) {
  return split_whitespace(doc.title).size() + split_whitespace(doc.abstract).size();
}

struct CorpusStats {
  std::size_t documents = 0;
  std::size_t sentences = 0;
  std::size_t words = 0;
  std::size_t triplets = 0;
  std::size_t distinct_drugs = 0;
  std::size_t distinct_targets = 0;
  std::size_t distinct_interactions = 0;
  std::map<std::string, std::size_t> interactions;  // normalized name -> triplet count
  DistanceSummary min_dt;
};

inline CorpusStats corpus_stats(const std::vector<LabeledExample>& corpus, const Lexicons& lex,
                                const EditBudget& budget = {}) {
  CorpusStats s;
  std::set<std::string> drugs, targets;
  for (const auto& ex : corpus) {
    ++s.documents;
    s.sentences += count_sentences(ex.document);
    s.words += count_words(ex.document);
    for (const auto& [key, t] : ex.triplets.by_key()) {
      ++s.triplets;
      drugs.insert(key[0]);
      targets.insert(key[1]);
      ++s.interactions[key[2]];
    }
  }
  s.distinct_drugs = drugs.size();
  s.distinct_targets = targets.size();
  s.distinct_interactions = s.interactions.size();
  s.min_dt = average_min_dt(corpus, lex, budget);
  return s;
}

inline nlohmann::ordered_json to_json(const CorpusStats& s) {
  nlohmann::ordered_json j;
  j["documents"] = s.documents;
  j["sentences"] = s.sentences;
  j["words"] = s.words;
  j["triplets"] = s.triplets;
  j["distinct_drugs"] = s.distinct_drugs;
  j["distinct_targets"] = s.distinct_targets;
  j["distinct_interactions"] = s.distinct_interactions;
  auto& h = j["interaction_histogram"] = nlohmann::ordered_json::object();
  for (const auto& [name, n] : s.interactions) h[name] = n;
  j["min_dt_distance"] = {{"average", s.min_dt.mean()},
                          {"computable", s.min_dt.computable},
                          {"missing", s.min_dt.missing}};
  return j;
}

}  // namespace dtigen
