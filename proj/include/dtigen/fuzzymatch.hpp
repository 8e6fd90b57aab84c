// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

// Levenshtein retrieval of a query and its synonyms inside a document, the
// six matching patterns (P1-P6) that grade how well a document supports a
// query, and the score-based filtration of (document, triplets) pairs.

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dtigen/corpus.hpp"
#include "dtigen/error.hpp"
#include "dtigen/rng.hpp"
#include "dtigen/text.hpp"

namespace dtigen {

// ---------------------------------------------------------------------------
// String primitives

inline int levenshtein(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<int> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    int diag = row[0];
    row[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int up = row[j];
      const int sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      row[j] = std::min({up + 1, row[j - 1] + 1, sub});
      diag = up;
    }
  }
  return row[b.size()];
}

/// Levenshtein distance if it is <= limit, otherwise limit + 1. Only the
/// diagonal band of width 2*limit+1 is evaluated.
inline int bounded_levenshtein(std::string_view a, std::string_view b, int limit) {
  const int la = static_cast<int>(a.size());
  const int lb = static_cast<int>(b.size());
  if (std::abs(la - lb) > limit) return limit + 1;
  if (limit == 0) return a == b ? 0 : 1;
  constexpr int kInf = 1 << 28;
  std::vector<int> prev(static_cast<std::size_t>(lb) + 1, kInf);
  std::vector<int> cur(static_cast<std::size_t>(lb) + 1, kInf);
  for (int j = 0; j <= std::min(lb, limit); ++j) prev[static_cast<std::size_t>(j)] = j;
  for (int i = 1; i <= la; ++i) {
    std::fill(cur.begin(), cur.end(), kInf);
    const int lo = std::max(1, i - limit);
    const int hi = std::min(lb, i + limit);
    if (i <= limit) cur[0] = i;
    int best = cur[0];
    for (int j = lo; j <= hi; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      const int sub = prev[uj - 1] + (a[static_cast<std::size_t>(i - 1)] == b[uj - 1] ? 0 : 1);
      cur[uj] = std::min({prev[uj] + 1, cur[uj - 1] + 1, sub});
      best = std::min(best, cur[uj]);
    }
    if (best > limit) return limit + 1;
    std::swap(prev, cur);
  }
  return std::min(prev[static_cast<std::size_t>(lb)], limit + 1);
}

inline std::size_t longest_common_substring(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1, 0);
  std::size_t best = 0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = (a[i - 1] == b[j - 1]) ? diag + 1 : 0;
      best = std::max(best, row[j]);
      diag = up;
    }
  }
  return best;
}

/// Strips one inflectional suffix (+ing, +ed, +s) and then a trailing "e",
/// so "activate", "activates", "activated" and "activating" share a stem.
inline std::string inflection_stem(std::string_view s) {
  std::string out(s);
  auto ends = [&](std::string_view suf) {
    return out.size() >= suf.size() &&
           std::string_view(out).substr(out.size() - suf.size()) == suf;
  };
  if (ends("ing") && out.size() >= 6) {
    out.resize(out.size() - 3);
  } else if (ends("ed") && out.size() >= 5) {
    out.resize(out.size() - 2);
  } else if (ends("s") && !ends("ss") && out.size() >= 4) {
    out.resize(out.size() - 1);
  }
  if (ends("e") && out.size() >= 4) out.resize(out.size() - 1);
  return out;
}

/// True when a and b are distinct inflections (+s, +ed, +ing) of one stem.
/// Both arguments are expected base-normalized.
inline bool is_variant(std::string_view a, std::string_view b) {
  if (a == b) return false;
  const std::string sa = inflection_stem(a);
  return sa.size() >= 3 && sa == inflection_stem(b);
}

/// Number of whitespace tokens shared by a and b (multiset intersection).
inline std::size_t common_words(std::string_view a, std::string_view b) {
  auto wa = split_whitespace(normalize_text(a));
  auto wb = split_whitespace(normalize_text(b));
  std::sort(wa.begin(), wa.end());
  std::sort(wb.begin(), wb.end());
  std::vector<std::string> both;
  std::set_intersection(wa.begin(), wa.end(), wb.begin(), wb.end(),
                        std::back_inserter(both));
  return both.size();
}

// ---------------------------------------------------------------------------
// Retrieval

struct MatchSpan {
  std::size_t start = 0;  // byte offset into Document::text()
  std::size_t end = 0;    // one past the last byte
  std::string text;

  bool operator==(const MatchSpan&) const = default;
};

/// Maximum edit distance admitted for a query of a given byte length:
/// floor(len / divisor), at least 1 once len >= min_length, 0 below.
struct EditBudget {
  int divisor = 8;
  int min_length = 4;

  int operator()(std::size_t len) const {
    if (static_cast<int>(len) < min_length) return 0;
    return std::max(1, static_cast<int>(len) / divisor);
  }
};

/// Words of a document with byte offsets, plus precomputed normalized windows
/// of consecutive words. Words are whitespace tokens with leading and trailing
/// punctuation removed.
class DocumentIndex {
 public:
  struct Word {
    std::size_t start;
    std::size_t end;
  };

  explicit DocumentIndex(std::string text, std::size_t max_cached_window = 8)
      : text_(std::move(text)) {
    std::size_t i = 0;
    while (i < text_.size()) {
      while (i < text_.size() && is_space(text_[i])) ++i;
      std::size_t j = i;
      while (j < text_.size() && !is_space(text_[j])) ++j;
      std::size_t s = i;
      std::size_t e = j;
      while (s < e && is_ascii_punct(text_[s])) ++s;
      while (e > s && is_ascii_punct(text_[e - 1])) --e;
      if (e > s) words_.push_back({s, e});
      i = j;
    }
    windows_.resize(max_cached_window + 1);
    stems_.resize(max_cached_window + 1);
    for (std::size_t w = 1; w <= max_cached_window && w <= words_.size(); ++w) {
      const std::size_t n = words_.size() - w + 1;
      windows_[w].reserve(n);
      stems_[w].reserve(n);
      for (std::size_t k = 0; k < n; ++k) {
        windows_[w].push_back(make_window(k, w));
        stems_[w].push_back(inflection_stem(windows_[w].back()));
      }
    }
  }

  explicit DocumentIndex(const Document& doc) : DocumentIndex(doc.text()) {}

  const std::string& text() const { return text_; }
  const std::vector<Word>& words() const { return words_; }

  /// Normalized text of `width` words starting at word `first`.
  std::string window(std::size_t first, std::size_t width) const {
    if (width < windows_.size() && first < windows_[width].size()) {
      return windows_[width][first];
    }
    return make_window(first, width);
  }

  std::string window_stem(std::size_t first, std::size_t width) const {
    if (width < stems_.size() && first < stems_[width].size()) {
      return stems_[width][first];
    }
    return inflection_stem(make_window(first, width));
  }

  /// Index of the whitespace token that contains byte offset `pos`.
  std::size_t token_index(std::size_t pos) const {
    std::size_t count = 0;
    bool in_token = false;
    for (std::size_t i = 0; i <= pos && i < text_.size(); ++i) {
      const bool sp = is_space(text_[i]);
      if (!sp && !in_token) ++count;
      in_token = !sp;
    }
    return count == 0 ? 0 : count - 1;
  }

 private:
  std::string make_window(std::size_t first, std::size_t width) const {
    const std::size_t s = words_[first].start;
    const std::size_t e = words_[first + width - 1].end;
    return normalize_text(std::string_view(text_).substr(s, e - s));
  }

  std::string text_;
  std::vector<Word> words_;
  std::vector<std::vector<std::string>> windows_;
  std::vector<std::vector<std::string>> stems_;
};

namespace detail {

inline std::vector<std::string> alias_list(std::string_view query,
                                           const std::vector<std::string>& synonyms) {
  std::vector<std::string> out;
  auto push = [&](std::string_view s) {
    std::string n = normalize_text(s);
    if (n.empty()) return;
    if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(std::move(n));
  };
  push(query);
  for (const auto& s : synonyms) push(s);
  return out;
}

struct Candidate {
  std::size_t start;
  std::size_t end;
  int distance;
};

}  // namespace detail

/// All maximal non-overlapping spans of the document whose normalized text is
/// within the edit budget of the query or one of its synonyms, or is a
/// +s/+ed/+ing variant of one. Windows of n-1, n and n+1 words are tried,
/// where n is the word count of the alias. Overlaps are resolved by smaller
/// distance, then longer span, then earlier start. Output is sorted by start.
inline std::vector<MatchSpan> retrieve(std::string_view query,
                                       const std::vector<std::string>& synonyms,
                                       const DocumentIndex& index,
                                       const EditBudget& budget = {}) {
  const auto aliases = detail::alias_list(query, synonyms);
  const auto& words = index.words();
  std::vector<detail::Candidate> cands;
  for (const auto& alias : aliases) {
    const int limit = budget(alias.size());
    const std::string alias_stem = inflection_stem(alias);
    const std::size_t n = split_whitespace(alias).size();
    for (std::size_t w = (n > 1 ? n - 1 : 1); w <= n + 1; ++w) {
      if (w > words.size()) break;
      for (std::size_t i = 0; i + w <= words.size(); ++i) {
        const std::string win = index.window(i, w);
        int d = bounded_levenshtein(win, alias, limit);
        if (d > limit) {
          if (win == alias || alias_stem.size() < 3 ||
              index.window_stem(i, w) != alias_stem) {
            continue;
          }
          d = levenshtein(win, alias);
        }
        cands.push_back({words[i].start, words[i + w - 1].end, d});
      }
    }
  }
  std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    const auto la = a.end - a.start;
    const auto lb = b.end - b.start;
    if (la != lb) return la > lb;
    return a.start < b.start;
  });
  std::vector<detail::Candidate> chosen;
  for (const auto& c : cands) {
    const bool overlaps = std::any_of(chosen.begin(), chosen.end(), [&](const auto& o) {
      return c.start < o.end && o.start < c.end;
    });
    if (!overlaps) chosen.push_back(c);
  }
  std::sort(chosen.begin(), chosen.end(),
            [](const auto& a, const auto& b) { return a.start < b.start; });
  std::vector<MatchSpan> out;
  out.reserve(chosen.size());
  for (const auto& c : chosen) {
    out.push_back({c.start, c.end, index.text().substr(c.start, c.end - c.start)});
  }
  return out;
}

inline std::vector<MatchSpan> retrieve(std::string_view query,
                                       const std::vector<std::string>& synonyms,
                                       const Document& doc,
                                       const EditBudget& budget = {}) {
  return retrieve(query, synonyms, DocumentIndex(doc), budget);
}

// ---------------------------------------------------------------------------
// Pattern classification

enum class PatternCategory { kReliable, kPositive, kNegative };
enum class PatternRule { kP1, kP2, kP3, kP4, kP5, kP6, kNone };

struct PatternClass {
  PatternCategory category = PatternCategory::kNegative;
  PatternRule rule = PatternRule::kNone;

  bool operator==(const PatternClass&) const = default;
};

inline const char* to_string(PatternCategory c) {
  switch (c) {
    case PatternCategory::kReliable:
      return "reliable";
    case PatternCategory::kPositive:
      return "positive";
    case PatternCategory::kNegative:
      return "negative";
  }
  return "?";
}

inline const char* to_string(PatternRule r) {
  static constexpr const char* kNames[] = {"P1", "P2", "P3", "P4", "P5", "P6", "none"};
  return kNames[static_cast<int>(r)];
}

/// Words that carry no entity information when retrieved on their own.
inline bool is_meaningless_word(std::string_view w) {
  static const std::array<std::string_view, 12> kWords = {
      "other",   "others",   "unknown", "various", "several", "none",
      "misc",    "general", "unspecified", "n/a", "na", "etc"};
  const std::string n = normalize_text(w, NormalizeMode::kBase);
  return std::find(kWords.begin(), kWords.end(), n) != kWords.end();
}

/// Grades the retrieval result of a query. Rules are checked in the order
/// P1, P2 (reliable), P3, P4, P5 (positive); the first satisfied rule wins.
/// A rule holds if it holds against the query or any of its synonyms.
/// Otherwise the result is negative, tagged P6 when every span is shorter
/// than 8 characters or meaningless, and `none` when there is no span or the
/// spans merely fail all positive rules.
inline PatternClass classify(std::string_view query, const std::vector<MatchSpan>& spans,
                             const std::vector<std::string>& synonyms = {}) {
  if (spans.empty()) return {PatternCategory::kNegative, PatternRule::kNone};
  const auto aliases = detail::alias_list(query, synonyms);
  std::vector<std::string> rs;
  rs.reserve(spans.size());
  for (const auto& s : spans) rs.push_back(normalize_text(s.text));

  auto any_pair = [&](auto&& pred) {
    for (const auto& r : rs) {
      for (const auto& a : aliases) {
        if (pred(r, a)) return true;
      }
    }
    return false;
  };
  auto count_spans = [&](auto&& pred) {
    std::size_t n = 0;
    for (const auto& r : rs) {
      if (std::any_of(aliases.begin(), aliases.end(),
                      [&](const std::string& a) { return pred(r, a); })) {
        ++n;
      }
    }
    return n;
  };

  if (any_pair([](const std::string& r, const std::string& a) {
        return normalize_text(r, NormalizeMode::kPattern) ==
               normalize_text(a, NormalizeMode::kPattern);
      })) {
    return {PatternCategory::kReliable, PatternRule::kP1};
  }
  if (any_pair([](const std::string& r, const std::string& a) {
        return longest_common_substring(r, a) > 20 || common_words(r, a) >= 3;
      })) {
    return {PatternCategory::kReliable, PatternRule::kP2};
  }
  if (count_spans([](const std::string& r, const std::string& a) {
        return is_variant(r, a);
      }) >= 2) {
    return {PatternCategory::kPositive, PatternRule::kP3};
  }
  if (count_spans([](const std::string& r, const std::string& a) {
        if (longest_common_substring(r, a) > 8) return true;
        const auto longest = std::max(r.size(), a.size());
        return longest > 0 &&
               static_cast<double>(levenshtein(r, a)) / static_cast<double>(longest) <= 0.1;
      }) >= 2) {
    return {PatternCategory::kPositive, PatternRule::kP4};
  }
  if (spans.size() > 3) return {PatternCategory::kPositive, PatternRule::kP5};
  const bool all_weak = std::all_of(rs.begin(), rs.end(), [](const std::string& r) {
    return r.size() < 8 || is_meaningless_word(r);
  });
  return {PatternCategory::kNegative, all_weak ? PatternRule::kP6 : PatternRule::kNone};
}

/// Matching score of one query against one document: 5 / 1 / -1.
inline int phi(const PatternClass& c) {
  switch (c.category) {
    case PatternCategory::kReliable:
      return 5;
    case PatternCategory::kPositive:
      return 1;
    case PatternCategory::kNegative:
      return -1;
  }
  return -1;
}

struct MatchReport {
  std::string query;
  std::vector<MatchSpan> spans;
  PatternClass pattern;
  int phi = -1;
};

inline MatchReport match_query(std::string_view query, const std::vector<std::string>& synonyms,
                               const DocumentIndex& index, const EditBudget& budget = {}) {
  MatchReport rep;
  rep.query = std::string(query);
  rep.spans = retrieve(query, synonyms, index, budget);
  rep.pattern = classify(query, rep.spans, synonyms);
  rep.phi = phi(rep.pattern);
  return rep;
}

struct TripletMatch {
  std::array<MatchReport, 3> reports;  // drug, target, interaction
  int score = 0;
};

inline TripletMatch match_triplet(const DocumentIndex& index, const DtiTriplet& t,
                                  const Lexicons& lex, const EditBudget& budget = {}) {
  TripletMatch m;
  constexpr std::array<Field, 3> kFields = {Field::kDrug, Field::kTarget, Field::kInteraction};
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& q = field_of(t, kFields[k]);
    m.reports[k] = match_query(q, lex.of(kFields[k]).aliases(q), index, budget);
    m.score += m.reports[k].phi;
  }
  return m;
}

/// Sum of the drug, target and interaction match scores; in [-3, 15].
inline int triplet_score(const Document& doc, const DtiTriplet& t, const Lexicons& lex,
                         const EditBudget& budget = {}) {
  return match_triplet(DocumentIndex(doc), t, lex, budget).score;
}

// ---------------------------------------------------------------------------
// Corpus filtration

struct SplitSizes {
  std::size_t test = 0;
  std::size_t valid = 0;
  std::size_t train = 0;

  std::size_t total() const { return test + valid + train; }
};

struct ScoredExample {
  LabeledExample example;
  int score = 0;
};

struct FilteredSplits {
  std::vector<LabeledExample> test;
  std::vector<LabeledExample> valid;
  std::vector<LabeledExample> train;
  std::size_t n_input = 0;
  std::size_t n_negative = 0;  // removed for score < 0
};

/// Best triplet score of an example; examples without triplets score -3.
inline int example_score(const LabeledExample& ex, const Lexicons& lex,
                         const EditBudget& budget = {}) {
  const DocumentIndex index(ex.document);
  int best = -3;
  bool any = false;
  for (const auto& t : ex.triplets) {
    const int s = match_triplet(index, t, lex, budget).score;
    best = any ? std::max(best, s) : s;
    any = true;
  }
  return best;
}

/// Scores every example, drops those scoring below zero, orders the rest by
/// descending score (ties: document id, then a seeded shuffle inside each
/// equal-score block), keeps the first `top_k` and cuts test / valid / train
/// in that order with exactly the requested sizes.
inline FilteredSplits filter_and_split(const std::vector<LabeledExample>& pairs,
                                       const Lexicons& lex, std::size_t top_k,
                                       const SplitSizes& sizes, std::uint64_t seed,
                                       const EditBudget& budget = {}) {
  if (sizes.total() > top_k) {
    throw ConfigError("split sizes sum to " + std::to_string(sizes.total()) +
                      " which exceeds top_k " + std::to_string(top_k));
  }
  FilteredSplits out;
  out.n_input = pairs.size();
  std::vector<ScoredExample> kept;
  for (const auto& ex : pairs) {
    const int s = example_score(ex, lex, budget);
    if (s < 0) {
      ++out.n_negative;
      continue;
    }
    kept.push_back({ex, s});
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.example.document.id < b.example.document.id;
  });
  Rng rng(seed);
  for (std::size_t i = 0; i < kept.size();) {
    std::size_t j = i;
    while (j < kept.size() && kept[j].score == kept[i].score) ++j;
    for (std::size_t k = j - i; k > 1; --k) {
      std::swap(kept[i + k - 1], kept[i + rng.index(k)]);
    }
    i = j;
  }
  if (kept.size() > top_k) kept.resize(top_k);
  if (kept.size() < sizes.total()) {
    throw Error("filter_and_split: only " + std::to_string(kept.size()) +
                " examples survive (of " + std::to_string(pairs.size()) + "), but splits need " +
                std::to_string(sizes.total()));
  }
  std::size_t pos = 0;
  auto take = [&](std::vector<LabeledExample>& dst, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) dst.push_back(kept[pos++].example);
  };
  take(out.test, sizes.test);
  take(out.valid, sizes.valid);
  take(out.train, sizes.train);
  return out;
}

}  // namespace dtigen
