// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dtigen/error.hpp"
#include "dtigen/text.hpp"

namespace dtigen {

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kSosToken = "<s>";
inline constexpr std::string_view kEosToken = "</s>";
inline constexpr std::string_view kEndOfWord = "</w>";
// Unknown characters decode to U+FFFD; the word-final unknown symbol keeps
// the word boundary so encode(decode(encode(x))) == encode(x).
inline constexpr std::string_view kReplacementChar = "\xEF\xBF\xBD";

/// Reserved tokens in id order: pad, unk, sos, eos, then the triplet tags.
inline std::vector<std::string> default_reserved_tokens() {
  return {std::string(kPadToken), std::string(kUnkToken), std::string(kSosToken),
          std::string(kEosToken), "<d>", "<i>", "<t>"};
}

using BpeId = int;

class BpeModel {
 public:
  BpeModel() = default;

  BpeModel(std::vector<std::pair<std::string, std::string>> merges,
           std::vector<std::string> id_to_token, std::vector<std::string> reserved)
      : merges_(std::move(merges)), id_to_token_(std::move(id_to_token)),
        reserved_(std::move(reserved)) {
    rebuild();
  }

  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  const std::vector<std::string>& reserved() const { return reserved_; }
  const std::vector<std::string>& tokens() const { return id_to_token_; }
  std::size_t vocab_size() const { return id_to_token_.size(); }

  BpeId id(std::string_view token) const {
    auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? unk_id() : it->second;
  }
  bool has_token(std::string_view token) const {
    return token_to_id_.count(std::string(token)) > 0;
  }
  const std::string& token(BpeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
      throw Error("bpe: id " + std::to_string(id) + " out of range");
    }
    return id_to_token_[static_cast<std::size_t>(id)];
  }

  BpeId pad_id() const { return special(kPadToken); }
  BpeId unk_id() const { return special(kUnkToken); }
  BpeId sos_id() const { return special(kSosToken); }
  BpeId eos_id() const { return special(kEosToken); }
  bool is_reserved(std::string_view tok) const { return reserved_set_.count(std::string(tok)) > 0; }

  /// Splits a word into symbols and applies merges in training order.
  std::vector<std::string> segment(std::string_view word) const {
    auto chars = utf8_chars(word);
    std::vector<std::string> sym(chars.begin(), chars.end());
    if (sym.empty()) return sym;
    sym.back() += kEndOfWord;
    while (sym.size() > 1) {
      std::size_t best_rank = merges_.size();
      std::size_t best_pos = 0;
      for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
        auto it = merge_rank_.find(pair_key(sym[i], sym[i + 1]));
        if (it != merge_rank_.end() && it->second < best_rank) {
          best_rank = it->second;
          best_pos = i;
        }
      }
      if (best_rank == merges_.size()) break;
      // Merge every occurrence of the best pair, left to right.
      const auto& [a, b] = merges_[best_rank];
      std::vector<std::string> next;
      next.reserve(sym.size());
      for (std::size_t i = 0; i < sym.size();) {
        if (i + 1 < sym.size() && i >= best_pos && sym[i] == a && sym[i + 1] == b) {
          next.push_back(a + b);
          i += 2;
        } else {
          next.push_back(sym[i]);
          ++i;
        }
      }
      sym = std::move(next);
    }
    return sym;
  }

  std::vector<BpeId> encode(std::string_view text) const {
    std::vector<BpeId> ids;
    for (const auto& word : split_whitespace(text)) {
      if (is_reserved(word)) {
        ids.push_back(id(word));
        continue;
      }
      for (const auto& s : segment(word)) {
        auto it = token_to_id_.find(s);
        if (it != token_to_id_.end()) {
          ids.push_back(it->second);
        } else if (ends_with_eow(s)) {
          ids.push_back(unk_eow_id_);
        } else {
          ids.push_back(unk_id());
        }
      }
    }
    return ids;
  }

  std::string decode(const std::vector<BpeId>& ids) const {
    std::vector<std::string> words;
    std::string cur;
    bool open = false;
    for (BpeId i : ids) {
      const std::string& tok = token(i);
      if (i == unk_eow_id_) {
        cur += kReplacementChar;
        words.push_back(std::move(cur));
        cur.clear();
        open = false;
      } else if (i == unk_id()) {
        cur += kReplacementChar;
        open = true;
      } else if (is_reserved(tok)) {
        if (open) words.push_back(std::move(cur));
        cur.clear();
        open = false;
        words.push_back(tok);
      } else if (ends_with_eow(tok)) {
        cur += tok.substr(0, tok.size() - kEndOfWord.size());
        words.push_back(std::move(cur));
        cur.clear();
        open = false;
      } else {
        cur += tok;
        open = true;
      }
    }
    if (open) words.push_back(std::move(cur));
    return join(words, " ");
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["merges"] = nlohmann::ordered_json::array();
    for (const auto& [a, b] : merges_) j["merges"].push_back({a, b});
    j["vocab"] = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) j["vocab"][id_to_token_[i]] = i;
    j["reserved"] = reserved_;
    return j;
  }

  static BpeModel from_json(const nlohmann::json& j) {
    try {
      std::vector<std::pair<std::string, std::string>> merges;
      for (const auto& m : j.at("merges")) merges.emplace_back(m.at(0), m.at(1));
      std::vector<std::string> tokens(j.at("vocab").size());
      for (auto it = j.at("vocab").begin(); it != j.at("vocab").end(); ++it) {
        const auto id = it.value().get<std::size_t>();
        if (id >= tokens.size() || !tokens[id].empty()) {
          throw ParseError("bpe vocab ids must be dense and unique");
        }
        tokens[id] = it.key();
      }
      return BpeModel(std::move(merges), std::move(tokens),
                      j.at("reserved").get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bpe model: ") + e.what());
    }
  }

  /// Stable 64-bit digest of the vocabulary.
  std::uint64_t vocab_hash() const {
    std::uint64_t h = fnv1a64("dtigen-bpe");
    for (const auto& t : id_to_token_) {
      h = fnv1a64(t, h);
      h = fnv1a64(std::string_view("\0", 1), h);
    }
    return h;
  }

 private:
  static std::string pair_key(const std::string& a, const std::string& b) {
    std::string k = a;
    k.push_back('\x1f');
    k += b;
    return k;
  }
  static bool ends_with_eow(std::string_view s) {
    return s.size() >= kEndOfWord.size() &&
           s.substr(s.size() - kEndOfWord.size()) == kEndOfWord;
  }
  BpeId special(std::string_view tok) const {
    auto it = token_to_id_.find(std::string(tok));
    if (it == token_to_id_.end()) throw Error("bpe: reserved token missing: " + std::string(tok));
    return it->second;
  }
  void rebuild() {
    token_to_id_.clear();
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
      token_to_id_[id_to_token_[i]] = static_cast<BpeId>(i);
    }
    reserved_set_ = std::set<std::string>(reserved_.begin(), reserved_.end());
    merge_rank_.clear();
    for (std::size_t i = 0; i < merges_.size(); ++i) {
      merge_rank_.emplace(pair_key(merges_[i].first, merges_[i].second), i);
    }
    const std::string unk_eow = std::string(kUnkToken) + std::string(kEndOfWord);
    auto it = token_to_id_.find(unk_eow);
    unk_eow_id_ = it == token_to_id_.end() ? -1 : it->second;
  }

  std::vector<std::pair<std::string, std::string>> merges_;
  std::vector<std::string> id_to_token_;
  std::vector<std::string> reserved_;
  std::unordered_map<std::string, BpeId> token_to_id_;
  std::unordered_map<std::string, std::size_t> merge_rank_;
  std::set<std::string> reserved_set_;
  BpeId unk_eow_id_ = -1;
};

/// Learns `num_merges` greedy merges of the most frequent adjacent symbol
/// pair over whitespace-separated words (the last symbol of every word
/// carries "</w>"). Ties go to the lexicographically smallest pair. Reserved
/// tokens (plus the word-final unknown symbol "<unk></w>") are excluded from
/// training and get the first ids, followed by the sorted initial alphabet and
/// the merged symbols in merge order. Training stops early when no pair is left.
inline BpeModel train_bpe(const std::vector<std::string>& texts, std::size_t num_merges,
                          const std::vector<std::string>& reserved = default_reserved_tokens()) {
  if (texts.empty()) throw ConfigError("train_bpe: empty corpus");
  std::vector<std::string> reserved_all = reserved;
  const std::string unk_eow = std::string(kUnkToken) + std::string(kEndOfWord);
  if (std::find(reserved_all.begin(), reserved_all.end(), unk_eow) == reserved_all.end()) {
    reserved_all.push_back(unk_eow);
  }
  const std::set<std::string> reserved_set(reserved_all.begin(), reserved_all.end());
  for (const auto& r : {kPadToken, kUnkToken, kSosToken, kEosToken}) {
    if (!reserved_set.count(std::string(r))) {
      throw ConfigError("train_bpe: reserved tokens must include " + std::string(r));
    }
  }

  std::map<std::string, std::size_t> word_freq;
  for (const auto& text : texts) {
    for (const auto& w : split_whitespace(text)) {
      if (!reserved_set.count(w)) ++word_freq[w];
    }
  }

  struct Word {
    std::vector<std::string> sym;
    std::size_t freq;
  };
  std::vector<Word> words;
  std::set<std::string> alphabet;
  for (const auto& [w, f] : word_freq) {
    Word word{{}, f};
    for (auto& c : utf8_chars(w)) {
      if (c == kReplacementChar) c = std::string(kUnkToken);
      word.sym.push_back(std::move(c));
    }
    word.sym.back() += kEndOfWord;
    for (const auto& s : word.sym) {
      if (s.rfind(kUnkToken, 0) != 0) alphabet.insert(s);
    }
    words.push_back(std::move(word));
  }

  std::vector<std::pair<std::string, std::string>> merges;
  for (std::size_t step = 0; step < num_merges; ++step) {
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (const auto& w : words) {
      for (std::size_t i = 0; i + 1 < w.sym.size(); ++i) {
        if (w.sym[i].rfind(kUnkToken, 0) == 0 || w.sym[i + 1].rfind(kUnkToken, 0) == 0) continue;
        counts[{w.sym[i], w.sym[i + 1]}] += w.freq;
      }
    }
    if (counts.empty()) break;
    // std::map iterates pairs in lexicographic order; strict > keeps the
    // smallest pair among equal counts.
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const auto [a, b] = best->first;
    merges.emplace_back(a, b);
    const std::string ab = a + b;
    for (auto& w : words) {
      std::vector<std::string> next;
      next.reserve(w.sym.size());
      for (std::size_t i = 0; i < w.sym.size();) {
        if (i + 1 < w.sym.size() && w.sym[i] == a && w.sym[i + 1] == b) {
          next.push_back(ab);
          i += 2;
        } else {
          next.push_back(std::move(w.sym[i]));
          ++i;
        }
      }
      w.sym = std::move(next);
    }
  }

  std::vector<std::string> tokens(reserved_all.begin(), reserved_all.end());
  std::set<std::string> seen(reserved_all.begin(), reserved_all.end());
  auto add = [&](const std::string& t) {
    if (seen.insert(t).second) tokens.push_back(t);
  };
  for (const auto& s : alphabet) add(s);
  for (const auto& [a, b] : merges) add(a + b);
  return BpeModel(std::move(merges), std::move(tokens), std::move(reserved_all));
}

inline void save_bpe(const BpeModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write bpe model " + path.string());
  out << m.to_json().dump() << '\n';
}

inline BpeModel load_bpe(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open bpe model " + path.string());
  try {
    return BpeModel::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace dtigen
