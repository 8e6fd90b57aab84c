// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "dtigen/error.hpp"
#include "dtigen/text.hpp"

namespace dtigen {

struct Document {
  std::string id;
  std::string title;
  std::string abstract;

  /// Title and abstract as one searchable string.
  std::string text() const {
    if (title.empty()) return abstract;
    if (abstract.empty()) return title;
    return title + " " + abstract;
  }

  bool operator==(const Document&) const = default;
};

struct DtiTriplet {
  std::string drug;
  std::string target;
  std::string interaction;
};

enum class Field { kDrug, kTarget, kInteraction };

inline const std::string& field_of(const DtiTriplet& t, Field f) {
  switch (f) {
    case Field::kDrug:
      return t.drug;
    case Field::kTarget:
      return t.target;
    case Field::kInteraction:
      return t.interaction;
  }
  return t.drug;
}

/// (drug, target, interaction) after base normalization. Triplet identity
/// everywhere (dedup, metrics, distillation agreement) is defined on this key.
using TripletKey = std::array<std::string, 3>;

inline TripletKey triplet_key(const DtiTriplet& t) {
  return {normalize_text(t.drug), normalize_text(t.target),
          normalize_text(t.interaction)};
}

inline bool operator==(const DtiTriplet& a, const DtiTriplet& b) {
  return triplet_key(a) == triplet_key(b);
}

inline bool is_complete(const DtiTriplet& t) {
  const auto k = triplet_key(t);
  return !k[0].empty() && !k[1].empty() && !k[2].empty();
}

/// Set of triplets under normalized equality. Iteration order is the
/// lexicographic order of the normalized (drug, target, interaction) key; the
/// first-inserted surface form of each key is kept.
class TripletSet {
 public:
  using Map = std::map<TripletKey, DtiTriplet>;

  class const_iterator {
   public:
    using iterator_category = std::forward_iterator_tag;
    using value_type = DtiTriplet;
    using difference_type = std::ptrdiff_t;
    using pointer = const DtiTriplet*;
    using reference = const DtiTriplet&;

    const_iterator() = default;
    explicit const_iterator(Map::const_iterator it) : it_(it) {}
    reference operator*() const { return it_->second; }
    pointer operator->() const { return &it_->second; }
    const_iterator& operator++() {
      ++it_;
      return *this;
    }
    const_iterator operator++(int) {
      auto tmp = *this;
      ++it_;
      return tmp;
    }
    bool operator==(const const_iterator& o) const { return it_ == o.it_; }

   private:
    Map::const_iterator it_;
  };

  TripletSet() = default;
  TripletSet(std::initializer_list<DtiTriplet> ts) {
    for (const auto& t : ts) insert(t);
  }
  template <typename It>
  TripletSet(It first, It last) {
    for (; first != last; ++first) insert(*first);
  }

  /// Returns false when an equal triplet was already present.
  bool insert(const DtiTriplet& t) {
    return items_.emplace(triplet_key(t), t).second;
  }
  bool contains(const DtiTriplet& t) const {
    return items_.count(triplet_key(t)) > 0;
  }
  bool contains_key(const TripletKey& k) const { return items_.count(k) > 0; }
  bool erase(const DtiTriplet& t) { return items_.erase(triplet_key(t)) > 0; }

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const_iterator begin() const { return const_iterator(items_.begin()); }
  const_iterator end() const { return const_iterator(items_.end()); }
  const Map& by_key() const { return items_; }

  std::vector<DtiTriplet> to_vector() const {
    return std::vector<DtiTriplet>(begin(), end());
  }

  friend bool operator==(const TripletSet& a, const TripletSet& b) {
    if (a.size() != b.size()) return false;
    auto ia = a.items_.begin();
    for (auto ib = b.items_.begin(); ib != b.items_.end(); ++ia, ++ib) {
      if (ia->first != ib->first) return false;
    }
    return true;
  }

 private:
  Map items_;
};

struct LabeledExample {
  Document document;
  TripletSet triplets;
};

/// canonical name -> synonyms. Entries are base-normalized and every
/// canonical name is listed among its own synonyms.
class Lexicon {
 public:
  Lexicon() = default;

  void add(std::string_view canonical, const std::vector<std::string>& syns) {
    const std::string key = normalize_text(canonical);
    if (key.empty()) throw ConfigError("lexicon: empty canonical name");
    auto& list = entries_[key];
    auto push = [&](const std::string& s) {
      const std::string n = normalize_text(s);
      if (n.empty()) return;
      for (const auto& e : list) {
        if (e == n) return;
      }
      list.push_back(n);
    };
    push(key);
    for (const auto& s : syns) push(s);
  }

  bool contains(std::string_view name) const {
    return entries_.count(normalize_text(name)) > 0;
  }

  /// Synonyms of a canonical name, including the name itself. Unknown names
  /// yield just the normalized name.
  std::vector<std::string> aliases(std::string_view name) const {
    const std::string key = normalize_text(name);
    auto it = entries_.find(key);
    if (it == entries_.end()) return {key};
    return it->second;
  }

  const std::map<std::string, std::vector<std::string>>& entries() const {
    return entries_;
  }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::map<std::string, std::vector<std::string>> entries_;
};

/// Drug, target and interaction lexicons.
struct Lexicons {
  Lexicon drugs;
  Lexicon targets;
  Lexicon interactions;

  const Lexicon& of(Field f) const {
    switch (f) {
      case Field::kDrug:
        return drugs;
      case Field::kTarget:
        return targets;
      case Field::kInteraction:
        return interactions;
    }
    return drugs;
  }
};

// ---------------------------------------------------------------------------
// JSON-lines corpus I/O

namespace detail {

inline std::string require_string(const nlohmann::json& obj, const char* key,
                                  std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw ParseError("line " + std::to_string(line) + ": missing string field \"" +
                     key + "\"");
  }
  return it->get<std::string>();
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const DtiTriplet& t) {
  nlohmann::ordered_json j;
  j["drug"] = t.drug;
  j["target"] = t.target;
  j["interaction"] = t.interaction;
  return j;
}

inline nlohmann::ordered_json to_json(const LabeledExample& ex) {
  nlohmann::ordered_json j;
  j["id"] = ex.document.id;
  j["title"] = ex.document.title;
  j["abstract"] = ex.document.abstract;
  j["triplets"] = nlohmann::ordered_json::array();
  for (const auto& t : ex.triplets) j["triplets"].push_back(to_json(t));
  return j;
}

/// Parses one JSONL record. `line` is 1-based and only used in messages.
inline LabeledExample parse_example(const std::string& text, std::size_t line) {
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("line " + std::to_string(line) + ": " + e.what());
  }
  if (!obj.is_object()) {
    throw ParseError("line " + std::to_string(line) + ": expected a JSON object");
  }
  LabeledExample ex;
  ex.document.id = detail::require_string(obj, "id", line);
  ex.document.title = detail::require_string(obj, "title", line);
  ex.document.abstract = detail::require_string(obj, "abstract", line);
  if (normalize_text(ex.document.id).empty()) {
    throw ParseError("line " + std::to_string(line) + ": empty id");
  }
  if (normalize_text(ex.document.text()).empty()) {
    throw ParseError("line " + std::to_string(line) + ": empty title and abstract");
  }
  if (auto it = obj.find("triplets"); it != obj.end()) {
    if (!it->is_array()) {
      throw ParseError("line " + std::to_string(line) + ": \"triplets\" must be an array");
    }
    for (const auto& tj : *it) {
      if (!tj.is_object()) {
        throw ParseError("line " + std::to_string(line) + ": triplet must be an object");
      }
      DtiTriplet t{detail::require_string(tj, "drug", line),
                   detail::require_string(tj, "target", line),
                   detail::require_string(tj, "interaction", line)};
      if (!is_complete(t)) {
        throw ParseError("line " + std::to_string(line) + ": triplet with empty field");
      }
      ex.triplets.insert(t);
    }
  }
  return ex;
}

inline std::vector<LabeledExample> read_corpus(std::istream& in) {
  std::vector<LabeledExample> out;
  std::unordered_set<std::string> ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (normalize_text(text).empty()) continue;
    auto ex = parse_example(text, line);
    if (!ids.insert(ex.document.id).second) {
      throw ParseError("line " + std::to_string(line) + ": duplicate document id \"" +
                       ex.document.id + "\"");
    }
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::vector<LabeledExample> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus " + path.string());
  try {
    return read_corpus(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_corpus(std::ostream& out,
                         const std::vector<LabeledExample>& examples) {
  for (const auto& ex : examples) out << to_json(ex).dump() << '\n';
}

inline void save_corpus(const std::vector<LabeledExample>& examples,
                        const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write corpus " + path.string());
  write_corpus(out, examples);
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::vector<Document> documents_of(const std::vector<LabeledExample>& xs) {
  std::vector<Document> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(x.document);
  return out;
}

inline std::vector<LabeledExample> as_unlabeled(const std::vector<Document>& docs) {
  std::vector<LabeledExample> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back({d, {}});
  return out;
}

// ---------------------------------------------------------------------------
// Lexicon files: {"canonical": ["synonym", ...], ...}

inline Lexicon lexicon_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("lexicon must be a JSON object");
  Lexicon lex;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_array()) {
      throw ParseError("lexicon entry \"" + it.key() + "\" must be an array");
    }
    std::vector<std::string> syns;
    for (const auto& s : it.value()) {
      if (!s.is_string()) {
        throw ParseError("lexicon entry \"" + it.key() + "\" has a non-string synonym");
      }
      syns.push_back(s.get<std::string>());
    }
    lex.add(it.key(), syns);
  }
  return lex;
}

inline nlohmann::ordered_json to_json(const Lexicon& lex) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [name, syns] : lex.entries()) j[name] = syns;
  return j;
}

inline Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open lexicon " + path.string());
  try {
    return lexicon_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void save_lexicon(const Lexicon& lex, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write lexicon " + path.string());
  out << to_json(lex).dump(2) << '\n';
}

/// A lexicon directory holds drugs.json, targets.json and interactions.json.
inline Lexicons load_lexicons(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("lexicon directory not found: " + dir.string());
  }
  return {load_lexicon(dir / "drugs.json"), load_lexicon(dir / "targets.json"),
          load_lexicon(dir / "interactions.json")};
}

inline void save_lexicons(const Lexicons& lex, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_lexicon(lex.drugs, dir / "drugs.json");
  save_lexicon(lex.targets, dir / "targets.json");
  save_lexicon(lex.interactions, dir / "interactions.json");
}

}  // namespace dtigen
