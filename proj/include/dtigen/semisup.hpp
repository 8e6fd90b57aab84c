// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "dtigen/corpus.hpp"
#include "dtigen/error.hpp"
#include "dtigen/fuzzymatch.hpp"
#include "dtigen/parallel.hpp"
#include "dtigen/rng.hpp"

namespace dtigen {

struct SpottedEntities {
  std::set<std::string> drugs;
  std::set<std::string> targets;
  std::set<std::string> interactions;
};

enum class Provenance { kRuleFilter, kKD, kDS, kDSWithInteraction };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::kRuleFilter:
      return "rule_filter";
    case Provenance::kKD:
      return "kd";
    case Provenance::kDS:
      return "ds";
    case Provenance::kDSWithInteraction:
      return "ds_with_interaction";
  }
  return "?";
}

inline Provenance parse_provenance(std::string_view s) {
  for (auto p : {Provenance::kRuleFilter, Provenance::kKD, Provenance::kDS, Provenance::kDSWithInteraction}) {
    if (s == to_string(p)) return p;
  }
  throw ParseError("unknown provenance '" + std::string(s) + "'");
}

struct PseudoLabeledExample {
  Document document;
  TripletSet triplets;
  Provenance provenance = Provenance::kRuleFilter;
};

/// Canonical lexicon names whose match in the document is Reliable or
/// Positive.
inline SpottedEntities spot_entities(const DocumentIndex& index, const Lexicons& lex,
                                     const EditBudget& budget = {}) {
  SpottedEntities out;
  auto scan = [&](const Lexicon& l, std::set<std::string>& dst) {
    for (const auto& [name, syns] : l.entries()) {
      const auto rep = match_query(name, syns, index, budget);
      if (rep.pattern.category != PatternCategory::kNegative) dst.insert(name);
    }
  };
  scan(lex.drugs, out.drugs);
  scan(lex.targets, out.targets);
  scan(lex.interactions, out.interactions);
  return out;
}

inline SpottedEntities spot_entities(const Document& doc, const Lexicons& lex, const EditBudget& budget = {}) {
  return spot_entities(DocumentIndex(doc), lex, budget);
}

/// Every (drug, target, interaction) combination of the spotted entities.
inline TripletSet enumerate_triplets(const SpottedEntities& s) {
  TripletSet out;
  for (const auto& d : s.drugs) {
    for (const auto& t : s.targets) {
      for (const auto& i : s.interactions) out.insert({d, t, i});
    }
  }
  return out;
}

/// Keeps the enumerated triplets that occur in at least `min_occurrence`
/// documents of the pool (a document counts once per triplet), then the
/// documents left with at least one triplet.
inline std::vector<PseudoLabeledExample> rule_filter(const std::vector<Document>& docs, const Lexicons& lex,
                                                     int min_occurrence = 10, const EditBudget& budget = {}) {
  if (min_occurrence < 1) throw ConfigError("rule_filter: min_occurrence must be >= 1");
  std::vector<TripletSet> per_doc(docs.size());
  parallel_for(docs.size(), [&](std::size_t i) { per_doc[i] = enumerate_triplets(spot_entities(docs[i], lex, budget)); });
  std::map<TripletKey, int> counts;
  for (const auto& s : per_doc) {
    for (const auto& [k, t] : s.by_key()) ++counts[k];
  }
  std::vector<PseudoLabeledExample> out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    PseudoLabeledExample ex{docs[i], {}, Provenance::kRuleFilter};
    for (const auto& [k, t] : per_doc[i].by_key()) {
      if (counts[k] >= min_occurrence) ex.triplets.insert(t);
    }
    if (!ex.triplets.empty()) out.push_back(std::move(ex));
  }
  return out;
}

/// Number of fields on which two triplets agree under normalized equality.
inline int agreement(const DtiTriplet& a, const DtiTriplet& b) {
  const auto ka = triplet_key(a);
  const auto kb = triplet_key(b);
  return (ka[0] == kb[0]) + (ka[1] == kb[1]) + (ka[2] == kb[2]);
}

/// Distillation filter: documents for which the model generated nothing are
/// dropped; otherwise a pseudo triplet survives when it agrees with some
/// generated triplet on at least two fields. Generated triplets are never
/// emitted.
inline std::vector<PseudoLabeledExample> kd_label(const std::vector<TripletSet>& generated,
                                                  const std::vector<PseudoLabeledExample>& semi) {
  if (generated.size() != semi.size()) {
    throw Error("kd_label: " + std::to_string(generated.size()) + " generated sets for " +
                std::to_string(semi.size()) + " documents");
  }
  std::vector<PseudoLabeledExample> out;
  for (std::size_t j = 0; j < semi.size(); ++j) {
    if (generated[j].empty()) continue;
    PseudoLabeledExample ex{semi[j].document, {}, Provenance::kKD};
    for (const auto& p : semi[j].triplets) {
      for (const auto& g : generated[j]) {
        if (agreement(p, g) >= 2) {
          ex.triplets.insert(p);
          break;
        }
      }
    }
    if (!ex.triplets.empty()) out.push_back(std::move(ex));
  }
  return out;
}

/// Distant supervision: every known triplet whose drug and target (and
/// interaction, when required) are retrieved in an unlabeled document
/// becomes a pseudo label of that document.
inline std::vector<PseudoLabeledExample> ds_label(const std::vector<LabeledExample>& labeled,
                                                  const std::vector<Document>& unlabeled, bool require_interaction,
                                                  const Lexicons& lex = {}, const EditBudget& budget = {}) {
  TripletSet known;
  for (const auto& ex : labeled) {
    for (const auto& t : ex.triplets) known.insert(t);
  }
  const auto prov = require_interaction ? Provenance::kDSWithInteraction : Provenance::kDS;
  std::vector<PseudoLabeledExample> slots(unlabeled.size());
  std::vector<char> keep(unlabeled.size(), 0);
  parallel_for(unlabeled.size(), [&](std::size_t j) {
    const DocumentIndex index(unlabeled[j]);
    std::array<std::unordered_map<std::string, bool>, 3> memo;
    auto mentioned = [&](Field f, const std::string& key) {
      auto& m = memo[static_cast<std::size_t>(f)];
      auto it = m.find(key);
      if (it != m.end()) return it->second;
      const bool hit = !retrieve(key, lex.of(f).aliases(key), index, budget).empty();
      m.emplace(key, hit);
      return hit;
    };
    PseudoLabeledExample ex{unlabeled[j], {}, prov};
    for (const auto& [k, t] : known.by_key()) {
      if (!mentioned(Field::kDrug, k[0]) || !mentioned(Field::kTarget, k[1])) continue;
      if (require_interaction && !mentioned(Field::kInteraction, k[2])) continue;
      ex.triplets.insert(t);
    }
    if (!ex.triplets.empty()) {
      slots[j] = std::move(ex);
      keep[j] = 1;
    }
  });
  std::vector<PseudoLabeledExample> out;
  for (std::size_t j = 0; j < slots.size(); ++j) {
    if (keep[j]) out.push_back(std::move(slots[j]));
  }
  return out;
}

/// Labeled corpus repeated `factor` times plus the pseudo examples, shuffled
/// with `seed`. Copies after the first get the id suffix "#up<k>" and pseudo
/// documents whose id clashes get "#pseudo", so ids stay unique.
inline std::vector<LabeledExample> merge_and_upsample(const std::vector<LabeledExample>& labeled,
                                                      const std::vector<PseudoLabeledExample>& pseudo, int factor,
                                                      std::uint64_t seed) {
  if (factor < 1) throw ConfigError("merge: upsample factor must be >= 1");
  std::vector<LabeledExample> out;
  out.reserve(labeled.size() * static_cast<std::size_t>(factor) + pseudo.size());
  std::unordered_set<std::string> ids;
  for (int k = 0; k < factor; ++k) {
    for (const auto& ex : labeled) {
      LabeledExample c = ex;
      if (k > 0) c.document.id += "#up" + std::to_string(k);
      ids.insert(c.document.id);
      out.push_back(std::move(c));
    }
  }
  for (const auto& p : pseudo) {
    LabeledExample c{p.document, p.triplets};
    while (ids.count(c.document.id)) c.document.id += "#pseudo";
    ids.insert(c.document.id);
    out.push_back(std::move(c));
  }
  Rng rng(seed);
  rng.shuffle(out);
  return out;
}

// ---------------------------------------------------------------------------
// Pseudo-label JSONL: corpus records plus a "provenance" field.

inline nlohmann::ordered_json to_json(const PseudoLabeledExample& ex) {
  auto j = to_json(LabeledExample{ex.document, ex.triplets});
  j["provenance"] = to_string(ex.provenance);
  return j;
}

inline void save_pseudo(const std::vector<PseudoLabeledExample>& xs, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& ex : xs) out << to_json(ex).dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::vector<PseudoLabeledExample> load_pseudo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<PseudoLabeledExample> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (normalize_text(text).empty()) continue;
    auto ex = parse_example(text, line);
    Provenance prov = Provenance::kRuleFilter;
    const auto j = nlohmann::json::parse(text);
    if (auto it = j.find("provenance"); it != j.end()) {
      if (!it->is_string()) throw ParseError(path.string() + ": line " + std::to_string(line) + ": bad provenance");
      prov = parse_provenance(it->get<std::string>());
    }
    out.push_back({std::move(ex.document), std::move(ex.triplets), prov});
  }
  return out;
}

inline std::vector<LabeledExample> as_labeled(const std::vector<PseudoLabeledExample>& xs) {
  std::vector<LabeledExample> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back({x.document, x.triplets});
  return out;
}

}  // namespace dtigen
