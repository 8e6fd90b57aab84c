// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

// Triplet-, ontology- and entity-level extraction metrics, the minimal
// drug-target token distance, and aggregation over repeated runs.
//
// Conventions for empty sets:
//   empty prediction set         -> per-document precision term 0
//   empty gold set               -> per-document recall term 0
//   empty prediction union       -> ontology precision 0 (recall likewise)
//   empty gold and pred entities -> Jaccard 1

#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "dtigen/corpus.hpp"
#include "dtigen/error.hpp"
#include "dtigen/fuzzymatch.hpp"

namespace dtigen {

struct Prf {
  double p = 0.0;
  double r = 0.0;
  double f1 = 0.0;
};

inline double f1_score(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

inline Prf make_prf(double p, double r) { return {p, r, f1_score(p, r)}; }

struct EntityAccuracy {
  double drug = 0.0;
  double target = 0.0;
  double interaction = 0.0;
};

namespace detail {

inline void check_aligned(std::size_t gold, std::size_t pred) {
  if (gold != pred) {
    throw Error("metrics: " + std::to_string(gold) + " gold documents but " +
                std::to_string(pred) + " predictions");
  }
  if (gold == 0) throw Error("metrics: no documents");
}

inline std::size_t overlap(const TripletSet& a, const TripletSet& b) {
  std::size_t n = 0;
  for (const auto& [k, t] : a.by_key()) n += b.contains_key(k);
  return n;
}

inline std::set<std::string> project(const TripletSet& s, Field f) {
  std::set<std::string> out;
  for (const auto& [k, t] : s.by_key()) out.insert(k[static_cast<std::size_t>(f)]);
  return out;
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

inline double ratio(std::size_t num, std::size_t den) {
  return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

}  // namespace detail

inline Prf triplet_prf(const std::vector<TripletSet>& gold, const std::vector<TripletSet>& pred) {
  detail::check_aligned(gold.size(), pred.size());
  double p = 0.0, r = 0.0;
  for (std::size_t j = 0; j < gold.size(); ++j) {
    const std::size_t c = detail::overlap(gold[j], pred[j]);
    p += detail::ratio(c, pred[j].size());
    r += detail::ratio(c, gold[j].size());
  }
  const double n = static_cast<double>(gold.size());
  return make_prf(p / n, r / n);
}

inline Prf ontology_prf(const std::vector<TripletSet>& gold, const std::vector<TripletSet>& pred) {
  detail::check_aligned(gold.size(), pred.size());
  TripletSet g, p;
  for (const auto& s : gold) {
    for (const auto& t : s) g.insert(t);
  }
  for (const auto& s : pred) {
    for (const auto& t : s) p.insert(t);
  }
  const std::size_t c = detail::overlap(g, p);
  return make_prf(detail::ratio(c, p.size()), detail::ratio(c, g.size()));
}

inline EntityAccuracy entity_accuracies(const std::vector<TripletSet>& gold,
                                        const std::vector<TripletSet>& pred) {
  detail::check_aligned(gold.size(), pred.size());
  EntityAccuracy a;
  for (std::size_t j = 0; j < gold.size(); ++j) {
    a.drug += detail::jaccard(detail::project(gold[j], Field::kDrug), detail::project(pred[j], Field::kDrug));
    a.target += detail::jaccard(detail::project(gold[j], Field::kTarget), detail::project(pred[j], Field::kTarget));
    a.interaction += detail::jaccard(detail::project(gold[j], Field::kInteraction),
                                     detail::project(pred[j], Field::kInteraction));
  }
  const double n = static_cast<double>(gold.size());
  a.drug /= n;
  a.target /= n;
  a.interaction /= n;
  return a;
}

// ---------------------------------------------------------------------------
// Drug-target distance

/// Whitespace-token indices at which the query (or a synonym) is retrieved.
inline std::vector<std::size_t> mention_positions(const DocumentIndex& index, std::string_view query,
                                                  const std::vector<std::string>& synonyms,
                                                  const EditBudget& budget = {}) {
  std::vector<std::size_t> out;
  for (const auto& s : retrieve(query, synonyms, index, budget)) out.push_back(index.token_index(s.start));
  return out;
}

/// Smallest |p_d - p_t| over drug and target mention positions, or nullopt
/// when either entity is not found.
inline std::optional<std::size_t> min_dt_distance(const DocumentIndex& index, const DtiTriplet& t,
                                                  const Lexicons& lex, const EditBudget& budget = {}) {
  const auto pd = mention_positions(index, t.drug, lex.drugs.aliases(t.drug), budget);
  const auto pt = mention_positions(index, t.target, lex.targets.aliases(t.target), budget);
  if (pd.empty() || pt.empty()) return std::nullopt;
  std::size_t best = SIZE_MAX;
  for (auto a : pd) {
    for (auto b : pt) best = std::min(best, a > b ? a - b : b - a);
  }
  return best;
}

inline std::optional<std::size_t> min_dt_distance(const Document& doc, const DtiTriplet& t,
                                                  const Lexicons& lex, const EditBudget& budget = {}) {
  return min_dt_distance(DocumentIndex(doc), t, lex, budget);
}

struct DistanceSummary {
  std::size_t computable = 0;
  std::size_t missing = 0;
  double total = 0.0;

  double mean() const { return computable ? total / static_cast<double>(computable) : 0.0; }
};

/// Average minimal distance over every (document, gold triplet) sample.
inline DistanceSummary average_min_dt(const std::vector<LabeledExample>& corpus, const Lexicons& lex,
                                      const EditBudget& budget = {}) {
  DistanceSummary s;
  for (const auto& ex : corpus) {
    const DocumentIndex index(ex.document);
    for (const auto& t : ex.triplets) {
      if (auto d = min_dt_distance(index, t, lex, budget)) {
        ++s.computable;
        s.total += static_cast<double>(*d);
      } else {
        ++s.missing;
      }
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Reports

struct DocumentScore {
  std::string id;
  std::size_t n_gold = 0;
  std::size_t n_pred = 0;
  std::size_t n_correct = 0;
  double precision = 0.0;
  double recall = 0.0;
  EntityAccuracy entity;
};

struct EvalReport {
  Prf triplet;
  Prf ontology;
  EntityAccuracy entity;
  std::size_t n_documents = 0;
  std::vector<DocumentScore> documents;
};

inline std::vector<std::string> metric_conventions() {
  return {"empty prediction set: per-document precision term is 0",
          "empty gold set: per-document recall term is 0",
          "empty prediction union: ontology precision is 0",
          "empty gold and predicted entity sets: Jaccard is 1",
          "triplets compare equal after casefolding and whitespace normalization"};
}

inline EvalReport evaluate_sets(const std::vector<std::string>& ids, const std::vector<TripletSet>& gold,
                                const std::vector<TripletSet>& pred) {
  detail::check_aligned(gold.size(), pred.size());
  if (ids.size() != gold.size()) throw Error("metrics: id list does not match documents");
  EvalReport rep;
  rep.triplet = triplet_prf(gold, pred);
  rep.ontology = ontology_prf(gold, pred);
  rep.entity = entity_accuracies(gold, pred);
  rep.n_documents = gold.size();
  for (std::size_t j = 0; j < gold.size(); ++j) {
    DocumentScore d;
    d.id = ids[j];
    d.n_gold = gold[j].size();
    d.n_pred = pred[j].size();
    d.n_correct = detail::overlap(gold[j], pred[j]);
    d.precision = detail::ratio(d.n_correct, d.n_pred);
    d.recall = detail::ratio(d.n_correct, d.n_gold);
    d.entity = entity_accuracies({gold[j]}, {pred[j]});
    rep.documents.push_back(std::move(d));
  }
  return rep;
}

/// Aligns predictions to gold documents by id. Every gold id needs exactly
/// one prediction record and vice versa.
inline EvalReport evaluate_corpus(const std::vector<LabeledExample>& gold,
                                  const std::vector<LabeledExample>& pred) {
  std::unordered_map<std::string, const LabeledExample*> by_id;
  for (const auto& p : pred) by_id[p.document.id] = &p;
  std::vector<std::string> ids;
  std::vector<TripletSet> g, p;
  for (const auto& ex : gold) {
    auto it = by_id.find(ex.document.id);
    if (it == by_id.end()) throw Error("evaluate: no prediction for document " + ex.document.id);
    ids.push_back(ex.document.id);
    g.push_back(ex.triplets);
    p.push_back(it->second->triplets);
    by_id.erase(it);
  }
  if (!by_id.empty()) throw Error("evaluate: prediction for unknown document " + by_id.begin()->first);
  return evaluate_sets(ids, g, p);
}

inline nlohmann::ordered_json to_json(const Prf& m) {
  return {{"precision", m.p}, {"recall", m.r}, {"f1", m.f1}};
}

inline nlohmann::ordered_json to_json(const EntityAccuracy& a) {
  return {{"drug", a.drug}, {"target", a.target}, {"interaction", a.interaction}};
}

inline nlohmann::ordered_json to_json(const EvalReport& r, bool per_document = true) {
  nlohmann::ordered_json j;
  j["n_documents"] = r.n_documents;
  j["triplet"] = to_json(r.triplet);
  j["ontology"] = to_json(r.ontology);
  j["entity"] = to_json(r.entity);
  j["conventions"] = metric_conventions();
  if (per_document) {
    auto& docs = j["documents"] = nlohmann::ordered_json::array();
    for (const auto& d : r.documents) {
      docs.push_back({{"id", d.id},
                      {"n_gold", d.n_gold},
                      {"n_pred", d.n_pred},
                      {"n_correct", d.n_correct},
                      {"precision", d.precision},
                      {"recall", d.recall},
                      {"entity", to_json(d.entity)}});
    }
  }
  return j;
}

// ---------------------------------------------------------------------------
// Multi-run aggregation

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

struct RunAggregate {
  std::size_t n_runs = 0;
  bool single_run = false;  // std reported as 0
  std::map<std::string, MeanStd> fields;
};

inline std::map<std::string, double> flatten(const EvalReport& r) {
  return {{"triplet.precision", r.triplet.p},    {"triplet.recall", r.triplet.r},
          {"triplet.f1", r.triplet.f1},          {"ontology.precision", r.ontology.p},
          {"ontology.recall", r.ontology.r},     {"ontology.f1", r.ontology.f1},
          {"entity.drug", r.entity.drug},        {"entity.target", r.entity.target},
          {"entity.interaction", r.entity.interaction}};
}

/// Sample mean and (n-1) standard deviation of every metric.
inline RunAggregate aggregate_runs(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw Error("aggregate_runs: no reports");
  RunAggregate out;
  out.n_runs = reports.size();
  out.single_run = reports.size() == 1;
  std::map<std::string, std::vector<double>> values;
  for (const auto& r : reports) {
    for (const auto& [k, v] : flatten(r)) values[k].push_back(v);
  }
  for (const auto& [k, xs] : values) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    if (xs.size() > 1) {
      for (double x : xs) var += (x - mean) * (x - mean);
      var /= static_cast<double>(xs.size() - 1);
    }
    out.fields[k] = {mean, std::sqrt(var)};
  }
  return out;
}

inline nlohmann::ordered_json to_json(const RunAggregate& a) {
  nlohmann::ordered_json j;
  j["n_runs"] = a.n_runs;
  j["single_run"] = a.single_run;
  for (const auto& [k, v] : a.fields) j["metrics"][k] = {{"mean", v.mean}, {"std", v.std}};
  return j;
}

}  // namespace dtigen
