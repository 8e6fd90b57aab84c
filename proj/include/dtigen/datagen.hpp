// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

// Deterministic synthetic corpora. A fixed base of true triplets ("facts") is
// spread over templated pseudo-abstracts together with distractor entities
// and neutral filler. Entity names are sampled so that no two names, and no
// name and template word, are within fuzzy-match reach of each other.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtigen/corpus.hpp"
#include "dtigen/error.hpp"
#include "dtigen/fuzzymatch.hpp"
#include "dtigen/rng.hpp"
#include "dtigen/text.hpp"

namespace dtigen {

struct GenConfig {
  std::uint64_t seed = 1;
  int n_docs = 64;
  int triplets_min = 1;
  int triplets_max = 2;
  int n_drugs = 24;
  int n_targets = 24;
  int n_interactions = 6;
  int n_facts = 32;
  int n_distractor_entities = 12;  // extra drugs and targets that never occur in facts
  int distractors_per_doc = 1;
  bool multi_sentence = true;
  double unlabeled_fraction = 0.0;
  double synonym_prob = 0.25;
  double variant_prob = 0.3;
  int filler_min = 2;
  int filler_max = 4;

  void validate() const;
};

inline nlohmann::ordered_json to_json(const GenConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["n_docs"] = c.n_docs;
  j["triplets_min"] = c.triplets_min;
  j["triplets_max"] = c.triplets_max;
  j["n_drugs"] = c.n_drugs;
  j["n_targets"] = c.n_targets;
  j["n_interactions"] = c.n_interactions;
  j["n_facts"] = c.n_facts;
  j["n_distractor_entities"] = c.n_distractor_entities;
  j["distractors_per_doc"] = c.distractors_per_doc;
  j["multi_sentence"] = c.multi_sentence;
  j["unlabeled_fraction"] = c.unlabeled_fraction;
  j["synonym_prob"] = c.synonym_prob;
  j["variant_prob"] = c.variant_prob;
  j["filler_min"] = c.filler_min;
  j["filler_max"] = c.filler_max;
  return j;
}

inline GenConfig gen_config_from_json(const nlohmann::json& j, GenConfig c = {}) {
  auto get = [&](const char* k, auto& dst) {
    if (auto it = j.find(k); it != j.end()) dst = it->get<std::decay_t<decltype(dst)>>();
  };
  get("seed", c.seed);
  get("n_docs", c.n_docs);
  get("triplets_min", c.triplets_min);
  get("triplets_max", c.triplets_max);
  get("n_drugs", c.n_drugs);
  get("n_targets", c.n_targets);
  get("n_interactions", c.n_interactions);
  get("n_facts", c.n_facts);
  get("n_distractor_entities", c.n_distractor_entities);
  get("distractors_per_doc", c.distractors_per_doc);
  get("multi_sentence", c.multi_sentence);
  get("unlabeled_fraction", c.unlabeled_fraction);
  get("synonym_prob", c.synonym_prob);
  get("variant_prob", c.variant_prob);
  get("filler_min", c.filler_min);
  get("filler_max", c.filler_max);
  return c;
}

namespace gen {

struct InteractionForms {
  const char* noun;  // canonical, e.g. "inhibitor"
  const char* verb;  // "inhibit"
  const char* nom;   // "inhibition"
};

inline constexpr std::array<InteractionForms, 10> kInteractions = {{
    {"inhibitor", "inhibit", "inhibition"},
    {"activator", "activate", "activation"},
    {"antagonist", "antagonize", "antagonism"},
    {"blocker", "block", "blockade"},
    {"modulator", "modulate", "modulation"},
    {"inducer", "induce", "induction"},
    {"suppressor", "suppress", "suppression"},
    {"stimulator", "stimulate", "stimulation"},
    {"potentiator", "potentiate", "potentiation"},
    {"enhancer", "enhance", "enhancement"},
}};

inline std::string third_person(const std::string& v) {
  if (v.ends_with("s") || v.ends_with("sh") || v.ends_with("ch")) return v + "es";
  return v + "s";
}
inline std::string past(const std::string& v) { return v.ends_with("e") ? v + "d" : v + "ed"; }
inline std::string gerund(const std::string& v) {
  return v.ends_with("e") ? v.substr(0, v.size() - 1) + "ing" : v + "ing";
}

// Sentence templates. Slots: {D} drug, {T} target, {N} interaction noun,
// {Z} nominalization, {V3} third person verb, {VD} past tense, {VG} gerund.
inline const std::vector<std::string>& triplet_templates() {
  static const std::vector<std::string> k = {
      "{D} is a selective {N} of {T}.",
      "We identified {D} as a potent {N} of {T}.",
      "The {Z} of {T} by {D} was observed in vitro.",
      "{D} showed strong {Z} of {T} in animal models.",
      "{D} {V3} {T} in cultured cells.",
      "Treatment with {D} {VD} {T} in a dose dependent manner.",
      "Compounds such as {D} were found {VG} {T} at low concentrations.",
  };
  return k;
}
inline const std::vector<std::string>& drug_sentences() {
  static const std::vector<std::string> k = {
      "{D} was given to the treatment group.",
      "Patients received {D} for two weeks.",
      "The compound {D} was tested in this work.",
  };
  return k;
}
inline const std::vector<std::string>& interaction_sentences() {
  static const std::vector<std::string> k = {
      "A marked {Z} was detected after treatment.",
      "Its principal mode of action is that of a typical {N}.",
      "This agent {V3} the protein of interest.",
      "The drug clearly {VD} its molecular partner.",
  };
  return k;
}
inline const std::vector<std::string>& target_sentences() {
  static const std::vector<std::string> k = {
      "The protein in question is {T}.",
      "Expression of {T} was measured in all samples.",
      "The molecular partner was identified as {T}.",
  };
  return k;
}
inline const std::vector<std::string>& distractor_drug_sentences() {
  static const std::vector<std::string> k = {
      "{D} was used as a reference compound.",
      "Some patients also received {D}.",
  };
  return k;
}
inline const std::vector<std::string>& distractor_target_sentences() {
  static const std::vector<std::string> k = {
      "Levels of {T} were unchanged.",
      "{T} served as a control protein.",
  };
  return k;
}
inline const std::vector<std::string>& filler_sentences() {
  static const std::vector<std::string> k = {
      "The study enrolled adult volunteers from three clinical centers.",
      "Samples were collected at baseline and after four weeks.",
      "Statistical analysis was performed with standard methods.",
      "These findings provide insight into the underlying pharmacology.",
      "Further work is needed to confirm these observations.",
      "Measurements were repeated in independent experiments.",
      "No serious adverse events were recorded during follow up.",
      "The results were consistent across all tested concentrations.",
      "Data are presented as mean values with standard deviations.",
      "Cell viability remained stable throughout the assay.",
  };
  return k;
}
inline const std::vector<std::string>& titles() {
  static const std::vector<std::string> k = {
      "Effects of {D} on {T}",
      "{Z} of {T} by {D} in a preclinical model",
      "Pharmacological profile of {D}",
      "A preclinical evaluation of candidate compounds",
  };
  return k;
}
// Anchor sentences guarantee one exact alias mention per gold element.
inline constexpr const char* kDrugAnchor = "{D} was well tolerated.";
inline constexpr const char* kTargetAnchor = "{T} is widely expressed.";
inline constexpr const char* kInteractionAnchor = "This {Z} was reproducible in repeated assays.";
inline constexpr const char* kVariantSentence = "Related {T} were also examined.";

/// Every word used by any template, for name rejection.
inline std::vector<std::string> template_words() {
  std::set<std::string> words;
  auto add = [&](std::string s) {
    for (auto open = s.find('{'); open != std::string::npos; open = s.find('{')) {
      s.erase(open, s.find('}', open) - open + 1);
    }
    for (const auto& w : split_whitespace(normalize_text(s, NormalizeMode::kPattern))) words.insert(w);
  };
  for (const auto* list : {&triplet_templates(), &drug_sentences(), &interaction_sentences(), &target_sentences(),
                           &distractor_drug_sentences(), &distractor_target_sentences(), &filler_sentences(),
                           &titles()}) {
    for (const auto& s : *list) add(s);
  }
  for (const char* s : {kDrugAnchor, kTargetAnchor, kInteractionAnchor, kVariantSentence}) add(s);
  std::vector<std::string> out;
  for (const auto& w : words) {
    if (w.size() > 1) out.push_back(w);
  }
  return out;
}

/// True when a query `a` could retrieve some window of `b`.
inline bool reaches(const std::string& a, const std::string& b, const EditBudget& budget) {
  const auto bw = split_whitespace(b);
  const std::size_t n = split_whitespace(a).size();
  const int limit = budget(a.size()) + 1;
  const std::string stem_a = inflection_stem(a);
  for (std::size_t w = (n > 1 ? n - 1 : 1); w <= n + 1; ++w) {
    for (std::size_t i = 0; i + w <= bw.size(); ++i) {
      std::vector<std::string> part(bw.begin() + static_cast<std::ptrdiff_t>(i),
                                    bw.begin() + static_cast<std::ptrdiff_t>(i + w));
      const std::string win = join(part, " ");
      if (bounded_levenshtein(win, a, limit) <= limit) return true;
      if (stem_a.size() >= 3 && inflection_stem(win) == stem_a) return true;
    }
  }
  return false;
}

class NamePool {
 public:
  explicit NamePool(std::vector<std::string> reserved_words) : words_(std::move(reserved_words)) {}

  /// Accepts a group of aliases for one entity when none of them can reach,
  /// or be reached by, an alias or template word already taken.
  bool try_add(const std::vector<std::string>& aliases) {
    std::vector<std::string> norm;
    for (const auto& a : aliases) norm.push_back(normalize_text(a));
    for (const auto& a : norm) {
      if (a.size() < 4 || is_meaningless_word(a)) return false;
      for (const auto& t : taken_) {
        if (reaches(a, t, budget_) || reaches(t, a, budget_)) return false;
      }
      for (const auto& w : words_) {
        if (reaches(a, w, budget_) || reaches(w, a, budget_)) return false;
      }
    }
    taken_.insert(taken_.end(), norm.begin(), norm.end());
    return true;
  }

 private:
  std::vector<std::string> words_;
  std::vector<std::string> taken_;
  EditBudget budget_;
};

inline std::string syllables(Rng& rng, int n) {
  static const std::string kC = "bdfgklmnprstvz";
  static const std::string kV = "aeiou";
  std::string s;
  for (int i = 0; i < n; ++i) {
    s += kC[rng.index(kC.size())];
    s += kV[rng.index(kV.size())];
  }
  return s;
}

inline std::string upper(std::string s) {
  for (auto& c : s) {
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  }
  return s;
}

inline std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

struct Entity {
  std::string canonical;
  std::vector<std::string> synonyms;  // excluding the canonical name
};

inline Entity make_drug(Rng& rng) {
  static const std::vector<std::string> kSuffix = {"mycin", "nib", "statin", "pril", "olol", "azole",
                                                   "vir",   "dine", "zepam", "cillin", "parin", "tide"};
  Entity e;
  e.canonical = syllables(rng, 2 + static_cast<int>(rng.index(2))) + rng.pick(kSuffix);
  e.synonyms.push_back(capitalize(syllables(rng, 3)));
  const std::string code = upper(syllables(rng, 1).substr(0, 1) + syllables(rng, 1).substr(0, 1));
  e.synonyms.push_back(code + "-" + std::to_string(1000 + rng.index(9000)));
  return e;
}

inline Entity make_target(Rng& rng) {
  static const std::vector<std::string> kHead = {"receptor", "kinase",    "transporter", "channel",
                                                 "protease", "synthase",  "reductase",   "oxidase"};
  static const std::vector<std::string> kEnd = {"rin", "lin", "tin", "nin", "sin"};
  static const std::vector<std::string> kSub = {"alpha", "beta", "gamma"};
  Entity e;
  const std::string root = syllables(rng, 2 + static_cast<int>(rng.index(2))) + rng.pick(kEnd);
  const std::string head = rng.pick(kHead);
  e.canonical = root + " " + head;
  e.synonyms.push_back(root + " " + head + " " + rng.pick(kSub));
  e.synonyms.push_back(upper(root.substr(0, 3) + head.substr(0, 1)) + std::to_string(1 + rng.index(9)));
  return e;
}

inline std::string fill(std::string tpl, const std::string& slot, const std::string& value) {
  for (std::size_t pos = tpl.find(slot); pos != std::string::npos; pos = tpl.find(slot, pos + value.size())) {
    tpl.replace(pos, slot.size(), value);
  }
  return tpl;
}

}  // namespace gen

struct GeneratedCorpus {
  std::vector<LabeledExample> labeled;
  std::vector<Document> unlabeled;
  std::vector<TripletSet> unlabeled_gold;  // hidden labels of the unlabeled documents
  Lexicons lexicons;
  std::vector<DtiTriplet> facts;
  std::vector<std::string> distractor_drugs;
  std::vector<std::string> distractor_targets;
};

inline void GenConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("datagen: " + m); };
  if (n_docs < 1) fail("n_docs must be >= 1");
  if (triplets_min < 1 || triplets_max < triplets_min) fail("need 1 <= triplets_min <= triplets_max");
  if (n_drugs < 1 || n_targets < 1 || n_interactions < 1) fail("lexicon sizes must be >= 1");
  if (n_interactions > static_cast<int>(gen::kInteractions.size())) {
    fail("at most " + std::to_string(gen::kInteractions.size()) + " interaction types are available");
  }
  if (n_facts < triplets_max) fail("n_facts must be >= triplets_max");
  const double combos = static_cast<double>(n_drugs) * n_targets * n_interactions;
  if (n_facts > combos) fail("n_facts exceeds the number of distinct drug/target/interaction combinations");
  if (n_distractor_entities < 0 || distractors_per_doc < 0) fail("distractor counts must be >= 0");
  if (distractors_per_doc > 0 && n_distractor_entities == 0) fail("distractors_per_doc needs distractor entities");
  if (unlabeled_fraction < 0 || unlabeled_fraction > 1) fail("unlabeled_fraction must be in [0, 1]");
  if (synonym_prob < 0 || synonym_prob > 1 || variant_prob < 0 || variant_prob > 1) fail("probabilities must be in [0, 1]");
  if (filler_min < 0 || filler_max < filler_min) fail("need 0 <= filler_min <= filler_max");
}

inline GeneratedCorpus generate_corpus(const GenConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, 0xda7a));
  gen::NamePool pool(gen::template_words());
  for (const auto& f : gen::kInteractions) {
    if (!pool.try_add({f.noun, f.verb, f.nom})) throw ConfigError("datagen: interaction table conflicts");
  }

  auto make_entities = [&](int n, auto&& maker, const char* what) {
    std::vector<gen::Entity> out;
    int attempts = 0;
    while (static_cast<int>(out.size()) < n) {
      if (++attempts > 200 * n + 1000) {
        throw ConfigError(std::string("datagen: cannot generate ") + std::to_string(n) + " distinct " + what +
                          " names");
      }
      auto e = maker(rng);
      std::vector<std::string> all{e.canonical};
      all.insert(all.end(), e.synonyms.begin(), e.synonyms.end());
      if (pool.try_add(all)) out.push_back(std::move(e));
    }
    return out;
  };
  const int n_dd = (cfg.n_distractor_entities + 1) / 2;
  const int n_dt = cfg.n_distractor_entities / 2;
  const auto drugs = make_entities(cfg.n_drugs + n_dd, gen::make_drug, "drug");
  const auto targets = make_entities(cfg.n_targets + n_dt, gen::make_target, "target");

  GeneratedCorpus out;
  for (const auto& d : drugs) out.lexicons.drugs.add(d.canonical, d.synonyms);
  for (const auto& t : targets) out.lexicons.targets.add(t.canonical, t.synonyms);
  for (int i = 0; i < cfg.n_interactions; ++i) {
    const auto& f = gen::kInteractions[static_cast<std::size_t>(i)];
    out.lexicons.interactions.add(f.noun, {f.verb, f.nom});
  }
  for (int i = 0; i < n_dd; ++i) out.distractor_drugs.push_back(drugs[static_cast<std::size_t>(cfg.n_drugs + i)].canonical);
  for (int i = 0; i < n_dt; ++i) out.distractor_targets.push_back(targets[static_cast<std::size_t>(cfg.n_targets + i)].canonical);

  // Fact base: distinct triplets over the non-distractor entities.
  std::vector<std::array<int, 3>> facts;
  std::set<std::array<int, 3>> seen;
  while (static_cast<int>(facts.size()) < cfg.n_facts) {
    std::array<int, 3> f{static_cast<int>(rng.index(static_cast<std::size_t>(cfg.n_drugs))),
                         static_cast<int>(rng.index(static_cast<std::size_t>(cfg.n_targets))),
                         static_cast<int>(rng.index(static_cast<std::size_t>(cfg.n_interactions)))};
    if (seen.insert(f).second) facts.push_back(f);
  }
  for (const auto& f : facts) {
    out.facts.push_back({drugs[static_cast<std::size_t>(f[0])].canonical, targets[static_cast<std::size_t>(f[1])].canonical,
                         gen::kInteractions[static_cast<std::size_t>(f[2])].noun});
  }

  const int n_unlabeled = static_cast<int>(std::lround(cfg.n_docs * cfg.unlabeled_fraction));
  const int n_labeled = cfg.n_docs - n_unlabeled;

  for (int doc_i = 0; doc_i < cfg.n_docs; ++doc_i) {
    Rng r(mix_seed(cfg.seed, 0x10000 + static_cast<std::uint64_t>(doc_i)));
    const int k = r.range(cfg.triplets_min, cfg.triplets_max);
    std::vector<std::array<int, 3>> chosen;
    std::set<std::size_t> used;
    while (static_cast<int>(chosen.size()) < k) {
      const std::size_t fi = r.index(facts.size());
      if (used.insert(fi).second) chosen.push_back(facts[fi]);
    }

    std::set<int> exact_d, exact_t, exact_i;
    auto drug_mention = [&](int d, bool allow_syn) {
      const auto& e = drugs[static_cast<std::size_t>(d)];
      if (allow_syn && r.bernoulli(cfg.synonym_prob)) return r.pick(e.synonyms);
      return e.canonical;
    };
    auto target_mention = [&](int t, bool allow_syn) {
      const auto& e = targets[static_cast<std::size_t>(t)];
      if (allow_syn && r.bernoulli(cfg.synonym_prob)) return r.pick(e.synonyms);
      return e.canonical;
    };
    auto render = [&](const std::string& tpl, int d, int t, int i) {
      std::string s = tpl;
      if (d >= 0 && s.find("{D}") != std::string::npos) {
        s = gen::fill(s, "{D}", drug_mention(d, true));
        exact_d.insert(d);
      }
      if (t >= 0 && s.find("{T}") != std::string::npos) {
        s = gen::fill(s, "{T}", target_mention(t, true));
        exact_t.insert(t);
      }
      if (i >= 0) {
        const auto& f = gen::kInteractions[static_cast<std::size_t>(i)];
        const std::string verb = f.verb;
        if (s.find("{N}") != std::string::npos || s.find("{Z}") != std::string::npos) exact_i.insert(i);
        s = gen::fill(s, "{N}", f.noun);
        s = gen::fill(s, "{Z}", f.nom);
        s = gen::fill(s, "{V3}", gen::third_person(verb));
        s = gen::fill(s, "{VD}", gen::past(verb));
        s = gen::fill(s, "{VG}", "to be " + gen::gerund(verb));
      }
      return gen::capitalize(s);
    };

    std::vector<std::vector<std::string>> blocks;
    for (std::size_t c = 0; c < chosen.size(); ++c) {
      const auto [d, t, i] = chosen[c];
      if (cfg.multi_sentence && c == 0) {
        blocks.push_back({render(r.pick(gen::drug_sentences()), d, -1, -1),
                          render(r.pick(gen::interaction_sentences()), -1, -1, i),
                          render(r.pick(gen::target_sentences()), -1, t, -1)});
      } else {
        blocks.push_back({render(r.pick(gen::triplet_templates()), d, t, i)});
      }
      if (r.bernoulli(cfg.variant_prob)) {
        // Plural variant of the target name, exercising the +s rules.
        blocks.push_back({gen::capitalize(gen::fill(gen::kVariantSentence, "{T}",
                                                    targets[static_cast<std::size_t>(t)].canonical + "s"))});
      }
    }
    for (const auto& [d, t, i] : chosen) {
      if (!exact_d.count(d)) blocks.push_back({render(gen::kDrugAnchor, d, -1, -1)});
      if (!exact_t.count(t)) blocks.push_back({render(gen::kTargetAnchor, -1, t, -1)});
      if (!exact_i.count(i)) blocks.push_back({render(gen::kInteractionAnchor, -1, -1, i)});
    }
    const int nd = cfg.distractors_per_doc;
    for (int x = 0; x < nd; ++x) {
      const bool as_drug = n_dt == 0 || (n_dd > 0 && r.bernoulli(0.5));
      if (as_drug) {
        const auto& e = drugs[static_cast<std::size_t>(cfg.n_drugs) + r.index(static_cast<std::size_t>(n_dd))];
        blocks.push_back({gen::capitalize(gen::fill(r.pick(gen::distractor_drug_sentences()), "{D}", e.canonical))});
      } else {
        const auto& e = targets[static_cast<std::size_t>(cfg.n_targets) + r.index(static_cast<std::size_t>(n_dt))];
        blocks.push_back({gen::capitalize(gen::fill(r.pick(gen::distractor_target_sentences()), "{T}", e.canonical))});
      }
    }
    const int nf = r.range(cfg.filler_min, cfg.filler_max);
    std::vector<std::string> fillers = gen::filler_sentences();
    r.shuffle(fillers);
    for (int x = 0; x < nf && x < static_cast<int>(fillers.size()); ++x) blocks.push_back({fillers[static_cast<std::size_t>(x)]});
    r.shuffle(blocks);

    std::vector<std::string> sentences;
    for (const auto& b : blocks) sentences.insert(sentences.end(), b.begin(), b.end());

    const auto [d0, t0, i0] = chosen[0];
    std::string title = r.pick(gen::titles());
    title = gen::fill(title, "{D}", drugs[static_cast<std::size_t>(d0)].canonical);
    title = gen::fill(title, "{T}", targets[static_cast<std::size_t>(t0)].canonical);
    title = gen::fill(title, "{Z}", gen::kInteractions[static_cast<std::size_t>(i0)].nom);

    Document doc;
    char id[32];
    std::snprintf(id, sizeof(id), "syn%llu-%05d", static_cast<unsigned long long>(cfg.seed), doc_i);
    doc.id = id;
    doc.title = gen::capitalize(title);
    doc.abstract = join(sentences, " ");
    TripletSet gold;
    for (const auto& [d, t, i] : chosen) {
      gold.insert({drugs[static_cast<std::size_t>(d)].canonical, targets[static_cast<std::size_t>(t)].canonical,
                   gen::kInteractions[static_cast<std::size_t>(i)].noun});
    }
    if (doc_i < n_labeled) {
      out.labeled.push_back({std::move(doc), std::move(gold)});
    } else {
      out.unlabeled.push_back(std::move(doc));
      out.unlabeled_gold.push_back(std::move(gold));
    }
  }
  return out;
}

/// Writes labeled.jsonl, unlabeled.jsonl and lexicons/ under `dir`.
inline void save_generated(const GeneratedCorpus& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_corpus(g.labeled, dir / "labeled.jsonl");
  save_corpus(as_unlabeled(g.unlabeled), dir / "unlabeled.jsonl");
  save_lexicons(g.lexicons, dir / "lexicons");
}

}  // namespace dtigen
