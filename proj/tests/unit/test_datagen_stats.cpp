// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "../support/oracles.hpp"
#include "dtigen/datagen.hpp"
#include "dtigen/semisup.hpp"
#include "dtigen/stats.hpp"

using namespace dtigen;

namespace {

std::string dump(const GeneratedCorpus& g) {
  std::ostringstream ss;
  write_corpus(ss, g.labeled);
  for (const auto& d : g.unlabeled) ss << d.id << '|' << d.title << '|' << d.abstract << '\n';
  ss << to_json(g.lexicons.drugs).dump() << to_json(g.lexicons.targets).dump()
     << to_json(g.lexicons.interactions).dump();
  return ss.str();
}

}  // namespace

TEST(Datagen, SameSeedSameCorpus) {
  GenConfig c;
  c.n_docs = 20;
  c.unlabeled_fraction = 0.3;
  EXPECT_EQ(dump(generate_corpus(c)), dump(generate_corpus(c)));
  GenConfig d = c;
  d.seed = 2;
  EXPECT_NE(dump(generate_corpus(c)), dump(generate_corpus(d)));
}

TEST(Datagen, CountsAndIds) {
  GenConfig c;
  c.n_docs = 40;
  c.unlabeled_fraction = 0.25;
  c.triplets_min = 1;
  c.triplets_max = 3;
  const auto g = generate_corpus(c);
  EXPECT_EQ(g.labeled.size(), 30u);
  EXPECT_EQ(g.unlabeled.size(), 10u);
  EXPECT_EQ(g.unlabeled_gold.size(), g.unlabeled.size());
  std::set<std::string> ids;
  for (const auto& ex : g.labeled) {
    EXPECT_TRUE(ids.insert(ex.document.id).second);
    EXPECT_GE(ex.triplets.size(), 1u);
    EXPECT_LE(ex.triplets.size(), 3u);
  }
  for (const auto& d : g.unlabeled) EXPECT_TRUE(ids.insert(d.id).second);
}

TEST(Datagen, GoldEntitiesAreSpotted) {
  GenConfig c;
  c.n_docs = 32;
  const auto g = generate_corpus(c);
  for (const auto& ex : g.labeled) {
    const auto spotted = spot_entities(ex.document, g.lexicons);
    for (const auto& [k, t] : ex.triplets.by_key()) {
      EXPECT_TRUE(spotted.drugs.count(k[0])) << ex.document.id << " misses drug " << k[0];
      EXPECT_TRUE(spotted.targets.count(k[1])) << ex.document.id << " misses target " << k[1];
      EXPECT_TRUE(spotted.interactions.count(k[2])) << ex.document.id << " misses interaction " << k[2];
    }
  }
}

TEST(Datagen, DistractorsNeverInGold) {
  GenConfig c;
  c.n_docs = 32;
  const auto g = generate_corpus(c);
  ASSERT_FALSE(g.distractor_drugs.empty());
  std::set<std::string> gold_drugs, gold_targets;
  for (const auto& f : g.facts) {
    gold_drugs.insert(normalize_text(f.drug));
    gold_targets.insert(normalize_text(f.target));
  }
  for (const auto& d : g.distractor_drugs) EXPECT_FALSE(gold_drugs.count(normalize_text(d)));
  for (const auto& t : g.distractor_targets) EXPECT_FALSE(gold_targets.count(normalize_text(t)));
}

TEST(Datagen, WithoutDistractorsSpottedEntitiesBelongToGold) {
  GenConfig c;
  c.n_docs = 24;
  c.n_distractor_entities = 0;
  c.distractors_per_doc = 0;
  const auto g = generate_corpus(c);
  for (const auto& ex : g.labeled) {
    std::set<std::string> drugs, targets;
    for (const auto& [k, t] : ex.triplets.by_key()) {
      drugs.insert(k[0]);
      targets.insert(k[1]);
    }
    const auto s = spot_entities(ex.document, g.lexicons);
    for (const auto& d : s.drugs) EXPECT_TRUE(drugs.count(d)) << ex.document.id << ": " << d;
    for (const auto& t : s.targets) EXPECT_TRUE(targets.count(t)) << ex.document.id << ": " << t;
  }
}

TEST(Datagen, MultiSentenceSpreadsATriplet) {
  GenConfig c;
  c.n_docs = 24;
  c.multi_sentence = true;
  const auto g = generate_corpus(c);
  for (const auto& ex : g.labeled) {
    // Sentence index of each abstract token, from the oracle's tokenization.
    const auto words = oracle::words(ex.document.abstract);
    std::vector<std::size_t> sentence_of(words.size());
    std::size_t s = 0;
    for (std::size_t i = 0; i < words.size(); ++i) {
      sentence_of[i] = s;
      const char last = words[i].back();
      if (last == '.' || last == '!' || last == '?') ++s;
    }
    auto sentences_with = [&](const std::string& q, const std::vector<std::string>& syns) {
      std::set<std::size_t> out;
      for (const auto& span : oracle::retrieve(q, syns, ex.document.abstract)) {
        out.insert(sentence_of[oracle::token_at(ex.document.abstract, span.start)]);
      }
      return out;
    };
    bool spread = false;
    for (const auto& t : ex.triplets) {
      const auto d = sentences_with(t.drug, g.lexicons.drugs.aliases(t.drug));
      const auto tt = sentences_with(t.target, g.lexicons.targets.aliases(t.target));
      bool shared = false;
      for (auto x : d) shared = shared || tt.count(x);
      spread = spread || (!d.empty() && !tt.empty() && !shared);
    }
    EXPECT_TRUE(spread) << ex.document.id;
  }
}

TEST(Datagen, InvalidConfigsAreRejected) {
  GenConfig c;
  c.n_docs = 0;
  EXPECT_THROW(generate_corpus(c), ConfigError);
  c = GenConfig{};
  c.n_interactions = 50;
  EXPECT_THROW(generate_corpus(c), ConfigError);
  c = GenConfig{};
  c.n_drugs = 1;
  c.n_targets = 1;
  c.n_interactions = 1;
  EXPECT_THROW(generate_corpus(c), ConfigError);
  c = GenConfig{};
  c.unlabeled_fraction = 1.5;
  EXPECT_THROW(generate_corpus(c), ConfigError);
}

TEST(Datagen, ConfigJsonRoundTrip) {
  GenConfig c;
  c.seed = 77;
  c.n_docs = 13;
  c.multi_sentence = false;
  const auto back = gen_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
}

TEST(Sentences, Cases) {
  EXPECT_EQ(count_sentences(""), 0u);
  EXPECT_EQ(count_sentences("One."), 1u);
  EXPECT_EQ(count_sentences("One. Two!  Three?"), 3u);
  EXPECT_EQ(count_sentences("No terminator"), 1u);
  EXPECT_EQ(count_sentences("Dose was 2.5 mg. Done"), 2u);
  EXPECT_EQ(count_sentences("Wait... what?!"), 2u);
  EXPECT_EQ(count_sentences(". . ."), 0u);
  EXPECT_EQ(count_sentences("A . B"), 2u);
  EXPECT_EQ(count_sentences(Document{"d", "A title", "First. Second."}), 3u);
  EXPECT_EQ(count_sentences(Document{"d", "  ", "First."}), 1u);
}

TEST(Sentences, AgreeWithTokenRecount) {
  Rng rng(8);
  const std::vector<std::string> pieces = {"word", "a.b", "end.", "why?", "wow!", "...", ".", "x", "2.5", "?!"};
  for (int c = 0; c < 500; ++c) {
    std::string text;
    const std::size_t n = rng.index(12);
    for (std::size_t i = 0; i < n; ++i) text += (i ? " " : "") + pieces[rng.index(pieces.size())];
    ASSERT_EQ(count_sentences(text), oracle::sentence_count(text)) << text;
  }
}

TEST(Stats, CorpusSummary) {
  GenConfig c;
  c.n_docs = 16;
  const auto g = generate_corpus(c);
  const auto s = corpus_stats(g.labeled, g.lexicons);
  EXPECT_EQ(s.documents, 16u);
  std::size_t triplets = 0, words = 0;
  std::set<std::string> drugs;
  for (const auto& ex : g.labeled) {
    triplets += ex.triplets.size();
    words += oracle::word_count(ex.document);
    for (const auto& [k, t] : ex.triplets.by_key()) drugs.insert(k[0]);
  }
  EXPECT_EQ(s.triplets, triplets);
  EXPECT_EQ(s.words, words);
  EXPECT_EQ(s.distinct_drugs, drugs.size());
  std::size_t hist = 0;
  for (const auto& [k, n] : s.interactions) hist += n;
  EXPECT_EQ(hist, triplets);
  EXPECT_EQ(s.min_dt.computable + s.min_dt.missing, triplets);
  const auto j = to_json(s);
  EXPECT_EQ(j["documents"], 16);
  EXPECT_TRUE(j.contains("min_dt_distance"));
}

TEST(Stats, MinDistanceMatchesOracle) {
  Lexicons lex;
  lex.drugs.add("zorvanib", {"zrv-1"});
  const Document doc{"d", "", "ZRV-1 was tested . Later the marnase kinase was blocked by zorvanib ."};
  const DtiTriplet t{"zorvanib", "marnase kinase", "inhibitor"};
  const auto d = min_dt_distance(doc, t, lex);
  ASSERT_TRUE(d.has_value());
  EXPECT_EQ(*d, *oracle::min_dt(doc.text(), t.drug, lex.drugs.aliases(t.drug), t.target, {}));
  EXPECT_EQ(*d, 5u);
  EXPECT_FALSE(min_dt_distance(Document{"d", "", "only zorvanib"}, t, lex).has_value());
}
