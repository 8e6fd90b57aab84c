// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "../support/oracles.hpp"
#include "dtigen/datagen.hpp"
#include "dtigen/fuzzymatch.hpp"
#include "dtigen/rng.hpp"

using namespace dtigen;

namespace {

std::string random_string(Rng& rng, std::size_t max_len) {
  static const std::string alphabet = "abcde -";
  std::string s;
  const std::size_t n = rng.index(max_len + 1);
  for (std::size_t i = 0; i < n; ++i) s += alphabet[rng.index(alphabet.size())];
  return s;
}

std::vector<oracle::Span> spans_of(const std::vector<MatchSpan>& xs) {
  std::vector<oracle::Span> out;
  for (const auto& x : xs) out.push_back({x.start, x.end});
  return out;
}

}  // namespace

TEST(Levenshtein, MatchesDynamicProgrammingReference) {
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const auto a = random_string(rng, 12);
    const auto b = random_string(rng, 12);
    const int d = oracle::levenshtein(a, b);
    ASSERT_EQ(levenshtein(a, b), d) << a << " / " << b;
    for (int limit = 0; limit <= 4; ++limit) {
      ASSERT_EQ(bounded_levenshtein(a, b, limit), std::min(d, limit + 1)) << a << " / " << b << " @" << limit;
    }
  }
}

TEST(Levenshtein, KnownValues) {
  EXPECT_EQ(levenshtein("kitten", "sitting"), 3);
  EXPECT_EQ(levenshtein("", "abc"), 3);
  EXPECT_EQ(levenshtein("abc", "abc"), 0);
  EXPECT_EQ(longest_common_substring("dihydroorotate", "orotate"), 7u);
  EXPECT_EQ(common_words("Histamine H3 receptor", "h3 receptor antagonist"), 2u);
}

TEST(EditBudget, FloorOfLengthOverEightWithMinimum) {
  const EditBudget b;
  EXPECT_EQ(b(3), 0);
  EXPECT_EQ(b(4), 1);
  EXPECT_EQ(b(15), 1);
  EXPECT_EQ(b(16), 2);
  EXPECT_EQ(b(33), 4);
}

TEST(Inflection, StemsShareVariants) {
  EXPECT_EQ(inflection_stem("activates"), inflection_stem("activated"));
  EXPECT_EQ(inflection_stem("activating"), inflection_stem("activate"));
  EXPECT_EQ(inflection_stem("class"), "class");
  EXPECT_TRUE(is_variant("inhibits", "inhibit"));
  EXPECT_FALSE(is_variant("inhibit", "inhibit"));
  EXPECT_FALSE(is_variant("is", "i"));
}

TEST(Retrieve, PluralIsFound) {
  const auto spans = retrieve("inhibitor", {}, Document{"d", "", "Then two inhibitors were added."});
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0].text, "inhibitors");
}

TEST(Retrieve, AbsentQueryGivesNothing) {
  EXPECT_TRUE(retrieve("ergosterol", {}, Document{"d", "", "Nothing to see in this abstract."}).empty());
}

TEST(Retrieve, SynonymMatches) {
  const Document doc{"d", "", "It binds cyclooxygenase-1 strongly."};
  const auto spans = retrieve("COX-1", {"cyclooxygenase-1"}, doc);
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0].text, "cyclooxygenase-1");
  EXPECT_EQ(doc.text().substr(spans[0].start, spans[0].end - spans[0].start), spans[0].text);
}

TEST(Retrieve, CaseInsensitiveAndPunctuationTrimmed) {
  const auto spans = retrieve("aspirin", {}, Document{"d", "ASPIRIN!", "(aspirin) was given."});
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0].text, "ASPIRIN");
  EXPECT_EQ(spans[1].text, "aspirin");
}

TEST(Retrieve, AgreesWithBruteForceOnRandomDocuments) {
  const std::vector<std::string> vocab = {"kinase",    "kinases", "kinaze",   "Kinase.", "(kinase)", "inhibitor",
                                          "inhibitors", "inhibited", "inhibitng", "of",     "the",      "protein",
                                          "proteins",  "A",       "x-ray",    "kinase-inhibitor", "binds", "bind"};
  const std::vector<std::pair<std::string, std::vector<std::string>>> queries = {
      {"kinase", {}},
      {"kinase inhibitor", {}},
      {"protein kinase", {"kinase protein"}},
      {"inhibitor", {"binds"}},
      {"the protein kinase inhibitor", {}},
      {"A", {}},
  };
  Rng rng(17);
  for (int c = 0; c < 150; ++c) {
    std::string text;
    while (true) {
      std::string w = vocab[rng.index(vocab.size())];
      if (text.size() + w.size() + 1 > 500) break;
      text += (text.empty() ? "" : (rng.index(6) == 0 ? "  " : " ")) + w;
      if (rng.index(40) == 0) break;
    }
    const DocumentIndex index(text);
    for (const auto& [q, syns] : queries) {
      const auto got = spans_of(retrieve(q, syns, index));
      const auto want = oracle::retrieve(q, syns, text);
      ASSERT_EQ(got, want) << "query '" << q << "' in: " << text;
    }
  }
}

TEST(Classify, EmptySpansAreNegativeNone) {
  const auto c = classify("x", {});
  EXPECT_EQ(c.category, PatternCategory::kNegative);
  EXPECT_EQ(c.rule, PatternRule::kNone);
}

TEST(Classify, CategoryAgreesWithRule) {
  const std::vector<std::string> texts = {"aspirin", "aspirins and aspirined", "aspirn", "other", "nothing here at all"};
  for (const auto& t : texts) {
    const auto rep = match_query("aspirin", {}, DocumentIndex(t));
    switch (rep.pattern.rule) {
      case PatternRule::kP1:
      case PatternRule::kP2:
        EXPECT_EQ(rep.pattern.category, PatternCategory::kReliable);
        EXPECT_EQ(rep.phi, 5);
        break;
      case PatternRule::kP3:
      case PatternRule::kP4:
      case PatternRule::kP5:
        EXPECT_EQ(rep.pattern.category, PatternCategory::kPositive);
        EXPECT_EQ(rep.phi, 1);
        break;
      default:
        EXPECT_EQ(rep.pattern.category, PatternCategory::kNegative);
        EXPECT_EQ(rep.phi, -1);
    }
  }
}

TEST(Classify, MeaninglessWordsAreP6) {
  const auto c = classify("activator", {{0, 5, "other"}});
  EXPECT_EQ(c.rule, PatternRule::kP6);
  EXPECT_EQ(phi(c), -1);
  EXPECT_TRUE(is_meaningless_word("Unknown"));
}

TEST(Phi, Values) {
  EXPECT_EQ(phi({PatternCategory::kReliable, PatternRule::kP1}), 5);
  EXPECT_EQ(phi({PatternCategory::kPositive, PatternRule::kP4}), 1);
  EXPECT_EQ(phi({PatternCategory::kNegative, PatternRule::kNone}), -1);
}

TEST(TripletScore, ExtremesAndMix) {
  Lexicons lex;
  const Document all{"d", "", "Zorvanib is an inhibitor of marnase kinase."};
  EXPECT_EQ(triplet_score(all, {"zorvanib", "marnase kinase", "inhibitor"}, lex), 15);
  EXPECT_EQ(triplet_score(Document{"d", "", "Unrelated words only."}, {"zorvanib", "marnase kinase", "inhibitor"}, lex),
            -3);
  // drug reliable, target positive (two variant spans), interaction absent
  const Document mix{"d", "", "Zorvanib acts on kinases and other kinased forms."};
  EXPECT_EQ(triplet_score(mix, {"zorvanib", "kinase", "agonist"}, lex), 5 + 1 - 1);
}

TEST(TripletScore, RangeOnGeneratedCorpus) {
  GenConfig gc;
  gc.n_docs = 24;
  const auto g = generate_corpus(gc);
  for (const auto& ex : g.labeled) {
    for (const auto& f : g.facts) {
      const int s = triplet_score(ex.document, f, g.lexicons);
      EXPECT_GE(s, -3);
      EXPECT_LE(s, 15);
      EXPECT_TRUE(s == -3 || s == -1 || s == 1 || s == 3 || s == 5 || s == 7 || s == 9 || s == 11 || s == 15);
    }
  }
}

namespace {

LabeledExample example(const std::string& id, const std::string& text, const DtiTriplet& t) {
  LabeledExample ex;
  ex.document = {id, "", text};
  ex.triplets.insert(t);
  return ex;
}

}  // namespace

TEST(FilterAndSplit, DropsNegativeAndCutsExactly) {
  Lexicons lex;
  const DtiTriplet t{"zorvanib", "marnase kinase", "inhibitor"};
  std::vector<LabeledExample> xs;
  for (int i = 0; i < 6; ++i) xs.push_back(example("full" + std::to_string(i), "Zorvanib, an inhibitor of marnase kinase.", t));
  xs.push_back(example("five", "Zorvanib acts on marnase kinases and marnase kinased forms.", t));
  xs.push_back(example("three", "Nothing but marnase kinase here.", t));
  xs.push_back(example("neg", "Completely unrelated.", t));
  const auto f = filter_and_split(xs, lex, 100, {2, 1, 5}, 9);
  EXPECT_EQ(f.n_input, 9u);
  EXPECT_EQ(f.n_negative, 1u);
  EXPECT_EQ(f.test.size(), 2u);
  EXPECT_EQ(f.valid.size(), 1u);
  EXPECT_EQ(f.train.size(), 5u);
  for (const auto* part : {&f.test, &f.valid, &f.train}) {
    for (const auto& ex : *part) EXPECT_GE(example_score(ex, lex), 0);
  }
  for (const auto& ex : f.test) EXPECT_EQ(example_score(ex, lex), 15);
  EXPECT_THROW(filter_and_split(xs, lex, 100, {2, 2, 5}, 9), Error);
  EXPECT_THROW(filter_and_split(xs, lex, 4, {2, 2, 5}, 9), ConfigError);
}

TEST(FilterAndSplit, BoundaryScores) {
  Lexicons lex;
  const DtiTriplet t{"zorvanib", "marnase kinase", "inhibitor"};
  // Two inflected drug mentions: positive drug, everything else missing.
  const auto minus_one = example("m", "Zorvanibs and zorvanibed samples.", t);
  // Positive drug and positive target, no interaction.
  const auto plus_one = example("p", "Zorvanibs and zorvanibed samples on marnase kinases and marnase kinased cells.", t);
  EXPECT_EQ(example_score(minus_one, lex), -1);
  EXPECT_EQ(example_score(plus_one, lex), 1);
  const auto f = filter_and_split({minus_one, plus_one}, lex, 1, {0, 0, 1}, 1);
  ASSERT_EQ(f.train.size(), 1u);
  EXPECT_EQ(f.train[0].document.id, "p");
  EXPECT_EQ(f.n_negative, 1u);
}

TEST(FilterAndSplit, SeedOnlyShufflesTies) {
  Lexicons lex;
  const DtiTriplet t{"zorvanib", "marnase kinase", "inhibitor"};
  std::vector<LabeledExample> xs;
  for (int i = 0; i < 12; ++i) xs.push_back(example("e" + std::to_string(i), "Zorvanib, an inhibitor of marnase kinase.", t));
  const auto a = filter_and_split(xs, lex, 12, {4, 4, 4}, 1);
  const auto b = filter_and_split(xs, lex, 12, {4, 4, 4}, 1);
  const auto c = filter_and_split(xs, lex, 12, {4, 4, 4}, 2);
  auto ids = [](const std::vector<LabeledExample>& v) {
    std::vector<std::string> out;
    for (const auto& x : v) out.push_back(x.document.id);
    return out;
  };
  EXPECT_EQ(ids(a.test), ids(b.test));
  EXPECT_NE(ids(a.test), ids(c.test));
}
