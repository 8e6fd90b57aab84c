// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "dtigen/corpus.hpp"
#include "dtigen/text.hpp"

namespace fs = std::filesystem;
using namespace dtigen;

TEST(Normalize, CasefoldsAndCollapsesWhitespace) {
  EXPECT_EQ(normalize_text("  Aspirin \t  ACID\n"), "aspirin acid");
  EXPECT_EQ(normalize_text(""), "");
  EXPECT_EQ(normalize_text("   "), "");
}

TEST(Normalize, PatternModeDropsPunctuationAndBrackets) {
  EXPECT_EQ(normalize_text("Aspirin (ASA).", NormalizeMode::kPattern), "aspirin asa");
  EXPECT_EQ(normalize_text("COX-1", NormalizeMode::kPattern), "cox1");
  EXPECT_EQ(normalize_text("[a]b", NormalizeMode::kPattern), "a b");
}

TEST(Normalize, NonAsciiBytesPassThrough) {
  EXPECT_EQ(normalize_text("\xC3\x89tude"), "\xC3\x89tude");
}

TEST(Text, SplitAndJoin) {
  const auto w = split_whitespace("  a bb\tccc \n");
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(join(w, "|"), "a|bb|ccc");
}

TEST(TripletSet, DeduplicatesUnderNormalization) {
  TripletSet s;
  EXPECT_TRUE(s.insert({"Aspirin", "COX-1", "inhibitor"}));
  EXPECT_FALSE(s.insert({"aspirin ", "cox-1", "INHIBITOR"}));
  EXPECT_TRUE(s.insert({"aspirin", "cox-2", "inhibitor"}));
  EXPECT_EQ(s.size(), 2u);
  EXPECT_TRUE(s.contains({"ASPIRIN", "COX-2", "Inhibitor"}));
  // The first surface form is the one kept.
  EXPECT_EQ(s.by_key().begin()->second.drug, "Aspirin");
}

TEST(TripletSet, EqualityIgnoresSurfaceForm) {
  const TripletSet a{{"A", "B", "C"}, {"d", "e", "f"}};
  const TripletSet b{{"d", "E", "f"}, {"a", "b", "c"}};
  EXPECT_TRUE(a == b);
  EXPECT_FALSE((a == TripletSet{{"a", "b", "c"}}));
}

TEST(Corpus, JsonlRoundTrip) {
  std::vector<LabeledExample> xs(2);
  xs[0].document = {"d1", "A title", "Some abstract text."};
  xs[0].triplets = {{"drug a", "target b", "inhibitor"}};
  xs[1].document = {"d2", "", "Only an abstract."};
  std::stringstream ss;
  write_corpus(ss, xs);
  const auto back = read_corpus(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].document.id, "d1");
  EXPECT_EQ(back[0].document.title, "A title");
  EXPECT_TRUE(back[0].triplets == xs[0].triplets);
  EXPECT_TRUE(back[1].triplets.empty());
}

TEST(Corpus, FileRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "dtigen_corpus_test";
  fs::remove_all(dir);
  std::vector<LabeledExample> xs(1);
  xs[0].document = {"x", "T", "A"};
  xs[0].triplets = {{"d", "t", "i"}};
  save_corpus(xs, dir / "sub" / "c.jsonl");
  const auto back = load_corpus(dir / "sub" / "c.jsonl");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_TRUE(back[0].triplets == xs[0].triplets);
  fs::remove_all(dir);
}

TEST(Corpus, ParseErrorsNameTheLine) {
  auto fails = [](const std::string& body) {
    std::stringstream ss(body);
    try {
      read_corpus(ss);
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(fails("{\"id\":\"a\",\"title\":\"t\",\"abstract\":\"x\"}\nnot json\n").find("line 2"), std::string::npos);
  EXPECT_FALSE(fails("{\"title\":\"t\",\"abstract\":\"x\"}").empty());
  EXPECT_FALSE(fails("{\"id\":\" \",\"title\":\"t\",\"abstract\":\"x\"}").empty());
  EXPECT_FALSE(fails("{\"id\":\"a\",\"title\":\"\",\"abstract\":\"  \"}").empty());
  EXPECT_FALSE(fails("{\"id\":\"a\",\"title\":\"t\",\"abstract\":\"x\",\"triplets\":{}}").empty());
  EXPECT_FALSE(
      fails("{\"id\":\"a\",\"title\":\"t\",\"abstract\":\"x\",\"triplets\":[{\"drug\":\"\",\"target\":\"b\","
            "\"interaction\":\"c\"}]}")
          .empty());
  EXPECT_FALSE(fails("{\"id\":\"a\",\"title\":\"t\",\"abstract\":\"x\"}\n{\"id\":\"a\",\"title\":\"t\",\"abstract\":\"y\"}")
                   .empty());
}

TEST(Corpus, BlankLinesAreSkipped) {
  std::stringstream ss("\n{\"id\":\"a\",\"title\":\"t\",\"abstract\":\"x\"}\n\n");
  EXPECT_EQ(read_corpus(ss).size(), 1u);
}

TEST(Lexicon, AliasesAndLookup) {
  Lexicon l;
  l.add("aspirin", {"acetylsalicylic acid", "ASA"});
  EXPECT_TRUE(l.contains("Aspirin"));
  const auto a = l.aliases("aspirin");
  EXPECT_EQ(a, (std::vector<std::string>{"aspirin", "acetylsalicylic acid", "asa"}));
  EXPECT_EQ(l.aliases("Ibuprofen"), std::vector<std::string>{"ibuprofen"});
  EXPECT_THROW(l.add("  ", {}), ConfigError);
}

TEST(Lexicon, DirectoryRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "dtigen_lex_test";
  fs::remove_all(dir);
  Lexicons lex;
  lex.drugs.add("aspirin", {"asa"});
  lex.targets.add("cox-1", {});
  lex.interactions.add("inhibitor", {"inhibits"});
  save_lexicons(lex, dir);
  const auto back = load_lexicons(dir);
  EXPECT_TRUE(back.drugs.contains("aspirin"));
  EXPECT_EQ(back.drugs.aliases("aspirin"), lex.drugs.aliases("aspirin"));
  EXPECT_TRUE(back.targets.contains("cox-1"));
  EXPECT_TRUE(back.interactions.contains("inhibitor"));
  EXPECT_THROW(load_lexicons(dir / "missing"), Error);
  fs::remove_all(dir);
}
