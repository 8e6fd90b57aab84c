// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>

#include "dtigen/bpe.hpp"
#include "dtigen/linearize.hpp"
#include "dtigen/rng.hpp"

namespace fs = std::filesystem;
using namespace dtigen;

TEST(Linearize, SerializeInEachOrder) {
  const std::vector<DtiTriplet> ts = {{"Aspirin", "COX-1", "inhibitor"}};
  EXPECT_EQ(serialize(ts, TripletOrder::kDIT), "<d> Aspirin <i> inhibitor <t> COX-1");
  EXPECT_EQ(serialize(ts, TripletOrder::kTDI), "<t> COX-1 <d> Aspirin <i> inhibitor");
  EXPECT_EQ(serialize(ts, TripletOrder::kIDT), "<i> inhibitor <d> Aspirin <t> COX-1");
}

TEST(Linearize, OrderNamesRoundTrip) {
  for (auto o : kAllOrders) EXPECT_EQ(parse_order(to_string(o)), o);
  EXPECT_THROW(parse_order("XYZ"), Error);
}

TEST(Linearize, RejectsUnserializableFields) {
  EXPECT_THROW(serialize(std::vector<DtiTriplet>{{"", "t", "i"}}), Error);
  EXPECT_THROW(serialize(std::vector<DtiTriplet>{{"a <t> b", "t", "i"}}), Error);
}

TEST(Linearize, ParseOfSerializeIsDedupe) {
  Rng rng(5);
  const std::vector<std::string> words = {"alpha", "Beta", "kinase", "x", "5-HT", "h3", "(R)"};
  for (int c = 0; c < 200; ++c) {
    std::vector<DtiTriplet> list;
    const std::size_t n = rng.index(5);
    for (std::size_t i = 0; i < n; ++i) {
      auto field = [&] {
        std::string s = words[rng.index(words.size())];
        if (rng.index(2)) s += " " + words[rng.index(words.size())];
        return s;
      };
      list.push_back({field(), field(), field()});
      if (rng.index(3) == 0) list.push_back(list.front());
    }
    for (auto o : kAllOrders) {
      ASSERT_TRUE(parse(serialize(list, o), o) == TripletSet(list.begin(), list.end()));
    }
  }
}

TEST(Linearize, ParseRecoversFromDamage) {
  EXPECT_TRUE(parse("").empty());
  EXPECT_TRUE(parse("<d> a <i> <t> c").empty());
  const auto s = parse("junk <d> a <i> b <d> x <i> y <t> z <t> stray <d> q");
  ASSERT_EQ(s.size(), 1u);
  EXPECT_TRUE(s.contains({"x", "z", "y"}));
  // Wrong order for TDI is dropped, right order kept.
  EXPECT_TRUE(parse("<d> a <i> b <t> c", TripletOrder::kTDI).empty());
  EXPECT_TRUE(parse("<t> c <d> a <i> b", TripletOrder::kTDI).contains({"a", "c", "b"}));
}

TEST(Linearize, SerializedLength) {
  const std::vector<DtiTriplet> ts = {{"a b", "c", "d e f"}};
  EXPECT_EQ(serialized_length(ts), split_whitespace(serialize(ts)).size());
}

TEST(Bpe, MergesMostFrequentPairWithLexicographicTies) {
  const auto m = train_bpe({"low low lower"}, 2);
  ASSERT_EQ(m.merges().size(), 2u);
  EXPECT_EQ(m.merges()[0], (std::pair<std::string, std::string>{"l", "o"}));
  EXPECT_EQ(m.merges()[1], (std::pair<std::string, std::string>{"lo", "w</w>"}));
  const auto tie = train_bpe({"ab cd"}, 1);
  EXPECT_EQ(tie.merges()[0], (std::pair<std::string, std::string>{"a", "b</w>"}));
}

TEST(Bpe, StopsWhenNothingToMerge) {
  EXPECT_EQ(train_bpe({"a b c"}, 10).merges().size(), 0u);
  EXPECT_THROW(train_bpe({}, 10), ConfigError);
}

TEST(Bpe, EncodeDecodeRoundTrip) {
  const std::vector<std::string> texts = {"Zorvanib inhibits marnase kinase in vitro.",
                                          "<d> zorvanib <i> inhibitor <t> marnase kinase"};
  const auto m = train_bpe(texts, 40);
  for (const auto& t : texts) EXPECT_EQ(m.decode(m.encode(t)), join(split_whitespace(t), " ")) << t;
  // Unseen characters become replacement characters, words stay separate.
  EXPECT_EQ(m.decode(m.encode("zq kinase")), "z\xEF\xBF\xBD kinase");
}

TEST(Bpe, ReservedTokensAreAtomic) {
  const auto m = train_bpe({"<d> <i> <t> <d> <i> <t> dit"}, 20);
  for (const auto* tag : {"<d>", "<i>", "<t>"}) {
    const auto ids = m.encode(tag);
    ASSERT_EQ(ids.size(), 1u);
    EXPECT_EQ(m.token(ids[0]), tag);
  }
  EXPECT_NE(m.pad_id(), m.unk_id());
  EXPECT_NE(m.sos_id(), m.eos_id());
}

TEST(Bpe, JsonRoundTripPreservesVocabulary) {
  const auto m = train_bpe({"the kinase the kinases the kinased"}, 6);
  const auto back = BpeModel::from_json(nlohmann::json::parse(m.to_json().dump()));
  EXPECT_EQ(back.tokens(), m.tokens());
  EXPECT_EQ(back.merges(), m.merges());
  EXPECT_EQ(back.vocab_hash(), m.vocab_hash());
  EXPECT_EQ(back.encode("kinases the"), m.encode("kinases the"));
  const auto other = train_bpe({"the kinase the kinases the kinased"}, 5);
  EXPECT_NE(other.vocab_hash(), m.vocab_hash());

  const fs::path p = fs::temp_directory_path() / "dtigen_bpe_test.json";
  save_bpe(m, p);
  EXPECT_EQ(load_bpe(p).vocab_hash(), m.vocab_hash());
  fs::remove(p);
}

TEST(Bpe, MalformedJsonIsAParseError) {
  EXPECT_THROW(BpeModel::from_json(nlohmann::json::parse("{\"merges\": 3}")), ParseError);
  EXPECT_THROW(
      BpeModel::from_json(nlohmann::json::parse(R"({"merges":[],"vocab":{"a":0,"b":0},"reserved":[]})")),
      ParseError);
}
