// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dtigen/corpus.hpp"
#include "dtigen/error.hpp"
#include "dtigen/text.hpp"

namespace dtigen {

inline constexpr std::string_view kDrugTag = "<d>";
inline constexpr std::string_view kInteractionTag = "<i>";
inline constexpr std::string_view kTargetTag = "<t>";

/// Order in which the three elements of a triplet are emitted. DIT is
/// drug, interaction, target.
enum class TripletOrder { kDIT, kDTI, kIDT, kITD, kTID, kTDI };

inline constexpr std::array<TripletOrder, 6> kAllOrders = {
    TripletOrder::kDIT, TripletOrder::kDTI, TripletOrder::kIDT,
    TripletOrder::kITD, TripletOrder::kTID, TripletOrder::kTDI};

inline std::string to_string(TripletOrder o) {
  static constexpr const char* kNames[] = {"DIT", "DTI", "IDT", "ITD", "TID", "TDI"};
  return kNames[static_cast<int>(o)];
}

inline TripletOrder parse_order(std::string_view s) {
  for (auto o : kAllOrders) {
    if (to_string(o) == s) return o;
  }
  throw ConfigError("unknown triplet order \"" + std::string(s) +
                    "\" (expected one of DIT, DTI, IDT, ITD, TID, TDI)");
}

inline std::array<Field, 3> fields_in(TripletOrder o) {
  using F = Field;
  switch (o) {
    case TripletOrder::kDIT:
      return {F::kDrug, F::kInteraction, F::kTarget};
    case TripletOrder::kDTI:
      return {F::kDrug, F::kTarget, F::kInteraction};
    case TripletOrder::kIDT:
      return {F::kInteraction, F::kDrug, F::kTarget};
    case TripletOrder::kITD:
      return {F::kInteraction, F::kTarget, F::kDrug};
    case TripletOrder::kTID:
      return {F::kTarget, F::kInteraction, F::kDrug};
    case TripletOrder::kTDI:
      return {F::kTarget, F::kDrug, F::kInteraction};
  }
  return {F::kDrug, F::kInteraction, F::kTarget};
}

inline std::string_view tag_of(Field f) {
  switch (f) {
    case Field::kDrug:
      return kDrugTag;
    case Field::kTarget:
      return kTargetTag;
    case Field::kInteraction:
      return kInteractionTag;
  }
  return kDrugTag;
}

inline std::optional<Field> field_of_tag(std::string_view tok) {
  if (tok == kDrugTag) return Field::kDrug;
  if (tok == kTargetTag) return Field::kTarget;
  if (tok == kInteractionTag) return Field::kInteraction;
  return std::nullopt;
}

/// "<d> Aspirin <i> inhibit <t> COX-1 <d> ..." for DIT. Field whitespace is
/// collapsed; a field that is empty or contains a tag token is rejected.
inline std::string serialize(const std::vector<DtiTriplet>& triplets,
                             TripletOrder order = TripletOrder::kDIT) {
  std::vector<std::string> toks;
  for (const auto& t : triplets) {
    for (Field f : fields_in(order)) {
      auto words = split_whitespace(field_of(t, f));
      if (words.empty()) throw Error("serialize: empty triplet field");
      for (const auto& w : words) {
        if (field_of_tag(w)) throw Error("serialize: field contains reserved tag " + w);
      }
      toks.emplace_back(tag_of(f));
      for (auto& w : words) toks.push_back(std::move(w));
    }
  }
  return join(toks, " ");
}

/// Gold serialization: triplets in normalized lexicographic order.
inline std::string serialize(const TripletSet& triplets,
                             TripletOrder order = TripletOrder::kDIT) {
  return serialize(triplets.to_vector(), order);
}

/// Recovers triplets from possibly malformed decoder output. A group starts
/// at the first tag of `order`, must continue with the other two tags in
/// order, and every field must hold at least one token. Anything else is
/// dropped and scanning resumes; the parser never fails.
inline TripletSet parse(std::string_view text, TripletOrder order = TripletOrder::kDIT) {
  const auto fields = fields_in(order);
  const auto toks = split_whitespace(text);
  TripletSet out;

  int stage = -1;  // index into fields of the field being collected
  std::array<std::vector<std::string>, 3> parts;
  auto flush_complete = [&] {
    if (stage == 2 && !parts[2].empty()) {
      DtiTriplet t;
      for (int k = 0; k < 3; ++k) {
        const std::string value = join(parts[static_cast<std::size_t>(k)], " ");
        switch (fields[static_cast<std::size_t>(k)]) {
          case Field::kDrug:
            t.drug = value;
            break;
          case Field::kTarget:
            t.target = value;
            break;
          case Field::kInteraction:
            t.interaction = value;
            break;
        }
      }
      out.insert(t);
    }
    stage = -1;
    for (auto& p : parts) p.clear();
  };

  for (const auto& tok : toks) {
    const auto tag = field_of_tag(tok);
    if (!tag) {
      if (stage >= 0) parts[static_cast<std::size_t>(stage)].push_back(tok);
      continue;
    }
    if (stage >= 0 && stage < 2 && !parts[static_cast<std::size_t>(stage)].empty() &&
        *tag == fields[static_cast<std::size_t>(stage + 1)]) {
      ++stage;
      continue;
    }
    flush_complete();
    if (*tag == fields[0]) stage = 0;
  }
  flush_complete();
  return out;
}

/// Token count of a serialization: 3 tags plus field tokens per triplet.
inline std::size_t serialized_length(const std::vector<DtiTriplet>& triplets) {
  std::size_t n = 0;
  for (const auto& t : triplets) {
    n += 3 + split_whitespace(t.drug).size() + split_whitespace(t.target).size() +
         split_whitespace(t.interaction).size();
  }
  return n;
}

}  // namespace dtigen
