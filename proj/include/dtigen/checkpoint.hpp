// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint container:
//   8 bytes   magic "DTIGENCK"
//   u64 (LE)  header length in bytes
//   header    UTF-8 JSON: model config, provider description, tokenizer,
//             vocab hash, optimizer step and a tensor index
//   tensors   raw little-endian values, row-major, in index order

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtigen/bpe.hpp"
#include "dtigen/error.hpp"
#include "dtigen/features.hpp"
#include "dtigen/model.hpp"
#include "dtigen/optim.hpp"

namespace dtigen {

inline constexpr char kCheckpointMagic[8] = {'D', 'T', 'I', 'G', 'E', 'N', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

template <typename T>
struct Checkpoint {
  ModelConfig config;
  BpeModel bpe;
  nlohmann::json provider_spec;
  std::unique_ptr<Transformer<T>> model;
  std::unique_ptr<FeatureProvider<T>> provider;
  long step = 0;
  std::vector<Mat<T>> adam_m;  // empty when no optimizer state was saved
  std::vector<Mat<T>> adam_v;
  nlohmann::json extra;
};

/// Rebuilds a feature provider from its description. Trained providers take
/// their parameters from `tensors` (looked up by name).
template <typename T>
std::unique_ptr<FeatureProvider<T>> make_provider(const nlohmann::json& spec,
                                                  const std::map<std::string, Mat<T>>& tensors = {}) {
  const std::string kind = spec.value("kind", "");
  if (kind == "random") {
    return std::make_unique<RandomFeatureProvider<T>>(spec.at("vocab_size").get<int>(), spec.at("dim").get<int>(),
                                                      spec.at("seed").get<std::uint64_t>(),
                                                      spec.value("max_len", 1024));
  }
  if (kind == "reconstruction") {
    ReconstructionConfig rc;
    rc.dim = spec.at("dim").get<int>();
    rc.heads = spec.at("heads").get<int>();
    rc.ffn_dim = spec.at("ffn_dim").get<int>();
    rc.max_len = spec.at("max_len").get<int>();
    auto p = std::make_unique<ReconstructionFeatureProvider<T>>(
        spec.at("vocab_size").get<int>(), rc, spec.at("mask_id").get<int>(), spec.at("seed").get<std::uint64_t>());
    for (auto& e : p->mutable_parameters().entries()) {
      auto it = tensors.find(e.name);
      if (it == tensors.end()) throw ParseError("checkpoint: missing provider tensor " + e.name);
      if (it->second.rows() != e.value.rows() || it->second.cols() != e.value.cols()) {
        throw ParseError("checkpoint: shape mismatch for " + e.name);
      }
      e.value = it->second;
    }
    return p;
  }
  if (kind == "none") return nullptr;
  throw ConfigError("unknown feature provider kind '" + kind + "'");
}

namespace detail {

template <typename T>
void index_tensor(nlohmann::ordered_json& index, std::uint64_t& offset, const std::string& name, const Mat<T>& m) {
  index.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
  offset += static_cast<std::uint64_t>(m.size()) * sizeof(T);
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Transformer<T>& model,
                     const FeatureProvider<T>* provider, const BpeModel& bpe, const Adam<T>* adam = nullptr,
                     const nlohmann::json& extra = nlohmann::json::object()) {
  std::vector<std::pair<std::string, const Mat<T>*>> tensors;
  for (const auto& e : model.params().entries()) tensors.push_back({e.name, &e.value});
  if (provider && provider->parameters()) {
    for (const auto& e : provider->parameters()->entries()) tensors.push_back({e.name, &e.value});
  }
  if (adam) {
    const auto& es = model.params().entries();
    const auto& m = adam->first_moments();
    const auto& v = adam->second_moments();
    if (m.size() != es.size()) throw Error("optimizer state does not match the model");
    for (std::size_t i = 0; i < es.size(); ++i) {
      tensors.push_back({"adam_m." + es[i].name, &m[i]});
      tensors.push_back({"adam_v." + es[i].name, &v[i]});
    }
  }
  nlohmann::ordered_json header;
  header["format"] = "dtigen-checkpoint";
  header["version"] = 1;
  header["dtype"] = dtype_name<T>();
  header["config"] = to_json(model.config());
  header["provider"] = provider ? provider->describe() : nlohmann::ordered_json{{"kind", "none"}};
  header["tokenizer"] = bpe.to_json();
  header["vocab_hash"] = hex64(bpe.vocab_hash());
  header["step"] = adam ? adam->step() : 0;
  header["has_optimizer"] = adam != nullptr;
  header["extra"] = extra;
  auto& index = header["tensors"] = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : tensors) detail::index_tensor(index, offset, name, *m);
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, m] : tensors) {
      out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(T)));
    }
    if (!out) throw IoError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw ParseError(path.string() + ": not a dtigen checkpoint");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1ULL << 32)) throw ParseError(path.string() + ": corrupt checkpoint header");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError(path.string() + ": truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": bad checkpoint header: " + e.what());
  }
  if (header.value("dtype", "") != dtype_name<T>()) {
    throw ParseError(path.string() + ": checkpoint dtype " + header.value("dtype", "?") + " does not match");
  }
  const auto data_start = in.tellg();
  std::map<std::string, Mat<T>> tensors;
  for (const auto& t : header.at("tensors")) {
    Mat<T> m(t.at("rows").get<Eigen::Index>(), t.at("cols").get<Eigen::Index>());
    in.seekg(data_start + static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(T)));
    if (!in) throw ParseError(path.string() + ": truncated tensor " + t.at("name").get<std::string>());
    tensors.emplace(t.at("name").get<std::string>(), std::move(m));
  }

  Checkpoint<T> ck;
  ck.config = model_config_from_json(header.at("config"));
  ck.bpe = BpeModel::from_json(header.at("tokenizer"));
  if (hex64(ck.bpe.vocab_hash()) != header.value("vocab_hash", "")) {
    throw ParseError(path.string() + ": tokenizer does not match its recorded vocab hash");
  }
  ck.provider_spec = header.at("provider");
  ck.step = header.value("step", 0L);
  ck.extra = header.value("extra", nlohmann::json::object());
  ck.model = std::make_unique<Transformer<T>>(ck.config, 0);
  for (auto& e : ck.model->params().entries()) {
    auto it = tensors.find(e.name);
    if (it == tensors.end()) throw ParseError(path.string() + ": missing tensor " + e.name);
    if (it->second.rows() != e.value.rows() || it->second.cols() != e.value.cols()) {
      throw ParseError(path.string() + ": shape mismatch for " + e.name);
    }
    e.value = it->second;
    if (header.value("has_optimizer", false)) {
      auto m = tensors.find("adam_m." + e.name);
      auto v = tensors.find("adam_v." + e.name);
      if (m == tensors.end() || v == tensors.end()) throw ParseError(path.string() + ": missing optimizer state");
      ck.adam_m.push_back(m->second);
      ck.adam_v.push_back(v->second);
    }
  }
  ck.provider = make_provider<T>(ck.provider_spec, tensors);
  return ck;
}

/// Copies saved optimizer moments and step into a fresh optimizer.
template <typename T>
void restore_optimizer(Adam<T>& adam, const Checkpoint<T>& ck) {
  if (ck.adam_m.empty()) return;
  if (adam.first_moments().size() != ck.adam_m.size()) throw Error("optimizer state does not match the model");
  adam.first_moments() = ck.adam_m;
  adam.second_moments() = ck.adam_v;
  adam.set_step(ck.step);
}

}  // namespace dtigen
