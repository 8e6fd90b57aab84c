// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "dtigen/autodiff.hpp"
#include "dtigen/error.hpp"
#include "dtigen/rng.hpp"

namespace dtigen {

/// Named, ordered collection of trainable tensors and their gradients.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Mat<T> value;
    Mat<T> grad;
  };

  int add(std::string name, Mat<T> value) {
    if (index_.count(name)) throw Error("duplicate parameter " + name);
    Entry e{std::move(name), std::move(value), {}};
    e.grad = Mat<T>::Zero(e.value.rows(), e.value.cols());
    index_[e.name] = static_cast<int>(entries_.size());
    entries_.push_back(std::move(e));
    return static_cast<int>(entries_.size()) - 1;
  }

  int add_zeros(std::string name, Eigen::Index rows, Eigen::Index cols) {
    return add(std::move(name), Mat<T>::Zero(rows, cols));
  }
  int add_ones(std::string name, Eigen::Index rows, Eigen::Index cols) {
    return add(std::move(name), Mat<T>::Ones(rows, cols));
  }
  /// Glorot-uniform initialization.
  int add_xavier(std::string name, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Mat<T> m(rows, cols);
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>((2.0 * rng.uniform() - 1.0) * a);
    return add(std::move(name), std::move(m));
  }
  int add_normal(std::string name, Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
    Mat<T> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.normal() * stddev);
    return add(std::move(name), std::move(m));
  }

  std::size_t size() const { return entries_.size(); }
  Entry& operator[](int i) { return entries_[static_cast<std::size_t>(i)]; }
  const Entry& operator[](int i) const { return entries_[static_cast<std::size_t>(i)]; }
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  int find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
  }

  void zero_grad() {
    for (auto& e : entries_) e.grad.setZero();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& e : entries_) {
      if (!e.value.allFinite()) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

/// Binds parameters of a store to one tape. Each parameter becomes a single
/// leaf node on first use. When `grads` is set, backward() adds each
/// parameter's gradient into the matching entry of `grads` (which may be the
/// same store or a per-worker clone).
template <typename T>
class Binder {
 public:
  Binder(Tape<T>& tape, const ParamStore<T>& store, ParamStore<T>* grads = nullptr)
      : tape_(tape), store_(store), grads_(grads), vars_(store.size()) {}

  Var operator()(int idx) {
    auto& slot = vars_[static_cast<std::size_t>(idx)];
    if (!slot.valid()) {
      slot = tape_.leaf(store_[idx].value, grads_ ? &(*grads_)[idx].grad : nullptr);
    }
    return slot;
  }

  Tape<T>& tape() { return tape_; }
  bool train() const { return grads_ != nullptr; }

 private:
  Tape<T>& tape_;
  const ParamStore<T>& store_;
  ParamStore<T>* grads_;
  std::vector<Var> vars_;
};

}  // namespace dtigen
