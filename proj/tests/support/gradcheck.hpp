// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dtigen/model.hpp"
#include "dtigen/rng.hpp"

namespace testing_support {

struct GroupError {
  std::string name;
  double rel = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||, floor)
};

struct TinyProblem {
  std::vector<int> src;
  std::vector<int> tgt;  // ends with EOS
  dtigen::Mat<double> feats;
  int sos = 1;
};

inline dtigen::ModelConfig tiny_config(bool fusion) {
  dtigen::ModelConfig c;
  c.layers = 1;
  c.dim = 8;
  c.heads = 2;
  c.ffn_dim = 12;
  c.dropout = 0.0;
  c.attention_dropout = 0.0;
  c.label_smoothing = 0.2;
  c.fusion = fusion;
  c.vocab_size = 11;
  c.feature_dim = 6;
  c.max_source_len = 16;
  c.max_target_len = 16;
  return c;
}

inline TinyProblem tiny_problem(const dtigen::ModelConfig& c, std::uint64_t seed) {
  dtigen::Rng rng(seed);
  TinyProblem p;
  for (int i = 0; i < 5; ++i) p.src.push_back(3 + static_cast<int>(rng.index(static_cast<std::size_t>(c.vocab_size - 3))));
  for (int i = 0; i < 3; ++i) p.tgt.push_back(3 + static_cast<int>(rng.index(static_cast<std::size_t>(c.vocab_size - 3))));
  p.tgt.push_back(2);
  p.feats.resize(static_cast<Eigen::Index>(p.src.size()), c.effective_feature_dim());
  for (Eigen::Index i = 0; i < p.feats.size(); ++i) p.feats.data()[i] = rng.normal();
  return p;
}

inline double loss_value(const dtigen::Transformer<double>& model, const TinyProblem& p) {
  dtigen::Tape<double> tape;
  dtigen::Binder<double> b(tape, model.params());
  const dtigen::RunMode mode;
  const auto loss = model.example_loss(b, p.src, p.feats, p.tgt, p.sos, mode);
  return tape.value(loss)(0, 0);
}

/// Relative error of the backpropagated gradient against central finite
/// differences, per parameter group. Groups whose gradient is zero (key
/// biases, which shift every score of a softmax row equally) are compared
/// against `floor` instead of their own norm.
inline std::vector<GroupError> gradcheck(dtigen::Transformer<double>& model, const TinyProblem& p, double h = 1e-6,
                                         double floor = 1e-4) {
  auto& ps = model.params();
  ps.zero_grad();
  {
    dtigen::Tape<double> tape;
    dtigen::Binder<double> b(tape, ps, &ps);
    const dtigen::RunMode mode;
    const auto loss = model.example_loss(b, p.src, p.feats, p.tgt, p.sos, mode);
    tape.backward(loss);
  }
  std::vector<GroupError> out;
  for (auto& e : ps.entries()) {
    dtigen::Mat<double> numeric(e.value.rows(), e.value.cols());
    for (Eigen::Index i = 0; i < e.value.size(); ++i) {
      double& x = e.value.data()[i];
      const double keep = x;
      x = keep + h;
      const double up = loss_value(model, p);
      x = keep - h;
      const double down = loss_value(model, p);
      x = keep;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    const double scale = std::max({e.grad.norm(), numeric.norm(), floor});
    out.push_back({e.name, (e.grad - numeric).norm() / scale});
  }
  return out;
}

}  // namespace testing_support
