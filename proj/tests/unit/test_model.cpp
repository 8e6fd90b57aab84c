// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <functional>

#include "../support/gradcheck.hpp"
#include "dtigen/autodiff.hpp"
#include "dtigen/generate.hpp"
#include "dtigen/model.hpp"

using namespace dtigen;
using Matd = Mat<double>;

namespace {

Matd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

using Build = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

// Reduces an op output to u^T Y v with fixed random u, v.
Var project(Tape<double>& t, Var y) {
  Rng rng(1234);
  const auto& Y = t.value(y);
  const Var u = t.constant(random_matrix(1, Y.rows(), rng));
  const Var v = t.constant(random_matrix(Y.cols(), 1, rng));
  return t.matmul(t.matmul(u, y), v);
}

double op_error(std::vector<Matd> inputs, const Build& f, double h = 1e-6) {
  std::vector<Matd> grads;
  for (const auto& x : inputs) grads.push_back(Matd::Zero(x.rows(), x.cols()));
  {
    Tape<double> t;
    std::vector<Var> vs;
    for (std::size_t i = 0; i < inputs.size(); ++i) vs.push_back(t.leaf(inputs[i], &grads[i]));
    t.backward(project(t, f(t, vs)));
  }
  auto value = [&] {
    Tape<double> t;
    std::vector<Var> vs;
    for (const auto& x : inputs) vs.push_back(t.constant(x));
    return t.value(project(t, f(t, vs)))(0, 0);
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Matd num(inputs[i].rows(), inputs[i].cols());
    for (Eigen::Index k = 0; k < inputs[i].size(); ++k) {
      double& x = inputs[i].data()[k];
      const double keep = x;
      x = keep + h;
      const double up = value();
      x = keep - h;
      const double down = value();
      x = keep;
      num.data()[k] = (up - down) / (2 * h);
    }
    const double scale = std::max({grads[i].norm(), num.norm(), 1e-4});
    worst = std::max(worst, (grads[i] - num).norm() / scale);
  }
  return worst;
}

}  // namespace

TEST(Autodiff, MatmulAndAdd) {
  Rng rng(1);
  EXPECT_LT(op_error({random_matrix(3, 4, rng), random_matrix(4, 2, rng)},
                     [](auto& t, const auto& v) { return t.matmul(v[0], v[1]); }),
            1e-7);
  EXPECT_LT(op_error({random_matrix(3, 4, rng), random_matrix(2, 4, rng)},
                     [](auto& t, const auto& v) { return t.matmul_nt(v[0], v[1]); }),
            1e-7);
  EXPECT_LT(op_error({random_matrix(3, 4, rng), random_matrix(3, 4, rng)},
                     [](auto& t, const auto& v) { return t.add(v[0], t.scale(v[1], 0.3)); }),
            1e-7);
  EXPECT_LT(op_error({random_matrix(3, 4, rng), random_matrix(1, 4, rng)},
                     [](auto& t, const auto& v) { return t.add_row(v[0], v[1]); }),
            1e-7);
}

TEST(Autodiff, ReluLayerNormLogSoftmax) {
  Rng rng(2);
  EXPECT_LT(op_error({random_matrix(4, 5, rng)}, [](auto& t, const auto& v) { return t.relu(v[0]); }), 1e-6);
  EXPECT_LT(op_error({random_matrix(4, 6, rng), random_matrix(1, 6, rng), random_matrix(1, 6, rng)},
                     [](auto& t, const auto& v) { return t.layer_norm(v[0], v[1], v[2]); }),
            1e-6);
  EXPECT_LT(op_error({random_matrix(3, 7, rng)}, [](auto& t, const auto& v) { return t.log_softmax(v[0]); }), 1e-6);
}

TEST(Autodiff, AttentionCrossAndCausal) {
  Rng rng(3);
  EXPECT_LT(op_error({random_matrix(4, 6, rng), random_matrix(5, 6, rng), random_matrix(5, 6, rng)},
                     [](auto& t, const auto& v) { return t.attention(v[0], v[1], v[2], 2, false, 0.0, nullptr); }),
            1e-6);
  EXPECT_LT(op_error({random_matrix(4, 6, rng), random_matrix(4, 6, rng), random_matrix(4, 6, rng)},
                     [](auto& t, const auto& v) { return t.attention(v[0], v[1], v[2], 3, true, 0.0, nullptr); }),
            1e-6);
}

TEST(Autodiff, EmbedAndSmoothedNll) {
  Rng rng(4);
  EXPECT_LT(op_error({random_matrix(6, 3, rng)},
                     [](auto& t, const auto& v) { return t.embed(v[0], {1, 4, 1, 0}); }),
            1e-7);
  EXPECT_LT(op_error({random_matrix(3, 5, rng)},
                     [](auto& t, const auto& v) {
                       return t.smoothed_nll(t.log_softmax(v[0]), {2, 0, 4}, 0.1, 0);
                     }),
            1e-6);
}

TEST(Autodiff, SoftmaxRowsSumToOne) {
  Rng rng(5);
  Tape<double> t;
  const Var lp = t.log_softmax(t.constant(random_matrix(4, 9, rng) * 30.0));
  const Matd p = t.value(lp).array().exp().matrix();
  for (Eigen::Index i = 0; i < p.rows(); ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
}

TEST(Autodiff, SmoothedNllHandValue) {
  Tape<double> t;
  Matd lp(1, 3);
  lp << std::log(0.5), std::log(0.3), std::log(0.2);
  const double eps = 0.3;
  const Var loss = t.smoothed_nll(t.constant(lp), {1}, eps);
  const double expect = -((1 - eps) * std::log(0.3) + eps / 2 * (std::log(0.5) + std::log(0.2)));
  EXPECT_NEAR(t.value(loss)(0, 0), expect, 1e-12);
  const Var ignored = t.smoothed_nll(t.constant(lp), {7}, eps, 7);
  EXPECT_EQ(t.value(ignored)(0, 0), 0.0);
}

TEST(Autodiff, BackwardNeedsScalarRoot) {
  Tape<double> t;
  Matd x = Matd::Ones(2, 2), g = Matd::Zero(2, 2);
  const Var v = t.leaf(x, &g);
  EXPECT_THROW(t.backward(t.relu(v)), Error);
}

TEST(Autodiff, DropoutIsIdentityAtZeroAndScalesOtherwise) {
  Rng rng(6);
  Tape<double> t;
  const Var x = t.constant(Matd::Ones(50, 40));
  EXPECT_EQ(t.dropout(x, 0.0, rng).id, x.id);
  const Matd y = t.value(t.dropout(x, 0.5, rng));
  for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_TRUE(y.data()[i] == 0.0 || y.data()[i] == 2.0);
  EXPECT_NEAR(y.mean(), 1.0, 0.1);
}

TEST(Model, GradientsMatchFiniteDifferences) {
  for (bool fusion : {true, false}) {
    auto cfg = testing_support::tiny_config(fusion);
    cfg.layers = 2;
    Transformer<double> model(cfg, 21);
    const auto prob = testing_support::tiny_problem(cfg, 22);
    for (const auto& g : testing_support::gradcheck(model, prob)) {
      EXPECT_LT(g.rel, 1e-4) << g.name << (fusion ? " fusion" : " plain");
    }
  }
}

TEST(Model, FusionParametersExistOnlyWhenEnabled) {
  Transformer<double> on(testing_support::tiny_config(true), 1);
  Transformer<double> off(testing_support::tiny_config(false), 1);
  EXPECT_GE(on.params().find("feature_adapter.w"), 0);
  EXPECT_GE(on.params().find("encoder.0.feature_attn.wq"), 0);
  EXPECT_LT(off.params().find("encoder.0.feature_attn.wq"), 0);
  EXPECT_LT(off.params().find("feature_adapter.w"), 0);
  EXPECT_GT(on.params().parameter_count(), off.params().parameter_count());
}

TEST(Model, DecoderIsCausal) {
  const auto cfg = testing_support::tiny_config(true);
  Transformer<double> model(cfg, 3);
  const auto prob = testing_support::tiny_problem(cfg, 4);
  const auto enc = model.encode_value(prob.src, prob.feats);
  const Matd a = model.decode_logprobs({1, 4, 5, 6}, enc);
  const Matd b = model.decode_logprobs({1, 4, 9, 3}, enc);
  EXPECT_EQ((a.topRows(2) - b.topRows(2)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT((a.row(2) - b.row(2)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Model, SameSeedSameParameters) {
  const auto cfg = testing_support::tiny_config(true);
  Transformer<double> a(cfg, 9), b(cfg, 9), c(cfg, 10);
  ASSERT_EQ(a.params().size(), b.params().size());
  bool differs = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    EXPECT_EQ(a.params()[static_cast<int>(i)].value, b.params()[static_cast<int>(i)].value);
    differs = differs || a.params()[static_cast<int>(i)].value != c.params()[static_cast<int>(i)].value;
  }
  EXPECT_TRUE(differs);
}

TEST(Model, FeatureRowsMustMatchSource) {
  const auto cfg = testing_support::tiny_config(true);
  Transformer<double> model(cfg, 3);
  auto prob = testing_support::tiny_problem(cfg, 4);
  prob.feats.conservativeResize(prob.feats.rows() - 1, Eigen::NoChange);
  EXPECT_THROW(model.encode_value(prob.src, prob.feats), Error);
  Matd wrong = Matd::Zero(static_cast<Eigen::Index>(prob.src.size()), cfg.effective_feature_dim() + 1);
  EXPECT_THROW(model.encode_value(prob.src, wrong), Error);
}

TEST(Model, ConfigValidation) {
  auto cfg = testing_support::tiny_config(true);
  cfg.heads = 3;
  EXPECT_THROW(Transformer<double>(cfg, 1), ConfigError);
  cfg = testing_support::tiny_config(true);
  cfg.label_smoothing = 1.0;
  EXPECT_THROW(Transformer<double>(cfg, 1), ConfigError);
  const auto j = to_json(testing_support::tiny_config(true));
  EXPECT_EQ(to_json(model_config_from_json(nlohmann::json::parse(j.dump()))).dump(), j.dump());
}

TEST(Generate, BeamOfOneIsGreedyAndWiderBeamsAreDeterministic) {
  auto cfg = testing_support::tiny_config(true);
  cfg.max_target_len = 8;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Transformer<double> model(cfg, seed);
    const auto prob = testing_support::tiny_problem(cfg, seed + 100);
    const auto enc = model.encode_value(prob.src, prob.feats);
    const auto greedy = greedy_decode(model, enc, 1, 2);
    EXPECT_EQ(beam_decode(model, enc, 1, 2, DecodeConfig{1, 0}), greedy);
    const auto b3 = beam_decode(model, enc, 1, 2, DecodeConfig{3, 0});
    EXPECT_EQ(beam_decode(model, enc, 1, 2, DecodeConfig{3, 0}), b3);
    EXPECT_LE(b3.size(), 8u);
    EXPECT_LE(greedy_decode(model, enc, 1, 2, DecodeConfig{1, 3}).size(), 3u);
  }
  Transformer<double> model(cfg, 1);
  const auto prob = testing_support::tiny_problem(cfg, 1);
  EXPECT_THROW(beam_decode(model, model.encode_value(prob.src, prob.feats), 1, 2, DecodeConfig{0, 0}), ConfigError);
}

TEST(Generate, ExhaustiveBeamScoresAtLeastGreedy) {
  auto cfg = testing_support::tiny_config(false);
  cfg.max_target_len = 3;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Transformer<double> model(cfg, seed);
    const auto prob = testing_support::tiny_problem(cfg, seed);
    const auto enc = model.encode_value(prob.src, prob.feats);
    auto score = [&](const std::vector<int>& toks) {
      std::vector<int> prefix{1};
      double s = 0;
      for (std::size_t i = 0; i <= toks.size(); ++i) {
        if (i == toks.size() && static_cast<int>(toks.size()) == cfg.max_target_len) break;
        const Matd lp = model.decode_logprobs(prefix, enc);
        const int next = i < toks.size() ? toks[i] : 2;
        s += lp(lp.rows() - 1, next);
        prefix.push_back(next);
      }
      return s;
    };
    const auto greedy = greedy_decode(model, enc, 1, 2);
    const auto beam = beam_decode(model, enc, 1, 2, DecodeConfig{cfg.vocab_size * cfg.vocab_size * cfg.vocab_size, 0});
    EXPECT_GE(score(beam), score(greedy) - 1e-12);
  }
}
