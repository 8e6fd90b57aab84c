// Copyright 2026 The dtigen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <json.hpp>

#include "dtigen/params.hpp"

namespace dtigen {

struct AdamConfig {
  double lr = 5e-4;
  int warmup_steps = 8000;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double clip_norm = 0.0;  // 0 disables clipping
};

/// Inverse square root schedule: linear warmup to `base` at step == warmup,
/// then base * sqrt(warmup / step). Steps are 1-based.
inline double inverse_sqrt_lr(double base, int warmup, long step) {
  if (step < 1) step = 1;
  if (warmup <= 0) return base / std::sqrt(static_cast<double>(step));
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return base * std::min(s / w, std::sqrt(w / s));
}

template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(const ParamStore<T>& ps, AdamConfig cfg) : cfg_(cfg) {
    for (const auto& e : ps.entries()) {
      m_.push_back(Mat<T>::Zero(e.value.rows(), e.value.cols()));
      v_.push_back(Mat<T>::Zero(e.value.rows(), e.value.cols()));
    }
  }

  const AdamConfig& config() const { return cfg_; }
  long step() const { return step_; }
  void set_step(long s) { step_ = s; }
  double current_lr() const { return inverse_sqrt_lr(cfg_.lr, cfg_.warmup_steps, step_ + 1); }
  std::vector<Mat<T>>& first_moments() { return m_; }
  std::vector<Mat<T>>& second_moments() { return v_; }
  const std::vector<Mat<T>>& first_moments() const { return m_; }
  const std::vector<Mat<T>>& second_moments() const { return v_; }

  /// One update from the gradients held in `ps`; gradients are zeroed after.
  /// Returns the global gradient norm before clipping.
  double apply(ParamStore<T>& ps) {
    ++step_;
    double sq = 0.0;
    for (const auto& e : ps.entries()) sq += static_cast<double>(e.grad.squaredNorm());
    const double norm = std::sqrt(sq);
    T factor = T(1);
    if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) factor = static_cast<T>(cfg_.clip_norm / norm);
    const double lr = inverse_sqrt_lr(cfg_.lr, cfg_.warmup_steps, step_);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    const T b1 = static_cast<T>(cfg_.beta1);
    const T b2 = static_cast<T>(cfg_.beta2);
    const T step_size = static_cast<T>(lr / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / bc2);
    const T eps = static_cast<T>(cfg_.eps);
    auto& entries = ps.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto& e = entries[i];
      const Mat<T> g = e.grad * factor;
      m_[i] = b1 * m_[i] + (T(1) - b1) * g;
      v_[i] = b2 * v_[i] + (T(1) - b2) * g.cwiseProduct(g);
      e.value.array() -= step_size * m_[i].array() / ((v_[i].array() * inv_bc2).sqrt() + eps);
      e.grad.setZero();
    }
    return norm;
  }

 private:
  AdamConfig cfg_;
  std::vector<Mat<T>> m_;
  std::vector<Mat<T>> v_;
  long step_ = 0;
};

inline nlohmann::ordered_json to_json(const AdamConfig& c) {
  nlohmann::ordered_json j;
  j["lr"] = c.lr;
  j["warmup_steps"] = c.warmup_steps;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps"] = c.eps;
  j["clip_norm"] = c.clip_norm;
  return j;
}

inline AdamConfig adam_config_from_json(const nlohmann::json& j, AdamConfig c = {}) {
  auto get = [&](const char* k, auto& dst) {
    if (auto it = j.find(k); it != j.end()) dst = it->get<std::decay_t<decltype(dst)>>();
  };
  get("lr", c.lr);
  get("warmup_steps", c.warmup_steps);
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  get("eps", c.eps);
  get("clip_norm", c.clip_norm);
  return c;
}

}  // namespace dtigen
