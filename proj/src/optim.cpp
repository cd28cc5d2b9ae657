// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0

#include "jrl/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace jrl {

double lr_at(const LrSchedule& s, int64_t step) {
  if (step < 0 || step > s.total_steps)
    throw std::out_of_range("lr_at: step " + std::to_string(step) + " outside [0," +
                            std::to_string(s.total_steps) + "]");
  int64_t warmup = static_cast<int64_t>(s.warmup_fraction * static_cast<double>(s.total_steps));
  if (step <= warmup && warmup > 0)
    return s.peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (s.total_steps == warmup) return s.peak_lr;
  double progress = static_cast<double>(step - warmup) / static_cast<double>(s.total_steps - warmup);
  double cosine = 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
  return s.peak_lr * (s.floor_fraction + (1.0 - s.floor_fraction) * cosine);
}

AdamW::AdamW(std::string group_id, const std::vector<Tensor>& params)
    : group_id_(std::move(group_id)) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params) {
    m_.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
    v_.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
  }
}

void AdamW::step(std::vector<Tensor>& params, const AdamWParams& hp) {
  if (params.size() != m_.size())
    throw std::runtime_error("AdamW(" + group_id_ + "): state holds " + std::to_string(m_.size()) +
                             " tensors, got " + std::to_string(params.size()));
  // Validate all gradients before mutating anything so a bad step is a no-op.
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    for (float g : p.grad())
      if (!std::isfinite(g))
        throw std::runtime_error("AdamW(" + group_id_ + "): non-finite gradient in parameter '" +
                                 p.name() + "'");
  }
  ++step_;
  double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(step_));
  for (size_t t = 0; t < params.size(); ++t) {
    auto w = params[t].data();
    auto& m = m_[t];
    auto& v = v_[t];
    const bool has_grad = params[t].has_grad();
    auto g = params[t].grad();
    for (size_t i = 0; i < w.size(); ++i) {
      double gi = has_grad ? static_cast<double>(g[i]) : 0.0;
      double mi = hp.beta1 * m[i] + (1.0 - hp.beta1) * gi;
      double vi = hp.beta2 * v[i] + (1.0 - hp.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      double mhat = static_cast<double>(m[i]) / bc1;
      double vhat = static_cast<double>(v[i]) / bc2;
      double update = mhat / (std::sqrt(vhat) + hp.eps) + hp.weight_decay * static_cast<double>(w[i]);
      w[i] = static_cast<float>(static_cast<double>(w[i]) - hp.lr * update);
    }
  }
}

}  // namespace jrl
