// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0

#ifndef JRL_OPTIM_HPP_
#define JRL_OPTIM_HPP_

#include <string>
#include <vector>

#include "jrl/tensor.hpp"

namespace jrl {

// Warmup + cosine decay. Linear ramp from 0 to peak over the first
// warmup_fraction of total_steps, then cosine from peak down to
// floor_fraction * peak at total_steps.
struct LrSchedule {
  double peak_lr = 0.0;
  double warmup_fraction = 0.1;
  double floor_fraction = 0.1;
  int64_t total_steps = 1;
};

double lr_at(const LrSchedule& s, int64_t step);

struct AdamWParams {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-5;
  double weight_decay = 0.1;
};

// Per-group optimizer state: one (m, v) pair per parameter tensor plus a
// shared step counter. Group ids: "reader" / "retriever".
class AdamW {
 public:
  AdamW() = default;
  AdamW(std::string group_id, const std::vector<Tensor>& params);

  // Applies one decoupled-weight-decay Adam update using each parameter's
  // accumulated .grad. Raises std::runtime_error naming the parameter on a
  // non-finite gradient; the step is not applied in that case.
  void step(std::vector<Tensor>& params, const AdamWParams& hp);

  int64_t step_count() const { return step_; }
  const std::string& group_id() const { return group_id_; }

  std::vector<std::vector<float>>& moments_m() { return m_; }
  std::vector<std::vector<float>>& moments_v() { return v_; }
  const std::vector<std::vector<float>>& moments_m() const { return m_; }
  const std::vector<std::vector<float>>& moments_v() const { return v_; }
  void set_step_count(int64_t s) { step_ = s; }

 private:
  std::string group_id_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  int64_t step_ = 0;
};

}  // namespace jrl

#endif  // JRL_OPTIM_HPP_
