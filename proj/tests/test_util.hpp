// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared test helpers, chiefly the central finite-difference gradient oracle.

#ifndef JRL_TESTS_TEST_UTIL_HPP_
#define JRL_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <functional>
#include <vector>

#include "jrl/tensor.hpp"

namespace jrl_test {

// Central finite differences against reverse-mode gradients.
//
// `forward` must rebuild the graph from the given leaf tensors on every call
// and return the op output (any shape). A fixed random weighting W turns the
// output into the scalar f = sum(W * Y), evaluated here in double; the tape
// gradient of the same functional is obtained by seeding the output with W
// via reduce_sum(mul(Y, W)). Returns the largest relative error
// |ad - fd| / max(1, |ad|, |fd|) over every (or `max_checks` sampled)
// coordinates of every leaf.
//
// Coordinates where a non-smooth point (an argmax flip, a clamp knee) falls
// inside the [x-h, x+h] interval are skipped: central quotients at h and h/2
// agree to O(h^2) on smooth stretches but disagree at O(1) across a kink, so
// a large Richardson discrepancy marks an invalid probe point. At least 80%
// of the sampled coordinates must survive the guard or the check fails
// outright.
// With `richardson` set, the reported quotient is the Richardson
// extrapolation (4 fd(h/2) - fd(h)) / 3, removing the O(h^2) truncation term;
// composed paths with steep curvature use it, primitive ops are checked
// against the plain central quotient at the given h.
inline double max_fd_rel_error(const std::function<jrl::Tensor()>& forward,
                               std::vector<jrl::Tensor> leaves, jrl::Rng& rng, double h,
                               int max_checks_per_leaf = -1, bool richardson = false) {
  jrl::Tensor y0 = forward();
  std::vector<double> w(static_cast<size_t>(y0.numel()));
  for (auto& v : w) v = rng.uniform() * 2.0 - 1.0;

  std::vector<float> wf(w.begin(), w.end());
  for (auto& leaf : leaves) leaf.zero_grad();
  jrl::Tensor weighted = jrl::mul(y0, jrl::Tensor::from(y0.shape(), wf));
  jrl::backward(jrl::reduce_sum(weighted));

  std::vector<std::vector<float>> ad;
  for (auto& leaf : leaves) ad.emplace_back(leaf.grad().begin(), leaf.grad().end());

  auto eval = [&]() {
    jrl::NoGradGuard ng;
    jrl::Tensor y = forward();
    double s = 0.0;
    auto d = y.data();
    for (size_t i = 0; i < d.size(); ++i) s += w[i] * static_cast<double>(d[i]);
    return s;
  };

  // central quotient at step h around coordinate i of leaf data, dividing by
  // the realized float32 step rather than the nominal 2h
  auto quotient = [&](std::span<float> data, int64_t i, double step) {
    float saved = data[static_cast<size_t>(i)];
    float xp = static_cast<float>(saved + step);
    float xm = static_cast<float>(saved - step);
    data[static_cast<size_t>(i)] = xp;
    double fp = eval();
    data[static_cast<size_t>(i)] = xm;
    double fm = eval();
    data[static_cast<size_t>(i)] = saved;
    return (fp - fm) / (static_cast<double>(xp) - static_cast<double>(xm));
  };

  double worst = 0.0;
  int64_t checked = 0, sampled = 0;
  for (size_t l = 0; l < leaves.size(); ++l) {
    auto data = leaves[l].data();
    int64_t n = leaves[l].numel();
    std::vector<int64_t> picks;
    if (max_checks_per_leaf > 0 && n > max_checks_per_leaf) {
      for (int c = 0; c < max_checks_per_leaf; ++c)
        picks.push_back(static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n))));
    } else {
      for (int64_t i = 0; i < n; ++i) picks.push_back(i);
    }
    for (int64_t i : picks) {
      ++sampled;
      double fd = quotient(data, i, h);
      double fd_half = quotient(data, i, h / 2.0);
      if (std::abs(fd - fd_half) > 1e-2 * std::max({1.0, std::abs(fd), std::abs(fd_half)}))
        continue;  // kink inside the probe interval
      ++checked;
      double use = richardson ? (4.0 * fd_half - fd) / 3.0 : fd;
      double a = ad[l][static_cast<size_t>(i)];
      double rel = std::abs(a - use) / std::max({1.0, std::abs(a), std::abs(use)});
      worst = std::max(worst, rel);
    }
  }
  if (checked * 5 < sampled * 4) return 1e9;  // too many kinks: setup is bad, fail loudly
  return worst;
}

inline jrl::Tensor random_tensor(std::vector<int64_t> shape, jrl::Rng& rng, float scale = 1.0f,
                                 bool requires_grad = true) {
  jrl::Tensor t = jrl::Tensor::randn(std::move(shape), rng, scale);
  t.set_requires_grad(requires_grad);
  return t;
}

}  // namespace jrl_test

#endif  // JRL_TESTS_TEST_UTIL_HPP_
