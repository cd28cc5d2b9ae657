// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared network building blocks for the two models.

#ifndef JRL_NN_HPP_
#define JRL_NN_HPP_

#include <memory>
#include <string>
#include <vector>

#include "jrl/tensor.hpp"

namespace jrl {

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out], undefined when bias-free
  bool has_bias = true;

  Linear() = default;
  Linear(int64_t in, int64_t out, Rng& rng, const std::string& name, bool bias = true, float w_scale = 0.02f);

  Tensor forward(const Tensor& x) const;
  void collect(std::vector<Tensor>& out) const;
};

// Per-head additive attention masks, shared between heads of the same
// pattern. nullptr entry = unmasked head.
struct AttentionMasks {
  int64_t t = 0;
  std::vector<std::shared_ptr<std::vector<float>>> per_head;
};

// Pre-norm transformer block: x += Wo(MHA(LN(x))); x += MLP(LN(x)).
// Residual-branch output weights (wo, fc2) start at zero, so a fresh block is
// the identity map and the embedding-level token geometry survives until the
// branches earn their way in.
struct TransformerBlock {
  Linear wq, wk, wv, wo;
  Linear fc1, fc2;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  int64_t d_model = 0;
  int n_heads = 0;

  TransformerBlock() = default;
  TransformerBlock(int64_t d_model, int n_heads, int64_t d_ff, Rng& rng, const std::string& name);

  // masks == nullptr: full bidirectional attention.
  Tensor forward(const Tensor& x, const AttentionMasks* masks) const;
  void collect(std::vector<Tensor>& out) const;
};

Tensor layer_norm_params(int64_t d, float gain);

}  // namespace jrl

#endif  // JRL_NN_HPP_
