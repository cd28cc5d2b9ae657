// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0

#include "jrl/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace jrl {

Linear::Linear(int64_t in, int64_t out, Rng& rng, const std::string& name, bool bias, float w_scale)
    : has_bias(bias) {
  w = Tensor::randn({in, out}, rng, w_scale);
  w.set_requires_grad(true).set_name(name + ".w");
  if (bias) {
    b = Tensor::zeros({out});
    b.set_requires_grad(true).set_name(name + ".b");
  }
}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y = matmul(x, w);
  return has_bias ? add_rowvec(y, b) : y;
}

void Linear::collect(std::vector<Tensor>& out) const {
  out.push_back(w);
  if (has_bias) out.push_back(b);
}

Tensor layer_norm_params(int64_t d, float gain) { return Tensor::full({d}, gain); }

TransformerBlock::TransformerBlock(int64_t d, int heads, int64_t d_ff, Rng& rng, const std::string& name)
    : d_model(d), n_heads(heads) {
  if (d % heads != 0)
    throw std::invalid_argument("TransformerBlock: d_model " + std::to_string(d) +
                                " not divisible by " + std::to_string(heads) + " heads");
  wq = Linear(d, d, rng, name + ".wq");
  wk = Linear(d, d, rng, name + ".wk");
  wv = Linear(d, d, rng, name + ".wv");
  wo = Linear(d, d, rng, name + ".wo", true, 0.0f);
  fc1 = Linear(d, d_ff, rng, name + ".fc1");
  fc2 = Linear(d_ff, d, rng, name + ".fc2", true, 0.0f);
  ln1_g = layer_norm_params(d, 1.0f).set_requires_grad(true).set_name(name + ".ln1.g");
  ln1_b = Tensor::zeros({d}).set_requires_grad(true).set_name(name + ".ln1.b");
  ln2_g = layer_norm_params(d, 1.0f).set_requires_grad(true).set_name(name + ".ln2.g");
  ln2_b = Tensor::zeros({d}).set_requires_grad(true).set_name(name + ".ln2.b");
}

Tensor TransformerBlock::forward(const Tensor& x, const AttentionMasks* masks) const {
  int64_t t = x.dim(0);
  int64_t dh = d_model / n_heads;
  float att_scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(dh)));

  Tensor h = layer_norm(x, ln1_g, ln1_b);
  Tensor q = wq.forward(h);
  Tensor k = wk.forward(h);
  Tensor v = wv.forward(h);

  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(n_heads));
  for (int hd = 0; hd < n_heads; ++hd) {
    int64_t c0 = hd * dh, c1 = (hd + 1) * dh;
    Tensor qh = slice_cols(q, c0, c1);
    Tensor kh = slice_cols(k, c0, c1);
    Tensor vh = slice_cols(v, c0, c1);
    Tensor scores = scale(matmul(qh, transpose(kh)), att_scale);
    if (masks != nullptr) {
      if (masks->t != t)
        throw std::invalid_argument("attention mask built for t=" + std::to_string(masks->t) +
                                    ", sequence has t=" + std::to_string(t));
      const auto& m = masks->per_head[static_cast<size_t>(hd)];
      if (m) scores = add_const_mask(scores, *m);
    }
    Tensor attn = softmax(scores, 1);
    heads.push_back(matmul(attn, vh));
  }
  Tensor merged = n_heads == 1 ? heads[0] : concat_cols(heads);
  Tensor x1 = add(x, wo.forward(merged));

  Tensor h2 = layer_norm(x1, ln2_g, ln2_b);
  Tensor mlp = fc2.forward(gelu(fc1.forward(h2)));
  return add(x1, mlp);
}

void TransformerBlock::collect(std::vector<Tensor>& out) const {
  wq.collect(out);
  wk.collect(out);
  wv.collect(out);
  wo.collect(out);
  fc1.collect(out);
  fc2.collect(out);
  out.push_back(ln1_g);
  out.push_back(ln1_b);
  out.push_back(ln2_g);
  out.push_back(ln2_b);
}

}  // namespace jrl
