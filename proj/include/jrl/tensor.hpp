// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense float32 tensors with reverse-mode automatic differentiation.
//
// The graph is a tape of closures: every op output holds its parents and a
// pull-style backward function. backward(loss) runs the tape in reverse
// topological order and releases the tape edges afterwards, so parameters
// (leaves) survive with their grads while intermediates free themselves.
// Reductions (matmul inner products, softmax sums, norms) accumulate in
// double and round once on store.

#ifndef JRL_TENSOR_HPP_
#define JRL_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "jrl/common.hpp"

namespace jrl {

struct TensorNode {
  std::vector<int64_t> shape;
  std::vector<float> value;
  std::vector<float> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::string name;  // set for parameters, used in diagnostics

  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0f);
  }
};

std::string shape_str(const std::vector<int64_t>& s);

// Scoped autograd switch (thread local). Encoding a corpus for the index or
// probing documents runs under NoGradGuard so no tape is built.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : n_(std::move(n)) {}

  static Tensor zeros(std::vector<int64_t> shape);
  static Tensor full(std::vector<int64_t> shape, float v);
  static Tensor from(std::vector<int64_t> shape, std::vector<float> data);
  static Tensor scalar(float v) { return full({1}, v); }
  // Gaussian init, mean 0 / given stddev.
  static Tensor randn(std::vector<int64_t> shape, Rng& rng, float stddev = 1.0f);

  bool defined() const { return n_ != nullptr; }
  const std::vector<int64_t>& shape() const { return n_->shape; }
  int64_t numel() const { return n_->numel(); }
  int64_t dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(n_->shape.size()); }

  std::span<float> data() { return n_->value; }
  std::span<const float> data() const { return n_->value; }
  float item() const;
  float at(int64_t r, int64_t c) const { return n_->value[static_cast<size_t>(r * n_->shape[1] + c)]; }

  bool requires_grad() const { return n_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    n_->requires_grad = b;
    return *this;
  }
  Tensor& set_name(std::string name) {
    n_->name = std::move(name);
    return *this;
  }
  const std::string& name() const { return n_->name; }

  std::span<const float> grad() const { return n_->grad; }
  std::span<float> grad() { return n_->grad; }
  bool has_grad() const { return !n_->grad.empty(); }
  void zero_grad() { n_->grad.assign(n_->value.size(), 0.0f); }

  std::shared_ptr<TensorNode> node() const { return n_; }
  TensorNode* raw() const { return n_.get(); }

 private:
  std::shared_ptr<TensorNode> n_;
};

// Runs reverse-mode accumulation from a scalar loss. Fills .grad on every
// requires_grad tensor reachable from the loss and drops the tape.
void backward(const Tensor& loss);

// ---- forward ops -----------------------------------------------------------
// All ops validate shapes and raise std::invalid_argument naming both shapes
// on mismatch; log raises std::domain_error on non-positive input.

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]@[k,n] -> [m,n]
Tensor transpose(const Tensor& a);                // [m,n] -> [n,m]
Tensor add(const Tensor& a, const Tensor& b);     // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, float c);
Tensor add_rowvec(const Tensor& m, const Tensor& v);  // [r,c] + [c] per row
Tensor softmax(const Tensor& x, int axis);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);  // tanh approximation
Tensor clamp(const Tensor& x, float lo, float hi);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);  // over last axis
Tensor embed(const Tensor& table, const std::vector<int>& ids);              // gather rows
Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1);
Tensor slice_rows(const Tensor& x, int64_t r0, int64_t r1);
Tensor take_rows(const Tensor& x, const std::vector<int>& rows);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_scalars(const std::vector<Tensor>& xs);  // n scalars -> [n]
Tensor element(const Tensor& x, int64_t i);            // [n] -> scalar
Tensor reduce_sum(const Tensor& x);                    // -> scalar
Tensor reduce_mean(const Tensor& x);                   // -> scalar
Tensor row_max(const Tensor& x);                       // [r,c] -> [r], argmax-routed grad
Tensor l2_normalize_rows(const Tensor& x);
Tensor zscore(const Tensor& x);  // [n] -> [n], population std; std<1e-8 -> zeros
// Additive attention mask: x + m where m carries no gradient.
Tensor add_const_mask(const Tensor& x, const std::vector<float>& mask);

// Mean of -log softmax(logits_row)[target] over rows. logits [r,V].
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets);
// Single-distribution form: logits [V] or [1,V].
Tensor cross_entropy(const Tensor& logits, int target_id);

}  // namespace jrl

#endif  // JRL_TENSOR_HPP_
