// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0

#include "jrl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace jrl {

namespace {

thread_local bool t_grad_enabled = true;

int64_t product(const std::vector<int64_t>& s) {
  int64_t p = 1;
  for (int64_t d : s) p *= d;
  return p;
}

std::shared_ptr<TensorNode> new_node(std::vector<int64_t> shape) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value.resize(static_cast<size_t>(product(n->shape)));
  return n;
}

// Wires autograd edges onto `out` when enabled and any parent needs grads.
void wire(const std::shared_ptr<TensorNode>& out,
          std::vector<std::shared_ptr<TensorNode>> parents,
          std::function<void(TensorNode&)> fn) {
  if (!t_grad_enabled) return;
  bool need = false;
  for (const auto& p : parents) need = need || p->requires_grad;
  if (!need) return;
  out->requires_grad = true;
  out->parents = std::move(parents);
  out->backward_fn = std::move(fn);
}

thread_local std::vector<double> t_scratch;

double* scratch(size_t n) {
  if (t_scratch.size() < n) t_scratch.resize(n);
  return t_scratch.data();
}

[[noreturn]] void shape_error(const std::string& op, const std::vector<int64_t>& a,
                              const std::vector<int64_t>& b) {
  throw std::invalid_argument(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void require_2d(const std::string& op, const Tensor& t) {
  if (t.ndim() != 2) throw std::invalid_argument(op + ": expected 2-d tensor, got " + shape_str(t.shape()));
}

}  // namespace

std::string shape_str(const std::vector<int64_t>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }

Tensor Tensor::zeros(std::vector<int64_t> shape) { return Tensor(new_node(std::move(shape))); }

Tensor Tensor::full(std::vector<int64_t> shape, float v) {
  auto n = new_node(std::move(shape));
  std::fill(n->value.begin(), n->value.end(), v);
  return Tensor(n);
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<float> data) {
  auto n = new_node(std::move(shape));
  if (static_cast<int64_t>(data.size()) != n->numel())
    throw std::invalid_argument("Tensor::from: data size " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(n->shape));
  n->value = std::move(data);
  return Tensor(n);
}

Tensor Tensor::randn(std::vector<int64_t> shape, Rng& rng, float stddev) {
  auto n = new_node(std::move(shape));
  for (auto& v : n->value) v = static_cast<float>(rng.normal() * stddev);
  return Tensor(n);
}

float Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item(): tensor has " + std::to_string(numel()) + " elements");
  return n_->value[0];
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
  auto root = loss.node();
  if (!root->requires_grad) return;  // nothing on the tape wants grads

  // Iterative post-order over parent edges.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* p = node->parents[idx].get();
      ++idx;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
  // Release the tape; leaves keep their grads.
  for (TensorNode* node : order) {
    node->backward_fn = nullptr;
    node->parents.clear();
  }
}

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  auto out = new_node(a.shape());
  const auto av = a.data(), bv = b.data();
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = av[i] + bv[i];
  wire(out, {a.node(), b.node()}, [](TensorNode& self) {
    for (int s = 0; s < 2; ++s) {
      auto& p = self.parents[s];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
  return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  auto out = new_node(a.shape());
  const auto av = a.data(), bv = b.data();
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = av[i] - bv[i];
  wire(out, {a.node(), b.node()}, [](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
    }
  });
  return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  auto out = new_node(a.shape());
  const auto av = a.data(), bv = b.data();
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = av[i] * bv[i];
  wire(out, {a.node(), b.node()}, [](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i] * pa->value[i];
    }
  });
  return Tensor(out);
}

Tensor scale(const Tensor& a, float c) {
  auto out = new_node(a.shape());
  const auto av = a.data();
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = av[i] * c;
  wire(out, {a.node()}, [c](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * c;
  });
  return Tensor(out);
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  require_2d("add_rowvec", m);
  if (v.ndim() != 1 || v.dim(0) != m.dim(1)) shape_error("add_rowvec", m.shape(), v.shape());
  int64_t r = m.dim(0), c = m.dim(1);
  auto out = new_node(m.shape());
  const auto mv = m.data(), vv = v.data();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out->value[static_cast<size_t>(i * c + j)] = mv[i * c + j] + vv[j];
  wire(out, {m.node(), v.node()}, [r, c](TensorNode& self) {
    auto& pm = self.parents[0];
    auto& pv = self.parents[1];
    if (pm->requires_grad) {
      pm->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pm->grad[i] += self.grad[i];
    }
    if (pv->requires_grad) {
      pv->ensure_grad();
      for (int64_t j = 0; j < c; ++j) {
        double s = 0.0;
        for (int64_t i = 0; i < r; ++i) s += self.grad[static_cast<size_t>(i * c + j)];
        pv->grad[static_cast<size_t>(j)] += static_cast<float>(s);
      }
    }
  });
  return Tensor(out);
}

Tensor add_const_mask(const Tensor& x, const std::vector<float>& mask) {
  if (static_cast<int64_t>(mask.size()) != x.numel())
    throw std::invalid_argument("add_const_mask: mask size " + std::to_string(mask.size()) +
                                " vs tensor " + shape_str(x.shape()));
  auto out = new_node(x.shape());
  const auto xv = x.data();
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = xv[i] + mask[i];
  wire(out, {x.node()}, [](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
  return Tensor(out);
}

// ---- matmul / transpose ----------------------------------------------------

namespace {

// Row-tiled kernels. Tiles group independent output elements so every single
// element keeps one fixed reduction order (ascending inner index) regardless
// of tiling or worker count; accumulation is 64-bit throughout.
constexpr int64_t kRowTile = 8;

// C[m,n] (+)= A[m,k] @ B[k,n], overwriting C.
void mm_nn(const float* A, const float* B, float* C, int64_t m, int64_t k, int64_t n,
           bool accumulate) {
  int64_t tiles = (m + kRowTile - 1) / kRowTile;
  parallel_for(tiles, [&](int64_t tile) {
    int64_t i0 = tile * kRowTile;
    int64_t rows = std::min(kRowTile, m - i0);
    double* acc = scratch(static_cast<size_t>(rows * n));
    std::fill(acc, acc + rows * n, 0.0);
    for (int64_t p = 0; p < k; ++p) {
      const float* brow = B + p * n;
      for (int64_t r = 0; r < rows; ++r) {
        double av = A[(i0 + r) * k + p];
        double* arow = acc + r * n;
        for (int64_t j = 0; j < n; ++j) arow[j] += av * brow[j];
      }
    }
    for (int64_t r = 0; r < rows; ++r) {
      float* crow = C + (i0 + r) * n;
      const double* arow = acc + r * n;
      if (accumulate)
        for (int64_t j = 0; j < n; ++j) crow[j] += static_cast<float>(arow[j]);
      else
        for (int64_t j = 0; j < n; ++j) crow[j] = static_cast<float>(arow[j]);
    }
  });
}

// C[m,k] += G[m,n] @ B[k,n]^T. Materializes B^T once so the accumulation
// runs through the vectorizable lane-parallel kernel instead of sequential
// dot-product reductions.
void mm_nt_acc(const float* G, const float* B, float* C, int64_t m, int64_t n, int64_t k) {
  std::vector<float> bt(static_cast<size_t>(n * k));
  for (int64_t p = 0; p < k; ++p)
    for (int64_t j = 0; j < n; ++j) bt[static_cast<size_t>(j * k + p)] = B[p * n + j];
  mm_nn(G, bt.data(), C, m, n, k, /*accumulate=*/true);
}

// C[k,n] += A[m,k]^T @ G[m,n].
void mm_tn_acc(const float* A, const float* G, float* C, int64_t m, int64_t k, int64_t n) {
  int64_t tiles = (k + kRowTile - 1) / kRowTile;
  parallel_for(tiles, [&](int64_t tile) {
    int64_t p0 = tile * kRowTile;
    int64_t rows = std::min(kRowTile, k - p0);
    double* acc = scratch(static_cast<size_t>(rows * n));
    std::fill(acc, acc + rows * n, 0.0);
    for (int64_t i = 0; i < m; ++i) {
      const float* grow = G + i * n;
      const float* arow = A + i * k + p0;
      for (int64_t r = 0; r < rows; ++r) {
        double av = arow[r];
        double* crow = acc + r * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * grow[j];
      }
    }
    for (int64_t r = 0; r < rows; ++r) {
      float* crow = C + (p0 + r) * n;
      const double* arow = acc + r * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += static_cast<float>(arow[j]);
    }
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d("matmul", a);
  require_2d("matmul", b);
  if (a.dim(1) != b.dim(0)) shape_error("matmul: inner dimensions", a.shape(), b.shape());
  int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto out = new_node({m, n});
  mm_nn(a.data().data(), b.data().data(), out->value.data(), m, k, n, /*accumulate=*/false);
  wire(out, {a.node(), b.node()}, [m, k, n](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    const float* G = self.grad.data();
    if (pa->requires_grad) {
      pa->ensure_grad();
      mm_nt_acc(G, pb->value.data(), pa->grad.data(), m, n, k);
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      mm_tn_acc(pa->value.data(), G, pb->grad.data(), m, k, n);
    }
  });
  return Tensor(out);
}

Tensor transpose(const Tensor& a) {
  require_2d("transpose", a);
  int64_t r = a.dim(0), c = a.dim(1);
  auto out = new_node({c, r});
  const auto av = a.data();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out->value[static_cast<size_t>(j * r + i)] = av[i * c + j];
  wire(out, {a.node()}, [r, c](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j)
        p->grad[static_cast<size_t>(i * c + j)] += self.grad[static_cast<size_t>(j * r + i)];
  });
  return Tensor(out);
}

// ---- nonlinearity ----------------------------------------------------------

Tensor softmax(const Tensor& x, int axis) {
  if (axis < 0) axis += x.ndim();
  if (axis < 0 || axis >= x.ndim())
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  int64_t len = x.shape()[static_cast<size_t>(axis)];
  int64_t inner = 1, outer = 1;
  for (int i = axis + 1; i < x.ndim(); ++i) inner *= x.shape()[static_cast<size_t>(i)];
  for (int i = 0; i < axis; ++i) outer *= x.shape()[static_cast<size_t>(i)];
  auto out = new_node(x.shape());
  const float* xv = x.data().data();
  float* yv = out->value.data();
  parallel_for(outer, [&](int64_t o) {
    for (int64_t in = 0; in < inner; ++in) {
      const float* lane = xv + o * len * inner + in;
      float* olane = yv + o * len * inner + in;
      double mx = lane[0];
      for (int64_t t = 1; t < len; ++t) mx = std::max(mx, static_cast<double>(lane[t * inner]));
      double sum = 0.0;
      for (int64_t t = 0; t < len; ++t) {
        double e = std::exp(static_cast<double>(lane[t * inner]) - mx);
        olane[t * inner] = static_cast<float>(e);
        sum += e;
      }
      double inv = 1.0 / sum;
      for (int64_t t = 0; t < len; ++t)
        olane[t * inner] = static_cast<float>(static_cast<double>(olane[t * inner]) * inv);
    }
  });
  wire(out, {x.node()}, [len, inner, outer](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    const float* s = self.value.data();
    const float* g = self.grad.data();
    float* pg = p->grad.data();
    parallel_for(outer, [&](int64_t o) {
      for (int64_t in = 0; in < inner; ++in) {
        int64_t base = o * len * inner + in;
        double dot = 0.0;
        for (int64_t t = 0; t < len; ++t)
          dot += static_cast<double>(g[base + t * inner]) * s[base + t * inner];
        for (int64_t t = 0; t < len; ++t) {
          int64_t i = base + t * inner;
          pg[i] += static_cast<float>(s[i] * (static_cast<double>(g[i]) - dot));
        }
      }
    });
  });
  return Tensor(out);
}

Tensor log(const Tensor& x) {
  auto out = new_node(x.shape());
  const auto xv = x.data();
  for (size_t i = 0; i < out->value.size(); ++i) {
    if (!(xv[i] > 0.0f))
      throw std::domain_error("log: non-positive input " + std::to_string(xv[i]) + " at index " +
                              std::to_string(i));
    out->value[i] = static_cast<float>(std::log(static_cast<double>(xv[i])));
  }
  wire(out, {x.node()}, [](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] / p->value[i];
  });
  return Tensor(out);
}

Tensor sigmoid(const Tensor& x) {
  auto out = new_node(x.shape());
  const auto xv = x.data();
  for (size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(xv[i]))));
  wire(out, {x.node()}, [](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      double s = self.value[i];
      p->grad[i] += static_cast<float>(self.grad[i] * s * (1.0 - s));
    }
  });
  return Tensor(out);
}

Tensor gelu(const Tensor& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  auto out = new_node(x.shape());
  const auto xv = x.data();
  for (size_t i = 0; i < out->value.size(); ++i) {
    double v = xv[i];
    double t = std::tanh(kC * (v + kA * v * v * v));
    out->value[i] = static_cast<float>(0.5 * v * (1.0 + t));
  }
  wire(out, {x.node()}, [](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      double v = p->value[i];
      double u = kC * (v + kA * v * v * v);
      double t = std::tanh(u);
      double du = kC * (1.0 + 3.0 * kA * v * v);
      double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
      p->grad[i] += static_cast<float>(self.grad[i] * d);
    }
  });
  return Tensor(out);
}

Tensor clamp(const Tensor& x, float lo, float hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
  auto out = new_node(x.shape());
  const auto xv = x.data();
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = std::min(hi, std::max(lo, xv[i]));
  wire(out, {x.node()}, [lo, hi](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      float v = p->value[i];
      if (v >= lo && v <= hi) p->grad[i] += self.grad[i];
    }
  });
  return Tensor(out);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  require_2d("layer_norm", x);
  int64_t r = x.dim(0), c = x.dim(1);
  if (gain.ndim() != 1 || gain.dim(0) != c) shape_error("layer_norm gain", x.shape(), gain.shape());
  if (bias.ndim() != 1 || bias.dim(0) != c) shape_error("layer_norm bias", x.shape(), bias.shape());
  constexpr double kEps = 1e-5;
  auto out = new_node(x.shape());
  const float* xv = x.data().data();
  const float* gv = gain.data().data();
  const float* bv = bias.data().data();
  float* yv = out->value.data();
  parallel_for(r, [&](int64_t i) {
    const float* row = xv + i * c;
    double mu = 0.0;
    for (int64_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      double d = row[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    double inv = 1.0 / std::sqrt(var + kEps);
    float* orow = yv + i * c;
    for (int64_t j = 0; j < c; ++j)
      orow[j] = static_cast<float>((row[j] - mu) * inv * gv[j] + bv[j]);
  });
  wire(out, {x.node(), gain.node(), bias.node()}, [r, c](TensorNode& self) {
    auto& px = self.parents[0];
    auto& pg = self.parents[1];
    auto& pb = self.parents[2];
    const float* xv = px->value.data();
    const float* gv = pg->value.data();
    const float* g = self.grad.data();
    if (pg->requires_grad) pg->ensure_grad();
    if (pb->requires_grad) pb->ensure_grad();
    if (px->requires_grad) px->ensure_grad();
    for (int64_t i = 0; i < r; ++i) {
      const float* row = xv + i * c;
      const float* grow = g + i * c;
      double mu = 0.0;
      for (int64_t j = 0; j < c; ++j) mu += row[j];
      mu /= static_cast<double>(c);
      double var = 0.0;
      for (int64_t j = 0; j < c; ++j) {
        double d = row[j] - mu;
        var += d * d;
      }
      var /= static_cast<double>(c);
      double inv = 1.0 / std::sqrt(var + 1e-5);
      // xhat_j = (x_j - mu) * inv
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (int64_t j = 0; j < c; ++j) {
        double xhat = (row[j] - mu) * inv;
        double dxhat = static_cast<double>(grow[j]) * gv[j];
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * xhat;
      }
      mean_dxhat /= static_cast<double>(c);
      mean_dxhat_xhat /= static_cast<double>(c);
      for (int64_t j = 0; j < c; ++j) {
        double xhat = (row[j] - mu) * inv;
        if (pg->requires_grad) pg->grad[static_cast<size_t>(j)] += static_cast<float>(grow[j] * xhat);
        if (pb->requires_grad) pb->grad[static_cast<size_t>(j)] += grow[j];
        if (px->requires_grad) {
          double dxhat = static_cast<double>(grow[j]) * gv[j];
          px->grad[static_cast<size_t>(i * c + j)] +=
              static_cast<float>((dxhat - mean_dxhat - xhat * mean_dxhat_xhat) * inv);
        }
      }
    }
  });
  return Tensor(out);
}

// ---- gather / slice / concat -----------------------------------------------

Tensor take_rows(const Tensor& x, const std::vector<int>& rows) {
  require_2d("take_rows", x);
  int64_t c = x.dim(1), r = x.dim(0);
  for (int id : rows)
    if (id < 0 || id >= r)
      throw std::invalid_argument("take_rows: row " + std::to_string(id) + " out of range for " +
                                  shape_str(x.shape()));
  auto out = new_node({static_cast<int64_t>(rows.size()), c});
  const auto xv = x.data();
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy_n(xv.data() + static_cast<int64_t>(rows[i]) * c, c, out->value.data() + static_cast<int64_t>(i) * c);
  wire(out, {x.node()}, [rows, c](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (size_t i = 0; i < rows.size(); ++i) {
      const float* grow = self.grad.data() + static_cast<int64_t>(i) * c;
      float* prow = p->grad.data() + static_cast<int64_t>(rows[i]) * c;
      for (int64_t j = 0; j < c; ++j) prow[j] += grow[j];
    }
  });
  return Tensor(out);
}

Tensor embed(const Tensor& table, const std::vector<int>& ids) { return take_rows(table, ids); }

Tensor slice_rows(const Tensor& x, int64_t r0, int64_t r1) {
  require_2d("slice_rows", x);
  if (r0 < 0 || r1 > x.dim(0) || r0 >= r1)
    throw std::invalid_argument("slice_rows: bad range [" + std::to_string(r0) + "," + std::to_string(r1) +
                                ") for " + shape_str(x.shape()));
  int64_t c = x.dim(1);
  auto out = new_node({r1 - r0, c});
  std::copy_n(x.data().data() + r0 * c, (r1 - r0) * c, out->value.data());
  wire(out, {x.node()}, [r0, c](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    float* dst = p->grad.data() + r0 * c;
    for (size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
  });
  return Tensor(out);
}

Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1) {
  require_2d("slice_cols", x);
  if (c0 < 0 || c1 > x.dim(1) || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) +
                                ") for " + shape_str(x.shape()));
  int64_t r = x.dim(0), c = x.dim(1), w = c1 - c0;
  auto out = new_node({r, w});
  const auto xv = x.data();
  for (int64_t i = 0; i < r; ++i)
    std::copy_n(xv.data() + i * c + c0, w, out->value.data() + i * w);
  wire(out, {x.node()}, [r, c, c0, w](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (int64_t i = 0; i < r; ++i) {
      const float* grow = self.grad.data() + i * w;
      float* prow = p->grad.data() + i * c + c0;
      for (int64_t j = 0; j < w; ++j) prow[j] += grow[j];
    }
  });
  return Tensor(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
  int64_t r = parts[0].dim(0), c = 0;
  for (const auto& p : parts) {
    require_2d("concat_cols", p);
    if (p.dim(0) != r) shape_error("concat_cols rows", parts[0].shape(), p.shape());
    c += p.dim(1);
  }
  auto out = new_node({r, c});
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::vector<int64_t> widths;
  int64_t off = 0;
  for (const auto& p : parts) {
    int64_t w = p.dim(1);
    const auto pv = p.data();
    for (int64_t i = 0; i < r; ++i)
      std::copy_n(pv.data() + i * w, w, out->value.data() + i * c + off);
    parents.push_back(p.node());
    widths.push_back(w);
    off += w;
  }
  wire(out, std::move(parents), [r, c, widths](TensorNode& self) {
    int64_t off = 0;
    for (size_t s = 0; s < self.parents.size(); ++s) {
      auto& p = self.parents[s];
      int64_t w = widths[s];
      if (p->requires_grad) {
        p->ensure_grad();
        for (int64_t i = 0; i < r; ++i) {
          const float* grow = self.grad.data() + i * c + off;
          float* prow = p->grad.data() + i * w;
          for (int64_t j = 0; j < w; ++j) prow[j] += grow[j];
        }
      }
      off += w;
    }
  });
  return Tensor(out);
}

Tensor concat_scalars(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_scalars: empty input");
  auto out = new_node({static_cast<int64_t>(xs.size())});
  std::vector<std::shared_ptr<TensorNode>> parents;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].numel() != 1)
      throw std::invalid_argument("concat_scalars: element " + std::to_string(i) + " has shape " +
                                  shape_str(xs[i].shape()));
    out->value[i] = xs[i].data()[0];
    parents.push_back(xs[i].node());
  }
  wire(out, std::move(parents), [](TensorNode& self) {
    for (size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = self.parents[i];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      p->grad[0] += self.grad[i];
    }
  });
  return Tensor(out);
}

Tensor element(const Tensor& x, int64_t i) {
  if (i < 0 || i >= x.numel())
    throw std::invalid_argument("element: index " + std::to_string(i) + " out of range for " +
                                shape_str(x.shape()));
  auto out = new_node({1});
  out->value[0] = x.data()[static_cast<size_t>(i)];
  wire(out, {x.node()}, [i](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    p->grad[static_cast<size_t>(i)] += self.grad[0];
  });
  return Tensor(out);
}

// ---- reductions ------------------------------------------------------------

Tensor reduce_sum(const Tensor& x) {
  auto out = new_node({1});
  double s = 0.0;
  for (float v : x.data()) s += v;
  out->value[0] = static_cast<float>(s);
  wire(out, {x.node()}, [](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    float g = self.grad[0];
    for (auto& pv : p->grad) pv += g;
  });
  return Tensor(out);
}

Tensor reduce_mean(const Tensor& x) {
  auto out = new_node({1});
  double s = 0.0;
  for (float v : x.data()) s += v;
  out->value[0] = static_cast<float>(s / static_cast<double>(x.numel()));
  int64_t n = x.numel();
  wire(out, {x.node()}, [n](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    float g = static_cast<float>(static_cast<double>(self.grad[0]) / static_cast<double>(n));
    for (auto& pv : p->grad) pv += g;
  });
  return Tensor(out);
}

Tensor row_max(const Tensor& x) {
  require_2d("row_max", x);
  int64_t r = x.dim(0), c = x.dim(1);
  auto out = new_node({r});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(r));
  const auto xv = x.data();
  for (int64_t i = 0; i < r; ++i) {
    const float* row = xv.data() + i * c;
    int64_t best = 0;
    for (int64_t j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;  // first max wins on ties
    (*argmax)[static_cast<size_t>(i)] = best;
    out->value[static_cast<size_t>(i)] = row[best];
  }
  wire(out, {x.node()}, [argmax, c](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      p->grad[static_cast<size_t>(static_cast<int64_t>(i) * c + (*argmax)[i])] += self.grad[i];
  });
  return Tensor(out);
}

Tensor l2_normalize_rows(const Tensor& x) {
  require_2d("l2_normalize_rows", x);
  int64_t r = x.dim(0), c = x.dim(1);
  auto out = new_node(x.shape());
  const auto xv = x.data();
  for (int64_t i = 0; i < r; ++i) {
    const float* row = xv.data() + i * c;
    double s = 0.0;
    for (int64_t j = 0; j < c; ++j) s += static_cast<double>(row[j]) * row[j];
    double nrm = std::max(std::sqrt(s), 1e-12);
    for (int64_t j = 0; j < c; ++j)
      out->value[static_cast<size_t>(i * c + j)] = static_cast<float>(row[j] / nrm);
  }
  wire(out, {x.node()}, [r, c](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    const float* y = self.value.data();
    const float* g = self.grad.data();
    const float* xv = p->value.data();
    for (int64_t i = 0; i < r; ++i) {
      const float* row = xv + i * c;
      double s = 0.0;
      for (int64_t j = 0; j < c; ++j) s += static_cast<double>(row[j]) * row[j];
      double nrm = std::max(std::sqrt(s), 1e-12);
      double dot = 0.0;
      for (int64_t j = 0; j < c; ++j)
        dot += static_cast<double>(g[i * c + j]) * y[i * c + j];
      for (int64_t j = 0; j < c; ++j)
        p->grad[static_cast<size_t>(i * c + j)] +=
            static_cast<float>((static_cast<double>(g[i * c + j]) - dot * y[i * c + j]) / nrm);
    }
  });
  return Tensor(out);
}

Tensor zscore(const Tensor& x) {
  if (x.ndim() != 1) throw std::invalid_argument("zscore: expected 1-d tensor, got " + shape_str(x.shape()));
  int64_t n = x.dim(0);
  if (n < 2) throw std::invalid_argument("zscore: need at least 2 values, got " + std::to_string(n));
  auto out = new_node(x.shape());
  const auto xv = x.data();
  double mu = 0.0;
  for (int64_t i = 0; i < n; ++i) mu += xv[static_cast<size_t>(i)];
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double d = xv[static_cast<size_t>(i)] - mu;
    var += d * d;
  }
  var /= static_cast<double>(n);
  double sd = std::sqrt(var);
  bool degen = sd < 1e-8;
  if (!degen)
    for (int64_t i = 0; i < n; ++i)
      out->value[static_cast<size_t>(i)] = static_cast<float>((xv[static_cast<size_t>(i)] - mu) / sd);
  wire(out, {x.node()}, [n, sd, degen](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    if (degen) return;  // constant zero output, no gradient
    const float* y = self.value.data();
    const float* g = self.grad.data();
    double gm = 0.0, gym = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      gm += g[i];
      gym += static_cast<double>(g[i]) * y[i];
    }
    gm /= static_cast<double>(n);
    gym /= static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i)
      p->grad[static_cast<size_t>(i)] += static_cast<float>((g[i] - gm - y[i] * gym) / sd);
  });
  return Tensor(out);
}

// ---- cross entropy ---------------------------------------------------------

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets) {
  require_2d("cross_entropy_rows", logits);
  int64_t r = logits.dim(0), v = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != r)
    throw std::invalid_argument("cross_entropy_rows: " + std::to_string(targets.size()) + " targets for " +
                                shape_str(logits.shape()));
  for (int t : targets)
    if (t < 0 || t >= v)
      throw std::invalid_argument("cross_entropy_rows: target " + std::to_string(t) + " out of range for " +
                                  shape_str(logits.shape()));
  auto out = new_node({1});
  const auto lv = logits.data();
  double total = 0.0;
  for (int64_t i = 0; i < r; ++i) {
    const float* row = lv.data() + i * v;
    double mx = row[0];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0.0;
    for (int64_t j = 0; j < v; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
    total += mx + std::log(sum) - static_cast<double>(row[targets[static_cast<size_t>(i)]]);
  }
  out->value[0] = static_cast<float>(total / static_cast<double>(r));
  wire(out, {logits.node()}, [r, v, targets](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    double g = static_cast<double>(self.grad[0]) / static_cast<double>(r);
    const float* lv = p->value.data();
    float* pg = p->grad.data();
    for (int64_t i = 0; i < r; ++i) {
      const float* row = lv + i * v;
      double mx = row[0];
      for (int64_t j = 1; j < v; ++j) mx = std::max(mx, static_cast<double>(row[j]));
      double sum = 0.0;
      for (int64_t j = 0; j < v; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
      for (int64_t j = 0; j < v; ++j) {
        double soft = std::exp(static_cast<double>(row[j]) - mx) / sum;
        double delta = (j == targets[static_cast<size_t>(i)]) ? 1.0 : 0.0;
        pg[i * v + j] += static_cast<float>(g * (soft - delta));
      }
    }
  });
  return Tensor(out);
}

Tensor cross_entropy(const Tensor& logits, int target_id) {
  if (logits.ndim() == 2) return cross_entropy_rows(logits, {target_id});
  if (logits.ndim() != 1)
    throw std::invalid_argument("cross_entropy: expected [V] or [1,V], got " + shape_str(logits.shape()));
  // 1-d path: reshape to [1,V] with a pass-through node on the tape.
  int64_t v = logits.dim(0);
  auto out = new_node({1, v});
  out->value = std::vector<float>(logits.data().begin(), logits.data().end());
  wire(out, {logits.node()}, [](TensorNode& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
  return cross_entropy_rows(Tensor(out), {target_id});
}

}  // namespace jrl
