#pragma once

// Reverse-mode differentiation over TensorT. A Var wraps a graph node; ops
// build the graph eagerly and backward() walks it in reverse topological
// order. Primitives are pure functions of their inputs and use a fixed
// evaluation order, so a given graph evaluates bit-identically across runs.
//
// Values are float in training and double in the finite-difference checks;
// everything here is templated on the scalar type.

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "glitr/kernels.hpp"
#include "glitr/tensor.hpp"

namespace glitr {

// ---------------------------------------------------------------- graph core

template <typename T>
struct Node;
template <typename T>
using NodeRef = std::shared_ptr<Node<T>>;

template <typename T>
struct Node {
  TensorT<T> value;
  TensorT<T> grad;  // allocated on first touch, same shape as value
  bool requires_grad = false;
  bool has_grad = false;
  std::vector<NodeRef<T>> parents;
  std::function<void(Node<T>&)> backward;

  TensorT<T>& grad_ref() {
    if (!has_grad) {
      grad = TensorT<T>(value.shape());
      has_grad = true;
    }
    return grad;
  }

  void zero_grad() {
    if (has_grad) grad.fill(T(0));
  }
};

// Graph construction can be switched off for pure evaluation.
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  NoGradGuard() : prev(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = prev; }
  bool prev;
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(NodeRef<T> n) : node_(std::move(n)) {}

  static Var leaf(TensorT<T> v, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  static Var constant(TensorT<T> v) { return leaf(std::move(v), false); }

  bool defined() const { return node_ != nullptr; }
  const TensorT<T>& value() const { return node_->value; }
  TensorT<T>& value_mut() { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }

  // Accumulated gradient; zeros if backward never reached this node.
  TensorT<T> grad() const {
    if (node_->has_grad) return node_->grad;
    return TensorT<T>(node_->value.shape());
  }

  void zero_grad() { node_->zero_grad(); }

  // Same value, severed from the graph.
  Var detach() const { return leaf(node_->value, false); }

  NodeRef<T> node() const { return node_; }
  Node<T>* raw() const { return node_.get(); }

 private:
  NodeRef<T> node_;
};

namespace detail {

template <typename T>
Var<T> make_node(TensorT<T> value, std::vector<Var<T>> parents,
                 std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  if (grad_mode_flag()) {
    bool need = false;
    for (const auto& p : parents)
      if (p.requires_grad()) need = true;
    if (need) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (auto& p : parents) n->parents.push_back(p.node());
      n->backward = std::move(backward);
    }
  }
  return Var<T>(std::move(n));
}

inline void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace detail

// Runs reverse-mode accumulation from a scalar root. Gradients add into
// node.grad, so zero parameter grads before a fresh pass.
template <typename T>
void backward(const Var<T>& root) {
  detail::require(root.value().numel() == 1, "backward: root must be scalar");
  if (!root.requires_grad()) return;

  // iterative post-order topo sort over the requires_grad subgraph
  std::vector<Node<T>*> topo;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.push_back({root.raw(), 0});
  seen.insert(root.raw());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node<T>* p = n->parents[i++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(n);
      stack.pop_back();
    }
  }

  root.raw()->grad_ref().fill(T(1));
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && n->has_grad) n->backward(*n);
  }
}

// ---------------------------------------------------------------- primitives

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require(a.value().same_shape(b.value()), "add: shape mismatch");
  TensorT<T> out(a.value().shape());
  kernels::vadd(out.numel(), a.value().data(), b.value().data(), out.data());
  return detail::make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (int s = 0; s < 2; ++s) {
      auto& p = self.parents[s];
      if (p->requires_grad)
        kernels::axpy(self.grad.numel(), T(1), self.grad.data(), p->grad_ref().data());
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require(a.value().same_shape(b.value()), "sub: shape mismatch");
  TensorT<T> out(a.value().shape());
  kernels::vsub(out.numel(), a.value().data(), b.value().data(), out.data());
  return detail::make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
    if (self.parents[0]->requires_grad)
      kernels::axpy(self.grad.numel(), T(1), self.grad.data(),
                    self.parents[0]->grad_ref().data());
    if (self.parents[1]->requires_grad)
      kernels::axpy(self.grad.numel(), T(-1), self.grad.data(),
                    self.parents[1]->grad_ref().data());
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require(a.value().same_shape(b.value()), "mul: shape mismatch");
  TensorT<T> out(a.value().shape());
  kernels::vmul(out.numel(), a.value().data(), b.value().data(), out.data());
  return detail::make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
    size_t n = self.grad.numel();
    if (self.parents[0]->requires_grad) {
      TensorT<T> tmp(self.grad.shape());
      kernels::vmul(n, self.grad.data(), self.parents[1]->value.data(), tmp.data());
      kernels::axpy(n, T(1), tmp.data(), self.parents[0]->grad_ref().data());
    }
    if (self.parents[1]->requires_grad) {
      TensorT<T> tmp(self.grad.shape());
      kernels::vmul(n, self.grad.data(), self.parents[0]->value.data(), tmp.data());
      kernels::axpy(n, T(1), tmp.data(), self.parents[1]->grad_ref().data());
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
  TensorT<T> out(a.value().shape());
  kernels::scale(out.numel(), c, a.value().data(), out.data());
  return detail::make_node<T>(std::move(out), {a}, [c](Node<T>& self) {
    if (self.parents[0]->requires_grad)
      kernels::axpy(self.grad.numel(), c, self.grad.data(),
                    self.parents[0]->grad_ref().data());
  });
}

// a[m,n] + v[n] broadcast over rows
template <typename T>
Var<T> add_rowvec(const Var<T>& a, const Var<T>& v) {
  int m = a.value().rows(), n = a.value().cols();
  detail::require(v.value().numel() == static_cast<size_t>(n), "add_rowvec: width mismatch");
  TensorT<T> out(a.value().shape());
  for (int i = 0; i < m; ++i)
    kernels::vadd<T>(n, a.value().data() + size_t(i) * n, v.value().data(),
                     out.data() + size_t(i) * n);
  return detail::make_node<T>(std::move(out), {a, v}, [m, n](Node<T>& self) {
    if (self.parents[0]->requires_grad)
      kernels::axpy(self.grad.numel(), T(1), self.grad.data(),
                    self.parents[0]->grad_ref().data());
    if (self.parents[1]->requires_grad) {
      T* dv = self.parents[1]->grad_ref().data();
      for (int i = 0; i < m; ++i)
        kernels::axpy<T>(n, T(1), self.grad.data() + size_t(i) * n, dv);
    }
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  int m = a.value().rows(), k = a.value().cols();
  int k2 = b.value().rows(), n = b.value().cols();
  detail::require(k == k2, "matmul: inner dims differ");
  TensorT<T> out({m, n});
  kernels::gemm_nn<T>(m, k, n, a.value().data(), b.value().data(), out.data());
  return detail::make_node<T>(std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    const T* g = self.grad.data();
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad)
      kernels::gemm_nt<T>(m, n, k, g, pb->value.data(), pa->grad_ref().data(), true);
    if (pb->requires_grad)
      kernels::gemm_tn<T>(k, m, n, pa->value.data(), g, pb->grad_ref().data(), true);
  });
}

// a[m,k] * b[n,k]^T
template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  int m = a.value().rows(), k = a.value().cols();
  int n = b.value().rows();
  detail::require(b.value().cols() == k, "matmul_nt: inner dims differ");
  TensorT<T> out({m, n});
  kernels::gemm_nt<T>(m, k, n, a.value().data(), b.value().data(), out.data());
  return detail::make_node<T>(std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    const T* g = self.grad.data();
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad)
      kernels::gemm_nn<T>(m, n, k, g, pb->value.data(), pa->grad_ref().data(), true);
    if (pb->requires_grad)
      kernels::gemm_tn<T>(n, m, k, g, pa->value.data(), pb->grad_ref().data(), true);
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  detail::require(!parts.empty(), "concat_rows: empty");
  int n = parts[0].value().cols();
  int m = 0;
  for (const auto& p : parts) {
    detail::require(p.value().cols() == n, "concat_rows: width mismatch");
    m += p.value().rows();
  }
  TensorT<T> out({m, n});
  size_t off = 0;
  for (const auto& p : parts) {
    size_t len = p.value().numel();
    for (size_t i = 0; i < len; ++i) out[off + i] = p.value()[i];
    off += len;
  }
  return detail::make_node<T>(std::move(out), parts, [](Node<T>& self) {
    size_t off = 0;
    for (auto& p : self.parents) {
      size_t len = p->value.numel();
      if (p->requires_grad)
        kernels::axpy(len, T(1), self.grad.data() + off, p->grad_ref().data());
      off += len;
    }
  });
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, int r0, int r1) {
  int m = a.value().rows(), n = a.value().cols();
  detail::require(0 <= r0 && r0 < r1 && r1 <= m, "slice_rows: bad range");
  TensorT<T> out({r1 - r0, n});
  for (size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[size_t(r0) * n + i];
  return detail::make_node<T>(std::move(out), {a}, [r0, n](Node<T>& self) {
    if (self.parents[0]->requires_grad)
      kernels::axpy(self.grad.numel(), T(1), self.grad.data(),
                    self.parents[0]->grad_ref().data() + size_t(r0) * n);
  });
}

template <typename T>
Var<T> slice_cols(const Var<T>& a, int c0, int c1) {
  int m = a.value().rows(), n = a.value().cols();
  detail::require(0 <= c0 && c0 < c1 && c1 <= n, "slice_cols: bad range");
  int w = c1 - c0;
  TensorT<T> out({m, w});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j) out.at(i, j) = a.value().at(i, c0 + j);
  return detail::make_node<T>(std::move(out), {a}, [m, n, c0, w](Node<T>& self) {
    if (!self.parents[0]->requires_grad) return;
    T* da = self.parents[0]->grad_ref().data();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) da[size_t(i) * n + c0 + j] += self.grad.at(i, j);
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  detail::require(!parts.empty(), "concat_cols: empty");
  int m = parts[0].value().rows();
  int n = 0;
  for (const auto& p : parts) {
    detail::require(p.value().rows() == m, "concat_cols: height mismatch");
    n += p.value().cols();
  }
  TensorT<T> out({m, n});
  int off = 0;
  for (const auto& p : parts) {
    int w = p.value().cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) out.at(i, off + j) = p.value().at(i, j);
    off += w;
  }
  return detail::make_node<T>(std::move(out), parts, [m, n](Node<T>& self) {
    int off = 0;
    for (auto& p : self.parents) {
      int w = p->value.cols();
      if (p->requires_grad) {
        T* dp = p->grad_ref().data();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < w; ++j) dp[size_t(i) * w + j] += self.grad.at(i, off + j);
      }
      off += w;
    }
  });
}

// Row-wise stabilized softmax over the last dim. Rejects non-finite input.
template <typename T>
Var<T> softmax_rows(const Var<T>& a) {
  detail::require(a.value().cols() >= 1, "softmax_rows: empty rows");
  detail::require(a.value().all_finite(), "softmax_rows: non-finite input");
  int m = a.value().rows(), n = a.value().cols();
  TensorT<T> out(a.value().ndim() == 1 ? std::vector<int>{n} : std::vector<int>{m, n});
  for (int i = 0; i < m; ++i) {
    const T* x = a.value().data() + size_t(i) * n;
    T* y = out.data() + size_t(i) * n;
    T mx = kernels::reduce_max<T>(n, x);
    for (int j = 0; j < n; ++j) y[j] = x[j] - mx;
    kernels::vexp<T>(n, y, y);
    T s = kernels::reduce_sum<T>(n, y);
    kernels::scale<T>(n, T(1) / s, y, y);
  }
  return detail::make_node<T>(std::move(out), {a}, [m, n](Node<T>& self) {
    if (!self.parents[0]->requires_grad) return;
    T* da = self.parents[0]->grad_ref().data();
    for (int i = 0; i < m; ++i) {
      const T* y = self.value.data() + size_t(i) * n;
      const T* g = self.grad.data() + size_t(i) * n;
      T dp = kernels::dot<T>(n, g, y);
      for (int j = 0; j < n; ++j) da[size_t(i) * n + j] += y[j] * (g[j] - dp);
    }
  });
}

template <typename T>
Var<T> log_softmax_rows(const Var<T>& a) {
  detail::require(a.value().all_finite(), "log_softmax_rows: non-finite input");
  int m = a.value().rows(), n = a.value().cols();
  TensorT<T> out(a.value().shape());
  std::vector<T> buf(size_t(n), T(0));
  for (int i = 0; i < m; ++i) {
    const T* x = a.value().data() + size_t(i) * n;
    T* y = out.data() + size_t(i) * n;
    T mx = kernels::reduce_max<T>(n, x);
    for (int j = 0; j < n; ++j) buf[size_t(j)] = x[j] - mx;
    kernels::vexp<T>(n, buf.data(), buf.data());
    T lse = mx + std::log(kernels::reduce_sum<T>(n, buf.data()));
    for (int j = 0; j < n; ++j) y[j] = x[j] - lse;
  }
  return detail::make_node<T>(std::move(out), {a}, [m, n](Node<T>& self) {
    if (!self.parents[0]->requires_grad) return;
    T* da = self.parents[0]->grad_ref().data();
    std::vector<T> p(size_t(n), T(0));
    for (int i = 0; i < m; ++i) {
      const T* y = self.value.data() + size_t(i) * n;
      const T* g = self.grad.data() + size_t(i) * n;
      kernels::vexp<T>(n, y, p.data());
      T gs = kernels::reduce_sum<T>(n, g);
      for (int j = 0; j < n; ++j) da[size_t(i) * n + j] += g[j] - p[size_t(j)] * gs;
    }
  });
}

// Per-row normalization to mean 0 / var 1 (epsilon 1e-5), then gain & bias.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias,
                  T eps = T(1e-5)) {
  int m = x.value().rows(), n = x.value().cols();
  detail::require(n >= 2, "layer_norm: needs width >= 2");
  detail::require(gain.value().numel() == size_t(n) && bias.value().numel() == size_t(n),
                  "layer_norm: gain/bias width mismatch");
  detail::require(x.value().all_finite(), "layer_norm: non-finite input");
  TensorT<T> out(x.value().shape());
  TensorT<T> xhat({m, n});
  std::vector<T> inv_std(m);
  for (int i = 0; i < m; ++i) {
    const T* row = x.value().data() + size_t(i) * n;
    T mu = kernels::reduce_sum<T>(n, row) / T(n);
    T var = T(0);
    for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= T(n);
    T inv = T(1) / std::sqrt(var + eps);
    inv_std[i] = inv;
    for (int j = 0; j < n; ++j) {
      T xh = (row[j] - mu) * inv;
      xhat.at(i, j) = xh;
      out.at(i, j) = xh * gain.value()[j] + bias.value()[j];
    }
  }
  return detail::make_node<T>(
      std::move(out), {x, gain, bias},
      [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        for (int i = 0; i < m; ++i) {
          const T* g = self.grad.data() + size_t(i) * n;
          const T* xh = xhat.data() + size_t(i) * n;
          if (pg->requires_grad) {
            T* dg = pg->grad_ref().data();
            for (int j = 0; j < n; ++j) dg[j] += g[j] * xh[j];
          }
          if (pb->requires_grad)
            kernels::axpy<T>(n, T(1), g, pb->grad_ref().data());
          if (px->requires_grad) {
            T* dx = px->grad_ref().data() + size_t(i) * n;
            const T* gamma = pg->value.data();
            T mean_h = T(0), mean_hx = T(0);
            for (int j = 0; j < n; ++j) {
              T h = g[j] * gamma[j];
              mean_h += h;
              mean_hx += h * xh[j];
            }
            mean_h /= T(n);
            mean_hx /= T(n);
            for (int j = 0; j < n; ++j) {
              T h = g[j] * gamma[j];
              dx[j] += inv_std[i] * (h - mean_h - xh[j] * mean_hx);
            }
          }
        }
      });
}

// tanh-form gelu (the usual transformer approximation)
template <typename T>
Var<T> gelu(const Var<T>& x) {
  TensorT<T> out(x.value().shape());
  kernels::gelu_fwd<T>(out.numel(), x.value().data(), out.data());
  return detail::make_node<T>(std::move(out), {x}, [](Node<T>& self) {
    if (!self.parents[0]->requires_grad) return;
    kernels::gelu_bwd<T>(self.grad.numel(), self.parents[0]->value.data(), self.grad.data(),
                         self.parents[0]->grad_ref().data());
  });
}

template <typename T>
Var<T> tanh_op(const Var<T>& x) {
  TensorT<T> out(x.value().shape());
  for (size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(x.value()[i]);
  return detail::make_node<T>(std::move(out), {x}, [](Node<T>& self) {
    if (!self.parents[0]->requires_grad) return;
    T* dx = self.parents[0]->grad_ref().data();
    for (size_t i = 0; i < self.grad.numel(); ++i) {
      T y = self.value[i];
      dx[i] += self.grad[i] * (T(1) - y * y);
    }
  });
}

template <typename T>
Var<T> sum_all(const Var<T>& x) {
  TensorT<T> out({1});
  out[0] = kernels::reduce_sum<T>(x.value().numel(), x.value().data());
  return detail::make_node<T>(std::move(out), {x}, [](Node<T>& self) {
    if (!self.parents[0]->requires_grad) return;
    T g = self.grad[0];
    T* dx = self.parents[0]->grad_ref().data();
    for (size_t i = 0; i < self.parents[0]->value.numel(); ++i) dx[i] += g;
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
  size_t n = x.value().numel();
  TensorT<T> out({1});
  out[0] = kernels::reduce_sum<T>(n, x.value().data()) / T(n);
  return detail::make_node<T>(std::move(out), {x}, [n](Node<T>& self) {
    if (!self.parents[0]->requires_grad) return;
    T g = self.grad[0] / T(n);
    T* dx = self.parents[0]->grad_ref().data();
    for (size_t i = 0; i < n; ++i) dx[i] += g;
  });
}

// mean over all coordinates of (a-b)^2
template <typename T>
Var<T> mse_loss(const Var<T>& a, const Var<T>& b) {
  detail::require(a.value().same_shape(b.value()), "mse_loss: shape mismatch");
  size_t n = a.value().numel();
  TensorT<T> out({1});
  T acc = T(0);
  for (size_t i = 0; i < n; ++i) {
    T d = a.value()[i] - b.value()[i];
    acc += d * d;
  }
  out[0] = acc / T(n);
  return detail::make_node<T>(std::move(out), {a, b}, [n](Node<T>& self) {
    T g2 = self.grad[0] * T(2) / T(n);
    const TensorT<T>& av = self.parents[0]->value;
    const TensorT<T>& bv = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      T* da = self.parents[0]->grad_ref().data();
      for (size_t i = 0; i < n; ++i) da[i] += g2 * (av[i] - bv[i]);
    }
    if (self.parents[1]->requires_grad) {
      T* db = self.parents[1]->grad_ref().data();
      for (size_t i = 0; i < n; ++i) db[i] -= g2 * (av[i] - bv[i]);
    }
  });
}

// Tensor-side stable softmax/log-softmax for constant targets.
template <typename T>
void softmax_rows_inplace(TensorT<T>& t) {
  int m = t.rows(), n = t.cols();
  for (int i = 0; i < m; ++i) {
    T* x = t.data() + size_t(i) * n;
    T mx = kernels::reduce_max<T>(n, x);
    for (int j = 0; j < n; ++j) x[j] = std::exp(x[j] - mx);
    T s = kernels::reduce_sum<T>(n, x);
    kernels::scale<T>(n, T(1) / s, x, x);
  }
}

// Mean over rows of KL(p || softmax(logits from logq)), where logq must be
// log-probabilities (from log_softmax_rows) and p is a constant
// distribution per row. Gradient reaches the student side only.
template <typename T>
Var<T> kl_from_probs(const TensorT<T>& p, const Var<T>& logq) {
  detail::require(p.same_shape(logq.value()), "kl_from_probs: shape mismatch");
  int m = p.rows(), n = p.cols();
  TensorT<T> out({1});
  T acc = T(0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T pv = p.at(i, j);
      if (pv > T(0)) acc += pv * (std::log(pv) - logq.value().at(i, j));
    }
  out[0] = acc / T(m);
  return detail::make_node<T>(std::move(out), {logq}, [p, m, n](Node<T>& self) {
    if (!self.parents[0]->requires_grad) return;
    T g = self.grad[0] / T(m);
    T* dq = self.parents[0]->grad_ref().data();
    for (size_t i = 0; i < p.numel(); ++i) dq[i] -= g * p[i];
  });
}

// -(1/rows) * sum_r logp[r, label]
template <typename T>
Var<T> nll_mean(const Var<T>& logp, int label) {
  int m = logp.value().rows(), n = logp.value().cols();
  detail::require(label >= 0 && label < n, "nll_mean: label out of range");
  TensorT<T> out({1});
  T acc = T(0);
  for (int i = 0; i < m; ++i) acc -= logp.value().at(i, label);
  out[0] = acc / T(m);
  return detail::make_node<T>(std::move(out), {logp}, [m, n, label](Node<T>& self) {
    if (!self.parents[0]->requires_grad) return;
    T g = self.grad[0] / T(m);
    T* dl = self.parents[0]->grad_ref().data();
    for (int i = 0; i < m; ++i) dl[size_t(i) * n + label] -= g;
  });
}

// ------------------------------------------------------------ attention core

// softmax(Q K^T / sqrt(d) + mask) V for one head. Blocked mask entries are a
// large negative constant; a fully blocked row is rejected.
template <typename T>
inline constexpr T kMaskBlocked = T(-1e9);

template <typename T>
TensorT<T> causal_mask(int t) {
  TensorT<T> m({t, t});
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < t; ++j) m.at(i, j) = j <= i ? T(0) : kMaskBlocked<T>;
  return m;
}

template <typename T>
void validate_mask(const TensorT<T>& mask) {
  int t = mask.rows();
  detail::require(mask.cols() == t, "masked_attention: mask must be square");
  for (int i = 0; i < t; ++i) {
    bool any = false;
    for (int j = 0; j < t; ++j)
      if (mask.at(i, j) == T(0)) any = true;
    if (!any) throw std::invalid_argument("masked_attention: fully blocked row");
  }
}

template <typename T>
Var<T> masked_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                        const TensorT<T>& mask) {
  int t = q.value().rows(), d = q.value().cols();
  detail::require(k.value().rows() == t && v.value().rows() == t, "masked_attention: T mismatch");
  detail::require(mask.rows() == t, "masked_attention: mask size mismatch");
  validate_mask(mask);
  Var<T> scores = scale(matmul_nt(q, k), T(1) / std::sqrt(T(d)));
  scores = add(scores, Var<T>::constant(mask));
  return matmul(softmax_rows(scores), v);
}

// ------------------------------------------------------------- param registry

template <typename T>
struct ParamSet {
  std::vector<std::pair<std::string, Var<T>>> items;

  Var<T> add(const std::string& name, TensorT<T> init, bool trainable = true) {
    for (auto& [n, _] : items)
      if (n == name) throw std::invalid_argument("param name collision: " + name);
    Var<T> v = Var<T>::leaf(std::move(init), trainable);
    items.push_back({name, v});
    return v;
  }

  Var<T>* find(const std::string& name) {
    for (auto& [n, v] : items)
      if (n == name) return &v;
    return nullptr;
  }

  void zero_grad() {
    for (auto& [_, v] : items) v.zero_grad();
  }

  size_t scalar_count() const {
    size_t n = 0;
    for (auto& [_, v] : items) n += v.value().numel();
    return n;
  }

  void set_trainable(bool b) {
    for (auto& [_, v] : items) v.raw()->requires_grad = b;
  }

  // copies values from a same-layout set (names and shapes must line up)
  void copy_values_from(const ParamSet<T>& o) {
    detail::require(items.size() == o.items.size(), "param copy: layout mismatch");
    for (size_t i = 0; i < items.size(); ++i) {
      detail::require(items[i].first == o.items[i].first, "param copy: name mismatch");
      detail::require(items[i].second.value().same_shape(o.items[i].second.value()),
                      "param copy: shape mismatch");
      items[i].second.value_mut() = o.items[i].second.value();
    }
  }
};

}  // namespace glitr
