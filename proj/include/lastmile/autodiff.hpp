//
// Copyright 2026 The lastmile Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef LASTMILE_AUTODIFF_HPP_
#define LASTMILE_AUTODIFF_HPP_

// Dense row-major 2-D tensors with a define-by-run reverse-mode tape.
//
// Primitives record themselves on the thread's active Tape (installed with
// TapeScope) whenever at least one input requires a gradient. With no active
// tape the same primitives run as plain value computations, which is how
// inference and finite-difference probes reuse the training code path.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lastmile/error.hpp"
#include "lastmile/kernels.hpp"

namespace lastmile::ad {

template <class T>
struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  T* grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad.data();
  }
};

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(std::size_t rows, std::size_t cols,
                      bool requires_grad = false) {
    return from_values(rows, cols, std::vector<T>(rows * cols, T(0)),
                       requires_grad);
  }

  static Tensor from_values(std::size_t rows, std::size_t cols,
                            std::vector<T> values, bool requires_grad = false) {
    if (values.size() != rows * cols)
      throw ShapeError("tensor: " + std::to_string(values.size()) +
                       " values for shape [" + std::to_string(rows) + "x" +
                       std::to_string(cols) + "]");
    auto node = std::make_shared<Node<T>>();
    node->rows = rows;
    node->cols = cols;
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(T v) { return from_values(1, 1, {v}); }

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  std::array<std::size_t, 2> shape() const { return {rows(), cols()}; }
  bool requires_grad() const { return node_->requires_grad; }
  const char* op() const { return node_->op; }

  std::span<const T> values() const { return node_->value; }
  std::span<T> mutable_values() { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

  T operator()(std::size_t r, std::size_t c) const {
    return node_->value[r * cols() + c];
  }

  T item() const {
    if (size() != 1)
      throw ContractError("item: tensor has shape " + shape_string());
    return node_->value[0];
  }

  // Deep copy of the values; keeps requires_grad, drops history and grad.
  Tensor clone() const {
    return from_values(rows(), cols(), node_->value, requires_grad());
  }
  Tensor detach() const { return from_values(rows(), cols(), node_->value); }

  std::string shape_string() const {
    return "[" + std::to_string(rows()) + "x" + std::to_string(cols()) + "]";
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
class Tape {
 public:
  void record(std::shared_ptr<Node<T>> node) {
    nodes_.push_back(std::move(node));
  }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  void clear() { nodes_.clear(); }

  // Accumulates d(loss)/d(leaf) into every leaf that requires a gradient,
  // then clears the tape.
  void backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.size() != 1)
      throw ContractError("backward: loss must be a scalar, got " +
                          (loss.defined() ? loss.shape_string() : "undefined"));
    const auto& root = loss.node();
    if (!root->requires_grad) {
      clear();
      return;
    }
    if (root->backward_fn) {
      const bool on_tape =
          std::any_of(nodes_.begin(), nodes_.end(),
                      [&](const auto& n) { return n == root; });
      if (!on_tape)
        throw ContractError("backward: loss was not recorded on this tape");
    }
    root->grad_buffer()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>& n = **it;
      if (!n.grad.empty() && n.backward_fn) n.backward_fn(n);
    }
    clear();
  }

 private:
  std::vector<std::shared_ptr<Node<T>>> nodes_;
};

template <class T>
Tape<T>*& active_tape() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}

// Installs `tape` (or none) as the active tape for the enclosing scope.
template <class T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>* tape) : previous_(active_tape<T>()) {
    active_tape<T>() = tape;
  }
  explicit TapeScope(Tape<T>& tape) : TapeScope(&tape) {}
  ~TapeScope() { active_tape<T>() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

template <class T>
struct NoGradScope : TapeScope<T> {
  NoGradScope() : TapeScope<T>(nullptr) {}
};

namespace detail {

template <class T>
std::shared_ptr<Node<T>> new_node(const char* op, std::size_t rows,
                                  std::size_t cols) {
  auto n = std::make_shared<Node<T>>();
  n->op = op;
  n->rows = rows;
  n->cols = cols;
  n->value.assign(rows * cols, T(0));
  return n;
}

template <class T>
bool should_record(std::initializer_list<const Tensor<T>*> inputs) {
  if (active_tape<T>() == nullptr) return false;
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <class T, class Fn>
Tensor<T> finish(std::shared_ptr<Node<T>> out,
                 std::initializer_list<const Tensor<T>*> inputs, Fn&& fn) {
  if (should_record<T>(inputs)) {
    out->requires_grad = true;
    for (const auto* t : inputs) out->parents.push_back(t->node());
    out->backward_fn = std::forward<Fn>(fn);
    active_tape<T>()->record(out);
  }
  return Tensor<T>(std::move(out));
}

template <class T>
[[noreturn]] void shape_mismatch(const char* op, const Tensor<T>& a,
                                 const Tensor<T>& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() +
                   " vs " + b.shape_string());
}

template <class T>
void require_same_shape(const char* op, const Tensor<T>& a,
                        const Tensor<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch(op, a, b);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("add", a, b);
  auto out = detail::new_node<T>("add", a.rows(), a.cols());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] + bv[i];
  return detail::finish<T>(out, {&a, &b}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      T* g = p->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("sub", a, b);
  auto out = detail::new_node<T>("sub", a.rows(), a.cols());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] - bv[i];
  return detail::finish<T>(out, {&a, &b}, [](Node<T>& self) {
    const T sign[2] = {T(1), T(-1)};
    for (std::size_t k = 0; k < 2; ++k) {
      auto& p = self.parents[k];
      if (!p->requires_grad) continue;
      T* g = p->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        g[i] += sign[k] * self.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("mul", a, b);
  auto out = detail::new_node<T>("mul", a.rows(), a.cols());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * bv[i];
  return detail::finish<T>(out, {&a, &b}, [](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      T* g = pa->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        g[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      T* g = pb->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        g[i] += self.grad[i] * pa->value[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  auto out = detail::new_node<T>("scale", a.rows(), a.cols());
  const auto av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * s;
  return detail::finish<T>(out, {&a}, [s](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * s;
  });
}

// a[m,n] + row[1,n] broadcast over rows.
template <class T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    detail::shape_mismatch("add_row", a, row);
  auto out = detail::new_node<T>("add_row", a.rows(), a.cols());
  const std::size_t n = a.cols();
  const auto av = a.values();
  const auto rv = row.values();
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j)
      out->value[i * n + j] = av[i * n + j] + rv[j];
  return detail::finish<T>(out, {&a, &row}, [n](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pr = self.parents[1];
    if (pa->requires_grad) {
      T* g = pa->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (pr->requires_grad) {
      T* g = pr->grad_buffer();
      for (std::size_t i = 0; i < self.rows; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    }
  });
}

namespace detail {

template <class T, class F, class DF>
Tensor<T> unary(const char* op, const Tensor<T>& a, F f, DF df) {
  auto out = new_node<T>(op, a.rows(), a.cols());
  const auto av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = f(av[i]);
  return finish<T>(out, {&a}, [df](Node<T>& self) {
    auto& p = self.parents[0];
    T* g = p->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      g[i] += self.grad[i] * df(p->value[i], self.value[i]);
  });
}

}  // namespace detail

template <class T>
Tensor<T> exp(const Tensor<T>& a) {
  return detail::unary<T>(
      "exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& a) {
  return detail::unary<T>(
      "log", a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
  return detail::unary<T>(
      "tanh", a, [](T x) { return std::tanh(x); },
      [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
  return detail::unary<T>(
      "gelu", a, [](T x) { return kernels::gelu(x); },
      [](T x, T) { return kernels::gelu_grad(x); });
}

// Gradient passes through where lo <= x <= hi.
template <class T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  return detail::unary<T>(
      "clamp", a, [lo, hi](T x) { return std::clamp(x, lo, hi); },
      [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

// Elementwise minimum; ties route the gradient to `a`.
template <class T>
Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("minimum", a, b);
  auto out = detail::new_node<T>("minimum", a.rows(), a.cols());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i)
    out->value[i] = av[i] <= bv[i] ? av[i] : bv[i];
  return detail::finish<T>(out, {&a, &b}, [](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const bool first = pa->value[i] <= pb->value[i];
      auto& p = first ? pa : pb;
      if (p->requires_grad) p->grad_buffer()[i] += self.grad[i];
    }
  });
}

// Positions where mask != 0 are replaced by `fill` and receive no gradient.
template <class T>
Tensor<T> masked_fill(const Tensor<T>& a, std::span<const std::uint8_t> mask,
                      T fill) {
  if (mask.size() != a.size())
    throw ShapeError("masked_fill: mask of " + std::to_string(mask.size()) +
                     " entries for tensor " + a.shape_string());
  auto out = detail::new_node<T>("masked_fill", a.rows(), a.cols());
  const auto av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i)
    out->value[i] = mask[i] ? fill : av[i];
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  return detail::finish<T>(out, {&a}, [keep = std::move(keep)](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (!keep[i]) g[i] += self.grad[i];
  });
}

// Sets entries above the diagonal to -inf.
template <class T>
Tensor<T> causal_mask(const Tensor<T>& scores) {
  const std::size_t m = scores.rows();
  const std::size_t n = scores.cols();
  std::vector<std::uint8_t> mask(m * n, 0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < n; ++j) mask[i * n + j] = 1;
  return masked_fill<T>(scores, mask, -std::numeric_limits<T>::infinity());
}

// ---------------------------------------------------------------------------
// Linear algebra

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows()) detail::shape_mismatch("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  auto out = detail::new_node<T>("matmul", m, n);
  kernels::matmul_acc(a.values().data(), b.values().data(), out->value.data(),
                      m, k, n);
  return detail::finish<T>(out, {&a, &b}, [m, k, n](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad)
      kernels::matmul_nt_acc(self.grad.data(), pb->value.data(),
                             pa->grad_buffer(), m, n, k);
    if (pb->requires_grad)
      kernels::matmul_tn_acc(pa->value.data(), self.grad.data(),
                             pb->grad_buffer(), m, k, n);
  });
}

// x[m,k] * w[k,n] + bias[1,n] as one node.
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  if (x.cols() != w.rows()) detail::shape_mismatch("linear", x, w);
  if (bias.rows() != 1 || bias.cols() != w.cols())
    detail::shape_mismatch("linear", w, bias);
  const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
  auto out = detail::new_node<T>("linear", m, n);
  kernels::linear(x.values().data(), w.values().data(), bias.values().data(),
                  out->value.data(), m, k, n);
  return detail::finish<T>(out, {&x, &w, &bias}, [m, k, n](Node<T>& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    if (px->requires_grad)
      kernels::matmul_nt_acc(self.grad.data(), pw->value.data(),
                             px->grad_buffer(), m, n, k);
    if (pw->requires_grad)
      kernels::matmul_tn_acc(px->value.data(), self.grad.data(),
                             pw->grad_buffer(), m, k, n);
    if (pb->requires_grad) {
      T* g = pb->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    }
  });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  const std::size_t m = a.rows(), n = a.cols();
  auto out = detail::new_node<T>("transpose", n, m);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out->value[j * m + i] = av[i * n + j];
  return detail::finish<T>(out, {&a}, [m, n](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

// ---------------------------------------------------------------------------
// Row-wise normalizations

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  const std::size_t m = a.rows(), n = a.cols();
  auto out = detail::new_node<T>("softmax_rows", m, n);
  for (std::size_t i = 0; i < m; ++i)
    kernels::softmax_row(a.values().data() + i * n, out->value.data() + i * n,
                         n);
  return detail::finish<T>(out, {&a}, [m, n](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      const T* y = self.value.data() + i * n;
      const T* dy = self.grad.data() + i * n;
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (dy[j] - dot);
    }
  });
}

template <class T>
Tensor<T> log_softmax_rows(const Tensor<T>& a) {
  const std::size_t m = a.rows(), n = a.cols();
  auto out = detail::new_node<T>("log_softmax_rows", m, n);
  for (std::size_t i = 0; i < m; ++i)
    kernels::log_softmax_row(a.values().data() + i * n,
                             out->value.data() + i * n, n);
  return detail::finish<T>(out, {&a}, [m, n](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      const T* y = self.value.data() + i * n;
      const T* dy = self.grad.data() + i * n;
      T total = 0;
      for (std::size_t j = 0; j < n; ++j) total += dy[j];
      for (std::size_t j = 0; j < n; ++j)
        g[i * n + j] += dy[j] - std::exp(y[j]) * total;
    }
  });
}

// Row-wise layer normalization with affine gamma/beta of shape [1,n].
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps) {
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != n)
    detail::shape_mismatch("layer_norm", x, gamma);
  if (beta.rows() != 1 || beta.cols() != n)
    detail::shape_mismatch("layer_norm", x, beta);
  auto out = detail::new_node<T>("layer_norm", m, n);
  std::vector<T> rstd(m);
  for (std::size_t i = 0; i < m; ++i)
    kernels::layer_norm_row(x.values().data() + i * n, gamma.values().data(),
                            beta.values().data(), out->value.data() + i * n, n,
                            eps, &rstd[i]);
  return detail::finish<T>(
      out, {&x, &gamma, &beta},
      [m, n, rstd = std::move(rstd)](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        std::vector<T> xhat(n), dxhat(n);
        for (std::size_t i = 0; i < m; ++i) {
          const T* xr = px->value.data() + i * n;
          const T* dy = self.grad.data() + i * n;
          T mean = 0;
          for (std::size_t j = 0; j < n; ++j) mean += xr[j];
          mean /= static_cast<T>(n);
          for (std::size_t j = 0; j < n; ++j) xhat[j] = (xr[j] - mean) * rstd[i];
          if (pg->requires_grad) {
            T* g = pg->grad_buffer();
            for (std::size_t j = 0; j < n; ++j) g[j] += dy[j] * xhat[j];
          }
          if (pb->requires_grad) {
            T* g = pb->grad_buffer();
            for (std::size_t j = 0; j < n; ++j) g[j] += dy[j];
          }
          if (px->requires_grad) {
            T mean_d = 0, mean_dx = 0;
            for (std::size_t j = 0; j < n; ++j) {
              dxhat[j] = dy[j] * pg->value[j];
              mean_d += dxhat[j];
              mean_dx += dxhat[j] * xhat[j];
            }
            mean_d /= static_cast<T>(n);
            mean_dx /= static_cast<T>(n);
            T* g = px->grad_buffer() + i * n;
            for (std::size_t j = 0; j < n; ++j)
              g[j] += rstd[i] * (dxhat[j] - mean_d - xhat[j] * mean_dx);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Indexing

// Rows of table[v,d] selected by ids.
template <class T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids) {
  const std::size_t d = table.cols();
  for (auto id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= table.rows())
      throw ContractError("embedding: id " + std::to_string(id) +
                          " outside table " + table.shape_string());
  auto out = detail::new_node<T>("embedding", ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table.values().data() + static_cast<std::size_t>(ids[i]) * d, d,
                out->value.data() + i * d);
  std::vector<std::int32_t> rows(ids.begin(), ids.end());
  return detail::finish<T>(out, {&table},
                           [d, rows = std::move(rows)](Node<T>& self) {
                             T* g = self.parents[0]->grad_buffer();
                             for (std::size_t i = 0; i < rows.size(); ++i) {
                               T* gr = g + static_cast<std::size_t>(rows[i]) * d;
                               for (std::size_t j = 0; j < d; ++j)
                                 gr[j] += self.grad[i * d + j];
                             }
                           });
}

// out[i] = a[i, index[i]], shape [m,1].
template <class T>
Tensor<T> gather(const Tensor<T>& a, std::span<const std::int32_t> index) {
  const std::size_t m = a.rows(), n = a.cols();
  if (index.size() != m)
    throw ShapeError("gather: " + std::to_string(index.size()) +
                     " indices for tensor " + a.shape_string());
  for (auto c : index)
    if (c < 0 || static_cast<std::size_t>(c) >= n)
      throw ContractError("gather: index " + std::to_string(c) +
                          " outside tensor " + a.shape_string());
  auto out = detail::new_node<T>("gather", m, 1);
  for (std::size_t i = 0; i < m; ++i)
    out->value[i] = a.values()[i * n + static_cast<std::size_t>(index[i])];
  std::vector<std::int32_t> cols(index.begin(), index.end());
  return detail::finish<T>(out, {&a}, [n, cols = std::move(cols)](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < cols.size(); ++i)
      g[i * n + static_cast<std::size_t>(cols[i])] += self.grad[i];
  });
}

// Columns [c0, c1).
template <class T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t c0, std::size_t c1) {
  if (c0 > c1 || c1 > a.cols())
    throw ShapeError("slice_cols: range [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") on " + a.shape_string());
  const std::size_t m = a.rows(), n = a.cols(), w = c1 - c0;
  auto out = detail::new_node<T>("slice_cols", m, w);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(a.values().data() + i * n + c0, w, out->value.data() + i * w);
  return detail::finish<T>(out, {&a}, [m, n, w, c0](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j)
        g[i * n + c0 + j] += self.grad[i * w + j];
  });
}

// Rows [r0, r1).
template <class T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t r0, std::size_t r1) {
  if (r0 > r1 || r1 > a.rows())
    throw ShapeError("slice_rows: range [" + std::to_string(r0) + "," +
                     std::to_string(r1) + ") on " + a.shape_string());
  const std::size_t n = a.cols();
  auto out = detail::new_node<T>("slice_rows", r1 - r0, n);
  std::copy_n(a.values().data() + r0 * n, (r1 - r0) * n, out->value.data());
  return detail::finish<T>(out, {&a}, [r0, n](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer() + r0 * n;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) detail::shape_mismatch("concat_cols", parts.front(), p);
    total += p.cols();
  }
  auto out = detail::new_node<T>("concat_cols", m, total);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(p.values().data() + i * p.cols(), p.cols(),
                  out->value.data() + i * total + off);
    off += p.cols();
  }
  const bool record = active_tape<T>() != nullptr &&
                      std::any_of(parts.begin(), parts.end(),
                                  [](const auto& p) { return p.requires_grad(); });
  if (record) {
    out->requires_grad = true;
    for (const auto& p : parts) out->parents.push_back(p.node());
    out->backward_fn = [m, total, offsets = std::move(offsets)](Node<T>& self) {
      for (std::size_t k = 0; k < self.parents.size(); ++k) {
        auto& p = self.parents[k];
        if (!p->requires_grad) continue;
        T* g = p->grad_buffer();
        const std::size_t w = p->cols;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j)
            g[i * w + j] += self.grad[i * total + offsets[k] + j];
      }
    };
    active_tape<T>()->record(out);
  }
  return Tensor<T>(std::move(out));
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) detail::shape_mismatch("concat_rows", parts.front(), p);
    total += p.rows();
  }
  auto out = detail::new_node<T>("concat_rows", total, n);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out->value.begin() + off);
    off += p.size();
  }
  const bool record = active_tape<T>() != nullptr &&
                      std::any_of(parts.begin(), parts.end(),
                                  [](const auto& p) { return p.requires_grad(); });
  if (record) {
    out->requires_grad = true;
    for (const auto& p : parts) out->parents.push_back(p.node());
    out->backward_fn = [](Node<T>& self) {
      std::size_t off = 0;
      for (auto& p : self.parents) {
        if (p->requires_grad) {
          T* g = p->grad_buffer();
          for (std::size_t i = 0; i < p->value.size(); ++i)
            g[i] += self.grad[off + i];
        }
        off += p->value.size();
      }
    };
    active_tape<T>()->record(out);
  }
  return Tensor<T>(std::move(out));
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  auto out = detail::new_node<T>("sum", 1, 1);
  T s = 0;
  for (T v : a.values()) s += v;
  out->value[0] = s;
  return detail::finish<T>(out, {&a}, [](Node<T>& self) {
    auto& p = self.parents[0];
    T* g = p->grad_buffer();
    for (std::size_t i = 0; i < p->value.size(); ++i) g[i] += self.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

// ---------------------------------------------------------------------------
// Finite-difference verification

// Maximum over checked coordinates of
//   |analytic - numeric| / max(1, |analytic|, |numeric|)
// where numeric is the central difference with step eps. `f` rebuilds the
// scalar loss from the current parameter values each time it is called.
// At most `max_coords` coordinates are checked, sampled with `seed`.
template <class T, class F>
T grad_check(F&& f, std::vector<Tensor<T>> params, T eps,
             std::size_t max_coords = 256, std::uint64_t seed = 0) {
  if (!(eps >= T(1e-7) && eps <= T(1e-3)))
    throw ContractError("grad_check: eps must lie in [1e-7, 1e-3]");
  for (auto& p : params) p.zero_grad();
  {
    Tape<T> tape;
    TapeScope<T> scope(tape);
    Tensor<T> loss = f();
    if (!std::isfinite(loss.item()))
      throw NumericError("grad_check: loss is not finite");
    tape.backward(loss);
  }
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p].size(); ++i) coords.emplace_back(p, i);
  if (coords.size() > max_coords) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
  }
  NoGradScope<T> no_grad;
  T worst = 0;
  for (auto [p, i] : coords) {
    auto values = params[p].mutable_values();
    const T saved = values[i];
    values[i] = saved + eps;
    const T up = f().item();
    values[i] = saved - eps;
    const T down = f().item();
    values[i] = saved;
    const T numeric = (up - down) / (T(2) * eps);
    const T analytic = params[p].has_grad() ? params[p].grad()[i] : T(0);
    if (!std::isfinite(numeric) || !std::isfinite(analytic))
      throw NumericError("grad_check: non-finite derivative");
    const T denom =
        std::max({T(1), std::abs(analytic), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

}  // namespace lastmile::ad

#endif  // LASTMILE_AUTODIFF_HPP_
