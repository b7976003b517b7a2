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

#ifndef LASTMILE_KERNELS_HPP_
#define LASTMILE_KERNELS_HPP_

// Raw row-major loops shared by the taped primitives and the incremental
// decoder. Both paths must call these so that a cached decode step produces
// exactly the bits the full forward pass does.

#include <cmath>
#include <cstddef>
#include <cstring>
#include <limits>
#include <numbers>

namespace lastmile::kernels {

// out[m,n] += a[m,k] * b[k,n]
template <class T>
void matmul_acc(const T* a, const T* b, T* out, std::size_t m, std::size_t k,
                std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* out_row = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      const T* b_row = b + p * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += aip * b_row[j];
    }
  }
}

// out[m,k] += g[m,n] * b[k,n]^T
template <class T>
void matmul_nt_acc(const T* g, const T* b, T* out, std::size_t m,
                   std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* g_row = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* b_row = b + p * n;
      T s = 0;
      for (std::size_t j = 0; j < n; ++j) s += g_row[j] * b_row[j];
      out[i * k + p] += s;
    }
  }
}

// out[k,n] += a[m,k]^T * g[m,n]
template <class T>
void matmul_tn_acc(const T* a, const T* g, T* out, std::size_t m,
                   std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* g_row = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      T* out_row = out + p * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += aip * g_row[j];
    }
  }
}

// Register-tiled double versions of the three products. Every output element
// is still summed in the same order as the generic loops above, so results
// are bit-identical; only the traversal changes.
namespace tile {
typedef double v4 __attribute__((vector_size(32)));
inline v4 ld(const double* p) { v4 v; std::memcpy(&v, p, sizeof v); return v; }
inline void st(double* p, v4 v) { std::memcpy(p, &v, sizeof v); }
inline v4 bc(double x) { return v4{x, x, x, x}; }
}  // namespace tile

inline void matmul_acc(const double* a, const double* b, double* out,
                       std::size_t m, std::size_t k, std::size_t n) {
  using namespace tile;
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      v4 c00 = ld(out + i * n + j), c01 = ld(out + i * n + j + 4);
      v4 c10 = ld(out + (i + 1) * n + j), c11 = ld(out + (i + 1) * n + j + 4);
      v4 c20 = ld(out + (i + 2) * n + j), c21 = ld(out + (i + 2) * n + j + 4);
      v4 c30 = ld(out + (i + 3) * n + j), c31 = ld(out + (i + 3) * n + j + 4);
      for (std::size_t p = 0; p < k; ++p) {
        const v4 b0 = ld(b + p * n + j), b1 = ld(b + p * n + j + 4);
        v4 x = bc(a[i * k + p]); c00 += x * b0; c01 += x * b1;
        x = bc(a[(i + 1) * k + p]); c10 += x * b0; c11 += x * b1;
        x = bc(a[(i + 2) * k + p]); c20 += x * b0; c21 += x * b1;
        x = bc(a[(i + 3) * k + p]); c30 += x * b0; c31 += x * b1;
      }
      st(out + i * n + j, c00); st(out + i * n + j + 4, c01);
      st(out + (i + 1) * n + j, c10); st(out + (i + 1) * n + j + 4, c11);
      st(out + (i + 2) * n + j, c20); st(out + (i + 2) * n + j + 4, c21);
      st(out + (i + 3) * n + j, c30); st(out + (i + 3) * n + j + 4, c31);
    }
    for (std::size_t r = i; r < i + 4; ++r)
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[r * k + p];
        for (std::size_t jj = j; jj < n; ++jj) out[r * n + jj] += av * b[p * n + jj];
      }
  }
  for (; i < m; ++i) {
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      v4 c0 = ld(out + i * n + j), c1 = ld(out + i * n + j + 4);
      for (std::size_t p = 0; p < k; ++p) {
        const v4 x = bc(a[i * k + p]);
        c0 += x * ld(b + p * n + j); c1 += x * ld(b + p * n + j + 4);
      }
      st(out + i * n + j, c0); st(out + i * n + j + 4, c1);
    }
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      for (std::size_t jj = j; jj < n; ++jj) out[i * n + jj] += av * b[p * n + jj];
    }
  }
}
// Lanes hold separate outputs, so each dot product still runs over j in order
// and starts from zero.
inline void matmul_nt_acc(const double* g, const double* b, double* out,
                          std::size_t m, std::size_t n, std::size_t k) {
  using namespace tile;
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      v4 s0 = bc(0), s1 = bc(0), s2 = bc(0), s3 = bc(0);
      for (std::size_t j = 0; j < n; ++j) {
        const v4 bv = v4{b[p * n + j], b[(p + 1) * n + j], b[(p + 2) * n + j], b[(p + 3) * n + j]};
        s0 += bc(g[i * n + j]) * bv; s1 += bc(g[(i + 1) * n + j]) * bv;
        s2 += bc(g[(i + 2) * n + j]) * bv; s3 += bc(g[(i + 3) * n + j]) * bv;
      }
      st(out + i * k + p, ld(out + i * k + p) + s0);
      st(out + (i + 1) * k + p, ld(out + (i + 1) * k + p) + s1);
      st(out + (i + 2) * k + p, ld(out + (i + 2) * k + p) + s2);
      st(out + (i + 3) * k + p, ld(out + (i + 3) * k + p) + s3);
    }
    for (; i < m; ++i) {
      v4 s = bc(0);
      for (std::size_t j = 0; j < n; ++j)
        s += bc(g[i * n + j]) *
             v4{b[p * n + j], b[(p + 1) * n + j], b[(p + 2) * n + j], b[(p + 3) * n + j]};
      st(out + i * k + p, ld(out + i * k + p) + s);
    }
  }
  for (; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * b[p * n + j];
      out[i * k + p] += s;
    }
}
inline void matmul_tn_acc(const double* a, const double* g, double* out,
                          std::size_t m, std::size_t k, std::size_t n) {
  using namespace tile;
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      v4 c00 = ld(out + p * n + j), c01 = ld(out + p * n + j + 4);
      v4 c10 = ld(out + (p + 1) * n + j), c11 = ld(out + (p + 1) * n + j + 4);
      v4 c20 = ld(out + (p + 2) * n + j), c21 = ld(out + (p + 2) * n + j + 4);
      v4 c30 = ld(out + (p + 3) * n + j), c31 = ld(out + (p + 3) * n + j + 4);
      for (std::size_t i = 0; i < m; ++i) {
        const v4 g0 = ld(g + i * n + j), g1 = ld(g + i * n + j + 4);
        v4 x = bc(a[i * k + p]); c00 += x * g0; c01 += x * g1;
        x = bc(a[i * k + p + 1]); c10 += x * g0; c11 += x * g1;
        x = bc(a[i * k + p + 2]); c20 += x * g0; c21 += x * g1;
        x = bc(a[i * k + p + 3]); c30 += x * g0; c31 += x * g1;
      }
      st(out + p * n + j, c00); st(out + p * n + j + 4, c01);
      st(out + (p + 1) * n + j, c10); st(out + (p + 1) * n + j + 4, c11);
      st(out + (p + 2) * n + j, c20); st(out + (p + 2) * n + j + 4, c21);
      st(out + (p + 3) * n + j, c30); st(out + (p + 3) * n + j + 4, c31);
    }
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t r = p; r < p + 4; ++r) {
        const double av = a[i * k + r];
        for (std::size_t jj = j; jj < n; ++jj) out[r * n + jj] += av * g[i * n + jj];
      }
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t r = p; r < k; ++r) {
      const double av = a[i * k + r];
      for (std::size_t jj = 0; jj < n; ++jj) out[r * n + jj] += av * g[i * n + jj];
    }
}

// out[m,n] = x[m,k] * w[k,n] + bias[n]
template <class T>
void linear(const T* x, const T* w, const T* bias, T* out, std::size_t m,
            std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = T(0);
  matmul_acc(x, w, out, m, k, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias[j];
}

template <class T>
void softmax_row(const T* x, T* y, std::size_t n) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = x[j] > mx ? x[j] : mx;
  T sum = 0;
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = std::exp(x[j] - mx);
    sum += y[j];
  }
  for (std::size_t j = 0; j < n; ++j) y[j] /= sum;
}

template <class T>
void log_softmax_row(const T* x, T* y, std::size_t n) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = x[j] > mx ? x[j] : mx;
  T sum = 0;
  for (std::size_t j = 0; j < n; ++j) sum += std::exp(x[j] - mx);
  const T lse = mx + std::log(sum);
  for (std::size_t j = 0; j < n; ++j) y[j] = x[j] - lse;
}

// Normalizes one row; writes the inverse standard deviation to *rstd.
template <class T>
void layer_norm_row(const T* x, const T* gamma, const T* beta, T* y,
                    std::size_t n, T eps, T* rstd) {
  T mean = 0;
  for (std::size_t j = 0; j < n; ++j) mean += x[j];
  mean /= static_cast<T>(n);
  T var = 0;
  for (std::size_t j = 0; j < n; ++j) var += (x[j] - mean) * (x[j] - mean);
  var /= static_cast<T>(n);
  const T r = T(1) / std::sqrt(var + eps);
  for (std::size_t j = 0; j < n; ++j)
    y[j] = (x[j] - mean) * r * gamma[j] + beta[j];
  if (rstd != nullptr) *rstd = r;
}

template <class T>
constexpr T kGeluCoeff = T(0.044715);

// tanh approximation
template <class T>
T gelu(T x) {
  const T c = std::sqrt(T(2) / std::numbers::pi_v<T>);
  const T t = std::tanh(c * (x + kGeluCoeff<T> * x * x * x));
  return T(0.5) * x * (T(1) + t);
}

template <class T>
T gelu_grad(T x) {
  const T c = std::sqrt(T(2) / std::numbers::pi_v<T>);
  const T t = std::tanh(c * (x + kGeluCoeff<T> * x * x * x));
  return T(0.5) * (T(1) + t) +
         T(0.5) * x * (T(1) - t * t) * c * (T(1) + T(3) * kGeluCoeff<T> * x * x);
}

}  // namespace lastmile::kernels

#endif  // LASTMILE_KERNELS_HPP_
