#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <vector>

#include "sigdfp/common.hpp"

namespace sigdfp {

// Dense row-major kernels sized for the control networks (widths <= 64) and
// the signature regressions. The rollout spends nearly all of its time here,
// so the micro-tiles use explicit 8-wide vectors (GCC/Clang vector
// extensions); summation order is fixed by construction.

namespace detail {

typedef double v8d __attribute__((vector_size(64)));
typedef double v8d_u __attribute__((vector_size(64), aligned(8), may_alias));

inline v8d v8_load(const double* p) { return *reinterpret_cast<const v8d_u*>(p); }
inline void v8_store(double* p, v8d v) { *reinterpret_cast<v8d_u*>(p) = v; }
inline v8d v8_broadcast(double x) { return v8d{x, x, x, x, x, x, x, x}; }

// 2 rows x 16 outputs micro-tile of h = x * w (+ bias or accumulate).
template <bool Accumulate>
inline void mm_tile2x16(int in_dim, const double* x0, const double* x1,
                        const double* w, int out_dim, const double* bias,
                        double* h0, double* h1) {
  v8d a00, a01, a10, a11;
  if (Accumulate) {
    a00 = v8_load(h0);
    a01 = v8_load(h0 + 8);
    a10 = v8_load(h1);
    a11 = v8_load(h1 + 8);
  } else if (bias) {
    a00 = a10 = v8_load(bias);
    a01 = a11 = v8_load(bias + 8);
  } else {
    a00 = a01 = a10 = a11 = v8_broadcast(0.0);
  }
  for (int i = 0; i < in_dim; ++i) {
    const v8d b0 = v8_broadcast(x0[i]);
    const v8d b1 = v8_broadcast(x1[i]);
    const double* wi = w + static_cast<std::size_t>(i) * out_dim;
    const v8d w0 = v8_load(wi);
    const v8d w1 = v8_load(wi + 8);
    a00 += b0 * w0;
    a01 += b0 * w1;
    a10 += b1 * w0;
    a11 += b1 * w1;
  }
  v8_store(h0, a00);
  v8_store(h0 + 8, a01);
  v8_store(h1, a10);
  v8_store(h1 + 8, a11);
}

template <bool Accumulate>
inline void mm_tile1x8(int in_dim, const double* x, const double* w, int out_dim,
                       const double* bias, double* h) {
  v8d acc = Accumulate ? v8_load(h) : (bias ? v8_load(bias) : v8_broadcast(0.0));
  for (int i = 0; i < in_dim; ++i)
    acc += v8_broadcast(x[i]) * v8_load(w + static_cast<std::size_t>(i) * out_dim);
  v8_store(h, acc);
}

template <bool Accumulate>
inline void mm_scalar(int in_dim, const double* x, const double* w, int out_dim,
                      const double* bias, double* h, int jb, int je) {
  for (int j = jb; j < je; ++j) {
    double acc = Accumulate ? h[j] : (bias ? bias[j] : 0.0);
    for (int i = 0; i < in_dim; ++i)
      acc += x[i] * w[static_cast<std::size_t>(i) * out_dim + j];
    h[j] = acc;
  }
}

}  // namespace detail

// h[rows x out] = x[rows x in] * w[in x out] + bias (bias may be null).
// If Accumulate, adds into h instead.
template <bool Accumulate = false>
inline void matmul(int rows, int in_dim, int out_dim, const double* x,
                   const double* w, const double* bias, double* h) {
  const int out16 = out_dim & ~15;
  const int out8 = out_dim & ~7;
  auto tail = [&](const double* xr, double* hr) {
    for (int j = out16; j < out8; j += 8)
      detail::mm_tile1x8<Accumulate>(in_dim, xr, w + j, out_dim,
                                     bias ? bias + j : nullptr, hr + j);
    if (out8 < out_dim)
      detail::mm_scalar<Accumulate>(in_dim, xr, w, out_dim, bias, hr, out8, out_dim);
  };
  int r = 0;
  for (; r + 2 <= rows; r += 2) {
    const double* x0 = x + static_cast<std::size_t>(r) * in_dim;
    const double* x1 = x0 + in_dim;
    double* h0 = h + static_cast<std::size_t>(r) * out_dim;
    double* h1 = h0 + out_dim;
    for (int j = 0; j < out16; j += 16)
      detail::mm_tile2x16<Accumulate>(in_dim, x0, x1, w + j, out_dim,
                                      bias ? bias + j : nullptr, h0 + j, h1 + j);
    tail(x0, h0);
    tail(x1, h1);
  }
  for (; r < rows; ++r) {
    const double* xr = x + static_cast<std::size_t>(r) * in_dim;
    double* hr = h + static_cast<std::size_t>(r) * out_dim;
    for (int j = 0; j < out16; j += 16) {
      detail::mm_tile1x8<Accumulate>(in_dim, xr, w + j, out_dim,
                                     bias ? bias + j : nullptr, hr + j);
      detail::mm_tile1x8<Accumulate>(in_dim, xr, w + j + 8, out_dim,
                                     bias ? bias + j + 8 : nullptr, hr + j + 8);
    }
    tail(xr, hr);
  }
}

// dw[in x out] += sum_r x[r][i] * dh[r][o]
inline void acc_weight_grad(int rows, int in_dim, int out_dim, const double* x,
                            const double* dh, double* dw) {
  using detail::v8_broadcast;
  using detail::v8_load;
  using detail::v8_store;
  const int out8 = out_dim & ~7;
  for (int r = 0; r < rows; ++r) {
    const double* xr = x + static_cast<std::size_t>(r) * in_dim;
    const double* dhr = dh + static_cast<std::size_t>(r) * out_dim;
    for (int i = 0; i < in_dim; ++i) {
      const double xi = xr[i];
      double* dwi = dw + static_cast<std::size_t>(i) * out_dim;
      const detail::v8d b = v8_broadcast(xi);
      for (int j = 0; j < out8; j += 8)
        v8_store(dwi + j, v8_load(dwi + j) + b * v8_load(dhr + j));
      for (int j = out8; j < out_dim; ++j) dwi[j] += xi * dhr[j];
    }
  }
}

// db[out] += sum_r dh[r][o]
inline void acc_bias_grad(int rows, int out_dim, const double* dh, double* db) {
  for (int r = 0; r < rows; ++r) {
    const double* dhr = dh + static_cast<std::size_t>(r) * out_dim;
    for (int j = 0; j < out_dim; ++j) db[j] += dhr[j];
  }
}

// Cholesky factorization/solve of an SPD matrix, a is n x n row-major and is
// overwritten. rhs holds q right-hand sides (n x q). Returns false if the
// matrix is not numerically positive definite: any pivot below rel_tol times
// the largest diagonal entry counts as rank deficiency.
inline bool cholesky_solve(int n, std::vector<double>& a, double* rhs, int q,
                           double rel_tol = 1e-13) {
  double max_diag = 0.0;
  for (int j = 0; j < n; ++j)
    max_diag = std::max(max_diag, std::fabs(a[static_cast<std::size_t>(j) * n + j]));
  const double floor = rel_tol * max_diag;
  for (int j = 0; j < n; ++j) {
    double d = a[static_cast<std::size_t>(j) * n + j];
    for (int k = 0; k < j; ++k) {
      const double l = a[static_cast<std::size_t>(j) * n + k];
      d -= l * l;
    }
    if (!(d > floor)) return false;
    const double dj = std::sqrt(d);
    a[static_cast<std::size_t>(j) * n + j] = dj;
    for (int i = j + 1; i < n; ++i) {
      double s = a[static_cast<std::size_t>(i) * n + j];
      for (int k = 0; k < j; ++k)
        s -= a[static_cast<std::size_t>(i) * n + k] * a[static_cast<std::size_t>(j) * n + k];
      a[static_cast<std::size_t>(i) * n + j] = s / dj;
    }
  }
  // L y = rhs, L^T x = y, per column
  for (int c = 0; c < q; ++c) {
    for (int i = 0; i < n; ++i) {
      double s = rhs[static_cast<std::size_t>(i) * q + c];
      for (int k = 0; k < i; ++k)
        s -= a[static_cast<std::size_t>(i) * n + k] * rhs[static_cast<std::size_t>(k) * q + c];
      rhs[static_cast<std::size_t>(i) * q + c] = s / a[static_cast<std::size_t>(i) * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
      double s = rhs[static_cast<std::size_t>(i) * q + c];
      for (int k = i + 1; k < n; ++k)
        s -= a[static_cast<std::size_t>(k) * n + i] * rhs[static_cast<std::size_t>(k) * q + c];
      rhs[static_cast<std::size_t>(i) * q + c] = s / a[static_cast<std::size_t>(i) * n + i];
    }
  }
  return true;
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Used only as the
// minimum-norm fallback when the normal matrix is rank deficient, so clarity
// beats speed here.
inline void jacobi_eigh(int n, std::vector<double> a, std::vector<double>& evals,
                        std::vector<double>& evecs) {
  evecs.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) evecs[static_cast<std::size_t>(i) * n + i] = 1.0;
  auto at = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i) * n + j]; };
  auto vt = [&](int i, int j) -> double& { return evecs[static_cast<std::size_t>(i) * n + j]; };
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
    if (off < 1e-28) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int qi = p + 1; qi < n; ++qi) {
        const double apq = at(p, qi);
        if (apq == 0.0) continue;
        const double theta = (at(qi, qi) - at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = at(k, p), akq = at(k, qi);
          at(k, p) = c * akp - s * akq;
          at(k, qi) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = at(p, k), aqk = at(qi, k);
          at(p, k) = c * apk - s * aqk;
          at(qi, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = vt(k, p), vkq = vt(k, qi);
          vt(k, p) = c * vkp - s * vkq;
          vt(k, qi) = s * vkp + c * vkq;
        }
      }
    }
  }
  evals.resize(n);
  for (int i = 0; i < n; ++i) evals[i] = at(i, i);
}

}  // namespace sigdfp
