#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

namespace sigdfp {

// exp/tanh are the scalar bottleneck of the rollout (every hidden unit of
// every Euler step goes through tanh, and the consumption game exponentiates
// states and controls). The array forms below are written directly against
// 8-wide vectors; accuracy is a few ulp, verified in tests against libm.

namespace fm {

typedef double v8d __attribute__((vector_size(64)));
typedef std::int64_t v8i __attribute__((vector_size(64)));
typedef double v8d_u __attribute__((vector_size(64), aligned(8), may_alias));

inline v8d bcast(double x) { return v8d{x, x, x, x, x, x, x, x}; }

constexpr double kLog2e = 1.4426950408889634074;
constexpr double kLn2Hi = 6.93147180369123816490e-01;
constexpr double kLn2Lo = 1.90821492927058770002e-10;
constexpr double kRoundMagic = 6755399441055744.0;  // 1.5 * 2^52

// shared by the scalar and vector paths; T is double or v8d
template <class T, class I>
inline T exp_core(T x) {
  x = x < T{} + (-708.0) ? T{} + (-708.0) : x;
  x = x > T{} + 709.0 ? T{} + 709.0 : x;
  const T t = x * kLog2e + kRoundMagic;
  const I ki = std::bit_cast<I>(t) - std::bit_cast<I>(T{} + kRoundMagic);
  const T kd = t - kRoundMagic;
  const T r = (x - kd * kLn2Hi) - kd * kLn2Lo;
  T p = T{} + 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  const T two_k = std::bit_cast<T>((ki + 1023) << 52);
  return p * two_k;
}

template <class T, class I>
inline T tanh_core(T x) {
  const T ax0 = x < T{} ? -x : x;
  const T ax = ax0 > T{} + 20.0 ? T{} + 20.0 : ax0;
  const T e = exp_core<T, I>(ax + ax);
  const T t_big = (e - 1.0) / (e + 1.0);
  const T x2 = ax * ax;
  const T t_small =
      ax * (1.0 + x2 * (-1.0 / 3.0 + x2 * (2.0 / 15.0 + x2 * (-17.0 / 315.0))));
  const T t = ax0 < T{} + 0.0625 ? t_small : t_big;
  return x < T{} ? -t : t;
}

// scalar instantiation needs plain arithmetic selects; specialize
template <>
inline double exp_core<double, std::int64_t>(double x) {
  x = x < -708.0 ? -708.0 : (x > 709.0 ? 709.0 : x);
  const double t = x * kLog2e + kRoundMagic;
  const std::int64_t ki =
      std::bit_cast<std::int64_t>(t) - std::bit_cast<std::int64_t>(kRoundMagic);
  const double kd = t - kRoundMagic;
  const double r = (x - kd * kLn2Hi) - kd * kLn2Lo;
  double p = 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  return p * std::bit_cast<double>((ki + 1023) << 52);
}

template <>
inline double tanh_core<double, std::int64_t>(double x) {
  const double ax0 = std::fabs(x);
  const double ax = ax0 > 20.0 ? 20.0 : ax0;
  const double e = exp_core<double, std::int64_t>(2.0 * ax);
  const double t_big = (e - 1.0) / (e + 1.0);
  const double x2 = ax * ax;
  const double t_small =
      ax * (1.0 + x2 * (-1.0 / 3.0 + x2 * (2.0 / 15.0 + x2 * (-17.0 / 315.0))));
  const double t = ax0 < 0.0625 ? t_small : t_big;
  return std::copysign(t, x);
}

}  // namespace fm

inline double fast_exp(double x) { return fm::exp_core<double, std::int64_t>(x); }
inline double fast_tanh(double x) { return fm::tanh_core<double, std::int64_t>(x); }

inline void vexp(const double* x, double* out, std::size_t n) {
  const std::size_t main = n & ~std::size_t{7};
  for (std::size_t i = 0; i < main; i += 8) {
    const fm::v8d v = *reinterpret_cast<const fm::v8d_u*>(x + i);
    *reinterpret_cast<fm::v8d_u*>(out + i) = fm::exp_core<fm::v8d, fm::v8i>(v);
  }
  for (std::size_t i = main; i < n; ++i) out[i] = fast_exp(x[i]);
}

inline void vtanh(const double* x, double* out, std::size_t n) {
  const std::size_t main = n & ~std::size_t{7};
  for (std::size_t i = 0; i < main; i += 8) {
    const fm::v8d v = *reinterpret_cast<const fm::v8d_u*>(x + i);
    *reinterpret_cast<fm::v8d_u*>(out + i) = fm::tanh_core<fm::v8d, fm::v8i>(v);
  }
  for (std::size_t i = main; i < n; ++i) out[i] = fast_tanh(x[i]);
}

// in-place tanh over a buffer
inline void vtanh(double* x, std::size_t n) { vtanh(x, x, n); }

}  // namespace sigdfp
