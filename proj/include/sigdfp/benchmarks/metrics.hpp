#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "sigdfp/common.hpp"

namespace sigdfp {

// Relative L^2 path metric
//   L2_R(x, xhat) = sqrt( E[int ||x - xhat||^2 dt] / E[int ||x||^2 dt] ),
// Monte Carlo over paths, trapezoid over the (uniform) grid. reference and
// estimate are n_paths x n_cols with column spacing dt.
inline double relative_l2(std::span<const double> reference, std::span<const double> estimate,
                          std::size_t n_paths, std::size_t n_cols, double dt) {
  SIGDFP_REQUIRE(reference.size() == estimate.size(), "relative_l2: shape mismatch");
  SIGDFP_REQUIRE(reference.size() == n_paths * n_cols, "relative_l2: size mismatch");
  SIGDFP_REQUIRE(n_cols >= 2, "relative_l2: need at least two grid points");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n_paths; ++i) {
    const double* x = reference.data() + i * n_cols;
    const double* y = estimate.data() + i * n_cols;
    for (std::size_t k = 0; k < n_cols; ++k) {
      const double w = (k == 0 || k + 1 == n_cols) ? 0.5 : 1.0;
      const double d = x[k] - y[k];
      num += w * d * d;
      den += w * x[k] * x[k];
    }
  }
  num *= dt;
  den *= dt;
  if (!(den > 0.0)) throw config_error("relative_l2: reference is identically zero");
  return std::sqrt(num / den);
}

// Monte Carlo standard error of the mean of per-path values. With antithetic
// pairing (path i and i + n/2 share flipped noise) the pair means are the
// independent samples.
inline double mc_standard_error(std::span<const double> values, bool antithetic) {
  const std::size_t n = values.size();
  SIGDFP_REQUIRE(n >= 2, "mc_standard_error: need at least two samples");
  std::vector<double> samples;
  if (antithetic && n % 2 == 0) {
    const std::size_t half = n / 2;
    samples.resize(half);
    for (std::size_t i = 0; i < half; ++i)
      samples[i] = 0.5 * (values[i] + values[i + half]);
  } else {
    samples.assign(values.begin(), values.end());
  }
  const std::size_t ns = samples.size();
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(ns);
  double var = 0.0;
  for (double v : samples) var += (v - mean) * (v - mean);
  var /= static_cast<double>(ns - 1);
  return std::sqrt(var / static_cast<double>(ns));
}

inline double mean_of(std::span<const double> values) {
  double m = 0.0;
  for (double v : values) m += v;
  return values.empty() ? 0.0 : m / static_cast<double>(values.size());
}

}  // namespace sigdfp
