#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "sigdfp/common.hpp"

namespace sigdfp {

struct QuadRule {
  std::vector<double> nodes;    // on (0, 1)
  std::vector<double> weights;  // sum to 1
};

// Gauss-Legendre rule mapped to [0, 1]; nodes via Newton iteration on P_n.
inline QuadRule gauss_legendre01(int n) {
  SIGDFP_REQUIRE(n >= 1, "gauss_legendre01: n >= 1");
  QuadRule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(3.14159265358979323846 * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / pp;
      x -= dx;
      if (std::fabs(dx) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * pp * pp);
    r.nodes[i] = 0.5 * (1.0 - x);  // descending x -> ascending node
    r.nodes[n - 1 - i] = 0.5 * (1.0 + x);
    r.weights[i] = 0.5 * w;
    r.weights[n - 1 - i] = 0.5 * w;
  }
  return r;
}

// Expectation of fn over independent U(lo_i, hi_i) components by a product
// Gauss-Legendre rule. fn receives the point as a span.
template <class Fn>
double expect_uniform(std::span<const double> lo, std::span<const double> hi,
                      int order, Fn&& fn) {
  const int dims = static_cast<int>(lo.size());
  const QuadRule rule = gauss_legendre01(order);
  std::vector<int> idx(dims, 0);
  std::vector<double> x(dims);
  double acc = 0.0;
  while (true) {
    double w = 1.0;
    for (int d = 0; d < dims; ++d) {
      x[d] = lo[d] + (hi[d] - lo[d]) * rule.nodes[idx[d]];
      w *= rule.weights[idx[d]];
    }
    acc += w * fn(std::span<const double>(x));
    int d = dims - 1;
    for (; d >= 0; --d) {
      if (++idx[d] < order) break;
      idx[d] = 0;
    }
    if (d < 0) break;
  }
  return acc;
}

// Multi-output variant: fn(point, out) accumulates several expectations in
// one sweep over the product grid.
template <class Fn>
void expect_uniform_multi(std::span<const double> lo, std::span<const double> hi,
                          int order, std::span<double> out, Fn&& fn) {
  const int dims = static_cast<int>(lo.size());
  const QuadRule rule = gauss_legendre01(order);
  std::vector<int> idx(dims, 0);
  std::vector<double> x(dims);
  std::vector<double> vals(out.size());
  for (auto& o : out) o = 0.0;
  while (true) {
    double w = 1.0;
    for (int d = 0; d < dims; ++d) {
      x[d] = lo[d] + (hi[d] - lo[d]) * rule.nodes[idx[d]];
      w *= rule.weights[idx[d]];
    }
    fn(std::span<const double>(x), std::span<double>(vals));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * vals[i];
    int d = dims - 1;
    for (; d >= 0; --d) {
      if (++idx[d] < order) break;
      idx[d] = 0;
    }
    if (d < 0) break;
  }
}

// composite trapezoid of samples y_0..y_n on a uniform grid with spacing dt
inline double trapezoid(std::span<const double> y, double dt) {
  if (y.size() < 2) return 0.0;
  double s = 0.5 * (y.front() + y.back());
  for (std::size_t i = 1; i + 1 < y.size(); ++i) s += y[i];
  return s * dt;
}

// running trapezoid integral: out[k] = integral of y over [0, t_k]
inline std::vector<double> cumulative_trapezoid(std::span<const double> y, double dt) {
  std::vector<double> out(y.size(), 0.0);
  for (std::size_t i = 1; i < y.size(); ++i)
    out[i] = out[i - 1] + 0.5 * dt * (y[i - 1] + y[i]);
  return out;
}

}  // namespace sigdfp
