#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "sigdfp/common.hpp"
#include "sigdfp/rng.hpp"
#include "sigdfp/threading.hpp"

namespace sigdfp {

// Sampled idiosyncratic and common Brownian increments on a uniform grid.
// With antithetic pairing the second half of the paths are the elementwise
// negations of the first half, so all increments sum to exactly zero.
struct BrownianBatch {
  std::size_t n_paths = 0;
  std::size_t n_steps = 0;  // L
  int n = 1;                // idiosyncratic dimension
  int n0 = 1;               // common dimension
  double horizon = 1.0;
  std::uint64_t seed = 0;
  bool antithetic = true;
  std::vector<double> grid;  // L+1 stamps on [0, T]
  std::vector<double> dW;    // n_paths x L x n
  std::vector<double> dB;    // n_paths x L x n0

  double dt() const { return horizon / static_cast<double>(n_steps); }
  const double* dw_row(std::size_t i) const { return dW.data() + i * n_steps * n; }
  const double* db_row(std::size_t i) const { return dB.data() + i * n_steps * n0; }
};

inline BrownianBatch sample_brownian(std::size_t n_paths, std::size_t n_steps,
                                     double horizon, int n, int n0,
                                     std::uint64_t seed, bool antithetic = true) {
  if (antithetic && n_paths % 2 != 0)
    throw config_error("sample_brownian: antithetic pairing needs an even path count");
  SIGDFP_REQUIRE(n_steps >= 1 && n >= 1 && n0 >= 1 && horizon > 0.0,
                 "sample_brownian: bad shape");
  BrownianBatch b;
  b.n_paths = n_paths;
  b.n_steps = n_steps;
  b.n = n;
  b.n0 = n0;
  b.horizon = horizon;
  b.seed = seed;
  b.antithetic = antithetic;
  b.grid.resize(n_steps + 1);
  for (std::size_t k = 0; k <= n_steps; ++k)
    b.grid[k] = horizon * static_cast<double>(k) / static_cast<double>(n_steps);
  b.dW.resize(n_paths * n_steps * n);
  b.dB.resize(n_paths * n_steps * n0);

  const std::size_t fresh = antithetic ? n_paths / 2 : n_paths;
  const double sd = std::sqrt(b.dt());
  parallel_chunks(fresh, [&](std::size_t c) {
    const auto [lo, hi] = chunk_range(fresh, c);
    for (std::size_t i = lo; i < hi; ++i) {
      Rng rng(derive_seed(seed, "brownian", i));
      double* wi = b.dW.data() + i * n_steps * n;
      for (std::size_t t = 0; t < n_steps * static_cast<std::size_t>(n); ++t)
        wi[t] = sd * rng.normal();
      double* bi = b.dB.data() + i * n_steps * n0;
      for (std::size_t t = 0; t < n_steps * static_cast<std::size_t>(n0); ++t)
        bi[t] = sd * rng.normal();
    }
  });
  if (antithetic) {
    parallel_chunks(fresh, [&](std::size_t c) {
      const auto [lo, hi] = chunk_range(fresh, c);
      for (std::size_t i = lo; i < hi; ++i) {
        const double* wi = b.dW.data() + i * n_steps * n;
        double* wj = b.dW.data() + (i + fresh) * n_steps * n;
        for (std::size_t t = 0; t < n_steps * static_cast<std::size_t>(n); ++t)
          wj[t] = -wi[t];
        const double* bi = b.dB.data() + i * n_steps * n0;
        double* bj = b.dB.data() + (i + fresh) * n_steps * n0;
        for (std::size_t t = 0; t < n_steps * static_cast<std::size_t>(n0); ++t)
          bj[t] = -bi[t];
      }
    });
  }
  return b;
}

// Cumulative common-noise path values B_{t_k}, n_paths x (L+1) x n0.
inline std::vector<double> cumulative_common(const BrownianBatch& b) {
  const std::size_t L = b.n_steps;
  std::vector<double> out(b.n_paths * (L + 1) * b.n0, 0.0);
  parallel_chunks(b.n_paths, [&](std::size_t c) {
    const auto [lo, hi] = chunk_range(b.n_paths, c);
    for (std::size_t i = lo; i < hi; ++i) {
      double* oi = out.data() + i * (L + 1) * b.n0;
      const double* di = b.db_row(i);
      for (std::size_t k = 0; k < L; ++k)
        for (int j = 0; j < b.n0; ++j)
          oi[(k + 1) * b.n0 + j] = oi[k * b.n0 + j] + di[k * b.n0 + j];
    }
  });
  return out;
}

// Cumulative idiosyncratic path values W_{t_k}, n_paths x (L+1) x n.
inline std::vector<double> cumulative_idiosyncratic(const BrownianBatch& b) {
  const std::size_t L = b.n_steps;
  std::vector<double> out(b.n_paths * (L + 1) * b.n, 0.0);
  parallel_chunks(b.n_paths, [&](std::size_t c) {
    const auto [lo, hi] = chunk_range(b.n_paths, c);
    for (std::size_t i = lo; i < hi; ++i) {
      double* oi = out.data() + i * (L + 1) * b.n;
      const double* di = b.dw_row(i);
      for (std::size_t k = 0; k < L; ++k)
        for (int j = 0; j < b.n; ++j)
          oi[(k + 1) * b.n + j] = oi[k * b.n + j] + di[k * b.n + j];
    }
  });
  return out;
}

}  // namespace sigdfp
