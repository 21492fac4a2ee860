#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sigdfp/common.hpp"

namespace sigdfp {

// Truncated tensor algebra T^M(R^d). Coefficients are stored flat, graded by
// word length with lexicographic order inside each level; letter 0 is the
// time coordinate of an augmented path. Level k occupies d^k slots starting
// at basis_size(d, k-1).

inline std::size_t basis_size(int dim, int depth) {
  SIGDFP_REQUIRE(dim >= 1 && depth >= 0, "basis_size: need dim >= 1, depth >= 0");
  std::uint64_t p = 1, level = 1;
  for (int k = 1; k <= depth; ++k) {
    level *= static_cast<std::uint64_t>(dim);
    p += level;
    if (p > (1ULL << 31))
      throw config_error("basis_size overflow: dim=" + std::to_string(dim) +
                         " depth=" + std::to_string(depth));
  }
  return static_cast<std::size_t>(p);
}

inline std::size_t level_offset(int dim, int level) {
  return level == 0 ? 0 : basis_size(dim, level - 1);
}

inline std::size_t level_size(int dim, int level) {
  std::size_t s = 1;
  for (int k = 0; k < level; ++k) s *= static_cast<std::size_t>(dim);
  return s;
}

struct TruncatedTensor {
  int dim = 1;
  int depth = 0;
  std::vector<double> coeffs;

  TruncatedTensor() = default;
  TruncatedTensor(int d, int m) : dim(d), depth(m), coeffs(basis_size(d, m), 0.0) {}

  double& scalar() { return coeffs[0]; }
  double scalar() const { return coeffs[0]; }
  double* level(int k) { return coeffs.data() + level_offset(dim, k); }
  const double* level(int k) const { return coeffs.data() + level_offset(dim, k); }
};

// unit of the algebra: (1, 0, ..., 0)
inline TruncatedTensor identity_tensor(int dim, int depth) {
  TruncatedTensor t(dim, depth);
  t.coeffs[0] = 1.0;
  return t;
}

// Chen (concatenation) product, truncated at the common depth:
// level k of a*b = sum_{i+j=k} a_i (x) b_j.
inline TruncatedTensor tensor_mul(const TruncatedTensor& a, const TruncatedTensor& b) {
  SIGDFP_REQUIRE(a.dim == b.dim && a.depth == b.depth,
                 "tensor_mul: dimension/depth mismatch");
  const int d = a.dim, m = a.depth;
  TruncatedTensor out(d, m);
  for (int k = 0; k <= m; ++k) {
    const std::size_t nk = level_size(d, k);
    double* dst = out.level(k);
    for (int i = 0; i <= k; ++i) {
      const int j = k - i;
      const double* ai = a.level(i);
      const double* bj = b.level(j);
      const std::size_t ni = level_size(d, i);
      const std::size_t nj = level_size(d, j);
      std::size_t idx = 0;
      for (std::size_t u = 0; u < ni; ++u)
        for (std::size_t v = 0; v < nj; ++v) dst[idx++] += ai[u] * bj[v];
      (void)nk;
    }
  }
  return out;
}

// Signature of the straight segment with the given displacement:
// level k = increment^{(x)k} / k!.
inline TruncatedTensor segment_exp(std::span<const double> increment, int depth) {
  const int d = static_cast<int>(increment.size());
  SIGDFP_REQUIRE(d >= 1, "segment_exp: empty increment");
  TruncatedTensor out(d, depth);
  out.coeffs[0] = 1.0;
  for (int k = 1; k <= depth; ++k) {
    const double* prev = out.level(k - 1);
    double* cur = out.level(k);
    const std::size_t np = level_size(d, k - 1);
    const double inv_k = 1.0 / k;
    std::size_t idx = 0;
    for (std::size_t u = 0; u < np; ++u) {
      const double pu = prev[u] * inv_k;
      for (int v = 0; v < d; ++v) cur[idx++] = pu * increment[v];
    }
  }
  return out;
}

// In-place Chen product with a segment signature: t <- t (x) seg. Levels are
// updated top-down so lower levels are still the old values when read.
// Requires seg.scalar() == 1 (true for any segment_exp output).
inline void chen_append(TruncatedTensor& t, const TruncatedTensor& seg) {
  SIGDFP_REQUIRE(t.dim == seg.dim && t.depth == seg.depth,
                 "chen_append: dimension/depth mismatch");
  const int d = t.dim, m = t.depth;
  for (int k = m; k >= 1; --k) {
    double* dst = t.level(k);
    for (int i = 0; i < k; ++i) {
      const int j = k - i;
      const double* ti = t.level(i);
      const double* sj = seg.level(j);
      const std::size_t ni = level_size(d, i);
      const std::size_t nj = level_size(d, j);
      std::size_t idx = 0;
      for (std::size_t u = 0; u < ni; ++u) {
        const double tu = ti[u];
        for (std::size_t v = 0; v < nj; ++v) dst[idx++] += tu * sj[v];
      }
    }
  }
}

// Letters of the basis word at (level, index), most significant letter first.
inline std::vector<int> word_letters(int dim, int level, std::size_t index) {
  std::vector<int> w(level);
  for (int i = level - 1; i >= 0; --i) {
    w[i] = static_cast<int>(index % dim);
    index /= dim;
  }
  return w;
}

// "e" for the empty word, otherwise dot-separated letters, e.g. "0.1.1".
inline std::string word_string(int dim, int level, std::size_t index) {
  if (level == 0) return "e";
  std::string s;
  for (int l : word_letters(dim, level, index)) {
    if (!s.empty()) s += '.';
    s += std::to_string(l);
  }
  return s;
}

}  // namespace sigdfp
