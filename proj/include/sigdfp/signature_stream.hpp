#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <span>
#include <vector>

#include "sigdfp/common.hpp"
#include "sigdfp/tensor_algebra.hpp"
#include "sigdfp/threading.hpp"

namespace sigdfp {

// Prefix signatures S^M(B_hat_{0:t_k}) of the time-augmented common noise,
// materialized once per dataset for every path and grid time and shared
// read-only afterwards.
struct PrefixSignatures {
  std::size_t n_paths = 0;
  std::size_t n_steps = 0;  // L+1 grid times
  int dim = 0;              // n0 + 1 after time augmentation
  int depth = 0;
  std::size_t sig_dim = 0;  // p = basis_size(dim, depth)
  std::vector<double> data; // n_paths x n_steps x sig_dim

  const double* at(std::size_t path, std::size_t k) const {
    return data.data() + (path * n_steps + k) * sig_dim;
  }
  double* at(std::size_t path, std::size_t k) {
    return data.data() + (path * n_steps + k) * sig_dim;
  }
};

// Prepends the grid time as coordinate 0: row k = (t_k, path[k][0..n0)).
inline std::vector<double> time_augment(std::span<const double> path,
                                        std::span<const double> grid, int n0) {
  SIGDFP_REQUIRE(n0 >= 1, "time_augment: n0 >= 1");
  SIGDFP_REQUIRE(path.size() == grid.size() * static_cast<std::size_t>(n0),
                 "time_augment: path/grid size mismatch");
  for (std::size_t k = 0; k + 1 < grid.size(); ++k)
    if (!(grid[k + 1] > grid[k]))
      throw config_error("time_augment: grid must be strictly increasing");
  std::vector<double> out(grid.size() * (n0 + 1));
  for (std::size_t k = 0; k < grid.size(); ++k) {
    out[k * (n0 + 1)] = grid[k];
    for (int j = 0; j < n0; ++j) out[k * (n0 + 1) + 1 + j] = path[k * n0 + j];
  }
  return out;
}

// Signatures of the piecewise-linear interpolation: one segment exponential
// and one Chen product per step, so the whole table costs O(N L p).
// increments is n_paths x L x n0 (common-noise increments); the augmented
// segment at step k is (t_{k+1}-t_k, dB_k).
inline PrefixSignatures prefix_signatures(std::size_t n_paths, std::size_t n_increments,
                                          int n0, int depth,
                                          std::span<const double> grid,
                                          std::span<const double> increments) {
  SIGDFP_REQUIRE(depth >= 0, "prefix_signatures: depth >= 0");
  SIGDFP_REQUIRE(grid.size() == n_increments + 1, "prefix_signatures: grid size");
  SIGDFP_REQUIRE(increments.size() == n_paths * n_increments * static_cast<std::size_t>(n0),
                 "prefix_signatures: increments size");
  PrefixSignatures out;
  out.n_paths = n_paths;
  out.n_steps = n_increments + 1;
  out.dim = n0 + 1;
  out.depth = depth;
  out.sig_dim = basis_size(out.dim, depth);
  out.data.assign(n_paths * out.n_steps * out.sig_dim, 0.0);

  parallel_chunks(n_paths, [&](std::size_t c) {
    const auto [b, e] = chunk_range(n_paths, c);
    std::vector<double> seg(out.dim);
    for (std::size_t i = b; i < e; ++i) {
      TruncatedTensor sig = identity_tensor(out.dim, depth);
      std::memcpy(out.at(i, 0), sig.coeffs.data(), out.sig_dim * sizeof(double));
      for (std::size_t k = 0; k < n_increments; ++k) {
        seg[0] = grid[k + 1] - grid[k];
        for (int j = 0; j < n0; ++j)
          seg[1 + j] = increments[(i * n_increments + k) * n0 + j];
        chen_append(sig, segment_exp(seg, depth));
        std::memcpy(out.at(i, k + 1), sig.coeffs.data(), out.sig_dim * sizeof(double));
      }
    }
  });
  return out;
}

// ---- binary cache -----------------------------------------------------
// header: magic, version, shape key; payload: row-major doubles.

namespace detail {
constexpr char kSigCacheMagic[8] = {'S', 'I', 'G', 'P', 'F', 'X', '0', '\n'};
constexpr std::uint32_t kSigCacheVersion = 1;
}  // namespace detail

struct SigCacheKey {
  std::uint64_t seed;
  std::uint64_t n_paths;
  std::uint64_t n_increments;
  std::uint32_t n0;
  std::uint32_t depth;

  std::string filename() const {
    return "sig_" + std::to_string(seed) + "_" + std::to_string(n_paths) + "_" +
           std::to_string(n_increments) + "_" + std::to_string(n0) + "_" +
           std::to_string(depth) + ".bin";
  }
};

inline bool save_prefix_signatures(const std::filesystem::path& file,
                                   const SigCacheKey& key, const PrefixSignatures& sigs) {
  std::FILE* f = std::fopen(file.string().c_str(), "wb");
  if (!f) return false;
  bool ok = std::fwrite(detail::kSigCacheMagic, 1, 8, f) == 8;
  auto w = [&](const void* p, std::size_t n) { ok = ok && std::fwrite(p, 1, n, f) == n; };
  w(&detail::kSigCacheVersion, 4);
  w(&key.seed, 8);
  w(&key.n_paths, 8);
  w(&key.n_increments, 8);
  w(&key.n0, 4);
  w(&key.depth, 4);
  w(sigs.data.data(), sigs.data.size() * sizeof(double));
  std::fclose(f);
  return ok;
}

inline bool load_prefix_signatures(const std::filesystem::path& file,
                                   const SigCacheKey& key, PrefixSignatures& sigs) {
  std::FILE* f = std::fopen(file.string().c_str(), "rb");
  if (!f) return false;
  char magic[8];
  std::uint32_t version = 0;
  SigCacheKey got{};
  bool ok = std::fread(magic, 1, 8, f) == 8 &&
            std::memcmp(magic, detail::kSigCacheMagic, 8) == 0;
  auto r = [&](void* p, std::size_t n) { ok = ok && std::fread(p, 1, n, f) == n; };
  r(&version, 4);
  r(&got.seed, 8);
  r(&got.n_paths, 8);
  r(&got.n_increments, 8);
  r(&got.n0, 4);
  r(&got.depth, 4);
  ok = ok && version == detail::kSigCacheVersion && got.seed == key.seed &&
       got.n_paths == key.n_paths && got.n_increments == key.n_increments &&
       got.n0 == key.n0 && got.depth == key.depth;
  if (ok) {
    sigs.n_paths = key.n_paths;
    sigs.n_steps = key.n_increments + 1;
    sigs.dim = static_cast<int>(key.n0) + 1;
    sigs.depth = static_cast<int>(key.depth);
    sigs.sig_dim = basis_size(sigs.dim, sigs.depth);
    sigs.data.resize(sigs.n_paths * sigs.n_steps * sigs.sig_dim);
    r(sigs.data.data(), sigs.data.size() * sizeof(double));
  }
  std::fclose(f);
  return ok;
}

}  // namespace sigdfp
