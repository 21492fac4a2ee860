#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

#include "sigdfp/brownian.hpp"
#include "sigdfp/signature_stream.hpp"
#include "sigdfp/threading.hpp"

using namespace sigdfp;

TEST_CASE("time_augment") {
  SUBCASE("constant zero path") {
    const std::vector<double> path = {0.0, 0.0, 0.0};
    const std::vector<double> grid = {0.0, 0.5, 1.0};
    const auto out = time_augment(path, grid, 1);
    const std::vector<double> expect = {0.0, 0.0, 0.5, 0.0, 1.0, 0.0};
    CHECK(out == expect);
  }
  SUBCASE("n0=5 gives 6 columns") {
    const std::vector<double> path(3 * 5, 1.0);
    const std::vector<double> grid = {0.0, 0.5, 1.0};
    const auto out = time_augment(path, grid, 5);
    CHECK(out.size() == 3 * 6);
    CHECK(out[0] == 0.0);
    CHECK(out[6] == 0.5);
  }
  SUBCASE("non-monotone grid rejected") {
    const std::vector<double> path = {0.0, 0.0};
    const std::vector<double> grid = {0.5, 0.5};
    CHECK_THROWS_AS(time_augment(path, grid, 1), config_error);
  }
}

namespace {
PrefixSignatures sigs_of(const BrownianBatch& b, int depth) {
  return prefix_signatures(b.n_paths, b.n_steps, b.n0, depth, b.grid, b.dB);
}
}  // namespace

TEST_CASE("prefix signatures") {
  auto batch = sample_brownian(8, 20, 1.0, 1, 1, 99, true);
  const auto sigs = sigs_of(batch, 3);
  const std::size_t L = batch.n_steps;

  SUBCASE("k=0 is the identity for every path") {
    for (std::size_t i = 0; i < batch.n_paths; ++i) {
      const double* s = sigs.at(i, 0);
      CHECK(s[0] == 1.0);
      for (std::size_t j = 1; j < sigs.sig_dim; ++j) CHECK(s[j] == 0.0);
    }
  }
  SUBCASE("scalar coefficient is 1 everywhere") {
    for (std::size_t i = 0; i < batch.n_paths; ++i)
      for (std::size_t k = 0; k <= L; ++k) CHECK(sigs.at(i, k)[0] == doctest::Approx(1.0));
  }
  SUBCASE("level-1 is the augmented increment (t_k, B_k)") {
    const auto cum = cumulative_common(batch);
    for (std::size_t i =  0; i < batch.n_paths; ++i)
      for (std::size_t k = 0; k <= L; ++k) {
        CHECK(sigs.at(i, k)[1] == doctest::Approx(batch.grid[k]).epsilon(1e-12));
        CHECK(sigs.at(i, k)[2] ==
              doctest::Approx(cum[i * (L + 1) + k]).epsilon(1e-12));
      }
  }
  SUBCASE("prefix at T equals one-shot product of all segment exponentials") {
    for (std::size_t i = 0; i < batch.n_paths; ++i) {
      TruncatedTensor one = identity_tensor(2, 3);
      for (std::size_t k = 0; k < L; ++k) {
        const double seg[2] = {batch.grid[k + 1] - batch.grid[k], batch.dB[i * L + k]};
        one = tensor_mul(one, segment_exp(std::span(seg, 2), 3));
      }
      double md = 0.0;
      for (std::size_t j = 0; j < sigs.sig_dim; ++j)
        md = std::max(md, std::fabs(one.coeffs[j] - sigs.at(i, L)[j]));
      CHECK(md < 1e-12);
    }
  }
  SUBCASE("Chen consistency across a split point") {
    for (const auto& [k, mm] : {std::pair<std::size_t, std::size_t>{5, 13},
                                {0, 20},
                                {7, 8}}) {
      for (std::size_t i = 0; i < 4; ++i) {
        TruncatedTensor mid = identity_tensor(2, 3);
        for (std::size_t s = k; s < mm; ++s) {
          const double seg[2] = {batch.grid[s + 1] - batch.grid[s], batch.dB[i * L + s]};
          chen_append(mid, segment_exp(std::span(seg, 2), 3));
        }
        TruncatedTensor pre(2, 3);
        std::memcpy(pre.coeffs.data(), sigs.at(i, k), sigs.sig_dim * sizeof(double));
        const auto full = tensor_mul(pre, mid);
        double md = 0.0;
        for (std::size_t j = 0; j < sigs.sig_dim; ++j)
          md = std::max(md, std::fabs(full.coeffs[j] - sigs.at(i, mm)[j]));
        CHECK(md < 1e-10);
      }
    }
  }
  SUBCASE("factorial decay along the stream") {
    const std::size_t i = 3;
    double variation = 0.0;
    for (std::size_t k = 0; k < L; ++k) {
      const double dt = batch.grid[k + 1] - batch.grid[k];
      const double db = batch.dB[i * L + k];
      variation += std::sqrt(dt * dt + db * db);
      double fact = 1.0;
      for (int level = 1; level <= 3; ++level) {
        fact *= level;
        const double* lv = sigs.at(i, k + 1) + level_offset(2, level);
        double sup = 0.0;
        for (std::size_t j = 0; j < level_size(2, level); ++j)
          sup = std::max(sup, std::fabs(lv[j]));
        CHECK(sup <= std::pow(variation, level) / fact + 1e-12);
      }
    }
  }
}

TEST_CASE("straight-line augmented path has the closed-form signature") {
  // dB_k chosen so B_t = t; augmented segment exp gives levels of (1,1)
  const std::size_t L = 10;
  std::vector<double> db(L, 1.0 / L);
  const auto sigs = prefix_signatures(1, L, 1, 2,
                                      [] {
                                        std::vector<double> g(11);
                                        for (int k = 0; k <= 10; ++k) g[k] = k / 10.0;
                                        return g;
                                      }(),
                                      db);
  const double* s = sigs.at(0, L);
  CHECK(s[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s[2] == doctest::Approx(1.0).epsilon(1e-12));
  for (int j = 3; j < 7; ++j) CHECK(s[j] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("prefix signatures are deterministic across thread counts") {
  auto batch = sample_brownian(32, 16, 1.0, 1, 1, 7, true);
  set_threads(1);
  const auto a = sigs_of(batch, 3);
  set_threads(2);
  const auto b = sigs_of(batch, 3);
  CHECK(a.data == b.data);
}

TEST_CASE("signature cache round-trips") {
  auto batch = sample_brownian(4, 8, 1.0, 1, 1, 31, true);
  const auto sigs = sigs_of(batch, 2);
  const SigCacheKey key{31, 4, 8, 1, 2};
  const auto file = std::filesystem::temp_directory_path() / "sigdfp_cache_test.bin";
  REQUIRE(save_prefix_signatures(file, key, sigs));
  PrefixSignatures loaded;
  REQUIRE(load_prefix_signatures(file, key, loaded));
  CHECK(loaded.data == sigs.data);
  CHECK(loaded.sig_dim == sigs.sig_dim);
  const SigCacheKey wrong{32, 4, 8, 1, 2};
  PrefixSignatures reject;
  CHECK_FALSE(load_prefix_signatures(file, wrong, reject));
  std::filesystem::remove(file);
}
