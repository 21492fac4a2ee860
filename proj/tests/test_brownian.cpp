#include <doctest.h>

#include <cmath>

#include "sigdfp/brownian.hpp"
#include "sigdfp/threading.hpp"

using namespace sigdfp;

TEST_CASE("antithetic construction") {
  const auto b = sample_brownian(2, 10, 1.0, 1, 1, 42, true);
  for (std::size_t k = 0; k < 10; ++k) {
    CHECK(b.dW[10 + k] == -b.dW[k]);
    CHECK(b.dB[10 + k] == -b.dB[k]);
  }
}

TEST_CASE("all increments sum to exactly zero under pairing") {
  const auto b = sample_brownian(64, 25, 1.0, 1, 1, 5, true);
  // sum each half in the same order so the cancellation is exact in floats
  double first = 0.0, second = 0.0;
  const std::size_t half = b.dW.size() / 2;
  for (std::size_t i = 0; i < half; ++i) first += b.dW[i];
  for (std::size_t i = 0; i < half; ++i) second += b.dW[half + i];
  CHECK(first + second == 0.0);
}

TEST_CASE("odd path count with antithetic flag is a configuration error") {
  CHECK_THROWS_AS(sample_brownian(3, 10, 1.0, 1, 1, 1, true), config_error);
  CHECK_NOTHROW(sample_brownian(3, 10, 1.0, 1, 1, 1, false));
}

TEST_CASE("increment variance is chi-square consistent at scale") {
  const std::size_t n = 1ull << 15, L = 100;
  const auto b = sample_brownian(n, L, 1.0, 1, 1, 2024, true);
  // the antithetic half duplicates squares; use the fresh half
  const std::size_t m = (n / 2) * L;
  double ss = 0.0;
  for (std::size_t i = 0; i < m; ++i) ss += b.dW[i] * b.dW[i];
  const double var = ss / static_cast<double>(m);
  const double target = 0.01;  // dt = T/L
  const double se = target * std::sqrt(2.0 / static_cast<double>(m));
  CHECK(std::fabs(var - target) < 3.0 * se);
}

TEST_CASE("sampling is a pure function of the seed") {
  const auto a = sample_brownian(16, 8, 1.0, 1, 2, 77, true);
  set_threads(1);
  const auto b = sample_brownian(16, 8, 1.0, 1, 2, 77, true);
  set_threads(2);
  CHECK(a.dW == b.dW);
  CHECK(a.dB == b.dB);
  const auto c = sample_brownian(16, 8, 1.0, 1, 2, 78, true);
  CHECK(a.dW != c.dW);
}

TEST_CASE("cumulative paths telescope the increments") {
  const auto b = sample_brownian(4, 6, 1.0, 1, 1, 3, true);
  const auto cb = cumulative_common(b);
  const auto cw = cumulative_idiosyncratic(b);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(cb[i * 7] == 0.0);
    double acc = 0.0;
    for (std::size_t k = 0; k < 6; ++k) {
      acc += b.dB[i * 6 + k];
      CHECK(cb[i * 7 + k + 1] == doctest::Approx(acc).epsilon(1e-15));
    }
    acc = 0.0;
    for (std::size_t k = 0; k < 6; ++k) {
      acc += b.dW[i * 6 + k];
      CHECK(cw[i * 7 + k + 1] == doctest::Approx(acc).epsilon(1e-15));
    }
  }
}
