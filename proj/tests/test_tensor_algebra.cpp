#include <doctest.h>

#include <cmath>
#include <vector>

#include "sigdfp/quadrature.hpp"
#include "sigdfp/rng.hpp"
#include "sigdfp/tensor_algebra.hpp"

using namespace sigdfp;

namespace {

// Independent oracle for signatures of piecewise-linear paths: evaluates the
// iterated integral of one word by recursive Gauss-Legendre quadrature over
// the simplex, splitting at the segment breakpoints so every integrand piece
// is polynomial (GL is then exact). Completely separate from
// segment_exp/chen_append.
struct PiecewiseLinear {
  std::vector<double> knots;                 // times, ascending
  std::vector<std::vector<double>> slopes;   // per segment, length d

  double slope(int coord, double t) const {
    for (std::size_t s = 0; s + 1 < knots.size(); ++s)
      if (t <= knots[s + 1]) return slopes[s][coord];
    return slopes.back()[coord];
  }
};

double word_integral(const PiecewiseLinear& path, std::span<const int> word, double t_hi,
                     const QuadRule& rule) {
  if (word.empty()) return 1.0;
  const int last = word.back();
  double acc = 0.0;
  double lo = path.knots.front();
  for (std::size_t s = 0; s + 1 < path.knots.size(); ++s) {
    const double a = std::max(lo, path.knots[s]);
    const double b = std::min(t_hi, path.knots[s + 1]);
    if (b <= a) continue;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double t = a + (b - a) * rule.nodes[i];
      acc += (b - a) * rule.weights[i] * path.slope(last, t) *
             word_integral(path, word.subspan(0, word.size() - 1), t, rule);
    }
  }
  return acc;
}

TruncatedTensor oracle_signature(const PiecewiseLinear& path, int d, int depth) {
  const QuadRule rule = gauss_legendre01(10);
  TruncatedTensor out(d, depth);
  out.coeffs[0] = 1.0;
  for (int level = 1; level <= depth; ++level) {
    double* dst = out.level(level);
    for (std::size_t idx = 0; idx < level_size(d, level); ++idx) {
      const auto w = word_letters(d, level, idx);
      dst[idx] = word_integral(path, w, path.knots.back(), rule);
    }
  }
  return out;
}

TruncatedTensor random_group_like(Rng& rng, int d, int depth, int segments) {
  TruncatedTensor t = identity_tensor(d, depth);
  std::vector<double> seg(d);
  for (int s = 0; s < segments; ++s) {
    for (auto& v : seg) v = rng.uniform(-1.0, 1.0);
    chen_append(t, segment_exp(seg, depth));
  }
  return t;
}

double max_abs_diff(const TruncatedTensor& a, const TruncatedTensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.coeffs.size(); ++i)
    m = std::max(m, std::fabs(a.coeffs[i] - b.coeffs[i]));
  return m;
}

}  // namespace

TEST_CASE("basis_size") {
  CHECK(basis_size(2, 2) == 7);
  CHECK(basis_size(1, 4) == 5);
  // enumerate all words of length <= 3 over a 3-letter alphabet
  std::size_t count = 1;
  for (int len = 1; len <= 3; ++len) {
    std::size_t c = 1;
    for (int i = 0; i < len; ++i) c *= 3;
    count += c;
  }
  CHECK(basis_size(3, 3) == count);
  CHECK(basis_size(3, 3) == 40);
  CHECK(basis_size(2, 0) == 1);
  CHECK_THROWS_AS(basis_size(10, 60), config_error);
}

TEST_CASE("segment_exp") {
  SUBCASE("zero increment is the identity") {
    const double z[2] = {0.0, 0.0};
    const auto t = segment_exp(std::span(z, 2), 3);
    CHECK(t.coeffs[0] == 1.0);
    for (std::size_t i = 1; i < t.coeffs.size(); ++i) CHECK(t.coeffs[i] == 0.0);
  }
  SUBCASE("d=1 gives a^k/k!") {
    const double a[1] = {0.7};
    const auto t = segment_exp(std::span(a, 1), 4);
    CHECK(t.coeffs[1] == doctest::Approx(0.7));
    CHECK(t.coeffs[2] == doctest::Approx(0.7 * 0.7 / 2));
    CHECK(t.coeffs[3] == doctest::Approx(std::pow(0.7, 3) / 6));
    CHECK(t.coeffs[4] == doctest::Approx(std::pow(0.7, 4) / 24));
  }
  SUBCASE("d=2 level-2 block is the outer product over 2") {
    const double inc[2] = {1.0, 2.0};
    const auto t = segment_exp(std::span(inc, 2), 2);
    const double* l2 = t.level(2);
    CHECK(l2[0] == doctest::Approx(0.5));
    CHECK(l2[1] == doctest::Approx(1.0));
    CHECK(l2[2] == doctest::Approx(1.0));
    CHECK(l2[3] == doctest::Approx(2.0));
  }
}

TEST_CASE("tensor_mul basics") {
  Rng rng(5);
  const auto b = random_group_like(rng, 2, 3, 2);
  SUBCASE("identity is the unit, exactly") {
    const auto id = identity_tensor(2, 3);
    const auto left = tensor_mul(id, b);
    const auto right = tensor_mul(b, id);
    for (std::size_t i = 0; i < b.coeffs.size(); ++i) {
      CHECK(left.coeffs[i] == b.coeffs[i]);
      CHECK(right.coeffs[i] == b.coeffs[i]);
    }
  }
  SUBCASE("level-1 adds") {
    const auto a = random_group_like(rng, 2, 3, 2);
    const auto ab = tensor_mul(a, b);
    for (int i = 0; i < 2; ++i)
      CHECK(ab.level(1)[i] == doctest::Approx(a.level(1)[i] + b.level(1)[i]).epsilon(1e-14));
  }
  SUBCASE("dimension mismatch throws") {
    CHECK_THROWS_AS(tensor_mul(identity_tensor(2, 3), identity_tensor(3, 3)),
                    std::invalid_argument);
  }
}

TEST_CASE("two-segment signature matches the iterated-integral quadrature oracle") {
  const std::vector<double> d1 = {0.5, -0.3}, d2 = {0.2, 0.9};
  const auto sig = tensor_mul(segment_exp(d1, 3), segment_exp(d2, 3));
  PiecewiseLinear path;
  path.knots = {0.0, 0.4, 1.0};
  path.slopes = {{d1[0] / 0.4, d1[1] / 0.4}, {d2[0] / 0.6, d2[1] / 0.6}};
  const auto ref = oracle_signature(path, 2, 3);
  CHECK(max_abs_diff(sig, ref) < 1e-12);
}

TEST_CASE("chen_append equals tensor_mul") {
  Rng rng(11);
  auto a = random_group_like(rng, 3, 3, 3);
  std::vector<double> seg = {0.3, -0.2, 0.8};
  const auto expected = tensor_mul(a, segment_exp(seg, 3));
  chen_append(a, segment_exp(seg, 3));
  CHECK(max_abs_diff(a, expected) < 1e-14);
}

TEST_CASE("chen associativity on random group-like elements") {
  Rng rng(17);
  for (int rep = 0; rep < 5; ++rep) {
    const auto a = random_group_like(rng, 2, 4, 2);
    const auto b = random_group_like(rng, 2, 4, 2);
    const auto c = random_group_like(rng, 2, 4, 2);
    const auto lhs = tensor_mul(tensor_mul(a, b), c);
    const auto rhs = tensor_mul(a, tensor_mul(b, c));
    CHECK(max_abs_diff(lhs, rhs) < 1e-12);
  }
}

TEST_CASE("reversed segment is the group inverse") {
  Rng rng(19);
  std::vector<double> seg(2);
  for (int rep = 0; rep < 5; ++rep) {
    for (auto& v : seg) v = rng.uniform(-2.0, 2.0);
    std::vector<double> neg = {-seg[0], -seg[1]};
    const auto prod = tensor_mul(segment_exp(seg, 4), segment_exp(neg, 4));
    const auto id = identity_tensor(2, 4);
    CHECK(max_abs_diff(prod, id) < 1e-12);
  }
}

TEST_CASE("factorial decay bound for piecewise-linear paths") {
  Rng rng(23);
  for (int d : {2, 3}) {
    TruncatedTensor sig = identity_tensor(d, 4);
    double variation = 0.0;
    std::vector<double> seg(d);
    for (int s = 0; s < 10; ++s) {
      double norm2 = 0.0;
      for (auto& v : seg) {
        v = rng.uniform(-0.5, 0.5);
        norm2 += v * v;
      }
      variation += std::sqrt(norm2);
      chen_append(sig, segment_exp(seg, 4));
    }
    double fact = 1.0;
    for (int level = 1; level <= 4; ++level) {
      fact *= level;
      double sup = 0.0;
      const double* lv = sig.level(level);
      for (std::size_t i = 0; i < level_size(d, level); ++i)
        sup = std::max(sup, std::fabs(lv[i]));
      CHECK(sup <= std::pow(variation, level) / fact + 1e-12);
    }
  }
}

TEST_CASE("word strings") {
  CHECK(word_string(2, 0, 0) == "e");
  CHECK(word_string(2, 1, 1) == "1");
  CHECK(word_string(2, 2, 1) == "0.1");
  CHECK(word_string(3, 2, 5) == "1.2");
}
