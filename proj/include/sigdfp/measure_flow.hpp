#pragma once

#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "sigdfp/common.hpp"
#include "sigdfp/fastmath.hpp"
#include "sigdfp/linalg.hpp"
#include "sigdfp/rng.hpp"
#include "sigdfp/signature_stream.hpp"
#include "sigdfp/tensor_algebra.hpp"
#include "sigdfp/threading.hpp"

namespace sigdfp {

enum class FlowTransform { None, Exp };

// Linear functionals on truncated signatures approximating conditional
// moments: channel c evaluates <coeffs[c], S^M(B_hat_{0:t})>, optionally
// exponentiated (the consumption game regresses log-wealth/log-consumption
// and recovers m_t, Gamma_t by exp).
struct MeasureFlowFunctional {
  std::size_t sig_dim = 0;                 // p
  int n_outputs = 0;                       // q
  double ridge = 0.0;
  std::vector<FlowTransform> transforms;   // per channel
  std::vector<double> coeffs;              // q x p row-major

  const double* channel(int c) const { return coeffs.data() + static_cast<std::size_t>(c) * sig_dim; }
  double* channel(int c) { return coeffs.data() + static_cast<std::size_t>(c) * sig_dim; }

  // raw linear evaluation (before any exp transform)
  double evaluate_raw(int c, const double* sig) const {
    const double* l = channel(c);
    double s = 0.0;
    for (std::size_t j = 0; j < sig_dim; ++j) s += l[j] * sig[j];
    return s;
  }

  std::vector<double> evaluate(const TruncatedTensor& sig) const {
    SIGDFP_REQUIRE(sig.coeffs.size() == sig_dim, "evaluate: signature dimension mismatch");
    std::vector<double> out(n_outputs);
    for (int c = 0; c < n_outputs; ++c) {
      const double v = evaluate_raw(c, sig.coeffs.data());
      out[c] = transforms[c] == FlowTransform::Exp ? fast_exp(v) : v;
    }
    return out;
  }
};

// small random coefficients for the round-0 flow, scaled so that exp
// channels start near 1
inline MeasureFlowFunctional random_flow(std::size_t sig_dim, int n_outputs,
                                         std::vector<FlowTransform> transforms,
                                         std::uint64_t seed, double scale = 1e-2) {
  MeasureFlowFunctional f;
  f.sig_dim = sig_dim;
  f.n_outputs = n_outputs;
  f.transforms = std::move(transforms);
  f.coeffs.resize(static_cast<std::size_t>(n_outputs) * sig_dim);
  Rng rng(seed);
  for (auto& c : f.coeffs) c = scale * rng.normal();
  return f;
}

// Least squares / ridge fit of q output channels on signature rows.
// rows: n_rows x p design matrix (stacked prefix signatures at the chosen
// stamps); targets: n_rows x q. Solved through the normal equations; the
// intercept (empty-word column 0) is never penalized. A rank-deficient
// normal matrix with ridge = 0 falls back to the minimum-norm solution via
// an eigendecomposition and sets *rank_warning.
inline MeasureFlowFunctional fit_functional(std::size_t n_rows, std::size_t p, int q,
                                            const double* rows, const double* targets,
                                            double ridge,
                                            std::vector<FlowTransform> transforms,
                                            bool* rank_warning = nullptr) {
  SIGDFP_REQUIRE(p >= 1 && q >= 1 && n_rows >= 1, "fit_functional: empty problem");
  SIGDFP_REQUIRE(ridge >= 0.0, "fit_functional: ridge must be >= 0");
  if (rank_warning) *rank_warning = false;

  // Gram and cross moments accumulated in fixed chunk order.
  const std::size_t nc = num_chunks(n_rows);
  std::vector<std::vector<double>> g_part(nc), r_part(nc);
  parallel_chunks(n_rows, [&](std::size_t c) {
    auto [lo, hi] = chunk_range(n_rows, c);
    auto& g = g_part[c];
    auto& r = r_part[c];
    g.assign(p * p, 0.0);
    r.assign(p * q, 0.0);
    for (std::size_t i = lo; i < hi; ++i) {
      const double* x = rows + i * p;
      const double* y = targets + i * static_cast<std::size_t>(q);
      for (std::size_t a = 0; a < p; ++a) {
        const double xa = x[a];
        double* ga = g.data() + a * p;
        for (std::size_t b = a; b < p; ++b) ga[b] += xa * x[b];
        double* ra = r.data() + a * q;
        for (int cq = 0; cq < q; ++cq) ra[cq] += xa * y[cq];
      }
    }
  });
  std::vector<double> gram(p * p, 0.0), rhs(p * q, 0.0);
  for (std::size_t c = 0; c < nc; ++c) {
    for (std::size_t i = 0; i < p * p; ++i) gram[i] += g_part[c][i];
    for (std::size_t i = 0; i < p * q; ++i) rhs[i] += r_part[c][i];
  }
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < a; ++b) gram[a * p + b] = gram[b * p + a];
  for (std::size_t a = 1; a < p; ++a) gram[a * p + a] += ridge;  // column 0 = intercept

  std::vector<double> beta = rhs;  // p x q
  std::vector<double> chol = gram;
  if (!cholesky_solve(static_cast<int>(p), chol, beta.data(), q)) {
    if (rank_warning) *rank_warning = true;
    // minimum-norm pseudoinverse solve
    std::vector<double> evals, evecs;
    jacobi_eigh(static_cast<int>(p), gram, evals, evecs);
    double emax = 0.0;
    for (double e : evals) emax = std::max(emax, std::fabs(e));
    const double tol = emax * p * 1e-14;
    beta.assign(p * q, 0.0);
    for (std::size_t e = 0; e < p; ++e) {
      if (std::fabs(evals[e]) <= tol) continue;
      for (int cq = 0; cq < q; ++cq) {
        double proj = 0.0;
        for (std::size_t a = 0; a < p; ++a) proj += evecs[a * p + e] * rhs[a * q + cq];
        proj /= evals[e];
        for (std::size_t a = 0; a < p; ++a) beta[a * q + cq] += evecs[a * p + e] * proj;
      }
    }
  }

  MeasureFlowFunctional f;
  f.sig_dim = p;
  f.n_outputs = q;
  f.ridge = ridge;
  f.transforms = std::move(transforms);
  SIGDFP_REQUIRE(f.transforms.size() == static_cast<std::size_t>(q),
                 "fit_functional: transform per channel");
  f.coeffs.resize(static_cast<std::size_t>(q) * p);
  for (int cq = 0; cq < q; ++cq)
    for (std::size_t a = 0; a < p; ++a) f.coeffs[static_cast<std::size_t>(cq) * p + a] = beta[a * q + cq];
  for (double v : f.coeffs)
    if (!std::isfinite(v)) throw numeric_error("fit_functional produced non-finite coefficients", -1, -1, -1);
  return f;
}

// Fictitious-play average l_bar^(n) = (n-1)/n l_bar^(n-1) + 1/n l^(n), with
// the effective counter starting after the warm-start phase. During
// warm-start the fresh functional is passed through unchanged (the driver
// then plays against the previous round's fit rather than the average).
inline MeasureFlowFunctional average_flow(const MeasureFlowFunctional& prev,
                                          const MeasureFlowFunctional& fresh,
                                          long round, long warm_start_rounds) {
  SIGDFP_REQUIRE(prev.sig_dim == fresh.sig_dim && prev.n_outputs == fresh.n_outputs,
                 "average_flow: shape mismatch");
  SIGDFP_REQUIRE(prev.transforms == fresh.transforms, "average_flow: transform mismatch");
  if (round <= warm_start_rounds) return fresh;
  const double n_eff = static_cast<double>(round - warm_start_rounds);
  MeasureFlowFunctional out = fresh;
  const double wp = (n_eff - 1.0) / n_eff;
  const double wf = 1.0 / n_eff;
  for (std::size_t i = 0; i < out.coeffs.size(); ++i)
    out.coeffs[i] = wp * prev.coeffs[i] + wf * fresh.coeffs[i];
  return out;
}

// Raw channel evaluations for every (path, grid time): n_paths x n_steps x q.
// Exp transforms are intentionally not applied here; rollout code gets the
// linear values and exponentiates where the model calls for it.
inline std::vector<double> flow_table(const MeasureFlowFunctional& f,
                                      const PrefixSignatures& sigs) {
  SIGDFP_REQUIRE(f.sig_dim == sigs.sig_dim, "flow_table: signature dimension mismatch");
  const std::size_t q = f.n_outputs;
  std::vector<double> out(sigs.n_paths * sigs.n_steps * q);
  parallel_chunks(sigs.n_paths, [&](std::size_t c) {
    auto [lo, hi] = chunk_range(sigs.n_paths, c);
    for (std::size_t i = lo; i < hi; ++i)
      for (std::size_t k = 0; k < sigs.n_steps; ++k) {
        const double* s = sigs.at(i, k);
        double* o = out.data() + (i * sigs.n_steps + k) * q;
        for (std::size_t cq = 0; cq < q; ++cq)
          o[cq] = f.evaluate_raw(static_cast<int>(cq), s);
      }
  });
  return out;
}

// CSV export: word index, word string, one coefficient column per channel.
inline void export_flow_csv(std::FILE* out, const MeasureFlowFunctional& f, int dim) {
  std::fprintf(out, "index,word");
  for (int c = 0; c < f.n_outputs; ++c) std::fprintf(out, ",coeff_%d", c);
  std::fprintf(out, "\n");
  int level = 0;
  std::size_t level_begin = 0, in_level = 0;
  for (std::size_t j = 0; j < f.sig_dim; ++j) {
    if (j - level_begin >= level_size(dim, level) && j > 0) {
      level_begin = j;
      ++level;
      in_level = 0;
    }
    std::fprintf(out, "%zu,%s", j, word_string(dim, level, in_level).c_str());
    for (int c = 0; c < f.n_outputs; ++c)
      std::fprintf(out, ",%.17g", f.channel(c)[j]);
    std::fprintf(out, "\n");
    ++in_level;
  }
}

}  // namespace sigdfp
