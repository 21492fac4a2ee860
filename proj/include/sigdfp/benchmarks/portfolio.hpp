#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "sigdfp/common.hpp"
#include "sigdfp/fastmath.hpp"
#include "sigdfp/quadrature.hpp"
#include "sigdfp/rng.hpp"
#include "sigdfp/rollout.hpp"

namespace sigdfp {

// Mean-field portfolio game (heterogeneous agents, exponential utility):
//   dX = pi (mu dt + nu dW + sigma dB),   X_0 = xi
//   sup_pi E[ -exp(-(X_T - theta m_T)/delta) ]
// with m_t = E[X_t | F^B_t] and type vector zeta = (xi, delta, theta, mu,
// nu, sigma) drawn per agent at time 0.
struct PortfolioDist {
  double xi_lo = 0.0, xi_hi = 1.0;
  double delta_lo = 5.0, delta_hi = 5.5;
  double theta_lo = 0.0, theta_hi = 1.0;
  double mu_lo = 0.25, mu_hi = 0.35;
  double nu_lo = 0.2, nu_hi = 0.4;
  double sigma_lo = 0.2, sigma_hi = 0.4;
};

// type layout
namespace pf {
inline constexpr int kXi = 0, kDelta = 1, kTheta = 2, kMu = 3, kNu = 4, kSigma = 5;
inline constexpr int kTypeDim = 6;
}  // namespace pf

struct PortfolioProblem {
  PortfolioDist dist;

  const char* name() const { return "portfolio"; }
  int type_dim() const { return pf::kTypeDim; }
  int control_dim() const { return 1; }
  int flow_dim() const { return 1; }
  int net_input_dim() const { return pf::kTypeDim + 3; }  // (zeta, t, X, m)
  bool maximize() const { return true; }
  // pi* spans roughly [4, 31] for the shipped type ranges. The soft clip has
  // unit slope at the origin and saturates at +-kPiCap, so the exponential
  // utility cannot drive a weight-growth spiral: the worse an excursion, the
  // smaller the map derivative.
  static constexpr double kPiCap = 40.0;
  double map_control(int, double out) const { return kPiCap * fast_tanh(out / kPiCap); }
  double map_control_deriv(int, double alpha) const {
    const double t = alpha / kPiCap;
    return 1.0 - t * t;
  }
  double last_layer_init_scale() const { return 0.0; }
  double initial_state(double, const double* types) const { return types[pf::kXi]; }

  void sample_types(Rng& rng, double* out) const {
    out[pf::kXi] = rng.uniform(dist.xi_lo, dist.xi_hi);
    out[pf::kDelta] = rng.uniform(dist.delta_lo, dist.delta_hi);
    out[pf::kTheta] = rng.uniform(dist.theta_lo, dist.theta_hi);
    out[pf::kMu] = rng.uniform(dist.mu_lo, dist.mu_hi);
    out[pf::kNu] = rng.uniform(dist.nu_lo, dist.nu_hi);
    out[pf::kSigma] = rng.uniform(dist.sigma_lo, dist.sigma_hi);
  }

  // inputs standardized to unit scale using the type-distribution ranges and
  // the typical wealth spread under pi* ~ 10
  void net_inputs(const StepView& v, double* in, double* xfac) const {
    const int idim = net_input_dim();
    auto ctr = [](double lo, double hi) { return 0.5 * (lo + hi); };
    auto scl = [](double lo, double hi) { return lo == hi ? 1.0 : 3.46 / (hi - lo); };
    for (int r = 0; r < v.rows; ++r) {
      const double* ty = v.types + r * pf::kTypeDim;
      double* row = in + r * idim;
      row[pf::kXi] = (ty[pf::kXi] - ctr(dist.xi_lo, dist.xi_hi)) * scl(dist.xi_lo, dist.xi_hi);
      row[pf::kDelta] =
          (ty[pf::kDelta] - ctr(dist.delta_lo, dist.delta_hi)) * scl(dist.delta_lo, dist.delta_hi);
      row[pf::kTheta] =
          (ty[pf::kTheta] - ctr(dist.theta_lo, dist.theta_hi)) * scl(dist.theta_lo, dist.theta_hi);
      row[pf::kMu] = (ty[pf::kMu] - ctr(dist.mu_lo, dist.mu_hi)) * scl(dist.mu_lo, dist.mu_hi);
      row[pf::kNu] = (ty[pf::kNu] - ctr(dist.nu_lo, dist.nu_hi)) * scl(dist.nu_lo, dist.nu_hi);
      row[pf::kSigma] =
          (ty[pf::kSigma] - ctr(dist.sigma_lo, dist.sigma_hi)) * scl(dist.sigma_lo, dist.sigma_hi);
      row[pf::kTypeDim] = (v.t - 0.5) * 3.46;
      row[pf::kTypeDim + 1] = (v.s[r] - 2.0) * 0.5;
      row[pf::kTypeDim + 2] = (v.mu[r] - 2.0) * 0.7;
      xfac[r] = 0.5;
    }
  }

  void step(const StepView& v, double* s_next) const {
    for (int r = 0; r < v.rows; ++r) {
      const double* ty = v.types + r * pf::kTypeDim;
      s_next[r] = v.s[r] + v.alpha[r] * (ty[pf::kMu] * v.dt + ty[pf::kNu] * v.dW[r] +
                                         ty[pf::kSigma] * v.dB[r]);
    }
  }

  void step_partials(const StepView& v, double* dF_ds, double* dF_da) const {
    for (int r = 0; r < v.rows; ++r) {
      const double* ty = v.types + r * pf::kTypeDim;
      dF_ds[r] = 1.0;
      dF_da[r] = ty[pf::kMu] * v.dt + ty[pf::kNu] * v.dW[r] + ty[pf::kSigma] * v.dB[r];
    }
  }

  void running_cost(const StepView& v, double* f) const {
    for (int r = 0; r < v.rows; ++r) f[r] = 0.0;
  }
  void cost_partials(const StepView& v, double* df_ds, double* df_da) const {
    for (int r = 0; r < v.rows; ++r) {
      df_ds[r] = 0.0;
      df_da[r] = 0.0;
    }
  }

  void terminal_cost(int rows, const double* s, const double* mu, const double* types,
                     double* g) const {
    for (int r = 0; r < rows; ++r) {
      const double* ty = types + r * pf::kTypeDim;
      g[r] = -std::exp(-(s[r] - ty[pf::kTheta] * mu[r]) / ty[pf::kDelta]);
    }
  }

  void terminal_partial(int rows, const double* s, const double* mu, const double* types,
                        double* dg_ds) const {
    for (int r = 0; r < rows; ++r) {
      const double* ty = types + r * pf::kTypeDim;
      dg_ds[r] = std::exp(-(s[r] - ty[pf::kTheta] * mu[r]) / ty[pf::kDelta]) / ty[pf::kDelta];
    }
  }
};

// Closed form (Lacker & Zariphopoulou):
//   pi* = delta mu/(sigma^2+nu^2) + theta sigma/(sigma^2+nu^2) * phi/(1-psi)
//   m_t = E[xi] + E[mu pi*] t + E[sigma pi*] B_t
// Population constants are deterministic Gauss-Legendre expectations over
// the independent uniform type components, so the oracle itself carries no
// Monte Carlo noise.
struct PortfolioOracle {
  PortfolioDist d;
  double T = 1.0;
  double phi = 0, psi = 0, psi_t = 0, phi_t = 0;  // psi_t/phi_t: tilde constants
  double K = 0;                                   // phi/(1-psi)
  double e_mu_pi = 0, e_sigma_pi = 0, e_xi = 0;
  double value = 0;
  int quad_order = 32;

  explicit PortfolioOracle(const PortfolioDist& dist, double horizon = 1.0)
      : d(dist), T(horizon) {
    // expectations over (delta, theta, mu, nu, sigma)
    const double lo[5] = {d.delta_lo, d.theta_lo, d.mu_lo, d.nu_lo, d.sigma_lo};
    const double hi[5] = {d.delta_hi, d.theta_hi, d.mu_hi, d.nu_hi, d.sigma_hi};
    double acc[4];
    expect_uniform_multi(std::span(lo, 5), std::span(hi, 5), quad_order, acc,
                         [](std::span<const double> z, std::span<double> out) {
                           const double delta = z[0], theta = z[1], mu = z[2], nu = z[3],
                                        sigma = z[4];
                           const double S = sigma * sigma + nu * nu;
                           out[0] = delta * mu * sigma / S;          // phi
                           out[1] = theta * sigma * sigma / S;      // psi
                           out[2] = delta * mu * mu / S;            // psi tilde
                           out[3] = theta * mu * sigma / S;         // phi tilde
                         });
    phi = acc[0];
    psi = acc[1];
    psi_t = acc[2];
    phi_t = acc[3];
    if (psi >= 1.0) throw config_error("portfolio oracle: psi >= 1, degenerate fixed point");
    K = phi / (1.0 - psi);
    e_mu_pi = psi_t + K * phi_t;      // E[mu pi*]
    e_sigma_pi = phi + K * psi;       // E[sigma pi*]
    e_xi = 0.5 * (d.xi_lo + d.xi_hi);
    // E[v(0, xi - theta E[xi])], v(t,x) = -e^{-x/delta} e^{-rho(T-t)};
    // the xi marginal integrates in closed form: E[e^{-xi/delta}] over
    // U(xi_lo, xi_hi).
    value = -expect_uniform(std::span(lo, 5), std::span(hi, 5), quad_order,
                            [&](std::span<const double> z) {
                              const double delta = z[0], theta = z[1];
                              const double exi =
                                  delta / (d.xi_hi - d.xi_lo) *
                                  (std::exp(-d.xi_lo / delta) - std::exp(-d.xi_hi / delta));
                              return exi * std::exp(theta * e_xi / delta) *
                                     std::exp(-rho(z) * T);
                            });
  }

  double rho(std::span<const double> z) const {
    const double delta = z[0], theta = z[1], mu = z[2], nu = z[3], sigma = z[4];
    const double S = sigma * sigma + nu * nu;
    const double td = theta / delta;
    const double first = (mu + td * K * sigma) * (mu + td * K * sigma) / (2.0 * S);
    return first - td * (psi_t + phi_t * K) - 0.5 * td * K * td * K;
  }

  double pistar(const double* types) const {
    const double S = types[pf::kSigma] * types[pf::kSigma] + types[pf::kNu] * types[pf::kNu];
    return types[pf::kDelta] * types[pf::kMu] / S +
           types[pf::kTheta] * types[pf::kSigma] / S * K;
  }

  double m(double t, double b_t) const { return e_xi + e_mu_pi * t + e_sigma_pi * b_t; }
};

}  // namespace sigdfp
