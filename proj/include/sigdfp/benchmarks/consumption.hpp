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

// Mean-field game of optimal consumption and investment (extended MFG:
// interaction through both wealth and consumption aggregates):
//   dX = pi X (mu dt + nu dW + sigma . dB) - c X dt,  X_0 = xi
//   sup_{pi,c} E[ int U(c X (Gamma m)^-theta; delta) dt
//                 + eps U(X_T m_T^-theta; delta) ],
//   U(x; delta) = x^(1-1/delta) / (1 - 1/delta)
// with m_t = exp E[log X_t | F^B], Gamma_t = exp E[log c_t | F^B].
// The rollout evolves log X (Ito-corrected drift) and the consumption
// control is parameterized as log c, both exponentiated where needed.
// sigma may be a vector of length n0 (high-dimensional common noise).
struct ConsumptionDist {
  double xi_lo = 0.0, xi_hi = 1.0;
  double delta_lo = 2.0, delta_hi = 2.5;
  double theta_lo = 0.0, theta_hi = 1.0;
  double mu_lo = 0.25, mu_hi = 0.35;
  double nu_lo = 0.2, nu_hi = 0.4;
  double sigma_lo = 0.2, sigma_hi = 0.4;
  double eps_lo = 0.5, eps_hi = 1.0;
};

namespace cons {
inline constexpr int kXi = 0, kDelta = 1, kTheta = 2, kMu = 3, kNu = 4, kSigma = 5;
inline int eps_index(int n0) { return 5 + n0; }
inline int type_dim(int n0) { return 6 + n0; }
}  // namespace cons

struct ConsumptionProblem {
  ConsumptionDist dist;
  int n0 = 1;

  const char* name() const { return "consumption"; }
  int type_dim() const { return cons::type_dim(n0); }
  int control_dim() const { return 2; }  // (pi, log c)
  int flow_dim() const { return 2; }     // raw (log m, log Gamma)
  int net_input_dim() const { return type_dim() + 4; }  // (zeta, t, X, m, Gamma)
  bool maximize() const { return true; }
  // pi* spans roughly [-1, 11] and log c* stays within +-2 for the shipped
  // ranges; both channels go through soft clips (unit slope at the origin)
  // so neither the power utility nor the e^{log c} drift can run away.
  static constexpr double kPiCap = 15.0;
  static constexpr double kLogCCap = 4.0;
  double map_control(int j, double out) const {
    const double cap = j == 0 ? kPiCap : kLogCCap;
    return cap * fast_tanh(out / cap);
  }
  double map_control_deriv(int j, double alpha) const {
    const double cap = j == 0 ? kPiCap : kLogCCap;
    const double t = alpha / cap;
    return 1.0 - t * t;
  }
  double last_layer_init_scale() const { return 0.0; }
  double initial_state(double, const double* types) const {
    return std::log(types[cons::kXi]);
  }

  void sample_types(Rng& rng, double* out) const {
    out[cons::kXi] = rng.uniform(dist.xi_lo, dist.xi_hi);
    out[cons::kDelta] = rng.uniform(dist.delta_lo, dist.delta_hi);
    out[cons::kTheta] = rng.uniform(dist.theta_lo, dist.theta_hi);
    out[cons::kMu] = rng.uniform(dist.mu_lo, dist.mu_hi);
    out[cons::kNu] = rng.uniform(dist.nu_lo, dist.nu_hi);
    for (int j = 0; j < n0; ++j)
      out[cons::kSigma + j] = rng.uniform(dist.sigma_lo, dist.sigma_hi);
    out[cons::eps_index(n0)] = rng.uniform(dist.eps_lo, dist.eps_hi);
  }

  // inputs standardized to unit scale using the type ranges; wealth and the
  // two aggregates live on O(1) ranges around their time-0 levels
  void net_inputs(const StepView& v, double* in, double* xfac) const {
    const int td = type_dim();
    const int idim = net_input_dim();
    auto ctr = [](double lo, double hi) { return 0.5 * (lo + hi); };
    auto scl = [](double lo, double hi) { return lo == hi ? 1.0 : 3.46 / (hi - lo); };
    for (int r = 0; r < v.rows; ++r) {
      const double* ty = v.types + r * td;
      double* row = in + r * idim;
      row[cons::kXi] = (ty[cons::kXi] - ctr(dist.xi_lo, dist.xi_hi)) * scl(dist.xi_lo, dist.xi_hi);
      row[cons::kDelta] = (ty[cons::kDelta] - ctr(dist.delta_lo, dist.delta_hi)) *
                          scl(dist.delta_lo, dist.delta_hi);
      row[cons::kTheta] = (ty[cons::kTheta] - ctr(dist.theta_lo, dist.theta_hi)) *
                          scl(dist.theta_lo, dist.theta_hi);
      row[cons::kMu] = (ty[cons::kMu] - ctr(dist.mu_lo, dist.mu_hi)) * scl(dist.mu_lo, dist.mu_hi);
      row[cons::kNu] = (ty[cons::kNu] - ctr(dist.nu_lo, dist.nu_hi)) * scl(dist.nu_lo, dist.nu_hi);
      for (int j = 0; j < n0; ++j)
        row[cons::kSigma + j] = (ty[cons::kSigma + j] - ctr(dist.sigma_lo, dist.sigma_hi)) *
                                scl(dist.sigma_lo, dist.sigma_hi);
      row[cons::eps_index(n0)] = (ty[cons::eps_index(n0)] - ctr(dist.eps_lo, dist.eps_hi)) *
                                 scl(dist.eps_lo, dist.eps_hi);
      row[td] = (v.t - 0.5) * 3.46;
      const double x = fast_exp(v.s[r]);
      row[td + 1] = (x - 0.5) * 2.0;
      row[td + 2] = (fast_exp(v.mu[r * 2 + 0]) - 0.5) * 3.0;  // m
      row[td + 3] = (fast_exp(v.mu[r * 2 + 1]) - 0.7) * 3.0;  // Gamma
      xfac[r] = 2.0 * x;  // d(scaled X)/d(log X)
    }
  }

  double sigma_sq(const double* ty) const {
    double s2 = 0.0;
    for (int j = 0; j < n0; ++j) s2 += ty[cons::kSigma + j] * ty[cons::kSigma + j];
    return s2;
  }

  void step(const StepView& v, double* s_next) const {
    const int td = type_dim();
    for (int r = 0; r < v.rows; ++r) {
      const double* ty = v.types + r * td;
      const double pi = v.alpha[r * 2 + 0];
      const double con = fast_exp(v.alpha[r * 2 + 1]);
      const double S = sigma_sq(ty) + ty[cons::kNu] * ty[cons::kNu];
      double common = 0.0;
      for (int j = 0; j < n0; ++j) common += ty[cons::kSigma + j] * v.dB[r * n0 + j];
      s_next[r] = v.s[r] + (pi * ty[cons::kMu] - con - 0.5 * pi * pi * S) * v.dt +
                  pi * ty[cons::kNu] * v.dW[r] + pi * common;
    }
  }

  void step_partials(const StepView& v, double* dF_ds, double* dF_da) const {
    const int td = type_dim();
    for (int r = 0; r < v.rows; ++r) {
      const double* ty = v.types + r * td;
      const double pi = v.alpha[r * 2 + 0];
      const double con = fast_exp(v.alpha[r * 2 + 1]);
      const double S = sigma_sq(ty) + ty[cons::kNu] * ty[cons::kNu];
      double common = 0.0;
      for (int j = 0; j < n0; ++j) common += ty[cons::kSigma + j] * v.dB[r * n0 + j];
      dF_ds[r] = 1.0;
      dF_da[r * 2 + 0] = (ty[cons::kMu] - pi * S) * v.dt + ty[cons::kNu] * v.dW[r] + common;
      dF_da[r * 2 + 1] = -con * v.dt;
    }
  }

  // U(z) with z = c X (Gamma m)^-theta; log z keeps everything in the
  // exponent so the power is a single exp.
  void running_cost(const StepView& v, double* f) const {
    const int td = type_dim();
    for (int r = 0; r < v.rows; ++r) {
      const double* ty = v.types + r * td;
      const double delta = ty[cons::kDelta];
      const double one_m = 1.0 - 1.0 / delta;
      const double logz = v.alpha[r * 2 + 1] + v.s[r] -
                          ty[cons::kTheta] * (v.mu[r * 2 + 0] + v.mu[r * 2 + 1]);
      f[r] = fast_exp(one_m * logz) / one_m;
    }
  }

  void cost_partials(const StepView& v, double* df_ds, double* df_da) const {
    const int td = type_dim();
    for (int r = 0; r < v.rows; ++r) {
      const double* ty = v.types + r * td;
      const double delta = ty[cons::kDelta];
      const double one_m = 1.0 - 1.0 / delta;
      const double logz = v.alpha[r * 2 + 1] + v.s[r] -
                          ty[cons::kTheta] * (v.mu[r * 2 + 0] + v.mu[r * 2 + 1]);
      const double w = fast_exp(one_m * logz);  // dU/dlogz
      df_ds[r] = w;
      df_da[r * 2 + 0] = 0.0;
      df_da[r * 2 + 1] = w;
    }
  }

  void terminal_cost(int rows, const double* s, const double* mu, const double* types,
                     double* g) const {
    const int td = type_dim();
    for (int r = 0; r < rows; ++r) {
      const double* ty = types + r * td;
      const double delta = ty[cons::kDelta];
      const double one_m = 1.0 - 1.0 / delta;
      const double logz = s[r] - ty[cons::kTheta] * mu[r * 2 + 0];
      g[r] = ty[cons::eps_index(n0)] * fast_exp(one_m * logz) / one_m;
    }
  }

  void terminal_partial(int rows, const double* s, const double* mu, const double* types,
                        double* dg_ds) const {
    const int td = type_dim();
    for (int r = 0; r < rows; ++r) {
      const double* ty = types + r * td;
      const double delta = ty[cons::kDelta];
      const double one_m = 1.0 - 1.0 / delta;
      const double logz = s[r] - ty[cons::kTheta] * mu[r * 2 + 0];
      dg_ds[r] = ty[cons::eps_index(n0)] * fast_exp(one_m * logz);
    }
  }
};

// Closed form (Lacker & Soret). Only available for scalar common noise.
//   pi* = delta mu / S - theta(delta-1) sigma / S * phi/(1+psi)
//   c*_t = ( 1/beta + (1/lambda - 1/beta) e^{-beta(T-t)} )^{-1}
// Population constants are deterministic quadrature expectations; the
// 6-dimensional integrals over (delta,theta,mu,nu,sigma,eps) use a lower
// order than the <=5-dimensional ones to keep the node count sane (the
// integrands are analytic, so the error is far below the Monte Carlo floor;
// a test checks convergence in the order).
struct ConsumptionOracle {
  ConsumptionDist d;
  double T = 1.0;
  std::size_t L = 100;

  double phi = 0, psi = 0, K = 0, A = 0, I1 = 0, I2 = 0;
  double e_delta = 0, e_log_eps = 0, g_log = 0, e_delta_rho = 0;
  double e_mu_pi_half = 0, e_sigma_pi = 0;
  double e_xi = 0, e_log_xi = 0;
  std::vector<double> ec, elogc, int_ec;  // E[c*_t], E[log c*_t], int_0^t E[c*]
  double value = 0;
  int order5 = 32, order6 = 12;

  ConsumptionOracle(const ConsumptionDist& dist, double horizon, std::size_t n_steps,
                    int order6_override = 0)
      : d(dist), T(horizon), L(n_steps) {
    if (order6_override > 0) order6 = order6_override;
    const double lo5[5] = {d.delta_lo, d.theta_lo, d.mu_lo, d.nu_lo, d.sigma_lo};
    const double hi5[5] = {d.delta_hi, d.theta_hi, d.mu_hi, d.nu_hi, d.sigma_hi};
    // pass 1: raw moments
    double acc[8];
    expect_uniform_multi(std::span(lo5, 5), std::span(hi5, 5), order5, acc,
                         [](std::span<const double> z, std::span<double> out) {
                           const double delta = z[0], theta = z[1], mu = z[2], nu = z[3],
                                        sigma = z[4];
                           const double S = sigma * sigma + nu * nu;
                           const double td1 = theta * (delta - 1.0);
                           out[0] = delta * mu * sigma / S;      // phi
                           out[1] = td1 * sigma * sigma / S;     // psi
                           out[2] = td1;                         // A
                           out[3] = delta * mu * mu / S;         // J1a
                           out[4] = td1 * sigma * mu / S;        // J1b
                           out[5] = delta * delta * mu * mu / S; // J2a
                           out[6] = delta * mu * td1 * sigma / S;// J2b
                           out[7] = td1 * td1 * sigma * sigma / S;
                         });
    phi = acc[0];
    psi = acc[1];
    A = acc[2];
    K = phi / (1.0 + psi);
    I1 = acc[3] - K * acc[4];
    I2 = acc[5] - 2.0 * K * acc[6] + K * K * acc[7];
    {
      const double lo1[1] = {d.delta_lo}, hi1[1] = {d.delta_hi};
      e_delta = expect_uniform(std::span(lo1, 1), std::span(hi1, 1), order5,
                               [](std::span<const double> z) { return z[0]; });
    }
    e_log_eps = uniform_log_moment(d.eps_lo, d.eps_hi);
    g_log = -e_delta * e_log_eps;  // E[log(eps^-delta)], delta independent of eps
    // pass 2: constants that need rho(zeta)
    double acc2[3];
    expect_uniform_multi(std::span(lo5, 5), std::span(hi5, 5), order5, acc2,
                         [&](std::span<const double> z, std::span<double> out) {
                           const double delta = z[0], mu = z[2], nu = z[3], sigma = z[4];
                           const double S = sigma * sigma + nu * nu;
                           const double ps = pistar5(z);
                           out[0] = delta * rho5(z);
                           out[1] = ps * mu - 0.5 * ps * ps * S;
                           out[2] = ps * sigma;
                           (void)nu;
                         });
    e_delta_rho = acc2[0];
    e_mu_pi_half = acc2[1];
    e_sigma_pi = acc2[2];
    e_xi = 0.5 * (d.xi_lo + d.xi_hi);
    e_log_xi = uniform_log_moment(d.xi_lo, d.xi_hi);

    // pass 3 (6-dim, + eps): population consumption curves
    const double lo6[6] = {d.delta_lo, d.theta_lo, d.mu_lo, d.nu_lo, d.sigma_lo, d.eps_lo};
    const double hi6[6] = {d.delta_hi, d.theta_hi, d.mu_hi, d.nu_hi, d.sigma_hi, d.eps_hi};
    std::vector<double> acc3(2 * (L + 1));
    expect_uniform_multi(
        std::span(lo6, 6), std::span(hi6, 6), order6, acc3,
        [&](std::span<const double> z, std::span<double> out) {
          const auto [lam, bet] = lambda_beta(z);
          for (std::size_t k = 0; k <= L; ++k) {
            const double c = cstar_t(T * static_cast<double>(k) / static_cast<double>(L), lam, bet);
            out[k] = c;
            out[L + 1 + k] = std::log(c);
          }
        });
    ec.assign(acc3.begin(), acc3.begin() + (L + 1));
    elogc.assign(acc3.begin() + (L + 1), acc3.end());
    int_ec = cumulative_trapezoid(ec, T / static_cast<double>(L));

    // pass 4: maximized expected utility E[v(0, xi, m_0)]. The population
    // argument of v is the time-0 wealth aggregate of this game, which is the
    // geometric mean m_0 = exp E[log xi] (the arithmetic mean fails the
    // simulator cross-check by ~10%).
    const double m0 = std::exp(e_log_xi);
    value = expect_uniform(
        std::span(lo6, 6), std::span(hi6, 6), order6, [&](std::span<const double> z) {
          const double delta = z[0], theta = z[1], eps = z[5];
          const double one_m = 1.0 - 1.0 / delta;
          const auto [lam, bet] = lambda_beta(z);
          const double f0 = std::exp(rho5(z.subspan(0, 5)) * T + int_cstar(lam, bet) / delta +
                                     theta * one_m * int_ec[L]);
          // E[xi^(1-1/delta)] over U(xi_lo, xi_hi), closed form
          const double p1 = one_m + 1.0;
          const double mom =
              (std::pow(d.xi_hi, p1) - std::pow(d.xi_lo, p1)) / (p1 * (d.xi_hi - d.xi_lo));
          return eps / one_m * mom * std::pow(m0, -theta * one_m) * f0;
        });
  }

  static double uniform_log_moment(double lo, double hi) {
    auto f = [](double x) { return x > 0.0 ? x * std::log(x) - x : 0.0; };
    return (f(hi) - f(lo)) / (hi - lo);
  }

  // rho(zeta) per type; z = (delta, theta, mu, nu, sigma)
  double rho5(std::span<const double> z) const {
    const double delta = z[0], theta = z[1], mu = z[2], nu = z[3], sigma = z[4];
    const double S = sigma * sigma + nu * nu;
    const double one_m = 1.0 - 1.0 / delta;
    const double t1 = delta / (2.0 * S) * (mu - sigma * K * theta * one_m) *
                      (mu - sigma * K * theta * one_m);
    const double t2 = 0.5 * K * K * theta * theta * one_m;
    return one_m * (t1 + t2 - theta * I1 + 0.5 * theta * I2);
  }

  double pistar5(std::span<const double> z) const {
    const double delta = z[0], theta = z[1], mu = z[2], nu = z[3], sigma = z[4];
    const double S = sigma * sigma + nu * nu;
    return delta * mu / S - theta * (delta - 1.0) * sigma / S * K;
  }

  // lambda and beta from the full type (delta, theta, mu, nu, sigma, eps)
  std::pair<double, double> lambda_beta(std::span<const double> z) const {
    const double delta = z[0], theta = z[1], eps = z[5];
    const double r = rho5(z.subspan(0, 5));
    const double beta = theta * (delta - 1.0) * e_delta_rho / (1.0 + A) - delta * r;
    const double expo = -theta * (delta - 1.0) / (1.0 + A);
    const double lambda = std::pow(eps, -delta) * std::exp(g_log * expo);
    return {lambda, beta};
  }

  double cstar_t(double t, double lambda, double beta) const {
    const double tau = T - t;
    if (std::fabs(beta) < 1e-6) return lambda / (1.0 + lambda * tau);
    const double y = std::exp(-beta * tau);
    return beta * lambda / (lambda + (beta - lambda) * y);
  }

  // int_0^T c*_s ds in closed form (u' = 1 - beta u reduces to logs)
  double int_cstar(double lambda, double beta) const {
    if (std::fabs(beta) < 1e-6) return std::log1p(lambda * T);
    const double y0 = std::exp(-beta * T);
    const double r = (lambda + (beta - lambda) * y0) / beta;
    return std::log(r) + beta * T;
  }

  // raw flow channels at grid index k given the cumulative common path
  // (E over types applied to the pi* sigma B term; types are independent of
  // the common noise)
  double lm(std::size_t k, double b_t) const {
    const double t = T * static_cast<double>(k) / static_cast<double>(L);
    return e_log_xi + e_mu_pi_half * t - int_ec[k] + e_sigma_pi * b_t;
  }
  double lgamma(std::size_t k) const { return elogc[k]; }

  // per-type quantities for oracle trajectories, from the stored constants
  struct TypeSolution {
    double pistar = 0, lambda = 0, beta = 0;
  };
  TypeSolution solve_type(const double* ty) const {
    const double z[6] = {ty[cons::kDelta], ty[cons::kTheta], ty[cons::kMu],
                         ty[cons::kNu],    ty[cons::kSigma], ty[cons::eps_index(1)]};
    TypeSolution s;
    s.pistar = pistar5(std::span(z, 5));
    auto [lam, bet] = lambda_beta(std::span(z, 6));
    s.lambda = lam;
    s.beta = bet;
    return s;
  }
};

}  // namespace sigdfp
