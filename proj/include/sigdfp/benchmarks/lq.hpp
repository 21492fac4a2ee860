#pragma once

#include <cmath>
#include <vector>

#include "sigdfp/common.hpp"
#include "sigdfp/quadrature.hpp"
#include "sigdfp/rollout.hpp"

namespace sigdfp {

// Linear-quadratic MFG with common noise:
//   dX = [a(m - X) + alpha] dt + sigma(rho dB + sqrt(1-rho^2) dW)
//   J  = E[ int alpha^2/2 - q alpha (m - X) + eps/2 (m - X)^2 dt
//           + c/2 (m_T - X_T)^2 ]      (minimized)
// with m_t = E[X_t | F^B_t] and X_0 ~ U(0,1).
struct LqParams {
  double sigma = 0.2;
  double q = 1.0;
  double eps = 1.5;
  double c = 1.0;
  double a = 1.0;
  double rho = 0.2;

  void validate() const {
    if (!(sigma > 0.0 && q > 0.0 && eps > 0.0 && c > 0.0 && a > 0.0))
      throw config_error("lq: sigma,q,eps,c,a must be positive");
    if (!(rho >= 0.0 && rho <= 1.0)) throw config_error("lq: rho must lie in [0,1]");
    if (!(q <= eps * eps)) throw config_error("lq: q <= eps^2 required for convexity");
  }
};

struct LqProblem {
  LqParams p;

  const char* name() const { return "lq"; }
  int type_dim() const { return 0; }
  int control_dim() const { return 1; }
  int flow_dim() const { return 1; }
  int net_input_dim() const { return 3; }  // (t, X, m)
  bool maximize() const { return false; }
  double map_control(int, double out) const { return out; }
  double map_control_deriv(int, double) const { return 1.0; }
  double initial_state(double x0, const double*) const { return x0; }

  // inputs standardized to unit scale: t and X are U(0,1)-like (std 0.289),
  // the conditional mean moves on the rho*sigma*B_t scale around E[X0]
  static constexpr double kTScale = 3.46;
  static constexpr double kXScale = 3.46;
  static constexpr double kMScale = 3.46;

  void net_inputs(const StepView& v, double* in, double* xfac) const {
    for (int r = 0; r < v.rows; ++r) {
      in[r * 3 + 0] = (v.t - 0.5) * kTScale;
      in[r * 3 + 1] = (v.s[r] - 0.5) * kXScale;
      in[r * 3 + 2] = (v.mu[r] - 0.5) * kMScale;
      xfac[r] = kXScale;
    }
  }

  void step(const StepView& v, double* s_next) const {
    const double sr = p.sigma * p.rho;
    const double sw = p.sigma * std::sqrt(1.0 - p.rho * p.rho);
    for (int r = 0; r < v.rows; ++r)
      s_next[r] = v.s[r] + (p.a * (v.mu[r] - v.s[r]) + v.alpha[r]) * v.dt +
                  sr * v.dB[r] + sw * v.dW[r];
  }

  void step_partials(const StepView& v, double* dF_ds, double* dF_da) const {
    for (int r = 0; r < v.rows; ++r) {
      dF_ds[r] = 1.0 - p.a * v.dt;
      dF_da[r] = v.dt;
    }
  }

  void running_cost(const StepView& v, double* f) const {
    for (int r = 0; r < v.rows; ++r) {
      const double dm = v.mu[r] - v.s[r];
      const double al = v.alpha[r];
      f[r] = 0.5 * al * al - p.q * al * dm + 0.5 * p.eps * dm * dm;
    }
  }

  void cost_partials(const StepView& v, double* df_ds, double* df_da) const {
    for (int r = 0; r < v.rows; ++r) {
      const double dm = v.mu[r] - v.s[r];
      df_ds[r] = p.q * v.alpha[r] - p.eps * dm;
      df_da[r] = v.alpha[r] - p.q * dm;
    }
  }

  void terminal_cost(int rows, const double* s, const double* mu, const double*,
                     double* g) const {
    for (int r = 0; r < rows; ++r) {
      const double dm = mu[r] - s[r];
      g[r] = 0.5 * p.c * dm * dm;
    }
  }

  void terminal_partial(int rows, const double* s, const double* mu, const double*,
                        double* dg_ds) const {
    for (int r = 0; r < rows; ++r) dg_ds[r] = -p.c * (mu[r] - s[r]);
  }
};

// Closed-form solution (Riccati): alpha_t = (q + eta_t)(m_t - X_t),
// m_t = E[X_0] + rho sigma B_t, eta solving
//   eta' = 2(a+q) eta + eta^2 - (eps - q^2),  eta_T = c.
struct LqOracle {
  LqParams p;
  double T = 1.0;
  double mu0_integral = 0.0;  // mu_0 = sigma^2 (1-rho^2)/2 * int_0^T eta
  double value = 0.0;         // E[V(0, X0 - E X0)]

  explicit LqOracle(const LqParams& params, double horizon = 1.0) : p(params), T(horizon) {
    p.validate();
    // int_0^T eta on a fine grid (eta is closed form, so refinement is free)
    const int nfine = 4000;
    std::vector<double> etas(nfine + 1);
    for (int i = 0; i <= nfine; ++i) etas[i] = eta(T * i / nfine);
    mu0_integral = 0.5 * p.sigma * p.sigma * (1.0 - p.rho * p.rho) *
                   trapezoid(etas, T / nfine);
    // X0 ~ U(0,1): E[(X0 - 1/2)^2] = 1/12
    value = 0.5 * eta(0.0) * (1.0 / 12.0) + mu0_integral;
  }

  double eta(double t) const {
    const double aq = p.a + p.q;
    const double R = aq * aq + (p.eps - p.q * p.q);
    const double sR = std::sqrt(R);
    const double dp = -aq + sR, dm = -aq - sR;
    const double e = std::exp((dp - dm) * (T - t));
    const double num = -(p.eps - p.q * p.q) * (e - 1.0) - p.c * (dp * e - dm);
    const double den = (dm * e - dp) - p.c * (e - 1.0);
    if (std::fabs(den) < 1e-14)
      throw config_error("lq oracle: Riccati denominator vanished");
    return num / den;
  }

  // m_t given the cumulative common path (E[X0] = 1/2 for U(0,1))
  double m(double b_t) const { return 0.5 + p.rho * p.sigma * b_t; }

  double control(double t, double x, double b_t) const {
    return (p.q + eta(t)) * (m(b_t) - x);
  }
};

}  // namespace sigdfp
