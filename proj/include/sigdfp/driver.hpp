#pragma once

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sigdfp/benchmarks/consumption.hpp"
#include "sigdfp/benchmarks/lq.hpp"
#include "sigdfp/benchmarks/metrics.hpp"
#include "sigdfp/benchmarks/portfolio.hpp"
#include "sigdfp/brownian.hpp"
#include "sigdfp/measure_flow.hpp"
#include "sigdfp/mlp.hpp"
#include "sigdfp/reporting.hpp"
#include "sigdfp/rollout.hpp"
#include "sigdfp/signature_stream.hpp"

namespace sigdfp {

// ---- datasets -----------------------------------------------------------

struct Dataset {
  std::size_t n = 0;
  BrownianBatch noise;
  std::vector<double> x0;     // initial draws (xi for typed games)
  std::vector<double> types;  // n x type_dim
  std::vector<double> cum_b;  // n x (L+1) x n0, cumulative common path
  PrefixSignatures sigs;
};

template <class P>
Dataset make_dataset(const P& pb, const RunConfig& cfg, std::size_t n,
                     const std::string& tag, bool with_sigs = true) {
  Dataset d;
  d.n = n;
  const std::uint64_t noise_seed = derive_seed(cfg.seed, tag + "/noise");
  d.noise = sample_brownian(n, cfg.n_steps, cfg.horizon, cfg.idio_dim, cfg.common_dim,
                            noise_seed, true);
  d.x0.resize(n);
  const int td = pb.type_dim();
  d.types.resize(n * static_cast<std::size_t>(td));
  parallel_chunks(n, [&](std::size_t c) {
    auto [lo, hi] = chunk_range(n, c);
    for (std::size_t i = lo; i < hi; ++i) {
      Rng rng(derive_seed(cfg.seed, tag + "/init", i));
      if constexpr (requires(Rng& r, double* p) { pb.sample_types(r, p); }) {
        pb.sample_types(rng, d.types.data() + i * td);
        d.x0[i] = d.types[i * td];  // xi doubles as the initial state draw
      } else {
        d.x0[i] = rng.uniform01();
      }
    }
  });
  d.cum_b = cumulative_common(d.noise);
  if (with_sigs) {
    const SigCacheKey key{noise_seed, n, cfg.n_steps,
                          static_cast<std::uint32_t>(cfg.common_dim),
                          static_cast<std::uint32_t>(cfg.depth)};
    bool loaded = false;
    std::filesystem::path cache_file;
    if (!cfg.sig_cache.empty()) {
      std::filesystem::create_directories(cfg.sig_cache);
      cache_file = std::filesystem::path(cfg.sig_cache) / key.filename();
      loaded = load_prefix_signatures(cache_file, key, d.sigs);
    }
    if (!loaded) {
      d.sigs = prefix_signatures(n, cfg.n_steps, cfg.common_dim, cfg.depth,
                                 d.noise.grid, d.noise.dB);
      if (!cfg.sig_cache.empty()) save_prefix_signatures(cache_file, key, d.sigs);
    }
  }
  return d;
}

inline PathData path_data(const Dataset& d, const std::vector<double>& mu, int q,
                          int type_dim) {
  PathData pd;
  pd.n_paths = d.n;
  pd.n_steps = d.noise.n_steps;
  pd.n0 = d.noise.n0;
  pd.dt = d.noise.dt();
  pd.grid = d.noise.grid.data();
  pd.x0 = d.x0.data();
  pd.types = d.types.empty() ? nullptr : d.types.data();
  pd.dW = d.noise.dW.data();
  pd.dB = d.noise.dB.data();
  pd.mu = mu.data();
  pd.q = q;
  pd.type_dim = type_dim;
  return pd;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

// Minibatch b consists of paths {b, b + n_batches, b + 2 n_batches, ...}.
// Because n_batches divides n/2, every antithetic pair lands in the same
// minibatch.
inline std::vector<std::size_t> minibatch_indices(std::size_t b, std::size_t n_batches,
                                                  std::size_t batch_size) {
  std::vector<std::size_t> idx(batch_size);
  for (std::size_t j = 0; j < batch_size; ++j) idx[j] = b + j * n_batches;
  return idx;
}

// ---- per-benchmark oracle glue -------------------------------------------

// LQ: raw flow channel is m_t itself.
inline std::optional<LqOracle> make_oracle(const LqProblem& pb, const RunConfig& cfg) {
  return LqOracle(pb.p, cfg.horizon);
}

inline std::vector<double> oracle_flow_table(const LqOracle& o, const Dataset& d) {
  const std::size_t steps = d.noise.n_steps + 1;
  std::vector<double> out(d.n * steps);
  for (std::size_t i = 0; i < d.n; ++i)
    for (std::size_t k = 0; k < steps; ++k)
      out[i * steps + k] = o.m(d.cum_b[i * steps + k]);
  return out;
}

inline AnalyticControl make_oracle_control(const LqOracle& o, const Dataset& d,
                                           const RunConfig& cfg) {
  (void)d;
  auto eta = std::make_shared<std::vector<double>>(cfg.n_steps + 1);
  for (std::size_t k = 0; k <= cfg.n_steps; ++k)
    (*eta)[k] = o.eta(cfg.horizon * static_cast<double>(k) / static_cast<double>(cfg.n_steps));
  const double q = o.p.q;
  return [eta, q](const std::size_t*, const StepView& v, double* alpha) {
    const double qe = q + (*eta)[v.k];
    for (int r = 0; r < v.rows; ++r) alpha[r] = qe * (v.mu[r] - v.s[r]);
  };
}

inline std::optional<PortfolioOracle> make_oracle(const PortfolioProblem& pb,
                                                  const RunConfig& cfg) {
  return PortfolioOracle(pb.dist, cfg.horizon);
}

inline std::vector<double> oracle_flow_table(const PortfolioOracle& o, const Dataset& d) {
  const std::size_t steps = d.noise.n_steps + 1;
  std::vector<double> out(d.n * steps);
  for (std::size_t i = 0; i < d.n; ++i)
    for (std::size_t k = 0; k < steps; ++k)
      out[i * steps + k] = o.m(d.noise.grid[k], d.cum_b[i * steps + k]);
  return out;
}

inline AnalyticControl make_oracle_control(const PortfolioOracle& o, const Dataset& d,
                                           const RunConfig&) {
  auto pis = std::make_shared<std::vector<double>>(d.n);
  for (std::size_t i = 0; i < d.n; ++i)
    (*pis)[i] = o.pistar(d.types.data() + i * pf::kTypeDim);
  return [pis](const std::size_t* gpaths, const StepView& v, double* alpha) {
    for (int r = 0; r < v.rows; ++r) alpha[r] = (*pis)[gpaths[r]];
  };
}

inline std::optional<ConsumptionOracle> make_oracle(const ConsumptionProblem& pb,
                                                    const RunConfig& cfg) {
  if (pb.n0 != 1) return std::nullopt;  // closed form exists only for scalar common noise
  return ConsumptionOracle(pb.dist, cfg.horizon, cfg.n_steps);
}

inline std::vector<double> oracle_flow_table(const ConsumptionOracle& o, const Dataset& d) {
  const std::size_t steps = d.noise.n_steps + 1;
  std::vector<double> out(d.n * steps * 2);
  for (std::size_t i = 0; i < d.n; ++i)
    for (std::size_t k = 0; k < steps; ++k) {
      out[(i * steps + k) * 2 + 0] = o.lm(k, d.cum_b[i * steps + k]);
      out[(i * steps + k) * 2 + 1] = o.lgamma(k);
    }
  return out;
}

inline AnalyticControl make_oracle_control(const ConsumptionOracle& o, const Dataset& d,
                                           const RunConfig&) {
  struct PathSol {
    double pi, lambda, beta;
  };
  auto sols = std::make_shared<std::vector<PathSol>>(d.n);
  const int td = cons::type_dim(1);
  for (std::size_t i = 0; i < d.n; ++i) {
    const auto s = o.solve_type(d.types.data() + i * td);
    (*sols)[i] = {s.pistar, s.lambda, s.beta};
  }
  auto oc = std::make_shared<ConsumptionOracle>(o);
  return [sols, oc](const std::size_t* gpaths, const StepView& v, double* alpha) {
    for (int r = 0; r < v.rows; ++r) {
      const auto& s = (*sols)[gpaths[r]];
      alpha[r * 2 + 0] = s.pi;
      alpha[r * 2 + 1] = std::log(oc->cstar_t(v.t, s.lambda, s.beta));
    }
  };
}

// closed-form optimal objective
inline double oracle_value(const LqOracle& o) { return o.value; }
inline double oracle_value(const PortfolioOracle& o) { return o.value; }
inline double oracle_value(const ConsumptionOracle& o) { return o.value; }

// regression targets iota from recorded state/controls
inline void target_values(const LqProblem&, double state, const double*, double* y) {
  y[0] = state;
}
inline void target_values(const PortfolioProblem&, double state, const double*, double* y) {
  y[0] = state;
}
inline void target_values(const ConsumptionProblem&, double state, const double* controls,
                          double* y) {
  y[0] = state;         // log X
  y[1] = controls[1];   // log c
}

inline std::vector<FlowTransform> flow_transforms(const LqProblem&) {
  return {FlowTransform::None};
}
inline std::vector<FlowTransform> flow_transforms(const PortfolioProblem&) {
  return {FlowTransform::None};
}
inline std::vector<FlowTransform> flow_transforms(const ConsumptionProblem&) {
  return {FlowTransform::Exp, FlowTransform::Exp};
}

inline std::vector<std::vector<int>> net_widths(const LqProblem& pb) {
  return {{pb.net_input_dim(), 64, 64, 1}};
}
inline std::vector<std::vector<int>> net_widths(const PortfolioProblem& pb) {
  return {{pb.net_input_dim(), 64, 32, 32, 16, 1}};
}
inline std::vector<std::vector<int>> net_widths(const ConsumptionProblem& pb) {
  return {{pb.net_input_dim(), 64, 64, 64, 1}, {pb.net_input_dim(), 64, 64, 64, 1}};
}

// ---- run artifacts --------------------------------------------------------

struct RunArtifacts {
  RunConfig cfg;
  std::vector<RoundRecord> rounds;
  std::vector<std::pair<std::string, double>> metrics;
  bool has_oracle = false;
  double oracle_value = 0.0;
  double j_val_mean_last10 = 0.0;
  double val_se = 0.0;
  int flow_channels = 1;
  double wall_seconds = 0.0;
  double train_seconds = 0.0;
  long peak_rss = 0;
  std::string abort_reason;  // empty on success
};

namespace detail {

// natural-units flow series (exp channels exponentiated): n x (L+1)
inline std::vector<double> natural_flow_series(const std::vector<double>& raw,
                                               std::size_t n, std::size_t steps, int q,
                                               int channel, FlowTransform tr) {
  std::vector<double> out(n * steps);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < steps; ++k) {
      const double v = raw[(i * steps + k) * q + channel];
      out[i * steps + k] = tr == FlowTransform::Exp ? fast_exp(v) : v;
    }
  return out;
}

inline std::vector<double> column(const std::vector<double>& rows, std::size_t n,
                                  std::size_t steps, int m, int col, bool exp_it) {
  std::vector<double> out(n * steps);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < steps; ++k) {
      const double v = rows[(i * steps + k) * m + col];
      out[i * steps + k] = exp_it ? fast_exp(v) : v;
    }
  return out;
}

inline std::vector<double> exp_all(std::vector<double> v) {
  for (auto& x : v) x = fast_exp(x);
  return v;
}

}  // namespace detail

// Final test-split evaluation: relative L2 errors against the closed-form
// solution plus sampled trajectories for plotting.
template <class P, class Oracle>
void evaluate_on_test(const P& pb, const Oracle& oracle,
                      const std::vector<ControlNet>& nets,
                      const MeasureFlowFunctional& flow, const RunConfig& cfg,
                      std::vector<std::pair<std::string, double>>& metrics,
                      std::vector<TrajectoryRow>& traj) {
  Dataset test = make_dataset(pb, cfg, cfg.n_paths, "test");
  const std::size_t L = cfg.n_steps, steps = L + 1, n = test.n;
  const int q = pb.flow_dim(), m = pb.control_dim();
  const double dt = cfg.horizon / static_cast<double>(L);
  const auto idx = all_indices(n);

  const std::vector<double> mu_hat = flow_table(flow, test.sigs);
  const std::vector<double> mu_star = oracle_flow_table(oracle, test);

  std::vector<const ControlNet*> net_ptrs;
  for (const auto& net : nets) net_ptrs.push_back(&net);

  RolloutIO lio;
  std::vector<double> l_states, l_controls;
  lio.record_full = true;
  lio.states = &l_states;
  lio.controls = &l_controls;
  rollout_forward(pb, net_ptrs, nullptr, path_data(test, mu_hat, q, pb.type_dim()), idx, lio);

  RolloutIO oio;
  std::vector<double> o_states, o_controls;
  oio.record_full = true;
  oio.states = &o_states;
  oio.controls = &o_controls;
  const AnalyticControl oc = make_oracle_control(oracle, test, cfg);
  rollout_forward(pb, {}, &oc, path_data(test, mu_star, q, pb.type_dim()), idx, oio);

  const auto tr = flow_transforms(pb);
  const bool log_state = std::is_same_v<P, ConsumptionProblem>;
  const auto x_hat = log_state ? detail::exp_all(l_states) : l_states;
  const auto x_star = log_state ? detail::exp_all(o_states) : o_states;
  const auto m_hat = detail::natural_flow_series(mu_hat, n, steps, q, 0, tr[0]);
  const auto m_star = detail::natural_flow_series(mu_star, n, steps, q, 0, tr[0]);

  if constexpr (std::is_same_v<P, ConsumptionProblem>) {
    const auto pi_hat = detail::column(l_controls, n, steps, m, 0, false);
    const auto pi_star = detail::column(o_controls, n, steps, m, 0, false);
    const auto c_hat = detail::column(l_controls, n, steps, m, 1, true);
    const auto c_star = detail::column(o_controls, n, steps, m, 1, true);
    const auto g_hat = detail::natural_flow_series(mu_hat, n, steps, q, 1, tr[1]);
    const auto g_star = detail::natural_flow_series(mu_star, n, steps, q, 1, tr[1]);
    metrics.emplace_back("pi", relative_l2(pi_star, pi_hat, n, steps, dt));
    metrics.emplace_back("c", relative_l2(c_star, c_hat, n, steps, dt));
    metrics.emplace_back("m", relative_l2(m_star, m_hat, n, steps, dt));
    metrics.emplace_back("Gamma", relative_l2(g_star, g_hat, n, steps, dt));
    for (int p = 0; p < cfg.traj_samples && p < static_cast<int>(n); ++p)
      for (std::size_t k = 0; k < steps; ++k) {
        const double t = test.noise.grid[k];
        traj.push_back({p, t, "learned", "X", x_hat[p * steps + k]});
        traj.push_back({p, t, "oracle", "X", x_star[p * steps + k]});
        traj.push_back({p, t, "learned", "m", m_hat[p * steps + k]});
        traj.push_back({p, t, "oracle", "m", m_star[p * steps + k]});
        traj.push_back({p, t, "learned", "pi", pi_hat[p * steps + k]});
        traj.push_back({p, t, "oracle", "pi", pi_star[p * steps + k]});
        traj.push_back({p, t, "learned", "c", c_hat[p * steps + k]});
        traj.push_back({p, t, "oracle", "c", c_star[p * steps + k]});
        traj.push_back({p, t, "learned", "Gamma", g_hat[p * steps + k]});
        traj.push_back({p, t, "oracle", "Gamma", g_star[p * steps + k]});
      }
  } else {
    const char* control_name = std::is_same_v<P, LqProblem> ? "alpha" : "pi";
    const auto a_hat = detail::column(l_controls, n, steps, m, 0, false);
    const auto a_star = detail::column(o_controls, n, steps, m, 0, false);
    metrics.emplace_back("X", relative_l2(x_star, x_hat, n, steps, dt));
    metrics.emplace_back(control_name, relative_l2(a_star, a_hat, n, steps, dt));
    metrics.emplace_back("m", relative_l2(m_star, m_hat, n, steps, dt));
    for (int p = 0; p < cfg.traj_samples && p < static_cast<int>(n); ++p)
      for (std::size_t k = 0; k < steps; ++k) {
        const double t = test.noise.grid[k];
        traj.push_back({p, t, "learned", "X", x_hat[p * steps + k]});
        traj.push_back({p, t, "oracle", "X", x_star[p * steps + k]});
        traj.push_back({p, t, "learned", "m", m_hat[p * steps + k]});
        traj.push_back({p, t, "oracle", "m", m_star[p * steps + k]});
        traj.push_back({p, t, "learned", control_name, a_hat[p * steps + k]});
        traj.push_back({p, t, "oracle", control_name, a_star[p * steps + k]});
      }
  }
}

// ---- checkpoint -----------------------------------------------------------

inline void save_checkpoint(const std::filesystem::path& file, const RunConfig& cfg,
                            const std::vector<ControlNet>& nets,
                            const MeasureFlowFunctional& flow, long rounds_done) {
  std::FILE* f = std::fopen(file.string().c_str(), "wb");
  if (!f) throw config_error("cannot write checkpoint: " + file.string());
  std::fwrite("SDFPCKP1", 1, 8, f);
  // config as a key=value blob
  std::string blob;
  for (const auto& [k, v] : config_to_map(cfg)) blob += k + "=" + v + "\n";
  const std::uint64_t bs = blob.size();
  std::fwrite(&bs, 8, 1, f);
  std::fwrite(blob.data(), 1, blob.size(), f);
  std::fwrite(&rounds_done, sizeof(long), 1, f);
  const std::uint32_t nn = static_cast<std::uint32_t>(nets.size());
  std::fwrite(&nn, 4, 1, f);
  for (const auto& net : nets) write_net(f, net);
  const std::uint64_t p = flow.sig_dim;
  const std::uint32_t q = flow.n_outputs;
  std::fwrite(&p, 8, 1, f);
  std::fwrite(&q, 4, 1, f);
  for (int c = 0; c < flow.n_outputs; ++c) {
    const std::uint32_t t = flow.transforms[c] == FlowTransform::Exp ? 1 : 0;
    std::fwrite(&t, 4, 1, f);
  }
  std::fwrite(&flow.ridge, 8, 1, f);
  std::fwrite(flow.coeffs.data(), sizeof(double), flow.coeffs.size(), f);
  std::fclose(f);
}

struct Checkpoint {
  RunConfig cfg;
  std::vector<ControlNet> nets;
  MeasureFlowFunctional flow;
  long rounds_done = 0;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::FILE* f = std::fopen(file.string().c_str(), "rb");
  if (!f) throw config_error("cannot open checkpoint: " + file.string());
  Checkpoint ck;
  char magic[8];
  bool ok = std::fread(magic, 1, 8, f) == 8 && std::memcmp(magic, "SDFPCKP1", 8) == 0;
  std::uint64_t bs = 0;
  ok = ok && std::fread(&bs, 8, 1, f) == 1;
  std::string blob(bs, '\0');
  ok = ok && std::fread(blob.data(), 1, bs, f) == bs;
  ok = ok && std::fread(&ck.rounds_done, sizeof(long), 1, f) == 1;
  std::uint32_t nn = 0;
  ok = ok && std::fread(&nn, 4, 1, f) == 1;
  if (!ok) {
    std::fclose(f);
    throw config_error("corrupt checkpoint: " + file.string());
  }
  ck.nets.resize(nn);
  for (auto& net : ck.nets) ok = ok && read_net(f, net);
  std::uint64_t p = 0;
  std::uint32_t q = 0;
  ok = ok && std::fread(&p, 8, 1, f) == 1 && std::fread(&q, 4, 1, f) == 1;
  if (ok) {
    ck.flow.sig_dim = p;
    ck.flow.n_outputs = static_cast<int>(q);
    ck.flow.transforms.resize(q);
    for (std::uint32_t c = 0; c < q; ++c) {
      std::uint32_t t = 0;
      ok = ok && std::fread(&t, 4, 1, f) == 1;
      ck.flow.transforms[c] = t ? FlowTransform::Exp : FlowTransform::None;
    }
    ok = ok && std::fread(&ck.flow.ridge, 8, 1, f) == 1;
    ck.flow.coeffs.resize(p * q);
    ok = ok && std::fread(ck.flow.coeffs.data(), sizeof(double), ck.flow.coeffs.size(), f) ==
                   ck.flow.coeffs.size();
  }
  std::fclose(f);
  if (!ok) throw config_error("corrupt checkpoint: " + file.string());
  std::map<std::string, std::string> m;
  std::stringstream ss(blob);
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) m[line.substr(0, eq)] = line.substr(eq + 1);
  }
  ck.cfg = config_from_map(m);
  return ck;
}

// ---- the Sig-DFP loop ------------------------------------------------------

template <class P>
RunArtifacts run_sig_dfp_t(const P& pb, const RunConfig& cfg, bool emit_outputs = true) {
  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();
  set_threads(cfg.threads);

  RunArtifacts art;
  art.cfg = cfg;
  const int q = pb.flow_dim();
  const int m = pb.control_dim();
  art.flow_channels = q;

  std::optional<RunOutputs> out;
  if (emit_outputs) out.emplace(cfg.outdir);

  Dataset train = make_dataset(pb, cfg, cfg.n_paths, "train");
  Dataset val = make_dataset(pb, cfg, cfg.validation_paths(), "val");
  const std::size_t L = cfg.n_steps;
  const std::size_t p = train.sigs.sig_dim;

  const auto oracle = make_oracle(pb, cfg);
  art.has_oracle = oracle.has_value();
  if (oracle) art.oracle_value = oracle_value(*oracle);
  std::vector<double> val_oracle_flow;  // natural-units oracle series per channel
  if (oracle) val_oracle_flow = oracle_flow_table(*oracle, val);

  std::vector<ControlNet> nets;
  {
    double last_scale = 1.0;
    if constexpr (requires { pb.last_layer_init_scale(); })
      last_scale = pb.last_layer_init_scale();
    int j = 0;
    for (const auto& widths : net_widths(pb))
      nets.push_back(make_net(widths, derive_seed(cfg.seed, "net", j++),
                              parse_activation(cfg.activation), last_scale));
  }
  std::vector<ControlNet*> net_mut;
  std::vector<const ControlNet*> net_const;
  for (auto& n : nets) {
    net_mut.push_back(&n);
    net_const.push_back(&n);
  }

  MeasureFlowFunctional lbar =
      random_flow(p, q, flow_transforms(pb), derive_seed(cfg.seed, "flow"),
                  cfg.flow_init_scale);
  std::vector<double> mu_train = flow_table(lbar, train.sigs);
  std::vector<double> mu_val = flow_table(lbar, val.sigs);

  const auto stamps = cfg.stamp_indices();
  const auto val_idx = all_indices(val.n);
  const auto train_idx = all_indices(train.n);
  const SgdSchedule sched = cfg.schedule();

  // regression design rows are fixed across rounds: signatures at the stamps
  std::vector<double> design(stamps.size() * train.n * p);
  for (std::size_t si = 0; si < stamps.size(); ++si)
    for (std::size_t i = 0; i < train.n; ++i)
      std::memcpy(design.data() + (si * train.n + i) * p, train.sigs.at(i, stamps[si]),
                  p * sizeof(double));

  std::vector<NetGrad> grads;
  for (auto& n : nets) grads.emplace_back(n);

  std::vector<double> stamp_states, stamp_controls, targets(stamps.size() * train.n * q);
  std::vector<double> val_costs;
  bool warned_rank = false;
  const auto t_train0 = clock::now();

  try {
    for (long r = 0; r < cfg.rounds; ++r) {
      const auto t0 = clock::now();
      RoundRecord rec;
      rec.round = r;
      rec.lr = sched.lr(r);

      PathData train_pd = path_data(train, mu_train, q, pb.type_dim());
      for (std::size_t b = 0; b < cfg.n_batches; ++b) {
        const auto sel = minibatch_indices(b, cfg.n_batches, cfg.batch_size);
        for (auto& g : grads) g.zero();
        const double jb = grad_rollout(pb, net_mut, grads, train_pd, sel, r);
        rec.jb.push_back(jb);
        for (int j = 0; j < m; ++j)
          sgd_step(nets[j], grads[j], rec.lr, 1.0 / static_cast<double>(sel.size()));
      }

      // validation objective under the flow the round was trained against
      {
        RolloutIO vio;
        vio.per_path_cost = &val_costs;
        vio.round = r;
        rec.j_val = rollout_forward(pb, net_const, nullptr,
                                    path_data(val, mu_val, q, pb.type_dim()), val_idx, vio);
      }

      // re-simulate all training paths, fit the fresh functional, average
      {
        RolloutIO sio;
        sio.stamps = stamps;
        sio.stamp_states = &stamp_states;
        sio.stamp_controls = &stamp_controls;
        sio.round = r;
        rollout_forward(pb, net_const, nullptr, train_pd, train_idx, sio);
        for (std::size_t i = 0; i < train.n; ++i)
          for (std::size_t si = 0; si < stamps.size(); ++si)
            target_values(pb, stamp_states[i * stamps.size() + si],
                          stamp_controls.data() + (i * stamps.size() + si) * m,
                          targets.data() + (si * train.n + i) * q);
        bool rank_warn = false;
        MeasureFlowFunctional fresh =
            fit_functional(stamps.size() * train.n, p, q, design.data(), targets.data(),
                           cfg.ridge, flow_transforms(pb), &rank_warn);
        // expected whenever depth >= 3 meets three regression stamps: the
        // pure-time words are collinear on three distinct times
        if (rank_warn && !warned_rank) {
          std::fprintf(stderr,
                       "sigdfp: rank-deficient normal matrix from round %ld on, "
                       "using minimum-norm solutions\n", r);
          warned_rank = true;
        }
        lbar = average_flow(lbar, fresh, r + 1, cfg.warm_start);
        mu_train = flow_table(lbar, train.sigs);
        mu_val = flow_table(lbar, val.sigs);
      }

      // distance of the updated flow to the closed-form equilibrium flow
      if (oracle) {
        const std::size_t steps = L + 1;
        const auto tr = flow_transforms(pb);
        for (int c = 0; c < q; ++c) {
          const auto est = detail::natural_flow_series(mu_val, val.n, steps, q, c, tr[c]);
          const auto ref =
              detail::natural_flow_series(val_oracle_flow, val.n, steps, q, c, tr[c]);
          rec.flow_gap.push_back(relative_l2(ref, est, val.n, steps, train.noise.dt()));
        }
      }

      rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
      art.rounds.push_back(std::move(rec));
    }
  } catch (const numeric_error& e) {
    art.abort_reason = e.what();
    if (out) {
      out->write_rounds(art.rounds, q);
      out->write_manifest(cfg, {{"status", "aborted"}, {"abort_reason", art.abort_reason}});
    }
    throw;
  }
  art.train_seconds = std::chrono::duration<double>(clock::now() - t_train0).count();

  // final validation statistics for convergence checks
  if (!art.rounds.empty()) {
    double s = 0.0;
    long cnt = 0;
    for (long r = std::max<long>(0, cfg.rounds - 10); r < cfg.rounds; ++r, ++cnt)
      s += art.rounds[r].j_val;
    art.j_val_mean_last10 = s / static_cast<double>(cnt);
    art.val_se = mc_standard_error(val_costs, true);
  }

  std::vector<TrajectoryRow> traj;
  if (cfg.eval_metrics && oracle)
    evaluate_on_test(pb, *oracle, nets, lbar, cfg, art.metrics, traj);

  art.wall_seconds = std::chrono::duration<double>(clock::now() - t_start).count();
  art.peak_rss = peak_rss_kb();

  if (out) {
    out->write_rounds(art.rounds, q);
    out->write_metrics(art.metrics);
    if (cfg.eval_metrics) out->write_trajectories(traj);
    save_checkpoint(out->dir / "checkpoint.bin", cfg, nets, lbar, cfg.rounds);
    {
      std::FILE* f = std::fopen((out->dir / "flow.csv").string().c_str(), "w");
      if (f) {
        export_flow_csv(f, lbar, train.sigs.dim);
        std::fclose(f);
      }
    }
    nlohmann::json extra;
    extra["status"] = "ok";
    extra["has_oracle"] = art.has_oracle;
    if (art.has_oracle) extra["oracle_value"] = art.oracle_value;
    extra["j_val_mean_last10"] = art.j_val_mean_last10;
    extra["val_se"] = art.val_se;
    extra["wall_seconds"] = art.wall_seconds;
    extra["train_seconds"] = art.train_seconds;
    extra["peak_rss_kb"] = art.peak_rss;
    nlohmann::json jm = nlohmann::json::object();
    for (auto& [k, v] : art.metrics) jm[k] = v;
    extra["metrics"] = jm;
    out->write_manifest(cfg, extra);
  }
  return art;
}

inline RunArtifacts run_sig_dfp(const RunConfig& cfg, bool emit_outputs = true) {
  switch (cfg.problem) {
    case ProblemKind::Lq: {
      LqProblem pb{cfg.lq};
      return run_sig_dfp_t(pb, cfg, emit_outputs);
    }
    case ProblemKind::Portfolio: {
      PortfolioProblem pb{cfg.pf};
      return run_sig_dfp_t(pb, cfg, emit_outputs);
    }
    case ProblemKind::Consumption: {
      ConsumptionProblem pb{cfg.cons, cfg.common_dim};
      return run_sig_dfp_t(pb, cfg, emit_outputs);
    }
  }
  throw config_error("unreachable problem kind");
}

// ---- nested-loop baseline --------------------------------------------------

// For each outer common path B^j, N_inner idiosyncratic paths are simulated
// and the conditional flow is the empirical inner average, at O(N^2 L) cost.
// The training schedule mirrors the Sig-DFP loop with the signature
// regression replaced by per-outer-path averages.
template <class P>
RunArtifacts run_nested_t(const P& pb, const RunConfig& cfg, std::size_t n_inner,
                          std::size_t n_outer, bool emit_outputs) {
  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();
  set_threads(cfg.threads);

  RunArtifacts art;
  art.cfg = cfg;
  const int q = pb.flow_dim();
  const int m = pb.control_dim();
  const int td = pb.type_dim();
  art.flow_channels = q;
  const std::size_t L = cfg.n_steps;
  const std::size_t n_tot = n_inner * n_outer;
  const std::size_t steps = L + 1;

  std::optional<RunOutputs> out;
  if (emit_outputs) out.emplace(cfg.outdir);

  // W reused across outer paths, B reused across inner paths
  BrownianBatch w_src = sample_brownian(n_inner, L, cfg.horizon, 1, 1,
                                        derive_seed(cfg.seed, "nested/w"),
                                        n_inner % 2 == 0);
  BrownianBatch b_src = sample_brownian(n_outer, L, cfg.horizon, 1, cfg.common_dim,
                                        derive_seed(cfg.seed, "nested/b"),
                                        n_outer % 2 == 0);
  Dataset data;
  data.n = n_tot;
  data.noise.n_paths = n_tot;
  data.noise.n_steps = L;
  data.noise.n = 1;
  data.noise.n0 = cfg.common_dim;
  data.noise.horizon = cfg.horizon;
  data.noise.grid = b_src.grid;
  data.noise.dW.resize(n_tot * L);
  data.noise.dB.resize(n_tot * L * cfg.common_dim);
  for (std::size_t j = 0; j < n_outer; ++j)
    for (std::size_t i = 0; i < n_inner; ++i) {
      const std::size_t g = j * n_inner + i;
      std::memcpy(data.noise.dW.data() + g * L, w_src.dW.data() + i * L,
                  L * sizeof(double));
      std::memcpy(data.noise.dB.data() + g * L * cfg.common_dim,
                  b_src.dB.data() + j * L * cfg.common_dim,
                  L * cfg.common_dim * sizeof(double));
    }
  data.x0.resize(n_tot);
  data.types.resize(n_tot * static_cast<std::size_t>(td));
  for (std::size_t g = 0; g < n_tot; ++g) {
    Rng rng(derive_seed(cfg.seed, "nested/init", g));
    if constexpr (requires(Rng& r, double* ptr) { pb.sample_types(r, ptr); }) {
      pb.sample_types(rng, data.types.data() + g * td);
      data.x0[g] = data.types[g * td];
    } else {
      data.x0[g] = rng.uniform01();
    }
  }

  // flow values indexed by outer path
  std::vector<std::size_t> mu_index(n_tot);
  for (std::size_t g = 0; g < n_tot; ++g) mu_index[g] = g / n_inner;
  std::vector<double> flow_vals(n_outer * steps * q);
  {
    Rng rng(derive_seed(cfg.seed, "flow"));
    for (auto& v : flow_vals) v = cfg.flow_init_scale * rng.normal();
  }

  std::vector<ControlNet> nets;
  {
    double last_scale = 1.0;
    if constexpr (requires { pb.last_layer_init_scale(); })
      last_scale = pb.last_layer_init_scale();
    int j = 0;
    for (const auto& widths : net_widths(pb))
      nets.push_back(make_net(widths, derive_seed(cfg.seed, "net", j++),
                              parse_activation(cfg.activation), last_scale));
  }
  std::vector<ControlNet*> net_mut;
  std::vector<const ControlNet*> net_const;
  for (auto& n : nets) {
    net_mut.push_back(&n);
    net_const.push_back(&n);
  }
  std::vector<NetGrad> grads;
  for (auto& n : nets) grads.emplace_back(n);

  const std::size_t n_batches = std::min<std::size_t>(cfg.n_batches, n_tot);
  const std::size_t batch = n_tot / n_batches;
  const auto all_idx = all_indices(n_tot);
  const SgdSchedule sched = cfg.schedule();

  // oracle flow on the outer paths, for the convergence log
  const auto oracle = make_oracle(pb, cfg);
  art.has_oracle = oracle.has_value();
  if (oracle) art.oracle_value = oracle_value(*oracle);
  std::vector<double> oracle_vals;
  if (oracle) {
    Dataset outer_view;
    outer_view.n = n_outer;
    outer_view.noise = b_src;
    outer_view.cum_b = cumulative_common(b_src);
    outer_view.types = data.types;  // only sizes matter for the flow table
    oracle_vals = oracle_flow_table(*oracle, outer_view);
  }

  std::vector<double> states, controls;
  auto pd = [&]() {
    PathData v = path_data(data, flow_vals, q, td);
    v.mu_index = mu_index.data();
    return v;
  };

  try {
    for (long r = 0; r < cfg.rounds; ++r) {
      const auto t0 = clock::now();
      RoundRecord rec;
      rec.round = r;
      rec.lr = sched.lr(r);
      PathData train_pd = pd();
      for (std::size_t b = 0; b < n_batches; ++b) {
        const auto sel = minibatch_indices(b, n_batches, batch);
        for (auto& g : grads) g.zero();
        const double jb = grad_rollout(pb, net_mut, grads, train_pd, sel, r);
        rec.jb.push_back(jb);
        for (int j = 0; j < m; ++j)
          sgd_step(nets[j], grads[j], rec.lr, 1.0 / static_cast<double>(sel.size()));
      }
      // re-simulate everything and average inside each outer path
      RolloutIO sio;
      sio.record_full = true;
      sio.states = &states;
      sio.controls = &controls;
      sio.round = r;
      rec.j_val = rollout_forward(pb, net_const, nullptr, train_pd, all_idx, sio);
      std::vector<double> fresh(n_outer * steps * q, 0.0);
      std::vector<double> y(q);
      for (std::size_t j = 0; j < n_outer; ++j)
        for (std::size_t i = 0; i < n_inner; ++i) {
          const std::size_t g = j * n_inner + i;
          for (std::size_t k = 0; k < steps; ++k) {
            target_values(pb, states[g * steps + k], controls.data() + (g * steps + k) * m,
                          y.data());
            for (int c = 0; c < q; ++c)
              fresh[(j * steps + k) * q + c] += y[c] / static_cast<double>(n_inner);
          }
        }
      const long n_eff = r + 1 - cfg.warm_start;
      if (n_eff <= 1) {
        flow_vals = fresh;
      } else {
        const double wp = (static_cast<double>(n_eff) - 1.0) / static_cast<double>(n_eff);
        const double wf = 1.0 / static_cast<double>(n_eff);
        for (std::size_t i = 0; i < flow_vals.size(); ++i)
          flow_vals[i] = wp * flow_vals[i] + wf * fresh[i];
      }
      if (oracle) {
        const auto tr = flow_transforms(pb);
        for (int c = 0; c < q; ++c) {
          const auto est = detail::natural_flow_series(flow_vals, n_outer, steps, q, c, tr[c]);
          const auto ref = detail::natural_flow_series(oracle_vals, n_outer, steps, q, c, tr[c]);
          rec.flow_gap.push_back(relative_l2(ref, est, n_outer, steps, cfg.horizon / L));
        }
      }
      rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
      art.rounds.push_back(std::move(rec));
    }
  } catch (const numeric_error& e) {
    art.abort_reason = e.what();
    if (out) {
      out->write_rounds(art.rounds, q);
      out->write_manifest(cfg, {{"status", "aborted"}, {"abort_reason", art.abort_reason}});
    }
    throw;
  }

  art.wall_seconds = std::chrono::duration<double>(clock::now() - t_start).count();
  art.peak_rss = peak_rss_kb();
  if (out) {
    out->write_rounds(art.rounds, q);
    nlohmann::json extra;
    extra["status"] = "ok";
    extra["mode"] = "nested";
    extra["n_inner"] = n_inner;
    extra["n_outer"] = n_outer;
    extra["wall_seconds"] = art.wall_seconds;
    extra["peak_rss_kb"] = art.peak_rss;
    extra["bytes_states"] = states.size() * sizeof(double);
    extra["bytes_noise"] = (data.noise.dW.size() + data.noise.dB.size()) * sizeof(double);
    out->write_manifest(cfg, extra);
  }
  return art;
}

inline RunArtifacts run_nested_baseline(const RunConfig& cfg, std::size_t n_inner,
                                        std::size_t n_outer, bool emit_outputs = true) {
  if (n_inner * n_outer * (cfg.n_steps + 1) * 16 > (6ull << 30))
    throw config_error("nested baseline would exceed the memory budget at inner=" +
                       std::to_string(n_inner) + " outer=" + std::to_string(n_outer));
  switch (cfg.problem) {
    case ProblemKind::Lq: {
      LqProblem pb{cfg.lq};
      return run_nested_t(pb, cfg, n_inner, n_outer, emit_outputs);
    }
    case ProblemKind::Portfolio: {
      PortfolioProblem pb{cfg.pf};
      return run_nested_t(pb, cfg, n_inner, n_outer, emit_outputs);
    }
    case ProblemKind::Consumption: {
      ConsumptionProblem pb{cfg.cons, cfg.common_dim};
      return run_nested_t(pb, cfg, n_inner, n_outer, emit_outputs);
    }
  }
  throw config_error("unreachable problem kind");
}

// ---- eval (checkpoint -> metrics on fresh test data) -----------------------

inline RunArtifacts run_eval(const std::filesystem::path& checkpoint_file,
                             const std::string& outdir) {
  Checkpoint ck = load_checkpoint(checkpoint_file);
  RunConfig cfg = ck.cfg;
  if (!outdir.empty()) cfg.outdir = outdir;
  RunArtifacts art;
  art.cfg = cfg;
  RunOutputs out(cfg.outdir);
  std::vector<TrajectoryRow> traj;
  switch (cfg.problem) {
    case ProblemKind::Lq: {
      LqProblem pb{cfg.lq};
      evaluate_on_test(pb, *make_oracle(pb, cfg), ck.nets, ck.flow, cfg, art.metrics, traj);
      break;
    }
    case ProblemKind::Portfolio: {
      PortfolioProblem pb{cfg.pf};
      evaluate_on_test(pb, *make_oracle(pb, cfg), ck.nets, ck.flow, cfg, art.metrics, traj);
      break;
    }
    case ProblemKind::Consumption: {
      ConsumptionProblem pb{cfg.cons, cfg.common_dim};
      const auto oracle = make_oracle(pb, cfg);
      if (!oracle)
        throw config_error("eval: no closed-form benchmark for common_dim > 1");
      evaluate_on_test(pb, *oracle, ck.nets, ck.flow, cfg, art.metrics, traj);
      break;
    }
  }
  out.write_metrics(art.metrics);
  out.write_trajectories(traj);
  nlohmann::json extra;
  extra["status"] = "ok";
  extra["mode"] = "eval";
  nlohmann::json jm = nlohmann::json::object();
  for (auto& [k, v] : art.metrics) jm[k] = v;
  extra["metrics"] = jm;
  out.write_manifest(cfg, extra);
  return art;
}

}  // namespace sigdfp
