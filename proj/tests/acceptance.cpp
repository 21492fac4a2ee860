// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failures. Long-running training criteria write their artifacts under the
// --out directory so results can be inspected afterwards.
//
//   acceptance [--out DIR] [--only 1,2,...]
//
// criterion 8 reuses the training runs of criteria 4-6 and pulls them in
// automatically when selected on its own.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sigdfp/driver.hpp"

using namespace sigdfp;

namespace {

struct Harness {
  int failures = 0;
  std::string outdir = "acceptance_runs";

  void report(int criterion, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion,
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
};

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

// ---- criterion 1: signature correctness -----------------------------------

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

void criterion_1(Harness& h) {
  const double t0 = now_seconds();
  bool ok = true;
  std::string why;
  Rng rng(101);

  // Chen identity / associativity at 1e-12
  for (int rep = 0; rep < 20 && ok; ++rep) {
    const auto a = random_group_like(rng, 2, 4, 2);
    const auto b = random_group_like(rng, 2, 4, 2);
    const auto c = random_group_like(rng, 2, 4, 2);
    if (max_abs_diff(tensor_mul(tensor_mul(a, b), c), tensor_mul(a, tensor_mul(b, c))) >
        1e-12) {
      ok = false;
      why = "Chen associativity above 1e-12";
    }
  }
  // unit laws, exact
  for (int rep = 0; rep < 5 && ok; ++rep) {
    const auto a = random_group_like(rng, 3, 3, 2);
    const auto id = identity_tensor(3, 3);
    const auto l = tensor_mul(id, a);
    const auto r = tensor_mul(a, id);
    for (std::size_t i = 0; i < a.coeffs.size(); ++i)
      if (l.coeffs[i] != a.coeffs[i] || r.coeffs[i] != a.coeffs[i]) {
        ok = false;
        why = "unit law not exact";
      }
  }
  // inverse law at 1e-12
  for (int rep = 0; rep < 20 && ok; ++rep) {
    std::vector<double> seg = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
    std::vector<double> neg = {-seg[0], -seg[1]};
    if (max_abs_diff(tensor_mul(segment_exp(seg, 4), segment_exp(neg, 4)),
                     identity_tensor(2, 4)) > 1e-12) {
      ok = false;
      why = "group inverse above 1e-12";
    }
  }
  // factorial decay bound on random piecewise-linear paths
  for (int rep = 0; rep < 10 && ok; ++rep) {
    TruncatedTensor sig = identity_tensor(2, 4);
    double variation = 0.0;
    std::vector<double> seg(2);
    for (int s = 0; s < 12; ++s) {
      for (auto& v : seg) v = rng.uniform(-0.5, 0.5);
      variation += std::sqrt(seg[0] * seg[0] + seg[1] * seg[1]);
      chen_append(sig, segment_exp(seg, 4));
    }
    double fact = 1.0;
    for (int level = 1; level <= 4; ++level) {
      fact *= level;
      const double* lv = sig.level(level);
      for (std::size_t i = 0; i < level_size(2, level); ++i)
        if (std::fabs(lv[i]) > std::pow(variation, level) / fact + 1e-12) {
          ok = false;
          why = "factorial decay bound violated";
        }
    }
  }
  // prefix vs one-shot at 1e-10, plus Chen consistency along the stream
  {
    const auto batch = sample_brownian(64, 100, 1.0, 1, 1, 777, true);
    const auto sigs = prefix_signatures(64, 100, 1, 3, batch.grid, batch.dB);
    for (std::size_t i = 0; i < 64 && ok; i += 7) {
      TruncatedTensor one = identity_tensor(2, 3);
      for (std::size_t k = 0; k < 100; ++k) {
        const double seg[2] = {batch.grid[k + 1] - batch.grid[k],
                               batch.dB[i * 100 + k]};
        chen_append(one, segment_exp(std::span(seg, 2), 3));
      }
      for (std::size_t j = 0; j < sigs.sig_dim; ++j)
        if (std::fabs(one.coeffs[j] - sigs.at(i, 100)[j]) > 1e-10) {
          ok = false;
          why = "prefix vs one-shot above 1e-10";
        }
      TruncatedTensor mid = identity_tensor(2, 3);
      for (std::size_t k = 30; k < 70; ++k) {
        const double seg[2] = {batch.grid[k + 1] - batch.grid[k],
                               batch.dB[i * 100 + k]};
        chen_append(mid, segment_exp(std::span(seg, 2), 3));
      }
      TruncatedTensor pre(2, 3);
      std::memcpy(pre.coeffs.data(), sigs.at(i, 30), sigs.sig_dim * sizeof(double));
      const auto full = tensor_mul(pre, mid);
      for (std::size_t j = 0; j < sigs.sig_dim; ++j)
        if (std::fabs(full.coeffs[j] - sigs.at(i, 70)[j]) > 1e-10) {
          ok = false;
          why = "stream Chen consistency above 1e-10";
        }
    }
  }
  const double dt = now_seconds() - t0;
  ok = ok && dt < 10.0;
  h.report(1, ok, fmt("signature suite (Chen, units, inverse, decay, prefix) %s, %.1fs",
                      ok ? "all within tolerance" : why.c_str(), dt));
}

// ---- criterion 2: gradients vs finite differences --------------------------

template <class P>
double fd_worst(const P& pb, std::vector<ControlNet>& nets, const PathData& pd,
                std::span<const std::size_t> sel) {
  std::vector<ControlNet*> mut;
  std::vector<const ControlNet*> cst;
  for (auto& n : nets) {
    mut.push_back(&n);
    cst.push_back(&n);
  }
  std::vector<NetGrad> grads;
  for (auto& n : nets) grads.emplace_back(n);
  grad_rollout(pb, mut, grads, pd, sel);
  const double sense = pb.maximize() ? -1.0 : 1.0;
  const double scale = static_cast<double>(sel.size());
  const double hstep = 1e-5;
  double worst = 0.0;
  auto eval = [&] { return rollout_forward(pb, cst, nullptr, pd, sel) * sense; };
  for (std::size_t j = 0; j < nets.size(); ++j)
    for (std::size_t l = 0; l < nets[j].layers.size(); ++l) {
      auto& layer = nets[j].layers[l];
      for (std::size_t i = 0; i < layer.w.size(); ++i) {
        const double keep = layer.w[i];
        layer.w[i] = keep + hstep;
        const double up = eval();
        layer.w[i] = keep - hstep;
        const double dn = eval();
        layer.w[i] = keep;
        const double fd = (up - dn) / (2.0 * hstep) * scale;
        const double ad = grads[j].layers[l].dw[i];
        // floor keeps finite-difference roundoff (~1e-11 absolute at this h)
        // from swamping the ratio where the true gradient vanishes
        worst = std::max(worst,
                         std::fabs(fd - ad) / std::max({1e-6, std::fabs(fd), std::fabs(ad)}));
      }
      for (std::size_t i = 0; i < layer.b.size(); ++i) {
        const double keep = layer.b[i];
        layer.b[i] = keep + hstep;
        const double up = eval();
        layer.b[i] = keep - hstep;
        const double dn = eval();
        layer.b[i] = keep;
        const double fd = (up - dn) / (2.0 * hstep) * scale;
        const double ad = grads[j].layers[l].db[i];
        worst = std::max(worst,
                         std::fabs(fd - ad) / std::max({1e-6, std::fabs(fd), std::fabs(ad)}));
      }
    }
  return worst;
}

struct TinyData {
  BrownianBatch noise;
  std::vector<double> x0, types, mu;
};

template <class P>
TinyData tiny_data(const P& pb, std::size_t n, std::size_t L, std::uint64_t seed,
                   double mu_fill) {
  TinyData d;
  d.noise = sample_brownian(n, L, 1.0, 1, 1, seed, true);
  d.x0.resize(n);
  d.types.resize(n * pb.type_dim());
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, "init", i));
    if constexpr (requires(Rng& r, double* p) { pb.sample_types(r, p); }) {
      pb.sample_types(rng, d.types.data() + i * pb.type_dim());
      d.x0[i] = d.types[i * pb.type_dim()];
    } else {
      d.x0[i] = rng.uniform01();
    }
  }
  d.mu.assign(n * (L + 1) * pb.flow_dim(), mu_fill);
  return d;
}

template <class P>
void fill_pd(const P& pb, TinyData& d, std::size_t n, std::size_t L, PathData& pd) {
  pd = PathData{};
  pd.n_paths = n;
  pd.n_steps = L;
  pd.n0 = 1;
  pd.dt = 1.0 / static_cast<double>(L);
  pd.grid = d.noise.grid.data();
  pd.x0 = d.x0.data();
  pd.types = d.types.empty() ? nullptr : d.types.data();
  pd.dW = d.noise.dW.data();
  pd.dB = d.noise.dB.data();
  pd.mu = d.mu.data();
  pd.q = pb.flow_dim();
  pd.type_dim = pb.type_dim();
}

Activation shipped_activation(ProblemKind kind) {
  RunConfig cfg;
  cfg.problem = kind;
  finalize_config(cfg);
  return parse_activation(cfg.activation);
}

void criterion_2(Harness& h) {
  const double t0 = now_seconds();
  std::vector<std::size_t> sel = {0, 1, 2, 3};
  double w_lq, w_pf, w_cons;
  {
    LqProblem pb;
    PathData pd;
    auto d = tiny_data(pb, 4, 5, 11, 0.4);
    fill_pd(pb, d, 4, 5, pd);
    std::vector<ControlNet> nets;
    nets.push_back(make_net({3, 64, 64, 1}, 5, shipped_activation(ProblemKind::Lq)));
    w_lq = fd_worst(pb, nets, pd, sel);
  }
  {
    PortfolioProblem pb;
    PathData pd;
    auto d = tiny_data(pb, 4, 5, 13, 0.5);
    fill_pd(pb, d, 4, 5, pd);
    std::vector<ControlNet> nets;
    nets.push_back(make_net({pb.net_input_dim(), 64, 32, 32, 16, 1}, 6,
                            shipped_activation(ProblemKind::Portfolio)));
    w_pf = fd_worst(pb, nets, pd, sel);
  }
  {
    ConsumptionProblem pb;
    PathData pd;
    auto d = tiny_data(pb, 4, 5, 17, 0.0);
    fill_pd(pb, d, 4, 5, pd);
    std::vector<ControlNet> nets;
    const Activation act = shipped_activation(ProblemKind::Consumption);
    nets.push_back(make_net({pb.net_input_dim(), 64, 64, 64, 1}, 7, act));
    nets.push_back(make_net({pb.net_input_dim(), 64, 64, 64, 1}, 8, act));
    w_cons = fd_worst(pb, nets, pd, sel);
  }
  const double dt = now_seconds() - t0;
  const bool ok = w_lq < 1e-4 && w_pf < 1e-4 && w_cons < 1e-4 && dt < 60.0;
  h.report(2, ok,
           fmt("reverse-mode vs central differences, worst relative error: "
               "lq %.2e, portfolio %.2e, consumption %.2e (tol 1e-4), %.1fs",
               w_lq, w_pf, w_cons, dt));
}

// ---- criterion 3: oracle cross-validation ----------------------------------

template <class P, class O>
void oracle_xv(const P& pb, const O& oracle, const RunConfig& cfg, double* j,
               double* se) {
  Dataset data = make_dataset(pb, cfg, cfg.n_paths, "oracle_xv", false);
  const auto mu = oracle_flow_table(oracle, data);
  auto pd = path_data(data, mu, pb.flow_dim(), pb.type_dim());
  const auto ctl = make_oracle_control(oracle, data, cfg);
  RolloutIO io;
  std::vector<double> costs;
  io.per_path_cost = &costs;
  *j = rollout_forward(pb, {}, &ctl, pd, all_indices(cfg.n_paths), io);
  *se = mc_standard_error(costs, true);
}

void criterion_3(Harness& h) {
  const double t0 = now_seconds();
  RunConfig cfg;
  cfg.n_paths = 1ull << 15;
  cfg.n_steps = 100;
  cfg.depth = 1;
  cfg.rounds = 1;
  cfg.n_batches = 16;
  finalize_config(cfg);
  std::string detail;
  bool ok = true;
  auto check = [&](const char* name, double j, double v, double se) {
    const double z = std::fabs(j - v) / se;
    detail += fmt("%s |J-V|/se=%.2f ", name, z);
    ok = ok && z <= 3.0;
  };
  {
    LqProblem pb;
    const auto o = make_oracle(pb, cfg);
    double j, se;
    oracle_xv(pb, *o, cfg, &j, &se);
    check("lq", j, o->value, se);
  }
  {
    PortfolioProblem pb;
    const auto o = make_oracle(pb, cfg);
    double j, se;
    oracle_xv(pb, *o, cfg, &j, &se);
    check("portfolio", j, o->value, se);
  }
  {
    ConsumptionProblem pb;
    const auto o = make_oracle(pb, cfg);
    double j, se;
    oracle_xv(pb, *o, cfg, &j, &se);
    check("consumption", j, o->value, se);
  }
  const double dt = now_seconds() - t0;
  ok = ok && dt < 300.0;
  h.report(3, ok,
           fmt("closed-form controls reproduce closed-form values at N=2^15: %s(tol 3 se), %.0fs",
               detail.c_str(), dt));
}

// ---- criteria 4-6: desk-scale reproductions --------------------------------

RunConfig desk_config(ProblemKind kind, const std::string& outdir) {
  RunConfig cfg;
  cfg.problem = kind;
  cfg.n_paths = 1ull << 13;
  cfg.n_steps = 100;
  cfg.seed = 20210614;
  cfg.outdir = outdir;
  switch (kind) {
    case ProblemKind::Lq:
      cfg.rounds = 300;
      break;
    case ProblemKind::Portfolio:
      cfg.rounds = 300;
      break;
    case ProblemKind::Consumption:
      cfg.rounds = 400;
      cfg.depth = 4;
      break;
  }
  finalize_config(cfg);
  return cfg;
}

double metric(const RunArtifacts& art, const std::string& name) {
  for (const auto& [k, v] : art.metrics)
    if (k == name) return v;
  return std::nan("");
}

void check_thresholds(Harness& h, int criterion, const RunArtifacts& art,
                      const std::vector<std::pair<std::string, double>>& limits,
                      double minutes_limit) {
  bool ok = true;
  std::string detail;
  for (const auto& [name, lim] : limits) {
    const double v = metric(art, name);
    detail += fmt("%s=%.4f(<=%.3g) ", name.c_str(), v, lim);
    ok = ok && std::isfinite(v) && v <= lim;
  }
  const double minutes = art.wall_seconds / 60.0;
  detail += fmt("wall=%.1fmin(<%g)", minutes, minutes_limit);
  ok = ok && minutes < minutes_limit;
  h.report(criterion, ok, detail);
}

// ---- criterion 6 extras: depth sweep ---------------------------------------

struct SweepPoint {
  int depth;
  double pi_err, c_err;
};

std::vector<SweepPoint> depth_sweep(const std::string& outdir) {
  std::vector<SweepPoint> out;
  for (int depth : {1, 2, 3, 4}) {
    RunConfig cfg;
    cfg.problem = ProblemKind::Consumption;
    cfg.n_paths = 1ull << 11;
    cfg.n_steps = 100;
    cfg.rounds = 400;
    cfg.depth = depth;
    cfg.seed = 20210614;
    cfg.outdir = outdir + "/sweep_m" + std::to_string(depth);
    cfg.traj_samples = 0;
    finalize_config(cfg);
    const auto art = run_sig_dfp(cfg);
    out.push_back({depth, metric(art, "pi"), metric(art, "c")});
    std::printf("  depth sweep M=%d: pi=%.4f c=%.4f m=%.4f Gamma=%.4f (%.1f min)\n",
                depth, metric(art, "pi"), metric(art, "c"), metric(art, "m"),
                metric(art, "Gamma"), art.wall_seconds / 60.0);
    std::fflush(stdout);
  }
  return out;
}

// ---- criterion 7: complexity scaling ----------------------------------------

double loglog_slope(const std::vector<std::pair<double, double>>& pts) {
  const double n = static_cast<double>(pts.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : pts) {
    const double lx = std::log2(x), ly = std::log2(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

void criterion_7(Harness& h, const std::string& outdir) {
  const double t0 = now_seconds();
  auto scaling_cfg = [&](std::size_t n, const std::string& tag) {
    RunConfig cfg;
    cfg.problem = ProblemKind::Consumption;
    cfg.n_paths = n;
    cfg.n_steps = 100;
    cfg.rounds = 20;
    cfg.depth = 4;
    cfg.seed = 7;
    cfg.eval_metrics = false;
    cfg.n_batches = std::min<std::size_t>(16, std::max<std::size_t>(1, n / 2));
    cfg.val_paths = std::max<std::size_t>(2, n / 2);
    cfg.outdir = outdir + "/" + tag;
    cfg.traj_samples = 0;
    finalize_config(cfg);
    return cfg;
  };
  std::vector<std::pair<double, double>> nested_pts, sig_pts;
  for (std::size_t n : {16u, 64u, 256u}) {
    const auto cfg = scaling_cfg(n, "nested_" + std::to_string(n));
    const auto art = run_nested_baseline(cfg, n, n, true);
    nested_pts.push_back({static_cast<double>(n), art.wall_seconds});
    std::printf("  nested (%zu,%zu): %.2fs rss=%ldKB\n", n, n, art.wall_seconds,
                art.peak_rss);
    std::fflush(stdout);
  }
  for (std::size_t n : {16u, 64u, 256u, 4096u}) {
    const auto cfg = scaling_cfg(n, "sigdfp_" + std::to_string(n));
    const auto art = run_sig_dfp(cfg, true);
    sig_pts.push_back({static_cast<double>(n), art.wall_seconds});
    std::printf("  sig-dfp (%zu,%zu): %.2fs rss=%ldKB\n", n, n, art.wall_seconds,
                art.peak_rss);
    std::fflush(stdout);
  }
  const double nested_slope = loglog_slope(nested_pts);
  const double sig_slope = loglog_slope(sig_pts);
  const double dt = now_seconds() - t0;
  const bool ok = nested_slope >= 1.6 && nested_slope <= 2.4 && sig_slope >= 0.8 &&
                  sig_slope <= 1.3 && dt < 2700.0;
  h.report(7, ok,
           fmt("wall-clock scaling slopes: nested %.2f (in [1.6,2.4]), sig-dfp %.2f "
               "(in [0.8,1.3]), %.0fs total",
               nested_slope, sig_slope, dt));
}

// ---- criterion 8: fictitious-play convergence -------------------------------

bool trailing_window_nonincreasing(const RunArtifacts& art, int channel,
                                   std::string& detail) {
  const long ws = art.cfg.warm_start;
  const long window = 20;
  std::vector<double> w;
  for (long n = ws; n < static_cast<long>(art.rounds.size()); ++n) {
    if (n - ws + 1 >= window) {
      double s = 0.0;
      for (long m = n - window + 1; m <= n; ++m)
        s += art.rounds[m].flow_gap[channel];
      w.push_back(s / window);
    }
  }
  if (w.size() < 2) {
    detail += "window-too-short ";
    return false;
  }
  const double tol = 0.10 * w.front();
  double run_min = w.front();
  double worst = 0.0;
  for (double v : w) {
    worst = std::max(worst, v - run_min);
    run_min = std::min(run_min, v);
  }
  detail += fmt("ch%d max-rise=%.4f (tol %.4f) ", channel, worst, tol);
  return worst <= tol;
}

void criterion_8(Harness& h, const std::map<std::string, RunArtifacts>& runs) {
  bool ok = true;
  std::string detail;
  for (const auto& [name, art] : runs) {
    detail += name + ": ";
    for (int c = 0; c < art.flow_channels; ++c)
      ok = trailing_window_nonincreasing(art, c, detail) && ok;
    const double z = std::fabs(art.j_val_mean_last10 - art.oracle_value) / art.val_se;
    detail += fmt("|Jval-V|/se=%.2f ", z);
    ok = ok && z <= 3.0;
  }
  h.report(8, ok, "fictitious-play convergence: " + detail);
}

}  // namespace

int main(int argc, char** argv) {
  Harness h;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--out") == 0 && i + 1 < argc) h.outdir = argv[++i];
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      std::string s = argv[++i];
      for (std::size_t p = 0; p < s.size();) {
        const auto comma = s.find(',', p);
        only.insert(std::atoi(s.substr(p, comma == std::string::npos ? s.size() - p
                                                                     : comma - p)
                                  .c_str()));
        if (comma == std::string::npos) break;
        p = comma + 1;
      }
    }
  }
  auto wanted = [&](int c) { return only.empty() || only.count(c) > 0; };
  const bool need_runs = wanted(8);

  if (wanted(1)) criterion_1(h);
  if (wanted(2)) criterion_2(h);
  if (wanted(3)) criterion_3(h);

  std::map<std::string, RunArtifacts> runs;
  if (wanted(4) || need_runs) {
    const auto cfg = desk_config(ProblemKind::Lq, h.outdir + "/lq");
    runs.emplace("lq", run_sig_dfp(cfg));
    if (wanted(4))
      check_thresholds(h, 4, runs.at("lq"),
                       {{"X", 0.01}, {"alpha", 0.015}, {"m", 0.12}}, 30.0);
  }
  if (wanted(5) || need_runs) {
    const auto cfg = desk_config(ProblemKind::Portfolio, h.outdir + "/portfolio");
    runs.emplace("portfolio", run_sig_dfp(cfg));
    if (wanted(5))
      check_thresholds(h, 5, runs.at("portfolio"),
                       {{"X", 0.14}, {"pi", 0.08}, {"m", 0.17}}, 30.0);
  }
  if (wanted(6) || need_runs) {
    const auto cfg = desk_config(ProblemKind::Consumption, h.outdir + "/consumption");
    runs.emplace("consumption", run_sig_dfp(cfg));
    if (wanted(6)) {
      check_thresholds(
          h, 6, runs.at("consumption"),
          {{"pi", 0.25}, {"c", 0.13}, {"m", 0.06}, {"Gamma", 0.03}}, 60.0);
      const auto sweep = depth_sweep(h.outdir + "/consumption");
      bool ok = sweep[1].pi_err < sweep[0].pi_err && sweep[1].c_err < sweep[0].c_err;
      auto spread_ok = [&](auto get) {
        double lo = 1e300, hi = 0.0;
        for (int i = 1; i < 4; ++i) {
          lo = std::min(lo, get(sweep[i]));
          hi = std::max(hi, get(sweep[i]));
        }
        return hi - lo <= std::max(0.25 * lo, 0.02);
      };
      ok = ok && spread_ok([](const SweepPoint& s) { return s.pi_err; });
      ok = ok && spread_ok([](const SweepPoint& s) { return s.c_err; });
      h.report(6, ok,
               fmt("depth sweep: M=1 (pi %.3f, c %.3f) -> M=2 (%.3f, %.3f) strictly "
                   "better; M in {2,3,4} plateau within max(25%%, 0.02)",
                   sweep[0].pi_err, sweep[0].c_err, sweep[1].pi_err, sweep[1].c_err));
    }
  }
  if (wanted(7)) criterion_7(h, h.outdir + "/scaling");
  if (wanted(8)) criterion_8(h, runs);

  std::printf("%d criterion failure(s)\n", h.failures);
  return h.failures;
}
