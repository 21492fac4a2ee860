#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sigdfp/benchmarks/consumption.hpp"
#include "sigdfp/benchmarks/lq.hpp"
#include "sigdfp/benchmarks/portfolio.hpp"
#include "sigdfp/common.hpp"
#include "sigdfp/mlp.hpp"

namespace sigdfp {

enum class ProblemKind { Lq, Portfolio, Consumption };

inline const char* problem_name(ProblemKind k) {
  switch (k) {
    case ProblemKind::Lq: return "lq";
    case ProblemKind::Portfolio: return "portfolio";
    case ProblemKind::Consumption: return "consumption";
  }
  return "?";
}

inline ProblemKind parse_problem(const std::string& s) {
  if (s == "lq") return ProblemKind::Lq;
  if (s == "portfolio") return ProblemKind::Portfolio;
  if (s == "consumption") return ProblemKind::Consumption;
  throw config_error("unknown problem: " + s + " (expected lq|portfolio|consumption)");
}

// Full run configuration. Defaults are the paper's training setups for the
// selected benchmark and are filled in by finalize_config.
struct RunConfig {
  ProblemKind problem = ProblemKind::Lq;
  std::size_t n_paths = 1ull << 15;  // training size; test uses the same, validation half
  std::size_t n_steps = 100;
  double horizon = 1.0;
  int idio_dim = 1;
  int common_dim = 1;
  int depth = -1;            // -1: problem default
  long rounds = -1;          // -1: problem default
  std::size_t batch_size = 0;  // 0: n_paths / n_batches
  std::size_t n_batches = 0;   // 0: problem default
  double lr = 0.1;
  double lr_factor = 0.0;              // 0: problem default
  std::vector<long> lr_boundaries;     // empty: problem default
  bool lr_boundaries_set = false;
  long warm_start = -1;      // -1: problem default (lq: rounds/2, else 0)
  std::uint64_t seed = 1;
  double ridge = 0.0;
  std::vector<double> stamps = {0.0, 0.5, 1.0};
  std::string outdir = "runs/out";
  int threads = 0;
  std::string sig_cache;
  double flow_init_scale = 1e-2;
  std::string activation;  // empty: per-problem default
  int traj_samples = 3;
  bool eval_metrics = true;
  std::size_t val_paths = 0;  // 0: n_paths / 2
  LqParams lq;
  PortfolioDist pf;
  ConsumptionDist cons;

  SgdSchedule schedule() const {
    SgdSchedule s;
    s.base = lr;
    s.factor = lr_factor;
    s.boundaries = lr_boundaries;
    return s;
  }
  std::size_t validation_paths() const { return val_paths ? val_paths : n_paths / 2; }
  std::vector<std::size_t> stamp_indices() const {
    std::vector<std::size_t> out;
    for (double f : stamps)
      out.push_back(static_cast<std::size_t>(std::lround(f * static_cast<double>(n_steps))));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
};

namespace detail {

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': cannot parse '" + v + "' as number");
  }
}

inline long to_long(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  const long l = static_cast<long>(d);
  if (static_cast<double>(l) != d)
    throw config_error("config key '" + key + "': expected integer, got '" + v + "'");
  return l;
}

inline std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(to_double(key, tok));
  return out;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// key=value serialization used by both the config file format and the run
// manifest. Every key is always present so a manifest reproduces its config
// bit-exactly.
inline std::map<std::string, std::string> config_to_map(const RunConfig& c) {
  std::map<std::string, std::string> m;
  m["problem"] = problem_name(c.problem);
  m["n_paths"] = std::to_string(c.n_paths);
  m["n_steps"] = std::to_string(c.n_steps);
  m["horizon"] = detail::fmt(c.horizon);
  m["idio_dim"] = std::to_string(c.idio_dim);
  m["common_dim"] = std::to_string(c.common_dim);
  m["depth"] = std::to_string(c.depth);
  m["rounds"] = std::to_string(c.rounds);
  m["batch_size"] = std::to_string(c.batch_size);
  m["n_batches"] = std::to_string(c.n_batches);
  m["lr"] = detail::fmt(c.lr);
  m["lr_factor"] = detail::fmt(c.lr_factor);
  {
    std::string s;
    for (long b : c.lr_boundaries) s += (s.empty() ? "" : ",") + std::to_string(b);
    m["lr_boundaries"] = s;
  }
  m["warm_start"] = std::to_string(c.warm_start);
  m["seed"] = std::to_string(c.seed);
  m["ridge"] = detail::fmt(c.ridge);
  {
    std::string s;
    for (double f : c.stamps) s += (s.empty() ? "" : ",") + detail::fmt(f);
    m["stamps"] = s;
  }
  m["outdir"] = c.outdir;
  m["threads"] = std::to_string(c.threads);
  m["sig_cache"] = c.sig_cache;
  m["flow_init_scale"] = detail::fmt(c.flow_init_scale);
  m["activation"] = c.activation;
  m["traj_samples"] = std::to_string(c.traj_samples);
  m["eval_metrics"] = c.eval_metrics ? "1" : "0";
  m["val_paths"] = std::to_string(c.val_paths);
  m["lq.sigma"] = detail::fmt(c.lq.sigma);
  m["lq.q"] = detail::fmt(c.lq.q);
  m["lq.eps"] = detail::fmt(c.lq.eps);
  m["lq.c"] = detail::fmt(c.lq.c);
  m["lq.a"] = detail::fmt(c.lq.a);
  m["lq.rho"] = detail::fmt(c.lq.rho);
  auto range = [&](const std::string& pre, double lo, double hi) {
    m[pre + "_lo"] = detail::fmt(lo);
    m[pre + "_hi"] = detail::fmt(hi);
  };
  range("pf.xi", c.pf.xi_lo, c.pf.xi_hi);
  range("pf.delta", c.pf.delta_lo, c.pf.delta_hi);
  range("pf.theta", c.pf.theta_lo, c.pf.theta_hi);
  range("pf.mu", c.pf.mu_lo, c.pf.mu_hi);
  range("pf.nu", c.pf.nu_lo, c.pf.nu_hi);
  range("pf.sigma", c.pf.sigma_lo, c.pf.sigma_hi);
  range("cons.xi", c.cons.xi_lo, c.cons.xi_hi);
  range("cons.delta", c.cons.delta_lo, c.cons.delta_hi);
  range("cons.theta", c.cons.theta_lo, c.cons.theta_hi);
  range("cons.mu", c.cons.mu_lo, c.cons.mu_hi);
  range("cons.nu", c.cons.nu_lo, c.cons.nu_hi);
  range("cons.sigma", c.cons.sigma_lo, c.cons.sigma_hi);
  range("cons.eps", c.cons.eps_lo, c.cons.eps_hi);
  return m;
}

// Applies one key. Unknown keys are config errors that name the key.
inline void apply_config_key(RunConfig& c, const std::string& key, const std::string& val) {
  using detail::to_double;
  using detail::to_long;
  auto range = [&](const std::string& pre, double& lo, double& hi) -> bool {
    if (key == pre + "_lo") { lo = to_double(key, val); return true; }
    if (key == pre + "_hi") { hi = to_double(key, val); return true; }
    return false;
  };
  if (key == "problem") c.problem = parse_problem(val);
  else if (key == "n_paths") c.n_paths = static_cast<std::size_t>(to_long(key, val));
  else if (key == "n_steps") c.n_steps = static_cast<std::size_t>(to_long(key, val));
  else if (key == "horizon") c.horizon = to_double(key, val);
  else if (key == "idio_dim") c.idio_dim = static_cast<int>(to_long(key, val));
  else if (key == "common_dim") c.common_dim = static_cast<int>(to_long(key, val));
  else if (key == "depth") c.depth = static_cast<int>(to_long(key, val));
  else if (key == "rounds") c.rounds = to_long(key, val);
  else if (key == "batch_size") c.batch_size = static_cast<std::size_t>(to_long(key, val));
  else if (key == "n_batches") c.n_batches = static_cast<std::size_t>(to_long(key, val));
  else if (key == "lr") c.lr = to_double(key, val);
  else if (key == "lr_factor") c.lr_factor = to_double(key, val);
  else if (key == "lr_boundaries") {
    c.lr_boundaries.clear();
    for (double d : detail::to_list(key, val)) c.lr_boundaries.push_back(static_cast<long>(d));
    c.lr_boundaries_set = true;
  } else if (key == "warm_start") c.warm_start = to_long(key, val);
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_long(key, val));
  else if (key == "ridge") c.ridge = to_double(key, val);
  else if (key == "stamps") c.stamps = detail::to_list(key, val);
  else if (key == "outdir") c.outdir = val;
  else if (key == "threads") c.threads = static_cast<int>(to_long(key, val));
  else if (key == "sig_cache") c.sig_cache = val;
  else if (key == "flow_init_scale") c.flow_init_scale = to_double(key, val);
  else if (key == "activation") c.activation = val;
  else if (key == "traj_samples") c.traj_samples = static_cast<int>(to_long(key, val));
  else if (key == "eval_metrics") c.eval_metrics = to_long(key, val) != 0;
  else if (key == "val_paths") c.val_paths = static_cast<std::size_t>(to_long(key, val));
  else if (key == "lq.sigma") c.lq.sigma = to_double(key, val);
  else if (key == "lq.q") c.lq.q = to_double(key, val);
  else if (key == "lq.eps") c.lq.eps = to_double(key, val);
  else if (key == "lq.c") c.lq.c = to_double(key, val);
  else if (key == "lq.a") c.lq.a = to_double(key, val);
  else if (key == "lq.rho") c.lq.rho = to_double(key, val);
  else if (range("pf.xi", c.pf.xi_lo, c.pf.xi_hi)) {}
  else if (range("pf.delta", c.pf.delta_lo, c.pf.delta_hi)) {}
  else if (range("pf.theta", c.pf.theta_lo, c.pf.theta_hi)) {}
  else if (range("pf.mu", c.pf.mu_lo, c.pf.mu_hi)) {}
  else if (range("pf.nu", c.pf.nu_lo, c.pf.nu_hi)) {}
  else if (range("pf.sigma", c.pf.sigma_lo, c.pf.sigma_hi)) {}
  else if (range("cons.xi", c.cons.xi_lo, c.cons.xi_hi)) {}
  else if (range("cons.delta", c.cons.delta_lo, c.cons.delta_hi)) {}
  else if (range("cons.theta", c.cons.theta_lo, c.cons.theta_hi)) {}
  else if (range("cons.mu", c.cons.mu_lo, c.cons.mu_hi)) {}
  else if (range("cons.nu", c.cons.nu_lo, c.cons.nu_hi)) {}
  else if (range("cons.sigma", c.cons.sigma_lo, c.cons.sigma_hi)) {}
  else if (range("cons.eps", c.cons.eps_lo, c.cons.eps_hi)) {}
  else throw config_error("unknown config key: " + key);
}

// Fills problem-dependent defaults (paper training setups) and validates.
inline void finalize_config(RunConfig& c) {
  switch (c.problem) {
    case ProblemKind::Lq:
      if (c.activation.empty()) c.activation = "relu";
      if (c.depth < 0) c.depth = 2;
      if (c.rounds < 0) c.rounds = 500;
      if (c.batch_size == 0) c.batch_size = std::min<std::size_t>(1024, c.n_paths);
      if (c.lr_factor == 0.0) c.lr_factor = 10.0;
      // lr 0.1 for the first half of the rounds, then 0.01
      if (!c.lr_boundaries_set) c.lr_boundaries = {c.rounds / 2};
      if (c.warm_start < 0) c.warm_start = c.rounds / 2;
      break;
    case ProblemKind::Portfolio:
      if (c.activation.empty()) c.activation = "tanh";
      if (c.depth < 0) c.depth = 2;
      if (c.rounds < 0) c.rounds = 500;
      if (c.batch_size == 0) c.batch_size = std::min<std::size_t>(1024, c.n_paths);
      if (c.lr_factor == 0.0) c.lr_factor = 5.0;
      if (!c.lr_boundaries_set)
        for (long b = 200; b < c.rounds; b += 200) c.lr_boundaries.push_back(b);
      if (c.warm_start < 0) c.warm_start = 0;
      break;
    case ProblemKind::Consumption:
      if (c.activation.empty()) c.activation = "tanh";
      if (c.depth < 0) c.depth = 4;
      if (c.rounds < 0) c.rounds = 600;
      if (c.batch_size == 0) c.batch_size = std::min<std::size_t>(2048, c.n_paths);
      if (c.lr_factor == 0.0) c.lr_factor = 5.0;
      if (!c.lr_boundaries_set)
        for (long b = 200; b < c.rounds; b += 200) c.lr_boundaries.push_back(b);
      if (c.warm_start < 0) c.warm_start = 0;
      break;
  }
  if (c.n_batches == 0) c.n_batches = std::max<std::size_t>(1, c.n_paths / c.batch_size);
  if (c.rounds < 1) throw config_error("rounds must be >= 1");
  if (c.n_steps < 2) throw config_error("n_steps must be >= 2");
  if (c.batch_size * c.n_batches > c.n_paths)
    throw config_error("batch_size * n_batches exceeds n_paths (" +
                       std::to_string(c.batch_size) + " * " + std::to_string(c.n_batches) +
                       " > " + std::to_string(c.n_paths) + ")");
  if (c.n_paths % 2 != 0) throw config_error("n_paths must be even (antithetic pairing)");
  if (c.n_paths % c.n_batches != 0)
    throw config_error("n_batches must divide n_paths");
  if ((c.n_paths / 2) % c.n_batches != 0)
    throw config_error("n_batches must divide n_paths/2 so minibatches stay antithetic");
  if (c.idio_dim != 1) throw config_error("idio_dim must be 1 for the shipped benchmarks");
  if (c.common_dim < 1) throw config_error("common_dim must be >= 1");
  if (c.common_dim > 1 && c.problem != ProblemKind::Consumption)
    throw config_error("common_dim > 1 is only supported for problem=consumption");
  if (c.depth < 1) throw config_error("depth must be >= 1");
  if (c.ridge < 0.0) throw config_error("ridge must be >= 0");
  if (c.stamps.empty()) throw config_error("stamps must not be empty");
  for (double f : c.stamps)
    if (f < 0.0 || f > 1.0) throw config_error("stamps must lie in [0,1]");
  parse_activation(c.activation);  // validates the name
  if (c.problem == ProblemKind::Lq) c.lq.validate();
  if (const char* env = std::getenv("SIGDFP_OUTDIR")) c.outdir = env;
}

inline RunConfig config_from_map(const std::map<std::string, std::string>& m) {
  RunConfig c;
  // problem first so defaults resolve against it
  if (auto it = m.find("problem"); it != m.end()) c.problem = parse_problem(it->second);
  for (const auto& [k, v] : m)
    if (k != "problem") apply_config_key(c, k, v);
  finalize_config(c);
  return c;
}

// Flat key=value file; '#' comments and [section] headers are allowed,
// sections carry no meaning beyond grouping.
inline RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path.string());
  std::map<std::string, std::string> m;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw config_error("config line is not key=value: " + line);
    m[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return config_from_map(m);
}

// ---- run outputs --------------------------------------------------------

struct RoundRecord {
  long round = 0;
  double lr = 0.0;
  std::vector<double> jb;          // training objective per minibatch
  double j_val = 0.0;              // validation objective, natural sense
  std::vector<double> flow_gap;    // relative L2 vs oracle flow per channel
  double seconds = 0.0;
};

struct TrajectoryRow {
  int path;
  double t;
  const char* kind;    // learned | oracle
  const char* series;  // X, m, alpha, pi, c, Gamma
  double value;
};

// peak RSS when the kernel reports it, current RSS otherwise
inline long peak_rss_kb() {
  std::ifstream in("/proc/self/status");
  std::string line;
  long rss = -1;
  while (std::getline(in, line)) {
    if (line.rfind("VmHWM:", 0) == 0) return std::atol(line.c_str() + 6);
    if (line.rfind("VmRSS:", 0) == 0) rss = std::atol(line.c_str() + 6);
  }
  return rss;
}

struct RunOutputs {
  std::filesystem::path dir;

  explicit RunOutputs(const std::filesystem::path& d) : dir(d) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream probe(dir / ".write_probe");
    if (!probe) throw config_error("output directory is not writable: " + dir.string());
    probe.close();
    std::filesystem::remove(dir / ".write_probe", ec);
  }

  void write_rounds(const std::vector<RoundRecord>& rounds, int flow_channels) const {
    std::ofstream out(dir / "rounds.csv");
    out << "round,lr,jb_mean,jb_first,jb_last,j_val";
    for (int c = 0; c < flow_channels; ++c) out << ",flow_gap_" << c;
    out << ",seconds\n";
    char buf[64];
    auto put = [&](double v) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      out << buf;
    };
    for (const auto& r : rounds) {
      double mean = 0.0;
      for (double j : r.jb) mean += j;
      if (!r.jb.empty()) mean /= static_cast<double>(r.jb.size());
      out << r.round;
      put(r.lr);
      put(mean);
      put(r.jb.empty() ? 0.0 : r.jb.front());
      put(r.jb.empty() ? 0.0 : r.jb.back());
      put(r.j_val);
      for (int c = 0; c < flow_channels; ++c)
        put(c < static_cast<int>(r.flow_gap.size()) ? r.flow_gap[c] : 0.0);
      put(r.seconds);
      out << "\n";
    }
    std::ofstream mb(dir / "minibatches.csv");
    mb << "round,batch,jb\n";
    for (const auto& r : rounds)
      for (std::size_t b = 0; b < r.jb.size(); ++b) {
        std::snprintf(buf, sizeof(buf), "%ld,%zu,%.17g\n", r.round, b, r.jb[b]);
        mb << buf;
      }
  }

  void write_metrics(const std::vector<std::pair<std::string, double>>& metrics) const {
    std::ofstream out(dir / "metrics.csv");
    out << "name,value\n";
    char buf[96];
    for (const auto& [k, v] : metrics) {
      std::snprintf(buf, sizeof(buf), "%s,%.17g\n", k.c_str(), v);
      out << buf;
    }
  }

  void write_trajectories(const std::vector<TrajectoryRow>& rows) const {
    std::ofstream out(dir / "trajectories.csv");
    out << "path,t,kind,series,value\n";
    char buf[128];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof(buf), "%d,%.17g,%s,%s,%.17g\n", r.path, r.t, r.kind,
                    r.series, r.value);
      out << buf;
    }
  }

  void write_manifest(const RunConfig& cfg, const nlohmann::json& extra) const {
    nlohmann::json j;
    j["tool"] = "sigdfp";
    j["version"] = kVersion;
    j["config"] = config_to_map(cfg);
    j["decisions"] = {
        {"activation", cfg.activation},
        {"weight_init", "uniform(+-sqrt(6/(fan_in+fan_out))), zero biases"},
        {"flow_init", "gaussian coefficients, scale " + detail::fmt(cfg.flow_init_scale)},
        {"minibatch_assignment", "strided by n_batches, fixed across rounds (antithetic-complete)"},
        {"regression_rows", "equal weight at every stamp, t=0 rows retained (they pin the intercept)"},
        {"portfolio_utility_plot", "report |E v| when plotting maximized utility"},
    };
    for (auto& [k, v] : extra.items()) j[k] = v;
    std::ofstream out(dir / "manifest.json");
    out << j.dump(2) << "\n";
  }
};

// Reads back a manifest's embedded config (round-trip contract).
inline RunConfig config_from_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw config_error("cannot open manifest: " + file.string());
  nlohmann::json j;
  in >> j;
  std::map<std::string, std::string> m;
  for (auto& [k, v] : j.at("config").items()) m[k] = v.get<std::string>();
  return config_from_map(m);
}

}  // namespace sigdfp
