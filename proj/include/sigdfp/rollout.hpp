#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <span>
#include <vector>

#include "sigdfp/common.hpp"
#include "sigdfp/mlp.hpp"
#include "sigdfp/threading.hpp"

namespace sigdfp {

// View of one dataset as consumed by rollouts. mu holds the *raw* flow
// channel evaluations (log-scale for exp channels); mu_index remaps path ->
// mu row (used by the nested baseline where inner paths share an outer
// common path), identity when null.
struct PathData {
  std::size_t n_paths = 0;
  std::size_t n_steps = 0;  // L
  int n0 = 1;
  double dt = 0.0;
  const double* grid = nullptr;   // L+1
  const double* x0 = nullptr;     // n_paths
  const double* types = nullptr;  // n_paths x type_dim
  const double* dW = nullptr;     // n_paths x L
  const double* dB = nullptr;     // n_paths x L x n0
  const double* mu = nullptr;     // mu_rows x (L+1) x q
  const std::size_t* mu_index = nullptr;
  int q = 1;
  int type_dim = 0;
};

// Chunk-level view of one Euler step handed to the problem definition.
struct StepView {
  int rows = 0;
  std::size_t k = 0;
  double t = 0.0;
  double dt = 0.0;
  const double* s = nullptr;      // rows
  const double* dW = nullptr;     // rows (null at the terminal evaluation)
  const double* dB = nullptr;     // rows x n0
  const double* mu = nullptr;     // rows x q (raw)
  const double* types = nullptr;  // rows x type_dim
  const double* alpha = nullptr;  // rows x m (set after the policy ran)
};

// chunk-level analytic control (oracle policies)
using AnalyticControl =
    std::function<void(const std::size_t* gpaths, const StepView&, double* alpha)>;

struct RolloutIO {
  std::vector<double>* per_path_cost = nullptr;  // n_sel, natural sense
  bool record_full = false;
  std::vector<double>* states = nullptr;         // n_sel x (L+1)
  std::vector<double>* controls = nullptr;       // n_sel x (L+1) x m (row L: terminal net eval)
  std::span<const std::size_t> stamps = {};
  std::vector<double>* stamp_states = nullptr;   // n_sel x n_stamps
  std::vector<double>* stamp_controls = nullptr; // n_sel x n_stamps x m
  long round = -1;                               // diagnostics only
};

namespace detail {

struct ChunkBuffers {
  std::vector<double> types, mu, dW, dB;  // gathered per chunk
  std::vector<double> s_trace;            // (L+1) x rows
  std::vector<double> a_trace;            // (L+1) x rows x m
  std::vector<double> inputs, xfac, cost, f_row;
  std::vector<std::size_t> gpaths;
};

// Chunk workspaces are reused across chunks (one per thread) so the hot loop
// does not churn multi-megabyte allocations. Every field is fully overwritten
// per chunk before use.
struct ChunkWorkspace {
  ChunkBuffers cb;
  std::vector<std::vector<NetTape>> tapes;
  NetScratch scratch;
  std::vector<double> out, sbar, sbar_next, dF_ds, dF_da, df_ds, df_da, abar, dout, din;
  std::vector<double> sa, sb;
};

inline ChunkWorkspace& workspace() {
  static thread_local ChunkWorkspace ws;
  return ws;
}

template <class P>
void gather_chunk(const P& pb, const PathData& d, std::span<const std::size_t> sel,
                  std::size_t lo, std::size_t hi, ChunkBuffers& cb) {
  const int rows = static_cast<int>(hi - lo);
  const std::size_t L = d.n_steps;
  const int q = d.q, td = d.type_dim, n0 = d.n0;
  cb.gpaths.assign(sel.begin() + lo, sel.begin() + hi);
  cb.types.resize(static_cast<std::size_t>(rows) * td);
  cb.mu.resize(static_cast<std::size_t>(rows) * (L + 1) * q);
  cb.dW.resize(static_cast<std::size_t>(rows) * L);
  cb.dB.resize(static_cast<std::size_t>(rows) * L * n0);
  for (int r = 0; r < rows; ++r) {
    const std::size_t g = cb.gpaths[r];
    if (td > 0)
      std::memcpy(cb.types.data() + static_cast<std::size_t>(r) * td,
                  d.types + g * td, sizeof(double) * td);
    const std::size_t mrow = d.mu_index ? d.mu_index[g] : g;
    for (std::size_t k = 0; k <= L; ++k)
      std::memcpy(cb.mu.data() + (k * rows + r) * q, d.mu + (mrow * (L + 1) + k) * q,
                  sizeof(double) * q);
    for (std::size_t k = 0; k < L; ++k) {
      cb.dW[k * rows + r] = d.dW[g * L + k];
      std::memcpy(cb.dB.data() + (k * rows + r) * n0, d.dB + (g * L + k) * n0,
                  sizeof(double) * n0);
    }
  }
  cb.s_trace.resize((L + 1) * rows);
  cb.a_trace.assign((L + 1) * static_cast<std::size_t>(rows) * pb.control_dim(), 0.0);
  cb.cost.assign(rows, 0.0);
  cb.f_row.resize(rows);
  double* s0 = cb.s_trace.data();
  for (int r = 0; r < rows; ++r)
    s0[r] = pb.initial_state(d.x0 ? d.x0[cb.gpaths[r]] : 0.0,
                             td > 0 ? cb.types.data() + static_cast<std::size_t>(r) * td : nullptr);
}

inline void check_finite(const double* v, int rows, const std::size_t* gpaths,
                         long round, std::size_t k, const char* what) {
  for (int r = 0; r < rows; ++r)
    if (!std::isfinite(v[r]))
      throw numeric_error(std::string("non-finite ") + what, round,
                          static_cast<long>(gpaths[r]), static_cast<long>(k));
}

template <class P>
StepView make_view(const P& pb, const ChunkBuffers& cb, const PathData& d, int rows,
                   std::size_t k, bool terminal) {
  StepView v;
  v.rows = rows;
  v.k = k;
  v.t = d.grid[k];
  v.dt = d.dt;
  v.s = cb.s_trace.data() + k * rows;
  v.dW = terminal ? nullptr : cb.dW.data() + k * rows;
  v.dB = terminal ? nullptr : cb.dB.data() + k * rows * d.n0;
  v.mu = cb.mu.data() + k * static_cast<std::size_t>(rows) * d.q;
  v.types = d.type_dim > 0 ? cb.types.data() : nullptr;
  v.alpha = cb.a_trace.data() + k * static_cast<std::size_t>(rows) * pb.control_dim();
  return v;
}

}  // namespace detail

// Forward Euler rollout over the selected paths, chunked and deterministic.
// Controls come from `nets` (feedback networks, one output each) when
// non-empty, otherwise from `analytic`. Returns the batch-mean objective in
// the problem's natural sense.
template <class P>
double rollout_forward(const P& pb, std::span<const ControlNet* const> nets,
                       const AnalyticControl* analytic, const PathData& d,
                       std::span<const std::size_t> sel, const RolloutIO& io = {}) {
  const std::size_t n_sel = sel.size();
  const std::size_t L = d.n_steps;
  const int m = pb.control_dim();
  const bool use_nets = !nets.empty();
  SIGDFP_REQUIRE(!use_nets || static_cast<int>(nets.size()) == m,
                 "rollout_forward: one net per control component");
  bool stamp_has_terminal = false;
  for (std::size_t k : io.stamps) stamp_has_terminal = stamp_has_terminal || k == L;
  const bool record_terminal_control =
      (io.record_full && io.controls) || (io.stamp_controls && stamp_has_terminal);

  const std::size_t nc = num_chunks(n_sel);
  std::vector<double> chunk_cost(nc, 0.0);
  if (io.per_path_cost) io.per_path_cost->assign(n_sel, 0.0);
  if (io.record_full && io.states) io.states->assign(n_sel * (L + 1), 0.0);
  if (io.record_full && io.controls) io.controls->assign(n_sel * (L + 1) * m, 0.0);
  if (io.stamp_states) io.stamp_states->assign(n_sel * io.stamps.size(), 0.0);
  if (io.stamp_controls) io.stamp_controls->assign(n_sel * io.stamps.size() * m, 0.0);

  parallel_chunks(n_sel, [&](std::size_t c) {
    const auto [lo, hi] = chunk_range(n_sel, c);
    const int rows = static_cast<int>(hi - lo);
    auto& ws = detail::workspace();
    auto& cb = ws.cb;
    detail::gather_chunk(pb, d, sel, lo, hi, cb);
    auto& scratch = ws.scratch;
    auto& out = ws.out;
    out.resize(rows);
    const int idim = pb.net_input_dim();
    cb.inputs.resize(static_cast<std::size_t>(rows) * idim);
    cb.xfac.resize(rows);

    for (std::size_t k = 0; k <= L; ++k) {
      const bool terminal = (k == L);
      StepView v = detail::make_view(pb, cb, d, rows, k, terminal);
      double* alpha = cb.a_trace.data() + k * static_cast<std::size_t>(rows) * m;
      const bool need_control = !terminal || record_terminal_control;
      if (need_control) {
        if (use_nets) {
          pb.net_inputs(v, cb.inputs.data(), cb.xfac.data());
          for (int j = 0; j < m; ++j) {
            net_forward(*nets[j], rows, cb.inputs.data(), out.data(), nullptr, scratch);
            for (int r = 0; r < rows; ++r)
              alpha[static_cast<std::size_t>(r) * m + j] = pb.map_control(j, out[r]);
          }
        } else {
          (*analytic)(cb.gpaths.data(), v, alpha);
        }
      }
      if (!terminal) {
        pb.running_cost(v, cb.f_row.data());
        for (int r = 0; r < rows; ++r) cb.cost[r] += cb.f_row[r] * d.dt;
        double* s_next = cb.s_trace.data() + (k + 1) * rows;
        pb.step(v, s_next);
        detail::check_finite(s_next, rows, cb.gpaths.data(), io.round, k, "state");
      } else {
        pb.terminal_cost(rows, v.s, v.mu, v.types, cb.f_row.data());
        for (int r = 0; r < rows; ++r) cb.cost[r] += cb.f_row[r];
        detail::check_finite(cb.cost.data(), rows, cb.gpaths.data(), io.round, k, "cost");
      }
    }

    double sum = 0.0;
    for (int r = 0; r < rows; ++r) sum += cb.cost[r];
    chunk_cost[c] = sum;

    if (io.per_path_cost)
      std::memcpy(io.per_path_cost->data() + lo, cb.cost.data(), sizeof(double) * rows);
    if (io.record_full) {
      for (int r = 0; r < rows; ++r) {
        if (io.states)
          for (std::size_t k = 0; k <= L; ++k)
            (*io.states)[(lo + r) * (L + 1) + k] = cb.s_trace[k * rows + r];
        if (io.controls)
          for (std::size_t k = 0; k <= L; ++k)
            for (int j = 0; j < m; ++j)
              (*io.controls)[((lo + r) * (L + 1) + k) * m + j] =
                  cb.a_trace[(k * rows + r) * static_cast<std::size_t>(m) + j];
      }
    }
    for (std::size_t si = 0; si < io.stamps.size(); ++si) {
      const std::size_t k = io.stamps[si];
      for (int r = 0; r < rows; ++r) {
        if (io.stamp_states)
          (*io.stamp_states)[(lo + r) * io.stamps.size() + si] = cb.s_trace[k * rows + r];
        if (io.stamp_controls)
          for (int j = 0; j < m; ++j)
            (*io.stamp_controls)[((lo + r) * io.stamps.size() + si) * m + j] =
                cb.a_trace[(k * rows + r) * static_cast<std::size_t>(m) + j];
      }
    }
  });

  double total = 0.0;
  for (double s : chunk_cost) total += s;
  return total / static_cast<double>(n_sel);
}

// Reverse-mode gradient of the (sense-adjusted) batch-mean objective with
// respect to all network parameters, through every Euler step. The measure
// flow is a frozen input: no gradient reaches it. Gradients are accumulated
// as sums over paths; divide by the batch size to obtain the mean.
// Returns the batch-mean objective in the natural sense.
template <class P>
double grad_rollout(const P& pb, std::span<ControlNet* const> nets,
                    std::span<NetGrad> grads, const PathData& d,
                    std::span<const std::size_t> sel, long round = -1) {
  const std::size_t n_sel = sel.size();
  const std::size_t L = d.n_steps;
  const int m = pb.control_dim();
  const double sense = pb.maximize() ? -1.0 : 1.0;
  SIGDFP_REQUIRE(static_cast<int>(nets.size()) == m && grads.size() == nets.size(),
                 "grad_rollout: one net and gradient per control component");

  const std::size_t nc = num_chunks(n_sel);
  std::vector<double> chunk_cost(nc, 0.0);
  std::vector<std::vector<NetGrad>> chunk_grads(nc);

  parallel_chunks(n_sel, [&](std::size_t c) {
    const auto [lo, hi] = chunk_range(n_sel, c);
    const int rows = static_cast<int>(hi - lo);
    auto& ws = detail::workspace();
    auto& cb = ws.cb;
    detail::gather_chunk(pb, d, sel, lo, hi, cb);
    const int idim = pb.net_input_dim();
    cb.inputs.resize(static_cast<std::size_t>(rows) * idim);
    cb.xfac.resize(static_cast<std::size_t>(L) * rows);
    auto& tapes = ws.tapes;
    tapes.resize(L);
    auto& scratch = ws.scratch;
    auto& out = ws.out;
    out.resize(rows);

    // forward with tape
    for (std::size_t k = 0; k < L; ++k) {
      StepView v = detail::make_view(pb, cb, d, rows, k, false);
      pb.net_inputs(v, cb.inputs.data(), cb.xfac.data() + k * rows);
      double* alpha = cb.a_trace.data() + k * static_cast<std::size_t>(rows) * m;
      tapes[k].resize(m);
      for (int j = 0; j < m; ++j) {
        net_forward(*nets[j], rows, cb.inputs.data(), out.data(), &tapes[k][j], scratch);
        for (int r = 0; r < rows; ++r)
          alpha[static_cast<std::size_t>(r) * m + j] = pb.map_control(j, out[r]);
      }
      pb.running_cost(v, cb.f_row.data());
      for (int r = 0; r < rows; ++r) cb.cost[r] += cb.f_row[r] * d.dt;
      double* s_next = cb.s_trace.data() + (k + 1) * rows;
      pb.step(v, s_next);
      detail::check_finite(s_next, rows, cb.gpaths.data(), round, k, "state");
    }
    {
      StepView v = detail::make_view(pb, cb, d, rows, L, true);
      pb.terminal_cost(rows, v.s, v.mu, v.types, cb.f_row.data());
      for (int r = 0; r < rows; ++r) cb.cost[r] += cb.f_row[r];
      detail::check_finite(cb.cost.data(), rows, cb.gpaths.data(), round, L, "cost");
    }
    double sum = 0.0;
    for (int r = 0; r < rows; ++r) sum += cb.cost[r];
    chunk_cost[c] = sum;

    // backward
    auto& cg = chunk_grads[c];
    cg.reserve(m);
    for (int j = 0; j < m; ++j) cg.emplace_back(*nets[j]);
    auto& sbar = ws.sbar;
    auto& sbar_next = ws.sbar_next;
    auto& dF_ds = ws.dF_ds;
    auto& dF_da = ws.dF_da;
    auto& df_ds = ws.df_ds;
    auto& df_da = ws.df_da;
    auto& abar = ws.abar;
    auto& dout = ws.dout;
    auto& din = ws.din;
    auto& sa = ws.sa;
    auto& sb = ws.sb;
    sbar.resize(rows);
    sbar_next.resize(rows);
    dF_ds.resize(rows);
    dF_da.resize(static_cast<std::size_t>(rows) * m);
    df_ds.resize(rows);
    df_da.resize(static_cast<std::size_t>(rows) * m);
    abar.resize(static_cast<std::size_t>(rows) * m);
    dout.resize(rows);
    din.resize(static_cast<std::size_t>(rows) * idim);
    {
      StepView v = detail::make_view(pb, cb, d, rows, L, true);
      pb.terminal_partial(rows, v.s, v.mu, v.types, sbar_next.data());
      for (int r = 0; r < rows; ++r) sbar_next[r] *= sense;
    }
    const int x_slot = pb.type_dim() + 1;
    for (std::size_t kk = L; kk-- > 0;) {
      StepView v = detail::make_view(pb, cb, d, rows, kk, false);
      pb.step_partials(v, dF_ds.data(), dF_da.data());
      pb.cost_partials(v, df_ds.data(), df_da.data());
      for (int r = 0; r < rows; ++r)
        for (int j = 0; j < m; ++j)
          abar[static_cast<std::size_t>(r) * m + j] =
              sbar_next[r] * dF_da[static_cast<std::size_t>(r) * m + j] +
              sense * d.dt * df_da[static_cast<std::size_t>(r) * m + j];
      for (int r = 0; r < rows; ++r)
        sbar[r] = sbar_next[r] * dF_ds[r] + sense * d.dt * df_ds[r];
      const double* alpha_k = cb.a_trace.data() + kk * static_cast<std::size_t>(rows) * m;
      for (int j = 0; j < m; ++j) {
        for (int r = 0; r < rows; ++r)
          dout[r] = pb.map_control_deriv(j, alpha_k[static_cast<std::size_t>(r) * m + j]) *
                    abar[static_cast<std::size_t>(r) * m + j];
        net_backward(*nets[j], rows, tapes[kk][j], dout.data(), cg[j], din.data(), sa, sb);
        const double* xf = cb.xfac.data() + kk * rows;
        for (int r = 0; r < rows; ++r)
          sbar[r] += din[static_cast<std::size_t>(r) * idim + x_slot] * xf[r];
      }
      std::swap(sbar, sbar_next);
      detail::check_finite(sbar_next.data(), rows, cb.gpaths.data(), round, kk, "gradient");
    }
  });

  for (std::size_t c = 0; c < nc; ++c)
    for (int j = 0; j < m; ++j) grads[j].add(chunk_grads[c][j]);
  double total = 0.0;
  for (double s : chunk_cost) total += s;
  return total / static_cast<double>(n_sel);
}

}  // namespace sigdfp
