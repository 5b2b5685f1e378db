#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedlcbq/dataset.hpp"
#include "fedlcbq/errors.hpp"
#include "fedlcbq/mdp.hpp"
#include "fedlcbq/schedule.hpp"
#include "fedlcbq/table.hpp"
#include "fedlcbq/trace.hpp"

namespace fedlcbq {

// Federated pessimistic Q-learning: per-agent local updates with rescaled
// learning rates between sync points, importance-weighted server aggregation
// with a global lower-confidence penalty at sync points, and a monotone
// value/policy update.

struct HyperParams {
  double delta = 0.01;
  double c_B = 81.0;   // penalty coefficient; the analysis instantiates 81
  bool clip_q = false; // clip aggregated Q into [0,H] (sensitivity flag)

  // total_count gate by default: the per-agent alpha formula applies whenever
  // the round visited the cell at all, which is what makes the weights sum to
  // one. per_agent instead gates each agent on its own count (ablation only).
  AlphaGate alpha_gate = AlphaGate::total_count;
};

inline double compute_zeta1(int S, int A, int K, int M, int H, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("delta must be in (0,1)");
  if (S < 1 || A < 1 || K < 1 || M < 1 || H < 1)
    throw ValidationError("compute_zeta1: dimensions must be positive");
  return std::log(static_cast<double>(S) * A * K * static_cast<double>(K) * M * H / delta);
}

// Rescaled learning rate: decays in the global counter from the last sync and
// fast in the agent's in-round counter. Called after incrementing the local
// counter, so n_local_m >= 1; always in (0,1], and exactly 1 on a cell's
// first-ever visit.
inline double compute_eta(int M, int H, uint64_t N_prev, uint64_t n_local_m) {
  if (n_local_m == 0)
    throw InvariantError("compute_eta called with n_local_m = 0");
  double mh = static_cast<double>(M) * (H + 1.0);
  return mh / (static_cast<double>(N_prev) + mh * static_cast<double>(n_local_m));
}

// Server-side per-agent weight. With the total-count gate the weights of the
// M agents sum to exactly 1 whenever n_round > 0.
inline double compute_alpha(int M, int H, uint64_t N_prev, uint64_t n_local_m,
                            uint64_t N_new, uint64_t n_round,
                            AlphaGate gate = AlphaGate::total_count) {
  if (N_new != N_prev + n_round || n_local_m > n_round)
    throw InvariantError("compute_alpha: inconsistent counters");
  bool apply = gate == AlphaGate::total_count ? n_round > 0 : n_local_m > 0;
  if (!apply) return 1.0 / M;
  return (static_cast<double>(N_prev) + (H + 1.0) * M * static_cast<double>(n_local_m)) /
         (M * (static_cast<double>(N_new) + static_cast<double>(H) * static_cast<double>(n_round)));
}

// Global pessimism penalty subtracted from the aggregated Q at each sync.
inline double compute_penalty(int H, uint64_t N_new, uint64_t n_round, double zeta1,
                              double c_B) {
  if (N_new == 0) return 0.0;
  double hh = static_cast<double>(H);
  double base = std::sqrt(c_B * zeta1 * zeta1 * hh * hh * hh * hh / static_cast<double>(N_new));
  return (H + 1.0) * static_cast<double>(n_round) /
         (static_cast<double>(N_new) + hh * static_cast<double>(n_round)) * base;
}

// ---------------------------------------------------------------------------
// Learner state and the two protocol steps
// ---------------------------------------------------------------------------

struct LearnerState {
  int S = 0, A = 0, H = 0, M = 0;
  std::vector<Table3<double>> local_Q;    // per agent, h = 1..H
  std::vector<Table2<double>> local_V;    // per agent, frozen sync snapshot, h = 1..H+1
  Table3<double> global_Q;
  Table2<double> global_V;                // h = 1..H+1, cellwise non-decreasing
  DeterministicPolicy policy;             // all-zero actions until a value update fires
  std::vector<Table3<uint64_t>> n_local;  // per agent, visits since last sync
  Table3<uint64_t> N_prev;                // global counter at the last sync
  int episode = 0;                        // episodes fully processed (k)
  int sync_index = 0;                     // aggregations performed (phi)
};

inline LearnerState make_learner_state(int S, int A, int H, int M) {
  if (S < 1 || A < 1 || H < 1 || M < 1)
    throw ValidationError("learner state dimensions must be positive");
  LearnerState st;
  st.S = S; st.A = A; st.H = H; st.M = M;
  st.local_Q.assign(M, Table3<double>(H, S, A));
  st.local_V.assign(M, Table2<double>(H + 1, S));
  st.global_Q = Table3<double>(H, S, A);
  st.global_V = Table2<double>(H + 1, S);
  st.policy.S = S; st.policy.A = A; st.policy.H = H;
  st.policy.action = Table2<int>(H, S);
  st.n_local.assign(M, Table3<uint64_t>(H, S, A));
  st.N_prev = Table3<uint64_t>(H, S, A);
  return st;
}

// Applies agent m's next trajectory: per step, bump the local counter, then
// Q^m <- (1-eta) Q^m + eta (r + V^m_{h+1}(s')) at the visited cell, with V^m
// frozen at the last sync. When sink is given, one VisitRecord per step is
// appended (k = the episode being processed).
inline void local_update_episode(LearnerState& st, int m, const Trajectory& traj,
                                 std::vector<VisitRecord>* sink = nullptr) {
  if (m < 0 || m >= st.M) throw ValidationError("agent index out of range");
  if (static_cast<int>(traj.steps.size()) != st.H)
    throw ValidationError("trajectory length != H");
  int k = st.episode + 1;
  for (int h = 1; h <= st.H; ++h) {
    const Transition& t = traj.steps[h - 1];
    if (t.s >= static_cast<uint32_t>(st.S) || t.a >= static_cast<uint32_t>(st.A) ||
        t.s_next >= static_cast<uint32_t>(st.S))
      throw ValidationError("trajectory indexes out of range");
    uint64_t& n = st.n_local[m].at(h, t.s, t.a);
    n += 1;
    double eta = compute_eta(st.M, st.H, st.N_prev.at(h, t.s, t.a), n);
    double& q = st.local_Q[m].at(h, t.s, t.a);
    q = (1.0 - eta) * q + eta * (t.r + st.local_V[m].at(h + 1, t.s_next));
    if (sink)
      sink->push_back(VisitRecord{static_cast<uint32_t>(k), static_cast<uint16_t>(m),
                                  static_cast<uint16_t>(h), t.s, t.a, t.r, t.s_next, eta});
  }
}

// Server aggregation at a sync point. Per cell: Q_global = sum_m alpha^m Q^m - B
// (agent-index summation order, fixed for reproducibility); per state the value
// takes the max against its previous self and the policy moves to the argmax
// (smallest index) only when that max wins; counters roll over and every agent
// is overwritten with the new globals.
inline void global_aggregate(LearnerState& st, const SyncSchedule& schedule,
                             const HyperParams& hyper, double zeta1,
                             std::vector<SyncSnapshot>* sink = nullptr) {
  if (st.sync_index >= static_cast<int>(schedule.points.size()) ||
      schedule.points[st.sync_index] != st.episode)
    throw InvariantError("global_aggregate called off-schedule at episode " +
                         std::to_string(st.episode));

  Table3<uint64_t> n_round(st.H, st.S, st.A);
  for (int h = 1; h <= st.H; ++h)
    for (int s = 0; s < st.S; ++s)
      for (int a = 0; a < st.A; ++a) {
        uint64_t nr = 0;
        for (int m = 0; m < st.M; ++m) nr += st.n_local[m].at(h, s, a);
        n_round.at(h, s, a) = nr;
        uint64_t N_prev = st.N_prev.at(h, s, a);
        uint64_t N_new = N_prev + nr;
        double acc = 0.0;
        for (int m = 0; m < st.M; ++m)
          acc += compute_alpha(st.M, st.H, N_prev, st.n_local[m].at(h, s, a), N_new, nr,
                               hyper.alpha_gate) *
                 st.local_Q[m].at(h, s, a);
        double q = acc - compute_penalty(st.H, N_new, nr, zeta1, hyper.c_B);
        if (hyper.clip_q) q = std::min(std::max(q, 0.0), static_cast<double>(st.H));
        st.global_Q.at(h, s, a) = q;
        st.N_prev.at(h, s, a) = N_new;
      }

  for (int h = 1; h <= st.H; ++h)
    for (int s = 0; s < st.S; ++s) {
      double best = st.global_Q.at(h, s, 0);
      int best_a = 0;
      for (int a = 1; a < st.A; ++a)
        if (st.global_Q.at(h, s, a) > best) { best = st.global_Q.at(h, s, a); best_a = a; }
      if (best >= st.global_V.at(h, s)) {
        st.global_V.at(h, s) = best;
        st.policy.action.at(h, s) = best_a;
      }
    }

  for (int m = 0; m < st.M; ++m) {
    st.local_Q[m] = st.global_Q;
    st.local_V[m] = st.global_V;
    for (uint64_t& n : st.n_local[m].data) n = 0;
  }
  st.sync_index += 1;

  if (sink) {
    SyncSnapshot snap;
    snap.k = st.episode;
    snap.sync_index = st.sync_index;
    snap.Q = st.global_Q;
    snap.V = st.global_V;
    snap.policy = st.policy;
    snap.N = st.N_prev;
    snap.n_round = std::move(n_round);
    sink->push_back(std::move(snap));
  }
}

// ---------------------------------------------------------------------------
// Full run
// ---------------------------------------------------------------------------

// Per-sync view kept for every run (cheap): enough to evaluate the policy the
// server would deploy at that point.
struct SyncPoint {
  int k = 0;
  Table2<double> V;  // h = 1..H+1
  DeterministicPolicy policy;
};

struct RunResult {
  ValueTables tables;  // final global Q and V
  DeterministicPolicy policy;
  std::vector<SyncPoint> sync_points;
  std::optional<RunTrace> trace;
};

// Runs the full learner: for each k, every agent applies its k-th trajectory,
// and the server aggregates whenever k is a sync point. Datasets must agree on
// dimensions and K (equal-K federation is the setting analyzed), and the
// schedule must end at that K.
inline RunResult run_fedlcbq(int S, int A, int H, const std::vector<OfflineDataset>& datasets,
                             const SyncSchedule& schedule, const HyperParams& hyper,
                             bool record_trace = false) {
  if (datasets.empty()) throw ValidationError("run_fedlcbq: no datasets");
  int M = static_cast<int>(datasets.size());
  int K = datasets[0].K();
  for (int m = 0; m < M; ++m) {
    const OfflineDataset& ds = datasets[m];
    if (ds.S != S || ds.A != A || ds.H != H)
      throw ValidationError("dataset " + std::to_string(m) + " dimensions disagree with the MDP");
    if (ds.K() != K)
      throw ValidationError("datasets must share K; dataset " + std::to_string(m) + " has " +
                            std::to_string(ds.K()));
    validate_dataset(ds);
  }
  validate_schedule_shape(schedule);
  if (schedule.K != K)
    throw ValidationError("schedule built for K=" + std::to_string(schedule.K) +
                          " but datasets have K=" + std::to_string(K));

  double zeta1 = compute_zeta1(S, A, K, M, H, hyper.delta);
  LearnerState st = make_learner_state(S, A, H, M);

  RunResult out;
  std::vector<VisitRecord>* visit_sink = nullptr;
  std::vector<SyncSnapshot>* snap_sink = nullptr;
  if (record_trace) {
    out.trace.emplace();
    TraceHeader& hd = out.trace->header;
    hd.S = S; hd.A = A; hd.H = H; hd.M = M; hd.K = K;
    hd.delta = hyper.delta;
    hd.c_B = hyper.c_B;
    hd.zeta1 = zeta1;
    hd.clip_q = hyper.clip_q;
    hd.alpha_gate = hyper.alpha_gate;
    hd.schedule_points = schedule.points;
    out.trace->visits.reserve(static_cast<size_t>(K) * M * H);
    visit_sink = &out.trace->visits;
    snap_sink = &out.trace->snapshots;
  }

  size_t next_sync = 0;
  for (int k = 1; k <= K; ++k) {
    for (int m = 0; m < M; ++m)
      local_update_episode(st, m, datasets[m].trajectories[k - 1], visit_sink);
    st.episode = k;
    if (next_sync < schedule.points.size() && schedule.points[next_sync] == k) {
      global_aggregate(st, schedule, hyper, zeta1, snap_sink);
      next_sync += 1;
      out.sync_points.push_back(SyncPoint{k, st.global_V, st.policy});
    }
  }

  out.tables = make_value_tables(S, A, H);
  out.tables.Q = st.global_Q;
  out.tables.V = st.global_V;
  out.policy = st.policy;
  return out;
}

}  // namespace fedlcbq
