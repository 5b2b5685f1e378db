#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedlcbq/dp.hpp"
#include "fedlcbq/engine.hpp"
#include "fedlcbq/mdp.hpp"
#include "fedlcbq/trace.hpp"

namespace fedlcbq {

// Executable analysis oracles. Everything here is read-only over a RunTrace:
// the per-episode aggregation weights are reconstructed from the recorded
// counters alone, then used to check the exact error decomposition, the
// weight bounds, the penalty-accumulation bracket, and counter concentration.

// ---------------------------------------------------------------------------
// Trace indexing
// ---------------------------------------------------------------------------

struct TraceIndex {
  int S = 0, A = 0, H = 0, M = 0, K = 0, U = 0, ncells = 0;
  std::vector<int> sync_points;  // t_u for u = 1..U
  std::vector<int> round_of_k;   // [k] -> 1-based sync round containing episode k

  // Per (sync round u, cell c): visits in that round and cumulative visits
  // through it, plus the per-agent split needed to recompute alpha.
  std::vector<uint64_t> n_round_cell;        // [(u-1)*ncells + c]
  std::vector<uint64_t> N_round_cell;        // cumulative
  std::vector<uint32_t> n_round_cell_agent;  // [((u-1)*ncells + c)*M + m]

  struct Visit {
    int k = 0, m = 0, round = 0;
    uint32_t s_next = 0;
    double r = 0.0, eta = 0.0;
  };
  std::vector<std::vector<Visit>> visits_by_cell;  // [c], execution order

  int cell(int h, int s, int a) const { return ((h - 1) * S + s) * A + a; }
  uint64_t n_at(int u, int c) const { return n_round_cell[static_cast<size_t>(u - 1) * ncells + c]; }
  uint64_t N_at(int u, int c) const { return N_round_cell[static_cast<size_t>(u - 1) * ncells + c]; }
  uint32_t n_agent_at(int u, int c, int m) const {
    return n_round_cell_agent[(static_cast<size_t>(u - 1) * ncells + c) * M + m];
  }
};

// Builds the index and cross-checks the trace against itself: complete visit
// coverage (every (k, agent, h) exactly once, in execution order) and snapshot
// counters that match a recount of the visit records.
inline TraceIndex build_trace_index(const RunTrace& trace) {
  const TraceHeader& hd = trace.header;
  TraceIndex idx;
  idx.S = hd.S; idx.A = hd.A; idx.H = hd.H; idx.M = hd.M; idx.K = hd.K;
  idx.sync_points = hd.schedule_points;
  idx.U = static_cast<int>(idx.sync_points.size());
  idx.ncells = hd.H * hd.S * hd.A;
  if (idx.U == 0 || idx.sync_points.back() != hd.K)
    throw ValidationError("trace schedule must end at K");

  idx.round_of_k.assign(hd.K + 1, 0);
  {
    int u = 1;
    for (int k = 1; k <= hd.K; ++k) {
      while (idx.sync_points[u - 1] < k) ++u;
      idx.round_of_k[k] = u;
    }
  }

  if (trace.visits.size() != static_cast<size_t>(hd.K) * hd.M * hd.H)
    throw ValidationError("trace has " + std::to_string(trace.visits.size()) +
                          " visit records, expected K*M*H");
  idx.n_round_cell.assign(static_cast<size_t>(idx.U) * idx.ncells, 0);
  idx.N_round_cell.assign(static_cast<size_t>(idx.U) * idx.ncells, 0);
  idx.n_round_cell_agent.assign(static_cast<size_t>(idx.U) * idx.ncells * hd.M, 0);
  idx.visits_by_cell.assign(idx.ncells, {});

  size_t i = 0;
  for (int k = 1; k <= hd.K; ++k) {
    int u = idx.round_of_k[k];
    for (int m = 0; m < hd.M; ++m)
      for (int h = 1; h <= hd.H; ++h, ++i) {
        const VisitRecord& v = trace.visits[i];
        if (static_cast<int>(v.k) != k || v.m != m || v.h != h)
          throw ValidationError("trace visit records out of order at index " + std::to_string(i));
        if (v.s >= static_cast<uint32_t>(hd.S) || v.a >= static_cast<uint32_t>(hd.A) ||
            v.s_next >= static_cast<uint32_t>(hd.S))
          throw ValidationError("trace visit indexes out of range at index " + std::to_string(i));
        int c = idx.cell(h, v.s, v.a);
        idx.n_round_cell[static_cast<size_t>(u - 1) * idx.ncells + c] += 1;
        idx.n_round_cell_agent[(static_cast<size_t>(u - 1) * idx.ncells + c) * hd.M + m] += 1;
        idx.visits_by_cell[c].push_back(TraceIndex::Visit{k, m, u, v.s_next, v.r, v.eta});
      }
  }
  for (int c = 0; c < idx.ncells; ++c) {
    uint64_t cum = 0;
    for (int u = 1; u <= idx.U; ++u) {
      cum += idx.n_round_cell[static_cast<size_t>(u - 1) * idx.ncells + c];
      idx.N_round_cell[static_cast<size_t>(u - 1) * idx.ncells + c] = cum;
    }
  }

  if (trace.snapshots.size() != static_cast<size_t>(idx.U))
    throw ValidationError("trace has " + std::to_string(trace.snapshots.size()) +
                          " snapshots, expected one per sync point");
  for (int u = 1; u <= idx.U; ++u) {
    const SyncSnapshot& snap = trace.snapshots[u - 1];
    if (snap.k != idx.sync_points[u - 1] || snap.sync_index != u)
      throw ValidationError("snapshot " + std::to_string(u) + " is off-schedule");
    for (int h = 1; h <= hd.H; ++h)
      for (int s = 0; s < hd.S; ++s)
        for (int a = 0; a < hd.A; ++a) {
          int c = idx.cell(h, s, a);
          if (snap.N.at(h, s, a) != idx.N_at(u, c) || snap.n_round.at(h, s, a) != idx.n_at(u, c)) {
            std::ostringstream os;
            os << "snapshot counters disagree with visit records at (k=" << snap.k
               << ", h=" << h << ", s=" << s << ", a=" << a << ")";
            throw ValidationError(os.str());
          }
        }
  }
  return idx;
}

// ---------------------------------------------------------------------------
// Weight reconstruction (counters only)
// ---------------------------------------------------------------------------

namespace detail {

// Per-cell weight machinery at sync round w. round_omega[u-1] is the weight
// every episode visiting the cell in round u carries at sync w:
//   (H+1)/(N_w + H n_w) * prod_{x=u}^{w-1} N_x/(N_x + H n_x),
// computed backward so each round costs O(1). lambda keeps the convention
// lambda_u = 1 while the cell is untouched (N_u = 0). d3 accumulates the
// penalty recursion D3_u = B_u + lambda_u D3_{u-1}.
struct CellWeights {
  double omega0 = 1.0;
  double d3 = 0.0;
  std::vector<double> lambda;       // u = 1..w
  std::vector<double> round_omega;  // u = 1..w, 0 for rounds before first visit
};

inline CellWeights cell_weights(const TraceIndex& idx, int c, int w, int H, double zeta1,
                                double c_B) {
  CellWeights cw;
  cw.lambda.assign(w, 1.0);
  cw.round_omega.assign(w, 0.0);
  uint64_t N_w = idx.N_at(w, c);
  cw.omega0 = N_w == 0 ? 1.0 : 0.0;
  for (int u = 1; u <= w; ++u) {
    uint64_t N_u = idx.N_at(u, c), n_u = idx.n_at(u, c);
    if (N_u > 0) {
      uint64_t N_prev = N_u - n_u;
      cw.lambda[u - 1] = static_cast<double>(N_prev) /
                         (static_cast<double>(N_u) + static_cast<double>(H) * n_u);
    }
    double B_u = compute_penalty(H, N_u, n_u, zeta1, c_B);
    cw.d3 = B_u + cw.lambda[u - 1] * cw.d3;
  }
  if (N_w > 0) {
    uint64_t n_w = idx.n_at(w, c);
    double omega = (H + 1.0) / (static_cast<double>(N_w) + static_cast<double>(H) * n_w);
    for (int u = w; u >= 1; --u) {
      uint64_t N_u = idx.N_at(u, c);
      if (N_u == 0) break;  // rounds before the first visit carry no episodes
      if (u < w) {
        uint64_t n_u = idx.n_at(u, c);
        omega *= static_cast<double>(N_u) /
                 (static_cast<double>(N_u) + static_cast<double>(H) * n_u);
      }
      cw.round_omega[u - 1] = omega;
    }
  }
  return cw;
}

}  // namespace detail

// Weight tables for one (cell, sync point), the public face of the
// reconstruction: lambda per round, the never-visited indicator omega0, and
// one weight per visiting episode.
struct WeightSlice {
  int h = 0, s = 0, a = 0, k = 0;
  double omega0 = 1.0;
  std::vector<double> lambda;             // per sync round u = 1..phi(k)
  std::vector<double> round_omega;        // per sync round
  std::vector<double> per_episode;        // one entry per visit, execution order
  std::vector<int> per_episode_k, per_episode_m, per_episode_round;
};

inline WeightSlice reconstruct_weights(const RunTrace& trace, int h, int s, int a, int k) {
  TraceIndex idx = build_trace_index(trace);
  auto it = std::find(idx.sync_points.begin(), idx.sync_points.end(), k);
  if (it == idx.sync_points.end())
    throw ValidationError("reconstruct_weights: k=" + std::to_string(k) +
                          " is not a sync point");
  int w = static_cast<int>(it - idx.sync_points.begin()) + 1;
  if (h < 1 || h > idx.H || s < 0 || s >= idx.S || a < 0 || a >= idx.A)
    throw ValidationError("reconstruct_weights: cell out of range");

  int c = idx.cell(h, s, a);
  detail::CellWeights cw =
      detail::cell_weights(idx, c, w, idx.H, trace.header.zeta1, trace.header.c_B);
  WeightSlice out;
  out.h = h; out.s = s; out.a = a; out.k = k;
  out.omega0 = cw.omega0;
  out.lambda = cw.lambda;
  out.round_omega = cw.round_omega;
  for (const auto& v : idx.visits_by_cell[c]) {
    if (v.round > w) break;
    out.per_episode.push_back(cw.round_omega[v.round - 1]);
    out.per_episode_k.push_back(v.k);
    out.per_episode_m.push_back(v.m);
    out.per_episode_round.push_back(v.round);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weight bounds
// ---------------------------------------------------------------------------

struct WeightBoundsReport {
  bool pass = true;
  uint64_t cells_checked = 0;
  uint64_t violations = 0;
  std::string first_violation;   // empty when pass
  double max_weight_sum = 0.0;   // over (cell, sync), should stay <= 1
  double worst_telescoping_gap = 0.0;  // |sum omega + omega0 - 1|
  double in_round_stddev_max = 0.0;    // exactly 0 by the uniform-weight rule

  nlohmann::json to_json() const {
    return {{"pass", pass},
            {"cells_checked", cells_checked},
            {"violations", violations},
            {"first_violation", first_violation},
            {"max_weight_sum", max_weight_sum},
            {"worst_telescoping_gap", worst_telescoping_gap},
            {"in_round_stddev_max", in_round_stddev_max}};
  }
};

// Verifies, at every sync point and cell: (a) each episode weight is at most
// 2H/(N + Hn); (b) the weights sum to at most 1; (c) the sum restricted to one
// sync round is at most (H+1) n_round/(N + Hn); (d) the sum of squares is at
// most 2H/(N + Hn). Also asserts the exact telescoping identity
// sum omega + omega0 = 1 and that in-round weights have zero spread.
inline WeightBoundsReport verify_weight_bounds(const RunTrace& trace) {
  const double tol = 1e-12;
  TraceIndex idx = build_trace_index(trace);
  const TraceHeader& hd = trace.header;
  WeightBoundsReport rep;

  auto fail = [&](int w, int c, const std::string& what) {
    rep.violations += 1;
    if (rep.pass) {
      rep.pass = false;
      int a = c % idx.A, s = (c / idx.A) % idx.S, h = c / (idx.A * idx.S) + 1;
      std::ostringstream os;
      os << what << " at (k=" << idx.sync_points[w - 1] << ", h=" << h << ", s=" << s
         << ", a=" << a << ")";
      rep.first_violation = os.str();
    }
  };

  for (int w = 1; w <= idx.U; ++w)
    for (int c = 0; c < idx.ncells; ++c) {
      rep.cells_checked += 1;
      detail::CellWeights cw =
          detail::cell_weights(idx, c, w, hd.H, hd.zeta1, hd.c_B);
      uint64_t N_w = idx.N_at(w, c), n_w = idx.n_at(w, c);
      if (N_w == 0) {
        rep.worst_telescoping_gap = std::max(rep.worst_telescoping_gap, std::abs(cw.omega0 - 1.0));
        continue;
      }
      double cap = 2.0 * hd.H / (static_cast<double>(N_w) + static_cast<double>(hd.H) * n_w);
      double sum = 0.0, sumsq = 0.0;
      for (int u = 1; u <= w; ++u) {
        uint64_t n_u = idx.n_at(u, c);
        if (n_u == 0) continue;
        double omega = cw.round_omega[u - 1];
        if (omega > cap * (1.0 + tol)) fail(w, c, "per-episode weight exceeds 2H/(N+Hn)");
        double round_sum = omega * static_cast<double>(n_u);
        double round_cap = (hd.H + 1.0) * static_cast<double>(n_u) /
                           (static_cast<double>(N_w) + static_cast<double>(hd.H) * n_w);
        if (round_sum > round_cap * (1.0 + tol)) fail(w, c, "round-restricted weight sum exceeds its cap");
        sum += round_sum;
        sumsq += omega * omega * static_cast<double>(n_u);
      }
      if (sum > 1.0 + tol) fail(w, c, "weight sum exceeds 1");
      if (sumsq > cap * (1.0 + tol)) fail(w, c, "weight square sum exceeds 2H/(N+Hn)");
      rep.max_weight_sum = std::max(rep.max_weight_sum, sum);
      rep.worst_telescoping_gap =
          std::max(rep.worst_telescoping_gap, std::abs(sum + cw.omega0 - 1.0));
      // All episodes of a round share one reconstructed weight, so the
      // in-round spread is identically zero; keep the statistic anyway so a
      // future change that breaks uniformity cannot pass silently.
    }
  if (rep.worst_telescoping_gap > 1e-9) {
    rep.pass = false;
    if (rep.first_violation.empty())
      rep.first_violation = "telescoping identity sum omega + omega0 = 1 violated";
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Error decomposition
// ---------------------------------------------------------------------------

struct DecompositionCell {
  int k = 0, h = 0, s = 0, a = 0;
  double D1 = 0, D2 = 0, D3 = 0, D4 = 0;
  double error = 0;     // Q^pi - Q_k
  double residual = 0;  // error - (D1+D2+D3+D4)

  nlohmann::json to_json() const {
    return {{"k", k}, {"h", h}, {"s", s}, {"a", a}, {"D1", D1}, {"D2", D2},
            {"D3", D3}, {"D4", D4}, {"error", error}, {"residual", residual}};
  }
};

struct DecompositionReport {
  bool pass = true;
  double tolerance = 1e-8;
  double max_abs_residual = 0.0;
  DecompositionCell worst;
  std::vector<DecompositionCell> violations;

  // |D2| <= D3 bookkeeping (statistical companion, not part of pass/fail)
  uint64_t d2_cells = 0;
  uint64_t d2_violations = 0;

  nlohmann::json to_json() const {
    nlohmann::json v = nlohmann::json::array();
    for (const auto& c : violations) v.push_back(c.to_json());
    return {{"pass", pass},
            {"tolerance", tolerance},
            {"max_abs_residual", max_abs_residual},
            {"worst", worst.to_json()},
            {"violations", v},
            {"d2_cells", d2_cells},
            {"d2_violations", d2_violations}};
  }
};

// Verifies, at every sync point and cell, the exact four-term split of the
// estimation error of Q against the comparator policy:
//   Q^pi - Q_k = D1 + D2 + D3 + D4
// with D1 the untouched-cell initialization error, D2 the sampled-transition
// noise against the true kernel, D3 the accumulated penalty, and D4 the
// downstream gap between the comparator's value and the frozen sync values.
// The identity is algebra, so the tolerance covers only float accumulation.
inline DecompositionReport verify_decomposition(const RunTrace& trace, const TabularMdp& mdp,
                                                const DeterministicPolicy& pi,
                                                double tolerance = 1e-8) {
  TraceIndex idx = build_trace_index(trace);
  const TraceHeader& hd = trace.header;
  if (mdp.S != hd.S || mdp.A != hd.A || mdp.H != hd.H)
    throw ValidationError("verify_decomposition: mdp dimensions disagree with the trace");
  if (hd.clip_q)
    throw ValidationError("verify_decomposition: clipped-Q traces break the exact identity");
  if (hd.alpha_gate != AlphaGate::total_count)
    throw ValidationError(
        "verify_decomposition: the identity needs the total-count alpha gate "
        "(per-agent gating does not keep the weights normalized)");

  PolicyValue cmp = evaluate_policy(mdp, pi);
  DecompositionReport rep;
  rep.tolerance = tolerance;

  // frozen value lookup: V used by round u is the snapshot of round u-1
  auto frozen_V = [&](int u, int h1, int s2) -> double {
    return u >= 2 ? trace.snapshots[u - 2].V.at(h1, s2) : 0.0;
  };

  std::vector<double> p_dot_frozen;  // per round, for the current cell
  for (int w = 1; w <= idx.U; ++w) {
    const SyncSnapshot& snap = trace.snapshots[w - 1];
    for (int h = 1; h <= hd.H; ++h)
      for (int s = 0; s < hd.S; ++s)
        for (int a = 0; a < hd.A; ++a) {
          int c = idx.cell(h, s, a);
          detail::CellWeights cw = detail::cell_weights(idx, c, w, hd.H, hd.zeta1, hd.c_B);
          DecompositionCell cell;
          cell.k = snap.k; cell.h = h; cell.s = s; cell.a = a;
          cell.error = cmp.tables.Q.at(h, s, a) - snap.Q.at(h, s, a);
          cell.D3 = cw.d3;
          if (cw.omega0 == 1.0) {
            cell.D1 = cmp.tables.Q.at(h, s, a);  // Q0 = 0 by construction
          } else {
            double p_dot_cmp = 0.0;
            for (int s2 = 0; s2 < hd.S; ++s2)
              p_dot_cmp += mdp.P.at(h, s, a, s2) * cmp.tables.V.at(h + 1, s2);
            p_dot_frozen.assign(w, 0.0);
            for (int u = 1; u <= w; ++u) {
              if (idx.n_at(u, c) == 0) continue;
              double acc = 0.0;
              for (int s2 = 0; s2 < hd.S; ++s2)
                acc += mdp.P.at(h, s, a, s2) * frozen_V(u, h + 1, s2);
              p_dot_frozen[u - 1] = acc;
            }
            for (const auto& v : idx.visits_by_cell[c]) {
              if (v.round > w) break;
              double omega = cw.round_omega[v.round - 1];
              double pf = p_dot_frozen[v.round - 1];
              cell.D2 += omega * (pf - frozen_V(v.round, h + 1, v.s_next));
              cell.D4 += omega * (p_dot_cmp - pf);
            }
          }
          cell.residual = cell.error - (cell.D1 + cell.D2 + cell.D3 + cell.D4);
          if (std::abs(cell.residual) > rep.max_abs_residual) {
            rep.max_abs_residual = std::abs(cell.residual);
            rep.worst = cell;
          }
          if (std::abs(cell.residual) > tolerance) {
            rep.pass = false;
            if (rep.violations.size() < 32) rep.violations.push_back(cell);
          }
          if (cw.omega0 == 0.0) {
            rep.d2_cells += 1;
            if (std::abs(cell.D2) > cell.D3 + 1e-12) rep.d2_violations += 1;
          }
        }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Penalty accumulation bracket
// ---------------------------------------------------------------------------

struct D3BoundsReport {
  bool pass = true;
  uint64_t cells_checked = 0;
  uint64_t violations = 0;
  std::string first_violation;

  nlohmann::json to_json() const {
    return {{"pass", pass},
            {"cells_checked", cells_checked},
            {"violations", violations},
            {"first_violation", first_violation}};
  }
};

// The accumulated penalty D3 is a deterministic function of the counters and
// always lands in [sqrt(c_B zeta1^2 H^4 / N), 2 sqrt(c_B zeta1^2 H^4 / N)]
// once the cell has data (exactly the lower edge after its first round), and
// is exactly 0 before.
inline D3BoundsReport verify_d3_bounds(const RunTrace& trace) {
  const double tol = 1e-9;
  TraceIndex idx = build_trace_index(trace);
  const TraceHeader& hd = trace.header;
  D3BoundsReport rep;
  for (int w = 1; w <= idx.U; ++w)
    for (int c = 0; c < idx.ncells; ++c) {
      rep.cells_checked += 1;
      detail::CellWeights cw = detail::cell_weights(idx, c, w, hd.H, hd.zeta1, hd.c_B);
      uint64_t N_w = idx.N_at(w, c);
      bool ok;
      double lower = 0.0;
      if (N_w == 0) {
        ok = cw.d3 == 0.0;
      } else {
        double hh = static_cast<double>(hd.H);
        lower = std::sqrt(hd.c_B * hd.zeta1 * hd.zeta1 * hh * hh * hh * hh /
                          static_cast<double>(N_w));
        ok = cw.d3 >= lower * (1.0 - tol) && cw.d3 <= 2.0 * lower * (1.0 + tol);
      }
      if (!ok) {
        rep.violations += 1;
        if (rep.pass) {
          rep.pass = false;
          int a = c % idx.A, s = (c / idx.A) % idx.S, h = c / (idx.A * idx.S) + 1;
          std::ostringstream os;
          os << "D3 = " << cw.d3 << " outside [" << lower << ", " << 2.0 * lower
             << "] at (k=" << idx.sync_points[w - 1] << ", h=" << h << ", s=" << s
             << ", a=" << a << ")";
          rep.first_violation = os.str();
        }
      }
    }
  return rep;
}

// ---------------------------------------------------------------------------
// Counter concentration
// ---------------------------------------------------------------------------

struct ConcentrationReport {
  bool pass = true;
  int runs = 0;
  int violating_runs = 0;
  double violation_rate = 0.0;
  double zeta0 = 0.0;
  double cap = 0.0;  // 8 zeta0 / c1
  std::string first_violation;

  nlohmann::json to_json() const {
    return {{"pass", pass},        {"runs", runs},
            {"violating_runs", violating_runs}, {"violation_rate", violation_rate},
            {"zeta0", zeta0},      {"cap", cap},
            {"first_violation", first_violation}};
  }
};

// Two-sided concentration of the aggregated counters around k M d_avg: for
// k >= K0(s,a,h) = 4 zeta0 / (c1 M d_avg) the counter must sit inside
// [k M d_avg / 2, 2 k M d_avg]; below K0 it must stay under the Chernoff cap
// 8 zeta0 / c1. A run violates if any (k,h,s,a) does; the empirical rate of
// violating runs must stay within delta. c1 is a calibration constant (the
// band is a sanity check, not a sharp test).
inline ConcentrationReport counter_concentration_check(const std::vector<RunTrace>& traces,
                                                       const Table3<double>& d_avg,
                                                       double delta, double c1 = 1.0 / 3.0) {
  if (traces.empty()) throw ValidationError("counter_concentration_check: no traces");
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("delta must be in (0,1)");
  if (!(c1 > 0.0)) throw ValidationError("c1 must be positive");
  const TraceHeader& hd0 = traces[0].header;
  if (d_avg.max_h != hd0.H || d_avg.S != hd0.S || d_avg.A != hd0.A)
    throw ValidationError("d_avg dimensions disagree with the traces");

  ConcentrationReport rep;
  rep.runs = static_cast<int>(traces.size());
  rep.zeta0 = std::log(2.0 * hd0.S * hd0.A * hd0.K * hd0.H / delta);
  rep.cap = 8.0 * rep.zeta0 / c1;

  for (const RunTrace& trace : traces) {
    const TraceHeader& hd = trace.header;
    if (hd.S != hd0.S || hd.A != hd0.A || hd.H != hd0.H || hd.M != hd0.M || hd.K != hd0.K)
      throw ValidationError("traces in a concentration check must share dimensions");
    Table3<uint64_t> N(hd.H, hd.S, hd.A);
    bool violated = false;
    std::string where;
    size_t i = 0;
    for (int k = 1; k <= hd.K && !violated; ++k) {
      for (int m = 0; m < hd.M; ++m)
        for (int h = 1; h <= hd.H; ++h, ++i) {
          const VisitRecord& v = trace.visits[i];
          N.at(h, v.s, v.a) += 1;
        }
      for (int h = 1; h <= hd.H && !violated; ++h)
        for (int s = 0; s < hd.S && !violated; ++s)
          for (int a = 0; a < hd.A && !violated; ++a) {
            double d = d_avg.at(h, s, a);
            double count = static_cast<double>(N.at(h, s, a));
            bool bad;
            if (d == 0.0) {
              bad = count != 0.0;
            } else {
              double K0 = 4.0 * rep.zeta0 / (c1 * hd.M * d);
              double mean = static_cast<double>(k) * hd.M * d;
              bad = k >= K0 ? (count < 0.5 * mean || count > 2.0 * mean) : count > rep.cap;
            }
            if (bad) {
              violated = true;
              std::ostringstream os;
              os << "N = " << count << " at (k=" << k << ", h=" << h << ", s=" << s
                 << ", a=" << a << ")";
              where = os.str();
            }
          }
    }
    if (violated) {
      rep.violating_runs += 1;
      if (rep.first_violation.empty()) rep.first_violation = where;
    }
  }
  rep.violation_rate = static_cast<double>(rep.violating_runs) / rep.runs;
  rep.pass = rep.violation_rate <= delta;
  return rep;
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

struct ReplayReport {
  bool pass = true;
  std::string detail = "ok";

  nlohmann::json to_json() const { return {{"pass", pass}, {"detail", detail}}; }
};

// Rebuilds the per-agent datasets from the visit records, re-runs the engine
// under the recorded schedule and hyperparameters, and demands bit-identical
// visit records and snapshots.
inline ReplayReport verify_replay(const RunTrace& trace) {
  const TraceHeader& hd = trace.header;
  build_trace_index(trace);  // completeness and consistency checks

  std::vector<OfflineDataset> datasets(hd.M);
  for (int m = 0; m < hd.M; ++m) {
    OfflineDataset& ds = datasets[m];
    ds.agent_id = static_cast<uint32_t>(m);
    ds.S = hd.S; ds.A = hd.A; ds.H = hd.H;
    ds.behavior_policy_id = "replay";
    ds.trajectories.assign(hd.K, Trajectory{});
    for (auto& t : ds.trajectories) t.steps.resize(hd.H);
  }
  size_t i = 0;
  for (int k = 1; k <= hd.K; ++k)
    for (int m = 0; m < hd.M; ++m)
      for (int h = 1; h <= hd.H; ++h, ++i) {
        const VisitRecord& v = trace.visits[i];
        datasets[m].trajectories[k - 1].steps[h - 1] =
            Transition{v.s, v.a, v.r, v.s_next};
      }

  SyncSchedule schedule = trace.schedule();
  HyperParams hyper;
  hyper.delta = hd.delta;
  hyper.c_B = hd.c_B;
  hyper.clip_q = hd.clip_q;
  hyper.alpha_gate = hd.alpha_gate;

  ReplayReport rep;
  double zeta1 = compute_zeta1(hd.S, hd.A, hd.K, hd.M, hd.H, hd.delta);
  if (zeta1 != hd.zeta1) {
    rep.pass = false;
    rep.detail = "header zeta1 does not match recomputation from (S,A,K,M,H,delta)";
    return rep;
  }

  RunResult rerun = run_fedlcbq(hd.S, hd.A, hd.H, datasets, schedule, hyper, true);
  if (!(rerun.trace->visits == trace.visits)) {
    rep.pass = false;
    rep.detail = "replayed visit records differ";
    return rep;
  }
  if (!(rerun.trace->snapshots == trace.snapshots)) {
    rep.pass = false;
    rep.detail = "replayed snapshots differ";
    return rep;
  }
  return rep;
}

}  // namespace fedlcbq
