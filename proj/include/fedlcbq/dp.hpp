#pragma once

#include <limits>
#include <vector>

#include "fedlcbq/mdp.hpp"

namespace fedlcbq {

// Exact dynamic programming on the tabular model. These routines are the
// ground truth everything else is measured against, so they stay free of any
// learning-rate or penalty logic.

struct DpResult {
  ValueTables tables;
  DeterministicPolicy pi;  // smallest-index argmax at every (h,s)
};

struct PolicyValue {
  ValueTables tables;
  double v1_rho = 0.0;  // <rho, V_1>
};

namespace detail {

inline double dot_next(const TabularMdp& mdp, const Table2<double>& V, int h, int s, int a) {
  double acc = 0.0;
  for (int s2 = 0; s2 < mdp.S; ++s2) acc += mdp.P.at(h, s, a, s2) * V.at(h + 1, s2);
  return acc;
}

}  // namespace detail

// Backward recursion Q*_h = r_h + P_h V*_{h+1}, V*_h = max_a Q*_h. Ties in the
// argmax break toward the smallest action index.
inline DpResult value_iteration(const TabularMdp& mdp) {
  DpResult out;
  out.tables = make_value_tables(mdp.S, mdp.A, mdp.H);
  out.pi.S = mdp.S; out.pi.A = mdp.A; out.pi.H = mdp.H;
  out.pi.action = Table2<int>(mdp.H, mdp.S);
  for (int h = mdp.H; h >= 1; --h)
    for (int s = 0; s < mdp.S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      int best_a = 0;
      for (int a = 0; a < mdp.A; ++a) {
        double q = mdp.r.at(h, s, a) + detail::dot_next(mdp, out.tables.V, h, s, a);
        out.tables.Q.at(h, s, a) = q;
        if (q > best) { best = q; best_a = a; }
      }
      out.tables.V.at(h, s) = best;
      out.pi.action.at(h, s) = best_a;
    }
  return out;
}

inline PolicyValue evaluate_policy(const TabularMdp& mdp, const StochasticPolicy& pi) {
  validate_policy(pi, mdp.S, mdp.A, mdp.H);
  PolicyValue out;
  out.tables = make_value_tables(mdp.S, mdp.A, mdp.H);
  for (int h = mdp.H; h >= 1; --h)
    for (int s = 0; s < mdp.S; ++s) {
      double v = 0.0;
      for (int a = 0; a < mdp.A; ++a) {
        double q = mdp.r.at(h, s, a) + detail::dot_next(mdp, out.tables.V, h, s, a);
        out.tables.Q.at(h, s, a) = q;
        v += pi.pi.at(h, s, a) * q;
      }
      out.tables.V.at(h, s) = v;
    }
  for (int s = 0; s < mdp.S; ++s) out.v1_rho += mdp.rho[s] * out.tables.V.at(1, s);
  return out;
}

inline PolicyValue evaluate_policy(const TabularMdp& mdp, const DeterministicPolicy& pi) {
  return evaluate_policy(mdp, to_stochastic(pi));
}

// Forward recursion: d_state[1] = rho, d_sa[h] = d_state[h] * pi_h,
// d_state[h+1] = d_sa[h] P_h.
inline OccupancyTables occupancy_distributions(const TabularMdp& mdp, const StochasticPolicy& pi) {
  validate_policy(pi, mdp.S, mdp.A, mdp.H);
  OccupancyTables out;
  out.S = mdp.S; out.A = mdp.A; out.H = mdp.H;
  out.d_state = Table2<double>(mdp.H, mdp.S);
  out.d_sa = Table3<double>(mdp.H, mdp.S, mdp.A);
  for (int s = 0; s < mdp.S; ++s) out.d_state.at(1, s) = mdp.rho[s];
  for (int h = 1; h <= mdp.H; ++h) {
    for (int s = 0; s < mdp.S; ++s)
      for (int a = 0; a < mdp.A; ++a)
        out.d_sa.at(h, s, a) = out.d_state.at(h, s) * pi.pi.at(h, s, a);
    if (h == mdp.H) break;
    for (int s2 = 0; s2 < mdp.S; ++s2) {
      double acc = 0.0;
      for (int s = 0; s < mdp.S; ++s)
        for (int a = 0; a < mdp.A; ++a)
          acc += out.d_sa.at(h, s, a) * mdp.P.at(h, s, a, s2);
      out.d_state.at(h + 1, s2) = acc;
    }
  }
  return out;
}

namespace detail {

// max over cells of min{d_opt, 1/S} / d_mu with 0/0 treated as 0 and a
// positive numerator over a zero denominator as the infinite sentinel.
// Occupancies are sums of products of non-negative terms, so exact zeros are
// structural and safe to compare against 0.0.
inline double clipped_ratio_max(const Table3<double>& d_opt, const Table3<double>& d_mu,
                                int S, int A, int H) {
  double clip = 1.0 / static_cast<double>(S);
  double worst = 0.0;
  for (int h = 1; h <= H; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        double num = std::min(d_opt.at(h, s, a), clip);
        if (num == 0.0) continue;
        double den = d_mu.at(h, s, a);
        if (den == 0.0) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, num / den);
      }
  return worst;
}

}  // namespace detail

// Single-policy clipped concentrability from precomputed occupancies: finite
// exactly when the behavior covers the optimal policy's (clipped) footprint.
inline double clipped_concentrability(const OccupancyTables& d_opt,
                                      const OccupancyTables& d_behavior, int S) {
  if (d_opt.S != d_behavior.S || d_opt.A != d_behavior.A || d_opt.H != d_behavior.H ||
      d_opt.S != S)
    throw ValidationError("clipped_concentrability: occupancy dimensions disagree");
  return detail::clipped_ratio_max(d_opt.d_sa, d_behavior.d_sa, S, d_opt.A, d_opt.H);
}

// Same ratio against the elementwise average of the agents' occupancies;
// finite under collective coverage even when every individual ratio is not.
inline double average_concentrability(const OccupancyTables& d_opt,
                                      const std::vector<OccupancyTables>& d_behaviors, int S) {
  if (d_behaviors.empty())
    throw ValidationError("average_concentrability: empty behavior list");
  if (d_opt.S != S) throw ValidationError("average_concentrability: S disagrees");
  Table3<double> d_avg(d_opt.H, d_opt.S, d_opt.A);
  for (const auto& d : d_behaviors) {
    if (d.S != d_opt.S || d.A != d_opt.A || d.H != d_opt.H)
      throw ValidationError("average_concentrability: occupancy dimensions disagree");
    for (size_t i = 0; i < d_avg.data.size(); ++i) d_avg.data[i] += d.d_sa.data[i];
  }
  double inv_m = 1.0 / static_cast<double>(d_behaviors.size());
  for (double& x : d_avg.data) x *= inv_m;
  return detail::clipped_ratio_max(d_opt.d_sa, d_avg, S, d_opt.A, d_opt.H);
}

inline double clipped_concentrability(const TabularMdp& mdp, const StochasticPolicy& behavior) {
  DpResult opt = value_iteration(mdp);
  OccupancyTables d_opt = occupancy_distributions(mdp, to_stochastic(opt.pi));
  OccupancyTables d_mu = occupancy_distributions(mdp, behavior);
  return clipped_concentrability(d_opt, d_mu, mdp.S);
}

inline double average_concentrability(const TabularMdp& mdp,
                                      const std::vector<StochasticPolicy>& behaviors) {
  if (behaviors.empty())
    throw ValidationError("average_concentrability: empty behavior list");
  DpResult opt = value_iteration(mdp);
  OccupancyTables d_opt = occupancy_distributions(mdp, to_stochastic(opt.pi));
  std::vector<OccupancyTables> ds;
  ds.reserve(behaviors.size());
  for (const auto& mu : behaviors) ds.push_back(occupancy_distributions(mdp, mu));
  return average_concentrability(d_opt, ds, mdp.S);
}

}  // namespace fedlcbq
