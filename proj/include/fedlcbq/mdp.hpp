#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedlcbq/errors.hpp"
#include "fedlcbq/table.hpp"

namespace fedlcbq {

// Tolerances for validating externally supplied numbers: individual entries
// may stray this far outside their nominal range, probability rows this far
// from summing to one.
inline constexpr double kEntryTolerance = 1e-12;
inline constexpr double kSumTolerance = 1e-10;

// Finite-horizon tabular MDP with step-dependent transitions and rewards.
// P.at(h,s,a,s') is the probability of landing in s' after playing a in s at
// step h; rewards are deterministic per (h,s,a) and live in [0,1].
struct TabularMdp {
  int S = 0, A = 0, H = 0;
  Table4<double> P;
  Table3<double> r;
  std::vector<double> rho;
};

struct DeterministicPolicy {
  int S = 0, A = 0, H = 0;
  Table2<int> action;  // action.at(h,s) in [0,A)

  bool operator==(const DeterministicPolicy&) const = default;
};

struct StochasticPolicy {
  int S = 0, A = 0, H = 0;
  Table3<double> pi;  // pi.at(h,s,a), each (h,s) row a distribution
};

// V spans h = 1..H+1 with an identically zero terminal slice; Q spans h = 1..H.
struct ValueTables {
  int S = 0, A = 0, H = 0;
  Table2<double> V;
  Table3<double> Q;
};

struct OccupancyTables {
  int S = 0, A = 0, H = 0;
  Table2<double> d_state;  // probability of being in s at step h
  Table3<double> d_sa;     // probability of playing (s,a) at step h
};

inline ValueTables make_value_tables(int S, int A, int H) {
  ValueTables t;
  t.S = S; t.A = A; t.H = H;
  t.V = Table2<double>(H + 1, S);
  t.Q = Table3<double>(H, S, A);
  return t;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

inline void check_prob_row(const double* row, int n, const std::string& path) {
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!(row[i] >= -kEntryTolerance && row[i] <= 1.0 + kEntryTolerance)) {
      std::ostringstream os;
      os << path << "[" << i << "] = " << row[i] << " outside [0,1]";
      throw ValidationError(os.str());
    }
    sum += row[i];
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    std::ostringstream os;
    os << path << " sums to " << sum;
    throw ValidationError(os.str());
  }
}

}  // namespace detail

// Checks dimensions, reward range, and that every probability row (transition
// rows and rho) is a distribution. The first violation is reported with its
// index path, e.g. "P[2][1][0] sums to 0.98" (indices in h, s, a order with
// 1-based h as everywhere else).
inline void validate_mdp(const TabularMdp& mdp) {
  if (mdp.S < 1 || mdp.A < 1 || mdp.H < 1) {
    std::ostringstream os;
    os << "mdp dimensions must be positive, got S=" << mdp.S << " A=" << mdp.A
       << " H=" << mdp.H;
    throw ValidationError(os.str());
  }
  if (mdp.P.max_h != mdp.H || mdp.P.S != mdp.S || mdp.P.A != mdp.A || mdp.P.S2 != mdp.S)
    throw ValidationError("P table dimensions disagree with S/A/H");
  if (mdp.r.max_h != mdp.H || mdp.r.S != mdp.S || mdp.r.A != mdp.A)
    throw ValidationError("r table dimensions disagree with S/A/H");
  if (static_cast<int>(mdp.rho.size()) != mdp.S)
    throw ValidationError("rho length disagrees with S");

  for (int h = 1; h <= mdp.H; ++h)
    for (int s = 0; s < mdp.S; ++s)
      for (int a = 0; a < mdp.A; ++a) {
        double rv = mdp.r.at(h, s, a);
        if (!(rv >= -kEntryTolerance && rv <= 1.0 + kEntryTolerance)) {
          std::ostringstream os;
          os << "r[" << h << "][" << s << "][" << a << "] = " << rv << " outside [0,1]";
          throw ValidationError(os.str());
        }
        std::ostringstream path;
        path << "P[" << h << "][" << s << "][" << a << "]";
        detail::check_prob_row(&mdp.P.at(h, s, a, 0), mdp.S, path.str());
      }
  detail::check_prob_row(mdp.rho.data(), mdp.S, "rho");
}

inline void validate_policy(const StochasticPolicy& pi, int S, int A, int H) {
  if (pi.S != S || pi.A != A || pi.H != H)
    throw ValidationError("policy dimensions disagree with the MDP");
  for (int h = 1; h <= H; ++h)
    for (int s = 0; s < S; ++s) {
      std::ostringstream path;
      path << "pi[" << h << "][" << s << "]";
      detail::check_prob_row(&pi.pi.at(h, s, 0), A, path.str());
    }
}

inline StochasticPolicy to_stochastic(const DeterministicPolicy& det) {
  StochasticPolicy sp;
  sp.S = det.S; sp.A = det.A; sp.H = det.H;
  sp.pi = Table3<double>(det.H, det.S, det.A);
  for (int h = 1; h <= det.H; ++h)
    for (int s = 0; s < det.S; ++s)
      sp.pi.at(h, s, det.action.at(h, s)) = 1.0;
  return sp;
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------
// On-disk layout: {"S","A","H","P","r","rho"} with P as [H][S][A][S] and r as
// [H][S][A] nested arrays (the JSON arrays are 0-based; element h-1 holds
// step h).

inline nlohmann::json mdp_to_json(const TabularMdp& mdp) {
  nlohmann::json j;
  j["S"] = mdp.S;
  j["A"] = mdp.A;
  j["H"] = mdp.H;
  auto& P = j["P"] = nlohmann::json::array();
  auto& r = j["r"] = nlohmann::json::array();
  for (int h = 1; h <= mdp.H; ++h) {
    nlohmann::json Ph = nlohmann::json::array(), rh = nlohmann::json::array();
    for (int s = 0; s < mdp.S; ++s) {
      nlohmann::json Ps = nlohmann::json::array(), rs = nlohmann::json::array();
      for (int a = 0; a < mdp.A; ++a) {
        nlohmann::json row = nlohmann::json::array();
        for (int s2 = 0; s2 < mdp.S; ++s2) row.push_back(mdp.P.at(h, s, a, s2));
        Ps.push_back(std::move(row));
        rs.push_back(mdp.r.at(h, s, a));
      }
      Ph.push_back(std::move(Ps));
      rh.push_back(std::move(rs));
    }
    P.push_back(std::move(Ph));
    r.push_back(std::move(rh));
  }
  j["rho"] = mdp.rho;
  return j;
}

inline TabularMdp mdp_from_json(const nlohmann::json& j) {
  TabularMdp mdp;
  try {
    mdp.S = j.at("S").get<int>();
    mdp.A = j.at("A").get<int>();
    mdp.H = j.at("H").get<int>();
    if (mdp.S < 1 || mdp.A < 1 || mdp.H < 1)
      throw ValidationError("mdp dimensions must be positive");
    const auto& P = j.at("P");
    const auto& r = j.at("r");
    if (static_cast<int>(P.size()) != mdp.H) throw ValidationError("P outer length != H");
    if (static_cast<int>(r.size()) != mdp.H) throw ValidationError("r outer length != H");
    mdp.P = Table4<double>(mdp.H, mdp.S, mdp.A, mdp.S);
    mdp.r = Table3<double>(mdp.H, mdp.S, mdp.A);
    for (int h = 1; h <= mdp.H; ++h) {
      if (static_cast<int>(P[h - 1].size()) != mdp.S ||
          static_cast<int>(r[h - 1].size()) != mdp.S)
        throw ValidationError("P/r state dimension mismatch at h=" + std::to_string(h));
      for (int s = 0; s < mdp.S; ++s) {
        if (static_cast<int>(P[h - 1][s].size()) != mdp.A ||
            static_cast<int>(r[h - 1][s].size()) != mdp.A)
          throw ValidationError("P/r action dimension mismatch at h=" + std::to_string(h));
        for (int a = 0; a < mdp.A; ++a) {
          if (static_cast<int>(P[h - 1][s][a].size()) != mdp.S)
            throw ValidationError("P row length mismatch at h=" + std::to_string(h));
          for (int s2 = 0; s2 < mdp.S; ++s2)
            mdp.P.at(h, s, a, s2) = P[h - 1][s][a][s2].get<double>();
          mdp.r.at(h, s, a) = r[h - 1][s][a].get<double>();
        }
      }
    }
    mdp.rho = j.at("rho").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed mdp json: ") + e.what());
  }
  validate_mdp(mdp);
  return mdp;
}

inline TabularMdp load_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mdp file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse mdp json " + path + ": " + e.what());
  }
  return mdp_from_json(j);
}

inline void save_mdp(const std::string& path, const TabularMdp& mdp) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write mdp file: " + path);
  out << mdp_to_json(mdp).dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace fedlcbq
