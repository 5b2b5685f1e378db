#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "fedlcbq/errors.hpp"

namespace fedlcbq {

enum class ScheduleKind { periodic, exponential, explicit_points };

// Synchronization schedule: the episode indices at which agents and server
// exchange tables. Strictly increasing, and the last point is always K (the
// final aggregation is mandatory).
struct SyncSchedule {
  ScheduleKind kind = ScheduleKind::explicit_points;
  int K = 0;
  std::vector<int> points;

  // generator parameters, kept for reporting
  int tau = 0;        // periodic
  double gamma = 0.0; // exponential
  int tau1 = 0;       // exponential first interval

  std::vector<int> intervals() const {
    std::vector<int> out;
    int prev = 0;
    for (int t : points) { out.push_back(t - prev); prev = t; }
    return out;
  }

  bool contains(int k) const {
    return std::binary_search(points.begin(), points.end(), k);
  }
};

inline void validate_schedule_shape(const SyncSchedule& s) {
  if (s.K < 1) throw ValidationError("schedule K must be >= 1");
  if (s.points.empty()) throw ValidationError("schedule has no sync points");
  int prev = 0;
  for (int t : s.points) {
    if (t <= prev)
      throw ValidationError("schedule points must be strictly increasing and >= 1");
    prev = t;
  }
  if (s.points.back() != s.K)
    throw ValidationError("schedule must end at K=" + std::to_string(s.K) +
                          ", got " + std::to_string(s.points.back()));
}

inline SyncSchedule periodic_schedule(int K, int tau) {
  if (K < 1 || tau < 1) throw ValidationError("periodic schedule requires K >= 1, tau >= 1");
  SyncSchedule s;
  s.kind = ScheduleKind::periodic;
  s.K = K;
  s.tau = tau;
  for (int t = tau; t < K; t += tau) s.points.push_back(t);
  s.points.push_back(K);  // truncation shrinks only the final interval
  validate_schedule_shape(s);
  return s;
}

// Intervals tau_1 = H, tau_i = floor((1+gamma) tau_{i-1}), truncated so the
// last point lands exactly on K. The max(. , tau+1) guard keeps the recursion
// moving when gamma*tau < 1 (otherwise the floor would stall); it only fires
// in that regime and never increases an interval beyond the ratio condition.
inline SyncSchedule exponential_schedule(int K, int H, double gamma) {
  if (K < 1 || H < 1) throw ValidationError("exponential schedule requires K >= 1, H >= 1");
  if (!(gamma > 0.0)) throw ValidationError("exponential schedule requires gamma > 0");
  SyncSchedule s;
  s.kind = ScheduleKind::exponential;
  s.K = K;
  s.gamma = gamma;
  s.tau1 = H;
  long long t = 0, tau = H;
  while (t + tau < K) {
    t += tau;
    s.points.push_back(static_cast<int>(t));
    tau = std::max(static_cast<long long>(std::floor((1.0 + gamma) * static_cast<double>(tau))),
                   tau + 1);
  }
  s.points.push_back(K);
  validate_schedule_shape(s);
  return s;
}

inline SyncSchedule explicit_schedule(int K, std::vector<int> points) {
  SyncSchedule s;
  s.kind = ScheduleKind::explicit_points;
  s.K = K;
  s.points = std::move(points);
  validate_schedule_shape(s);
  return s;
}

// ---------------------------------------------------------------------------
// Schedule quality checks
// ---------------------------------------------------------------------------

struct ScheduleReport {
  bool pass = true;
  bool tau1_ok = true;
  bool ratio_ok = true;
  int first_bad_interval = -1;  // 1-based index u of the first (tau_u, tau_{u+1}) violation
  double tau1 = 0.0;
  double tau1_bound = 0.0;
  double max_ratio_allowed = 0.0;
  std::string message = "ok";
};

// First-interval bound the theory puts on tau_1 when the average
// concentrability is known: sqrt(H^2 S C*_avg K / M).
inline double tau1_bound(int H, int S, double avg_conc, int K, int M) {
  return std::sqrt(static_cast<double>(H) * H * S * avg_conc * K / M);
}

// Checks tau_1 <= bound_tau1 and the interval growth condition
// tau_{u+1}/tau_u <= 1 + 2/H. The ratio test runs in integer arithmetic
// (tau_{u+1} * H <= tau_u * (H+2)) so there is no floating-point ambiguity.
inline ScheduleReport validate_schedule(const SyncSchedule& s, int H, double bound_tau1) {
  validate_schedule_shape(s);
  ScheduleReport rep;
  std::vector<int> tau = s.intervals();
  rep.tau1 = tau[0];
  rep.tau1_bound = bound_tau1;
  rep.max_ratio_allowed = 1.0 + 2.0 / H;
  if (static_cast<double>(tau[0]) > bound_tau1) {
    rep.tau1_ok = false;
    rep.pass = false;
  }
  for (size_t u = 0; u + 1 < tau.size(); ++u) {
    if (static_cast<long long>(tau[u + 1]) * H > static_cast<long long>(tau[u]) * (H + 2)) {
      rep.ratio_ok = false;
      rep.pass = false;
      rep.first_bad_interval = static_cast<int>(u + 1);
      break;
    }
  }
  if (!rep.pass) {
    std::ostringstream os;
    if (!rep.tau1_ok) os << "tau_1 = " << tau[0] << " exceeds bound " << bound_tau1 << "; ";
    if (!rep.ratio_ok)
      os << "interval ratio tau_" << rep.first_bad_interval + 1 << "/tau_"
         << rep.first_bad_interval << " = " << tau[rep.first_bad_interval] << "/"
         << tau[rep.first_bad_interval - 1] << " exceeds 1 + 2/H";
    rep.message = os.str();
  }
  return rep;
}

// Sync-count ceiling for exponential schedules: 1 + (1+H) ln(K/H^2 + 1).
inline double exponential_count_bound(int H, int K) {
  return 1.0 + (1.0 + H) * std::log(static_cast<double>(K) / (static_cast<double>(H) * H) + 1.0);
}

}  // namespace fedlcbq
