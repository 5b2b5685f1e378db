// Acceptance gate: ten end-to-end checks, one printed verdict line each.
// Tolerances are pinned here and nowhere else.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fedlcbq/diagnostics.hpp"
#include "fedlcbq/experiment.hpp"
#include "fedlcbq/generators.hpp"
#include "test_util.hpp"

namespace {

using nlohmann::json;
using namespace fedlcbq;

bool conclude(const char* tag, const char* name) {
  bool ok = !::testing::Test::HasFailure();
  std::printf("%s %s: %s\n", tag, name, ok ? "PASS" : "FAIL");
  std::fflush(stdout);
  return ok;
}

double v1_of(const TabularMdp& mdp, const Table2<double>& V) {
  double v = 0.0;
  for (int s = 0; s < mdp.S; ++s) v += mdp.rho[s] * V.at(1, s);
  return v;
}

// C1: the four-term error split reproduces Q^pi - Q_k to float accumulation
// error at every sync point, every cell, for any comparator policy.
TEST(Acceptance, C1_ErrorDecompositionIsExactEverywhere) {
  constexpr double kResidualTol = 1e-8;
  constexpr int kProblems = 50;

  double worst = 0.0;
  for (int i = 0; i < kProblems; ++i) {
    testutil::FuzzConfig fc = testutil::make_fuzz_config(1000 + i);
    RunResult res = testutil::run_fuzz(fc, true);
    const RunTrace& trace = *res.trace;
    DpResult star = value_iteration(fc.mdp);

    DecompositionReport rep = verify_decomposition(trace, fc.mdp, star.pi, kResidualTol);
    EXPECT_TRUE(rep.pass) << "seed " << 1000 + i << ": " << rep.to_json().dump();
    worst = std::max(worst, rep.max_abs_residual);

    if (i % 5 == 0) {  // a deliberately suboptimal comparator now and then
      DeterministicPolicy shifted = star.pi;
      for (int h = 1; h <= fc.mdp.H; ++h)
        for (int s = 0; s < fc.mdp.S; ++s)
          shifted.action.at(h, s) = (star.pi.action.at(h, s) + 1) % fc.mdp.A;
      DecompositionReport rep2 = verify_decomposition(trace, fc.mdp, shifted, kResidualTol);
      EXPECT_TRUE(rep2.pass) << "seed " << 1000 + i << " (shifted comparator)";
      worst = std::max(worst, rep2.max_abs_residual);
    }
  }
  EXPECT_LE(worst, kResidualTol);
  EXPECT_TRUE(conclude("C1", "exact error decomposition at every sync"));
}

// C2: reconstructed aggregation weights obey the per-episode cap, the round
// cap, the unit sum, the square-sum cap and the telescoping identity, with
// zero in-round spread, across a thousand fuzzed runs.
TEST(Acceptance, C2_WeightIdentitiesHoldAcrossAThousandRuns) {
  constexpr int kTraces = 1000;
  constexpr double kTelescopeTol = 1e-9;
  testutil::FuzzLimits lim{.max_K = 100, .max_syncs = 25};

  uint64_t cells = 0, violations = 0;
  double worst_sum = 0.0, worst_gap = 0.0, worst_spread = 0.0;
  for (int i = 0; i < kTraces; ++i) {
    testutil::FuzzConfig fc = testutil::make_fuzz_config(2000 + i, lim);
    RunResult res = testutil::run_fuzz(fc, true);
    WeightBoundsReport rep = verify_weight_bounds(*res.trace);
    EXPECT_TRUE(rep.pass) << "seed " << 2000 + i << ": " << rep.first_violation;
    cells += rep.cells_checked;
    violations += rep.violations;
    worst_sum = std::max(worst_sum, rep.max_weight_sum);
    worst_gap = std::max(worst_gap, rep.worst_telescoping_gap);
    worst_spread = std::max(worst_spread, rep.in_round_stddev_max);
  }
  EXPECT_GT(cells, 0u);
  EXPECT_EQ(violations, 0u);
  EXPECT_LE(worst_sum, 1.0 + 1e-12);
  EXPECT_LE(worst_gap, kTelescopeTol);
  EXPECT_EQ(worst_spread, 0.0);
  EXPECT_TRUE(conclude("C2", "aggregation weight caps and telescoping"));
}

// C3: the accumulated penalty sits inside [sqrt(c_B zeta1^2 H^4 / N),
// 2 sqrt(.)] wherever the cell has data and is exactly zero elsewhere.
TEST(Acceptance, C3_AccumulatedPenaltyStaysInsideItsBracket) {
  constexpr int kTraces = 300;
  testutil::FuzzLimits lim{.max_K = 100, .max_syncs = 25};

  uint64_t cells = 0, violations = 0;
  for (int i = 0; i < kTraces; ++i) {
    testutil::FuzzConfig fc = testutil::make_fuzz_config(3000 + i, lim);
    RunResult res = testutil::run_fuzz(fc, true);
    D3BoundsReport rep = verify_d3_bounds(*res.trace);
    EXPECT_TRUE(rep.pass) << "seed " << 3000 + i << ": " << rep.first_violation;
    cells += rep.cells_checked;
    violations += rep.violations;
  }
  EXPECT_GT(cells, 0u);
  EXPECT_EQ(violations, 0u);
  EXPECT_TRUE(conclude("C3", "penalty bracket at every cell"));
}

// C4: with the analysis constants (c_B = 81, delta = 0.01) the pessimistic
// value never overshoots the true value of the extracted policy, at any
// (h, s) and any sync, in more than one of fifty seeded runs.
TEST(Acceptance, C4_PessimisticValuesLowerBoundTheLearnedPolicy) {
  constexpr int kRuns = 50;
  constexpr int kK = 200, kM = 2;
  constexpr double kSlack = 1e-9;

  TabularMdp mdp = make_random_mdp(4, 2, 3, 42);
  BehaviorSpec uniform;
  uniform.kind = BehaviorKind::uniform;
  StochasticPolicy mu = make_behavior_policy(mdp, uniform);
  SyncSchedule schedule = exponential_schedule(kK, mdp.H, 2.0 / mdp.H);
  HyperParams hyper;  // delta = 0.01, c_B = 81
  std::string id = behavior_id(uniform);

  int bad_runs = 0;
  for (int i = 0; i < kRuns; ++i) {
    std::vector<OfflineDataset> datasets;
    for (int m = 0; m < kM; ++m)
      datasets.push_back(sample_dataset(mdp, mu, kK, static_cast<uint32_t>(m), 9000 + i, id));
    RunResult res = run_fedlcbq(mdp.S, mdp.A, mdp.H, datasets, schedule, hyper, false);
    bool violated = false;
    for (const SyncPoint& sp : res.sync_points) {
      PolicyValue pv = evaluate_policy(mdp, sp.policy);
      for (int h = 1; h <= mdp.H && !violated; ++h)
        for (int s = 0; s < mdp.S && !violated; ++s)
          if (sp.V.at(h, s) > pv.tables.V.at(h, s) + kSlack) violated = true;
    }
    if (violated) ++bad_runs;
  }
  EXPECT_LE(bad_runs, 1) << bad_runs << " of " << kRuns << " runs broke pessimism";
  EXPECT_TRUE(conclude("C4", "pessimism against the extracted policy"));
}

// C5: the gated value update makes the global V tables cellwise non-decreasing
// from one sync to the next, with no exceptions.
TEST(Acceptance, C5_GlobalValuesNeverDecreaseAcrossSyncs) {
  constexpr int kTraces = 40;

  uint64_t violations = 0, comparisons = 0;
  for (int i = 0; i < kTraces; ++i) {
    testutil::FuzzConfig fc = testutil::make_fuzz_config(5000 + i);
    RunResult res = testutil::run_fuzz(fc, false);
    for (size_t w = 1; w < res.sync_points.size(); ++w) {
      const Table2<double>& prev = res.sync_points[w - 1].V;
      const Table2<double>& cur = res.sync_points[w].V;
      for (int h = 1; h <= fc.mdp.H + 1; ++h)
        for (int s = 0; s < fc.mdp.S; ++s, ++comparisons)
          if (cur.at(h, s) < prev.at(h, s)) ++violations;
    }
  }
  EXPECT_GT(comparisons, 0u);
  EXPECT_EQ(violations, 0u);
  EXPECT_TRUE(conclude("C5", "monotone global values"));
}

// C6: holding per-agent data fixed and growing the fleet shrinks the mean
// final value gap, with the eight-agent fleet at most 0.7x the single agent.
TEST(Acceptance, C6_GrowingTheFleetShrinksTheValueGap) {
  constexpr int kReps = 20;
  constexpr int kPerAgentK = 2000;
  constexpr double kCB = 0.01;

  TabularMdp mdp = make_random_mdp(4, 2, 3, 7);
  json base = {{"mdp", mdp_to_json(mdp)},
               {"gen_data",
                {{"K", kPerAgentK},
                 {"M", 1},
                 {"behavior", {{"kind", "epsilon_optimal"}, {"epsilon", 0.5}}}}},
               {"schedule", {{"kind", "exponential"}, {"tau1", 3}, {"gamma", 2.0 / 3.0}}},
               {"delta", 0.01},
               {"c_B", kCB}};
  json cfg = {{"base", base},
              {"axes", {{"gen_data.M", {1, 2, 4, 8}}}},
              {"replications", kReps},
              {"seed", 606}};

  SweepOutcome sw = run_sweep(cfg);
  for (const SweepRun& r : sw.runs) EXPECT_EQ(r.status, "ok");

  std::vector<double> means;
  for (const auto& row : sw.summary) {
    EXPECT_EQ(row.at("runs_ok").get<int>(), kReps);
    means.push_back(row.at("mean_final_value_gap").get<double>());
  }
  ASSERT_EQ(means.size(), 4u);
  EXPECT_GT(means[0], 0.0) << "single-agent runs already solve the task; nothing to speed up";
  for (size_t i = 1; i < means.size(); ++i)
    EXPECT_LE(means[i], means[i - 1] + 1e-12)
        << "mean gap increased from M=" << (1 << (i - 1)) << " to M=" << (1 << i);
  EXPECT_LE(means[3], 0.7 * means[0]);
  EXPECT_TRUE(conclude("C6", "fleet growth shrinks the final value gap"));
}

// C7: on the half-coverage family a lone masked agent is stuck at half the
// optimal value while two complementary agents together recover most of it.
TEST(Acceptance, C7_SplitCoverageMakesCollaborationNecessary) {
  constexpr int kSeeds = 10;
  constexpr int kK = 3000;
  constexpr double kCB = 0.002;

  TabularMdp mdp = make_split_mdp(2, 3, 4);
  DpResult star = value_iteration(mdp);
  double v_star = v1_of(mdp, star.tables.V);
  EXPECT_EQ(v_star, 4.0);

  json mdp_json = mdp_to_json(mdp);
  json schedule = {{"kind", "exponential"}, {"tau1", 4}, {"gamma", 0.5}};
  json mask0 = {{"kind", "masked_uniform"}, {"single_action", 0}};

  int single_stuck = 0, fleet_close = 0;
  for (int i = 0; i < kSeeds; ++i) {
    json single = {{"mdp", mdp_json},
                   {"gen_data",
                    {{"K", kK}, {"M", 1}, {"seed", 7000 + i}, {"behaviors", json::array({mask0})}}},
                   {"schedule", schedule},
                   {"c_B", kCB}};
    double gap_single = run_experiment(single).final_value_gap;
    if (gap_single >= 0.5 * v_star - 1e-9) ++single_stuck;

    json fleet = {{"mdp", mdp_json},
                  {"gen_data", {{"K", kK}, {"M", 2}, {"seed", 7000 + i}, {"behavior", "split"}}},
                  {"schedule", schedule},
                  {"c_B", kCB}};
    double gap_fleet = run_experiment(fleet).final_value_gap;
    if (gap_fleet <= 0.2 * v_star + 1e-9) ++fleet_close;
  }
  EXPECT_GE(single_stuck, 6) << single_stuck << "/" << kSeeds;
  EXPECT_GE(fleet_close, 6) << fleet_close << "/" << kSeeds;
  EXPECT_TRUE(conclude("C7", "collaboration beats half coverage"));
}

// C8: the tuned exponential family keeps the number of syncs under
// 1 + (1+H) ln(K/H^2 + 1) and satisfies the interval growth condition.
TEST(Acceptance, C8_ExponentialSchedulesStayLogarithmic) {
  const int horizons[] = {2, 5, 10};
  const int episode_counts[] = {100, 1000, 10000};

  for (int H : horizons)
    for (int K : episode_counts) {
      SyncSchedule s = exponential_schedule(K, H, 2.0 / H);
      double bound = exponential_count_bound(H, K);
      EXPECT_LE(static_cast<double>(s.points.size()), bound)
          << "H=" << H << " K=" << K << " count=" << s.points.size();
      ScheduleReport rep =
          validate_schedule(s, H, std::numeric_limits<double>::infinity());
      EXPECT_TRUE(rep.pass) << "H=" << H << " K=" << K << ": " << rep.message;
      EXPECT_TRUE(rep.ratio_ok);
    }
  EXPECT_TRUE(conclude("C8", "logarithmic communication schedules"));
}

// C9: aggregated visit counters track k M d_avg inside a factor-of-two band
// (or stay under the small-k cap), violated in at most a delta fraction of
// one hundred seeded runs.
TEST(Acceptance, C9_CountersConcentrateAroundTheBehaviorOccupancy) {
  constexpr int kRuns = 100;
  constexpr int kK = 500, kM = 4;
  constexpr double kDelta = 0.05;

  TabularMdp mdp = make_random_mdp(2, 1, 1, 99);
  BehaviorSpec uniform;
  uniform.kind = BehaviorKind::uniform;
  StochasticPolicy mu = make_behavior_policy(mdp, uniform);
  Table3<double> d_avg = occupancy_distributions(mdp, mu).d_sa;
  SyncSchedule schedule = periodic_schedule(kK, 100);
  HyperParams hyper;
  std::string id = behavior_id(uniform);

  std::vector<RunTrace> traces;
  traces.reserve(kRuns);
  for (int i = 0; i < kRuns; ++i) {
    std::vector<OfflineDataset> datasets;
    for (int m = 0; m < kM; ++m)
      datasets.push_back(sample_dataset(mdp, mu, kK, static_cast<uint32_t>(m), 8000 + i, id));
    RunResult res = run_fedlcbq(mdp.S, mdp.A, mdp.H, datasets, schedule, hyper, true);
    traces.push_back(std::move(*res.trace));
  }

  ConcentrationReport rep = counter_concentration_check(traces, d_avg, kDelta);
  EXPECT_LE(rep.violation_rate, kDelta) << rep.first_violation;
  EXPECT_TRUE(rep.pass);
  EXPECT_TRUE(conclude("C9", "counter concentration across runs"));
}

// C10: the planner agrees with brute-force policy enumeration, and sampled
// occupancy matches the closed-form distribution within sampling error.
TEST(Acceptance, C10_GroundTruthOraclesAgree) {
  constexpr double kDpTol = 1e-12;

  for (int i = 0; i < 20; ++i) {
    int S = 2 + (i % 2), A = 1 + ((i / 2) % 2), H = 1 + (i % 3);
    TabularMdp mdp = make_random_mdp(S, A, H, 9100 + i);
    DpResult star = value_iteration(mdp);
    double v_star = v1_of(mdp, star.tables.V);

    long long total = 1;
    for (int c = 0; c < S * H; ++c) total *= A;
    double best = -1.0;
    for (long long code = 0; code < total; ++code) {
      DeterministicPolicy pol;
      pol.S = S; pol.A = A; pol.H = H;
      pol.action = Table2<int>(H, S);
      long long rem = code;
      for (int h = 1; h <= H; ++h)
        for (int s = 0; s < S; ++s) {
          pol.action.at(h, s) = static_cast<int>(rem % A);
          rem /= A;
        }
      best = std::max(best, evaluate_policy(mdp, pol).v1_rho);
    }
    EXPECT_NEAR(v_star, best, kDpTol) << "seed " << 9100 + i;
    EXPECT_NEAR(evaluate_policy(mdp, star.pi).v1_rho, best, kDpTol) << "seed " << 9100 + i;
  }

  constexpr int kEpisodes = 50000;
  TabularMdp mdp = make_random_mdp(3, 2, 3, 515);
  BehaviorSpec uniform;
  uniform.kind = BehaviorKind::uniform;
  StochasticPolicy mu = make_behavior_policy(mdp, uniform);
  OfflineDataset ds = sample_dataset(mdp, mu, kEpisodes, 0, 424242, behavior_id(uniform));
  OccupancyTables emp = empirical_occupancy(ds);
  OccupancyTables exact = occupancy_distributions(mdp, mu);
  for (int h = 1; h <= mdp.H; ++h)
    for (int s = 0; s < mdp.S; ++s)
      for (int a = 0; a < mdp.A; ++a) {
        double p = exact.d_sa.at(h, s, a);
        double sigma = std::sqrt(p * (1.0 - p) / kEpisodes);
        EXPECT_NEAR(emp.d_sa.at(h, s, a), p, 3.0 * sigma + 1e-12)
            << "(h=" << h << ", s=" << s << ", a=" << a << ")";
      }
  EXPECT_TRUE(conclude("C10", "planner and sampler ground truth"));
}

}  // namespace
