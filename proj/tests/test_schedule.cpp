#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "fedlcbq/schedule.hpp"

using namespace fedlcbq;

TEST(Schedule, PeriodicHandValues) {
  SyncSchedule s = periodic_schedule(25, 10);
  EXPECT_EQ(s.points, (std::vector<int>{10, 20, 25}));
  EXPECT_EQ(s.intervals(), (std::vector<int>{10, 10, 5}));

  EXPECT_EQ(periodic_schedule(16, 16).points, (std::vector<int>{16}));
  EXPECT_EQ(periodic_schedule(16, 40).points, (std::vector<int>{16}));

  SyncSchedule dense = periodic_schedule(5, 1);
  EXPECT_EQ(dense.points, (std::vector<int>{1, 2, 3, 4, 5}));

  EXPECT_TRUE(s.contains(20));
  EXPECT_FALSE(s.contains(21));
}

TEST(Schedule, ExponentialHandValues) {
  // first interval 5, growth 1.4: gaps 5, 7, 9, then truncation to land on 30
  SyncSchedule s = exponential_schedule(30, 5, 0.4);
  EXPECT_EQ(s.points, (std::vector<int>{5, 12, 21, 30}));
  EXPECT_EQ(s.intervals(), (std::vector<int>{5, 7, 9, 9}));
  EXPECT_EQ(s.tau1, 5);
}

TEST(Schedule, ExponentialGuardKeepsIntervalsGrowing) {
  // gamma so small that floor((1+gamma) tau) would stall at small tau
  SyncSchedule s = exponential_schedule(200, 1, 0.05);
  std::vector<int> gaps = s.intervals();
  for (size_t i = 0; i + 2 < gaps.size(); ++i) EXPECT_GT(gaps[i + 1], gaps[i]);
  int prev = 0;
  for (int t : s.points) {
    EXPECT_GT(t, prev);
    prev = t;
  }
  EXPECT_EQ(s.points.back(), 200);
}

TEST(Schedule, ExplicitRejectsBadShapes) {
  EXPECT_NO_THROW(explicit_schedule(10, {3, 7, 10}));
  EXPECT_THROW(explicit_schedule(10, {}), ValidationError);
  EXPECT_THROW(explicit_schedule(10, {3, 3, 10}), ValidationError);
  EXPECT_THROW(explicit_schedule(10, {7, 3, 10}), ValidationError);
  EXPECT_THROW(explicit_schedule(10, {3, 7}), ValidationError);
  EXPECT_THROW(explicit_schedule(10, {0, 10}), ValidationError);
  EXPECT_THROW(periodic_schedule(0, 1), ValidationError);
  EXPECT_THROW(exponential_schedule(10, 0, 0.5), ValidationError);
  EXPECT_THROW(exponential_schedule(10, 2, 0.0), ValidationError);
}

TEST(Schedule, RatioConditionAcceptsTheTunedFamily) {
  for (int H : {2, 5, 10})
    for (int K : {100, 1000, 10000}) {
      SyncSchedule s = exponential_schedule(K, H, 2.0 / H);
      ScheduleReport rep = validate_schedule(s, H, std::numeric_limits<double>::infinity());
      EXPECT_TRUE(rep.ratio_ok) << "H=" << H << " K=" << K << ": " << rep.message;
      EXPECT_TRUE(rep.pass);
    }
}

TEST(Schedule, RatioConditionRejectsDoubling) {
  SyncSchedule s = explicit_schedule(16, {1, 2, 4, 8, 16});
  // intervals 1,1,2,4,8: the first doubling is from the second to the third
  ScheduleReport r3 = validate_schedule(s, 3, 100.0);
  EXPECT_FALSE(r3.ratio_ok);
  EXPECT_FALSE(r3.pass);
  EXPECT_EQ(r3.first_bad_interval, 2);
  EXPECT_NE(r3.message.find("exceeds"), std::string::npos);
  // at H = 2 the allowed ratio is exactly 2, so doubling is admissible
  ScheduleReport r2 = validate_schedule(s, 2, 100.0);
  EXPECT_TRUE(r2.ratio_ok);
}

TEST(Schedule, FirstIntervalBoundIsEnforced) {
  SyncSchedule s = periodic_schedule(100, 50);
  ScheduleReport ok = validate_schedule(s, 4, 50.0);
  EXPECT_TRUE(ok.tau1_ok);
  ScheduleReport bad = validate_schedule(s, 4, 49.0);
  EXPECT_FALSE(bad.tau1_ok);
  EXPECT_FALSE(bad.pass);
  EXPECT_NE(bad.message.find("tau_1"), std::string::npos);

  double bound = tau1_bound(4, 3, 2.0, 100, 2);
  EXPECT_DOUBLE_EQ(bound, std::sqrt(4.0 * 4.0 * 3.0 * 2.0 * 100.0 / 2.0));
}

TEST(Schedule, ExponentialCountStaysUnderTheCeiling) {
  for (int H : {2, 5, 10})
    for (int K : {100, 1000, 10000}) {
      SyncSchedule s = exponential_schedule(K, H, 2.0 / H);
      double ceiling = exponential_count_bound(H, K);
      EXPECT_LE(static_cast<double>(s.points.size()), ceiling)
          << "H=" << H << " K=" << K << " count=" << s.points.size();
    }
}
