#include <gtest/gtest.h>

#include <sstream>

#include "arterial/arterial.hpp"

using namespace arterial;

namespace {

Detector det_with(std::vector<double> times) {
  Detector d{"W_in", "W_in", 1000, {}};
  VehicleId id = 1;
  for (double t : times) d.log.push_back({id++, t});
  return d;
}

ScenarioConfig short_single(double duration = 300) {
  auto cfg = build_single_intersection(std::nullopt, 120, 3);
  cfg.duration = duration;
  return cfg;
}

}  // namespace

TEST(Throughput, SeriesAndTotals) {
  const auto d = det_with({1.0, 3.5, 3599.0, 3600.0, 7300.0});
  const auto s = throughput_series(d, 3600, 7200);
  ASSERT_EQ(s.flows_vph.size(), 4u);
  EXPECT_NEAR(s.flows_vph[0], 1440.0, 1e-9);
  EXPECT_EQ(s.totals, (std::vector<std::size_t>{3, 1}));  // 7300 lies past the horizon
}

TEST(Throughput, WindowsAdditive) {
  std::vector<double> ts;
  for (int i = 0; i < 500; ++i) ts.push_back(i * 7.3);
  const auto d = det_with(ts);
  for (double split : {0.0, 100.0, 1234.5, 3650.0})
    EXPECT_EQ(count_in_window(d, 0, split) + count_in_window(d, split, 3650),
              count_in_window(d, 0, 3650));
  EXPECT_EQ(count_in_window(d, 7.3, 14.6), 1u);  // half-open
}

TEST(Throughput, EmptyFirstMinute) {
  ScenarioConfig cfg = short_single(60);
  cfg.demand.clear();
  const auto r = run(cfg);
  EXPECT_EQ(first_minute_count(r, "W_in"), 0u);
  EXPECT_THROW(first_minute_count(r, "nope"), ConfigError);
}

TEST(Capacity, ZeroDemandIsZero) {
  ScenarioConfig cfg = short_single(120);
  cfg.demand.clear();
  const auto r = run(cfg);
  const auto cap = capacity_from(r, cfg, "A", {60, 1});
  EXPECT_EQ(cap.total, 0.0);
  EXPECT_EQ(cap.per_approach.size(), 2u);
  EXPECT_THROW(capacity_from(r, cfg, "Z", {60, 1}), ConfigError);
}

TEST(Ols, Fits) {
  EXPECT_FALSE(ols({1.0}, {2.0}));
  EXPECT_FALSE(ols({}, {}));
  EXPECT_FALSE(ols({1, 1}, {2, 3}));
  const auto f = ols({0, 1, 2, 3}, {1, 3, 5, 7});
  ASSERT_TRUE(f);
  EXPECT_NEAR(f->slope, 2.0, 1e-12);
  EXPECT_NEAR(f->intercept, 1.0, 1e-12);
  EXPECT_NEAR(f->r2, 1.0, 1e-12);
  const auto g = ols({0, 1, 2}, {0, 1, 0});
  ASSERT_TRUE(g);
  EXPECT_NEAR(g->r2, 0.0, 1e-12);
}

TEST(Sweep, SingleValueEqualsDirectRun) {
  const auto base = short_single();
  const auto s = sweep(base, "cycle", {60});
  ASSERT_EQ(s.outcomes.size(), 1u);
  const auto cfg = apply_parameter(base, "cycle", 60);
  EXPECT_DOUBLE_EQ(cfg.signal_plans[0].plan.phases[0].nominal_green, 27.0);
  const auto r = run(cfg);
  EXPECT_DOUBLE_EQ(s.outcomes[0], double(intersection_crossings(r, cfg, "A", 0, r.clock + 1)));
  EXPECT_GT(s.outcomes[0], 0.0);
}

TEST(Sweep, UnknownParameter) {
  EXPECT_THROW(sweep(short_single(), "warp_factor", {1}), ConfigError);
  EXPECT_THROW(apply_parameter(short_single(), "cycle", 5), ConfigError);
}

TEST(Sweep, DownstreamDistanceRebuilds) {
  const auto base = build_single_intersection(100.0, 120, 3, {.a_max = 2.0});
  const auto cfg = apply_parameter(base, "downstream_distance", 500);
  EXPECT_DOUBLE_EQ(cfg.network.lanes.at("AB").length, 500.0);
  EXPECT_DOUBLE_EQ(cfg.params(VehicleClass::manual).a_max, 2.0);
  EXPECT_THROW(apply_parameter(build_arterial(2, 300, 0), "downstream_distance", 500), ConfigError);
}

TEST(ShareCurve, EqualSharesIdentical) {
  auto base = build_arterial(1, 300, 0.0);
  const auto s = smart_share_curve(base, {0.5, 0.5}, "I0", {300, 1});
  ASSERT_EQ(s.outcomes.size(), 2u);
  EXPECT_EQ(s.outcomes[0], s.outcomes[1]);
  EXPECT_FALSE(s.fit);  // zero spread in x
}

TEST(ShareCurve, TwoPointsFitExactly) {
  auto base = build_arterial(1, 300, 0.0);
  const auto s = smart_share_curve(base, {0.0, 1.0}, "I0", {300, 1});
  ASSERT_TRUE(s.fit);
  EXPECT_NEAR(s.fit->r2, 1.0, 1e-12);
  EXPECT_THROW(smart_share_curve(base, {1.5}, "I0", {300, 1}), ConfigError);
}

TEST(Conservation, ExitsMatchCreatedMinusInNetwork) {
  auto cfg = build_arterial(2, 300, 0.3);
  cfg.duration = 600;
  const auto r = run(cfg);
  EXPECT_EQ(r.counters.exited, r.counters.created - r.counters.in_network);
  EXPECT_GT(r.counters.exited, 0u);
}

TEST(Csv, CrossingsRoundTrip) {
  const auto r = run(short_single(200));
  const auto rows = csv::crossing_rows(r.detectors);
  ASSERT_FALSE(rows.empty());
  std::stringstream ss;
  csv::write_crossings(ss, rows);
  EXPECT_EQ(csv::read_crossings(ss), rows);
}

TEST(Csv, ThroughputRoundTrip) {
  const auto r = run(short_single(200));
  const auto rows = csv::throughput_rows(r.detectors, 60, 200);
  ASSERT_EQ(rows.size(), r.detectors.size() * 4);
  EXPECT_DOUBLE_EQ(rows[3].end, 200.0);
  std::stringstream ss;
  csv::write_throughput(ss, rows);
  EXPECT_EQ(csv::read_throughput(ss), rows);
}

TEST(Csv, EventsQueuesTrajectoriesRoundTrip) {
  auto cfg = saturate(build_arterial(2, 300, 0.75));
  cfg.duration = 300;
  cfg.platooning_enabled = true;
  cfg.record_trajectories = true;
  const auto r = run(cfg);
  ASSERT_FALSE(r.platoon_events.empty());
  ASSERT_FALSE(r.queues.empty());
  std::stringstream a, b, c;
  csv::write_platoon_events(a, r.platoon_events);
  EXPECT_EQ(csv::read_platoon_events(a), r.platoon_events);
  csv::write_queues(b, r.queues);
  EXPECT_EQ(csv::read_queues(b), r.queues);
  const std::vector<TrajectoryPoint> some(r.trajectories.begin(), r.trajectories.begin() + 2000);
  csv::write_trajectories(c, some);
  EXPECT_EQ(csv::read_trajectories(c), some);
}

TEST(Csv, BadHeaderRejected) {
  std::stringstream ss("time,foo\n1,2\n");
  EXPECT_THROW(csv::read_crossings(ss), std::runtime_error);
}
