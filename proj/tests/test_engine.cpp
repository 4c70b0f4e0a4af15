#include <gtest/gtest.h>

#include "arterial/arterial.hpp"

using namespace arterial;

namespace {

/// A -> (unsignalized X) -> B, one queued vehicle on A and no arrivals.
ScenarioConfig corridor(CfModel model, double dt) {
  ScenarioConfig cfg;
  cfg.cf_model = model;
  cfg.dt = dt;
  cfg.duration = 10;
  if (model == CfModel::iidm) cfg.class_params[VehicleClass::manual] = iidm_defaults();
  auto& n = cfg.network;
  n.lanes["A"] = Lane{"A", 1000, "W", "X", 20, 999, Heading::east};
  n.lanes["B"] = Lane{"B", 1000, "X", "E", 20, 999, Heading::east};
  n.intersections["X"] = Intersection{"X", false, {"A"}, {{"A", Turn::straight, "B"}}};
  n.sources = {"A"};
  n.sinks = {"B"};
  FlowSpec f;
  f.source = "A";
  f.turn_ratios["X"] = {0, 1, 0};
  f.initial_queue = 1;
  cfg.demand = {f};
  return cfg;
}

std::uint64_t stop_bar_count(const SimResult& r, const std::string& lane, double t0, double t1) {
  const Detector* d = r.detector(lane);
  return d ? count_in_window(*d, t0, t1) : 0;
}

void expect_conserved(const SimResult& r) {
  const auto& c = r.counters;
  EXPECT_EQ(c.created, c.exited + c.in_network);
  EXPECT_EQ(c.attempts, c.created + c.suppressed);
  EXPECT_EQ(r.stats.conservation_violations, 0u);
  std::uint64_t by_sink = 0;
  for (const auto& [k, n] : r.exits_by_sink) by_sink += n;
  EXPECT_EQ(by_sink, c.exited);
}

}  // namespace

TEST(Engine, IidmFirstStepFromRest) {
  Engine e(corridor(CfModel::iidm, 0.05));
  const auto v0 = e.lane_vehicles("A");
  ASSERT_EQ(v0.size(), 1u);
  const VehicleId id = v0[0]->id;
  const double x0 = v0[0]->x;
  EXPECT_DOUBLE_EQ(x0, 999.0);
  e.step();
  EXPECT_NEAR(e.vehicle(id).v, 0.075, 1e-12);
  EXPECT_NEAR(e.vehicle(id).x, x0 + 0.001875, 1e-12);
}

TEST(Engine, IidmMatchesReferenceIntegration) {
  auto cfg = corridor(CfModel::iidm, 0.05);
  cfg.network.lanes["A"].length = 5000;
  cfg.network.lanes["A"].stop_bar = 10;
  Engine e(cfg);
  const VehicleId id = e.lane_vehicles("A")[0]->id;
  const auto p = iidm_defaults();
  double x = 10, v = 0;
  for (int k = 0; k < 400; ++k) {
    const double a = iidm_accel({v, 0, kNoLeader, 0.05}, p);
    x += v * 0.05 + 0.5 * a * 0.05 * 0.05;
    v += a * 0.05;
    e.step();
    ASSERT_NEAR(e.vehicle(id).x, x, 1e-9) << k;
    ASSERT_NEAR(e.vehicle(id).v, v, 1e-12) << k;
  }
  EXPECT_NEAR(v, p.v_max, 0.5);
}

TEST(Engine, RedLightStopAtStopBar) {
  auto cfg = build_single_intersection(300.0, 120, 3, {.model = CfModel::iidm, .dt = 0.05});
  Engine e(cfg);
  while (e.clock() < 57.0 - 1e-9) e.step();
  const auto ab = e.lane_vehicles("AB");
  ASSERT_FALSE(ab.empty());
  EXPECT_GE(ab[0]->x, 299.5);
  EXPECT_LE(ab[0]->x, 300.0);
  EXPECT_LT(ab[0]->v, 0.1);
}

TEST(Engine, QueueInitializer) {
  const auto p = iidm_defaults();
  EXPECT_EQ(queue_capacity(300, p), 33);
  const auto full = queue_initializer(300, std::nullopt, p);
  ASSERT_EQ(full.size(), 33u);
  EXPECT_DOUBLE_EQ(full.front(), 300.0);
  EXPECT_DOUBLE_EQ(full.back(), 300.0 - 32 * 9.0);
  EXPECT_EQ(queue_initializer(300, 1, p), std::vector<double>{300.0});
  EXPECT_TRUE(queue_initializer(300, 0, p).empty());
  EXPECT_THROW(queue_initializer(300, 34, p), ConfigError);
  EXPECT_THROW(queue_initializer(300, -1, p), ConfigError);
}

TEST(Engine, FillModeSuppressesArrivals) {
  auto cfg = build_single_intersection(std::nullopt, 120, 3);
  cfg.duration = 300;
  const auto r = run(cfg);
  EXPECT_GT(r.counters.suppressed, 0u);
  EXPECT_GT(r.counters.created, 0u);
  expect_conserved(r);
}

TEST(Engine, DurationZero) {
  auto cfg = build_single_intersection(std::nullopt, 120, 3);
  cfg.duration = 0;
  const auto r = run(cfg);
  EXPECT_EQ(r.steps, 0u);
  EXPECT_EQ(r.counters.exited, 0u);
  EXPECT_EQ(r.counters.in_network, r.counters.created);
  EXPECT_GT(r.counters.created, 0u);  // the packed approaches
  for (const auto& d : r.detectors) EXPECT_TRUE(d.log.empty());
}

TEST(Engine, EmptyNetwork) {
  ScenarioConfig cfg;
  cfg.duration = 10;
  const auto r = run(cfg);
  EXPECT_EQ(r.steps, 50u);
  EXPECT_EQ(r.counters, Counters{});
}

TEST(Engine, Deterministic) {
  auto cfg = build_arterial(3, 300, 0.5);
  cfg.duration = 600;
  cfg.platooning_enabled = true;
  const auto a = run(cfg), b = run(cfg);
  EXPECT_EQ(a.hash, b.hash);
  EXPECT_EQ(a.counters, b.counters);
  EXPECT_EQ(a.platoon_events, b.platoon_events);
  cfg.seed = 2;
  EXPECT_NE(run(cfg).hash, a.hash);
}

TEST(Engine, InvariantsOnMixedArterial) {
  for (bool platooning : {false, true}) {
    auto cfg = saturate(build_arterial(3, 300, 0.5));
    cfg.duration = 900;
    cfg.platooning_enabled = platooning;
    cfg.signal_plans[1].mode = ControlMode::actuated;
    cfg.signal_plans[2].mode = ControlMode::max_pressure;
    SimResult r;
    ASSERT_NO_THROW(r = run(cfg));
    EXPECT_GT(r.stats.min_gap, 0.0);
    EXPECT_EQ(r.stats.param_restore_violations, 0u);
    EXPECT_EQ(r.stats.partition_violations, 0u);
    EXPECT_LE(r.stats.max_speed_excess, 1e-9);
    expect_conserved(r);
    if (platooning) {
      EXPECT_FALSE(r.platoon_events.empty());
    }
  }
}

TEST(Engine, SpeedsWithinBounds) {
  auto cfg = build_arterial(2, 300, 0.5);
  cfg.duration = 300;
  cfg.record_trajectories = true;
  const auto r = run(cfg);
  ASSERT_FALSE(r.trajectories.empty());
  for (const auto& p : r.trajectories) {
    ASSERT_GE(p.v, 0.0);
    ASSERT_LE(p.v, 20.0 + 1e-9);
  }
}

TEST(Engine, ThroughputRobustToTimeStep) {
  auto count = [](double dt) {
    auto cfg = build_single_intersection(std::nullopt, 120, 3, {.model = CfModel::iidm, .dt = dt});
    cfg.duration = 1200;
    const auto r = run(cfg);
    return double(stop_bar_count(r, "W_in", 0, 1200) + stop_bar_count(r, "N_in", 0, 1200));
  };
  const double a = count(0.05), b = count(0.025);
  EXPECT_NEAR(a / b, 1.0, 0.02) << a << " vs " << b;
}

TEST(Engine, StopBarCountsMatchExits) {
  auto cfg = build_single_intersection(std::nullopt, 120, 3);
  cfg.duration = 600;
  const auto r = run(cfg);
  const auto crossed = stop_bar_count(r, "W_in", 0, 601) + stop_bar_count(r, "N_in", 0, 601);
  // Everything that crossed A is on E_out or gone.
  EXPECT_GE(crossed, r.counters.exited);
  EXPECT_GT(crossed, 0u);
}

TEST(Engine, MaxPressureArterialDecisionsAndPartition) {
  auto cfg = saturate(build_arterial(5, 300, 0.5));
  for (auto& sp : cfg.signal_plans) sp.mode = ControlMode::max_pressure;
  cfg.signal_plans[1].mode = ControlMode::actuated;
  cfg.platooning_enabled = true;
  cfg.duration = 3600;
  const auto r = run(cfg, {.record_decisions = true});
  EXPECT_EQ(r.stats.partition_violations, 0u);
  ASSERT_FALSE(r.decisions.empty());
  std::size_t switched_while_held = 0, wrong = 0;
  for (const auto& d : r.decisions) {
    if (d.held) {
      if (d.chosen != d.current) ++switched_while_held;
      continue;
    }
    const auto& plan = cfg.plan_for(d.intersection)->plan;
    if (d.chosen != max_pressure_choice(plan, d.queues, d.current)) ++wrong;
  }
  EXPECT_EQ(switched_while_held, 0u);
  EXPECT_EQ(wrong, 0u);
}
