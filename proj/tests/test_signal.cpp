#include <gtest/gtest.h>

#include <random>

#include "arterial/signal.hpp"

using namespace arterial;

namespace {

TimingPlan two_phase(double cycle = 120, double rc = 3) {
  return TimingPlan::equal_split({{{"W", Turn::straight}, {"E", Turn::straight}},
                                  {{"N", Turn::straight}, {"S", Turn::straight}}},
                                 {"EW", "NS"}, cycle, rc);
}

SignalPlan plan_with(ControlMode mode, TimingPlan p = two_phase()) {
  SignalPlan sp;
  sp.intersection = "X";
  sp.mode = mode;
  sp.plan = std::move(p);
  return sp;
}

/// Steps an actuated controller until the first green ends; `call(t)` says
/// whether the served approach is occupied at phase time t.
template <class F>
double actuated_green_length(F call, double dt = 0.2) {
  auto s = make_controller(plan_with(ControlMode::actuated));
  double t = 0;
  while (!s.in_red_clear && t < 1000) {
    t += dt;
    s = actuated_step(s, {{"W", call(t)}}, dt);
  }
  return s.last_green_length;
}

}  // namespace

TEST(FixedState, Examples) {
  const auto p = two_phase();
  EXPECT_DOUBLE_EQ(p.phases[0].nominal_green, 57.0);
  auto a = fixed_state(p, 30);
  ASSERT_TRUE(a.phase);
  EXPECT_EQ(*a.phase, 0u);
  EXPECT_NEAR(a.remaining, 27.0, 1e-9);
  auto b = fixed_state(p, 58);
  EXPECT_FALSE(b.phase);
  EXPECT_NEAR(b.remaining, 2.0, 1e-9);
  auto c = fixed_state(p, 61);
  ASSERT_TRUE(c.phase);
  EXPECT_EQ(*c.phase, 1u);
  EXPECT_NEAR(c.remaining, 56.0, 1e-9);
}

TEST(FixedState, Periodic) {
  const auto p = two_phase(90, 2);
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> U(0, 90);
  for (int i = 0; i < 2000; ++i) {
    const double t = U(gen);
    const auto x = fixed_state(p, t), y = fixed_state(p, t + 90 * (1 + i % 7));
    ASSERT_EQ(x.phase, y.phase) << t;
    ASSERT_NEAR(x.remaining, y.remaining, 1e-7);
  }
}

TEST(FixedState, OffsetShifts) {
  auto p = two_phase();
  p.offset = 30;
  EXPECT_NEAR(fixed_state(p, 0).remaining, 27.0, 1e-9);
}

TEST(FixedStep, TracksPlan) {
  auto s = make_controller(plan_with(ControlMode::fixed));
  s = fixed_step(s, 58);
  EXPECT_TRUE(s.in_red_clear);
  EXPECT_DOUBLE_EQ(s.last_green_length, 57.0);
  s = fixed_step(s, 60.2);
  EXPECT_FALSE(s.in_red_clear);
  EXPECT_EQ(s.current_phase, 1u);
  EXPECT_NEAR(guaranteed_green(s), 56.8, 1e-9);
}

TEST(Actuated, ContinuousCallsMaxOut) {
  EXPECT_NEAR(actuated_green_length([](double) { return true; }), 50.0, 0.2 + 1e-9);
}

TEST(Actuated, LastCallAtMinGreenGapsOut) {
  EXPECT_NEAR(actuated_green_length([](double t) { return t <= 5.0 + 1e-9; }), 8.0, 0.2 + 1e-9);
}

TEST(Actuated, NoCallsEndAtMinGreen) {
  EXPECT_NEAR(actuated_green_length([](double) { return false; }), 5.0, 0.2 + 1e-9);
}

TEST(Actuated, ZeroDtIsNoOp) {
  const auto s = make_controller(plan_with(ControlMode::actuated));
  EXPECT_EQ(actuated_step(s, {{"W", true}}, 0.0), s);
  EXPECT_EQ(max_pressure_step(s, {}, 0.0), s);
}

TEST(Actuated, GreenLengthWithinBounds) {
  std::mt19937_64 gen(5);
  std::bernoulli_distribution B(0.3);
  auto s = make_controller(plan_with(ControlMode::actuated));
  int ended = 0;
  for (int k = 0; k < 50000; ++k) {
    const bool was_green = !s.in_red_clear;
    s = actuated_step(s, {{"W", B(gen)}, {"N", B(gen)}}, 0.2);
    if (was_green && s.in_red_clear) {
      ++ended;
      ASSERT_GE(s.last_green_length, 5.0 - 1e-9);
      ASSERT_LE(s.last_green_length, 50.0 + 0.2 + 1e-9);
    }
  }
  EXPECT_GT(ended, 10);
}

TEST(MaxPressure, Examples) {
  const auto p = two_phase();
  MovementQueues q{{{"W", Turn::straight}, {8, 2}}, {{"E", Turn::straight}, {1, 0}},
                   {{"N", Turn::straight}, {10, 0}}, {{"S", Turn::straight}, {0, 4}}};
  EXPECT_DOUBLE_EQ(phase_pressure(p.phases[0], q), 7.0);
  EXPECT_DOUBLE_EQ(phase_pressure(p.phases[1], q), 6.0);
  EXPECT_EQ(max_pressure_choice(p, q, 1), 0u);
  q[{"S", Turn::straight}] = {1, 0};
  EXPECT_EQ(max_pressure_choice(p, q, 0), 1u);
  // Ties keep the current phase.
  q[{"S", Turn::straight}] = {0, 3};
  EXPECT_EQ(max_pressure_choice(p, q, 1), 1u);
  EXPECT_EQ(max_pressure_choice(p, q, 0), 0u);
}

TEST(MaxPressure, ArgmaxMatchesBruteForce) {
  std::mt19937_64 gen(9);
  std::uniform_int_distribution<int> Q(0, 12), N(1, 4);
  for (int trial = 0; trial < 2000; ++trial) {
    TimingPlan p;
    const int nph = N(gen) + 1;
    MovementQueues q;
    for (int i = 0; i < nph; ++i) {
      Phase ph{"P" + std::to_string(i), {}, 10};
      for (int m = 0; m < N(gen); ++m) {
        MovementKey k{"L" + std::to_string(i) + "_" + std::to_string(m), Turn::straight};
        ph.green_movements.push_back(k);
        q[k] = {double(Q(gen)), double(Q(gen))};
      }
      p.phases.push_back(ph);
    }
    const std::size_t cur = static_cast<std::size_t>(trial % nph);
    const std::size_t got = max_pressure_choice(p, q, cur);
    double best = -1e300;
    for (const auto& ph : p.phases) {
      double s = 0;
      for (const auto& m : ph.green_movements) s += q[m].first - q[m].second;
      best = std::max(best, s);
    }
    ASSERT_DOUBLE_EQ(phase_pressure(p.phases[got], q), best);
  }
}

TEST(MaxPressure, RespectsMinGreenAndPeriod) {
  auto s = make_controller(plan_with(ControlMode::max_pressure));
  const MovementQueues q{{{"N", Turn::straight}, {20, 0}}};
  double t = 0;
  while (!s.in_red_clear) {
    t += 0.2;
    s = max_pressure_step(s, q, 0.2);
  }
  EXPECT_NEAR(t, 10.0, 1e-9);
  EXPECT_EQ(s.next_phase, 1u);
}

TEST(Extension, GrantRejectUnsupported) {
  auto s = make_controller(plan_with(ControlMode::actuated));
  auto r = request_extension(s, 6, 2.0);
  EXPECT_EQ(r.status, ExtensionResult::Status::granted);
  EXPECT_DOUBLE_EQ(r.seconds, 5.0);
  EXPECT_EQ(request_extension(s, 3, 0.0).status, ExtensionResult::Status::rejected);
  EXPECT_EQ(request_extension(s, 6, 6.0).status, ExtensionResult::Status::rejected);
  EXPECT_DOUBLE_EQ(request_extension(s, 6, 0).seconds, 5.0);
  EXPECT_DOUBLE_EQ(request_extension(s, 6, 0).seconds, 5.0);
  auto capped = request_extension(s, 6, 0);
  EXPECT_EQ(capped.status, ExtensionResult::Status::rejected);
  EXPECT_DOUBLE_EQ(capped.seconds, 0.0);
  EXPECT_DOUBLE_EQ(s.extension_granted, 15.0);

  auto f = make_controller(plan_with(ControlMode::fixed));
  EXPECT_EQ(request_extension(f, 10, 0).status, ExtensionResult::Status::unsupported_mode);
}

TEST(Extension, ActuatedGreenHeldForGrant) {
  auto s = make_controller(plan_with(ControlMode::actuated));
  ASSERT_EQ(request_extension(s, 5, 0).status, ExtensionResult::Status::granted);
  double t = 0;
  while (!s.in_red_clear) {
    t += 0.2;
    s = actuated_step(s, {}, 0.2);
  }
  EXPECT_NEAR(t, 5.0, 1e-9);  // hold 5 s; min green also 5 s
  s = make_controller(plan_with(ControlMode::actuated));
  s = actuated_step(s, {}, 0.2);
  s = actuated_step(s, {}, 0.2);
  ASSERT_EQ(request_extension(s, 5, 0).status, ExtensionResult::Status::granted);
  while (!s.in_red_clear) s = actuated_step(s, {}, 0.2);
  EXPECT_NEAR(s.last_green_length, 5.4, 1e-9);
}

TEST(TimingPlan, Validation) {
  EXPECT_NO_THROW(two_phase().validate());
  auto p = two_phase();
  p.phases[0].nominal_green = 0;
  EXPECT_THROW(p.validate(), ScenarioError);
  p = two_phase();
  p.offset = 120;
  EXPECT_THROW(p.validate(), ScenarioError);
}
