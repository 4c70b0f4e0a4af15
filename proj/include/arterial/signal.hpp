#pragma once

// Signal controllers: fixed-time plans, gap-out actuation, max-pressure, and
// the phase-extension channel used by platoons.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "arterial/common.hpp"

namespace arterial {

inline constexpr double kTimeEps = 1e-9;

struct MovementKey {
  LaneId from;
  Turn turn = Turn::straight;

  auto operator<=>(const MovementKey&) const = default;
  bool operator==(const MovementKey&) const = default;
};

struct Phase {
  std::string id;
  std::vector<MovementKey> green_movements;
  double nominal_green = 0.0;

  bool operator==(const Phase&) const = default;

  bool serves(const MovementKey& m) const {
    return std::find(green_movements.begin(), green_movements.end(), m) != green_movements.end();
  }

  bool serves_lane(const LaneId& lane) const {
    return std::any_of(green_movements.begin(), green_movements.end(),
                       [&](const MovementKey& m) { return m.from == lane; });
  }
};

struct TimingPlan {
  std::vector<Phase> phases;
  double red_clear = 0.0;
  double cycle = 0.0;
  double offset = 0.0;

  bool operator==(const TimingPlan&) const = default;

  double total_green() const {
    double s = 0.0;
    for (const auto& p : phases) s += p.nominal_green;
    return s;
  }

  void validate() const {
    if (phases.empty()) throw ScenarioError("timing plan: no phases");
    for (const auto& p : phases) {
      if (p.green_movements.empty())
        throw ScenarioError("timing plan: phase '" + p.id + "' has no movements");
      if (!(p.nominal_green > 0.0))
        throw ScenarioError("timing plan: phase '" + p.id + "' green must be > 0");
    }
    if (!(red_clear >= 0.0)) throw ScenarioError("timing plan: red_clear must be >= 0");
    const double expect = total_green() + static_cast<double>(phases.size()) * red_clear;
    if (std::abs(expect - cycle) > 1e-6)
      throw ScenarioError("timing plan: greens + red clears (" + std::to_string(expect) +
                          ") must equal cycle (" + std::to_string(cycle) + ")");
    if (!(offset >= 0.0 && offset < cycle))
      throw ScenarioError("timing plan: offset must lie in [0, cycle)");
  }

  /// Equal-split two-or-more phase plan: every phase gets
  /// (cycle - n*red_clear)/n seconds of green.
  static TimingPlan equal_split(std::vector<std::vector<MovementKey>> phase_movements,
                                std::vector<std::string> ids, double cycle, double red_clear,
                                double offset = 0.0) {
    TimingPlan plan;
    plan.red_clear = red_clear;
    plan.cycle = cycle;
    plan.offset = offset;
    const double n = static_cast<double>(phase_movements.size());
    const double green = (cycle - n * red_clear) / n;
    for (std::size_t i = 0; i < phase_movements.size(); ++i)
      plan.phases.push_back({ids.at(i), std::move(phase_movements[i]), green});
    return plan;
  }
};

enum class ControlMode : std::uint8_t { fixed, actuated, max_pressure };

inline std::string_view to_string(ControlMode m) {
  switch (m) {
    case ControlMode::fixed: return "fixed";
    case ControlMode::actuated: return "actuated";
    case ControlMode::max_pressure: return "max_pressure";
  }
  return "?";
}

inline ControlMode parse_control_mode(std::string_view s) {
  if (s == "fixed") return ControlMode::fixed;
  if (s == "actuated") return ControlMode::actuated;
  if (s == "max_pressure") return ControlMode::max_pressure;
  throw std::invalid_argument("unknown control mode '" + std::string(s) + "'");
}

struct ActuationParams {
  double min_green = 5.0;
  double max_green = 50.0;
  double gap_out = 3.0;
  bool operator==(const ActuationParams&) const = default;
};

struct MaxPressureParams {
  double min_green = 5.0;
  double decision_period = 10.0;
  bool operator==(const MaxPressureParams&) const = default;
};

/// Platoon phase-extension policy.
struct ExtensionPolicy {
  int size_threshold = 4;
  double increment = 5.0;
  double max_extension = 15.0;
  bool operator==(const ExtensionPolicy&) const = default;
};

/// Scenario-level description of one intersection's control.
struct SignalPlan {
  IntersectionId intersection;
  ControlMode mode = ControlMode::fixed;
  TimingPlan plan;
  ActuationParams actuation;
  MaxPressureParams max_pressure;
  ExtensionPolicy extension;

  bool operator==(const SignalPlan&) const = default;
};

/// Result of fixed_state: the green phase (nullopt during all-red) and the
/// time until the indication changes.
struct SignalIndication {
  std::optional<std::size_t> phase;
  double remaining = 0.0;
};

/// Fixed-time indication: a pure function of (t + offset) mod cycle.
inline SignalIndication fixed_state(const TimingPlan& plan, double t) {
  double local = std::fmod(t + plan.offset, plan.cycle);
  if (local < 0.0) local += plan.cycle;
  double start = 0.0;
  for (std::size_t i = 0; i < plan.phases.size(); ++i) {
    const double g_end = start + plan.phases[i].nominal_green;
    if (local < g_end - kTimeEps) return {i, g_end - local};
    const double r_end = g_end + plan.red_clear;
    if (local < r_end - kTimeEps) return {std::nullopt, r_end - local};
    start = r_end;
  }
  // Rounding put us on the cycle boundary.
  return {0, plan.phases.front().nominal_green};
}

struct ControllerState {
  ControlMode mode = ControlMode::fixed;
  TimingPlan plan;
  ActuationParams actuation;
  MaxPressureParams max_pressure;
  ExtensionPolicy extension;

  std::size_t current_phase = 0;
  double phase_elapsed = 0.0;  ///< green seconds of current_phase so far
  bool in_red_clear = false;
  double red_clear_elapsed = 0.0;
  std::size_t next_phase = 0;
  double extension_granted = 0.0;
  double hold_until = 0.0;  ///< phase_elapsed before which the phase may not end
  double since_passage = 0.0;
  double since_decision = 0.0;
  double clock = 0.0;             ///< used by fixed mode
  double last_green_length = 0.0; ///< length of the most recently ended green

  bool operator==(const ControllerState&) const = default;

  std::optional<std::size_t> green_phase() const {
    if (in_red_clear) return std::nullopt;
    return current_phase;
  }

  bool is_green(const MovementKey& m) const {
    return !in_red_clear && plan.phases[current_phase].serves(m);
  }
};

inline ControllerState make_controller(const SignalPlan& sp) {
  ControllerState s;
  s.mode = sp.mode;
  s.plan = sp.plan;
  s.actuation = sp.actuation;
  s.max_pressure = sp.max_pressure;
  s.extension = sp.extension;
  if (sp.mode == ControlMode::fixed) {
    const auto ind = fixed_state(sp.plan, 0.0);
    s.in_red_clear = !ind.phase.has_value();
    if (ind.phase) {
      s.current_phase = *ind.phase;
      s.phase_elapsed = sp.plan.phases[*ind.phase].nominal_green - ind.remaining;
    }
  }
  return s;
}

namespace detail {

inline void start_phase(ControllerState& s, std::size_t phase) {
  s.current_phase = phase;
  s.in_red_clear = false;
  s.red_clear_elapsed = 0.0;
  s.phase_elapsed = 0.0;
  s.since_passage = 0.0;
  s.since_decision = 0.0;
  s.extension_granted = 0.0;
  s.hold_until = 0.0;
}

inline void end_phase(ControllerState& s, std::size_t next) {
  s.last_green_length = s.phase_elapsed;
  s.next_phase = next;
  s.extension_granted = 0.0;
  s.hold_until = 0.0;
  if (s.plan.red_clear > 0.0) {
    s.in_red_clear = true;
    s.red_clear_elapsed = 0.0;
  } else {
    start_phase(s, next);
  }
}

inline bool advance_red_clear(ControllerState& s, double dt) {
  if (!s.in_red_clear) return false;
  s.red_clear_elapsed += dt;
  if (s.red_clear_elapsed >= s.plan.red_clear - kTimeEps) start_phase(s, s.next_phase);
  return true;
}

}  // namespace detail

/// Re-derives the state of a fixed-time controller at clock t.
inline ControllerState fixed_step(ControllerState s, double t) {
  const auto ind = fixed_state(s.plan, t);
  s.clock = t;
  if (ind.phase) {
    if (!s.in_red_clear && *ind.phase != s.current_phase)
      s.last_green_length = s.plan.phases[s.current_phase].nominal_green;
    s.in_red_clear = false;
    s.current_phase = *ind.phase;
    s.phase_elapsed = s.plan.phases[*ind.phase].nominal_green - ind.remaining;
  } else {
    if (!s.in_red_clear) s.last_green_length = s.plan.phases[s.current_phase].nominal_green;
    s.in_red_clear = true;
    s.next_phase = (s.current_phase + 1) % s.plan.phases.size();
    s.red_clear_elapsed = s.plan.red_clear - ind.remaining;
  }
  return s;
}

/// Per-approach detector call: true when a vehicle passed or occupied the
/// approach's detectors during the step.
using ApproachOccupancy = std::map<LaneId, bool>;

/// Gap-out actuation. Green holds while a call arrived within the last
/// gap_out seconds, never ends before min_green (or a granted hold), and ends
/// at max_green plus granted extension.
inline ControllerState actuated_step(ControllerState s, const ApproachOccupancy& calls, double dt) {
  if (dt <= 0.0) return s;
  if (detail::advance_red_clear(s, dt)) return s;

  const Phase& phase = s.plan.phases[s.current_phase];
  s.phase_elapsed += dt;
  bool call = false;
  for (const auto& [lane, occupied] : calls)
    if (occupied && phase.serves_lane(lane)) call = true;
  s.since_passage = call ? 0.0 : s.since_passage + dt;

  const auto& a = s.actuation;
  const bool may_end = s.phase_elapsed >= a.min_green - kTimeEps &&
                       s.phase_elapsed >= s.hold_until - kTimeEps;
  const bool gapped = s.since_passage >= a.gap_out - kTimeEps;
  const bool maxed = s.phase_elapsed >= a.max_green + s.extension_granted - kTimeEps;
  if (may_end && (gapped || maxed)) detail::end_phase(s, (s.current_phase + 1) % s.plan.phases.size());
  return s;
}

/// (upstream queue, downstream queue) per movement.
using MovementQueues = std::map<MovementKey, std::pair<double, double>>;

inline double phase_pressure(const Phase& phase, const MovementQueues& q) {
  double p = 0.0;
  for (const auto& m : phase.green_movements) {
    auto it = q.find(m);
    if (it != q.end()) p += it->second.first - it->second.second;
  }
  return p;
}

/// Phase with the largest pressure; the current phase wins ties, otherwise
/// the lowest index.
inline std::size_t max_pressure_choice(const TimingPlan& plan, const MovementQueues& q,
                                       std::size_t current) {
  std::vector<double> p;
  for (const auto& ph : plan.phases) p.push_back(phase_pressure(ph, q));
  const double best = *std::max_element(p.begin(), p.end());
  if (p[current] >= best) return current;
  return static_cast<std::size_t>(std::find(p.begin(), p.end(), best) - p.begin());
}

inline ControllerState max_pressure_step(ControllerState s, const MovementQueues& q, double dt) {
  if (dt <= 0.0) return s;
  if (detail::advance_red_clear(s, dt)) return s;

  s.phase_elapsed += dt;
  s.since_decision += dt;
  const auto& mp = s.max_pressure;
  if (s.phase_elapsed >= mp.min_green - kTimeEps &&
      s.since_decision >= mp.decision_period - kTimeEps) {
    s.since_decision = 0.0;
    const std::size_t best = max_pressure_choice(s.plan, q, s.current_phase);
    if (best != s.current_phase && s.phase_elapsed >= s.hold_until - kTimeEps)
      detail::end_phase(s, best);
  }
  return s;
}

struct ExtensionResult {
  enum class Status : std::uint8_t { granted, rejected, unsupported_mode };
  Status status = Status::rejected;
  double seconds = 0.0;
};

/// A platoon asks to extend the current green. Fixed-time plans cannot honour
/// this.
inline ExtensionResult request_extension(ControllerState& s, int platoon_size,
                                         double opposing_pressure) {
  using S = ExtensionResult::Status;
  if (s.mode == ControlMode::fixed) return {S::unsupported_mode, 0.0};
  if (s.in_red_clear) return {S::rejected, 0.0};
  const auto& pol = s.extension;
  if (platoon_size < pol.size_threshold || !(opposing_pressure < platoon_size))
    return {S::rejected, 0.0};
  const double grant = std::min(pol.increment, pol.max_extension - s.extension_granted);
  if (grant <= kTimeEps) return {S::rejected, 0.0};
  s.extension_granted += grant;
  s.hold_until = std::max(s.hold_until, s.phase_elapsed) + grant;
  return {S::granted, grant};
}

/// Green time the controller is committed to serve from now on. For fixed
/// plans this is exact; adaptive controllers may serve longer.
inline double guaranteed_green(const ControllerState& s) {
  if (s.in_red_clear) return 0.0;
  switch (s.mode) {
    case ControlMode::fixed:
      return fixed_state(s.plan, s.clock).remaining;
    case ControlMode::actuated: {
      const auto& a = s.actuation;
      const double r = std::max({a.min_green - s.phase_elapsed, s.hold_until - s.phase_elapsed,
                                 a.gap_out - s.since_passage, 0.0});
      return std::min(r, a.max_green + s.extension_granted - s.phase_elapsed);
    }
    case ControlMode::max_pressure: {
      const auto& mp = s.max_pressure;
      const double next_decision =
          std::max(mp.min_green - s.phase_elapsed, mp.decision_period - s.since_decision);
      return std::max({next_decision, s.hold_until - s.phase_elapsed, 0.0});
    }
  }
  return 0.0;
}

}  // namespace arterial
