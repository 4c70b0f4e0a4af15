#pragma once

// Platoon lifecycle: formation, gap tightening, deceleration propagation,
// sensor and green-window splits, dissolution.
//
// The manager never touches vehicles directly; it reads and writes gap
// parameters through a Store (see PlatoonStore), which keeps it testable
// without an engine.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "arterial/common.hpp"

namespace arterial {

using PlatoonId = std::uint64_t;

enum class PlatoonPhase : std::uint8_t { forming, active, splitting, dissolved };

inline std::string_view to_string(PlatoonPhase p) {
  switch (p) {
    case PlatoonPhase::forming: return "forming";
    case PlatoonPhase::active: return "active";
    case PlatoonPhase::splitting: return "splitting";
    case PlatoonPhase::dissolved: return "dissolved";
  }
  return "?";
}

/// Forming -> Active -> {Splitting -> Active, Dissolved}. A forming platoon
/// may also dissolve if a member leaves before activation.
inline bool valid_transition(PlatoonPhase from, PlatoonPhase to) {
  using P = PlatoonPhase;
  switch (from) {
    case P::forming: return to == P::active || to == P::dissolved;
    case P::active: return to == P::splitting || to == P::dissolved;
    case P::splitting: return to == P::active || to == P::dissolved;
    case P::dissolved: return false;
  }
  return false;
}

struct PlatoonConfig {
  double tau_platoon = 0.5;   ///< follower time gap inside a platoon [s]
  double gmin_platoon = 0.25; ///< follower standstill gap inside a platoon [m]
  double accel_boost = 0.10;  ///< speed-limit allowance while clearing a green
  double comm_latency = 0.0;  ///< V2V message delay [s]

  bool operator==(const PlatoonConfig&) const = default;

  void validate(double smart_tau, double smart_gmin) const {
    if (!(tau_platoon > 0.0 && tau_platoon < smart_tau))
      throw ScenarioError("platoon: tau_platoon must lie in (0, smart tau)");
    if (!(gmin_platoon > 0.0 && gmin_platoon < smart_gmin))
      throw ScenarioError("platoon: gmin_platoon must lie in (0, smart g_min)");
    if (!(accel_boost >= 0.0 && accel_boost <= 0.10))
      throw ScenarioError("platoon: accel_boost must lie in [0, 0.10]");
    if (!(comm_latency >= 0.0)) throw ScenarioError("platoon: comm_latency must be >= 0");
  }
};

struct GapParams {
  double tau = 0.0;
  double g_min = 0.0;
  bool operator==(const GapParams&) const = default;
};

struct Platoon {
  PlatoonId id = 0;
  std::vector<VehicleId> members;  ///< front first
  LaneId lane;
  Turn shared_turn = Turn::straight;
  PlatoonPhase state = PlatoonPhase::forming;
  std::map<VehicleId, GapParams> saved_params;

  VehicleId leader() const { return members.front(); }
  std::size_t size() const { return members.size(); }
};

enum class PlatoonEventKind : std::uint8_t { form, split_sensor, split_green, dissolve };

inline std::string_view to_string(PlatoonEventKind k) {
  switch (k) {
    case PlatoonEventKind::form: return "form";
    case PlatoonEventKind::split_sensor: return "split_sensor";
    case PlatoonEventKind::split_green: return "split_green";
    case PlatoonEventKind::dissolve: return "dissolve";
  }
  return "?";
}

inline PlatoonEventKind parse_platoon_event(std::string_view s) {
  if (s == "form") return PlatoonEventKind::form;
  if (s == "split_sensor") return PlatoonEventKind::split_sensor;
  if (s == "split_green") return PlatoonEventKind::split_green;
  if (s == "dissolve") return PlatoonEventKind::dissolve;
  throw std::invalid_argument("unknown platoon event '" + std::string(s) + "'");
}

struct PlatoonEvent {
  double time = 0.0;
  PlatoonId platoon = 0;
  PlatoonEventKind kind = PlatoonEventKind::form;
  std::size_t member_count = 0;
  bool operator==(const PlatoonEvent&) const = default;
};

/// A lane vehicle as formation sees it.
struct MemberView {
  VehicleId id = 0;
  VehicleClass cls = VehicleClass::manual;
  std::optional<Turn> next_turn;  ///< nullopt on the last lane of the route
  bool platooned = false;
};

// ------------------------------------------------------------ pure rules ----

/// Maximal runs (length >= 2) of adjacent, unplatooned smart vehicles sharing a
/// next turn. Returned as [begin, end) index ranges into `lane`.
inline std::vector<std::pair<std::size_t, std::size_t>> formation_runs(
    std::span<const MemberView> lane) {
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  auto eligible = [](const MemberView& m) {
    return m.cls == VehicleClass::smart && !m.platooned && m.next_turn.has_value();
  };
  std::size_t i = 0;
  while (i < lane.size()) {
    if (!eligible(lane[i])) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < lane.size() && eligible(lane[j]) && lane[j].next_turn == lane[i].next_turn) ++j;
    if (j - i >= 2) runs.emplace_back(i, j);
    i = j;
  }
  return runs;
}

/// Maximal runs of equal turns, as [begin, end) ranges.
inline std::vector<std::pair<std::size_t, std::size_t>> partition_by_turn(
    std::span<const Turn> turns) {
  std::vector<std::pair<std::size_t, std::size_t>> parts;
  std::size_t i = 0;
  while (i < turns.size()) {
    std::size_t j = i + 1;
    while (j < turns.size() && turns[j] == turns[i]) ++j;
    parts.emplace_back(i, j);
    i = j;
  }
  return parts;
}

/// Time to cover `distance` from speed v with constant acceleration a_max,
/// never exceeding v_cap (cruising at v_cap once reached). If v already
/// exceeds v_cap the vehicle is assumed to drop to v_cap at once.
inline double conservative_arrival_time(double distance, double v, double v_cap, double a_max) {
  if (distance <= 0.0) return 0.0;
  if (v_cap <= 0.0) return std::numeric_limits<double>::infinity();
  if (v >= v_cap) return distance / v_cap;
  const double t_acc = (v_cap - v) / a_max;
  const double d_acc = 0.5 * (v + v_cap) * t_acc;
  if (d_acc >= distance) return (-v + std::sqrt(v * v + 2.0 * a_max * distance)) / a_max;
  return t_acc + (distance - d_acc) / v_cap;
}

/// Length of the longest prefix whose members all arrive strictly before
/// remaining_green - dt.
inline std::size_t green_window_prefix(std::span<const double> arrivals, double remaining_green,
                                       double dt) {
  std::size_t k = 0;
  while (k < arrivals.size() && arrivals[k] < remaining_green - dt) ++k;
  return k;
}

struct DecelDirective {
  VehicleId vehicle = 0;
  double effective_time = 0.0;
  double speed_cap = 0.0;
  bool operator==(const DecelDirective&) const = default;
};

/// Directives for every non-leader member when the leader decelerates.
inline std::vector<DecelDirective> propagate_deceleration(const Platoon& p, double leader_accel,
                                                          double leader_speed, double now,
                                                          double latency) {
  std::vector<DecelDirective> out;
  if (p.state != PlatoonPhase::active || !(leader_accel < 0.0)) return out;
  for (std::size_t i = 1; i < p.members.size(); ++i)
    out.push_back({p.members[i], now + latency, leader_speed});
  return out;
}

/// Whole steps a message with the given latency takes to land.
inline long latency_steps(double latency, double dt) {
  return static_cast<long>(std::ceil(latency / dt - 1e-9));
}

// -------------------------------------------------------------- manager ----

template <class S>
concept PlatoonStore = requires(S& s, const S& cs, VehicleId id, GapParams g) {
  { cs.gap_params(id) } -> std::convertible_to<GapParams>;
  s.set_gap_params(id, g);
};

/// Owns every platoon and the event log. All mutations of member gap
/// parameters go through here so that saved originals are restored exactly.
template <PlatoonStore Store>
class PlatoonManager {
 public:
  explicit PlatoonManager(PlatoonConfig cfg = {}) : cfg_(cfg) {}

  const PlatoonConfig& config() const { return cfg_; }
  const std::vector<PlatoonEvent>& events() const { return events_; }
  const std::map<PlatoonId, Platoon>& platoons() const { return platoons_; }

  const Platoon* find(PlatoonId id) const {
    auto it = platoons_.find(id);
    return it == platoons_.end() ? nullptr : &it->second;
  }

  std::optional<PlatoonId> platoon_of(VehicleId v) const {
    auto it = membership_.find(v);
    if (it == membership_.end()) return std::nullopt;
    return it->second;
  }

  /// Ids of live platoons in creation order.
  std::vector<PlatoonId> live_ids() const {
    std::vector<PlatoonId> ids;
    for (const auto& [id, p] : platoons_) ids.push_back(id);
    return ids;
  }

  /// Groups every formation run on a lane into a new Forming platoon.
  std::vector<PlatoonId> form(std::span<const MemberView> lane_vehicles, const LaneId& lane,
                              Store& store, double t) {
    std::vector<PlatoonId> made;
    for (auto [b, e] : formation_runs(lane_vehicles)) {
      std::vector<VehicleId> members;
      for (std::size_t i = b; i < e; ++i) members.push_back(lane_vehicles[i].id);
      const PlatoonId id =
          create(std::move(members), lane, *lane_vehicles[b].next_turn, store);
      events_.push_back({t, id, PlatoonEventKind::form, platoons_.at(id).size()});
      made.push_back(id);
    }
    return made;
  }

  void activate(PlatoonId id) { transition(platoons_.at(id), PlatoonPhase::active); }

  /// Restores every member and removes the platoon. No-op for unknown ids.
  void dissolve(PlatoonId id, Store& store, double t) {
    auto it = platoons_.find(id);
    if (it == platoons_.end()) return;
    Platoon& p = it->second;
    transition(p, PlatoonPhase::dissolved);
    for (VehicleId v : p.members) release(p, v, store);
    events_.push_back({t, id, PlatoonEventKind::dissolve, p.size()});
    platoons_.erase(it);
  }

  /// Cuts the platoon into the given consecutive [begin, end) parts. The first
  /// part keeps the platoon id; later parts of two or more become new
  /// platoons; singletons are released. Returns the ids of surviving parts in
  /// order.
  std::vector<PlatoonId> split(PlatoonId id, std::span<const std::pair<std::size_t, std::size_t>> parts,
                               std::span<const Turn> part_turns, PlatoonEventKind kind, Store& store,
                               double t) {
    Platoon& p = platoons_.at(id);
    if (parts.size() <= 1) return {id};
    transition(p, PlatoonPhase::splitting);
    events_.push_back({t, id, kind, p.size()});

    const std::vector<VehicleId> all = p.members;
    std::map<VehicleId, GapParams> saved = p.saved_params;
    std::vector<PlatoonId> out;

    // Tail parts first, so the original keeps only its head.
    for (std::size_t k = 1; k < parts.size(); ++k) {
      auto [b, e] = parts[k];
      if (e - b >= 2) {
        std::vector<VehicleId> ms(all.begin() + static_cast<std::ptrdiff_t>(b),
                                  all.begin() + static_cast<std::ptrdiff_t>(e));
        Platoon np;
        np.id = next_id_++;
        np.members = ms;
        np.lane = p.lane;
        np.shared_turn = part_turns[k];
        np.state = PlatoonPhase::active;
        for (VehicleId v : ms) {
          np.saved_params[v] = saved.at(v);
          membership_[v] = np.id;
        }
        // New front vehicle drives with its own parameters again.
        store.set_gap_params(ms.front(), saved.at(ms.front()));
        events_.push_back({t, np.id, kind, np.size()});
        out.push_back(np.id);
        platoons_.emplace(np.id, std::move(np));
      } else {
        release(p, all[b], store);
      }
    }

    auto [b0, e0] = parts.front();
    p.members.assign(all.begin() + static_cast<std::ptrdiff_t>(b0),
                     all.begin() + static_cast<std::ptrdiff_t>(e0));
    std::erase_if(p.saved_params,
                  [&](const auto& kv) { return std::find(p.members.begin(), p.members.end(),
                                                         kv.first) == p.members.end(); });
    p.shared_turn = part_turns.front();
    if (p.size() >= 2) {
      transition(p, PlatoonPhase::active);
      out.insert(out.begin(), id);
    } else {
      dissolve(id, store, t);
    }
    return out;
  }

  /// Sensor-triggered split by the members' next turns.
  std::vector<PlatoonId> split_at_sensors(PlatoonId id, std::span<const Turn> member_turns,
                                          Store& store, double t) {
    const auto parts = partition_by_turn(member_turns);
    std::vector<Turn> turns;
    for (auto [b, e] : parts) turns.push_back(member_turns[b]);
    if (parts.size() == 1) {
      platoons_.at(id).shared_turn = turns.front();
      return {id};
    }
    return split(id, parts, turns, PlatoonEventKind::split_sensor, store, t);
  }

  /// Green-window split after the first `prefix` members. Returns the id of
  /// the remainder platoon if one survives.
  std::optional<PlatoonId> split_for_green_window(PlatoonId id, std::size_t prefix, Store& store,
                                                  double t) {
    const Platoon& p = platoons_.at(id);
    if (prefix == 0 || prefix >= p.size()) return std::nullopt;
    const std::pair<std::size_t, std::size_t> parts[] = {{0, prefix}, {prefix, p.size()}};
    const Turn turns[] = {p.shared_turn, p.shared_turn};
    auto ids = split(id, parts, turns, PlatoonEventKind::split_green, store, t);
    for (PlatoonId x : ids)
      if (x != id) return x;
    return std::nullopt;
  }

  /// `v` (directly ahead of the leader) becomes the new leader.
  void join_front(PlatoonId id, VehicleId v, Store& store) {
    Platoon& p = platoons_.at(id);
    const VehicleId old_leader = p.leader();
    p.members.insert(p.members.begin(), v);
    p.saved_params[v] = store.gap_params(v);
    membership_[v] = id;
    tighten(old_leader, store);
  }

  /// `v` (directly behind the tail) joins as a follower.
  void join_back(PlatoonId id, VehicleId v, Store& store) {
    Platoon& p = platoons_.at(id);
    p.members.push_back(v);
    p.saved_params[v] = store.gap_params(v);
    membership_[v] = id;
    tighten(v, store);
  }

  /// Removes a member that left the network. The platoon dissolves when fewer
  /// than two remain; a new leader gets its own parameters back.
  void remove_member(VehicleId v, Store& store, double t) {
    auto pid = platoon_of(v);
    if (!pid) return;
    Platoon& p = platoons_.at(*pid);
    const bool was_leader = p.leader() == v;
    release(p, v, store);
    std::erase(p.members, v);
    p.saved_params.erase(v);
    if (p.size() < 2) {
      dissolve(*pid, store, t);
      return;
    }
    if (was_leader) store.set_gap_params(p.leader(), p.saved_params.at(p.leader()));
  }

  /// Splits a platoon whose members are no longer contiguous. `breaks[i]`
  /// is true when something intrudes between members i and i+1.
  std::vector<PlatoonId> split_at_breaks(PlatoonId id, const std::vector<bool>& breaks, Store& store,
                                         double t) {
    const Platoon& p = platoons_.at(id);
    std::vector<std::pair<std::size_t, std::size_t>> parts;
    std::size_t b = 0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i)
      if (breaks[i]) {
        parts.emplace_back(b, i + 1);
        b = i + 1;
      }
    parts.emplace_back(b, p.size());
    const std::vector<Turn> turns(parts.size(), p.shared_turn);
    return split(id, parts, turns, PlatoonEventKind::split_sensor, store, t);
  }

  void set_lane(PlatoonId id, const LaneId& lane) { platoons_.at(id).lane = lane; }

 private:
  PlatoonId create(std::vector<VehicleId> members, const LaneId& lane, Turn turn, Store& store) {
    Platoon p;
    p.id = next_id_++;
    p.members = std::move(members);
    p.lane = lane;
    p.shared_turn = turn;
    p.state = PlatoonPhase::forming;
    for (VehicleId v : p.members) {
      if (membership_.count(v)) throw std::logic_error("vehicle already in a platoon");
      p.saved_params[v] = store.gap_params(v);
      membership_[v] = p.id;
    }
    for (std::size_t i = 1; i < p.members.size(); ++i) tighten(p.members[i], store);
    const PlatoonId id = p.id;
    platoons_.emplace(id, std::move(p));
    return id;
  }

  void tighten(VehicleId v, Store& store) {
    store.set_gap_params(v, {cfg_.tau_platoon, cfg_.gmin_platoon});
  }

  void release(const Platoon& p, VehicleId v, Store& store) {
    store.set_gap_params(v, p.saved_params.at(v));
    membership_.erase(v);
  }

  static void transition(Platoon& p, PlatoonPhase to) {
    if (p.state == to) return;
    if (!valid_transition(p.state, to))
      throw std::logic_error("platoon " + std::to_string(p.id) + ": invalid transition " +
                             std::string(to_string(p.state)) + " -> " + std::string(to_string(to)));
    p.state = to;
  }

  PlatoonConfig cfg_;
  PlatoonId next_id_ = 1;
  std::map<PlatoonId, Platoon> platoons_;
  std::map<VehicleId, PlatoonId> membership_;
  std::vector<PlatoonEvent> events_;
};

}  // namespace arterial
