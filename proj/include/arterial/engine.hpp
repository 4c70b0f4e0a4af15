#pragma once

// Discrete-time simulation loop.
//
// Step order (normative): sense -> signals -> platoons -> car-following ->
// integrate -> transfer -> spawn. Car-following is evaluated on the state at
// the start of the step for every vehicle (simultaneous update).

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "arterial/carfollow.hpp"
#include "arterial/common.hpp"
#include "arterial/demand.hpp"
#include "arterial/network.hpp"
#include "arterial/platoon.hpp"
#include "arterial/rng.hpp"
#include "arterial/scenario.hpp"
#include "arterial/sensing.hpp"
#include "arterial/signal.hpp"

namespace arterial {

struct VehicleRuntime {
  VehicleId id = 0;
  VehicleClass cls = VehicleClass::manual;
  VehicleClassParams params;  ///< effective; platoon membership edits tau/g_min
  double x = 0.0;
  double v = 0.0;
  double a = 0.0;
  Route route;
  std::size_t route_index = 0;
  std::optional<PlatoonId> platoon;
  double spawn_time = 0.0;
};

/// Virtual stopped leader standing in for a red signal.
struct BlockingVehicle {
  LaneId lane;
  double x = 0.0;  ///< front bumper
};

/// x_b = x_s + g_min + l: the follower's desired standstill gap puts its front
/// exactly on the stop bar.
inline BlockingVehicle place_blocking(const LaneId& lane, double x_s, const VehicleClassParams& p) {
  return {lane, x_s + p.g_min + p.length};
}

/// Vehicles of class p that fit in a standing queue ending at `stop_bar`.
inline int queue_capacity(double stop_bar, const VehicleClassParams& p) {
  if (stop_bar < p.length) return 0;
  return static_cast<int>(std::floor((stop_bar - p.length) / p.jam_spacing() + 1e-9)) + 1;
}

/// Front positions of a standing queue packed back from the stop bar at
/// spacing l + g_min. nullopt fills the lane to capacity.
inline std::vector<double> queue_initializer(double stop_bar, std::optional<int> n,
                                             const VehicleClassParams& p) {
  const int cap = queue_capacity(stop_bar, p);
  if (n && (*n < 0 || *n > cap))
    throw ConfigError("initial queue of " + std::to_string(*n) + " vehicles exceeds capacity " +
                      std::to_string(cap));
  std::vector<double> xs;
  for (int k = 0; k < n.value_or(cap); ++k) xs.push_back(stop_bar - k * p.jam_spacing());
  return xs;
}

struct Counters {
  std::uint64_t attempts = 0;   ///< arrival draws that succeeded (incl. initial queues)
  std::uint64_t created = 0;
  std::uint64_t suppressed = 0;
  std::uint64_t exited = 0;
  std::uint64_t in_network = 0;
  std::uint64_t refused_transfers = 0;
  bool operator==(const Counters&) const = default;
};

struct QueueSample {
  double time = 0.0;
  std::string pair;
  LaneId lane;
  int count = 0;
  bool clamped = false;
  bool operator==(const QueueSample&) const = default;
};

struct TrajectoryPoint {
  double time = 0.0;
  VehicleId vehicle = 0;
  LaneId lane;
  double x = 0.0;
  double v = 0.0;
  double a = 0.0;
  bool operator==(const TrajectoryPoint&) const = default;
};

/// One max-pressure decision instant, for independent verification.
struct DecisionRecord {
  double time = 0.0;
  IntersectionId intersection;
  MovementQueues queues;
  std::size_t current = 0;
  std::size_t chosen = 0;
  bool held = false;  ///< a granted extension kept the current phase
};

struct InvariantStats {
  double min_gap = std::numeric_limits<double>::infinity();
  std::uint64_t param_restore_violations = 0;
  std::uint64_t partition_violations = 0;
  std::uint64_t conservation_violations = 0;
  std::uint64_t admitted = 0;         ///< vehicles admitted by a green-window estimate
  std::uint64_t admitted_caught = 0;  ///< of those, still before the stop bar at red
  std::uint64_t extensions_granted = 0;
  double max_speed_excess = 0.0;      ///< max(v - effective v_max), Krauss mode
};

struct RunOptions {
  bool record_decisions = false;
  bool check_invariants = true;
};

struct SimResult {
  std::vector<Detector> detectors;  ///< one stop-bar detector per approach lane, id = lane id
  std::vector<QueueSample> queues;
  std::vector<PlatoonEvent> platoon_events;
  std::vector<TrajectoryPoint> trajectories;
  std::vector<DecisionRecord> decisions;
  std::map<LaneId, std::uint64_t> exits_by_sink;
  Counters counters;
  InvariantStats stats;
  std::uint64_t hash = 0;
  std::uint64_t steps = 0;
  double clock = 0.0;

  const Detector* detector(const std::string& id) const {
    for (const auto& d : detectors)
      if (d.id == id) return &d;
    return nullptr;
  }
};

class Engine {
 public:
  explicit Engine(ScenarioConfig cfg, RunOptions opts = {})
      : cfg_(std::move(cfg)), opts_(opts), platoons_(cfg_.platoon),
        dawdle_(cfg_.seed, "dawdle"), sensing_rng_(cfg_.seed, "sensing") {
    cfg_.validate();
    compile();
    place_initial_queues();
    renumber();
    record_trajectory(0.0);
  }

  // ------------------------------------------------------------ access ----

  const ScenarioConfig& config() const { return cfg_; }
  double clock() const { return static_cast<double>(step_) * cfg_.dt; }
  std::uint64_t steps() const { return step_; }
  const Counters& counters() const { return counters_; }
  const InvariantStats& stats() const { return stats_; }
  std::uint64_t hash() const { return hash_; }

  const VehicleRuntime& vehicle(VehicleId id) const { return vehicles_.at(id); }

  /// Vehicles on a lane, front first.
  std::vector<const VehicleRuntime*> lane_vehicles(const LaneId& lane) const {
    std::vector<const VehicleRuntime*> out;
    for (VehicleId id : lanes_.at(lane_index_.at(lane)).q) out.push_back(&vehicles_[id]);
    return out;
  }

  const ControllerState* controller(const IntersectionId& id) const {
    for (const auto& x : xsecs_)
      if (x.id == id && x.ctl) return &*x.ctl;
    return nullptr;
  }

  const std::vector<Detector>& detectors() const { return detectors_; }

  // -------------------------------------------------------------- step ----

  void step() {
    const double t = clock();
    sense(t);
    advance_controllers(t);
    update_green();
    if (cfg_.platooning_enabled) platoon_stage(t);
    car_following();
    integrate(t);
    transfer(t);
    spawn(clock_after());
    ++step_;
    renumber();
    // Transfers can merge a vehicle from another approach into a platoon.
    if (cfg_.platooning_enabled)
      for (PlatoonId pid : platoons_.live_ids())
        if (platoons_.find(pid)) enforce_contiguity(pid, clock());
    if (opts_.check_invariants) check_invariants();
    mix_hash();
    record_trajectory(clock());
  }

  SimResult finish() && {
    SimResult r;
    r.detectors = std::move(detectors_);
    r.queues = std::move(queue_log_);
    r.platoon_events = platoons_.events();
    r.trajectories = std::move(trajectories_);
    r.decisions = std::move(decisions_);
    r.exits_by_sink = std::move(exits_by_sink_);
    r.counters = counters_;
    r.stats = stats_;
    r.hash = hash_;
    r.steps = step_;
    r.clock = clock();
    return r;
  }

 private:
  struct Vehicle : VehicleRuntime {
    std::vector<int> path;         ///< lane indices of route
    bool alive = true;
    int admitted_lane = -1;        ///< stop bar this vehicle was admitted through
    double allowance = 1.0;        ///< speed-limit multiplier while admitted
    double speed_cap = kNoLeader;  ///< pending platoon deceleration directive
    std::int64_t crossed_upstream_step = -1;
    std::size_t slot = 0;          ///< position in its lane queue
    double new_v = 0.0;
    double new_a = 0.0;
  };

 public:
  /// Platoon parameter store over the engine's vehicles.
  struct GapStore {
    std::vector<Vehicle>* vehicles = nullptr;
    GapParams gap_params(VehicleId id) const {
      const auto& p = (*vehicles)[id].params;
      return {p.tau, p.g_min};
    }
    void set_gap_params(VehicleId id, GapParams g) {
      auto& p = (*vehicles)[id].params;
      p.tau = g.tau;
      p.g_min = g.g_min;
    }
  };

  const PlatoonManager<GapStore>& platoons() const { return platoons_; }

 private:
  struct LaneRt {
    const Lane* lane = nullptr;
    std::string id;
    double length = 0.0, stop_bar = 0.0, speed_limit = 0.0;
    int xsec = -1;
    bool sink = false;
    std::vector<std::pair<int, Turn>> next;
    std::deque<VehicleId> q;
    int stop_det = -1;
    int pair = -1;
    std::array<bool, 3> green{true, true, true};
    std::array<bool, 3> prev_green{true, true, true};
  };

  struct XsecRt {
    IntersectionId id;
    bool signalized = false;
    std::optional<ControllerState> ctl;
    std::vector<int> incoming;
    std::vector<Movement> movements;
    bool entered_red_clear = false;
  };

  struct FlowRt {
    const FlowSpec* spec = nullptr;
    int source = -1;
    RngStream arrivals, classes, routes;
    std::map<LaneId, Route> shortest;
  };

  struct PairRt {
    DetectorPair pair;
    int lane = -1;
    QueueEstimate last;
  };

  struct Pending {
    std::uint64_t step;
    DecelDirective d;
  };

  double clock_after() const { return static_cast<double>(step_ + 1) * cfg_.dt; }

  const VehicleClassParams& class_params(VehicleClass c) const { return cfg_.class_params.at(c); }

  // --------------------------------------------------------- compilation --

  void compile() {
    for (const auto& [id, lane] : cfg_.network.lanes) {
      lane_index_[id] = static_cast<int>(lanes_.size());
      LaneRt l;
      l.lane = &lane;
      l.id = id;
      l.length = lane.length;
      l.stop_bar = lane.stop_bar;
      l.speed_limit = lane.speed_limit;
      l.sink = cfg_.network.is_sink(id);
      lanes_.push_back(std::move(l));
    }
    for (const auto& [id, x] : cfg_.network.intersections) {
      XsecRt xr;
      xr.id = id;
      xr.signalized = x.signalized;
      xr.movements = x.movements;
      if (const SignalPlan* sp = cfg_.plan_for(id)) xr.ctl = make_controller(*sp);
      for (const auto& lid : x.incoming_lanes) {
        const int li = lane_index_.at(lid);
        xr.incoming.push_back(li);
        lanes_[li].xsec = static_cast<int>(xsecs_.size());
      }
      for (const auto& m : x.movements)
        lanes_[lane_index_.at(m.from)].next.emplace_back(lane_index_.at(m.to), m.turn);
      xsecs_.push_back(std::move(xr));
    }

    double jam = kNoLeader;
    if (cfg_.smart_share < 1.0) jam = std::min(jam, class_params(VehicleClass::manual).jam_spacing());
    if (cfg_.smart_share > 0.0) jam = std::min(jam, class_params(VehicleClass::smart).jam_spacing());
    for (int li = 0; li < static_cast<int>(lanes_.size()); ++li) {
      LaneRt& l = lanes_[li];
      if (l.xsec < 0) continue;
      l.stop_det = static_cast<int>(detectors_.size());
      detectors_.push_back({l.id, l.id, l.stop_bar, {}});
      PairRt pr;
      pr.pair.id = l.id;
      pr.pair.lane = l.id;
      pr.pair.downstream_pos = l.stop_bar;
      pr.pair.upstream_pos = std::max(0.0, l.stop_bar - cfg_.sensing.pair_spacing);
      pr.pair.jam_spacing = jam;
      pr.pair.footprint = cfg_.sensing.footprint;
      pr.pair.noise = {cfg_.sensing.noise};
      pr.lane = li;
      l.pair = static_cast<int>(pairs_.size());
      pairs_.push_back(std::move(pr));
    }

    for (const auto& f : cfg_.demand) {
      FlowRt fr;
      fr.spec = &f;
      fr.source = lane_index_.at(f.source);
      fr.arrivals = RngStream(cfg_.seed, "arrivals/" + f.source);
      fr.classes = RngStream(cfg_.seed, "class/" + f.source);
      fr.routes = RngStream(cfg_.seed, "route/" + f.source);
      if (f.mode == RouteMode::shortest) fr.shortest = shortest_routes(cfg_.network, f.source);
      flows_.push_back(std::move(fr));
    }
    log_every_ = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(
                                                std::llround(cfg_.queue_log_period / cfg_.dt)));
    store_.vehicles = &vehicles_;
  }

  Route draw_route(FlowRt& f) {
    if (f.spec->mode == RouteMode::shortest) {
      auto it = f.shortest.find(*f.spec->sink);
      if (it == f.shortest.end())
        throw ConfigError("no route from '" + f.spec->source + "' to '" + *f.spec->sink + "'");
      return it->second;
    }
    return assign_route(*f.spec, cfg_.network, f.routes);
  }

  VehicleId create_vehicle(FlowRt& f, VehicleClass cls, double x, double t) {
    Vehicle v;
    v.id = vehicles_.size();
    v.cls = cls;
    v.params = class_params(cls);
    v.x = x;
    v.route = draw_route(f);
    for (const auto& lid : v.route) v.path.push_back(lane_index_.at(lid));
    v.spawn_time = t;
    vehicles_.push_back(std::move(v));
    ++counters_.created;
    ++counters_.in_network;
    return vehicles_.back().id;
  }

  void place_initial_queues() {
    for (auto& f : flows_) {
      const FlowSpec& s = *f.spec;
      if (s.initial_queue == 0 && !s.fill) continue;
      LaneRt& lane = lanes_[f.source];
      double front = lane.stop_bar;
      double rear_limit = 0.0;
      if (!lane.q.empty()) {
        const Vehicle& tail = vehicles_[lane.q.back()];
        front = tail.x - tail.params.length;
      }
      int placed = 0;
      bool first = lane.q.empty();
      while (s.fill || placed < s.initial_queue) {
        const VehicleClass cls =
            f.classes.bernoulli(cfg_.smart_share) ? VehicleClass::smart : VehicleClass::manual;
        const auto& p = class_params(cls);
        const double x = first ? front : front - p.g_min;
        if (x - p.length < rear_limit - 1e-9) {
          if (s.fill) break;
          throw ConfigError("initial queue of " + std::to_string(s.initial_queue) +
                            " vehicles exceeds the capacity of lane '" + lane.id + "'");
        }
        ++counters_.attempts;
        const VehicleId id = create_vehicle(f, cls, x, 0.0);
        lane.q.push_back(id);
        front = x - p.length;
        first = false;
        ++placed;
      }
    }
  }

  void renumber() {
    for (auto& l : lanes_)
      for (std::size_t i = 0; i < l.q.size(); ++i) vehicles_[l.q[i]].slot = i;
  }

  // --------------------------------------------------------------- helpers --

  std::optional<Turn> turn_between(int from, int to) const {
    for (const auto& [l, t] : lanes_[from].next)
      if (l == to) return t;
    return std::nullopt;
  }

  int lane_of(const Vehicle& v) const { return v.path[v.route_index]; }

  /// Turn the vehicle takes at the end of route position `j`.
  std::optional<Turn> turn_at(const Vehicle& v, std::size_t j) const {
    if (j + 1 >= v.path.size()) return std::nullopt;
    return turn_between(v.path[j], v.path[j + 1]);
  }

  std::optional<Turn> next_turn(const Vehicle& v) const { return turn_at(v, v.route_index); }

  bool green(int lane, Turn t) const { return lanes_[lane].green[static_cast<int>(t)]; }

  double effective_vmax(const Vehicle& v) const {
    return std::min(v.params.v_max, lanes_[lane_of(v)].speed_limit) * v.allowance;
  }

  struct Obstacle {
    double gap;
    double v;
  };

  /// At most a red-light blocker plus one vehicle ahead.
  struct Obstacles {
    std::array<Obstacle, 2> items{};
    std::size_t n = 0;
    void push_back(Obstacle o) { items[n++] = o; }
    bool empty() const { return n == 0; }
    const Obstacle* begin() const { return items.data(); }
    const Obstacle* end() const { return items.data() + n; }
  };

  /// Obstacles the vehicle reacts to: the vehicle ahead (possibly on a later
  /// route lane within lookahead), a red blocker on a later lane, and a red
  /// blocker on its own lane unless it can no longer stop or was admitted.
  Obstacles obstacles(const Vehicle& v) const {
    Obstacles obs;
    const int li = lane_of(v);
    const LaneRt& lane = lanes_[li];

    if (lane.xsec >= 0 && v.x <= lane.stop_bar + 1e-9 && v.admitted_lane != li) {
      if (auto t = next_turn(v); t && !green(li, *t)) {
        const double dist = lane.stop_bar - v.x;
        const bool committed = v.v * v.v / (2.0 * v.params.b) > dist + 1e-9;
        if (!committed) {
          const BlockingVehicle bv = place_blocking(lane.id, lane.stop_bar, v.params);
          obs.push_back({bv.x - v.params.length - v.x, 0.0});
        }
      }
    }

    if (v.slot > 0) {
      const Vehicle& ahead = vehicles_[lane.q[v.slot - 1]];
      obs.push_back({ahead.x - ahead.params.length - v.x, ahead.v});
      return obs;
    }

    double dist = lane.length - v.x;
    for (std::size_t j = v.route_index + 1; j < v.path.size(); ++j) {
      if (dist > cfg_.lookahead) break;
      const LaneRt& L = lanes_[v.path[j]];
      if (!L.q.empty()) {
        const Vehicle& tail = vehicles_[L.q.back()];
        const double gap = dist + tail.x - tail.params.length;
        if (gap <= cfg_.lookahead) obs.push_back({gap, tail.v});
        break;
      }
      if (L.xsec >= 0) {
        if (auto t = turn_at(v, j); t && !green(v.path[j], *t)) {
          const BlockingVehicle bv = place_blocking(L.id, L.stop_bar, v.params);
          const double gap = dist + bv.x - v.params.length;
          if (gap <= cfg_.lookahead) obs.push_back({gap, 0.0});
          break;
        }
      }
      dist += L.length;
    }
    return obs;
  }

  double safe_speed(const Vehicle& v, const VehicleClassParams& p) const {
    double vs = kNoLeader;
    for (const auto& o : obstacles(v)) {
      // A negative gap means the leader's body still straddles the lane
      // boundary ahead; hold position rather than creep into it.
      if (o.gap < 0.0) return 0.0;
      FollowContext c{v.v, o.v, std::max(0.0, o.gap - p.g_min), cfg_.dt};
      vs = std::min(vs, krauss_safe_speed(c, p));
    }
    return vs;
  }

  // ----------------------------------------------------------- (1) sense --

  void sense(double t) {
    calls_.clear();
    for (auto& pr : pairs_) {
      const LaneRt& l = lanes_[pr.lane];
      std::vector<LaneOccupant> occ;
      occ.reserve(l.q.size());
      for (VehicleId id : l.q) {
        const Vehicle& v = vehicles_[id];
        occ.push_back({id, v.x, v.params.length, v.v});
      }
      pr.last = estimate_queue(pr.pair, occ, t, sensing_rng_);
      bool call = false;
      const double h = 0.5 * pr.pair.footprint;
      for (const auto& o : occ)
        if (o.x >= pr.pair.downstream_pos - h && o.x - o.length <= pr.pair.downstream_pos + h)
          call = true;
      for (VehicleId id : l.q)
        if (vehicles_[id].crossed_upstream_step + 1 == static_cast<std::int64_t>(step_)) call = true;
      if (l.stop_det >= 0) {
        const auto& log = detectors_[l.stop_det].log;
        if (!log.empty() && log.back().time >= t - cfg_.dt - 1e-9) call = true;
      }
      calls_[l.id] = call;
      if (step_ % log_every_ == 0)
        queue_log_.push_back({t, pr.pair.id, l.id, pr.last.count, pr.last.clamped});
    }
  }

  double estimate(int lane) const {
    const int p = lanes_[lane].pair;
    return p < 0 ? 0.0 : static_cast<double>(pairs_[p].last.count);
  }

  MovementQueues movement_queues(const XsecRt& x) const {
    MovementQueues q;
    for (const auto& m : x.movements)
      q[{m.from, m.turn}] = {estimate(lane_index_.at(m.from)), estimate(lane_index_.at(m.to))};
    return q;
  }

  // ------------------------------------------------------- (2) controllers --

  void advance_controllers(double t) {
    for (auto& x : xsecs_) {
      x.entered_red_clear = false;
      if (!x.ctl) continue;
      const bool was_clear = x.ctl->in_red_clear;
      switch (x.ctl->mode) {
        case ControlMode::fixed:
          *x.ctl = fixed_step(*x.ctl, t);
          break;
        case ControlMode::actuated:
          if (step_ > 0) *x.ctl = actuated_step(*x.ctl, calls_, cfg_.dt);
          break;
        case ControlMode::max_pressure: {
          if (step_ == 0) break;
          const ControllerState before = *x.ctl;
          const MovementQueues q = movement_queues(x);
          *x.ctl = max_pressure_step(*x.ctl, q, cfg_.dt);
          const bool decided = !before.in_red_clear && x.ctl->since_decision == 0.0;
          if (decided && opts_.record_decisions) {
            const std::size_t chosen = x.ctl->in_red_clear ? x.ctl->next_phase : x.ctl->current_phase;
            const bool held = before.phase_elapsed + cfg_.dt < before.hold_until - kTimeEps;
            decisions_.push_back({t, x.id, q, before.current_phase, chosen, held});
          }
          break;
        }
      }
      x.entered_red_clear = !was_clear && x.ctl->in_red_clear;
    }
  }

  void update_green() {
    for (auto& l : lanes_) {
      l.prev_green = l.green;
      if (l.xsec < 0) continue;
      const XsecRt& x = xsecs_[l.xsec];
      for (Turn t : kTurnOrder)
        l.green[static_cast<int>(t)] = !x.ctl || x.ctl->is_green({l.id, t});
    }
    if (step_ == 0)
      for (auto& l : lanes_) l.prev_green = l.green;
  }

  // ---------------------------------------------------------- (3) platoons --

  void set_platoon_field(PlatoonId id) {
    if (const Platoon* p = platoons_.find(id))
      for (VehicleId v : p->members) vehicles_[v].platoon = id;
  }

  void clear_platoon_field(const std::vector<VehicleId>& members) {
    for (VehicleId v : members)
      if (!platoons_.platoon_of(v)) vehicles_[v].platoon.reset();
  }

  void dissolve(PlatoonId id, double t) {
    const Platoon* p = platoons_.find(id);
    if (!p) return;
    const auto members = p->members;
    platoons_.dissolve(id, store_, t);
    clear_platoon_field(members);
  }

  /// Splits and refreshes membership fields for everything touched.
  template <class F>
  std::vector<PlatoonId> restructure(PlatoonId id, F&& op) {
    const auto members = platoons_.find(id)->members;
    std::vector<PlatoonId> ids = op();
    for (PlatoonId p : ids) set_platoon_field(p);
    clear_platoon_field(members);
    return ids;
  }

  /// True when `b` drives directly behind `a` (same lane, adjacent; or `a` is
  /// the tail of the lane `b` enters next and `b` is its own lane's front).
  bool directly_behind(const Vehicle& a, const Vehicle& b) const {
    const int la = lane_of(a), lb = lane_of(b);
    if (la == lb) return b.slot == a.slot + 1;
    return b.slot == 0 && a.slot + 1 == lanes_[la].q.size() &&
           b.route_index + 1 < b.path.size() && b.path[b.route_index + 1] == la;
  }

  /// Distance from v's front to the stop bar of route lane `target`.
  double distance_to_stop_bar(const Vehicle& v, int target) const {
    double d = -v.x;
    for (std::size_t j = v.route_index; j < v.path.size(); ++j) {
      if (v.path[j] == target) return d + lanes_[target].stop_bar;
      d += lanes_[v.path[j]].length;
    }
    return kNoLeader;
  }

  /// Turn each member takes at the end of lane `at`.
  std::optional<std::vector<Turn>> member_turns(const Platoon& p, int at) const {
    std::vector<Turn> turns;
    for (VehicleId id : p.members) {
      const Vehicle& v = vehicles_[id];
      std::optional<Turn> t;
      for (std::size_t j = v.route_index; j < v.path.size(); ++j)
        if (v.path[j] == at) {
          t = turn_at(v, j);
          break;
        }
      if (!t) return std::nullopt;
      turns.push_back(*t);
    }
    return turns;
  }

  bool joinable(const Vehicle& v, int lane, Turn turn) const {
    return v.cls == VehicleClass::smart && !platoons_.platoon_of(v.id) &&
           v.params.tau == class_params(v.cls).tau && turn_at_lane(v, lane) == turn;
  }

  std::optional<Turn> turn_at_lane(const Vehicle& v, int lane) const {
    for (std::size_t j = v.route_index; j < v.path.size(); ++j)
      if (v.path[j] == lane) return turn_at(v, j);
    return std::nullopt;
  }

  void join_neighbours(PlatoonId front_id, PlatoonId rear_id, int at) {
    if (const Platoon* p = platoons_.find(front_id)) {
      while (true) {
        p = platoons_.find(front_id);
        const Vehicle& lead = vehicles_[p->leader()];
        const LaneRt& l = lanes_[lane_of(lead)];
        if (lead.slot == 0) break;
        const Vehicle& ahead = vehicles_[l.q[lead.slot - 1]];
        if (!joinable(ahead, at, p->shared_turn)) break;
        platoons_.join_front(front_id, ahead.id, store_);
        vehicles_[ahead.id].platoon = front_id;
      }
    }
    if (const Platoon* p = platoons_.find(rear_id)) {
      while (true) {
        p = platoons_.find(rear_id);
        const Vehicle& tail = vehicles_[p->members.back()];
        const LaneRt& l = lanes_[lane_of(tail)];
        if (tail.slot + 1 >= l.q.size()) break;
        const Vehicle& behind = vehicles_[l.q[tail.slot + 1]];
        if (!joinable(behind, at, p->shared_turn)) break;
        platoons_.join_back(rear_id, behind.id, store_);
        vehicles_[behind.id].platoon = rear_id;
      }
    }
  }

  void platoon_stage(double t) {
    // Red onset dissolves every platoon still queued before that stop bar.
    for (int li = 0; li < static_cast<int>(lanes_.size()); ++li) {
      LaneRt& l = lanes_[li];
      if (l.xsec < 0) continue;
      for (Turn turn : kTurnOrder) {
        const int k = static_cast<int>(turn);
        if (!(l.prev_green[k] && !l.green[k])) continue;
        std::set<PlatoonId> hit;
        for (VehicleId id : l.q) {
          const Vehicle& v = vehicles_[id];
          if (v.x <= l.stop_bar && v.platoon && next_turn(v) == turn) hit.insert(*v.platoon);
          if (v.admitted_lane == li && v.x <= l.stop_bar && next_turn(v) == turn)
            ++stats_.admitted_caught;
        }
        for (PlatoonId p : hit) dissolve(p, t);
      }
    }

    for (PlatoonId pid : platoons_.live_ids()) {
      if (!platoons_.find(pid)) continue;
      maintain(pid, t);
    }

    // Formation immediately before a phase change.
    for (auto& x : xsecs_) {
      if (!x.ctl) continue;
      std::set<int> form_on;
      const auto& plan = x.ctl->plan;
      const std::size_t n = plan.phases.size();
      if (x.ctl->mode == ControlMode::fixed) {
        const auto ind = fixed_state(plan, t);
        if (ind.phase && ind.remaining <= cfg_.dt + kTimeEps)
          for (int li : x.incoming)
            if (plan.phases[(*ind.phase + 1) % n].serves_lane(lanes_[li].id)) form_on.insert(li);
      }
      if (x.entered_red_clear)
        for (int li : x.incoming)
          if (plan.phases[x.ctl->next_phase].serves_lane(lanes_[li].id)) form_on.insert(li);
      for (int li : x.incoming) {
        const LaneRt& l = lanes_[li];
        for (int k = 0; k < 3; ++k)
          if (l.green[k] && !l.prev_green[k]) form_on.insert(li);
      }
      for (int li : form_on) form_on_lane(li, t);
    }
  }

  void form_on_lane(int li, double t) {
    const LaneRt& l = lanes_[li];
    std::vector<MemberView> views;
    for (VehicleId id : l.q) {
      const Vehicle& v = vehicles_[id];
      if (v.x > l.stop_bar) continue;
      views.push_back({id, v.cls, next_turn(v), platoons_.platoon_of(id).has_value()});
    }
    for (PlatoonId pid : platoons_.form(views, l.id, store_, t)) {
      platoons_.activate(pid);
      set_platoon_field(pid);
    }
  }

  /// Anything that slipped between two members splits the platoon. False if
  /// `pid` no longer leads a platoon afterwards.
  bool enforce_contiguity(PlatoonId pid, double t) {
    const Platoon& p = *platoons_.find(pid);
    std::vector<bool> breaks(p.size() - 1, false);
    bool any = false;
    for (std::size_t i = 0; i + 1 < p.size(); ++i)
      if (!directly_behind(vehicles_[p.members[i]], vehicles_[p.members[i + 1]]))
        breaks[i] = any = true;
    if (!any) return true;
    auto ids = restructure(pid, [&] { return platoons_.split_at_breaks(pid, breaks, store_, t); });
    return !ids.empty() && ids.front() == pid;
  }

  void maintain(PlatoonId pid, double t) {
    if (!enforce_contiguity(pid, t)) return;

    const Platoon* p = platoons_.find(pid);
    const int li = lane_of(vehicles_[p->leader()]);
    platoons_.set_lane(pid, lanes_[li].id);

    // Sensor split as the leader passes the upstream queue sensor.
    if (vehicles_[p->leader()].crossed_upstream_step + 1 == static_cast<std::int64_t>(step_) &&
        lanes_[li].xsec >= 0) {
      if (auto turns = member_turns(*p, li)) {
        auto ids = restructure(pid, [&] { return platoons_.split_at_sensors(pid, *turns, store_, t); });
        if (!ids.empty()) join_neighbours(ids.front(), ids.back(), li);
        if (!platoons_.find(pid)) return;
        p = platoons_.find(pid);
      }
    }

    const LaneRt& lane = lanes_[li];
    if (lane.xsec >= 0 && lane_of(vehicles_[p->leader()]) == li &&
        vehicles_[p->leader()].x <= lane.stop_bar && xsecs_[lane.xsec].ctl) {
      XsecRt& x = xsecs_[lane.xsec];
      if (green(li, p->shared_turn)) {
        green_window(pid, li, x, t);
        if (!platoons_.find(pid)) return;
        p = platoons_.find(pid);
      }
    }

    // Deceleration propagation.
    const Vehicle& leader = vehicles_[p->leader()];
    if (leader.a < -1e-9) {
      const auto dirs = propagate_deceleration(*p, leader.a, leader.v, t, cfg_.platoon.comm_latency);
      const auto lag = static_cast<std::uint64_t>(latency_steps(cfg_.platoon.comm_latency, cfg_.dt));
      for (const auto& d : dirs) pending_.push_back({step_ + lag, d});
    }
  }

  void green_window(PlatoonId pid, int li, XsecRt& x, double t) {
    const Platoon& p = *platoons_.find(pid);
    const double remaining = guaranteed_green(*x.ctl);
    std::vector<double> arrivals;
    double cap = kNoLeader;
    double prev = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Vehicle& v = vehicles_[p.members[i]];
      const double boosted = effective_vmax(v) / v.allowance * (1.0 + cfg_.platoon.accel_boost);
      if (i == 0) {
        cap = std::min(boosted, std::max(0.0, safe_speed(v, v.params)));
      } else {
        cap = std::min(cap, boosted);
      }
      double ti = conservative_arrival_time(distance_to_stop_bar(v, li), v.v, cap, v.params.a_max);
      if (i > 0) ti = std::max(ti, prev + v.params.tau);
      arrivals.push_back(ti);
      prev = ti;
    }
    const std::size_t k = green_window_prefix(arrivals, remaining, cfg_.dt);
    for (std::size_t i = 0; i < k; ++i) {
      Vehicle& v = vehicles_[p.members[i]];
      if (v.admitted_lane != li) {
        v.admitted_lane = li;
        v.allowance = 1.0 + cfg_.platoon.accel_boost;
        ++stats_.admitted;
      }
    }

    // Ask adaptive controllers for more green when the tail would miss it.
    if (x.ctl->mode != ControlMode::fixed && k < p.size() && !extension_asked_.count({pid, li})) {
      extension_asked_.insert({pid, li});
      double opposing = 0.0;
      for (int other : x.incoming)
        if (!x.ctl->plan.phases[x.ctl->current_phase].serves_lane(lanes_[other].id))
          opposing += estimate(other);
      const auto r = request_extension(*x.ctl, static_cast<int>(p.size()), opposing);
      if (r.status == ExtensionResult::Status::granted) ++stats_.extensions_granted;
    }

    if (k > 0 && k < p.size())
      restructure(pid, [&] {
        std::vector<PlatoonId> ids{pid};
        if (auto rest = platoons_.split_for_green_window(pid, k, store_, t)) ids.push_back(*rest);
        std::erase_if(ids, [&](PlatoonId q) { return !platoons_.find(q); });
        return ids;
      });
  }

  // -------------------------------------------------- (4) car-following --

  void car_following() {
    for (auto& l : lanes_)
      for (VehicleId id : l.q) vehicles_[id].speed_cap = kNoLeader;
    if (!pending_.empty()) {
      std::vector<Pending> keep;
      for (const auto& pd : pending_) {
        if (pd.step > step_) {
          keep.push_back(pd);
          continue;
        }
        Vehicle& v = vehicles_[pd.d.vehicle];
        if (v.alive && v.platoon) v.speed_cap = std::min(v.speed_cap, pd.d.speed_cap);
      }
      pending_ = std::move(keep);
    }

    for (auto& l : lanes_) {
      for (VehicleId id : l.q) {
        Vehicle& v = vehicles_[id];
        VehicleClassParams p = v.params;
        p.v_max = effective_vmax(v);
        const auto obs = obstacles(v);
        if (cfg_.cf_model == CfModel::krauss) {
          const double vs = safe_speed(v, p);
          const bool dawdles = p.eps > 0.0 && !v.platoon;
          const double u = dawdles ? dawdle_.uniform() : 0.0;
          double nv = krauss_update(v.v, vs, p, cfg_.dt, u);
          // A directive may not brake harder than b: whoever follows the
          // platoon tail relies on that bound for its own safe speed.
          nv = std::min(nv, std::max(v.speed_cap, v.v - p.b * cfg_.dt));
          v.new_v = std::max(0.0, nv);
          v.new_a = (v.new_v - v.v) / cfg_.dt;
        } else {
          double a = obs.empty() ? iidm_accel({v.v, 0.0, kNoLeader, cfg_.dt}, p) : kNoLeader;
          for (const auto& o : obs) a = std::min(a, iidm_accel({v.v, o.v, o.gap, cfg_.dt}, p));
          if (std::isfinite(v.speed_cap))
            a = std::min(a, std::max((v.speed_cap - v.v) / cfg_.dt, -p.b));
          v.new_a = a;
        }
      }
    }
  }

  // ------------------------------------------------------- (5) integrate --

  void integrate(double t) {
    for (int li = 0; li < static_cast<int>(lanes_.size()); ++li) {
      LaneRt& l = lanes_[li];
      if (l.q.empty()) continue;
      std::vector<PositionChange> moves;
      moves.reserve(l.q.size());
      const int pair = l.pair;
      for (VehicleId id : l.q) {
        Vehicle& v = vehicles_[id];
        const double x0 = v.x;
        if (cfg_.cf_model == CfModel::krauss) {
          v.v = v.new_v;
          v.a = v.new_a;
          v.x += v.v * cfg_.dt;
        } else {
          const double a = v.new_a;
          if (v.v + a * cfg_.dt < 0.0) {
            // Stop within the step: travel only the braking distance.
            v.x += a < 0.0 ? v.v * v.v / (-2.0 * a) : 0.0;
            v.a = -v.v / cfg_.dt;
            v.v = 0.0;
          } else {
            v.x += v.v * cfg_.dt + 0.5 * a * cfg_.dt * cfg_.dt;
            v.v += a * cfg_.dt;
            v.a = a;
          }
        }
        if (cfg_.cf_model == CfModel::krauss)
          stats_.max_speed_excess = std::max(stats_.max_speed_excess, v.v - effective_vmax(v));
        moves.push_back({id, x0, v.x});
        if (pair >= 0) {
          const double up = pairs_[pair].pair.upstream_pos;
          if (x0 <= up && v.x > up) v.crossed_upstream_step = static_cast<std::int64_t>(step_);
        }
      }
      if (l.stop_det >= 0) record_crossings(detectors_[l.stop_det], moves, t, cfg_.dt);
    }
  }

  // -------------------------------------------------------- (6) transfer --

  void transfer(double t) {
    for (int li = 0; li < static_cast<int>(lanes_.size()); ++li) {
      LaneRt& l = lanes_[li];
      while (!l.q.empty()) {
        Vehicle& v = vehicles_[l.q.front()];
        if (v.x <= l.length) break;
        if (l.sink) {
          l.q.pop_front();
          exit_vehicle(v, t);
          continue;
        }
        const int to = v.path[v.route_index + 1];
        LaneRt& next = lanes_[to];
        const double nx = v.x - l.length;
        bool fits = true;
        if (!next.q.empty()) {
          const Vehicle& tail = vehicles_[next.q.back()];
          fits = tail.x - tail.params.length - nx > 0.0;
        }
        if (!fits) {
          // Spillback: wait just past the lane end, so the stop-bar detector
          // does not count the vehicle a second time when it finally leaves.
          v.x = std::nextafter(l.length, kNoLeader);
          v.v = 0.0;
          v.a = 0.0;
          ++counters_.refused_transfers;
          break;
        }
        l.q.pop_front();
        v.x = nx;
        ++v.route_index;
        v.admitted_lane = -1;
        v.allowance = 1.0;
        next.q.push_back(v.id);
      }
    }
  }

  void exit_vehicle(Vehicle& v, double t) {
    if (v.platoon) {
      const PlatoonId pid = *v.platoon;
      const auto members = platoons_.find(pid) ? platoons_.find(pid)->members
                                                : std::vector<VehicleId>{};
      platoons_.remove_member(v.id, store_, t);
      clear_platoon_field(members);
    }
    v.alive = false;
    ++counters_.exited;
    --counters_.in_network;
    ++exits_by_sink_[lanes_[lane_of(v)].id];
  }

  // ----------------------------------------------------------- (7) spawn --

  void spawn(double t) {
    for (auto& f : flows_) {
      LaneRt& lane = lanes_[f.source];
      auto entry_free = [&](VehicleClass c) {
        if (lane.q.empty()) return true;
        const auto& p = class_params(c);
        const Vehicle& tail = vehicles_[lane.q.back()];
        return tail.x - tail.params.length >= p.length + p.g_min;
      };
      const SpawnOutcome o =
          spawn_step(*f.spec, cfg_.dt, cfg_.smart_share, entry_free, f.arrivals, f.classes);
      if (o.result == SpawnResult::none) continue;
      ++counters_.attempts;
      if (o.result == SpawnResult::suppressed) {
        ++counters_.suppressed;
        continue;
      }
      const VehicleId id = create_vehicle(f, o.cls, class_params(o.cls).length, t);
      lane.q.push_back(id);
    }
  }

  // ------------------------------------------------------- invariants --

  [[noreturn]] void violation(const std::string& what, int li) const {
    std::ostringstream os;
    os.precision(17);
    os << "invariant violated at step " << step_ << " (t=" << clock() << "): " << what;
    if (li >= 0) {
      os << "\nlane " << lanes_[li].id << " (length " << lanes_[li].length << "):";
      for (VehicleId id : lanes_[li].q) {
        const Vehicle& v = vehicles_[id];
        os << "\n  id=" << id << " x=" << v.x << " v=" << v.v << " a=" << v.a
           << " l=" << v.params.length << " tau=" << v.params.tau << " g_min=" << v.params.g_min;
      }
    }
    throw InvariantViolation(os.str());
  }

  void check_invariants() {
    std::uint64_t in_lanes = 0;
    for (int li = 0; li < static_cast<int>(lanes_.size()); ++li) {
      const LaneRt& l = lanes_[li];
      in_lanes += l.q.size();
      for (std::size_t i = 0; i < l.q.size(); ++i) {
        const Vehicle& v = vehicles_[l.q[i]];
        if (!(v.v >= 0.0)) violation("negative speed", li);
        if (v.x < 0.0 || v.x > l.length + 1e-9) violation("position outside lane", li);
        if (i > 0) {
          const Vehicle& a = vehicles_[l.q[i - 1]];
          const double gap = a.x - a.params.length - v.x;
          stats_.min_gap = std::min(stats_.min_gap, gap);
          if (!(gap > 0.0)) violation("gap overlap between " + std::to_string(a.id) + " and " +
                                          std::to_string(v.id), li);
        }
        const auto pid = platoons_.platoon_of(v.id);
        if (pid != v.platoon) ++stats_.partition_violations;
        if (!pid) {
          const auto& c = class_params(v.cls);
          if (v.params.tau != c.tau || v.params.g_min != c.g_min) ++stats_.param_restore_violations;
        } else if (v.cls != VehicleClass::smart) {
          ++stats_.partition_violations;
        }
      }
    }
    if (in_lanes != counters_.in_network || counters_.created != counters_.exited + counters_.in_network ||
        counters_.attempts != counters_.created + counters_.suppressed)
      ++stats_.conservation_violations;

    for (const auto& [id, p] : platoons_.platoons()) {
      if (p.size() < 2) ++stats_.partition_violations;
      for (std::size_t i = 0; i + 1 < p.size(); ++i)
        if (!directly_behind(vehicles_[p.members[i]], vehicles_[p.members[i + 1]]))
          ++stats_.partition_violations;
    }
  }

  void mix_hash() {
    std::uint64_t h = splitmix64(hash_ ^ step_);
    for (int li = 0; li < static_cast<int>(lanes_.size()); ++li)
      for (VehicleId id : lanes_[li].q) {
        const Vehicle& v = vehicles_[id];
        h = splitmix64(h ^ id);
        h = splitmix64(h ^ static_cast<std::uint64_t>(li));
        h = splitmix64(h ^ std::bit_cast<std::uint64_t>(v.x));
        h = splitmix64(h ^ std::bit_cast<std::uint64_t>(v.v));
      }
    hash_ = h;
  }

  void record_trajectory(double t) {
    if (!cfg_.record_trajectories) return;
    for (const auto& l : lanes_)
      for (VehicleId id : l.q) {
        const Vehicle& v = vehicles_[id];
        trajectories_.push_back({t, id, l.id, v.x, v.v, v.a});
      }
  }

  ScenarioConfig cfg_;
  RunOptions opts_;
  std::vector<LaneRt> lanes_;
  std::map<LaneId, int> lane_index_;
  std::vector<XsecRt> xsecs_;
  std::vector<FlowRt> flows_;
  std::vector<PairRt> pairs_;
  std::vector<Detector> detectors_;
  std::vector<Vehicle> vehicles_;
  GapStore store_;
  PlatoonManager<GapStore> platoons_;
  RngStream dawdle_;
  RngStream sensing_rng_;
  ApproachOccupancy calls_;
  std::vector<Pending> pending_;
  std::set<std::pair<PlatoonId, int>> extension_asked_;
  std::vector<QueueSample> queue_log_;
  std::vector<TrajectoryPoint> trajectories_;
  std::vector<DecisionRecord> decisions_;
  std::map<LaneId, std::uint64_t> exits_by_sink_;
  Counters counters_;
  InvariantStats stats_;
  std::uint64_t step_ = 0;
  std::uint64_t log_every_ = 1;
  std::uint64_t hash_ = 0;
};

/// Executes round(duration/dt) steps.
inline SimResult run(const ScenarioConfig& cfg, RunOptions opts = {}) {
  Engine e(cfg, opts);
  const auto n = static_cast<std::uint64_t>(std::llround(cfg.duration / cfg.dt));
  for (std::uint64_t k = 0; k < n; ++k) e.step();
  return std::move(e).finish();
}

}  // namespace arterial
