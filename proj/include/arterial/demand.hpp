#pragma once

// Vehicle creation at sources and route assignment.

#include <cmath>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <tuple>
#include <type_traits>
#include <vector>

#include "arterial/common.hpp"
#include "arterial/network.hpp"
#include "arterial/rng.hpp"

namespace arterial {

using Route = std::vector<LaneId>;

enum class RouteMode : std::uint8_t { turn_ratios, shortest };

struct TurnRatios {
  double left = 0.0;
  double straight = 0.0;
  double right = 0.0;

  bool operator==(const TurnRatios&) const = default;

  double operator[](Turn t) const {
    switch (t) {
      case Turn::left: return left;
      case Turn::straight: return straight;
      case Turn::right: return right;
    }
    return 0.0;
  }

  double sum() const { return left + straight + right; }

  /// Cumulative intervals ordered left, straight, right; zero-width turns are
  /// never selected.
  Turn select(double u) const {
    double acc = 0.0;
    for (Turn t : kTurnOrder) {
      const double p = (*this)[t];
      acc += p;
      if (p > 0.0 && u < acc) return t;
    }
    for (Turn t : {Turn::right, Turn::straight, Turn::left})
      if ((*this)[t] > 0.0) return t;
    return Turn::straight;
  }
};

struct FlowSpec {
  LaneId source;
  double rate = 0.0;  ///< [veh/s]
  RouteMode mode = RouteMode::turn_ratios;
  std::optional<LaneId> sink;  ///< required for RouteMode::shortest
  std::map<IntersectionId, TurnRatios> turn_ratios;
  int initial_queue = 0;  ///< vehicles placed at the stop bar at t = 0
  bool fill = false;      ///< keep the source lane packed (infinite queue)

  bool operator==(const FlowSpec&) const = default;

  void validate(double dt) const {
    auto fail = [&](const std::string& msg) {
      throw ScenarioError("demand '" + source + "': " + msg);
    };
    if (!(rate >= 0.0)) fail("rate must be >= 0");
    if (rate * dt > 1.0) fail("rate * dt must not exceed 1");
    if (initial_queue < 0) fail("initial_queue must be >= 0");
    if (mode == RouteMode::shortest && !sink) fail("shortest-route mode needs a sink");
    for (const auto& [x, r] : turn_ratios) {
      if (r.left < 0 || r.straight < 0 || r.right < 0)
        fail("negative turn probability at '" + x + "'");
      if (std::abs(r.sum() - 1.0) > 1e-9) fail("turn probabilities at '" + x + "' must sum to 1");
    }
  }
};

enum class SpawnResult : std::uint8_t { none, spawned, suppressed };

struct SpawnOutcome {
  SpawnResult result = SpawnResult::none;
  VehicleClass cls = VehicleClass::manual;
};

/// One Bernoulli arrival trial (p = rate*dt, or 1 in fill mode). On arrival the
/// class is drawn; an arrival finding the entry occupied for that class is
/// suppressed. `entry_free` is a predicate on VehicleClass.
template <class EntryFree>
  requires std::is_invocable_r_v<bool, EntryFree, VehicleClass>
SpawnOutcome spawn_step(const FlowSpec& flow, double dt, double smart_share, EntryFree&& entry_free,
                        RngStream& arrivals, RngStream& classes) {
  const double p = flow.fill ? 1.0 : flow.rate * dt;
  if (p > 1.0 + 1e-12)
    throw std::invalid_argument("spawn_step: rate * dt = " + std::to_string(p) + " exceeds 1");
  if (p <= 0.0 || !arrivals.bernoulli(p)) return {};
  const VehicleClass cls = classes.bernoulli(smart_share) ? VehicleClass::smart : VehicleClass::manual;
  if (!entry_free(cls)) return {SpawnResult::suppressed, cls};
  return {SpawnResult::spawned, cls};
}

inline SpawnOutcome spawn_step(const FlowSpec& flow, double dt, double smart_share, bool entry_free,
                               RngStream& arrivals, RngStream& classes) {
  return spawn_step(flow, dt, smart_share, [entry_free](VehicleClass) { return entry_free; },
                    arrivals, classes);
}

/// Free-flow travel time of a lane.
inline double lane_cost(const Lane& lane) { return lane.length / lane.speed_limit; }

/// Dijkstra over lanes (edges are movements) minimizing free-flow travel time.
/// Equal-cost paths are resolved by the lexicographically smaller lane-id
/// sequence. Unreachable sinks are absent from the result.
inline std::map<LaneId, Route> shortest_routes(const NetworkGraph& net, const LaneId& source) {
  struct Best {
    double cost;
    Route path;
  };
  auto better = [](double c1, const Route& p1, double c2, const Route& p2) {
    const double tol = 1e-9 * std::max({1.0, std::abs(c1), std::abs(c2)});
    if (c1 < c2 - tol) return true;
    if (c1 > c2 + tol) return false;
    return p1 < p2;
  };

  std::map<LaneId, Best> best;
  std::map<LaneId, bool> done;
  using Entry = std::tuple<double, LaneId>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> pq;

  const auto& src = net.lanes.at(source);
  best[source] = {lane_cost(src), {source}};
  pq.emplace(best[source].cost, source);

  while (!pq.empty()) {
    auto [c, cur] = pq.top();
    pq.pop();
    if (done[cur]) continue;
    done[cur] = true;
    const Best here = best.at(cur);
    for (const auto& m : net.successors(cur)) {
      if (done[m.to]) continue;
      Route path = here.path;
      path.push_back(m.to);
      const double nc = here.cost + lane_cost(net.lanes.at(m.to));
      auto it = best.find(m.to);
      if (it == best.end() || better(nc, path, it->second.cost, it->second.path)) {
        best[m.to] = {nc, std::move(path)};
        pq.emplace(nc, m.to);
      }
    }
  }

  std::map<LaneId, Route> out;
  for (const auto& sink : net.sinks) {
    auto it = best.find(sink);
    if (it != best.end()) out.emplace(sink, it->second.path);
  }
  return out;
}

/// Walks from the flow's source, drawing the turn at every intersection from
/// the flow's cumulative turn probabilities, until a sink is reached.
inline Route assign_route(const FlowSpec& flow, const NetworkGraph& net, RngStream& rng) {
  Route route{flow.source};
  LaneId cur = flow.source;
  const std::size_t limit = net.lanes.size() + 1;
  while (!net.is_sink(cur)) {
    const Intersection* x = net.intersection_fed_by(cur);
    if (!x) throw ConfigError("route from '" + flow.source + "' dead-ends on lane '" + cur + "'");
    auto rt = flow.turn_ratios.find(x->id);
    if (rt == flow.turn_ratios.end())
      throw ConfigError("flow '" + flow.source + "' has no turn ratios for intersection '" + x->id +
                        "'");
    const Turn turn = rt->second.select(rng.uniform());
    const Movement* m = x->find(cur, turn);
    if (!m)
      throw ConfigError("dead end at intersection '" + x->id + "': no " +
                        std::string(to_string(turn)) + " movement from lane '" + cur + "'");
    cur = m->to;
    route.push_back(cur);
    if (route.size() > limit)
      throw ConfigError("route from '" + flow.source + "' does not terminate (cycle)");
  }
  return route;
}

}  // namespace arterial
