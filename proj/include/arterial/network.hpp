#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "arterial/common.hpp"

namespace arterial {

/// Direction of travel at a lane's downstream end. Optional; used only to
/// derive the crossing-conflict table of an intersection.
enum class Heading : std::uint8_t { north, east, south, west };

inline std::string_view to_string(Heading h) {
  switch (h) {
    case Heading::north: return "north";
    case Heading::east: return "east";
    case Heading::south: return "south";
    case Heading::west: return "west";
  }
  return "?";
}

inline Heading parse_heading(std::string_view s) {
  if (s == "north") return Heading::north;
  if (s == "east") return Heading::east;
  if (s == "south") return Heading::south;
  if (s == "west") return Heading::west;
  throw std::invalid_argument("unknown heading '" + std::string(s) + "'");
}

inline bool perpendicular(Heading a, Heading b) {
  const bool a_ns = a == Heading::north || a == Heading::south;
  const bool b_ns = b == Heading::north || b == Heading::south;
  return a_ns != b_ns;
}

struct Lane {
  LaneId id;
  double length = 0.0;          ///< [m]
  std::string upstream_node;
  std::string downstream_node;
  double speed_limit = 20.0;    ///< [m/s]
  double stop_bar = 0.0;        ///< distance from lane start [m]
  std::optional<Heading> heading;

  bool operator==(const Lane&) const = default;

  static double default_stop_bar(double length) { return length > 1.0 ? length - 1.0 : length; }
};

struct Movement {
  LaneId from;
  Turn turn = Turn::straight;
  LaneId to;

  bool operator==(const Movement&) const = default;
};

struct Intersection {
  IntersectionId id;
  bool signalized = true;
  std::vector<LaneId> incoming_lanes;
  std::vector<Movement> movements;

  bool operator==(const Intersection&) const = default;

  const Movement* find(const LaneId& from, Turn turn) const {
    for (const auto& m : movements)
      if (m.from == from && m.turn == turn) return &m;
    return nullptr;
  }
};

struct NetworkGraph {
  std::map<LaneId, Lane> lanes;
  std::map<IntersectionId, Intersection> intersections;
  std::vector<LaneId> sources;
  std::vector<LaneId> sinks;

  bool operator==(const NetworkGraph&) const = default;

  bool is_sink(const LaneId& id) const {
    return std::find(sinks.begin(), sinks.end(), id) != sinks.end();
  }

  bool is_source(const LaneId& id) const {
    return std::find(sources.begin(), sources.end(), id) != sources.end();
  }

  /// Intersection whose incoming lanes contain `lane`, if any.
  const Intersection* intersection_fed_by(const LaneId& lane) const {
    auto it = lanes.find(lane);
    if (it == lanes.end()) return nullptr;
    auto jt = intersections.find(it->second.downstream_node);
    if (jt == intersections.end()) return nullptr;
    const auto& in = jt->second.incoming_lanes;
    return std::find(in.begin(), in.end(), lane) != in.end() ? &jt->second : nullptr;
  }

  /// Lanes reachable in one movement from `lane`, with the turn taken.
  std::vector<Movement> successors(const LaneId& lane) const {
    std::vector<Movement> out;
    if (const Intersection* x = intersection_fed_by(lane))
      for (const auto& m : x->movements)
        if (m.from == lane) out.push_back(m);
    return out;
  }

  /// Throws ScenarioError naming the first violated invariant.
  void validate() const {
    auto fail = [](const std::string& msg) { throw ScenarioError("network: " + msg); };

    for (const auto& [id, lane] : lanes) {
      if (id != lane.id) fail("lane key '" + id + "' does not match lane id '" + lane.id + "'");
      if (!(lane.length > 0.0)) fail("lane '" + id + "' length must be > 0");
      if (!(lane.speed_limit > 0.0)) fail("lane '" + id + "' speed_limit must be > 0");
      if (!(lane.stop_bar > 0.0 && lane.stop_bar <= lane.length))
        fail("lane '" + id + "' stop_bar must lie in (0, length]");
    }

    std::map<LaneId, int> incoming_count;
    for (const auto& [xid, x] : intersections) {
      if (xid != x.id) fail("intersection key '" + xid + "' does not match id '" + x.id + "'");
      for (const auto& lid : x.incoming_lanes) {
        auto it = lanes.find(lid);
        if (it == lanes.end()) fail("intersection '" + xid + "' lists unknown lane '" + lid + "'");
        if (it->second.downstream_node != xid)
          fail("lane '" + lid + "' is incoming to '" + xid + "' but its downstream_node is '" +
               it->second.downstream_node + "'");
        ++incoming_count[lid];
      }
      std::set<std::pair<LaneId, Turn>> seen;
      for (const auto& m : x.movements) {
        if (std::find(x.incoming_lanes.begin(), x.incoming_lanes.end(), m.from) ==
            x.incoming_lanes.end())
          fail("movement from unknown lane '" + m.from + "' at intersection '" + xid + "'");
        if (!lanes.count(m.to))
          fail("movement to unknown lane '" + m.to + "' at intersection '" + xid + "'");
        if (!seen.insert({m.from, m.turn}).second)
          fail("duplicate movement (" + m.from + ", " + std::string(to_string(m.turn)) +
               ") at intersection '" + xid + "'");
      }
    }

    for (const auto& s : sources)
      if (!lanes.count(s)) fail("unknown source lane '" + s + "'");
    for (const auto& s : sinks)
      if (!lanes.count(s)) fail("unknown sink lane '" + s + "'");
    for (const auto& s : sources)
      if (is_sink(s)) fail("lane '" + s + "' is both a source and a sink");

    for (const auto& [id, lane] : lanes) {
      const int n = incoming_count.count(id) ? incoming_count.at(id) : 0;
      const bool sink = is_sink(id);
      if (sink && n > 0) fail("sink lane '" + id + "' is also an intersection approach");
      if (!sink && n != 1)
        fail("lane '" + id + "' must be incoming to exactly one intersection or be a sink");
    }

    for (const auto& s : sources) {
      std::set<LaneId> visited{s};
      std::deque<LaneId> frontier{s};
      bool reached = false;
      while (!frontier.empty() && !reached) {
        LaneId cur = frontier.front();
        frontier.pop_front();
        if (is_sink(cur)) reached = true;
        for (const auto& m : successors(cur))
          if (visited.insert(m.to).second) frontier.push_back(m.to);
      }
      if (!reached) fail("source '" + s + "' cannot reach any sink");
    }
  }
};

}  // namespace arterial
