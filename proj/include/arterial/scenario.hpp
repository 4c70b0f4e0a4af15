#pragma once

// Scenario configuration and its validator.

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "arterial/carfollow.hpp"
#include "arterial/common.hpp"
#include "arterial/demand.hpp"
#include "arterial/network.hpp"
#include "arterial/platoon.hpp"
#include "arterial/signal.hpp"

namespace arterial {

enum class CfModel : std::uint8_t { krauss, iidm };

inline std::string_view to_string(CfModel m) { return m == CfModel::iidm ? "iidm" : "krauss"; }

inline CfModel parse_cf_model(std::string_view s) {
  if (s == "krauss") return CfModel::krauss;
  if (s == "iidm") return CfModel::iidm;
  throw std::invalid_argument("unknown car-following model '" + std::string(s) + "'");
}

struct SensingConfig {
  double pair_spacing = 75.0;  ///< upstream sensor distance before the stop bar [m]
  int noise = 0;               ///< queue-estimate error amplitude [veh]
  double footprint = 2.0;      ///< sensor occupancy window [m]
  bool operator==(const SensingConfig&) const = default;
};

/// Records which generator produced a scenario so sweeps over geometric
/// parameters can rebuild it.
struct GeneratorSpec {
  std::string kind;  ///< "single_intersection" or "arterial"
  std::map<std::string, double> args;
  bool operator==(const GeneratorSpec&) const = default;
};

struct ScenarioConfig {
  NetworkGraph network;
  std::vector<FlowSpec> demand;
  std::map<VehicleClass, VehicleClassParams> class_params{{VehicleClass::manual, manual_class()},
                                                          {VehicleClass::smart, smart_class()}};
  double smart_share = 0.0;
  std::vector<SignalPlan> signal_plans;
  double dt = 0.2;
  double duration = 3600.0;
  std::uint64_t seed = 1;
  bool platooning_enabled = false;
  CfModel cf_model = CfModel::krauss;

  SensingConfig sensing;
  PlatoonConfig platoon;
  double lookahead = 250.0;        ///< cross-lane leader visibility [m]
  double queue_log_period = 5.0;   ///< queue-estimate sampling period [s]
  bool record_trajectories = false;
  std::optional<GeneratorSpec> generator;

  bool operator==(const ScenarioConfig&) const = default;

  const VehicleClassParams& params(VehicleClass c) const { return class_params.at(c); }

  const SignalPlan* plan_for(const IntersectionId& id) const {
    for (const auto& sp : signal_plans)
      if (sp.intersection == id) return &sp;
    return nullptr;
  }

  /// Throws ScenarioError naming the first violated invariant.
  void validate() const {
    auto fail = [](const std::string& msg) { throw ScenarioError(msg); };

    if (!(dt > 0.0) || !std::isfinite(dt)) fail("sim: dt must be > 0");
    if (!(duration >= 0.0) || !std::isfinite(duration)) fail("sim: duration must be >= 0");
    if (!(smart_share >= 0.0 && smart_share <= 1.0)) fail("sim: smart_share must lie in [0, 1]");
    if (!(lookahead > 0.0)) fail("sim: lookahead must be > 0");
    if (!(queue_log_period > 0.0)) fail("sim: queue_log_period must be > 0");

    for (VehicleClass c : {VehicleClass::manual, VehicleClass::smart}) {
      auto it = class_params.find(c);
      if (it == class_params.end()) fail("classes: missing '" + std::string(to_string(c)) + "'");
      try {
        it->second.validate();
      } catch (const std::invalid_argument& e) {
        fail("classes." + std::string(to_string(c)) + ": " + e.what());
      }
    }

    network.validate();

    for (const auto& f : demand) {
      if (!network.is_source(f.source)) fail("demand: '" + f.source + "' is not a source lane");
      f.validate(dt);
      for (const auto& [xid, r] : f.turn_ratios)
        if (!network.intersections.count(xid))
          fail("demand '" + f.source + "': turn ratios for unknown intersection '" + xid + "'");
      if (f.sink && !network.is_sink(*f.sink))
        fail("demand '" + f.source + "': '" + *f.sink + "' is not a sink lane");
    }

    std::set<IntersectionId> planned;
    for (const auto& sp : signal_plans) {
      auto it = network.intersections.find(sp.intersection);
      if (it == network.intersections.end())
        fail("signals: unknown intersection '" + sp.intersection + "'");
      const Intersection& x = it->second;
      if (!x.signalized) fail("signals: intersection '" + x.id + "' is not signalized");
      if (!planned.insert(x.id).second) fail("signals: duplicate plan for '" + x.id + "'");
      try {
        sp.plan.validate();
      } catch (const ScenarioError& e) {
        fail("signals '" + x.id + "': " + e.what());
      }
      for (const auto& ph : sp.plan.phases) {
        for (const auto& m : ph.green_movements)
          if (!x.find(m.from, m.turn))
            fail("signals '" + x.id + "': phase '" + ph.id + "' serves unknown movement (" +
                 m.from + ", " + std::string(to_string(m.turn)) + ")");
        if (auto c = phase_conflict(ph))
          fail("signals '" + x.id + "': phase '" + ph.id + "' grants conflicting movements from '" +
               c->first + "' and '" + c->second + "'");
      }
    }
    for (const auto& [xid, x] : network.intersections)
      if (x.signalized && !planned.count(xid))
        fail("signals: signalized intersection '" + xid + "' has no plan");

    if (!(sensing.pair_spacing > 0.0)) fail("sensing: pair_spacing must be > 0");
    if (sensing.noise < 0) fail("sensing: noise must be >= 0");
    if (!(sensing.footprint >= 0.0)) fail("sensing: footprint must be >= 0");

    const auto& s = params(VehicleClass::smart);
    platoon.validate(s.tau, s.g_min);
  }

  /// First pair of approach lanes with perpendicular headings served by the
  /// same phase. Lanes without a heading never conflict.
  std::optional<std::pair<LaneId, LaneId>> phase_conflict(const Phase& ph) const {
    for (std::size_t i = 0; i < ph.green_movements.size(); ++i)
      for (std::size_t j = i + 1; j < ph.green_movements.size(); ++j) {
        const auto& a = network.lanes.at(ph.green_movements[i].from);
        const auto& b = network.lanes.at(ph.green_movements[j].from);
        if (a.heading && b.heading && perpendicular(*a.heading, *b.heading))
          return std::pair{a.id, b.id};
      }
    return std::nullopt;
  }
};

}  // namespace arterial
