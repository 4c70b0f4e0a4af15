#pragma once

// Synthetic scenario generators.

#include <optional>
#include <string>

#include "arterial/scenario.hpp"

namespace arterial {

struct SingleIntersectionOptions {
  CfModel model = CfModel::krauss;
  double a_max = 1.5;
  double dt = 0.2;
  double duration = 3600.0;
  double approach_length = 1000.0;
  std::uint64_t seed = 1;
};

/// One signalized crossing A fed by two saturated approaches, W_in (straight)
/// and N_in (left), both discharging east onto E_out. With a downstream
/// distance D, the eastbound link A->B is D metres long and B runs the same
/// plan with the phase order flipped (its cross street first).
///
/// Stop bars sit at lane ends, so a red at B puts the blocking vehicle at
/// D + g_min + l from A's stop bar.
inline ScenarioConfig build_single_intersection(std::optional<double> downstream_distance,
                                                double cycle, double red_clear,
                                                SingleIntersectionOptions opt = {}) {
  if (!(cycle > 2.0 * red_clear) || red_clear < 0.0)
    throw ScenarioError("single intersection: cycle must exceed twice the red clear time");

  ScenarioConfig cfg;
  cfg.cf_model = opt.model;
  cfg.dt = opt.dt;
  cfg.duration = opt.duration;
  cfg.seed = opt.seed;
  VehicleClassParams manual =
      opt.model == CfModel::krauss ? single_intersection_class(opt.a_max) : iidm_defaults();
  manual.a_max = opt.a_max;
  cfg.class_params[VehicleClass::manual] = manual;
  cfg.class_params[VehicleClass::smart] = smart_class();

  if (downstream_distance && !(*downstream_distance > manual.length + manual.g_min))
    throw ScenarioError("single intersection: downstream distance " +
                        std::to_string(*downstream_distance) + " m cannot hold one vehicle");

  auto& net = cfg.network;
  const double L = opt.approach_length;
  auto lane = [&](const std::string& id, double len, const std::string& up, const std::string& down,
                  std::optional<Heading> h) {
    net.lanes[id] = Lane{id, len, up, down, 20.0, len, h};
  };
  lane("W_in", L, "W", "A", Heading::east);
  lane("N_in", L, "N", "A", Heading::south);
  lane("E_out", L, downstream_distance ? "B" : "A", "E", Heading::east);
  net.sources = {"W_in", "N_in"};
  net.sinks = {"E_out"};

  const std::string a_exit = downstream_distance ? "AB" : "E_out";
  net.intersections["A"] = Intersection{
      "A", true, {"W_in", "N_in"}, {{"W_in", Turn::straight, a_exit}, {"N_in", Turn::left, a_exit}}};

  const double green = (cycle - 2.0 * red_clear) / 2.0;
  TimingPlan plan_a;
  plan_a.cycle = cycle;
  plan_a.red_clear = red_clear;
  plan_a.phases = {{"EW", {{"W_in", Turn::straight}}, green}, {"NS", {{"N_in", Turn::left}}, green}};
  cfg.signal_plans.push_back({"A", ControlMode::fixed, plan_a, {}, {}, {}});

  FlowSpec w{"W_in", 0.0, RouteMode::turn_ratios, std::nullopt, {{"A", {0, 1, 0}}}, 0, true};
  FlowSpec n{"N_in", 0.0, RouteMode::turn_ratios, std::nullopt, {{"A", {1, 0, 0}}}, 0, true};

  if (downstream_distance) {
    const double D = *downstream_distance;
    lane("AB", D, "A", "B", Heading::east);
    lane("BN_in", 200.0, "BN", "B", Heading::south);
    lane("BS_out", 200.0, "B", "BS", Heading::south);
    net.sources.push_back("BN_in");
    net.sinks.push_back("BS_out");
    net.intersections["B"] = Intersection{
        "B", true, {"AB", "BN_in"}, {{"AB", Turn::straight, "E_out"}, {"BN_in", Turn::straight, "BS_out"}}};
    TimingPlan plan_b = plan_a;
    plan_b.phases = {{"NS", {{"BN_in", Turn::straight}}, green}, {"EW", {{"AB", Turn::straight}}, green}};
    cfg.signal_plans.push_back({"B", ControlMode::fixed, plan_b, {}, {}, {}});
    w.turn_ratios["B"] = {0, 1, 0};
    n.turn_ratios["B"] = {0, 1, 0};
  }
  cfg.demand = {w, n};

  GeneratorSpec gen{"single_intersection",
                    {{"cycle", cycle},
                     {"red_clear", red_clear},
                     {"a_max", opt.a_max},
                     {"iidm", opt.model == CfModel::iidm ? 1.0 : 0.0},
                     {"approach_length", L}}};
  if (downstream_distance) gen.args["downstream_distance"] = *downstream_distance;
  cfg.generator = gen;
  cfg.validate();
  return cfg;
}

struct ArterialOptions {
  double cycle = 90.0;
  double ew_green = 50.0;
  double ns_green = 34.0;
  double red_clear = 3.0;
  double main_rate = 0.20;   ///< per main-line entry lane [veh/s]
  double cross_rate = 0.08;  ///< per cross-street entry [veh/s]
  double cross_length = 200.0;
  double dt = 0.2;
  double duration = 3600.0;
  std::uint64_t seed = 1;
};

/// Synthetic arterial: n signalized crossings I0..I{n-1} spaced `spacing`
/// apart on an east-west main line with two lanes per direction. Lane 0 of
/// each direction carries straight and right turns, lane 1 straight and left.
/// Every crossing has single-lane north and south approaches and exits.
///
/// Lane names: EB{k}_{j} / WB{k}_{j} enter I{k} eastbound / westbound on lane
/// j; EB_out_{j} / WB_out_{j} leave the corridor; N{k}_in, S{k}_in,
/// N{k}_out, S{k}_out are the cross streets of I{k}.
inline ScenarioConfig build_arterial(int n_intersections, double spacing, double smart_share,
                                     ArterialOptions opt = {}) {
  if (n_intersections < 1) throw ScenarioError("arterial: need at least one intersection");
  if (!(spacing > 0.0)) throw ScenarioError("arterial: spacing must be > 0");

  const int n = n_intersections;
  ScenarioConfig cfg;
  cfg.dt = opt.dt;
  cfg.duration = opt.duration;
  cfg.seed = opt.seed;
  cfg.smart_share = smart_share;
  cfg.cf_model = CfModel::krauss;
  auto& net = cfg.network;

  auto I = [](int k) { return "I" + std::to_string(k); };
  auto eb = [&](int k, int j) { return k >= n ? "EB_out_" + std::to_string(j) : "EB" + std::to_string(k) + "_" + std::to_string(j); };
  auto wb = [&](int k, int j) { return k < 0 ? "WB_out_" + std::to_string(j) : "WB" + std::to_string(k) + "_" + std::to_string(j); };
  auto add = [&](const std::string& id, double len, const std::string& up, const std::string& down,
                 Heading h) { net.lanes[id] = Lane{id, len, up, down, 20.0, Lane::default_stop_bar(len), h}; };

  for (int j = 0; j < 2; ++j) {
    for (int k = 0; k <= n; ++k) {
      add(eb(k, j), spacing, k == 0 ? "W" : I(k - 1), k == n ? "E" : I(k), Heading::east);
      add(wb(k - 1, j), spacing, k == n ? "E" : I(k), k == 0 ? "W" : I(k - 1), Heading::west);
    }
  }
  for (int k = 0; k < n; ++k) {
    const std::string ks = std::to_string(k);
    add("N" + ks + "_in", opt.cross_length, "N" + ks, I(k), Heading::south);
    add("S" + ks + "_in", opt.cross_length, "S" + ks, I(k), Heading::north);
    add("N" + ks + "_out", opt.cross_length, I(k), "N" + ks, Heading::north);
    add("S" + ks + "_out", opt.cross_length, I(k), "S" + ks, Heading::south);
  }

  for (int k = 0; k < n; ++k) {
    const std::string ks = std::to_string(k);
    Intersection x;
    x.id = I(k);
    x.signalized = true;
    const std::string nin = "N" + ks + "_in", sin = "S" + ks + "_in";
    const std::string nout = "N" + ks + "_out", sout = "S" + ks + "_out";
    x.incoming_lanes = {eb(k, 0), eb(k, 1), wb(k, 0), wb(k, 1), nin, sin};
    x.movements = {
        {eb(k, 0), Turn::straight, eb(k + 1, 0)}, {eb(k, 0), Turn::right, sout},
        {eb(k, 1), Turn::straight, eb(k + 1, 1)}, {eb(k, 1), Turn::left, nout},
        {wb(k, 0), Turn::straight, wb(k - 1, 0)}, {wb(k, 0), Turn::right, nout},
        {wb(k, 1), Turn::straight, wb(k - 1, 1)}, {wb(k, 1), Turn::left, sout},
        {nin, Turn::straight, sout},              {nin, Turn::left, eb(k + 1, 1)},
        {nin, Turn::right, wb(k - 1, 0)},         {sin, Turn::straight, nout},
        {sin, Turn::left, wb(k - 1, 1)},          {sin, Turn::right, eb(k + 1, 0)},
    };
    net.intersections[x.id] = x;

    TimingPlan plan;
    plan.cycle = opt.cycle;
    plan.red_clear = opt.red_clear;
    Phase ew{"EW", {}, opt.ew_green}, ns{"NS", {}, opt.ns_green};
    for (const auto& m : x.movements) {
      const bool cross = m.from == nin || m.from == sin;
      (cross ? ns : ew).green_movements.push_back({m.from, m.turn});
    }
    plan.phases = {ew, ns};
    cfg.signal_plans.push_back({x.id, ControlMode::fixed, plan, {}, {}, {}});
  }

  for (int j = 0; j < 2; ++j) {
    net.sources.push_back(eb(0, j));
    net.sources.push_back(wb(n - 1, j));
    net.sinks.push_back(eb(n, j));
    net.sinks.push_back(wb(-1, j));
  }
  for (int k = 0; k < n; ++k) {
    const std::string ks = std::to_string(k);
    net.sources.push_back("N" + ks + "_in");
    net.sources.push_back("S" + ks + "_in");
    net.sinks.push_back("N" + ks + "_out");
    net.sinks.push_back("S" + ks + "_out");
  }

  const TurnRatios lane0{0.0, 0.9, 0.1}, lane1{0.1, 0.9, 0.0}, through{0.0, 1.0, 0.0};
  const TurnRatios cross{0.2, 0.6, 0.2};
  auto main_flow = [&](const std::string& src, const TurnRatios& r) {
    FlowSpec f;
    f.source = src;
    f.rate = opt.main_rate;
    for (int k = 0; k < n; ++k) f.turn_ratios[I(k)] = r;
    return f;
  };
  for (int j = 0; j < 2; ++j) {
    cfg.demand.push_back(main_flow(eb(0, j), j == 0 ? lane0 : lane1));
    cfg.demand.push_back(main_flow(wb(n - 1, j), j == 0 ? lane0 : lane1));
  }
  for (int k = 0; k < n; ++k)
    for (const char* side : {"N", "S"}) {
      FlowSpec f;
      f.source = side + std::to_string(k) + "_in";
      f.rate = opt.cross_rate;
      for (int m = 0; m < n; ++m) f.turn_ratios[I(m)] = m == k ? cross : through;
      cfg.demand.push_back(f);
    }

  cfg.generator = GeneratorSpec{"arterial",
                                {{"n", static_cast<double>(n)},
                                 {"spacing", spacing},
                                 {"smart_share", smart_share}}};
  cfg.validate();
  return cfg;
}

/// Saturation demand: every flow draws an arrival with probability 0.9 per step.
inline ScenarioConfig saturate(ScenarioConfig cfg) {
  for (auto& f : cfg.demand) f.rate = 0.9 / cfg.dt;
  return cfg;
}

}  // namespace arterial
