#pragma once

// JSON scenario files. The grammar is documented in README.md.

#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "arterial/scenario.hpp"

namespace arterial {

using Json = nlohmann::ordered_json;

namespace detail {

inline std::string field(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

inline std::string index(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

[[noreturn]] inline void bad_field(const std::string& path, const std::string& what) {
  throw ScenarioError("scenario: field '" + path + "': " + what);
}

inline const Json& member(const Json& j, std::string_view key, const std::string& path) {
  if (!j.is_object()) bad_field(path, "expected object");
  auto it = j.find(std::string(key));
  if (it == j.end()) bad_field(field(path, key), "missing");
  return *it;
}

inline const Json& object(const Json& j, const std::string& path) {
  if (!j.is_object()) bad_field(path, "expected object");
  return j;
}

inline const Json& array(const Json& j, const std::string& path) {
  if (!j.is_array()) bad_field(path, "expected array");
  return j;
}

inline double number(const Json& j, const std::string& path) {
  if (!j.is_number()) bad_field(path, "expected number");
  return j.get<double>();
}

inline std::string string(const Json& j, const std::string& path) {
  if (!j.is_string()) bad_field(path, "expected string");
  return j.get<std::string>();
}

inline bool boolean(const Json& j, const std::string& path) {
  if (!j.is_boolean()) bad_field(path, "expected boolean");
  return j.get<bool>();
}

inline std::int64_t integer(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) bad_field(path, "expected integer");
  return j.get<std::int64_t>();
}

inline std::uint64_t unsigned_integer(const Json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  bad_field(path, "expected non-negative integer");
}

/// Optional member accessors: return `def` when absent.
template <class F, class T>
T opt(const Json& j, std::string_view key, const std::string& path, T def, F read) {
  auto it = j.find(std::string(key));
  if (it == j.end()) return def;
  return read(*it, field(path, key));
}

template <class Enum, class Parse>
Enum enum_value(const Json& j, const std::string& path, Parse parse) {
  const std::string s = string(j, path);
  try {
    return parse(s);
  } catch (const std::invalid_argument& e) {
    bad_field(path, e.what());
  }
}

inline VehicleClassParams read_class(const Json& j, const std::string& path, VehicleClassParams p) {
  object(j, path);
  p.tau = opt(j, "tau", path, p.tau, number);
  p.g_min = opt(j, "g_min", path, p.g_min, number);
  p.a_max = opt(j, "a_max", path, p.a_max, number);
  p.b = opt(j, "b", path, p.b, number);
  p.v_max = opt(j, "v_max", path, p.v_max, number);
  p.length = opt(j, "length", path, p.length, number);
  p.eps = opt(j, "eps", path, p.eps, number);
  p.delta1 = opt(j, "delta1", path, p.delta1, number);
  p.delta2 = opt(j, "delta2", path, p.delta2, number);
  return p;
}

inline Json write_class(const VehicleClassParams& p) {
  return Json{{"tau", p.tau},       {"g_min", p.g_min}, {"a_max", p.a_max},
              {"b", p.b},           {"v_max", p.v_max}, {"length", p.length},
              {"eps", p.eps},       {"delta1", p.delta1}, {"delta2", p.delta2}};
}

inline std::vector<std::string> strings(const Json& j, const std::string& path) {
  std::vector<std::string> out;
  array(j, path);
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(string(j[i], index(path, i)));
  return out;
}

inline NetworkGraph read_network(const Json& j, const std::string& path) {
  NetworkGraph net;
  const Json& lanes = array(member(j, "lanes", path), field(path, "lanes"));
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const std::string p = index(field(path, "lanes"), i);
    const Json& lj = object(lanes[i], p);
    Lane lane;
    lane.id = string(member(lj, "id", p), field(p, "id"));
    lane.length = number(member(lj, "length", p), field(p, "length"));
    lane.upstream_node = opt(lj, "upstream_node", p, std::string(), string);
    lane.downstream_node = opt(lj, "downstream_node", p, std::string(), string);
    lane.speed_limit = opt(lj, "speed_limit", p, lane.speed_limit, number);
    lane.stop_bar = opt(lj, "stop_bar", p, Lane::default_stop_bar(lane.length), number);
    if (lj.contains("heading"))
      lane.heading = enum_value<Heading>(lj["heading"], field(p, "heading"), parse_heading);
    if (!net.lanes.emplace(lane.id, lane).second)
      throw ScenarioError("network: duplicate lane id '" + lane.id + "'");
  }
  if (j.contains("intersections")) {
    const Json& xs = array(j["intersections"], field(path, "intersections"));
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const std::string p = index(field(path, "intersections"), i);
      const Json& xj = object(xs[i], p);
      Intersection x;
      x.id = string(member(xj, "id", p), field(p, "id"));
      x.signalized = opt(xj, "signalized", p, true, boolean);
      x.incoming_lanes = strings(member(xj, "incoming_lanes", p), field(p, "incoming_lanes"));
      const Json& ms = array(member(xj, "movements", p), field(p, "movements"));
      for (std::size_t k = 0; k < ms.size(); ++k) {
        const std::string mp = index(field(p, "movements"), k);
        const Json& mj = object(ms[k], mp);
        Movement m;
        m.from = string(member(mj, "from", mp), field(mp, "from"));
        m.turn = enum_value<Turn>(member(mj, "turn", mp), field(mp, "turn"), parse_turn);
        m.to = string(member(mj, "to", mp), field(mp, "to"));
        x.movements.push_back(m);
      }
      if (!net.intersections.emplace(x.id, x).second)
        throw ScenarioError("network: duplicate intersection id '" + x.id + "'");
    }
  }
  net.sources = strings(member(j, "sources", path), field(path, "sources"));
  net.sinks = strings(member(j, "sinks", path), field(path, "sinks"));
  return net;
}

inline Json write_network(const NetworkGraph& net) {
  Json lanes = Json::array();
  for (const auto& [id, l] : net.lanes) {
    Json lj{{"id", l.id},
            {"length", l.length},
            {"upstream_node", l.upstream_node},
            {"downstream_node", l.downstream_node},
            {"speed_limit", l.speed_limit},
            {"stop_bar", l.stop_bar}};
    if (l.heading) lj["heading"] = std::string(to_string(*l.heading));
    lanes.push_back(std::move(lj));
  }
  Json xs = Json::array();
  for (const auto& [id, x] : net.intersections) {
    Json ms = Json::array();
    for (const auto& m : x.movements)
      ms.push_back({{"from", m.from}, {"turn", std::string(to_string(m.turn))}, {"to", m.to}});
    xs.push_back({{"id", x.id},
                  {"signalized", x.signalized},
                  {"incoming_lanes", x.incoming_lanes},
                  {"movements", std::move(ms)}});
  }
  return Json{{"lanes", std::move(lanes)},
              {"intersections", std::move(xs)},
              {"sources", net.sources},
              {"sinks", net.sinks}};
}

inline FlowSpec read_flow(const Json& j, const std::string& path) {
  object(j, path);
  FlowSpec f;
  f.source = string(member(j, "source", path), field(path, "source"));
  f.rate = opt(j, "rate", path, 0.0, number);
  f.mode = opt(j, "mode", path, RouteMode::turn_ratios, [](const Json& v, const std::string& p) {
    return enum_value<RouteMode>(v, p, [](std::string_view s) {
      if (s == "turn_ratios") return RouteMode::turn_ratios;
      if (s == "shortest") return RouteMode::shortest;
      throw std::invalid_argument("unknown route mode '" + std::string(s) + "'");
    });
  });
  if (j.contains("sink")) f.sink = string(j["sink"], field(path, "sink"));
  if (j.contains("turn_ratios")) {
    const std::string rp = field(path, "turn_ratios");
    const Json& rj = object(j["turn_ratios"], rp);
    for (const auto& [xid, r] : rj.items()) {
      const std::string p = field(rp, xid);
      object(r, p);
      TurnRatios tr;
      tr.left = opt(r, "left", p, 0.0, number);
      tr.straight = opt(r, "straight", p, 0.0, number);
      tr.right = opt(r, "right", p, 0.0, number);
      f.turn_ratios[xid] = tr;
    }
  }
  f.initial_queue = static_cast<int>(opt(j, "initial_queue", path, std::int64_t{0}, integer));
  f.fill = opt(j, "fill", path, false, boolean);
  return f;
}

inline Json write_flow(const FlowSpec& f) {
  Json j{{"source", f.source},
         {"rate", f.rate},
         {"mode", f.mode == RouteMode::shortest ? "shortest" : "turn_ratios"}};
  if (f.sink) j["sink"] = *f.sink;
  Json rj = Json::object();
  for (const auto& [xid, r] : f.turn_ratios)
    rj[xid] = {{"left", r.left}, {"straight", r.straight}, {"right", r.right}};
  j["turn_ratios"] = std::move(rj);
  j["initial_queue"] = f.initial_queue;
  j["fill"] = f.fill;
  return j;
}

inline SignalPlan read_signal(const Json& j, const std::string& path) {
  object(j, path);
  SignalPlan sp;
  sp.intersection = string(member(j, "intersection", path), field(path, "intersection"));
  sp.mode = opt(j, "mode", path, ControlMode::fixed, [](const Json& v, const std::string& p) {
    return enum_value<ControlMode>(v, p, parse_control_mode);
  });
  sp.plan.cycle = number(member(j, "cycle", path), field(path, "cycle"));
  sp.plan.red_clear = opt(j, "red_clear", path, 0.0, number);
  sp.plan.offset = opt(j, "offset", path, 0.0, number);
  const Json& phs = array(member(j, "phases", path), field(path, "phases"));
  for (std::size_t i = 0; i < phs.size(); ++i) {
    const std::string p = index(field(path, "phases"), i);
    const Json& pj = object(phs[i], p);
    Phase ph;
    ph.id = opt(pj, "id", p, std::to_string(i), string);
    ph.nominal_green = number(member(pj, "green", p), field(p, "green"));
    const Json& ms = array(member(pj, "movements", p), field(p, "movements"));
    for (std::size_t k = 0; k < ms.size(); ++k) {
      const std::string mp = index(field(p, "movements"), k);
      const Json& mj = object(ms[k], mp);
      ph.green_movements.push_back(
          {string(member(mj, "from", mp), field(mp, "from")),
           enum_value<Turn>(member(mj, "turn", mp), field(mp, "turn"), parse_turn)});
    }
    sp.plan.phases.push_back(std::move(ph));
  }
  if (j.contains("actuation")) {
    const std::string p = field(path, "actuation");
    const Json& a = object(j["actuation"], p);
    sp.actuation.min_green = opt(a, "min_green", p, sp.actuation.min_green, number);
    sp.actuation.max_green = opt(a, "max_green", p, sp.actuation.max_green, number);
    sp.actuation.gap_out = opt(a, "gap_out", p, sp.actuation.gap_out, number);
  }
  if (j.contains("max_pressure")) {
    const std::string p = field(path, "max_pressure");
    const Json& a = object(j["max_pressure"], p);
    sp.max_pressure.min_green = opt(a, "min_green", p, sp.max_pressure.min_green, number);
    sp.max_pressure.decision_period =
        opt(a, "decision_period", p, sp.max_pressure.decision_period, number);
  }
  if (j.contains("extension")) {
    const std::string p = field(path, "extension");
    const Json& a = object(j["extension"], p);
    sp.extension.size_threshold = static_cast<int>(
        opt(a, "size_threshold", p, std::int64_t{sp.extension.size_threshold}, integer));
    sp.extension.increment = opt(a, "increment", p, sp.extension.increment, number);
    sp.extension.max_extension = opt(a, "max_extension", p, sp.extension.max_extension, number);
  }
  return sp;
}

inline Json write_signal(const SignalPlan& sp) {
  Json phases = Json::array();
  for (const auto& ph : sp.plan.phases) {
    Json ms = Json::array();
    for (const auto& m : ph.green_movements)
      ms.push_back({{"from", m.from}, {"turn", std::string(to_string(m.turn))}});
    phases.push_back({{"id", ph.id}, {"green", ph.nominal_green}, {"movements", std::move(ms)}});
  }
  return Json{{"intersection", sp.intersection},
              {"mode", std::string(to_string(sp.mode))},
              {"cycle", sp.plan.cycle},
              {"red_clear", sp.plan.red_clear},
              {"offset", sp.plan.offset},
              {"phases", std::move(phases)},
              {"actuation",
               {{"min_green", sp.actuation.min_green},
                {"max_green", sp.actuation.max_green},
                {"gap_out", sp.actuation.gap_out}}},
              {"max_pressure",
               {{"min_green", sp.max_pressure.min_green},
                {"decision_period", sp.max_pressure.decision_period}}},
              {"extension",
               {{"size_threshold", sp.extension.size_threshold},
                {"increment", sp.extension.increment},
                {"max_extension", sp.extension.max_extension}}}};
}

inline std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

/// Parses and validates a scenario document.
inline ScenarioConfig parse_scenario(const std::string& text) {
  using namespace detail;
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ScenarioError("scenario: parse error at " + line_col(text, e.byte) + ": " + e.what());
  }
  object(root, "<root>");

  ScenarioConfig cfg;
  cfg.network = read_network(member(root, "network", ""), "network");

  if (root.contains("demand")) {
    const Json& d = array(root["demand"], "demand");
    for (std::size_t i = 0; i < d.size(); ++i) cfg.demand.push_back(read_flow(d[i], index("demand", i)));
  }

  if (root.contains("classes")) {
    const Json& c = object(root["classes"], "classes");
    for (const auto& [name, pj] : c.items()) {
      VehicleClass vc;
      if (name == "manual") vc = VehicleClass::manual;
      else if (name == "smart") vc = VehicleClass::smart;
      else bad_field("classes." + name, "unknown vehicle class");
      cfg.class_params[vc] = read_class(pj, "classes." + name, cfg.class_params[vc]);
    }
  }

  if (root.contains("signals")) {
    const Json& s = array(root["signals"], "signals");
    for (std::size_t i = 0; i < s.size(); ++i)
      cfg.signal_plans.push_back(read_signal(s[i], index("signals", i)));
  }

  if (root.contains("sensing")) {
    const Json& s = object(root["sensing"], "sensing");
    cfg.sensing.pair_spacing = opt(s, "pair_spacing", "sensing", cfg.sensing.pair_spacing, number);
    cfg.sensing.noise = static_cast<int>(opt(s, "noise", "sensing", std::int64_t{0}, integer));
    cfg.sensing.footprint = opt(s, "footprint", "sensing", cfg.sensing.footprint, number);
  }

  if (root.contains("platoon")) {
    const Json& p = object(root["platoon"], "platoon");
    auto& pc = cfg.platoon;
    pc.tau_platoon = opt(p, "tau_platoon", "platoon", pc.tau_platoon, number);
    pc.gmin_platoon = opt(p, "gmin_platoon", "platoon", pc.gmin_platoon, number);
    pc.accel_boost = opt(p, "accel_boost", "platoon", pc.accel_boost, number);
    pc.comm_latency = opt(p, "comm_latency", "platoon", pc.comm_latency, number);
  }

  if (root.contains("sim")) {
    const Json& s = object(root["sim"], "sim");
    cfg.dt = opt(s, "dt", "sim", cfg.dt, number);
    cfg.duration = opt(s, "duration", "sim", cfg.duration, number);
    cfg.seed = opt(s, "seed", "sim", cfg.seed, unsigned_integer);
    cfg.smart_share = opt(s, "smart_share", "sim", cfg.smart_share, number);
    cfg.platooning_enabled = opt(s, "platooning", "sim", cfg.platooning_enabled, boolean);
    cfg.cf_model = opt(s, "cf_model", "sim", cfg.cf_model, [](const Json& v, const std::string& p) {
      return enum_value<CfModel>(v, p, parse_cf_model);
    });
    cfg.lookahead = opt(s, "lookahead", "sim", cfg.lookahead, number);
    cfg.queue_log_period = opt(s, "queue_log_period", "sim", cfg.queue_log_period, number);
    cfg.record_trajectories = opt(s, "trajectories", "sim", cfg.record_trajectories, boolean);
  }

  if (root.contains("generator")) {
    const Json& g = object(root["generator"], "generator");
    GeneratorSpec gs;
    gs.kind = string(member(g, "kind", "generator"), "generator.kind");
    if (g.contains("args")) {
      const Json& a = object(g["args"], "generator.args");
      for (const auto& [k, v] : a.items()) gs.args[k] = number(v, "generator.args." + k);
    }
    cfg.generator = gs;
  }

  cfg.validate();
  return cfg;
}

inline Json scenario_to_json(const ScenarioConfig& cfg) {
  using namespace detail;
  Json demand = Json::array();
  for (const auto& f : cfg.demand) demand.push_back(write_flow(f));
  Json classes = Json::object();
  for (const auto& [c, p] : cfg.class_params) classes[std::string(to_string(c))] = write_class(p);
  Json signals = Json::array();
  for (const auto& sp : cfg.signal_plans) signals.push_back(write_signal(sp));

  Json root{{"network", write_network(cfg.network)},
            {"demand", std::move(demand)},
            {"classes", std::move(classes)},
            {"signals", std::move(signals)},
            {"sensing",
             {{"pair_spacing", cfg.sensing.pair_spacing},
              {"noise", cfg.sensing.noise},
              {"footprint", cfg.sensing.footprint}}},
            {"platoon",
             {{"tau_platoon", cfg.platoon.tau_platoon},
              {"gmin_platoon", cfg.platoon.gmin_platoon},
              {"accel_boost", cfg.platoon.accel_boost},
              {"comm_latency", cfg.platoon.comm_latency}}},
            {"sim",
             {{"dt", cfg.dt},
              {"duration", cfg.duration},
              {"seed", cfg.seed},
              {"smart_share", cfg.smart_share},
              {"platooning", cfg.platooning_enabled},
              {"cf_model", std::string(to_string(cfg.cf_model))},
              {"lookahead", cfg.lookahead},
              {"queue_log_period", cfg.queue_log_period},
              {"trajectories", cfg.record_trajectories}}}};
  if (cfg.generator) {
    Json args = Json::object();
    for (const auto& [k, v] : cfg.generator->args) args[k] = v;
    root["generator"] = {{"kind", cfg.generator->kind}, {"args", std::move(args)}};
  }
  return root;
}

inline std::string serialize_scenario(const ScenarioConfig& cfg) {
  return scenario_to_json(cfg).dump(2) + "\n";
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("scenario: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

inline void save_scenario(const ScenarioConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ScenarioError("scenario: cannot write '" + path + "'");
  out << serialize_scenario(cfg);
}

}  // namespace arterial
