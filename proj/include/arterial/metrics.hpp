#pragma once

// Throughput analytics, the capacity protocol, sweeps, and CSV I/O.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "arterial/builders.hpp"
#include "arterial/engine.hpp"
#include "arterial/scenario.hpp"

namespace arterial {

// ------------------------------------------------------------ throughput ----

struct ThroughputSeries {
  std::string detector;
  std::vector<double> times;
  std::vector<double> flows_vph;  ///< flows[i] = 3600 / (times[i+1] - times[i])
  double window = 3600.0;
  std::vector<std::size_t> totals;  ///< crossings per [k*window, (k+1)*window)
};

inline ThroughputSeries throughput_series(const Detector& d, double window, double horizon) {
  ThroughputSeries s;
  s.detector = d.id;
  s.window = window;
  for (const auto& c : d.log) s.times.push_back(c.time);
  for (std::size_t i = 1; i < d.log.size(); ++i) s.flows_vph.push_back(instantaneous_flow(d, i));
  const auto n = static_cast<std::size_t>(std::ceil(horizon / window - 1e-9));
  s.totals.assign(n, 0);
  for (double t : s.times) {
    const auto k = static_cast<std::size_t>(std::floor(t / window));
    if (k < n) ++s.totals[k];
  }
  return s;
}

/// Crossings with t0 <= time < t1.
inline std::size_t count_in_window(const Detector& d, double t0, double t1) {
  return static_cast<std::size_t>(std::count_if(
      d.log.begin(), d.log.end(), [&](const Crossing& c) { return c.time >= t0 && c.time < t1; }));
}

inline const Detector& require_detector(const SimResult& r, const std::string& id) {
  const Detector* d = r.detector(id);
  if (!d) throw ConfigError("no detector '" + id + "'");
  return *d;
}

/// Vehicles crossing the detector during the first minute.
inline std::size_t first_minute_count(const SimResult& r, const std::string& detector) {
  return count_in_window(require_detector(r, detector), 0.0, 60.0);
}

/// Stop-bar crossings summed over every approach of an intersection.
inline std::size_t intersection_crossings(const SimResult& r, const ScenarioConfig& cfg,
                                          const IntersectionId& id, double t0, double t1) {
  auto it = cfg.network.intersections.find(id);
  if (it == cfg.network.intersections.end()) throw ConfigError("unknown intersection '" + id + "'");
  std::size_t n = 0;
  for (const auto& lane : it->second.incoming_lanes)
    n += count_in_window(require_detector(r, lane), t0, t1);
  return n;
}

/// Stop-bar crossings summed over every intersection approach in the network.
inline std::size_t network_crossings(const SimResult& r, double t0, double t1) {
  std::size_t n = 0;
  for (const auto& d : r.detectors) n += count_in_window(d, t0, t1);
  return n;
}

// --------------------------------------------------------------- capacity ----

struct CapacityProtocol {
  double warmup = 3600.0;
  int hours = 4;
};

struct IntersectionCapacity {
  std::map<LaneId, double> per_approach;  ///< mean vehicles per hour
  double total = 0.0;
};

inline IntersectionCapacity capacity_from(const SimResult& r, const ScenarioConfig& cfg,
                                          const IntersectionId& id, CapacityProtocol proto = {}) {
  auto it = cfg.network.intersections.find(id);
  if (it == cfg.network.intersections.end()) throw ConfigError("unknown intersection '" + id + "'");
  IntersectionCapacity cap;
  const double t1 = proto.warmup + 3600.0 * proto.hours;
  for (const auto& lane : it->second.incoming_lanes) {
    const double v =
        static_cast<double>(count_in_window(require_detector(r, lane), proto.warmup, t1)) / proto.hours;
    cap.per_approach[lane] = v;
    cap.total += v;
  }
  return cap;
}

/// Saturates every source, runs warmup + hours, and averages the hourly
/// stop-bar crossings after the warmup.
inline IntersectionCapacity measure_intersection_capacity(const ScenarioConfig& cfg,
                                                          const IntersectionId& id,
                                                          CapacityProtocol proto = {}) {
  ScenarioConfig sat = saturate(cfg);
  sat.duration = proto.warmup + 3600.0 * proto.hours;
  return capacity_from(run(sat), sat, id, proto);
}

// ---------------------------------------------------------------- fitting ----

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares; nullopt with fewer than two distinct x values.
inline std::optional<LinearFit> ols(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0) return std::nullopt;
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += e * e;
  }
  f.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return f;
}

// ----------------------------------------------------------------- sweeps ----

inline const std::vector<std::string>& sweep_parameters() {
  static const std::vector<std::string> names{"a_max",       "red_clear",           "cycle",
                                              "smart_share", "downstream_distance", "platooning"};
  return names;
}

namespace detail {

/// Rescales every plan's greens to fill (cycle - n*red_clear).
inline void retime(ScenarioConfig& cfg, std::optional<double> cycle, std::optional<double> red_clear) {
  if (cfg.signal_plans.empty()) throw ConfigError("scenario has no signal plans to retime");
  for (auto& sp : cfg.signal_plans) {
    TimingPlan& p = sp.plan;
    const double n = static_cast<double>(p.phases.size());
    const double c = cycle.value_or(p.cycle);
    const double rc = red_clear.value_or(p.red_clear);
    const double avail = c - n * rc;
    if (!(avail > 0.0)) throw ConfigError("cycle " + std::to_string(c) + " s leaves no green time");
    const double scale = avail / p.total_green();
    for (auto& ph : p.phases) ph.nominal_green *= scale;
    p.cycle = c;
    p.red_clear = rc;
    p.offset = std::fmod(p.offset, c);
  }
}

}  // namespace detail

/// The configuration a sweep runs for one parameter value.
inline ScenarioConfig apply_parameter(const ScenarioConfig& base, const std::string& name, double value) {
  ScenarioConfig cfg = base;
  if (name == "a_max") {
    for (auto& [c, p] : cfg.class_params) p.a_max = value;
    if (cfg.generator) cfg.generator->args["a_max"] = value;
  } else if (name == "red_clear") {
    detail::retime(cfg, std::nullopt, value);
    if (cfg.generator && cfg.generator->args.count("red_clear")) cfg.generator->args["red_clear"] = value;
  } else if (name == "cycle") {
    detail::retime(cfg, value, std::nullopt);
    if (cfg.generator && cfg.generator->args.count("cycle")) cfg.generator->args["cycle"] = value;
  } else if (name == "smart_share") {
    cfg.smart_share = value;
  } else if (name == "platooning") {
    cfg.platooning_enabled = value != 0.0;
  } else if (name == "downstream_distance") {
    if (!cfg.generator || cfg.generator->kind != "single_intersection")
      throw ConfigError("downstream_distance applies only to generated single-intersection scenarios");
    const auto& g = cfg.generator->args;
    auto arg = [&](const char* k, double def) { return g.count(k) ? g.at(k) : def; };
    SingleIntersectionOptions o;
    o.model = arg("iidm", 0.0) != 0.0 ? CfModel::iidm : CfModel::krauss;
    o.a_max = arg("a_max", 1.5);
    o.dt = cfg.dt;
    o.duration = cfg.duration;
    o.seed = cfg.seed;
    o.approach_length = arg("approach_length", 1000.0);
    ScenarioConfig rebuilt = build_single_intersection(value, arg("cycle", 120.0), arg("red_clear", 3.0), o);
    rebuilt.class_params = cfg.class_params;
    rebuilt.smart_share = cfg.smart_share;
    rebuilt.platooning_enabled = cfg.platooning_enabled;
    rebuilt.record_trajectories = cfg.record_trajectories;
    cfg = rebuilt;
  } else {
    throw ConfigError("unknown sweep parameter '" + name + "'");
  }
  try {
    cfg.validate();
  } catch (const ScenarioError& e) {
    throw ConfigError("parameter " + name + "=" + std::to_string(value) + ": " + e.what());
  }
  return cfg;
}

struct SweepResult {
  std::string parameter;
  std::vector<double> values;
  std::vector<double> outcomes;
  std::uint64_t seed = 0;
  std::string scenario;
  std::optional<LinearFit> fit;
};

/// Scalar outcome of one run: total stop-bar crossings at `intersection` over
/// the whole run (all approaches).
using Outcome = std::function<double(const SimResult&, const ScenarioConfig&)>;

inline Outcome intersection_total(const IntersectionId& id) {
  return [id](const SimResult& r, const ScenarioConfig& cfg) {
    return static_cast<double>(intersection_crossings(r, cfg, id, 0.0, r.clock + 1.0));
  };
}

/// Default measurement point: the first intersection by id.
inline IntersectionId default_intersection(const ScenarioConfig& cfg) {
  if (cfg.network.intersections.empty()) throw ConfigError("scenario has no intersections");
  return cfg.network.intersections.begin()->first;
}

/// One run per value with the seed held fixed. Runs execute concurrently;
/// results are keyed by value position.
inline SweepResult sweep(const ScenarioConfig& base, const std::string& name,
                         const std::vector<double>& values, Outcome outcome = {},
                         std::string scenario = {}) {
  if (!outcome) outcome = intersection_total(default_intersection(base));
  std::vector<ScenarioConfig> cfgs;
  for (double v : values) cfgs.push_back(apply_parameter(base, name, v));
  std::vector<std::future<double>> futs;
  for (const auto& c : cfgs)
    futs.push_back(std::async(std::launch::async, [&c, &outcome] { return outcome(run(c), c); }));
  SweepResult r{name, values, {}, base.seed, std::move(scenario), std::nullopt};
  for (auto& f : futs) r.outcomes.push_back(f.get());
  return r;
}

/// Capacity at `intersection` for every smart share, plus a linear fit.
inline SweepResult smart_share_curve(const ScenarioConfig& base, const std::vector<double>& shares,
                                     const IntersectionId& intersection, CapacityProtocol proto = {}) {
  for (double s : shares)
    if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("smart share " + std::to_string(s) + " outside [0, 1]");
  std::vector<std::future<double>> futs;
  for (double s : shares) {
    ScenarioConfig c = apply_parameter(base, "smart_share", s);
    futs.push_back(std::async(std::launch::async, [c, intersection, proto] {
      return measure_intersection_capacity(c, intersection, proto).total;
    }));
  }
  SweepResult r{"smart_share", shares, {}, base.seed, {}, std::nullopt};
  for (auto& f : futs) r.outcomes.push_back(f.get());
  r.fit = ols(shares, r.outcomes);
  return r;
}

// -------------------------------------------------------------------- CSV ----

namespace csv {

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::vector<std::vector<std::string>> rows(std::istream& in, const std::string& header) {
  std::string line;
  if (!std::getline(in, line) || line != header)
    throw std::runtime_error("csv: expected header '" + header + "'");
  std::vector<std::vector<std::string>> out;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(split(line));
  return out;
}

inline void precise(std::ostream& os) { os << std::setprecision(17); }

inline constexpr const char* kCrossings = "time_s,vehicle_id,lane_id,detector_id";
inline constexpr const char* kPlatoon = "time_s,platoon_id,event,member_count";
inline constexpr const char* kTrajectories = "time_s,vehicle_id,lane_id,x_m,v_mps,a_mps2";
inline constexpr const char* kQueues = "time_s,pair_id,lane_id,count,clamped";
inline constexpr const char* kThroughput = "detector_id,window_start_s,window_end_s,count";

struct CrossingRow {
  double time = 0.0;
  VehicleId vehicle = 0;
  LaneId lane;
  std::string detector;
  bool operator==(const CrossingRow&) const = default;
};

inline std::vector<CrossingRow> crossing_rows(const std::vector<Detector>& dets) {
  std::vector<CrossingRow> out;
  for (const auto& d : dets)
    for (const auto& c : d.log) out.push_back({c.time, c.vehicle, d.lane, d.id});
  std::stable_sort(out.begin(), out.end(),
                   [](const CrossingRow& a, const CrossingRow& b) { return a.time < b.time; });
  return out;
}

inline void write_crossings(std::ostream& os, const std::vector<CrossingRow>& rows_) {
  precise(os);
  os << kCrossings << "\n";
  for (const auto& r : rows_) os << r.time << "," << r.vehicle << "," << r.lane << "," << r.detector << "\n";
}

inline std::vector<CrossingRow> read_crossings(std::istream& in) {
  std::vector<CrossingRow> out;
  for (const auto& c : rows(in, kCrossings))
    out.push_back({std::stod(c.at(0)), std::stoull(c.at(1)), c.at(2), c.at(3)});
  return out;
}

inline void write_platoon_events(std::ostream& os, const std::vector<PlatoonEvent>& ev) {
  precise(os);
  os << kPlatoon << "\n";
  for (const auto& e : ev)
    os << e.time << "," << e.platoon << "," << to_string(e.kind) << "," << e.member_count << "\n";
}

inline std::vector<PlatoonEvent> read_platoon_events(std::istream& in) {
  std::vector<PlatoonEvent> out;
  for (const auto& c : rows(in, kPlatoon))
    out.push_back({std::stod(c.at(0)), std::stoull(c.at(1)), parse_platoon_event(c.at(2)),
                   static_cast<std::size_t>(std::stoull(c.at(3)))});
  return out;
}

inline void write_trajectories(std::ostream& os, const std::vector<TrajectoryPoint>& pts) {
  precise(os);
  os << kTrajectories << "\n";
  for (const auto& p : pts)
    os << p.time << "," << p.vehicle << "," << p.lane << "," << p.x << "," << p.v << "," << p.a << "\n";
}

inline std::vector<TrajectoryPoint> read_trajectories(std::istream& in) {
  std::vector<TrajectoryPoint> out;
  for (const auto& c : rows(in, kTrajectories))
    out.push_back({std::stod(c.at(0)), std::stoull(c.at(1)), c.at(2), std::stod(c.at(3)),
                   std::stod(c.at(4)), std::stod(c.at(5))});
  return out;
}

inline void write_queues(std::ostream& os, const std::vector<QueueSample>& qs) {
  precise(os);
  os << kQueues << "\n";
  for (const auto& q : qs)
    os << q.time << "," << q.pair << "," << q.lane << "," << q.count << "," << (q.clamped ? 1 : 0) << "\n";
}

inline std::vector<QueueSample> read_queues(std::istream& in) {
  std::vector<QueueSample> out;
  for (const auto& c : rows(in, kQueues))
    out.push_back({std::stod(c.at(0)), c.at(1), c.at(2), std::stoi(c.at(3)), c.at(4) == "1"});
  return out;
}

struct ThroughputRow {
  std::string detector;
  double start = 0.0;
  double end = 0.0;
  std::size_t count = 0;
  bool operator==(const ThroughputRow&) const = default;
};

inline std::vector<ThroughputRow> throughput_rows(const std::vector<Detector>& dets, double window,
                                                  double horizon) {
  std::vector<ThroughputRow> out;
  for (const auto& d : dets) {
    const auto s = throughput_series(d, window, horizon);
    for (std::size_t k = 0; k < s.totals.size(); ++k)
      out.push_back({d.id, k * window, std::min(horizon, (k + 1) * window), s.totals[k]});
  }
  return out;
}

inline void write_throughput(std::ostream& os, const std::vector<ThroughputRow>& rows_) {
  precise(os);
  os << kThroughput << "\n";
  for (const auto& r : rows_) os << r.detector << "," << r.start << "," << r.end << "," << r.count << "\n";
}

inline std::vector<ThroughputRow> read_throughput(std::istream& in) {
  std::vector<ThroughputRow> out;
  for (const auto& c : rows(in, kThroughput))
    out.push_back({c.at(0), std::stod(c.at(1)), std::stod(c.at(2)),
                   static_cast<std::size_t>(std::stoull(c.at(3)))});
  return out;
}

}  // namespace csv

}  // namespace arterial
