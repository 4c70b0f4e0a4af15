// arterial: command-line driver for the corridor simulator.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "arterial/arterial.hpp"

namespace fs = std::filesystem;
using namespace arterial;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> dt;
  std::optional<double> duration;
  bool platooning = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "RNG seed");
    cmd->add_option("--dt", dt, "time step [s]")->check(CLI::PositiveNumber);
    cmd->add_option("--duration", duration, "simulated time [s]")->check(CLI::NonNegativeNumber);
    cmd->add_flag("--platooning", platooning, "enable platoon formation");
  }

  ScenarioConfig apply(ScenarioConfig cfg) const {
    if (seed) cfg.seed = *seed;
    if (dt) cfg.dt = *dt;
    if (duration) cfg.duration = *duration;
    if (platooning) cfg.platooning_enabled = true;
    cfg.validate();
    return cfg;
  }
};

template <class F>
void write_file(const fs::path& p, F&& body) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
  body(os);
}

void print_row(const std::string& k, const std::string& v) { std::printf("  %-28s %s\n", k.c_str(), v.c_str()); }

std::string num(double v, int prec = 1) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

int cmd_run(const std::string& path, const Overrides& ov, const std::string& out, bool traj) {
  ScenarioConfig cfg = ov.apply(load_scenario(path));
  if (traj) cfg.record_trajectories = true;
  const SimResult r = run(cfg);

  fs::create_directories(out);
  const fs::path dir(out);
  write_file(dir / "crossings.csv", [&](std::ostream& os) { csv::write_crossings(os, csv::crossing_rows(r.detectors)); });
  write_file(dir / "throughput.csv", [&](std::ostream& os) {
    csv::write_throughput(os, csv::throughput_rows(r.detectors, 3600.0, cfg.duration));
  });
  write_file(dir / "queues.csv", [&](std::ostream& os) { csv::write_queues(os, r.queues); });
  write_file(dir / "platoon_events.csv", [&](std::ostream& os) { csv::write_platoon_events(os, r.platoon_events); });
  write_file(dir / "trajectories.csv", [&](std::ostream& os) { csv::write_trajectories(os, r.trajectories); });

  const double hours = cfg.duration / 3600.0;
  std::printf("run %s  seed=%llu dt=%g duration=%g\n", path.c_str(),
              static_cast<unsigned long long>(cfg.seed), cfg.dt, cfg.duration);
  print_row("steps", std::to_string(r.steps));
  print_row("vehicles created", std::to_string(r.counters.created));
  print_row("vehicles exited", std::to_string(r.counters.exited));
  print_row("in network at end", std::to_string(r.counters.in_network));
  print_row("arrivals suppressed", std::to_string(r.counters.suppressed));
  print_row("refused transfers (veh-steps)", std::to_string(r.counters.refused_transfers));
  print_row("platoon events", std::to_string(r.platoon_events.size()));
  print_row("min gap [m]", r.counters.created > 1 && std::isfinite(r.stats.min_gap) ? num(r.stats.min_gap, 3) : "-");
  print_row("state hash", std::to_string(r.hash));
  std::printf("\n  %-12s %10s %10s\n", "intersection", "crossings", "veh/h");
  for (const auto& [id, x] : cfg.network.intersections) {
    const auto n = intersection_crossings(r, cfg, id, 0.0, r.clock + 1.0);
    std::printf("  %-12s %10zu %10s\n", id.c_str(), n, hours > 0 ? num(n / hours).c_str() : "-");
  }
  std::printf("\noutputs written to %s\n", out.c_str());
  return 0;
}

int cmd_sweep(const std::string& path, const Overrides& ov, const std::string& param,
              const std::vector<double>& values, std::optional<std::string> intersection) {
  const ScenarioConfig cfg = ov.apply(load_scenario(path));
  const IntersectionId id = intersection.value_or(default_intersection(cfg));
  const auto s = sweep(cfg, param, values, intersection_total(id), path);
  std::printf("sweep %s over %s  seed=%llu  outcome: crossings at %s\n", path.c_str(), param.c_str(),
              static_cast<unsigned long long>(s.seed), id.c_str());
  std::printf("  %12s %12s\n", param.c_str(), "crossings");
  for (std::size_t i = 0; i < s.values.size(); ++i) std::printf("  %12g %12.0f\n", s.values[i], s.outcomes[i]);
  return 0;
}

int cmd_capacity(const std::string& path, const Overrides& ov, const std::string& id, CapacityProtocol proto) {
  const ScenarioConfig cfg = ov.apply(load_scenario(path));
  const auto cap = measure_intersection_capacity(cfg, id, proto);
  std::printf("capacity of %s  (saturated, %g s warmup + %d h)\n", id.c_str(), proto.warmup, proto.hours);
  std::printf("  %-16s %10s\n", "approach", "veh/h");
  for (const auto& [lane, v] : cap.per_approach) std::printf("  %-16s %10.1f\n", lane.c_str(), v);
  std::printf("  %-16s %10.1f\n", "total", cap.total);
  return 0;
}

int cmd_share_curve(const std::string& path, const Overrides& ov, const std::vector<double>& shares,
                    std::optional<std::string> intersection, CapacityProtocol proto) {
  const ScenarioConfig cfg = ov.apply(load_scenario(path));
  const IntersectionId id = intersection.value_or(default_intersection(cfg));
  const auto s = smart_share_curve(cfg, shares, id, proto);
  std::printf("capacity of %s vs smart share  (saturated, %g s warmup + %d h)\n", id.c_str(), proto.warmup,
              proto.hours);
  std::printf("  %8s %10s\n", "share", "veh/h");
  for (std::size_t i = 0; i < shares.size(); ++i) std::printf("  %8.3f %10.1f\n", shares[i], s.outcomes[i]);
  if (s.fit)
    std::printf("  fit: capacity = %.1f + %.1f * share   R^2 = %.4f\n", s.fit->intercept, s.fit->slope, s.fit->r2);
  else
    std::printf("  fit: n/a (need two distinct shares)\n");
  return 0;
}

int cmd_generate_single(const std::string& file, std::optional<double> downstream, double cycle, double rc,
                        SingleIntersectionOptions o) {
  save_scenario(build_single_intersection(downstream, cycle, rc, o), file);
  std::printf("wrote %s\n", file.c_str());
  return 0;
}

int cmd_generate_arterial(const std::string& file, int n, double spacing, double share, bool saturated,
                          ArterialOptions o) {
  ScenarioConfig cfg = build_arterial(n, spacing, share, o);
  if (saturated) cfg = saturate(cfg);
  save_scenario(cfg, file);
  std::printf("wrote %s\n", file.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Signalized arterial simulator with smart-vehicle platooning"};
  app.require_subcommand(1);

  std::string scenario;
  std::string out = "out";
  bool traj = false;
  Overrides run_ov, sweep_ov, cap_ov, curve_ov;
  std::string param;
  std::vector<double> values, shares;
  std::optional<std::string> sweep_x, curve_x;
  std::string cap_x;
  CapacityProtocol cap_proto, curve_proto;

  auto* run_cmd = app.add_subcommand("run", "simulate a scenario and write CSV outputs");
  run_cmd->add_option("scenario", scenario, "scenario file (JSON)")->required();
  run_ov.attach(run_cmd);
  run_cmd->add_option("--out", out, "output directory")->capture_default_str();
  run_cmd->add_flag("--trajectories", traj, "record per-step vehicle trajectories");

  auto* sweep_cmd = app.add_subcommand("sweep", "rerun a scenario over one parameter");
  sweep_cmd->add_option("scenario", scenario, "scenario file (JSON)")->required();
  sweep_ov.attach(sweep_cmd);
  sweep_cmd->add_option("--param", param, "a_max | red_clear | cycle | smart_share | downstream_distance | platooning")
      ->required();
  sweep_cmd->add_option("--values", values, "comma-separated values")->required()->delimiter(',');
  sweep_cmd->add_option("--intersection", sweep_x, "measurement intersection (default: first by id)");

  auto* cap_cmd = app.add_subcommand("capacity", "saturated capacity of one intersection");
  cap_cmd->add_option("scenario", scenario, "scenario file (JSON)")->required();
  cap_ov.attach(cap_cmd);
  cap_cmd->add_option("--intersection", cap_x, "intersection id")->required();
  cap_cmd->add_option("--warmup", cap_proto.warmup, "warmup [s]")->capture_default_str();
  cap_cmd->add_option("--hours", cap_proto.hours, "measured hours")->capture_default_str()->check(CLI::PositiveNumber);

  auto* curve_cmd = app.add_subcommand("share-curve", "capacity against smart-vehicle share");
  curve_cmd->add_option("scenario", scenario, "scenario file (JSON)")->required();
  curve_ov.attach(curve_cmd);
  curve_cmd->add_option("--shares", shares, "comma-separated shares in [0, 1]")->required()->delimiter(',');
  curve_cmd->add_option("--intersection", curve_x, "measurement intersection (default: first by id)");
  curve_cmd->add_option("--warmup", curve_proto.warmup, "warmup [s]")->capture_default_str();
  curve_cmd->add_option("--hours", curve_proto.hours, "measured hours")->capture_default_str()->check(CLI::PositiveNumber);

  auto* gen_cmd = app.add_subcommand("generate", "write a synthetic scenario file");
  gen_cmd->require_subcommand(1);
  std::string gen_file;
  std::optional<double> downstream;
  double cycle = 120, rc = 3;
  bool iidm = false;
  SingleIntersectionOptions si;
  auto* gen_si = gen_cmd->add_subcommand("single-intersection", "one crossing with two saturated approaches");
  gen_si->add_option("file", gen_file, "output scenario file")->required();
  gen_si->add_option("--downstream", downstream, "distance to a second signal [m]");
  gen_si->add_option("--cycle", cycle, "cycle length [s]")->capture_default_str();
  gen_si->add_option("--red-clear", rc, "red clearance per phase [s]")->capture_default_str();
  gen_si->add_option("--a-max", si.a_max, "manual-vehicle acceleration [m/s^2]")->capture_default_str();
  gen_si->add_flag("--iidm", iidm, "use IIDM car following (dt defaults to 0.05)");
  gen_si->add_option("--dt", si.dt, "time step [s]");
  gen_si->add_option("--duration", si.duration, "simulated time [s]")->capture_default_str();
  gen_si->add_option("--seed", si.seed, "RNG seed")->capture_default_str();

  int n_x = 13;
  double spacing = 300, share = 0;
  bool saturated = false;
  ArterialOptions ao;
  auto* gen_art = gen_cmd->add_subcommand("arterial", "corridor of signalized crossings");
  gen_art->add_option("file", gen_file, "output scenario file")->required();
  gen_art->add_option("--intersections", n_x, "number of crossings")->capture_default_str();
  gen_art->add_option("--spacing", spacing, "crossing spacing [m]")->capture_default_str();
  gen_art->add_option("--share", share, "smart-vehicle share")->capture_default_str();
  gen_art->add_flag("--saturated", saturated, "saturate every source");
  gen_art->add_option("--duration", ao.duration, "simulated time [s]")->capture_default_str();
  gen_art->add_option("--seed", ao.seed, "RNG seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return cmd_run(scenario, run_ov, out, traj);
    if (*sweep_cmd) return cmd_sweep(scenario, sweep_ov, param, values, sweep_x);
    if (*cap_cmd) return cmd_capacity(scenario, cap_ov, cap_x, cap_proto);
    if (*curve_cmd) return cmd_share_curve(scenario, curve_ov, shares, curve_x, curve_proto);
    if (*gen_si) {
      if (iidm) {
        si.model = CfModel::iidm;
        if (gen_si->count("--dt") == 0) si.dt = 0.05;
      }
      return cmd_generate_single(gen_file, downstream, cycle, rc, si);
    }
    if (*gen_art) return cmd_generate_arterial(gen_file, n_x, spacing, share, saturated, ao);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
