#pragma once

// Car-following kernels. Everything in this header is a pure function of its
// arguments.
//
// Two models are provided:
//   * a Krauss-type safe-speed model with a dawdling term, integrated with the
//     updated speed (x += v_new * dt);
//   * the improved IDM (IIDM), integrated with the constant-acceleration
//     kinematic update.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace arterial {

/// Per-class driving constants.
struct VehicleClassParams {
  double tau = 2.05;    ///< reaction time / desired time gap [s]
  double g_min = 4.0;   ///< standstill gap [m]
  double a_max = 1.5;   ///< maximal acceleration [m/s^2]
  double b = 2.0;       ///< desired (comfortable) deceleration [m/s^2]
  double v_max = 20.0;  ///< desired / maximal speed [m/s]
  double length = 5.0;  ///< vehicle length [m]
  double eps = 0.0;     ///< Krauss driver imperfection in [0, 1]
  double delta1 = 4.0;  ///< IIDM gap exponent
  double delta2 = 8.0;  ///< IIDM free-road exponent

  bool operator==(const VehicleClassParams&) const = default;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw std::invalid_argument(std::string("vehicle class: ") + name + " must be > 0");
    };
    positive(tau, "tau");
    positive(g_min, "g_min");
    positive(a_max, "a_max");
    positive(b, "b");
    positive(v_max, "v_max");
    positive(length, "length");
    positive(delta1, "delta1");
    positive(delta2, "delta2");
    if (!(eps >= 0.0 && eps <= 1.0))
      throw std::invalid_argument("vehicle class: eps must lie in [0, 1]");
  }

  /// Bumper-to-bumper spacing of a standing queue.
  double jam_spacing() const { return length + g_min; }
};

/// IIDM notation-table defaults (tau = 2.05 s, g_min = 4 m, l = 5 m, ...).
inline VehicleClassParams iidm_defaults() { return {}; }

/// Human-driven class of the arterial experiments.
inline VehicleClassParams manual_class() {
  VehicleClassParams p;
  p.tau = 2.5;
  p.g_min = 2.0;
  p.a_max = 2.6;
  p.b = 4.5;
  p.v_max = 20.0;
  p.length = 5.0;
  return p;
}

/// Connected/automated class of the arterial experiments.
inline VehicleClassParams smart_class() {
  VehicleClassParams p = manual_class();
  p.tau = 1.0;
  p.g_min = 0.5;
  return p;
}

/// Krauss driver used in the single-intersection study: queue geometry of the
/// IIDM defaults (theta_e = 2.5 s at 20 m/s). The comfortable deceleration is
/// not reported for that study; 3.0 m/s^2 reproduces its discharge totals.
inline VehicleClassParams single_intersection_class(double a_max = 1.5) {
  VehicleClassParams p = iidm_defaults();
  p.a_max = a_max;
  p.b = 3.0;
  return p;
}

inline constexpr double kNoLeader = std::numeric_limits<double>::infinity();

/// Own state plus the leader as seen by the follower.
struct FollowContext {
  double v = 0.0;         ///< own speed [m/s]
  double v_leader = 0.0;  ///< leader speed [m/s]
  double gap = kNoLeader; ///< front bumper to leader's rear bumper [m]
  double dt = 0.2;        ///< step [s]

  bool has_leader() const { return std::isfinite(gap); }
};

// ---------------------------------------------------------------- Krauss ----

/// v_safe = v_l + (g - v_l*tau) / (v_mean/b + tau), v_mean = (v + v_l)/2.
/// May be negative; krauss_update clamps.
inline double krauss_safe_speed(const FollowContext& c, const VehicleClassParams& p) {
  const double v_mean = 0.5 * (c.v + c.v_leader);
  return c.v_leader + (c.gap - c.v_leader * p.tau) / (v_mean / p.b + p.tau);
}

/// One Krauss speed update from an already computed safe speed; u is a uniform
/// draw in [0, 1] used by the dawdling term.
inline double krauss_update(double v, double v_safe, const VehicleClassParams& p, double dt,
                            double u) {
  const double v1 = std::min({v + p.a_max * dt, p.v_max, v_safe});
  const double v0 = v1 - p.eps * u * (v1 - std::max(0.0, v - p.b * dt));
  return std::max(0.0, std::min(v1, v0));
}

inline double krauss_step(const FollowContext& c, const VehicleClassParams& p, double u) {
  const double v_safe = c.has_leader() ? krauss_safe_speed(c, p) : kNoLeader;
  return krauss_update(c.v, v_safe, p, c.dt, u);
}

// ------------------------------------------------------------------ IIDM ----

inline double iidm_free_accel(double v, const VehicleClassParams& p) {
  return p.a_max * (1.0 - std::pow(v / p.v_max, p.delta2));
}

inline double iidm_desired_gap(const FollowContext& c, const VehicleClassParams& p) {
  const double dyn = c.v * p.tau + c.v * (c.v - c.v_leader) / (2.0 * std::sqrt(p.a_max * p.b));
  return p.g_min + std::max(0.0, dyn);
}

inline double iidm_accel(const FollowContext& c, const VehicleClassParams& p) {
  const double a_free = iidm_free_accel(c.v, p);
  if (!c.has_leader()) return a_free;

  const double g_d = iidm_desired_gap(c, p);
  const double g = std::max(c.gap, 1e-9);
  const double z = g_d / g;
  if (z > 1.0) return p.a_max * (1.0 - std::pow(z, p.delta1));
  // At v = v_max the exponent below divides by zero; the limit is 0 when the
  // gap is at least the desired one.
  if (a_free <= 1e-9) return 0.0;
  return a_free * (1.0 - std::pow(z, p.delta1 * p.a_max / a_free));
}

// ----------------------------------------------------------- Equilibrium ----

struct Equilibrium {
  double headway = 0.0;   ///< theta_e [s]
  double flow_vph = 0.0;  ///< 3600 / theta_e
};

/// theta_e = tau + (g_min + l) / v_max.
inline Equilibrium equilibrium_headway(const VehicleClassParams& p) {
  const double theta = p.tau + (p.g_min + p.length) / p.v_max;
  return {theta, 3600.0 / theta};
}

}  // namespace arterial
