#pragma once

// Point detectors and paired queue sensors.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "arterial/common.hpp"
#include "arterial/rng.hpp"

namespace arterial {

struct Crossing {
  VehicleId vehicle = 0;
  double time = 0.0;
  bool operator==(const Crossing&) const = default;
};

/// Point detector; logs front-bumper passages.
struct Detector {
  std::string id;
  LaneId lane;
  double position = 0.0;
  std::vector<Crossing> log;
};

struct PositionChange {
  VehicleId vehicle = 0;
  double before = 0.0;
  double after = 0.0;
};

/// Logs every vehicle whose front moves from at-or-behind the detector to
/// strictly past it during [t, t + dt), at the linearly interpolated crossing
/// time. A vehicle standing exactly on the detector is logged when it leaves.
/// `moves` is in lane order (front first); same-time crossings keep that order.
inline void record_crossings(Detector& det, std::span<const PositionChange> moves, double t,
                             double dt) {
  const std::size_t first_new = det.log.size();
  for (const auto& m : moves) {
    if (m.before <= det.position && m.after > det.position) {
      const double frac = (det.position - m.before) / (m.after - m.before);
      det.log.push_back({m.vehicle, t + frac * dt});
    }
  }
  std::stable_sort(det.log.begin() + static_cast<std::ptrdiff_t>(first_new), det.log.end(),
                   [](const Crossing& a, const Crossing& b) { return a.time < b.time; });
}

/// 3600 / headway to the previous crossing [veh/h].
inline double instantaneous_flow(const Detector& det, std::size_t index) {
  if (index == 0 || index >= det.log.size())
    throw std::out_of_range("instantaneous_flow: crossing " + std::to_string(index) +
                            " has no predecessor");
  return 3600.0 / (det.log[index].time - det.log[index - 1].time);
}

struct QueueNoise {
  int amplitude = 0;  ///< additive integer error uniform on [-amplitude, +amplitude]
  bool operator==(const QueueNoise&) const = default;
};

/// Two sensors bracketing the queue storage in front of a stop bar.
struct DetectorPair {
  std::string id;
  LaneId lane;
  double upstream_pos = 0.0;
  double downstream_pos = 0.0;
  double jam_spacing = 7.0;  ///< l + g_min of the most compact class
  double footprint = 2.0;    ///< occupancy window centred on each sensor [m]
  QueueNoise noise;

  double spacing() const { return downstream_pos - upstream_pos; }
  int capacity() const { return static_cast<int>(std::floor(spacing() / jam_spacing + 1e-9)); }
};

struct QueueEstimate {
  int count = 0;
  bool clamped = false;
  double at_time = 0.0;
};

/// A vehicle on the pair's lane as the estimator sees it.
struct LaneOccupant {
  VehicleId id = 0;
  double x = 0.0;  ///< front bumper
  double length = 5.0;
  double v = 0.0;
};

/// Vehicles whose front lies in [upstream_pos, downstream_pos].
inline int true_queue_count(const DetectorPair& pair, std::span<const LaneOccupant> lane) {
  int n = 0;
  for (const auto& o : lane)
    if (o.x >= pair.upstream_pos && o.x <= pair.downstream_pos) ++n;
  return n;
}

namespace detail {

inline bool footprint_occupied(double sensor, double half_width,
                               std::span<const LaneOccupant> lane, bool stopped_only) {
  for (const auto& o : lane) {
    if (stopped_only && o.v > 0.1) continue;
    if (o.x >= sensor - half_width && o.x - o.length <= sensor + half_width) return true;
  }
  return false;
}

}  // namespace detail

/// Count between the sensors, perturbed by the noise model and clamped to
/// [0, capacity]. With noise enabled the sensor footprints bound the error:
/// an empty pair reads 0, a queue standing over both sensors reads capacity,
/// and a full reading with the upstream sensor clear survives only if the
/// downstream sensor is occupied.
inline QueueEstimate estimate_queue(const DetectorPair& pair, std::span<const LaneOccupant> lane,
                                    double t, RngStream& rng) {
  const int truth = true_queue_count(pair, lane);
  const int cap = pair.capacity();
  int raw = truth;
  if (pair.noise.amplitude > 0)
    raw += static_cast<int>(rng.uniform_int(-pair.noise.amplitude, pair.noise.amplitude));
  int est = std::clamp(raw, 0, cap);
  bool clamped = est != raw;

  if (pair.noise.amplitude > 0) {
    const double h = 0.5 * pair.footprint;
    const bool up = detail::footprint_occupied(pair.upstream_pos, h, lane, false);
    const bool down = detail::footprint_occupied(pair.downstream_pos, h, lane, false);
    const bool up_stopped = detail::footprint_occupied(pair.upstream_pos, h, lane, true);
    const bool down_stopped = detail::footprint_occupied(pair.downstream_pos, h, lane, true);
    if (!up && !down && truth == 0) {
      est = 0;
    } else if (up_stopped && down_stopped) {
      est = cap;
    } else if (!up && est == cap && !down) {
      est = std::max(0, cap - 1);
    }
  }
  return {est, clamped, t};
}

}  // namespace arterial
