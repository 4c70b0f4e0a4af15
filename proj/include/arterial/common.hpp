#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace arterial {

using LaneId = std::string;
using IntersectionId = std::string;
using VehicleId = std::uint64_t;

enum class Turn : std::uint8_t { left = 0, straight = 1, right = 2 };

inline constexpr Turn kTurnOrder[] = {Turn::left, Turn::straight, Turn::right};

inline std::string_view to_string(Turn t) {
  switch (t) {
    case Turn::left: return "left";
    case Turn::straight: return "straight";
    case Turn::right: return "right";
  }
  return "?";
}

inline Turn parse_turn(std::string_view s) {
  if (s == "left") return Turn::left;
  if (s == "straight") return Turn::straight;
  if (s == "right") return Turn::right;
  throw std::invalid_argument("unknown turn '" + std::string(s) + "'");
}

enum class VehicleClass : std::uint8_t { manual = 0, smart = 1 };

inline std::string_view to_string(VehicleClass c) {
  return c == VehicleClass::smart ? "smart" : "manual";
}

/// Malformed or inconsistent scenario input.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A well-formed scenario asked for something the network cannot provide
/// (dead-end turn, inapplicable sweep parameter, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Internal consistency breach inside the simulation loop. Never expected;
/// carries a state dump in what().
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace arterial
