#pragma once

#include <cmath>

#include "error.hpp"

namespace vibemon {

inline constexpr double kStandardGravity = 9.80665;  // m/s^2 per G

// m/s^2 -> G
inline double to_g(double accel) {
  if (!std::isfinite(accel)) throw Error("to_g: non-finite acceleration");
  return accel / kStandardGravity;
}

inline double to_accel(double g) { return g * kStandardGravity; }

}  // namespace vibemon
