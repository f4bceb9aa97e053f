#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "error.hpp"
#include "plot_window.hpp"
#include "waveform.hpp"

namespace vibemon {

struct ThresholdConfig {
  double limit = 1.0;         // G
  double rearm_margin = 0.1;  // G
  double rearm_hold = 1.0;    // s

  void validate() const {
    if (!(limit > 0.0) || !std::isfinite(limit)) throw Error("threshold: limit must be > 0");
    if (!(rearm_margin >= 0.0) || !(limit > rearm_margin)) {
      throw Error("threshold: need limit > rearm_margin >= 0");
    }
    if (!(rearm_hold >= 0.0) || !std::isfinite(rearm_hold)) throw Error("threshold: rearm hold must be >= 0");
  }
};

struct AlarmEvent {
  double t = 0.0;
  Axis channel = Axis::z;
  double value = 0.0;  // G
};

// Per-channel hysteresis automaton. A channel fires once when |value| > limit
// while armed, then stays disarmed until |value| <= limit - margin has held
// continuously for rearm_hold seconds.
struct AlarmState {
  struct Channel {
    bool armed = true;
    std::optional<double> quiet_since;
  };
  std::array<Channel, 3> channels{};
};

inline std::vector<AlarmEvent> check_threshold(const GSample& s, const ThresholdConfig& cfg,
                                               AlarmState& state) {
  std::vector<AlarmEvent> events;
  const std::array<double, 3> values{s.gx, s.gy, s.gz};
  for (int k = 0; k < 3; ++k) {
    auto& ch = state.channels[static_cast<std::size_t>(k)];
    double mag = std::fabs(values[static_cast<std::size_t>(k)]);
    if (ch.armed) {
      if (mag > cfg.limit) {
        events.push_back({s.t, static_cast<Axis>(k), values[static_cast<std::size_t>(k)]});
        ch.armed = false;
        ch.quiet_since.reset();
      }
      continue;
    }
    if (mag <= cfg.limit - cfg.rearm_margin) {
      if (!ch.quiet_since) ch.quiet_since = s.t;
      if (s.t - *ch.quiet_since >= cfg.rearm_hold) {
        ch.armed = true;
        ch.quiet_since.reset();
      }
    } else {
      ch.quiet_since.reset();
    }
  }
  return events;
}

}  // namespace vibemon
