#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "error.hpp"

namespace vibemon {

// Round-trip statistics of a PING/PONG probe, in seconds.
struct LatencyReport {
  std::vector<double> trials;  // successful round trips, in send order
  std::size_t failed = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double std = 0.0;  // population
  double one_way_estimate = 0.0;
};

inline LatencyReport summarize_latency(std::vector<double> trials, std::size_t failed = 0) {
  if (trials.empty()) throw Error("latency: no successful trials");
  LatencyReport r;
  r.trials = std::move(trials);
  r.failed = failed;
  auto [lo, hi] = std::minmax_element(r.trials.begin(), r.trials.end());
  r.min = *lo;
  r.max = *hi;
  r.mean = std::accumulate(r.trials.begin(), r.trials.end(), 0.0) / static_cast<double>(r.trials.size());
  // Summation rounding can push the mean a hair outside [min, max].
  r.mean = std::clamp(r.mean, r.min, r.max);
  double ss = 0.0;
  for (double v : r.trials) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(r.trials.size()));
  r.one_way_estimate = r.mean / 2.0;
  return r;
}

inline nlohmann::json latency_to_json(const LatencyReport& r) {
  return {{"trials", r.trials}, {"failed", r.failed},     {"mean", r.mean},
          {"min", r.min},       {"max", r.max},           {"std", r.std},
          {"one_way_estimate", r.one_way_estimate}};
}

}  // namespace vibemon
