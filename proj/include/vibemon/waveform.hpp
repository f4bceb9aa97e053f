#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

#include "error.hpp"
#include "units.hpp"
#include "wire.hpp"

namespace vibemon {

enum class Axis { x, y, z };

inline const char* axis_name(Axis a) {
  switch (a) {
    case Axis::x: return "x";
    case Axis::y: return "y";
    case Axis::z: return "z";
  }
  return "?";
}

inline Axis parse_axis(const std::string& s) {
  if (s == "x") return Axis::x;
  if (s == "y") return Axis::y;
  if (s == "z") return Axis::z;
  throw Error("unknown axis '" + s + "' (expected x, y or z)");
}

// Shaker-like drive signal. Amplitude and noise are in G.
struct WaveformConfig {
  double frequency = 1.5;      // Hz, (0, 10]
  double amplitude = 1.0;      // G, > 0
  double dwell_fraction = 0.0; // of each half-period spent at the extreme, [0, 0.2]
  double noise_std = 0.0;      // G
  Axis axis = Axis::z;
  std::uint64_t seed = 0;
  double sample_rate = 20.0;   // Hz

  void validate() const {
    if (!(frequency > 0.0 && frequency <= 10.0)) throw Error("waveform: frequency must be in (0, 10] Hz");
    if (!(amplitude > 0.0) || !std::isfinite(amplitude)) throw Error("waveform: amplitude must be > 0");
    if (!(dwell_fraction >= 0.0 && dwell_fraction <= 0.2)) throw Error("waveform: dwell fraction must be in [0, 0.2]");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw Error("waveform: noise std must be >= 0");
    if (!(sample_rate >= 2.0 * frequency) || !std::isfinite(sample_rate)) {
      throw Error("waveform: sample rate must be at least twice the frequency");
    }
  }
};

// Phase (in cycles) of a sine that pauses at +/-1 for dwell_fraction of each
// half-period. Piecewise linear in the cycle position, slope 1/(1-d) outside the
// pauses, so the period stays exactly 1 cycle.
inline double dwell_phase(double cycles, double dwell_fraction) {
  double u = cycles - std::floor(cycles);
  double d = dwell_fraction;
  if (d <= 0.0) return u;
  double half = d / 4.0;  // half-width of each pause, in cycles
  double rate = 1.0 / (1.0 - d);
  if (u < 0.25 - half) return u * rate;
  if (u <= 0.25 + half) return 0.25;
  if (u < 0.75 - half) return 0.25 + (u - 0.25 - half) * rate;
  if (u <= 0.75 + half) return 0.75;
  return 0.75 + (u - 0.75 - half) * rate;
}

// Unit-amplitude sine with dwell at the extremes.
inline double sin_with_dwell(double frequency, double t, double dwell_fraction) {
  return std::sin(2.0 * std::numbers::pi * dwell_phase(frequency * t, dwell_fraction));
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Gaussian draw keyed on (seed, sample index, axis); independent of call order.
inline double keyed_normal(std::uint64_t seed, std::int64_t index, int axis, double stddev) {
  if (stddev == 0.0) return 0.0;
  std::uint64_t key = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index) * 3 + axis));
  std::mt19937_64 rng(key);
  std::normal_distribution<double> dist(0.0, stddev);
  return dist(rng);
}

}  // namespace detail

// Sample of the emulated sensor at time t, in m/s^2. Pure in (cfg, t): noise is
// keyed on the nearest sample index round(t * sample_rate).
inline AccelSample synth_sample(const WaveformConfig& cfg, double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw Error("synth_sample: t must be >= 0");
  auto index = static_cast<std::int64_t>(std::llround(t * cfg.sample_rate));
  double drive = cfg.amplitude * sin_with_dwell(cfg.frequency, t, cfg.dwell_fraction);
  double g[3];
  for (int k = 0; k < 3; ++k) {
    g[k] = detail::keyed_normal(cfg.seed, index, k, cfg.noise_std);
  }
  g[static_cast<int>(cfg.axis)] += drive;
  return AccelSample{t, to_accel(g[0]), to_accel(g[1]), to_accel(g[2])};
}

// Sample n of the stream: t = n / sample_rate.
inline AccelSample synth_sample_at(const WaveformConfig& cfg, std::int64_t n) {
  return synth_sample(cfg, static_cast<double>(n) / cfg.sample_rate);
}

}  // namespace vibemon
