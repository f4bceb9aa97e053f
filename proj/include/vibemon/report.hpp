#pragma once

// Two-session comparison: the numbers the `analyze` command reports.

#include <algorithm>
#include <cstdio>
#include <optional>
#include <ostream>

#include <json.hpp>

#include "analysis.hpp"
#include "session.hpp"
#include "waveform.hpp"

namespace vibemon::analysis {

// One channel of a session as a uniform trace on the nominal rate grid,
// starting at t = 0 regardless of the recorded arrival times.
inline SignalTrace session_trace(const Session& s, Axis channel) {
  SignalTrace tr;
  tr.sample_rate = s.meta.rate_hz;
  tr.values.reserve(s.samples.size());
  for (const auto& g : s.samples) {
    tr.values.push_back(channel == Axis::x ? g.gx : channel == Axis::y ? g.gy : g.gz);
  }
  return tr;
}

struct AnalyzeOptions {
  Axis channel = Axis::z;
  std::size_t segment_multiple = 1;
  std::size_t pairs = 10;
  std::optional<double> min_separation;  // s; default half the dominant period
  std::optional<double> min_prominence;  // G; default a quarter of the peak-to-peak range
};

struct ChannelReport {
  std::size_t samples = 0;
  double dominant_frequency = 0.0;
  double min_separation = 0.0;
  double min_prominence = 0.0;
  PeakList peaks;
  AmplitudeStats amplitude;
  Spectrum psd;
};

struct AnalyzeReport {
  Axis channel = Axis::z;
  ChannelReport ref;
  ChannelReport subject;
  DelayResult delay;
  double sync_offset = 0.0;
};

inline ChannelReport analyze_channel(const SignalTrace& tr, const AnalyzeOptions& opts) {
  ChannelReport r;
  r.samples = tr.values.size();
  r.psd = welch_psd(tr, opts.segment_multiple);
  r.dominant_frequency = dominant_frequency(r.psd);
  r.min_separation = opts.min_separation ? *opts.min_separation : 0.5 / r.dominant_frequency;
  if (opts.min_prominence) {
    r.min_prominence = *opts.min_prominence;
  } else {
    auto [lo, hi] = std::minmax_element(tr.values.begin(), tr.values.end());
    r.min_prominence = 0.25 * (*hi - *lo);
  }
  r.peaks = detect_peaks(tr, r.min_separation, r.min_prominence);
  if (r.peaks.empty()) throw AnalysisError("analyze: no peaks found");
  r.amplitude = amplitude_std(r.peaks, opts.pairs);
  return r;
}

inline AnalyzeReport analyze_sessions(const Session& ref, const Session& subject, const AnalyzeOptions& opts = {}) {
  AnalyzeReport r;
  r.channel = opts.channel;
  r.ref = analyze_channel(session_trace(ref, opts.channel), opts);
  r.subject = analyze_channel(session_trace(subject, opts.channel), opts);
  DelayConfig dc;
  dc.pairs = opts.pairs;
  r.delay = time_delay(r.ref.peaks, r.subject.peaks, dc);
  r.sync_offset = std::fabs(r.subject.dominant_frequency - r.ref.dominant_frequency);
  return r;
}

inline nlohmann::json channel_to_json(const ChannelReport& c) {
  return {{"samples", c.samples},
          {"dominant_frequency_hz", c.dominant_frequency},
          {"psd_resolution_hz", c.psd.resolution},
          {"psd_segment_length", c.psd.segment_length},
          {"psd_segments", c.psd.segments},
          {"peaks", c.peaks.size()},
          {"min_separation_s", c.min_separation},
          {"min_prominence_g", c.min_prominence},
          {"amplitude_std_g", c.amplitude.std},
          {"amplitude_mean_g", c.amplitude.mean},
          {"amplitude_peaks_used", c.amplitude.count},
          {"amplitude_short_data", c.amplitude.short_data}};
}

inline nlohmann::json report_to_json(const AnalyzeReport& r) {
  return {{"channel", axis_name(r.channel)},
          {"delay_s", r.delay.delay},
          {"delay_pairs_used", r.delay.pairs_used},
          {"delay_short_data", r.delay.short_data},
          {"sync_offset_hz", r.sync_offset},
          {"ref", channel_to_json(r.ref)},
          {"subject", channel_to_json(r.subject)}};
}

// "freq,power" per line, with a header row.
inline void write_psd_csv(std::ostream& out, const Spectrum& sp) {
  out << "freq,power\n";
  char buf[64];
  for (std::size_t k = 0; k < sp.freqs.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", sp.freqs[k], sp.power[k]);
    out << buf;
  }
}

}  // namespace vibemon::analysis
