#pragma once

// Batch signal analysis for recorded vibration traces: time grids, peak picking,
// peak-pair time delay, Welch auto-spectral density, dominant frequency and
// amplitude consistency.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"

namespace vibemon::analysis {

// Uniformly sampled signal; sample i sits at t0 + i / sample_rate.
struct SignalTrace {
  std::vector<double> values;
  double sample_rate = 20.0;
  double t0 = 0.0;

  double time_at(double index) const { return t0 + index / sample_rate; }

  void validate() const {
    if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) throw AnalysisError("trace: sample rate must be > 0");
    for (double v : values) {
      if (!std::isfinite(v)) throw AnalysisError("trace: non-finite value");
    }
  }
};

inline std::vector<double> build_time_vector(std::size_t n, double fs, double t0 = 0.0) {
  if (!(fs > 0.0) || !std::isfinite(fs)) throw AnalysisError("build_time_vector: sample rate must be > 0");
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = t0 + static_cast<double>(i) / fs;
  return t;
}

struct PeakList {
  std::vector<double> times;       // s, strictly increasing
  std::vector<double> amplitudes;  // G

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
};

// Local maxima with prominence >= min_prominence, thinned so that no two kept
// peaks are closer than min_separation seconds (the taller one wins). A flat
// top counts as one peak located at its midpoint.
inline PeakList detect_peaks(const SignalTrace& trace, double min_separation, double min_prominence) {
  trace.validate();
  const auto& x = trace.values;
  const std::size_t n = x.size();
  if (n < 3) throw AnalysisError("detect_peaks: trace needs at least 3 samples");

  struct Candidate {
    double index;  // plateau midpoint, may be fractional
    double value;
    double prominence;
  };
  std::vector<Candidate> cands;

  std::size_t i = 1;
  while (i + 1 < n) {
    if (!(x[i - 1] < x[i])) {
      ++i;
      continue;
    }
    std::size_t right = i;
    while (right + 1 < n && x[right + 1] == x[i]) ++right;
    if (right + 1 >= n || !(x[right + 1] < x[i])) {
      i = right + 1;
      continue;
    }
    const std::size_t left = i;
    const double peak = x[i];

    double left_min = peak;
    for (std::size_t j = left + 1; j-- > 0;) {
      if (x[j] > peak) break;
      left_min = std::min(left_min, x[j]);
    }
    double right_min = peak;
    for (std::size_t j = right; j < n; ++j) {
      if (x[j] > peak) break;
      right_min = std::min(right_min, x[j]);
    }
    double prominence = peak - std::max(left_min, right_min);
    if (prominence >= min_prominence) {
      cands.push_back({(static_cast<double>(left) + static_cast<double>(right)) / 2.0, peak, prominence});
    }
    i = right + 1;
  }

  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return cands[a].value > cands[b].value; });
  std::vector<bool> keep(cands.size(), false);
  std::vector<double> kept_times;
  for (std::size_t idx : order) {
    double t = trace.time_at(cands[idx].index);
    bool clash = std::any_of(kept_times.begin(), kept_times.end(),
                             [&](double k) { return std::fabs(k - t) < min_separation; });
    if (clash) continue;
    keep[idx] = true;
    kept_times.push_back(t);
  }

  PeakList out;
  for (std::size_t k = 0; k < cands.size(); ++k) {
    if (!keep[k]) continue;
    out.times.push_back(trace.time_at(cands[k].index));
    out.amplitudes.push_back(cands[k].value);
  }
  return out;
}

struct DelayConfig {
  std::size_t pairs = 10;
  std::optional<double> max_pair_gap;  // s; default half the median reference period
};

struct DelayResult {
  double delay = 0.0;  // mean of (t_subject - t_ref); positive means the subject lags
  std::size_t pairs_used = 0;
  bool short_data = false;
};

inline double median_period(const std::vector<double>& times) {
  if (times.size() < 2) return std::numeric_limits<double>::infinity();
  std::vector<double> d(times.size() - 1);
  for (std::size_t i = 1; i < times.size(); ++i) d[i - 1] = times[i] - times[i - 1];
  std::sort(d.begin(), d.end());
  std::size_t m = d.size() / 2;
  return d.size() % 2 ? d[m] : (d[m - 1] + d[m]) / 2.0;
}

// Averages the subject-minus-reference offset over the first `pairs` matched
// peaks. Each subject peak pairs with its nearest unused reference peak, if
// that one is within the gap; unmatched peaks are skipped.
inline DelayResult time_delay(const PeakList& ref, const PeakList& subject, const DelayConfig& cfg = {}) {
  if (ref.empty() || subject.empty()) throw AnalysisError("time_delay: both peak lists must be non-empty");
  if (cfg.pairs == 0) throw AnalysisError("time_delay: pair count must be >= 1");
  const double gap = cfg.max_pair_gap ? *cfg.max_pair_gap : median_period(ref.times) / 2.0;

  std::vector<double> offsets;
  std::size_t next_ref = 0;  // pairing is monotone: refs before this are used or skipped
  for (double ts : subject.times) {
    if (offsets.size() == cfg.pairs) break;
    auto it = std::lower_bound(ref.times.begin() + static_cast<std::ptrdiff_t>(next_ref), ref.times.end(), ts);
    std::size_t best = ref.times.size();
    double best_d = std::numeric_limits<double>::infinity();
    auto consider = [&](std::size_t k) {
      double d = std::fabs(ref.times[k] - ts);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    };
    auto pos = static_cast<std::size_t>(it - ref.times.begin());
    if (pos > next_ref) consider(pos - 1);
    if (pos < ref.times.size()) consider(pos);
    if (best == ref.times.size() || !(best_d <= gap)) continue;
    offsets.push_back(ts - ref.times[best]);
    next_ref = best + 1;
  }
  if (offsets.empty()) throw AnalysisError("time_delay: no peak pairs within the pairing gap");

  DelayResult r;
  r.pairs_used = offsets.size();
  r.short_data = offsets.size() < cfg.pairs;
  r.delay = std::accumulate(offsets.begin(), offsets.end(), 0.0) / static_cast<double>(offsets.size());
  return r;
}

// One-sided power spectral density.
struct Spectrum {
  std::vector<double> freqs;  // Hz, 0 .. fs/2
  std::vector<double> power;  // G^2/Hz
  double resolution = 0.0;    // Hz
  std::size_t segment_length = 0;
  std::size_t segments = 0;

  // Sum of power times bin width: equals the variance for a stationary signal.
  double integrated_power() const {
    return std::accumulate(power.begin(), power.end(), 0.0) * resolution;
  }
};

inline std::size_t welch_segment_length(double sample_rate, std::size_t segment_multiple) {
  auto fs = static_cast<long long>(std::llround(sample_rate));
  if (segment_multiple < 1) throw AnalysisError("welch_psd: segment multiple must be >= 1");
  if (fs < 1) throw AnalysisError("welch_psd: sample rate must round to at least 1 Hz");
  return segment_multiple * 16 * static_cast<std::size_t>(fs);
}

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex mu;
  return mu;
}

// Real-to-complex transform of a fixed length; planning is not thread-safe in
// FFTW, execution with the plan's own buffers is.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lk(fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lk(fftw_planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }

  // |X_k|^2 for k = 0 .. n/2 of the current input.
  void power(std::vector<double>& out) {
    fftw_execute(plan_);
    out.resize(n_ / 2 + 1);
    for (std::size_t k = 0; k <= n_ / 2; ++k) out[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
  }

 private:
  std::size_t n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

}  // namespace detail

// Periodic Hann window of length n.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

// Welch estimate with segment length = multiple * 16 * round(fs): the signal
// mean is removed, segments overlap by half, each is Hann-windowed, and the
// periodograms are averaged and scaled to density (sum * df == variance).
inline Spectrum welch_psd(const SignalTrace& trace, std::size_t segment_multiple = 1) {
  trace.validate();
  const std::size_t seg = welch_segment_length(trace.sample_rate, segment_multiple);
  const std::size_t n = trace.values.size();
  if (n < seg) {
    throw AnalysisError("welch_psd: trace has " + std::to_string(n) + " samples, needs at least " +
                        std::to_string(seg));
  }
  const double fs = trace.sample_rate;
  // Mean taken relative to the first sample so a constant trace cancels exactly.
  const double first = trace.values.front();
  double offset_sum = 0.0;
  for (double v : trace.values) offset_sum += v - first;
  const double mean = first + offset_sum / static_cast<double>(n);
  const auto window = hann_window(seg);
  double window_energy = 0.0;
  for (double w : window) window_energy += w * w;

  const std::size_t step = seg / 2;
  const std::size_t count = (n - seg) / step + 1;
  const std::size_t bins = seg / 2 + 1;

  detail::RealFft fft(seg);
  std::vector<double> acc(bins, 0.0), pw;
  for (std::size_t s = 0; s < count; ++s) {
    const double* src = trace.values.data() + s * step;
    double* in = fft.input();
    for (std::size_t i = 0; i < seg; ++i) in[i] = (src[i] - mean) * window[i];
    fft.power(pw);
    for (std::size_t k = 0; k < bins; ++k) acc[k] += pw[k];
  }

  Spectrum sp;
  sp.segment_length = seg;
  sp.segments = count;
  sp.resolution = fs / static_cast<double>(seg);
  sp.freqs.resize(bins);
  sp.power.resize(bins);
  const double scale = 1.0 / (fs * window_energy * static_cast<double>(count));
  for (std::size_t k = 0; k < bins; ++k) {
    sp.freqs[k] = static_cast<double>(k) * sp.resolution;
    double p = acc[k] * scale;
    // Every bin except DC and Nyquist folds in its negative-frequency twin.
    if (k != 0 && !(seg % 2 == 0 && k == seg / 2)) p *= 2.0;
    sp.power[k] = p;
  }
  return sp;
}

// Frequency of the strongest non-DC bin; ties go to the lower frequency.
inline double dominant_frequency(const Spectrum& sp) {
  if (sp.power.size() < 2 || sp.power.size() != sp.freqs.size()) {
    throw AnalysisError("dominant_frequency: spectrum has no non-DC bins");
  }
  std::size_t best = 1;
  for (std::size_t k = 2; k < sp.power.size(); ++k) {
    if (sp.power[k] > sp.power[best]) best = k;
  }
  if (!(sp.power[best] > 0.0)) throw AnalysisError("dominant_frequency: no power outside DC");
  return sp.freqs[best];
}

inline double sync_offset(const SignalTrace& ref, const SignalTrace& subject, std::size_t segment_multiple = 1) {
  double f_ref = dominant_frequency(welch_psd(ref, segment_multiple));
  double f_sub = dominant_frequency(welch_psd(subject, segment_multiple));
  return std::fabs(f_sub - f_ref);
}

struct AmplitudeStats {
  double std = 0.0;  // population
  double mean = 0.0;
  std::size_t count = 0;
  bool short_data = false;
};

// Spread of the first n peak amplitudes.
inline AmplitudeStats amplitude_std(const PeakList& peaks, std::size_t n = 10) {
  if (peaks.empty()) throw AnalysisError("amplitude_std: no peaks");
  if (n == 0) throw AnalysisError("amplitude_std: n must be >= 1");
  AmplitudeStats s;
  s.count = std::min(n, peaks.size());
  s.short_data = s.count < n;
  auto first = peaks.amplitudes.begin();
  auto last = first + static_cast<std::ptrdiff_t>(s.count);
  s.mean = std::accumulate(first, last, 0.0) / static_cast<double>(s.count);
  double ss = 0.0;
  for (auto it = first; it != last; ++it) ss += (*it - s.mean) * (*it - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(s.count));
  return s;
}

}  // namespace vibemon::analysis
