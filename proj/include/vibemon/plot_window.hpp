#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <vector>

#include "error.hpp"
#include "units.hpp"

namespace vibemon {

// One reading in G; t is seconds since View Start.
struct GSample {
  double t = 0.0;
  double gx = 0.0;
  double gy = 0.0;
  double gz = 0.0;

  friend bool operator==(const GSample&, const GSample&) = default;
};

struct ChannelOffsets {
  double x = 2.0;
  double y = -2.0;
  double z = 0.0;
};

struct Vertex {
  double t;
  double value;
};

// Immutable render model: one polyline per channel, offsets applied.
struct RenderModel {
  std::vector<Vertex> x, y, z;
  ChannelOffsets offsets;
};

// Rolling plot buffer: the last `capacity` samples in arrival order.
class PlotWindow {
 public:
  static constexpr std::size_t kDefaultCapacity = 100;

  explicit PlotWindow(std::size_t capacity = kDefaultCapacity, ChannelOffsets offsets = {})
      : capacity_(capacity), offsets_(offsets) {
    if (capacity_ == 0) throw Error("PlotWindow: capacity must be positive");
  }

  // Appends, evicting the oldest sample once full. Rejects time regressions.
  void push(const GSample& s) {
    if (!samples_.empty() && s.t < samples_.back().t) {
      throw Error("PlotWindow: sample time regressed");
    }
    samples_.push_back(s);
    if (samples_.size() > capacity_) samples_.pop_front();
  }

  // Keeps timestamps, sets every stored value to zero ("flattened" lines).
  void flatten() {
    for (auto& s : samples_) s.gx = s.gy = s.gz = 0.0;
  }

  void clear() { samples_.clear(); }

  RenderModel render() const {
    RenderModel m;
    m.offsets = offsets_;
    m.x.reserve(samples_.size());
    m.y.reserve(samples_.size());
    m.z.reserve(samples_.size());
    for (const auto& s : samples_) {
      m.x.push_back({s.t, s.gx + offsets_.x});
      m.y.push_back({s.t, s.gy + offsets_.y});
      m.z.push_back({s.t, s.gz + offsets_.z});
    }
    return m;
  }

  std::vector<GSample> samples() const { return {samples_.begin(), samples_.end()}; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  std::size_t capacity() const { return capacity_; }
  const ChannelOffsets& offsets() const { return offsets_; }

  bool all_zero() const {
    for (const auto& s : samples_) {
      if (s.gx != 0.0 || s.gy != 0.0 || s.gz != 0.0) return false;
    }
    return true;
  }

 private:
  std::size_t capacity_;
  ChannelOffsets offsets_;
  std::deque<GSample> samples_;
};

inline GSample to_gsample(double t, double ax, double ay, double az) {
  return GSample{t, to_g(ax), to_g(ay), to_g(az)};
}

}  // namespace vibemon
