#pragma once

// Gaze traces on the working plane 1 m in front of the viewer, and the two
// spread metrics used to compare viewing conditions:
//   dispersion  max distance of any point from a reference (centroid by default)
//   extent      max distance between any two points

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"

namespace vibemon::gaze {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct GazePoint {
  std::int64_t t_ms = 0;
  double x = 0.0;  // m, horizontal
  double y = 0.0;  // m, vertical
  double z = 0.0;  // m, depth; not used by the metrics
};

struct GazeTrace {
  std::vector<GazePoint> points;
  std::string source;
  std::size_t dropped_out_of_order = 0;

  double duration_s() const {
    if (points.size() < 2) return 0.0;
    return static_cast<double>(points.back().t_ms - points.front().t_ms) / 1000.0;
  }
};

struct GazeMetrics {
  Point2 centroid;
  Point2 reference;
  double dispersion = 0.0;
  double extent = 0.0;
  double path_length = 0.0;
  double sampling_rate = 0.0;  // Hz; 0 when the trace has no time span
  double duration = 0.0;       // s
  std::size_t points = 0;
};

// Parses `[{"t_ms": int, "x": num, "y": num, "z": num}, ...]`. Points whose
// timestamp goes backwards are dropped and counted.
inline GazeTrace parse_gaze_json(const std::string& text, std::string source = {}) {
  nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw FormatError("gaze: malformed JSON", 0);
  if (!doc.is_array()) throw FormatError("gaze: expected a JSON array of points", 0);

  GazeTrace trace;
  trace.source = std::move(source);
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& e = doc[i];
    if (!e.is_object()) throw FormatError("gaze: element " + std::to_string(i) + " is not an object", i);
    auto num = [&](const char* key) {
      auto it = e.find(key);
      if (it == e.end() || !it->is_number()) {
        throw FormatError("gaze: element " + std::to_string(i) + " missing numeric field '" + key + "'", i);
      }
      double v = it->get<double>();
      if (!std::isfinite(v)) throw FormatError("gaze: element " + std::to_string(i) + " has non-finite '" + key + "'", i);
      return v;
    };
    GazePoint p;
    auto t = e.find("t_ms");
    if (t == e.end() || !t->is_number()) {
      throw FormatError("gaze: element " + std::to_string(i) + " missing numeric field 't_ms'", i);
    }
    p.t_ms = t->is_number_integer() ? t->get<std::int64_t>() : std::llround(t->get<double>());
    p.x = num("x");
    p.y = num("y");
    p.z = num("z");
    if (!trace.points.empty() && p.t_ms < trace.points.back().t_ms) {
      ++trace.dropped_out_of_order;
      continue;
    }
    trace.points.push_back(p);
  }
  if (trace.points.size() < 2) throw FormatError("gaze: insufficient points (need at least 2)", doc.size());
  return trace;
}

inline GazeTrace load_gaze_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open gaze file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_gaze_json(ss.str(), path);
}

// Drops the first `lead` and last `tail` seconds; keeps points with
// lead <= t <= duration - tail (t measured from the first point), then rebases
// so the first kept point is at t = 0.
inline GazeTrace trim_endpoints(const GazeTrace& trace, double lead = 0.5, double tail = 0.5) {
  if (!(lead >= 0.0) || !(tail >= 0.0)) throw Error("trim_endpoints: lead and tail must be >= 0");
  if (trace.points.empty()) throw Error("trim_endpoints: empty trace");
  const double duration = trace.duration_s();
  if (!(duration > lead + tail)) {
    throw Error("trim_endpoints: trace of " + std::to_string(duration) + " s is not longer than lead + tail");
  }
  const std::int64_t origin = trace.points.front().t_ms;
  GazeTrace out;
  out.source = trace.source;
  out.dropped_out_of_order = trace.dropped_out_of_order;
  for (const auto& p : trace.points) {
    double t = static_cast<double>(p.t_ms - origin) / 1000.0;
    if (t < lead || t > duration - tail) continue;
    out.points.push_back(p);
  }
  if (out.points.empty()) throw Error("trim_endpoints: no points left after trimming");
  const std::int64_t base = out.points.front().t_ms;
  for (auto& p : out.points) p.t_ms -= base;
  return out;
}

inline double estimate_sampling_rate(const GazeTrace& trace) {
  if (trace.points.size() < 2) throw Error("estimate_sampling_rate: need at least 2 points");
  double span = trace.duration_s();
  if (!(span > 0.0)) throw Error("estimate_sampling_rate: zero duration");
  return static_cast<double>(trace.points.size() - 1) / span;
}

inline double distance(Point2 a, Point2 b) { return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y)); }

inline double squared_distance(Point2 a, Point2 b) { return (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y); }

// Max pairwise distance, O(n^2).
inline double extent_brute_force(const std::vector<Point2>& pts) {
  double best = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) best = std::max(best, squared_distance(pts[i], pts[j]));
  }
  return std::sqrt(best);
}

namespace detail {

inline double cross(Point2 o, Point2 a, Point2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

// True only when (o, a, b) is a clockwise turn beyond any rounding doubt
// (Shewchuk's orient2d fast-path error bound).
inline bool certainly_clockwise(Point2 o, Point2 a, Point2 b) {
  constexpr double eps = std::numeric_limits<double>::epsilon() / 2;
  constexpr double bound = (3.0 + 16.0 * eps) * eps;
  double left = (a.x - o.x) * (b.y - o.y);
  double right = (a.y - o.y) * (b.x - o.x);
  double det = left - right;
  return det < 0 && -det > bound * (std::fabs(left) + std::fabs(right));
}

// Andrew's monotone chain, counter-clockwise. A point is dropped only when it
// is certainly not extreme, so every true hull vertex survives; collinear and
// borderline points may be kept.
inline std::vector<Point2> convex_hull(std::vector<Point2> pts) {
  std::sort(pts.begin(), pts.end(), [](Point2 a, Point2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end(), [](Point2 a, Point2 b) { return a.x == b.x && a.y == b.y; }),
            pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Point2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && certainly_clockwise(hull[k - 2], hull[k - 1], p)) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && certainly_clockwise(hull[k - 2], hull[k - 1], pts[i])) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace detail

// Diameter of a convex polygon given counter-clockwise, by rotating calipers.
inline double extent_rotating_calipers(const std::vector<Point2>& hull) {
  const std::size_t h = hull.size();
  if (h < 2) return 0.0;
  if (h == 2) return std::sqrt(squared_distance(hull[0], hull[1]));
  double best = 0.0;
  std::size_t j = 1;
  for (std::size_t i = 0; i < h; ++i) {
    const Point2 a = hull[i];
    const Point2 b = hull[(i + 1) % h];
    while (std::fabs(detail::cross(a, b, hull[(j + 1) % h])) > std::fabs(detail::cross(a, b, hull[j]))) {
      j = (j + 1) % h;
    }
    // The antipodal vertex and its successor can tie on area; check both.
    best = std::max({best, squared_distance(a, hull[j]), squared_distance(b, hull[j]),
                     squared_distance(a, hull[(j + 1) % h]), squared_distance(b, hull[(j + 1) % h])});
  }
  return std::sqrt(best);
}

inline constexpr std::size_t kCalipersMinHull = 1000;

// Max pairwise distance via the convex hull: all pairs of hull vertices when
// the hull is small, rotating calipers otherwise.
inline double extent_hull(const std::vector<Point2>& pts, std::size_t calipers_min_hull = kCalipersMinHull) {
  auto hull = detail::convex_hull(pts);
  if (hull.size() >= calipers_min_hull) return extent_rotating_calipers(hull);
  return extent_brute_force(hull);
}

inline constexpr std::size_t kBruteForceExtentLimit = 20000;

inline double extent(const std::vector<Point2>& pts) {
  return pts.size() <= kBruteForceExtentLimit ? extent_brute_force(pts) : extent_hull(pts);
}

inline GazeMetrics gaze_metrics(const GazeTrace& trace, std::optional<Point2> reference = std::nullopt) {
  const auto& p = trace.points;
  if (p.size() < 2) throw Error("gaze_metrics: need at least 2 points");
  std::vector<Point2> xy;
  xy.reserve(p.size());
  for (const auto& g : p) xy.push_back({g.x, g.y});

  GazeMetrics m;
  m.points = p.size();
  // Averaging offsets from the first point keeps a constant trace exact.
  Point2 sum{};
  for (const auto& q : xy) {
    sum.x += q.x - xy[0].x;
    sum.y += q.y - xy[0].y;
  }
  m.centroid = {xy[0].x + sum.x / static_cast<double>(xy.size()), xy[0].y + sum.y / static_cast<double>(xy.size())};
  m.reference = reference.value_or(m.centroid);

  for (std::size_t i = 0; i < xy.size(); ++i) {
    m.dispersion = std::max(m.dispersion, distance(xy[i], m.reference));
    if (i > 0) m.path_length += distance(xy[i - 1], xy[i]);
  }
  m.extent = extent(xy);
  m.duration = trace.duration_s();
  m.sampling_rate = m.duration > 0.0 ? static_cast<double>(p.size() - 1) / m.duration : 0.0;
  return m;
}

inline nlohmann::json metrics_to_json(const GazeMetrics& m) {
  return {{"centroid", {{"x", m.centroid.x}, {"y", m.centroid.y}}},
          {"reference", {{"x", m.reference.x}, {"y", m.reference.y}}},
          {"dispersion_m", m.dispersion},
          {"extent_m", m.extent},
          {"path_length_m", m.path_length},
          {"sampling_rate_hz", m.sampling_rate},
          {"duration_s", m.duration},
          {"points", m.points}};
}

}  // namespace vibemon::gaze
