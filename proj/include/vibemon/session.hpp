#pragma once

// Session recordings as JSON lines:
//   {"meta": {"sensor": "host:port", "rate_hz": 20, "started_unix_ms": 0, "threshold_g": null}}
//   {"t": 0.0, "gx": 0.0, "gy": 0.0, "gz": 1.0}
//   ...

#include <cstdint>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "plot_window.hpp"

namespace vibemon {

struct SessionMeta {
  std::string sensor;
  double rate_hz = 20.0;
  std::int64_t started_unix_ms = 0;
  std::optional<double> threshold_g;
};

struct Session {
  SessionMeta meta;
  std::vector<GSample> samples;
};

inline nlohmann::ordered_json meta_to_json(const SessionMeta& m) {
  nlohmann::ordered_json inner;
  inner["sensor"] = m.sensor;
  inner["rate_hz"] = m.rate_hz;
  inner["started_unix_ms"] = m.started_unix_ms;
  inner["threshold_g"] = m.threshold_g ? nlohmann::ordered_json(*m.threshold_g) : nlohmann::ordered_json();
  nlohmann::ordered_json j;
  j["meta"] = std::move(inner);
  return j;
}

inline nlohmann::ordered_json sample_to_json(const GSample& s) {
  nlohmann::ordered_json j;
  j["t"] = s.t;
  j["gx"] = s.gx;
  j["gy"] = s.gy;
  j["gz"] = s.gz;
  return j;
}

// Appends JSONL records to a stream. Doubles are written in shortest
// round-trip form, so loading reproduces the samples bit for bit.
class SessionWriter {
 public:
  SessionWriter(std::ostream& out, const SessionMeta& meta) : out_(&out) { write_header(meta); }

  SessionWriter(const std::string& path, const SessionMeta& meta)
      : file_(std::make_unique<std::ofstream>(path, std::ios::out | std::ios::trunc)),
        out_(file_.get()) {
    if (!*file_) throw IoError("cannot open session file for writing: " + path);
    write_header(meta);
  }

  void append(const GSample& s) {
    *out_ << sample_to_json(s).dump() << '\n';
    if (!*out_) throw IoError("session write failed");
    ++count_;
  }

  void flush() { out_->flush(); }
  std::size_t count() const { return count_; }

 private:
  void write_header(const SessionMeta& meta) {
    *out_ << meta_to_json(meta).dump() << '\n';
    if (!*out_) throw IoError("session write failed");
  }

  std::unique_ptr<std::ofstream> file_;
  std::ostream* out_;
  std::size_t count_ = 0;
};

namespace detail {

inline double require_number(const nlohmann::json& j, const char* key, std::size_t line_no) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number()) {
    throw FormatError("session line " + std::to_string(line_no) + ": missing numeric field '" + key + "'",
                      line_no);
  }
  return it->get<double>();
}

}  // namespace detail

inline Session load_session(std::istream& in) {
  Session session;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw FormatError("session line " + std::to_string(line_no) + ": not a JSON object", line_no);
    }
    if (!have_header) {
      auto it = j.find("meta");
      if (it == j.end() || !it->is_object()) {
        throw FormatError("session line " + std::to_string(line_no) + ": expected metadata header", line_no);
      }
      const auto& m = *it;
      if (!m.contains("sensor") || !m["sensor"].is_string()) {
        throw FormatError("session line " + std::to_string(line_no) + ": header missing 'sensor'", line_no);
      }
      session.meta.sensor = m["sensor"].get<std::string>();
      session.meta.rate_hz = detail::require_number(m, "rate_hz", line_no);
      if (!(session.meta.rate_hz > 0.0)) {
        throw FormatError("session line " + std::to_string(line_no) + ": rate_hz must be > 0", line_no);
      }
      if (m.contains("started_unix_ms") && m["started_unix_ms"].is_number()) {
        session.meta.started_unix_ms = m["started_unix_ms"].get<std::int64_t>();
      }
      if (m.contains("threshold_g") && m["threshold_g"].is_number()) {
        session.meta.threshold_g = m["threshold_g"].get<double>();
      }
      have_header = true;
      continue;
    }
    GSample s{detail::require_number(j, "t", line_no), detail::require_number(j, "gx", line_no),
              detail::require_number(j, "gy", line_no), detail::require_number(j, "gz", line_no)};
    if (!session.samples.empty() && s.t < session.samples.back().t) {
      throw FormatError("session line " + std::to_string(line_no) + ": time regressed", line_no);
    }
    session.samples.push_back(s);
  }
  if (!have_header) throw FormatError("session: missing metadata header", line_no + 1);
  return session;
}

inline Session load_session(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open session file: " + path);
  return load_session(in);
}

}  // namespace vibemon
