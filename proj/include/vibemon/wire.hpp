#pragma once

// Line protocol between sensor emulator and monitor.
//
//   DATA  "<ax> <ay> <az>\n"   m/s^2, "%.4f" each, single space separated
//   PING  "PING <nonce>\n"
//   PONG  "PONG <nonce>\n"
//
// A nonce is 1..32 printable non-whitespace bytes and is echoed verbatim.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "error.hpp"

namespace vibemon {

struct AccelSample {
  double t = 0.0;  // seconds since stream start, receiver assigned
  double ax = 0.0;
  double ay = 0.0;
  double az = 0.0;
};

namespace wire {

inline constexpr std::size_t kMaxNonce = 32;
inline constexpr std::size_t kMaxLine = 256;

struct Data {
  double ax, ay, az;
};
struct Ping {
  std::string nonce;
};
struct Pong {
  std::string nonce;
};

using Message = std::variant<Data, Ping, Pong>;

inline bool valid_nonce(std::string_view nonce) {
  if (nonce.empty() || nonce.size() > kMaxNonce) return false;
  for (unsigned char c : nonce) {
    if (c <= 0x20 || c == 0x7f) return false;
  }
  return true;
}

inline std::string encode_sample(double ax, double ay, double az) {
  if (!std::isfinite(ax) || !std::isfinite(ay) || !std::isfinite(az)) {
    throw EncodeError("encode_sample: non-finite acceleration");
  }
  std::array<char, 128> buf{};
  int n = std::snprintf(buf.data(), buf.size(), "%.4f %.4f %.4f\n", ax, ay, az);
  if (n < 0 || static_cast<std::size_t>(n) >= buf.size()) {
    throw EncodeError("encode_sample: value out of range");
  }
  return std::string(buf.data(), static_cast<std::size_t>(n));
}

inline std::string encode_ping(std::string_view nonce) {
  if (!valid_nonce(nonce)) throw EncodeError("encode_ping: invalid nonce");
  return "PING " + std::string(nonce) + "\n";
}

inline std::string encode_pong(std::string_view nonce) {
  if (!valid_nonce(nonce)) throw EncodeError("encode_pong: invalid nonce");
  return "PONG " + std::string(nonce) + "\n";
}

namespace detail {

inline bool is_field_sep(char c) { return c == ' ' || c == '\t'; }

inline std::vector<std::string_view> split_fields(std::string_view body) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < body.size()) {
    while (i < body.size() && is_field_sep(body[i])) ++i;
    std::size_t start = i;
    while (i < body.size() && !is_field_sep(body[i])) ++i;
    if (i > start) out.push_back(body.substr(start, i - start));
  }
  return out;
}

}  // namespace detail

// Parses one complete, '\n'-terminated line. Never aborts: anything that is not
// a well-formed DATA/PING/PONG line raises ParseError carrying the line.
inline Message parse_line(std::string_view line) {
  auto fail = [&](const char* why) -> ParseError {
    return ParseError(std::string("parse_line: ") + why, std::string(line));
  };
  if (line.empty() || line.back() != '\n') throw fail("line not newline-terminated");
  std::string_view body = line.substr(0, line.size() - 1);
  if (!body.empty() && body.back() == '\r') body.remove_suffix(1);
  for (unsigned char c : body) {
    if ((c < 0x20 && c != '\t') || c == 0x7f) throw fail("control character in line");
  }

  auto fields = detail::split_fields(body);
  if (fields.empty()) throw fail("empty line");

  if (fields[0] == "PING" || fields[0] == "PONG") {
    if (fields.size() != 2) throw fail("PING/PONG takes exactly one nonce");
    if (!valid_nonce(fields[1])) throw fail("invalid nonce");
    if (fields[0] == "PING") return Ping{std::string(fields[1])};
    return Pong{std::string(fields[1])};
  }

  if (fields.size() != 3) throw fail("DATA line needs exactly 3 fields");
  std::array<double, 3> v{};
  for (std::size_t k = 0; k < 3; ++k) {
    const char* first = fields[k].data();
    const char* last = first + fields[k].size();
    auto [ptr, ec] = std::from_chars(first, last, v[k]);
    if (ec != std::errc{} || ptr != last) throw fail("non-numeric field");
    if (!std::isfinite(v[k])) throw fail("non-finite value");
  }
  return Data{v[0], v[1], v[2]};
}

}  // namespace wire
}  // namespace vibemon
