#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vibemon {

// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EncodeError : public Error {
 public:
  using Error::Error;
};

// Wire line that does not match any of the three line types.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string line)
      : Error(what), line_(std::move(line)) {}

  const std::string& line() const noexcept { return line_; }

 private:
  std::string line_;
};

// Operation not legal in the current connection state.
class StateError : public Error {
 public:
  using Error::Error;
};

class ConnectError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed input file; carries the 1-based line (or 0-based element index
// for JSON arrays) that failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t where)
      : Error(what), where_(where) {}

  std::size_t where() const noexcept { return where_; }

 private:
  std::size_t where_;
};

class AnalysisError : public Error {
 public:
  using Error::Error;
};

}  // namespace vibemon
