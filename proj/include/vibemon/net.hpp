#pragma once

// Minimal blocking TCP plumbing over POSIX sockets.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "error.hpp"

namespace vibemon::net {

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

// "host:port" -> Endpoint. Port must be in [1, 65535] unless allow_zero.
inline Endpoint parse_endpoint(std::string_view text, bool allow_zero = false) {
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size()) {
    throw Error("expected host:port, got '" + std::string(text) + "'");
  }
  std::string host(text.substr(0, colon));
  if (host.size() > 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  std::string port_text(text.substr(colon + 1));
  long port = 0;
  try {
    std::size_t used = 0;
    port = std::stol(port_text, &used);
    if (used != port_text.size()) throw Error("bad port");
  } catch (const std::exception&) {
    throw Error("invalid port in '" + std::string(text) + "'");
  }
  if (port < (allow_zero ? 0 : 1) || port > 65535) {
    throw Error("port out of range in '" + std::string(text) + "'");
  }
  return Endpoint{host, static_cast<std::uint16_t>(port)};
}

inline std::string errno_text(int err) { return std::strerror(err); }

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { close(); }

  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  explicit operator bool() const { return valid(); }

  void close() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  // Wakes any thread blocked on this socket without releasing the descriptor.
  void shutdown() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_ = -1;
};

inline void set_nodelay(const Socket& s) {
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

// Writes the whole buffer. Returns false if the peer is gone.
inline bool send_all(const Socket& s, std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::send(s.fd(), data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

inline sockaddr_in resolve_ipv4(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  std::string h = (host.empty() || host == "*") ? "0.0.0.0" : host;
  if (h == "localhost") h = "127.0.0.1";
  if (::inet_pton(AF_INET, h.c_str(), &addr.sin_addr) == 1) return addr;

  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(h.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw ConnectError("cannot resolve host '" + host + "'");
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return addr;
}

// Bound, listening IPv4 socket. Port 0 picks an ephemeral port.
class Listener {
 public:
  Listener(const std::string& host, std::uint16_t port, int backlog = 4) {
    sockaddr_in addr = resolve_ipv4(host, port);
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!s) throw IoError("socket(): " + errno_text(errno));
    int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      throw IoError("cannot bind " + host + ":" + std::to_string(port) + ": " + errno_text(errno));
    }
    if (::listen(s.fd(), backlog) != 0) throw IoError("listen(): " + errno_text(errno));
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
    sock_ = std::move(s);
  }

  std::uint16_t port() const { return port_; }
  const Socket& socket() const { return sock_; }

  Socket accept() const {
    int fd = ::accept4(sock_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) return Socket{};
    Socket s(fd);
    set_nodelay(s);
    return s;
  }

 private:
  Socket sock_;
  std::uint16_t port_ = 0;
};

// Blocking connect with a timeout.
inline Socket connect_tcp(const Endpoint& ep, std::chrono::milliseconds timeout = std::chrono::seconds(2)) {
  sockaddr_in addr = resolve_ipv4(ep.host, ep.port);
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s) throw ConnectError("socket(): " + errno_text(errno));
  int flags = ::fcntl(s.fd(), F_GETFL, 0);
  ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
  if (rc != 0 && errno != EINPROGRESS) {
    throw ConnectError("cannot connect to " + ep.str() + ": " + errno_text(errno));
  }
  if (rc != 0) {
    pollfd p{s.fd(), POLLOUT, 0};
    int n = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (n == 0) throw ConnectError("timed out connecting to " + ep.str());
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (n < 0 || err != 0) {
      throw ConnectError("cannot connect to " + ep.str() + ": " + errno_text(n < 0 ? errno : err));
    }
  }
  ::fcntl(s.fd(), F_SETFL, flags);
  set_nodelay(s);
  return s;
}

// Splits a byte stream into '\n'-terminated lines.
class LineReader {
 public:
  enum class Status { line, timeout, closed, overlong };

  explicit LineReader(const Socket& s, std::size_t max_line = 4096) : sock_(&s), max_line_(max_line) {}

  // Waits up to `timeout` for a full line (negative: forever). The returned line
  // keeps its terminating '\n'.
  Status read_line(std::string& line, std::chrono::milliseconds timeout) {
    auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto nl = buf_.find('\n'); nl != std::string::npos) {
        line.assign(buf_, 0, nl + 1);
        buf_.erase(0, nl + 1);
        return Status::line;
      }
      if (buf_.size() > max_line_) {
        buf_.clear();
        return Status::overlong;
      }
      int wait_ms = -1;
      if (timeout.count() >= 0) {
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) return Status::timeout;
        wait_ms = static_cast<int>(left.count());
      }
      pollfd p{sock_->fd(), POLLIN, 0};
      int n = ::poll(&p, 1, wait_ms);
      if (n < 0) {
        if (errno == EINTR) continue;
        return Status::closed;
      }
      if (n == 0) return Status::timeout;
      char chunk[4096];
      ssize_t got = ::recv(sock_->fd(), chunk, sizeof(chunk), 0);
      if (got < 0 && errno == EINTR) continue;
      if (got <= 0) return Status::closed;
      buf_.append(chunk, static_cast<std::size_t>(got));
    }
  }

  bool has_buffered_line() const { return buf_.find('\n') != std::string::npos; }

 private:
  const Socket* sock_;
  std::size_t max_line_;
  std::string buf_;
};

}  // namespace vibemon::net
