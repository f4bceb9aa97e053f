#pragma once

// TCP stand-in for the wireless accelerometer node: waits for one client,
// streams DATA lines at the sample rate and answers PINGs in between.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "error.hpp"
#include "net.hpp"
#include "session.hpp"
#include "units.hpp"
#include "waveform.hpp"
#include "wire.hpp"

namespace vibemon {

struct ServerConfig {
  std::string host = "0.0.0.0";
  std::uint16_t port = 8290;  // 0 picks an ephemeral port
  double speed = 1.0;         // pacing multiplier; 1 = real time
  std::chrono::milliseconds lead_in{0};  // quiet time after accept before sample 0
};

class SensorEmulator {
 public:
  // Line for sample n, or nullopt once a finite source is exhausted.
  using Source = std::function<std::optional<std::string>(std::int64_t n)>;

  SensorEmulator(const ServerConfig& cfg, double sample_rate, Source source, bool stop_when_exhausted)
      : cfg_(cfg),
        sample_rate_(sample_rate),
        source_(std::move(source)),
        stop_when_exhausted_(stop_when_exhausted),
        listener_(cfg.host, cfg.port) {
    if (!(sample_rate_ > 0.0)) throw Error("emulator: sample rate must be > 0");
    if (!(cfg_.speed > 0.0)) throw Error("emulator: speed must be > 0");
    if (cfg_.lead_in.count() < 0) throw Error("emulator: lead-in must be >= 0");
  }

  static SensorEmulator synthetic(const ServerConfig& cfg, const WaveformConfig& wave) {
    wave.validate();
    return SensorEmulator(
        cfg, wave.sample_rate,
        [wave](std::int64_t n) -> std::optional<std::string> {
          auto s = synth_sample_at(wave, n);
          return wire::encode_sample(s.ax, s.ay, s.az);
        },
        false);
  }

  // Streams a recorded session once at its recorded rate, then closes.
  static SensorEmulator replay(const ServerConfig& cfg, Session session) {
    auto samples = std::make_shared<const std::vector<GSample>>(std::move(session.samples));
    return SensorEmulator(
        cfg, session.meta.rate_hz,
        [samples](std::int64_t n) -> std::optional<std::string> {
          if (n < 0 || static_cast<std::size_t>(n) >= samples->size()) return std::nullopt;
          const auto& s = (*samples)[static_cast<std::size_t>(n)];
          return wire::encode_sample(to_accel(s.gx), to_accel(s.gy), to_accel(s.gz));
        },
        true);
  }

  SensorEmulator(SensorEmulator&& o) noexcept
      : cfg_(std::move(o.cfg_)),
        sample_rate_(o.sample_rate_),
        source_(std::move(o.source_)),
        stop_when_exhausted_(o.stop_when_exhausted_),
        listener_(std::move(o.listener_)) {}

  std::uint16_t port() const { return listener_.port(); }
  double sample_rate() const { return sample_rate_; }

  // Serves clients until stop() is called, or until a finite source has been
  // delivered to one client.
  void run() {
    while (!stop_.load()) {
      pollfd p{listener_.socket().fd(), POLLIN, 0};
      int n = ::poll(&p, 1, 50);
      if (n <= 0) continue;
      net::Socket client = listener_.accept();
      if (!client) continue;
      clients_served_.fetch_add(1);
      bool exhausted = serve(client);
      client.close();
      if (exhausted && stop_when_exhausted_) return;
    }
  }

  void stop() { stop_.store(true); }

  std::uint64_t lines_sent() const { return lines_sent_.load(); }
  std::uint64_t clients_served() const { return clients_served_.load(); }
  std::uint64_t clients_refused() const { return clients_refused_.load(); }
  std::uint64_t pongs_sent() const { return pongs_sent_.load(); }
  bool client_active() const { return client_active_.load(); }

 private:
  using clock = std::chrono::steady_clock;

  // Returns true when the source ran dry.
  bool serve(const net::Socket& client) {
    struct ActiveFlag {
      std::atomic<bool>& f;
      explicit ActiveFlag(std::atomic<bool>& flag) : f(flag) { f.store(true); }
      ~ActiveFlag() { f.store(false); }
    } active(client_active_);

    const auto interval = std::chrono::duration<double>(1.0 / (sample_rate_ * cfg_.speed));
    const auto start = clock::now() + cfg_.lead_in;
    std::string inbuf;
    std::int64_t n = 0;
    while (!stop_.load()) {
      auto deadline = start + std::chrono::duration_cast<clock::duration>(interval * static_cast<double>(n));
      auto now = clock::now();
      if (now >= deadline) {
        auto line = source_(n);
        if (!line) return true;
        if (!net::send_all(client, *line)) return false;
        lines_sent_.fetch_add(1);
        ++n;
        continue;
      }
      auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now);
      int wait_ms = static_cast<int>(std::min<std::int64_t>(wait.count() + 1, 50));
      pollfd fds[2] = {{client.fd(), POLLIN, 0}, {listener_.socket().fd(), POLLIN, 0}};
      int ready = ::poll(fds, 2, wait_ms);
      if (ready <= 0) continue;
      if (fds[1].revents & POLLIN) {
        // Single active client: extra connections are closed immediately.
        net::Socket extra = listener_.accept();
        if (extra) clients_refused_.fetch_add(1);
      }
      if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
        char chunk[1024];
        ssize_t got = ::recv(client.fd(), chunk, sizeof(chunk), 0);
        if (got <= 0) return false;
        inbuf.append(chunk, static_cast<std::size_t>(got));
        if (!answer_pings(client, inbuf)) return false;
      }
    }
    return false;
  }

  bool answer_pings(const net::Socket& client, std::string& inbuf) {
    std::size_t nl;
    while ((nl = inbuf.find('\n')) != std::string::npos) {
      std::string_view line(inbuf.data(), nl + 1);
      try {
        auto msg = wire::parse_line(line);
        if (auto* ping = std::get_if<wire::Ping>(&msg)) {
          if (!net::send_all(client, wire::encode_pong(ping->nonce))) return false;
          pongs_sent_.fetch_add(1);
        }
      } catch (const ParseError&) {
        // Not ours to answer; ignored.
      }
      inbuf.erase(0, nl + 1);
    }
    if (inbuf.size() > wire::kMaxLine) inbuf.clear();
    return true;
  }

  ServerConfig cfg_;
  double sample_rate_;
  Source source_;
  bool stop_when_exhausted_;
  net::Listener listener_;
  std::atomic<bool> stop_{false};
  std::atomic<bool> client_active_{false};
  std::atomic<std::uint64_t> lines_sent_{0};
  std::atomic<std::uint64_t> clients_served_{0};
  std::atomic<std::uint64_t> clients_refused_{0};
  std::atomic<std::uint64_t> pongs_sent_{0};
};

}  // namespace vibemon
