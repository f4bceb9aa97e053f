#pragma once

// Client side of the monitoring pipeline.
//
// State machine (every other call raises StateError and changes nothing):
//
//   DISCONNECTED --client_start--> CONNECTED --view_start--> VIEWING
//   CONNECTED    --client_stop --> DISCONNECTED     (lines flatten to zero)
//   VIEWING      --client_stop --> DISCONNECTED     (lines flatten to zero)
//   VIEWING      --view_stop   --> CONNECTED        (lines zeroed, socket kept)
//   CONNECTED/VIEWING --socket loss--> DISCONNECTED
//
// Data is parsed whenever connected but only reaches the plot window while
// viewing. One ingest thread writes; readers get immutable snapshots.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "error.hpp"
#include "latency.hpp"
#include "net.hpp"
#include "plot_window.hpp"
#include "session.hpp"
#include "threshold.hpp"
#include "wire.hpp"

namespace vibemon {

enum class ConnectionState { disconnected, connected, viewing };

inline const char* state_name(ConnectionState s) {
  switch (s) {
    case ConnectionState::disconnected: return "DISCONNECTED";
    case ConnectionState::connected: return "CONNECTED";
    case ConnectionState::viewing: return "VIEWING";
  }
  return "?";
}

struct WindowSnapshot {
  std::uint64_t version = 0;
  ConnectionState state = ConnectionState::disconnected;
  std::vector<GSample> samples;
  ChannelOffsets offsets;
  std::uint64_t pushed = 0;  // samples pushed since the last view_start

  RenderModel render() const {
    PlotWindow w(std::max<std::size_t>(samples.size(), 1), offsets);
    for (const auto& s : samples) w.push(s);
    return w.render();
  }

  bool all_zero() const {
    for (const auto& s : samples) {
      if (s.gx != 0.0 || s.gy != 0.0 || s.gz != 0.0) return false;
    }
    return true;
  }
};

struct MonitorOptions {
  std::size_t capacity = PlotWindow::kDefaultCapacity;
  ChannelOffsets offsets;
  double nominal_rate_hz = 20.0;
  std::chrono::milliseconds connect_timeout{2000};
};

struct LatencyOptions {
  std::chrono::milliseconds spacing{100};
  std::chrono::milliseconds timeout{5000};
};

// Hooks invoked from the ingest or control thread, never under the monitor's locks.
struct MonitorObserver {
  std::function<void(const GSample&)> on_sample;
  std::function<void(const AlarmEvent&)> on_alarm;
  std::function<void(ConnectionState)> on_state;
};

namespace detail {

inline std::string make_nonce(std::uint64_t counter) {
  static thread_local std::mt19937_64 rng(std::random_device{}());
  return "p" + std::to_string(counter) + "-" + std::to_string(rng() % 1000000);
}

// Shared PING loop. `send` transmits a PING line; `await` blocks for the PONG
// with the given nonce and returns its arrival time, or nullopt on timeout.
template <typename Send, typename Await>
LatencyReport run_latency_probe(std::size_t trials, const LatencyOptions& opts, Send&& send, Await&& await) {
  if (trials == 0) throw Error("latency: trial count must be positive");
  using clock = std::chrono::steady_clock;
  std::vector<double> rtts;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    if (i > 0) std::this_thread::sleep_for(opts.spacing);
    std::string nonce = make_nonce(i);
    auto sent = clock::now();
    if (!send(wire::encode_ping(nonce))) {
      ++failed;
      continue;
    }
    std::optional<clock::time_point> got = await(nonce, sent + opts.timeout);
    if (!got) {
      ++failed;
      continue;
    }
    rtts.push_back(std::chrono::duration<double>(*got - sent).count());
  }
  if (failed * 2 >= trials || rtts.empty()) {
    throw Error("latency probe failed: " + std::to_string(failed) + " of " + std::to_string(trials) +
                " trials timed out");
  }
  return summarize_latency(std::move(rtts), failed);
}

}  // namespace detail

// Standalone probe over its own connection.
inline LatencyReport measure_latency(const net::Endpoint& ep, std::size_t trials = 12,
                                     const LatencyOptions& opts = {}) {
  using clock = std::chrono::steady_clock;
  net::Socket sock = net::connect_tcp(ep);
  net::LineReader reader(sock);
  auto send = [&](const std::string& line) { return net::send_all(sock, line); };
  auto await = [&](const std::string& nonce, clock::time_point deadline) -> std::optional<clock::time_point> {
    std::string line;
    for (;;) {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
      if (left.count() <= 0) return std::nullopt;
      auto st = reader.read_line(line, left);
      if (st == net::LineReader::Status::timeout) return std::nullopt;
      if (st == net::LineReader::Status::closed) {
        throw ConnectError("latency probe: connection closed by " + ep.str());
      }
      if (st != net::LineReader::Status::line) continue;
      auto now = clock::now();
      try {
        auto msg = wire::parse_line(line);
        if (auto* pong = std::get_if<wire::Pong>(&msg); pong && pong->nonce == nonce) return now;
      } catch (const ParseError&) {
      }
    }
  };
  return detail::run_latency_probe(trials, opts, send, await);
}

class Monitor {
 public:
  explicit Monitor(MonitorOptions opts = {}) : opts_(opts), window_(opts.capacity, opts.offsets) {
    publish_locked();
  }

  ~Monitor() { shutdown_ingest(); }

  Monitor(const Monitor&) = delete;
  Monitor& operator=(const Monitor&) = delete;

  void add_observer(MonitorObserver obs) {
    std::lock_guard lk(obs_mu_);
    auto next = std::make_shared<std::vector<MonitorObserver>>(observers_ ? *observers_ : std::vector<MonitorObserver>{});
    next->push_back(std::move(obs));
    observers_ = std::move(next);
  }

  // Client Start.
  void client_start(const net::Endpoint& ep) {
    std::lock_guard ctl(control_mu_);
    if (state() != ConnectionState::disconnected) throw StateError("client_start: already connected");
    shutdown_ingest();  // reap a thread left behind by socket loss
    net::Socket sock = net::connect_tcp(ep, opts_.connect_timeout);
    {
      std::scoped_lock lk(data_mu_, write_mu_);
      sock_ = std::move(sock);
      sensor_ = ep;
      received_ = 0;
      parse_errors_ = 0;
      window_.clear();
      state_ = ConnectionState::connected;
      publish_locked();
    }
    ingest_ = std::jthread([this](std::stop_token st) { ingest_loop(st); });
    notify_state(ConnectionState::connected);
  }

  // Client Stop: closes the socket and flattens the plot lines.
  void client_stop() {
    std::lock_guard ctl(control_mu_);
    if (state() == ConnectionState::disconnected) throw StateError("client_stop: not connected");
    shutdown_ingest();
    {
      std::scoped_lock lk(data_mu_, write_mu_);
      sock_.close();
      window_.flatten();
      state_ = ConnectionState::disconnected;
      publish_locked();
    }
    flush_recording();
    notify_state(ConnectionState::disconnected);
  }

  // View Start: begins pushing converted samples; t restarts at 0.
  void view_start() {
    std::lock_guard ctl(control_mu_);
    auto s = state();
    if (s == ConnectionState::disconnected) throw StateError("view_start: not connected");
    if (s == ConnectionState::viewing) throw StateError("view_start: already viewing");
    {
      std::lock_guard lk(data_mu_);
      window_.clear();
      alarm_state_ = AlarmState{};
      pushed_ = 0;
      last_t_ = 0.0;
      view_origin_ = std::chrono::steady_clock::now();
      state_ = ConnectionState::viewing;
      publish_locked();
    }
    notify_state(ConnectionState::viewing);
  }

  // View Stop: zeroes the lines but keeps the connection.
  void view_stop() {
    std::lock_guard ctl(control_mu_);
    if (state() != ConnectionState::viewing) throw StateError("view_stop: not viewing");
    {
      std::lock_guard lk(data_mu_);
      window_.flatten();
      state_ = ConnectionState::connected;
      publish_locked();
    }
    flush_recording();
    notify_state(ConnectionState::connected);
  }

  void set_threshold(const ThresholdConfig& cfg) {
    cfg.validate();
    std::lock_guard ctl(control_mu_);
    std::lock_guard lk(data_mu_);
    threshold_ = cfg;
    alarm_state_ = AlarmState{};
  }

  void clear_threshold() {
    std::lock_guard ctl(control_mu_);
    std::lock_guard lk(data_mu_);
    threshold_.reset();
  }

  // Starts appending every pushed sample to a JSONL session. Requires VIEWING.
  void start_recording(std::unique_ptr<SessionWriter> writer) {
    std::lock_guard ctl(control_mu_);
    if (state() != ConnectionState::viewing) throw StateError("record: view is not active");
    std::lock_guard lk(record_mu_);
    recorder_ = std::move(writer);
  }

  void start_recording(const std::string& path) {
    start_recording(std::make_unique<SessionWriter>(path, session_meta()));
  }

  // Detaches the recorder; returns the number of samples written.
  std::size_t stop_recording() {
    std::lock_guard lk(record_mu_);
    std::size_t n = 0;
    if (recorder_) {
      recorder_->flush();
      n = recorder_->count();
      recorder_.reset();
    }
    return n;
  }

  SessionMeta session_meta() const {
    std::lock_guard lk(data_mu_);
    SessionMeta m;
    m.sensor = sensor_ ? sensor_->str() : "";
    m.rate_hz = opts_.nominal_rate_hz;
    m.started_unix_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::system_clock::now().time_since_epoch())
                            .count();
    if (threshold_) m.threshold_g = threshold_->limit;
    return m;
  }

  // PING/PONG probe over the live connection. The ingest thread routes the
  // matching PONG back here.
  LatencyReport measure_latency(std::size_t trials = 12, const LatencyOptions& opts = {}) {
    using clock = std::chrono::steady_clock;
    if (state() == ConnectionState::disconnected) throw StateError("measure_latency: not connected");
    std::lock_guard probe(latency_mu_);
    auto send = [&](const std::string& line) {
      {
        // Arm before sending; the PONG may arrive before await() runs.
        std::lock_guard lk(probe_mu_);
        pending_nonce_ = line.substr(5, line.size() - 6);
        pong_at_.reset();
      }
      std::lock_guard lk(write_mu_);
      return net::send_all(sock_, line);
    };
    auto await = [&](const std::string&, clock::time_point deadline) -> std::optional<clock::time_point> {
      std::unique_lock lk(probe_mu_);
      bool ok = probe_cv_.wait_until(lk, deadline, [&] { return pong_at_.has_value(); });
      pending_nonce_.clear();
      if (!ok) return std::nullopt;
      return pong_at_;
    };
    auto report = detail::run_latency_probe(trials, opts, send, await);
    std::lock_guard lk(data_mu_);
    last_latency_ = report;
    return report;
  }

  ConnectionState state() const {
    std::lock_guard lk(data_mu_);
    return state_;
  }

  std::shared_ptr<const WindowSnapshot> snapshot() const {
    std::lock_guard lk(data_mu_);
    return snapshot_;
  }

  std::uint64_t samples_received() const { return received_.load(); }
  std::uint64_t parse_errors() const { return parse_errors_.load(); }

  std::optional<ThresholdConfig> threshold() const {
    std::lock_guard lk(data_mu_);
    return threshold_;
  }
  std::optional<AlarmEvent> last_alarm() const {
    std::lock_guard lk(data_mu_);
    return last_alarm_;
  }
  std::optional<LatencyReport> last_latency() const {
    std::lock_guard lk(data_mu_);
    return last_latency_;
  }
  std::optional<net::Endpoint> sensor() const {
    std::lock_guard lk(data_mu_);
    return sensor_;
  }

 private:
  void shutdown_ingest() {
    if (ingest_.joinable()) {
      ingest_.request_stop();
      sock_.shutdown();
      ingest_.join();
    }
  }

  void ingest_loop(std::stop_token st) {
    net::LineReader reader(sock_, wire::kMaxLine);
    std::string line;
    while (!st.stop_requested()) {
      auto status = reader.read_line(line, std::chrono::milliseconds(100));
      if (st.stop_requested()) return;
      if (status == net::LineReader::Status::timeout) continue;
      if (status == net::LineReader::Status::overlong) {
        parse_errors_.fetch_add(1);
        continue;
      }
      if (status == net::LineReader::Status::closed) {
        on_socket_loss();
        return;
      }
      auto arrival = std::chrono::steady_clock::now();
      wire::Message msg;
      try {
        msg = wire::parse_line(line);
      } catch (const ParseError&) {
        parse_errors_.fetch_add(1);
        continue;
      }
      if (auto* d = std::get_if<wire::Data>(&msg)) {
        on_data(*d, arrival);
      } else if (auto* pong = std::get_if<wire::Pong>(&msg)) {
        std::lock_guard lk(probe_mu_);
        if (!pending_nonce_.empty() && pong->nonce == pending_nonce_ && !pong_at_) {
          pong_at_ = arrival;
          probe_cv_.notify_all();
        }
      }
    }
  }

  // Alarm observers run before the snapshot holding the breaching sample is
  // published, so an alarm is never announced after a window showing it.
  void on_data(const wire::Data& d, std::chrono::steady_clock::time_point arrival) {
    GSample g;
    std::vector<AlarmEvent> alarms;
    {
      std::lock_guard lk(data_mu_);
      received_.fetch_add(1);
      if (state_ != ConnectionState::viewing) return;
      double t = std::chrono::duration<double>(arrival - view_origin_).count();
      if (t < last_t_) t = last_t_;
      last_t_ = t;
      g = to_gsample(t, d.ax, d.ay, d.az);
      window_.push(g);
      ++pushed_;
      if (threshold_) {
        alarms = check_threshold(g, *threshold_, alarm_state_);
        if (!alarms.empty()) last_alarm_ = alarms.back();
      }
      if (alarms.empty()) publish_locked();
    }
    auto obs = observers();
    if (!alarms.empty()) {
      for (const auto& a : alarms) {
        for (const auto& o : *obs) {
          if (o.on_alarm) o.on_alarm(a);
        }
      }
      std::lock_guard lk(data_mu_);
      publish_locked();
    }
    {
      std::lock_guard lk(record_mu_);
      if (recorder_) {
        try {
          recorder_->append(g);
        } catch (const IoError&) {
          recorder_.reset();
        }
      }
    }
    for (const auto& o : *obs) {
      if (o.on_sample) o.on_sample(g);
    }
  }

  void on_socket_loss() {
    {
      std::lock_guard lk(data_mu_);
      if (state_ == ConnectionState::disconnected) return;
      window_.flatten();
      state_ = ConnectionState::disconnected;
      publish_locked();
    }
    flush_recording();
    notify_state(ConnectionState::disconnected);
  }

  void flush_recording() {
    std::lock_guard lk(record_mu_);
    if (recorder_) recorder_->flush();
  }

  void publish_locked() {
    auto snap = std::make_shared<WindowSnapshot>();
    snap->version = ++version_;
    snap->state = state_;
    snap->samples = window_.samples();
    snap->offsets = window_.offsets();
    snap->pushed = pushed_;
    snapshot_ = std::move(snap);
  }

  std::shared_ptr<const std::vector<MonitorObserver>> observers() const {
    std::lock_guard lk(obs_mu_);
    if (!observers_) return std::make_shared<const std::vector<MonitorObserver>>();
    return observers_;
  }

  void notify_state(ConnectionState s) {
    auto obs = observers();
    for (const auto& o : *obs) {
      if (o.on_state) o.on_state(s);
    }
  }

  MonitorOptions opts_;

  std::mutex control_mu_;
  mutable std::mutex data_mu_;
  ConnectionState state_ = ConnectionState::disconnected;
  PlotWindow window_;
  std::shared_ptr<const WindowSnapshot> snapshot_;
  std::uint64_t version_ = 0;
  std::uint64_t pushed_ = 0;
  double last_t_ = 0.0;
  std::chrono::steady_clock::time_point view_origin_{};
  std::optional<ThresholdConfig> threshold_;
  AlarmState alarm_state_;
  std::optional<AlarmEvent> last_alarm_;
  std::optional<LatencyReport> last_latency_;
  std::optional<net::Endpoint> sensor_;
  std::atomic<std::uint64_t> received_{0};
  std::atomic<std::uint64_t> parse_errors_{0};

  net::Socket sock_;
  std::mutex write_mu_;
  std::jthread ingest_;

  std::mutex latency_mu_;
  std::mutex probe_mu_;
  std::condition_variable probe_cv_;
  std::string pending_nonce_;
  std::optional<std::chrono::steady_clock::time_point> pong_at_;

  std::mutex record_mu_;
  std::unique_ptr<SessionWriter> recorder_;

  mutable std::mutex obs_mu_;
  std::shared_ptr<const std::vector<MonitorObserver>> observers_;
};

}  // namespace vibemon
