#pragma once

// HTTP control surface and WebSocket push stream over a Monitor.
//
//   POST   /client/start  {"sensor": "host:port"}
//   POST   /client/stop
//   POST   /view/start
//   POST   /view/stop
//   PUT    /threshold     {"limit_g": 1.2, "rearm_margin_g": 0.1, "rearm_hold_s": 1.0}
//   DELETE /threshold
//   GET    /status
//   POST   /latency       {"trials": 12}
//   GET    /stream        WebSocket; frames {"seq": n, "type": "window|alarm|status", "payload": ...}
//
// Errors come back as {"error": {"kind": ..., "message": ...}} with 400 (bad
// request), 404, 405, 409 (state) or 502 (sensor unreachable).

#include <boost/asio/dispatch.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <chrono>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "latency.hpp"
#include "monitor.hpp"
#include "net.hpp"

namespace vibemon::service {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

struct ServiceConfig {
  std::string host = "0.0.0.0";
  std::uint16_t port = 8080;  // 0 picks an ephemeral port
  std::optional<net::Endpoint> default_sensor;
  double frame_rate_hz = 20.0;
  std::chrono::milliseconds max_backlog{2000};
  int io_threads = 4;
};

inline nlohmann::json alarm_to_json(const AlarmEvent& a) {
  return {{"t", a.t}, {"channel", axis_name(a.channel)}, {"value", a.value}};
}

inline nlohmann::json status_to_json(const Monitor& m) {
  nlohmann::json j;
  j["state"] = state_name(m.state());
  auto sensor = m.sensor();
  j["sensor"] = sensor ? nlohmann::json(sensor->str()) : nlohmann::json();
  j["samples_received"] = m.samples_received();
  auto th = m.threshold();
  j["threshold_g"] = th ? nlohmann::json(th->limit) : nlohmann::json();
  auto alarm = m.last_alarm();
  j["last_alarm"] = alarm ? alarm_to_json(*alarm) : nlohmann::json();
  auto lat = m.last_latency();
  j["latency"] = lat ? latency_to_json(*lat) : nlohmann::json();
  return j;
}

inline nlohmann::json window_to_json(const WindowSnapshot& s) {
  nlohmann::json t = nlohmann::json::array(), gx = nlohmann::json::array(), gy = nlohmann::json::array(),
                 gz = nlohmann::json::array();
  for (const auto& v : s.samples) {
    t.push_back(v.t);
    gx.push_back(v.gx);
    gy.push_back(v.gy);
    gz.push_back(v.gz);
  }
  return {{"t", std::move(t)},
          {"gx", std::move(gx)},
          {"gy", std::move(gy)},
          {"gz", std::move(gz)},
          {"offsets", {{"x", s.offsets.x}, {"y", s.offsets.y}, {"z", s.offsets.z}}}};
}

class WsSession;

// Registry of stream clients, shared between the service, its sessions and
// the monitor observers; outlives whichever goes first.
class Hub {
 public:
  Hub(Monitor& monitor, std::chrono::milliseconds max_backlog) : monitor_(monitor), max_backlog_(max_backlog) {}

  void add(const std::shared_ptr<WsSession>& s) {
    std::lock_guard lk(mu_);
    sessions_.insert(s);
  }
  void remove(const std::shared_ptr<WsSession>& s) {
    std::lock_guard lk(mu_);
    sessions_.erase(s);
  }
  std::size_t client_count() const {
    std::lock_guard lk(mu_);
    return sessions_.size();
  }

  // Posts one frame to every client. Frames posted under this lock reach
  // each client in posting order.
  void broadcast(const char* type, const nlohmann::json& payload);

  void send_window() {
    std::lock_guard order(broadcast_mu_);
    auto snap = monitor_.snapshot();
    broadcast_locked("window", window_to_json(*snap));
  }

  Monitor& monitor() { return monitor_; }
  std::chrono::milliseconds max_backlog() const { return max_backlog_; }

 private:
  void broadcast_locked(const char* type, const nlohmann::json& payload);

  Monitor& monitor_;
  std::chrono::milliseconds max_backlog_;
  mutable std::mutex mu_;
  std::mutex broadcast_mu_;
  std::unordered_set<std::shared_ptr<WsSession>> sessions_;
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  using clock = std::chrono::steady_clock;

  WsSession(tcp::socket&& socket, std::weak_ptr<Hub> hub) : ws_(std::move(socket)), hub_(std::move(hub)) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    // A small send buffer makes a stalled reader show up as backlog quickly.
    beast::get_lowest_layer(ws_).socket().set_option(asio::socket_base::send_buffer_size(64 * 1024));
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

  // Thread-safe.
  void send(const char* type, std::shared_ptr<const std::string> payload) {
    asio::post(ws_.get_executor(), [self = shared_from_this(), type, payload = std::move(payload)] {
      self->enqueue(type, payload);
    });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    auto hub = hub_.lock();
    if (!hub) return;
    hub->add(shared_from_this());
    enqueue("status", std::make_shared<const std::string>(status_to_json(hub->monitor()).dump()));
    do_read();
  }

  void do_read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      drop();
      return;
    }
    buffer_.consume(buffer_.size());  // the stream is one-way; client messages are ignored
    do_read();
  }

  void enqueue(const char* type, const std::shared_ptr<const std::string>& payload) {
    if (closed_) return;
    auto now = clock::now();
    if (!queue_.empty()) {
      auto hub = hub_.lock();
      auto limit = hub ? hub->max_backlog() : std::chrono::milliseconds(2000);
      if (now - queue_.front().queued > limit) {
        drop();
        return;
      }
    }
    std::string text = "{\"seq\":" + std::to_string(++seq_) + ",\"type\":\"" + type + "\",\"payload\":" + *payload + "}";
    queue_.push_back({std::move(text), now});
    if (queue_.size() == 1) do_write();
  }

  void do_write() {
    ws_.text(true);
    ws_.async_write(asio::buffer(queue_.front().text),
                    beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      drop();
      return;
    }
    queue_.pop_front();
    if (!queue_.empty()) do_write();
  }

  void drop() {
    if (closed_) return;
    closed_ = true;
    if (auto hub = hub_.lock()) hub->remove(shared_from_this());
    beast::error_code ec;
    auto& sock = beast::get_lowest_layer(ws_).socket();
    sock.shutdown(tcp::socket::shutdown_both, ec);
    sock.close(ec);
  }

  struct Pending {
    std::string text;
    clock::time_point queued;
  };

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::weak_ptr<Hub> hub_;
  std::deque<Pending> queue_;
  std::uint64_t seq_ = 0;
  bool closed_ = false;
};

inline void Hub::broadcast(const char* type, const nlohmann::json& payload) {
  std::lock_guard order(broadcast_mu_);
  broadcast_locked(type, payload);
}

inline void Hub::broadcast_locked(const char* type, const nlohmann::json& payload) {
  auto text = std::make_shared<const std::string>(payload.dump());
  std::vector<std::shared_ptr<WsSession>> targets;
  {
    std::lock_guard lk(mu_);
    targets.assign(sessions_.begin(), sessions_.end());
  }
  for (const auto& s : targets) s->send(type, text);
}

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

// Maps one request onto monitor calls. Blocking; runs on an io thread.
class Router {
 public:
  Router(Monitor& monitor, std::optional<net::Endpoint> default_sensor)
      : monitor_(monitor), default_sensor_(std::move(default_sensor)) {}

  Response handle(const Request& req) const {
    std::string path(req.target());
    if (auto q = path.find('?'); q != std::string::npos) path.resize(q);
    const auto method = req.method();
    if (method == http::verb::options) return reply(req, http::status::no_content, nullptr);

    try {
      if (path == "/status") {
        if (method != http::verb::get) return method_not_allowed(req);
        return ok(req);
      }
      if (path == "/client/start") {
        if (method != http::verb::post) return method_not_allowed(req);
        auto body = parse_body(req);
        std::optional<net::Endpoint> ep = default_sensor_;
        if (body.contains("sensor")) {
          if (!body["sensor"].is_string()) throw BadRequest("'sensor' must be a \"host:port\" string");
          ep = net::parse_endpoint(body["sensor"].get<std::string>());
        }
        if (!ep) throw BadRequest("missing 'sensor'");
        monitor_.client_start(*ep);
        return ok(req);
      }
      if (path == "/client/stop") {
        if (method != http::verb::post) return method_not_allowed(req);
        monitor_.client_stop();
        return ok(req);
      }
      if (path == "/view/start") {
        if (method != http::verb::post) return method_not_allowed(req);
        monitor_.view_start();
        return ok(req);
      }
      if (path == "/view/stop") {
        if (method != http::verb::post) return method_not_allowed(req);
        monitor_.view_stop();
        return ok(req);
      }
      if (path == "/threshold") {
        if (method == http::verb::delete_) {
          monitor_.clear_threshold();
          return ok(req);
        }
        if (method != http::verb::put) return method_not_allowed(req);
        auto body = parse_body(req);
        if (!body.contains("limit_g") || !body["limit_g"].is_number()) throw BadRequest("missing numeric 'limit_g'");
        ThresholdConfig cfg;
        cfg.limit = body["limit_g"].get<double>();
        if (body.contains("rearm_margin_g")) cfg.rearm_margin = number(body, "rearm_margin_g");
        if (body.contains("rearm_hold_s")) cfg.rearm_hold = number(body, "rearm_hold_s");
        monitor_.set_threshold(cfg);
        return ok(req);
      }
      if (path == "/latency") {
        if (method != http::verb::post) return method_not_allowed(req);
        auto body = parse_body(req);
        std::size_t trials = 12;
        if (body.contains("trials")) {
          if (!body["trials"].is_number_unsigned() || body["trials"].get<std::size_t>() == 0) {
            throw BadRequest("'trials' must be a positive integer");
          }
          trials = body["trials"].get<std::size_t>();
        }
        auto report = monitor_.measure_latency(trials);
        return reply(req, http::status::ok, latency_to_json(report));
      }
      return error(req, http::status::not_found, "not_found", "no route for " + path);
    } catch (const BadRequest& e) {
      return error(req, http::status::bad_request, "bad_request", e.what());
    } catch (const StateError& e) {
      return error(req, http::status::conflict, "state", e.what());
    } catch (const ConnectError& e) {
      return error(req, http::status::bad_gateway, "connect", e.what());
    } catch (const Error& e) {
      return error(req, http::status::bad_request, "bad_request", e.what());
    }
  }

 private:
  struct BadRequest : Error {
    using Error::Error;
  };

  static nlohmann::json parse_body(const Request& req) {
    if (req.body().empty()) return nlohmann::json::object();
    auto j = nlohmann::json::parse(req.body(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw BadRequest("body must be a JSON object");
    return j;
  }

  static double number(const nlohmann::json& body, const char* key) {
    if (!body[key].is_number()) throw BadRequest(std::string("'") + key + "' must be a number");
    return body[key].get<double>();
  }

  static Response reply(const Request& req, http::status status, const nlohmann::json& body) {
    Response res{status, req.version()};
    res.set(http::field::server, "vibemon");
    res.set(http::field::access_control_allow_origin, "*");
    res.set(http::field::access_control_allow_methods, "GET, POST, PUT, DELETE, OPTIONS");
    res.set(http::field::access_control_allow_headers, "Content-Type");
    if (!body.is_null()) {
      res.set(http::field::content_type, "application/json");
      res.body() = body.dump();
    }
    res.keep_alive(req.keep_alive());
    res.prepare_payload();
    return res;
  }

  Response ok(const Request& req) const { return reply(req, http::status::ok, status_to_json(monitor_)); }

  static Response error(const Request& req, http::status status, const char* kind, const std::string& message) {
    return reply(req, status, {{"error", {{"kind", kind}, {"message", message}}}});
  }

  static Response method_not_allowed(const Request& req) {
    return error(req, http::status::method_not_allowed, "method_not_allowed",
                 std::string(req.method_string()) + " not allowed on " + std::string(req.target()));
  }

  Monitor& monitor_;
  std::optional<net::Endpoint> default_sensor_;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, const Router& router, std::weak_ptr<Hub> hub)
      : stream_(std::move(socket)), router_(router), hub_(std::move(hub)) {}

  void run() {
    asio::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::do_read, shared_from_this()));
  }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (ec) return;
    std::string path(req_.target());
    if (websocket::is_upgrade(req_) && path.substr(0, path.find('?')) == "/stream") {
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), hub_)->run(std::move(req_));
      return;
    }
    res_ = std::make_shared<Response>(router_.handle(req_));
    http::async_write(stream_, *res_,
                      beast::bind_front_handler(&HttpSession::on_write, shared_from_this(), res_->need_eof()));
  }

  void on_write(bool close, beast::error_code ec, std::size_t) {
    if (ec) return;
    if (close) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    res_.reset();
    do_read();
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  const Router& router_;
  std::weak_ptr<Hub> hub_;
  Request req_;
  std::shared_ptr<Response> res_;
};

class ControlService {
 public:
  // Binds immediately; throws IoError if the address is unavailable.
  ControlService(Monitor& monitor, ServiceConfig cfg)
      : cfg_(std::move(cfg)),
        ioc_(cfg_.io_threads),
        acceptor_(ioc_),
        hub_(std::make_shared<Hub>(monitor, cfg_.max_backlog)),
        router_(monitor, cfg_.default_sensor) {
    beast::error_code ec;
    auto addr = asio::ip::make_address(cfg_.host == "localhost" ? "127.0.0.1" : cfg_.host, ec);
    if (ec) throw IoError("invalid bind address '" + cfg_.host + "'");
    tcp::endpoint ep(addr, cfg_.port);
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) throw IoError("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port) + ": " + ec.message());

    std::weak_ptr<Hub> weak = hub_;
    MonitorObserver obs;
    obs.on_alarm = [weak](const AlarmEvent& a) {
      if (auto hub = weak.lock()) hub->broadcast("alarm", alarm_to_json(a));
    };
    obs.on_state = [weak](ConnectionState) {
      if (auto hub = weak.lock()) hub->broadcast("status", status_to_json(hub->monitor()));
    };
    monitor.add_observer(std::move(obs));
  }

  ~ControlService() { stop(); }

  ControlService(const ControlService&) = delete;
  ControlService& operator=(const ControlService&) = delete;

  std::uint16_t port() const { return acceptor_.local_endpoint().port(); }
  std::size_t stream_clients() const { return hub_->client_count(); }

  void start() {
    if (running_.exchange(true)) return;
    do_accept();
    for (int i = 0; i < std::max(1, cfg_.io_threads); ++i) threads_.emplace_back([this] { ioc_.run(); });
    broadcaster_ = std::jthread([this](std::stop_token st) { broadcast_loop(st); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    broadcaster_.request_stop();
    if (broadcaster_.joinable()) broadcaster_.join();
    ioc_.stop();
    for (auto& t : threads_) t.join();
    threads_.clear();
  }

 private:
  void do_accept() {
    acceptor_.async_accept(asio::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
      if (!ec) std::make_shared<HttpSession>(std::move(socket), router_, hub_)->run();
      if (acceptor_.is_open()) do_accept();
    });
  }

  void broadcast_loop(std::stop_token st) {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / cfg_.frame_rate_hz));
    auto next = clock::now();
    while (!st.stop_requested()) {
      hub_->send_window();
      next += period;
      auto now = clock::now();
      if (next < now) next = now;  // skip missed ticks instead of bursting
      std::this_thread::sleep_until(next);
    }
  }

  ServiceConfig cfg_;
  asio::io_context ioc_;
  tcp::acceptor acceptor_;
  std::shared_ptr<Hub> hub_;
  Router router_;
  std::atomic<bool> running_{false};
  std::vector<std::thread> threads_;
  std::jthread broadcaster_;
};

}  // namespace vibemon::service
