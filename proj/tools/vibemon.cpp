// vibemon: emulator, monitor, analysis and control service in one binary.

#include <vibemon/control_service.hpp>
#include <vibemon/emulator.hpp>
#include <vibemon/gaze.hpp>
#include <vibemon/monitor.hpp>
#include <vibemon/report.hpp>

#include <CLI11.hpp>

#include <charconv>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>

using namespace vibemon;
using nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

void install_signal_handlers() {
  struct sigaction sa {};
  sa.sa_handler = on_signal;
  sigemptyset(&sa.sa_mask);
  sigaction(SIGINT, &sa, nullptr);
  sigaction(SIGTERM, &sa, nullptr);
  std::signal(SIGPIPE, SIG_IGN);
}

enum class Level { error, warn, info, debug };
Level g_level = Level::info;

void log(Level level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= g_level) std::cerr << "vibemon: " << names[static_cast<int>(level)] << ": " << msg << '\n';
}

// Bad flag value caught after parsing; reported like a parse error.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Format { text, json };

struct Globals {
  Format format = Format::text;
  std::string log_level = "info";
};

std::mutex g_out_mu;

void emit(const json& j) {
  std::lock_guard lk(g_out_mu);
  std::cout << j.dump() << '\n' << std::flush;
}

void emit_text(const std::string& line) {
  std::lock_guard lk(g_out_mu);
  std::cout << line << '\n' << std::flush;
}

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

// Sleeps until a signal, the optional duration, or `done` returns true.
void wait_until_stopped(std::optional<double> duration_s, const std::function<bool()>& done = {}) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  while (!g_stop.load()) {
    if (duration_s && std::chrono::duration<double>(clock::now() - start).count() >= *duration_s) return;
    if (done && done()) return;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

net::Endpoint endpoint_flag(const std::string& text, const char* flag, bool allow_zero = false) {
  try {
    return net::parse_endpoint(text, allow_zero);
  } catch (const Error& e) {
    throw UsageError(std::string(flag) + ": " + e.what());
  }
}

// Runs an emulator until it finishes on its own, a signal arrives, or the
// duration elapses.
void run_emulator(SensorEmulator& emu, std::optional<double> duration_s) {
  std::atomic<bool> finished{false};
  std::jthread watcher([&] {
    wait_until_stopped(duration_s, [&] { return finished.load(); });
    emu.stop();
  });
  emu.run();
  finished.store(true);
}

json emulator_report(const SensorEmulator& emu) {
  return {{"port", emu.port()},
          {"lines_sent", emu.lines_sent()},
          {"clients_served", emu.clients_served()},
          {"clients_refused", emu.clients_refused()},
          {"pongs_sent", emu.pongs_sent()}};
}

void print_emulator_report(const Globals& g, const SensorEmulator& emu) {
  auto r = emulator_report(emu);
  if (g.format == Format::json) {
    emit(r);
  } else {
    emit_text("lines sent: " + std::to_string(emu.lines_sent()) + ", clients served: " +
              std::to_string(emu.clients_served()) + ", refused: " + std::to_string(emu.clients_refused()) +
              ", pongs: " + std::to_string(emu.pongs_sent()));
  }
}

// --- emulate ---------------------------------------------------------------

struct EmulateArgs {
  WaveformConfig wave;
  std::string axis = "z";
  std::string bind = "0.0.0.0";
  int port = 8290;
  double speed = 1.0;
  std::optional<double> duration;
};

void add_emulate(CLI::App& app, EmulateArgs& a) {
  auto* sub = app.add_subcommand("emulate", "Serve a synthetic shaker signal over TCP");
  sub->add_option("--freq", a.wave.frequency, "Drive frequency in Hz")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--amp", a.wave.amplitude, "Drive amplitude in G")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--dwell", a.wave.dwell_fraction, "Fraction of each cycle held at the extremes")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 0.999));
  sub->add_option("--noise", a.wave.noise_std, "Gaussian noise std in G per axis")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--axis", a.axis, "Driven axis")->capture_default_str()->check(CLI::IsMember({"x", "y", "z"}));
  sub->add_option("--port", a.port, "TCP port (0 picks one)")->capture_default_str()->check(CLI::Range(0, 65535));
  sub->add_option("--rate", a.wave.sample_rate, "Samples per second")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--seed", a.wave.seed, "Noise seed")->capture_default_str();
  sub->add_option("--bind", a.bind, "Listen address")->capture_default_str();
  sub->add_option("--speed", a.speed, "Pacing multiplier (1 = real time)")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--duration", a.duration, "Stop after this many seconds")->check(CLI::PositiveNumber);
}

int cmd_emulate(const Globals& g, EmulateArgs& a) {
  a.wave.axis = parse_axis(a.axis);
  try {
    a.wave.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  ServerConfig cfg;
  cfg.host = a.bind;
  cfg.port = static_cast<std::uint16_t>(a.port);
  cfg.speed = a.speed;
  auto emu = SensorEmulator::synthetic(cfg, a.wave);
  log(Level::info, "emulating " + fmt(a.wave.frequency, 3) + " Hz on " + a.axis + " at " + a.bind + ":" +
                       std::to_string(emu.port()));
  run_emulator(emu, a.duration);
  print_emulator_report(g, emu);
  return 0;
}

// --- replay ----------------------------------------------------------------

struct ReplayArgs {
  std::string session;
  std::string bind = "0.0.0.0";
  int port = 8290;
  double speed = 1.0;
  double lead_in = 0.5;
};

void add_replay(CLI::App& app, ReplayArgs& a) {
  auto* sub = app.add_subcommand("replay", "Serve a recorded session once over TCP, then exit");
  sub->add_option("--session", a.session, "Session JSONL file")->required();
  sub->add_option("--port", a.port, "TCP port (0 picks one)")->capture_default_str()->check(CLI::Range(0, 65535));
  sub->add_option("--bind", a.bind, "Listen address")->capture_default_str();
  sub->add_option("--speed", a.speed, "Pacing multiplier (1 = recorded rate)")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--lead-in", a.lead_in, "Seconds between accepting the client and the first sample")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
}

int cmd_replay(const Globals& g, const ReplayArgs& a) {
  auto session = load_session(a.session);
  ServerConfig cfg;
  cfg.host = a.bind;
  cfg.port = static_cast<std::uint16_t>(a.port);
  cfg.speed = a.speed;
  cfg.lead_in = std::chrono::milliseconds(std::llround(a.lead_in * 1000.0));
  const auto count = session.samples.size();
  auto emu = SensorEmulator::replay(cfg, std::move(session));
  log(Level::info, "replaying " + std::to_string(count) + " samples from " + a.session + " on " + a.bind + ":" +
                       std::to_string(emu.port()));
  run_emulator(emu, std::nullopt);
  print_emulator_report(g, emu);
  return 0;
}

// --- monitor ---------------------------------------------------------------

struct MonitorArgs {
  std::string sensor;
  std::optional<double> threshold;
  std::optional<std::string> record;
  std::optional<double> duration;
};

void add_monitor(CLI::App& app, MonitorArgs& a) {
  auto* sub = app.add_subcommand("monitor", "Connect to a sensor, view its stream and report alarms");
  sub->add_option("--sensor", a.sensor, "Sensor address host:port")->required();
  sub->add_option("--threshold", a.threshold, "Alarm threshold in G")->check(CLI::PositiveNumber);
  sub->add_option("--record", a.record, "Write the viewed samples to this JSONL file");
  sub->add_option("--duration", a.duration, "Stop after this many seconds")->check(CLI::PositiveNumber);
}

int cmd_monitor(const Globals& g, const MonitorArgs& a) {
  auto ep = endpoint_flag(a.sensor, "--sensor");
  std::optional<ThresholdConfig> th;
  if (a.threshold) {
    th.emplace();
    th->limit = *a.threshold;
  }

  Monitor m;
  std::atomic<std::size_t> alarms{0};
  MonitorObserver obs;
  obs.on_alarm = [&](const AlarmEvent& e) {
    alarms.fetch_add(1);
    if (g.format == Format::json) {
      emit({{"alarm", service::alarm_to_json(e)}});
    } else {
      emit_text("ALARM t=" + fmt(e.t) + " channel=" + axis_name(e.channel) + " value=" + fmt(e.value) + " G");
    }
  };
  obs.on_state = [](ConnectionState s) { log(Level::debug, std::string("state ") + state_name(s)); };
  m.add_observer(std::move(obs));

  if (th) m.set_threshold(*th);
  m.client_start(ep);
  log(Level::info, "connected to " + ep.str());
  m.view_start();
  if (a.record) m.start_recording(*a.record);

  wait_until_stopped(a.duration, [&] { return m.state() == ConnectionState::disconnected; });
  const bool sensor_closed = m.state() == ConnectionState::disconnected;
  if (sensor_closed) log(Level::info, "sensor closed the connection");
  const std::size_t recorded = m.stop_recording();
  if (!sensor_closed) m.client_stop();

  json r = {{"sensor", ep.str()},
            {"samples_received", m.samples_received()},
            {"parse_errors", m.parse_errors()},
            {"alarms", alarms.load()},
            {"sensor_closed", sensor_closed}};
  r["recorded"] = a.record ? json(recorded) : json();
  if (g.format == Format::json) {
    emit(r);
  } else {
    std::string line = "samples received: " + std::to_string(m.samples_received()) +
                       ", alarms: " + std::to_string(alarms.load());
    if (a.record) line += ", recorded: " + std::to_string(recorded) + " to " + *a.record;
    emit_text(line);
  }
  return 0;
}

// --- latency ---------------------------------------------------------------

struct LatencyArgs {
  std::string sensor;
  std::size_t trials = 12;
};

void add_latency(CLI::App& app, LatencyArgs& a) {
  auto* sub = app.add_subcommand("latency", "Measure PING/PONG round trips to a sensor");
  sub->add_option("--sensor", a.sensor, "Sensor address host:port")->required();
  sub->add_option("--trials", a.trials, "Number of round trips")->capture_default_str()->check(CLI::PositiveNumber);
}

int cmd_latency(const Globals& g, const LatencyArgs& a) {
  auto ep = endpoint_flag(a.sensor, "--sensor");
  auto r = measure_latency(ep, a.trials);
  if (g.format == Format::json) {
    emit(latency_to_json(r));
    return 0;
  }
  for (std::size_t i = 0; i < r.trials.size(); ++i) {
    emit_text("trial " + std::to_string(i + 1) + ": " + fmt(r.trials[i] * 1000.0, 3) + " ms");
  }
  emit_text("mean " + fmt(r.mean * 1000.0, 3) + " ms, min " + fmt(r.min * 1000.0, 3) + " ms, max " +
            fmt(r.max * 1000.0, 3) + " ms, std " + fmt(r.std * 1000.0, 3) + " ms, one-way ~" +
            fmt(r.one_way_estimate * 1000.0, 3) + " ms, failed " + std::to_string(r.failed));
  return 0;
}

// --- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
  std::string ref, subject;
  std::string channel = "z";
  std::size_t segment_multiple = 1;
  std::size_t pairs = 10;
  std::optional<double> min_separation, min_prominence;
  std::optional<std::string> ref_psd, subject_psd;
};

void add_analyze(CLI::App& app, AnalyzeArgs& a) {
  auto* sub = app.add_subcommand("analyze", "Compare two recorded sessions: delay, spectra, amplitude spread");
  sub->add_option("--ref", a.ref, "Reference session JSONL")->required();
  sub->add_option("--subject", a.subject, "Subject session JSONL")->required();
  sub->add_option("--channel", a.channel, "Channel to analyze")->capture_default_str()->check(CLI::IsMember({"x", "y", "z"}));
  sub->add_option("--segment-multiple", a.segment_multiple, "Welch segment = multiple x 16 x rate samples")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--pairs", a.pairs, "Peak pairs averaged for the delay")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--min-separation", a.min_separation, "Minimum peak spacing in s")->check(CLI::PositiveNumber);
  sub->add_option("--min-prominence", a.min_prominence, "Minimum peak prominence in G")->check(CLI::NonNegativeNumber);
  sub->add_option("--ref-psd", a.ref_psd, "Write the reference PSD as CSV here");
  sub->add_option("--subject-psd", a.subject_psd, "Write the subject PSD as CSV here");
}

void write_csv_file(const std::string& path, const analysis::Spectrum& sp) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  analysis::write_psd_csv(out, sp);
  if (!out.flush()) throw IoError("write failed: " + path);
}

int cmd_analyze(const Globals& g, const AnalyzeArgs& a) {
  analysis::AnalyzeOptions opts;
  opts.channel = parse_axis(a.channel);
  opts.segment_multiple = a.segment_multiple;
  opts.pairs = a.pairs;
  opts.min_separation = a.min_separation;
  opts.min_prominence = a.min_prominence;

  auto ref = load_session(a.ref);
  auto subject = load_session(a.subject);
  auto r = analysis::analyze_sessions(ref, subject, opts);
  if (a.ref_psd) write_csv_file(*a.ref_psd, r.ref.psd);
  if (a.subject_psd) write_csv_file(*a.subject_psd, r.subject.psd);

  if (g.format == Format::json) {
    emit(analysis::report_to_json(r));
    return 0;
  }
  auto channel_lines = [&](const char* name, const analysis::ChannelReport& c) {
    emit_text(std::string(name) + ": " + std::to_string(c.samples) + " samples, dominant " +
              fmt(c.dominant_frequency) + " Hz (resolution " + fmt(c.psd.resolution) + " Hz), " +
              std::to_string(c.peaks.size()) + " peaks, amplitude std " + fmt(c.amplitude.std) + " G over " +
              std::to_string(c.amplitude.count) + " peaks" + (c.amplitude.short_data ? " (short data)" : ""));
  };
  emit_text(std::string("channel: ") + axis_name(r.channel));
  channel_lines("ref", r.ref);
  channel_lines("subject", r.subject);
  emit_text("delay: " + fmt(r.delay.delay) + " s over " + std::to_string(r.delay.pairs_used) + " pairs" +
            (r.delay.short_data ? " (short data)" : ""));
  emit_text("sync offset: " + fmt(r.sync_offset) + " Hz");
  return 0;
}

// --- gaze ------------------------------------------------------------------

struct GazeArgs {
  std::string input;
  std::optional<std::string> reference;
  double lead = 0.5, tail = 0.5;
  std::optional<std::string> path_csv;
};

void add_gaze(CLI::App& app, GazeArgs& a) {
  auto* sub = app.add_subcommand("gaze", "Dispersion and extent of a gaze trace");
  sub->add_option("--input", a.input, "Gaze JSON file")->required();
  sub->add_option("--reference", a.reference, "Reference point x,y in m (default: centroid)");
  sub->add_option("--lead", a.lead, "Seconds trimmed from the start")->capture_default_str()->check(CLI::NonNegativeNumber);
  sub->add_option("--tail", a.tail, "Seconds trimmed from the end")->capture_default_str()->check(CLI::NonNegativeNumber);
  sub->add_option("--path-csv", a.path_csv, "Write the trimmed path as CSV (t_s,x,y) here");
}

gaze::Point2 parse_point(const std::string& text) {
  auto comma = text.find(',');
  auto number = [&](std::string_view s) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
      throw UsageError("--reference: expected x,y, got '" + text + "'");
    }
    return v;
  };
  if (comma == std::string::npos) throw UsageError("--reference: expected x,y, got '" + text + "'");
  std::string_view sv(text);
  return {number(sv.substr(0, comma)), number(sv.substr(comma + 1))};
}

int cmd_gaze(const Globals& g, const GazeArgs& a) {
  std::optional<gaze::Point2> ref;
  if (a.reference) ref = parse_point(*a.reference);
  auto raw = gaze::load_gaze_trace(a.input);
  auto trimmed = gaze::trim_endpoints(raw, a.lead, a.tail);
  auto m = gaze::gaze_metrics(trimmed, ref);

  if (a.path_csv) {
    std::ofstream out(*a.path_csv);
    if (!out) throw IoError("cannot write " + *a.path_csv);
    out << "t_s,x,y\n";
    char buf[96];
    for (const auto& p : trimmed.points) {
      std::snprintf(buf, sizeof(buf), "%.3f,%.17g,%.17g\n", static_cast<double>(p.t_ms) / 1000.0, p.x, p.y);
      out << buf;
    }
    if (!out.flush()) throw IoError("write failed: " + *a.path_csv);
  }

  if (g.format == Format::json) {
    auto j = gaze::metrics_to_json(m);
    j["input_points"] = raw.points.size();
    j["dropped_out_of_order"] = raw.dropped_out_of_order;
    emit(j);
    return 0;
  }
  emit_text("points: " + std::to_string(m.points) + " of " + std::to_string(raw.points.size()) + " after trimming" +
            (raw.dropped_out_of_order ? ", " + std::to_string(raw.dropped_out_of_order) + " out-of-order dropped" : ""));
  emit_text("duration: " + fmt(m.duration, 3) + " s, sampling rate: " + fmt(m.sampling_rate, 2) + " Hz");
  emit_text("centroid: (" + fmt(m.centroid.x) + ", " + fmt(m.centroid.y) + ") m");
  emit_text("dispersion: " + fmt(m.dispersion) + " m from (" + fmt(m.reference.x) + ", " + fmt(m.reference.y) + ")");
  emit_text("extent: " + fmt(m.extent) + " m");
  emit_text("path length: " + fmt(m.path_length) + " m");
  return 0;
}

// --- serve -----------------------------------------------------------------

struct ServeArgs {
  std::string bind = "0.0.0.0:8080";
  std::optional<std::string> sensor;
};

void add_serve(CLI::App& app, ServeArgs& a) {
  auto* sub = app.add_subcommand("serve", "Run the HTTP control API and WebSocket stream");
  sub->add_option("--bind", a.bind, "Listen address addr:port")->capture_default_str();
  sub->add_option("--sensor", a.sensor, "Default sensor for /client/start");
}

int cmd_serve(const Globals& g, const ServeArgs& a) {
  auto bind = endpoint_flag(a.bind, "--bind", true);
  service::ServiceConfig cfg;
  cfg.host = bind.host;
  cfg.port = bind.port;
  if (a.sensor) cfg.default_sensor = endpoint_flag(*a.sensor, "--sensor");

  Monitor m;
  service::ControlService svc(m, cfg);
  svc.start();
  log(Level::info, "serving on " + bind.host + ":" + std::to_string(svc.port()));
  wait_until_stopped(std::nullopt);
  log(Level::info, "shutting down");
  svc.stop();
  if (m.state() != ConnectionState::disconnected) m.client_stop();
  auto status = service::status_to_json(m);
  if (g.format == Format::json) {
    emit(status);
  } else {
    emit_text("samples received: " + std::to_string(m.samples_received()));
  }
  return 0;
}

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const ConnectError*>(&e)) return "connect";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const StateError*>(&e)) return "state";
  if (dynamic_cast<const AnalysisError*>(&e)) return "analysis";
  return "error";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wireless vibration sensor emulator, monitor and analysis tools", "vibemon"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::string output = "text";
  app.add_option("--output", output, "Report format")->capture_default_str()->check(CLI::IsMember({"text", "json"}));
  app.add_option("--log-level", g.log_level, "Diagnostics on stderr")
      ->capture_default_str()
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));

  EmulateArgs emulate;
  ReplayArgs replay;
  MonitorArgs monitor;
  LatencyArgs latency;
  AnalyzeArgs analyze;
  GazeArgs gaze_args;
  ServeArgs serve;
  add_emulate(app, emulate);
  add_monitor(app, monitor);
  add_latency(app, latency);
  add_analyze(app, analyze);
  add_gaze(app, gaze_args);
  add_serve(app, serve);
  add_replay(app, replay);

  auto usage = [&](const std::string& msg) {
    std::cerr << "vibemon: " << msg << "\n\n";
    auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return usage(e.what());
  }

  g.format = output == "json" ? Format::json : Format::text;
  if (g.log_level == "error") g_level = Level::error;
  if (g.log_level == "warn") g_level = Level::warn;
  if (g.log_level == "debug") g_level = Level::debug;
  install_signal_handlers();

  try {
    auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "emulate") return cmd_emulate(g, emulate);
    if (name == "replay") return cmd_replay(g, replay);
    if (name == "monitor") return cmd_monitor(g, monitor);
    if (name == "latency") return cmd_latency(g, latency);
    if (name == "analyze") return cmd_analyze(g, analyze);
    if (name == "gaze") return cmd_gaze(g, gaze_args);
    if (name == "serve") return cmd_serve(g, serve);
    return usage("unknown command " + name);
  } catch (const UsageError& e) {
    return usage(e.what());
  } catch (const std::exception& e) {
    if (g.format == Format::json) {
      std::cerr << json{{"error", {{"kind", error_kind(e)}, {"message", e.what()}}}}.dump() << '\n';
    } else {
      std::cerr << "vibemon: error [" << error_kind(e) << "]: " << e.what() << '\n';
    }
    return 1;
  }
}
