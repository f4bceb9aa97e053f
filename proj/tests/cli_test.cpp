#include <vibemon/monitor.hpp>
#include <vibemon/session.hpp>

#include <gtest/gtest.h>
#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "test_support.hpp"

using namespace vibemon;
using namespace vibemon::testing;
using namespace std::chrono_literals;
using nlohmann::json;
namespace fs = std::filesystem;

extern char** environ;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Scratch directory, removed on destruction. Commands run with it as cwd.
class Scratch {
 public:
  Scratch() {
    static int counter = 0;
    dir_ = fs::temp_directory_path() /
           ("vibemon_cli_" + std::to_string(::getpid()) + "_" + std::to_string(++counter));
    fs::remove_all(dir_);
    fs::create_directories(dir_ / "work");
  }
  ~Scratch() { fs::remove_all(dir_); }
  fs::path operator/(const std::string& name) const { return dir_ / name; }
  fs::path work() const { return dir_ / "work"; }

 private:
  fs::path dir_;
};

class Process {
 public:
  Process(const std::vector<std::string>& args, const Scratch& s) : out_(s / "stdout.txt"), err_(s / "stderr.txt") {
    std::vector<std::string> full{VIBEMON_CLI};
    full.insert(full.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : full) argv.push_back(a.data());
    argv.push_back(nullptr);
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_addopen(&fa, 1, out_.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_addopen(&fa, 2, err_.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_addchdir_np(&fa, s.work().c_str());
    int rc = posix_spawn(&pid_, full[0].c_str(), &fa, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&fa);
    if (rc != 0) throw std::runtime_error("spawn failed");
  }
  ~Process() {
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      wait();
    }
  }

  void signal(int sig) { ::kill(pid_, sig); }

  int wait() {
    int status = 0;
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  }

  std::string out() const { return slurp(out_); }
  std::string err() const { return slurp(err_); }

 private:
  pid_t pid_ = -1;
  fs::path out_, err_;
};

struct Result {
  int code;
  std::string out, err;
};

Result run(const std::vector<std::string>& args, const Scratch& s) {
  Process p(args, s);
  int code = p.wait();
  return {code, p.out(), p.err()};
}

std::uint16_t unused_port() {
  net::Listener l("127.0.0.1", 0);
  return l.port();
}

// z = amp * sin(2 pi f (t - shift)) sampled at 20 S/s.
void write_session(const fs::path& path, std::size_t n, double f, double shift, double amp = 1.0) {
  std::ofstream out(path);
  SessionMeta meta;
  meta.sensor = "test:1";
  SessionWriter w(out, meta);
  for (std::size_t i = 0; i < n; ++i) {
    double t = static_cast<double>(i) / 20.0;
    w.append({t, 0.0, 0.0, amp * std::sin(2 * std::numbers::pi * f * (t - shift))});
  }
  w.flush();
}

std::vector<std::string> listing(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

TEST(Cli, UnknownFlagIsUsageError) {
  Scratch s;
  auto r = run({"emulate", "--bogus"}, s);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--bogus"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_TRUE(r.out.empty());
}

TEST(Cli, MissingSubcommandAndBadValuesAreUsageErrors) {
  Scratch s;
  EXPECT_EQ(run({}, s).code, 2);
  EXPECT_EQ(run({"frobnicate"}, s).code, 2);
  EXPECT_EQ(run({"emulate", "--freq", "-1"}, s).code, 2);
  EXPECT_EQ(run({"emulate", "--axis", "w"}, s).code, 2);
  EXPECT_EQ(run({"latency", "--sensor", "nohost"}, s).code, 2);
  EXPECT_EQ(run({"--output", "xml", "gaze", "--input", "x.json"}, s).code, 2);
  EXPECT_EQ(run({"gaze", "--input", "x.json", "--reference", "1;2"}, s).code, 2);
  EXPECT_EQ(run({"analyze", "--ref", "a.jsonl"}, s).code, 2);
}

TEST(Cli, HelpPerSubcommand) {
  Scratch s;
  for (const char* sub : {"emulate", "monitor", "latency", "analyze", "gaze", "serve", "replay"}) {
    auto r = run({sub, "--help"}, s);
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("Usage"), std::string::npos) << sub;
  }
}

TEST(Cli, GazeMissingFileIsRuntimeError) {
  Scratch s;
  auto r = run({"gaze", "--input", "missing.json"}, s);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("missing.json"), std::string::npos);
  auto j = run({"--output", "json", "gaze", "--input", "missing.json"}, s);
  EXPECT_EQ(j.code, 1);
  EXPECT_EQ(json::parse(j.err)["error"]["kind"], "io");
}

TEST(Cli, GazeReportAndPathCsv) {
  Scratch s;
  json pts = json::array();
  for (int i = 0; i <= 300; ++i) {  // 3 s at 100 Hz around a circle of radius 0.2
    double a = 2 * std::numbers::pi * i / 100.0;
    pts.push_back({{"t_ms", i * 10}, {"x", 0.2 * std::cos(a)}, {"y", 0.2 * std::sin(a)}, {"z", 1.0}});
  }
  std::ofstream(s.work() / "trace.json") << pts.dump();

  auto r = run({"--output", "json", "gaze", "--input", "trace.json", "--path-csv", "path.csv", "--reference", "0,0"}, s);
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  EXPECT_NEAR(j["dispersion_m"].get<double>(), 0.2, 1e-9);
  EXPECT_NEAR(j["extent_m"].get<double>(), 0.4, 1e-9);
  EXPECT_EQ(j["points"], 201);
  EXPECT_NEAR(j["sampling_rate_hz"].get<double>(), 100.0, 1e-9);
  auto csv = slurp(s.work() / "path.csv");
  EXPECT_EQ(csv.rfind("t_s,x,y\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 202);
  EXPECT_EQ(listing(s.work()), (std::vector<std::string>{"path.csv", "trace.json"}));

  auto text = run({"gaze", "--input", "trace.json", "--reference", "0,0", "--lead", "0", "--tail", "0"}, s);
  ASSERT_EQ(text.code, 0) << text.err;
  EXPECT_NE(text.out.find("dispersion: 0.2000 m"), std::string::npos);
  EXPECT_NE(text.out.find("points: 301"), std::string::npos);
}

TEST(Cli, AnalyzeReportsDelayAndWritesOnlyNamedFiles) {
  Scratch s;
  write_session(s.work() / "a.jsonl", 1200, 1.0, 0.0);
  write_session(s.work() / "b.jsonl", 1200, 1.0, 0.26);

  auto r = run({"--output", "json", "analyze", "--ref", "a.jsonl", "--subject", "b.jsonl", "--subject-psd", "b.csv"}, s);
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  EXPECT_NEAR(j["delay_s"].get<double>(), 0.26, 0.025);
  EXPECT_EQ(j["delay_pairs_used"], 10);
  EXPECT_DOUBLE_EQ(j["sync_offset_hz"].get<double>(), 0.0);
  EXPECT_DOUBLE_EQ(j["ref"]["dominant_frequency_hz"].get<double>(), 1.0);
  EXPECT_EQ(listing(s.work()), (std::vector<std::string>{"a.jsonl", "b.csv", "b.jsonl"}));
  EXPECT_EQ(slurp(s.work() / "b.csv").rfind("freq,power\n", 0), 0u);

  auto text = run({"analyze", "--ref", "a.jsonl", "--subject", "b.jsonl"}, s);
  ASSERT_EQ(text.code, 0) << text.err;
  EXPECT_NE(text.out.find("delay: 0.2"), std::string::npos);
}

TEST(Cli, AnalyzeMalformedSessionIsRuntimeError) {
  Scratch s;
  write_session(s.work() / "a.jsonl", 1200, 1.0, 0.0);
  std::ofstream(s.work() / "bad.jsonl") << "{\"meta\": {\"sensor\": \"x\", \"rate_hz\": 20}}\n{\"t\": oops}\n";
  auto r = run({"analyze", "--ref", "a.jsonl", "--subject", "bad.jsonl"}, s);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("format"), std::string::npos);
}

TEST(Cli, ReplayDeliversEverySampleThenExits) {
  Scratch s;
  write_session(s.work() / "s.jsonl", 100, 1.5, 0.0);
  const auto port = unused_port();
  Process replay({"--output", "json", "replay", "--session", "s.jsonl", "--bind", "127.0.0.1", "--port",
                  std::to_string(port), "--speed", "4", "--lead-in", "0.2"},
                 s);

  Monitor m;
  ASSERT_TRUE(wait_for(
      [&] {
        try {
          m.client_start({"127.0.0.1", port});
          return true;
        } catch (const ConnectError&) {
          return false;
        }
      },
      5s));
  m.view_start();
  std::ostringstream sink;
  m.start_recording(std::make_unique<SessionWriter>(sink, m.session_meta()));
  ASSERT_TRUE(wait_for([&] { return m.state() == ConnectionState::disconnected; }, 10s));
  EXPECT_EQ(m.samples_received(), 100u);
  EXPECT_EQ(m.stop_recording(), 100u);

  EXPECT_EQ(replay.wait(), 0);
  auto report = json::parse(replay.out());
  EXPECT_EQ(report["lines_sent"], 100);

  std::istringstream in(sink.str());
  auto captured = load_session(in);
  auto original = load_session((s.work() / "s.jsonl").string());
  ASSERT_EQ(captured.samples.size(), original.samples.size());
  for (std::size_t i = 0; i < captured.samples.size(); ++i) {
    EXPECT_NEAR(captured.samples[i].gz, original.samples[i].gz, 1e-5);  // wire carries 4 decimals of m/s^2
  }
}

TEST(Cli, ReplayToBusyPortIsRuntimeError) {
  Scratch s;
  write_session(s.work() / "s.jsonl", 100, 1.5, 0.0);
  net::Listener busy("127.0.0.1", 0);
  auto r = run({"replay", "--session", "s.jsonl", "--bind", "127.0.0.1", "--port", std::to_string(busy.port())}, s);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("cannot bind"), std::string::npos);
}

TEST(Cli, LatencyJsonAgainstEmulator) {
  Scratch s;
  RunningEmulator emu(SensorEmulator::synthetic(loopback(), shaker()));
  auto r = run({"--output", "json", "latency", "--sensor", emu.endpoint().str()}, s);
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  EXPECT_EQ(j["trials"].size(), 12u);
  EXPECT_LE(j["min"].get<double>(), j["mean"].get<double>());
  EXPECT_LE(j["mean"].get<double>(), j["max"].get<double>());
  EXPECT_EQ(run({"latency", "--sensor", "127.0.0.1:" + std::to_string(unused_port())}, s).code, 1);
}

TEST(Cli, MonitorFlushesRecordingOnTerminate) {
  Scratch s;
  RunningEmulator emu(SensorEmulator::synthetic(loopback(), shaker()));
  Process mon({"--output", "json", "monitor", "--sensor", emu.endpoint().str(), "--record", "rec.jsonl"}, s);
  std::this_thread::sleep_for(1500ms);
  mon.signal(SIGTERM);
  EXPECT_EQ(mon.wait(), 0) << mon.err();
  auto summary = json::parse(mon.out());
  auto rec = load_session((s.work() / "rec.jsonl").string());
  EXPECT_GT(rec.samples.size(), 10u);
  EXPECT_EQ(summary["recorded"].get<std::size_t>(), rec.samples.size());
  EXPECT_EQ(rec.meta.sensor, emu.endpoint().str());
  EXPECT_EQ(listing(s.work()), (std::vector<std::string>{"rec.jsonl"}));
}

TEST(Cli, EmulateServesForDuration) {
  Scratch s;
  const auto port = unused_port();
  Process emu({"--output", "json", "emulate", "--bind", "127.0.0.1", "--port", std::to_string(port), "--freq", "2",
               "--duration", "1.5"},
              s);
  Monitor m;
  ASSERT_TRUE(wait_for(
      [&] {
        try {
          m.client_start({"127.0.0.1", port});
          return true;
        } catch (const ConnectError&) {
          return false;
        }
      },
      5s));
  EXPECT_EQ(emu.wait(), 0);
  auto j = json::parse(emu.out());
  EXPECT_GT(j["lines_sent"].get<int>(), 10);
  EXPECT_EQ(j["clients_served"], 1);
}
