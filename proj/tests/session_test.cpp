#include <vibemon/latency.hpp>
#include <vibemon/session.hpp>

#include <gtest/gtest.h>

#include <random>
#include <sstream>

namespace vibemon {
namespace {

SessionMeta meta() {
  SessionMeta m;
  m.sensor = "127.0.0.1:8290";
  m.rate_hz = 20;
  m.started_unix_ms = 1700000000123;
  return m;
}

TEST(Session, HeaderFormat) {
  std::ostringstream out;
  SessionWriter w(out, meta());
  EXPECT_EQ(out.str(),
            "{\"meta\":{\"sensor\":\"127.0.0.1:8290\",\"rate_hz\":20.0,\"started_unix_ms\":1700000000123,"
            "\"threshold_g\":null}}\n");
}

TEST(Session, RecordFieldOrder) {
  std::ostringstream out;
  SessionWriter w(out, meta());
  w.append(GSample{0.05, 0.5, -0.25, 1.0});
  auto text = out.str();
  auto second = text.substr(text.find('\n') + 1);
  EXPECT_EQ(second, "{\"t\":0.05,\"gx\":0.5,\"gy\":-0.25,\"gz\":1.0}\n");
}

TEST(Session, RoundtripIsBitExact) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<GSample> samples;
  double t = 0.0;
  for (int i = 0; i < 100; ++i) {
    t += 0.05 + 1e-3 * std::fabs(g(rng));
    samples.push_back({t, g(rng), g(rng), g(rng)});
  }
  auto m = meta();
  m.threshold_g = 1.2;
  std::stringstream io;
  {
    SessionWriter w(io, m);
    for (const auto& s : samples) w.append(s);
    EXPECT_EQ(w.count(), 100u);
  }
  auto loaded = load_session(io);
  EXPECT_EQ(loaded.meta.sensor, m.sensor);
  EXPECT_EQ(loaded.meta.rate_hz, 20.0);
  EXPECT_EQ(loaded.meta.started_unix_ms, m.started_unix_ms);
  ASSERT_TRUE(loaded.meta.threshold_g.has_value());
  EXPECT_EQ(*loaded.meta.threshold_g, 1.2);
  EXPECT_EQ(loaded.samples, samples);
}

TEST(Session, CorruptLineReportsLineNumber) {
  std::stringstream io;
  {
    SessionWriter w(io, meta());
    for (int i = 0; i < 3; ++i) w.append(GSample{i * 0.05, 0, 0, 1});
  }
  std::string text = io.str() + "{\"t\": 0.2, \"gx\": oops}\n";  // line 5
  std::istringstream in(text);
  try {
    load_session(in);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.where(), 5u);
    EXPECT_NE(std::string(e.what()).find("line 5"), std::string::npos);
  }
}

TEST(Session, MissingFieldReportsLine) {
  std::istringstream in("{\"meta\":{\"sensor\":\"s\",\"rate_hz\":20}}\n{\"t\":0,\"gx\":0,\"gy\":0}\n");
  try {
    load_session(in);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.where(), 2u);
  }
}

TEST(Session, EmptyFileIsMissingHeader) {
  std::istringstream in("");
  EXPECT_THROW(load_session(in), FormatError);
}

TEST(Session, HeaderRequired) {
  std::istringstream in("{\"t\":0,\"gx\":0,\"gy\":0,\"gz\":0}\n");
  EXPECT_THROW(load_session(in), FormatError);
}

TEST(Session, UnwritablePath) {
  EXPECT_THROW(SessionWriter("/nonexistent-dir/x.jsonl", meta()), IoError);
}

TEST(Latency, Summary) {
  auto r = summarize_latency({0.010, 0.020, 0.030, 0.040});
  EXPECT_DOUBLE_EQ(r.mean, 0.025);
  EXPECT_EQ(r.min, 0.010);
  EXPECT_EQ(r.max, 0.040);
  EXPECT_NEAR(r.std, std::sqrt(0.000125), 1e-15);
  EXPECT_DOUBLE_EQ(r.one_way_estimate, 0.0125);
  EXPECT_THROW(summarize_latency({}), Error);
}

TEST(Latency, MeanBracketedForAnyInput) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(0.0, 0.3);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> v(1 + rng() % 20);
    for (auto& x : v) x = d(rng);
    auto r = summarize_latency(v);
    EXPECT_LE(r.min, r.mean);
    EXPECT_LE(r.mean, r.max);
    EXPECT_GE(r.std, 0.0);
  }
}

}  // namespace
}  // namespace vibemon
