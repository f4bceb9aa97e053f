#include <vibemon/threshold.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace vibemon {
namespace {

std::vector<AlarmEvent> run_z(const std::vector<double>& z, const ThresholdConfig& cfg, double dt = 0.05) {
  AlarmState st;
  std::vector<AlarmEvent> all;
  for (std::size_t i = 0; i < z.size(); ++i) {
    auto ev = check_threshold(GSample{static_cast<double>(i) * dt, 0.0, 0.0, z[i]}, cfg, st);
    all.insert(all.end(), ev.begin(), ev.end());
  }
  return all;
}

TEST(Threshold, SingleCrossingOnRamp) {
  ThresholdConfig cfg{1.2, 0.1, 1.0};
  auto ev = run_z({0.0, 0.25, 0.5, 0.75, 1.0, 1.1, 1.2, 1.25, 1.3, 1.4, 1.5, 1.5, 1.5}, cfg);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].channel, Axis::z);
  EXPECT_EQ(ev[0].value, 1.25);  // 1.2 itself is not a breach
  EXPECT_DOUBLE_EQ(ev[0].t, 7 * 0.05);
}

TEST(Threshold, BelowLimitNeverFires) {
  ThresholdConfig cfg{1.2, 0.1, 1.0};
  EXPECT_TRUE(run_z(std::vector<double>(200, 1.19), cfg).empty());
}

// Hand trace, limit 1.2, re-arm below 1.1 held for 0.19 s, dt 0.05 s:
//   i=2  1.30  fire (t=0.10), disarm
//   i=5  1.15  above re-arm level: quiet timer reset
//   i=6  1.00  quiet since 0.30
//   i=8  1.30  disarmed, no event; quiet timer reset
//   i=9  1.00  quiet since 0.45
//   i=13 0.00  0.65 - 0.45 >= 0.19 -> re-armed
//   i=14 1.21  fire (t=0.70)
//   i=15 -1.4  disarmed, no event
//   i=16..19   quiet 0.15 s, still disarmed
TEST(Threshold, HysteresisHandTrace) {
  ThresholdConfig cfg{1.2, 0.1, 0.19};
  std::vector<double> z = {0.0, 0.5, 1.3, 1.5, 1.25, 1.15, 1.0, 0.9, 1.3, 1.0,
                           0.5, 0.2, 0.0, 0.0, 1.21, -1.4, 0.0, 0.0, 0.0, 0.0};
  auto ev = run_z(z, cfg);
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_DOUBLE_EQ(ev[0].t, 0.10);
  EXPECT_EQ(ev[0].value, 1.3);
  EXPECT_DOUBLE_EQ(ev[1].t, 0.70);
  EXPECT_EQ(ev[1].value, 1.21);
}

TEST(Threshold, NoStormWhileOscillatingFasterThanHold) {
  // +-1.5 G at 1 Hz never stays below 1.1 G for a full second.
  ThresholdConfig cfg{1.2, 0.1, 1.0};
  std::vector<double> z;
  for (int n = 0; n < 200; ++n) z.push_back(1.5 * std::sin(2.0 * std::numbers::pi * n / 20.0));
  auto ev = run_z(z, cfg);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_GT(std::fabs(ev[0].value), 1.2);
}

TEST(Threshold, OneEventPerArmedCrossing) {
  // Bursts separated by 2 s of silence: each burst fires exactly once.
  ThresholdConfig cfg{1.2, 0.1, 1.0};
  std::vector<double> z;
  for (int burst = 0; burst < 4; ++burst) {
    for (int n = 0; n < 20; ++n) z.push_back(1.5 * std::sin(2.0 * std::numbers::pi * n / 20.0));
    z.insert(z.end(), 40, 0.0);
  }
  EXPECT_EQ(run_z(z, cfg).size(), 4u);
}

TEST(Threshold, ChannelsIndependent) {
  ThresholdConfig cfg{1.2, 0.1, 1.0};
  AlarmState st;
  auto ev = check_threshold(GSample{0.0, 1.3, -1.3, 0.0}, cfg, st);
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_EQ(ev[0].channel, Axis::x);
  EXPECT_EQ(ev[1].channel, Axis::y);
  EXPECT_EQ(ev[1].value, -1.3);
  ev = check_threshold(GSample{0.05, 1.3, -1.3, 1.3}, cfg, st);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].channel, Axis::z);
}

TEST(Threshold, EmittedValueExceedsLimit) {
  ThresholdConfig cfg{0.8, 0.1, 0.2};
  std::vector<double> z;
  for (int n = 0; n < 2000; ++n) z.push_back(std::sin(n * 0.37) * 1.1 * std::cos(n * 0.013));
  for (const auto& e : run_z(z, cfg)) EXPECT_GT(std::fabs(e.value), cfg.limit);
}

TEST(ThresholdConfig, Validation) {
  EXPECT_THROW((ThresholdConfig{0.0, 0.0, 1.0}.validate()), Error);
  EXPECT_THROW((ThresholdConfig{0.1, 0.1, 1.0}.validate()), Error);
  EXPECT_THROW((ThresholdConfig{1.0, -0.1, 1.0}.validate()), Error);
  EXPECT_NO_THROW((ThresholdConfig{1.2, 0.1, 1.0}.validate()));
}

}  // namespace
}  // namespace vibemon
