#include <vibemon/wire.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

namespace vibemon::wire {
namespace {

TEST(EncodeSample, FormatsFourFractionalDigits) {
  EXPECT_EQ(encode_sample(0, 0, 0), "0.0000 0.0000 0.0000\n");
  EXPECT_EQ(encode_sample(0.12, -0.05, 9.8066), "0.1200 -0.0500 9.8066\n");
}

TEST(EncodeSample, RejectsNonFinite) {
  EXPECT_THROW(encode_sample(std::nan(""), 0, 0), EncodeError);
  EXPECT_THROW(encode_sample(0, std::numeric_limits<double>::infinity(), 0), EncodeError);
}

TEST(ParseLine, DataLine) {
  auto m = parse_line("0.1200 -0.0500 9.8066\n");
  auto* d = std::get_if<Data>(&m);
  ASSERT_NE(d, nullptr);
  EXPECT_DOUBLE_EQ(d->ax, 0.12);
  EXPECT_DOUBLE_EQ(d->ay, -0.05);
  EXPECT_DOUBLE_EQ(d->az, 9.8066);
}

TEST(ParseLine, AcceptsWhitespaceRuns) {
  auto m = parse_line("1.0   2.0\t\t3.0\n");
  auto* d = std::get_if<Data>(&m);
  ASSERT_NE(d, nullptr);
  EXPECT_EQ(d->az, 3.0);
}

TEST(ParseLine, PingPong) {
  auto ping = parse_line("PING a1b2\n");
  ASSERT_TRUE(std::holds_alternative<Ping>(ping));
  EXPECT_EQ(std::get<Ping>(ping).nonce, "a1b2");
  auto pong = parse_line("PONG q\n");
  ASSERT_TRUE(std::holds_alternative<Pong>(pong));
  EXPECT_EQ(std::get<Pong>(pong).nonce, "q");
}

TEST(ParseLine, Malformed) {
  for (const char* bad : {"0.1 0.2\n", "0.1 0.2 0.3 0.4\n", "a b c\n", "1 2 nan\n", "1 2 inf\n", "1 2 3",
                          "\n", "PING\n", "PING a b\n", "HELLO x\n", "1 2 3x\n", "1e999 0 0\n"}) {
    EXPECT_THROW(parse_line(bad), ParseError) << bad;
  }
  EXPECT_THROW(parse_line("PING " + std::string(33, 'n') + "\n"), ParseError);
  EXPECT_NO_THROW(parse_line("PING " + std::string(32, 'n') + "\n"));
}

TEST(ParseLine, ErrorCarriesLine) {
  try {
    parse_line("0.1 0.2\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), "0.1 0.2\n");
  }
}

TEST(Roundtrip, QuantizationBound) {
  auto m = std::get<Data>(parse_line(encode_sample(1.23456, 0, 0)));
  EXPECT_DOUBLE_EQ(m.ax, 1.2346);
  EXPECT_LE(std::fabs(m.ax - 1.23456), 5e-5);
  auto z = std::get<Data>(parse_line(encode_sample(0, 0, 0)));
  EXPECT_EQ(z.ax, 0.0);
  EXPECT_EQ(z.ay, 0.0);
  EXPECT_EQ(z.az, 0.0);
}

TEST(Roundtrip, RandomTriplesWithinHalfQuantum) {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> dist(-80.0, 80.0);
  for (int i = 0; i < 1000; ++i) {
    double v[3] = {dist(rng), dist(rng), dist(rng)};
    std::string line = encode_sample(v[0], v[1], v[2]);
    ASSERT_EQ(std::count(line.begin(), line.end(), '\n'), 1);
    ASSERT_EQ(line.back(), '\n');
    for (char c : line.substr(0, line.size() - 1)) ASSERT_FALSE(std::iscntrl(static_cast<unsigned char>(c)));
    auto d = std::get<Data>(parse_line(line));
    EXPECT_LE(std::fabs(d.ax - v[0]), 5e-5);
    EXPECT_LE(std::fabs(d.ay - v[1]), 5e-5);
    EXPECT_LE(std::fabs(d.az - v[2]), 5e-5);
  }
}

TEST(ParseLine, TotalOverArbitraryBytes) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> len(0, 40), byte(0, 255), pick(0, 3);
  const std::string alphabet = "0123456789.-+eE PINGOx\t";
  for (int i = 0; i < 5000; ++i) {
    std::string line;
    int n = len(rng);
    for (int k = 0; k < n; ++k) {
      line.push_back(pick(rng) == 0 ? static_cast<char>(byte(rng))
                                    : alphabet[static_cast<std::size_t>(byte(rng)) % alphabet.size()]);
    }
    line.push_back('\n');
    try {
      (void)parse_line(line);
    } catch (const ParseError&) {
    }
  }
}

TEST(Nonce, PingPongEncodeEcho) {
  EXPECT_EQ(encode_ping("q"), "PING q\n");
  EXPECT_EQ(encode_pong("q"), "PONG q\n");
  EXPECT_THROW(encode_ping(""), EncodeError);
  EXPECT_THROW(encode_ping("a b"), EncodeError);
}

}  // namespace
}  // namespace vibemon::wire
