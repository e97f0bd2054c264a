#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "nfmd/config.hpp"
#include "nfmd/io.hpp"
#include "nfmd/noise.hpp"
#include "nfmd/synthetic.hpp"
#include "nfmd/time_series.hpp"

using namespace nfmd;

TEST(TimeSeries, RejectsBadConstruction) {
  EXPECT_THROW(TimeSeries({}, 1.0), InputError);
  EXPECT_THROW(TimeSeries({1.0}, 0.0), InputError);
  EXPECT_THROW(TimeSeries({1.0}, -1.0), InputError);
  EXPECT_THROW(TimeSeries({1.0}, std::numeric_limits<double>::infinity()), InputError);
}

TEST(TimeSeries, TimesAreUniform) {
  TimeSeries z({1, 2, 3, 4}, 0.5, 2.0);
  EXPECT_EQ(z.size(), 4u);
  EXPECT_DOUBLE_EQ(z.time(0), 2.0);
  EXPECT_DOUBLE_EQ(z.time(3), 3.5);
  EXPECT_DOUBLE_EQ(z.span(), 1.5);
  EXPECT_DOUBLE_EQ(z.sample_rate(), 2.0);
}

TEST(Synthetic, ZeroFrequencyComponentIsConstant) {
  SyntheticSpec spec;
  spec.components = {{forms::constant(1.0), forms::constant(0.0)}};
  spec.duration = 0.1;
  spec.dt = 0.01;
  const auto z = generate(spec);
  ASSERT_EQ(z.size(), 11u);
  for (double v : z.values()) EXPECT_EQ(v, 1.0);
}

TEST(Synthetic, PureMean) {
  SyntheticSpec spec;
  spec.mean = forms::constant(5.0);
  for (double v : generate(spec).values()) EXPECT_EQ(v, 5.0);
}

TEST(Synthetic, ExampleSignal) {
  const auto z = generate(builtin_spec("example"));
  EXPECT_EQ(z.size(), 5001u);
  EXPECT_DOUBLE_EQ(z.dt(), 2e-4);
  EXPECT_NEAR(z[0], 13.0, 1e-12);
  // Independent evaluation at an arbitrary sample.
  const double t = 1234 * 2e-4;
  const double expect = (1 + 0.5 * std::exp(-t / 3)) * std::cos(2 * std::numbers::pi * (360 - 10 * std::exp(-t / 0.5)) * t) +
                        (8 - 0.5 * std::exp(-t)) * std::cos(2 * std::numbers::pi * (80 - 2 * t) * t) +
                        1.5 + 2.5 * std::exp(-t / 1.5);
  EXPECT_NEAR(z[1234], expect, 1e-10);
}

TEST(Synthetic, SharpMeanJumps) {
  const auto spec = builtin_spec("sharp-mean");
  EXPECT_DOUBLE_EQ(spec.mean(0.25), std::sin(0.5));
  EXPECT_NEAR(spec.mean(0.25 + 1e-12), -2.5 * std::cos(0.25), 1e-9);
}

TEST(Synthetic, SharpOmegaBeforeOnset) {
  const auto spec = builtin_spec("sharp-omega");
  EXPECT_EQ(spec.components[0].frequency_hz(0.0), 400.0);
  EXPECT_EQ(spec.components[0].frequency_hz(0.4999), 400.0);
  EXPECT_GT(spec.components[0].frequency_hz(0.6), 400.0);
  EXPECT_LT(spec.components[0].frequency_hz(0.99), 410.0);
}

TEST(Synthetic, NegativeFrequencyIsRejected) {
  // 400 - 460 e^{-t/0.1} is negative until t ~ 0.014.
  SyntheticSpec spec;
  spec.components = {{forms::constant(1.0), parse_closed_form("exp 400 -460 0.1")}};
  EXPECT_THROW(generate(spec), GenerationError);
}

TEST(Synthetic, NonFiniteIsRejected) {
  SyntheticSpec spec;
  spec.mean = ClosedForm("bad", [](double t) { return t > 0.5 ? std::nan("") : 0.0; });
  EXPECT_THROW(generate(spec), GenerationError);
}

TEST(Synthetic, BadGridIsConfigError) {
  SyntheticSpec spec;
  spec.dt = 0.0;
  EXPECT_THROW(generate(spec), ConfigError);
  EXPECT_THROW(builtin_spec("nope"), ConfigError);
}

TEST(Noise, ExactEnergyRatio) {
  const auto z = generate(builtin_spec("example"));
  const auto noisy = add_noise(z, 35.0, 11);
  double en = 0, es = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    en += (noisy[i] - z[i]) * (noisy[i] - z[i]);
    es += z[i] * z[i];
  }
  EXPECT_NEAR(en / es, std::pow(10.0, -3.5), 1e-12 * std::pow(10.0, -3.5));
  EXPECT_NEAR(realized_snr_db(z.samples(), noisy.samples()), 35.0, 1e-9);
}

TEST(Noise, ZeroDbMatchesEnergy) {
  std::vector<double> u(100, 0.1);
  const auto n = make_noise(u, 0.0, 3);
  EXPECT_NEAR(energy(n), energy(u), 1e-12);
}

TEST(Noise, DeterministicPerSeed) {
  const auto z = generate(builtin_spec("example"));
  EXPECT_EQ(add_noise(z, 20, 5).values(), add_noise(z, 20, 5).values());
  EXPECT_NE(add_noise(z, 20, 5).values(), add_noise(z, 20, 6).values());
}

TEST(Noise, InfiniteSnrIsIdentity) {
  const auto z = generate(builtin_spec("example"));
  EXPECT_EQ(add_noise(z, kNoNoise, 1).values(), z.values());
}

TEST(Noise, ZeroEnergyIsUndefined) {
  TimeSeries z(std::vector<double>(10, 0.0), 1.0);
  EXPECT_THROW(add_noise(z, 10.0, 1), UndefinedSnrError);
  EXPECT_THROW(add_noise(TimeSeries({1.0, 2.0}, 1.0), std::nan(""), 1), ConfigError);
}

TEST(Csv, RoundTripIsExact) {
  auto z = add_noise(generate(builtin_spec("example")), 30, 2);
  std::stringstream ss;
  io::write_series_csv(ss, z);
  const auto back = io::read_series_csv(ss);
  EXPECT_EQ(back.values(), z.values());
  EXPECT_NEAR(back.dt(), z.dt(), 1e-15);
}

TEST(Csv, RequiresHeader) {
  std::istringstream in("0,1\n1,2\n");
  EXPECT_THROW(io::read_series_csv(in), InputError);
}

TEST(Csv, RejectsNonUniformTimes) {
  std::istringstream in("time,value\n0,1\n1,2\n2.5,3\n");
  EXPECT_THROW(io::read_series_csv(in), InputError);
  std::istringstream dec("time,value\n0,1\n1,2\n0.5,3\n");
  EXPECT_THROW(io::read_series_csv(dec), InputError);
}

TEST(Csv, RejectsGarbage) {
  std::istringstream in("time,value\n0,abc\n1,2\n");
  EXPECT_THROW(io::read_series_csv(in), InputError);
}

TEST(Csv, FullPrecision) {
  const double v = 0.1 + 0.2;
  EXPECT_EQ(io::parse_double(io::format_double(v), "x"), v);
}

TEST(Config, ParsesKeyValues) {
  const auto kv = KeyValueConfig::parse("# comment\n\n a = 1.5 \nname = x y\n");
  EXPECT_DOUBLE_EQ(kv.number("a"), 1.5);
  EXPECT_EQ(kv.require("name"), "x y");
  EXPECT_DOUBLE_EQ(kv.number("missing", 7.0), 7.0);
  EXPECT_THROW(kv.number("missing"), ConfigError);
  EXPECT_THROW(kv.number("name"), ConfigError);
}

TEST(Config, RejectsDuplicatesAndMalformedLines) {
  EXPECT_THROW(KeyValueConfig::parse("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("just text\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("= 3\n"), ConfigError);
}

TEST(Config, ClosedForms) {
  EXPECT_DOUBLE_EQ(parse_closed_form("const 2")(9.0), 2.0);
  EXPECT_DOUBLE_EQ(parse_closed_form("linear 1 2")(3.0), 7.0);
  EXPECT_DOUBLE_EQ(parse_closed_form("poly 245 0 10")(2.0), 285.0);
  EXPECT_NEAR(parse_closed_form("exp 1 2 0.5")(0.5), 1 + 2 * std::exp(-1.0), 1e-15);
  EXPECT_NEAR(parse_closed_form("sin 0 1 2")(0.25), std::sin(0.5), 1e-15);
  EXPECT_NEAR(parse_closed_form("step-exp 400 10 0.5 0.1")(0.6), 400 + 10 * (1 - std::exp(-1.0)), 1e-12);
  const auto pw = parse_closed_form("piecewise 0.25 sin 0 1 2 | cos 0 -2.5 1");
  EXPECT_NEAR(pw(0.1), std::sin(0.2), 1e-15);
  EXPECT_NEAR(pw(0.3), -2.5 * std::cos(0.3), 1e-15);
  EXPECT_THROW(parse_closed_form("wiggle 1"), ConfigError);
  EXPECT_THROW(parse_closed_form("linear 1"), ConfigError);
}

TEST(Config, SyntheticSpecFromConfig) {
  const auto kv = KeyValueConfig::parse(
      "mean = const 1\ncomponent.1.amplitude = const 2\ncomponent.1.frequency = const 50\n"
      "duration = 0.5\ndt = 0.001\n");
  const auto spec = synthetic_spec_from_config(kv);
  ASSERT_EQ(spec.components.size(), 1u);
  const auto z = generate(spec);
  EXPECT_EQ(z.size(), 501u);
  EXPECT_DOUBLE_EQ(z[0], 3.0);

  const auto builtin = synthetic_spec_from_config(KeyValueConfig::parse("builtin = example\nduration = 0.2\n"));
  EXPECT_EQ(generate(builtin).size(), 1001u);
  EXPECT_THROW(synthetic_spec_from_config(KeyValueConfig::parse("component.1.amplitude = const 1\n")),
               ConfigError);
}
