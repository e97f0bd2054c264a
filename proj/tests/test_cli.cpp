#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "nfmd/decompose.hpp"
#include "nfmd/io.hpp"
#include "nfmd/noise.hpp"
#include "nfmd/perturbation.hpp"
#include "nfmd/serialize.hpp"

namespace fs = std::filesystem;
using namespace nfmd;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("nfmd_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(NFMD_CLI_PATH) + " " + args + " > " + (dir_ / "stdout.txt").string() +
                            " 2> " + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  static std::size_t data_rows(const std::string& file) {
    std::ifstream in(file);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n == 0 ? 0 : n - 1;
  }

  void write(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }

  fs::path dir_;
};

std::string series_text(const std::vector<double>& t, const std::vector<double>& v) {
  std::string s = "time,value\n";
  for (std::size_t i = 0; i < t.size(); ++i) s += io::format_double(t[i]) + "," + io::format_double(v[i]) + "\n";
  return s;
}

}  // namespace

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("synth no-such-signal -o " + path("x.csv")), 2);
  EXPECT_EQ(run("bench no-such-suite --out-dir " + path("b")), 2);
  EXPECT_EQ(run("decompose"), 2);
}

TEST_F(Cli, SynthWritesSignalAndManifest) {
  ASSERT_EQ(run("synth example --snr 35 --seed 3 -o " + path("ex.csv")), 0);
  EXPECT_EQ(data_rows(path("ex.csv")), 5001u);
  const auto manifest = nlohmann::json::parse(io::read_file(path("ex.csv.manifest.json")));
  EXPECT_EQ(manifest["seed"], 3);
  EXPECT_EQ(manifest["outputs"]["ex.csv"], io::hex64(io::fnv1a(io::read_file(path("ex.csv")))));

  ASSERT_EQ(run("synth example -o " + path("clean.csv")), 0);
  const auto clean = io::read_series_csv(fs::path(path("clean.csv")));
  EXPECT_NEAR(clean[0], 13.0, 1e-12);
}

TEST_F(Cli, SynthIsDeterministic) {
  ASSERT_EQ(run("synth sharp-omega --snr 25 --seed 7 -o " + path("a.csv")), 0);
  ASSERT_EQ(run("synth sharp-omega --snr 25 --seed 7 -o " + path("b.csv")), 0);
  EXPECT_EQ(io::read_file(path("a.csv")), io::read_file(path("b.csv")));
  ASSERT_EQ(run("synth sharp-omega --snr 25 --seed 8 -o " + path("c.csv")), 0);
  EXPECT_NE(io::read_file(path("a.csv")), io::read_file(path("c.csv")));
}

TEST_F(Cli, SynthFromConfig) {
  write("sig.cfg", "mean = const 1\ncomponent.1.amplitude = const 2\ncomponent.1.frequency = const 50\nduration = 0.1\n");
  ASSERT_EQ(run("synth " + path("sig.cfg") + " -o " + path("sig.csv")), 0);
  EXPECT_EQ(data_rows(path("sig.csv")), 501u);
}

TEST_F(Cli, DecomposeExampleOutputs) {
  ASSERT_EQ(run("synth example -o " + path("ex.csv")), 0);
  ASSERT_EQ(run("decompose " + path("ex.csv") + " -w 250 -k 3 --stride 5 -o " + path("dec")), 0);
  for (const char* f : {"dec.json", "dec.csv", "dec_mode1.csv", "dec_mode2.csv", "dec_mode3.csv", "dec_mean.csv",
                        "dec.manifest.json"})
    EXPECT_TRUE(fs::exists(path(f))) << f;
  const auto mean = io::read_series_csv(fs::path(path("dec_mean.csv")));
  EXPECT_EQ(mean.size(), 951u);
  // Centers run from the first to the last window midpoint.
  EXPECT_NEAR(mean.time(0), 0.025, 1e-4);
  EXPECT_NEAR(mean.time(mean.size() - 1), 0.975, 1e-4);
  const auto j = nlohmann::json::parse(io::read_file(path("dec.json")));
  EXPECT_EQ(j["meta"]["K"], 3);
  EXPECT_EQ(j["centers"].size(), 951u);
}

TEST_F(Cli, DecomposeStride) {
  ASSERT_EQ(run("synth example -o " + path("ex.csv")), 0);
  ASSERT_EQ(run("decompose " + path("ex.csv") + " -w 250 -k 1 --stride 10 -o " + path("s10")), 0);
  EXPECT_EQ(data_rows(path("s10.csv")), 476u);
}

TEST_F(Cli, DecomposeConstantMean) {
  std::vector<double> t, v;
  for (int i = 0; i < 400; ++i) {
    t.push_back(i * 1e-3);
    v.push_back(4.5);
  }
  write("const.csv", series_text(t, v));
  ASSERT_EQ(run("decompose " + path("const.csv") + " -w 50 -k 1 --stride 10 -o " + path("c")), 0);
  const auto mean = io::read_series_csv(fs::path(path("c_mean.csv")));
  for (double m : mean.values()) EXPECT_NEAR(m, 4.5, 1e-6 * 4.5);
}

TEST_F(Cli, DecomposeErrors) {
  ASSERT_EQ(run("synth example -o " + path("ex.csv")), 0);
  EXPECT_EQ(run("decompose " + path("ex.csv") + " -w 6000 -k 3 -o " + path("d")), 3);
  EXPECT_EQ(run("decompose " + path("missing.csv") + " -w 250 -k 3 -o " + path("d")), 3);
  write("bad.csv", "time,value\n0,1\n1,2\n3,4\n");
  EXPECT_EQ(run("decompose " + path("bad.csv") + " -w 2 -k 1 -o " + path("d")), 3);

  // Squares of these samples overflow, so the first window cannot be fit.
  std::vector<double> t, v;
  for (int i = 0; i < 100; ++i) {
    t.push_back(i * 1e-3);
    v.push_back(i < 30 ? 1e200 : std::cos(i * 0.3));
  }
  write("huge.csv", series_text(t, v));
  EXPECT_EQ(run("decompose " + path("huge.csv") + " -w 20 -k 1 -o " + path("h")), 4);
  EXPECT_NE(io::read_file(path("stderr.txt")).find("window 0"), std::string::npos);
  EXPECT_EQ(run("decompose " + path("huge.csv") + " -w 20 -k 1 --policy skip -o " + path("h")), 0);
}

TEST_F(Cli, RoundTripReconstruction) {
  write("tones.cfg",
        "component.1.amplitude = const 3\ncomponent.1.frequency = const 50\n"
        "component.2.amplitude = const 1.5\ncomponent.2.frequency = const 120\n");
  ASSERT_EQ(run("synth " + path("tones.cfg") + " -o " + path("tones.csv")), 0);
  ASSERT_EQ(run("decompose " + path("tones.csv") + " -w 250 -k 2 --stride 7 --no-reserve-mean -o " + path("rt")), 0);
  const auto d = decomposition_from_json(nlohmann::json::parse(io::read_file(path("rt.json"))));
  const auto rec = reconstruct_centers(d);
  double se = 0;
  for (std::size_t i = 0; i < d.num_windows(); ++i) {
    const double t = d.centers[i];
    const double ref = 3 * std::cos(2 * std::numbers::pi * 50 * t) + 1.5 * std::cos(2 * std::numbers::pi * 120 * t);
    se += (rec[i] - ref) * (rec[i] - ref);
  }
  EXPECT_LE(std::sqrt(se / static_cast<double>(d.num_windows())), 1e-6);
}

TEST_F(Cli, FitTauEchoesFixedOnset) {
  std::vector<double> t, v;
  for (int i = 0; i <= 1200; ++i) {
    t.push_back(i * 1e-6);
    v.push_back(perturbation_model(t.back(), 1.0, 0.0, 1e-5, 1e-3));
  }
  write("mean.csv", series_text(t, v));
  ASSERT_EQ(run("fit-tau " + path("mean.csv") + " --variant lambda-zero --fix-tprime 1e-3 -o " + path("fit.json")), 0);
  const auto j = nlohmann::json::parse(io::read_file(path("fit.json")));
  EXPECT_EQ(j["t_prime"].get<double>(), 1e-3);
  EXPECT_TRUE(j["fixed"]["t_prime"].get<bool>());
  EXPECT_NEAR(j["tau"].get<double>(), 1e-5, 1e-8);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_TRUE(fs::exists(path("fit.json.manifest.json")));
}

TEST_F(Cli, FitTauZeroMeanFails) {
  std::vector<double> t, v;
  for (int i = 0; i < 200; ++i) {
    t.push_back(i * 1e-6);
    v.push_back(0.0);
  }
  write("zero.csv", series_text(t, v));
  EXPECT_EQ(run("fit-tau " + path("zero.csv") + " --fix-tprime 5e-5 -o " + path("z.json")), 5);
  const auto j = nlohmann::json::parse(io::read_file(path("z.json")));
  EXPECT_EQ(j["status"], "degenerate");
  EXPECT_TRUE(j.contains("reason"));
  EXPECT_EQ(run("fit-tau " + path("zero.csv") + " -o " + path("z2.json")), 5);
  EXPECT_EQ(nlohmann::json::parse(io::read_file(path("z2.json")))["status"], "onset_not_found");
  EXPECT_EQ(run("fit-tau " + path("zero.csv") + " --variant nonsense -o " + path("z3.json")), 2);
}

TEST_F(Cli, SimulateFreeOscillator) {
  write("osc.cfg", "f0 = 1\nbeta = 0\nx0 = 1\ndrive.alpha = 0\ndrive.omega = 0\n");
  ASSERT_EQ(run("simulate --osc " + path("osc.cfg") + " --duration 10 --dt 0.01 -o " + path("sim.csv")), 0);
  const auto x = io::read_series_csv(fs::path(path("sim.csv")));
  EXPECT_EQ(x.size(), 1001u);
  for (std::size_t i = 0; i < x.size(); i += 13) EXPECT_NEAR(x[i], std::cos(2 * std::numbers::pi * x.time(i)), 1e-6);
  EXPECT_TRUE(fs::exists(path("sim.csv.manifest.json")));
}

TEST_F(Cli, SimulateWithNoise) {
  write("osc.cfg", "f0 = 2e6\nbeta = 0.01\n");
  write("force.cfg",
        "drive.alpha = 3158273.4\ndrive.f = 2e6\nperturbation.gamma = 157913670\n"
        "perturbation.t_prime = 5e-6\nperturbation.tau = 2e-6\n");
  ASSERT_EQ(run("simulate --osc " + path("osc.cfg") + " --forcing " + path("force.cfg") +
                " --duration 2e-5 --dt 25e-9 --steady-start -o " + path("clean.csv")),
            0);
  ASSERT_EQ(run("simulate --osc " + path("osc.cfg") + " --forcing " + path("force.cfg") +
                " --duration 2e-5 --dt 25e-9 --steady-start --snr 100 --seed 2 -o " + path("noisy.csv")),
            0);
  const auto clean = io::read_series_csv(fs::path(path("clean.csv")));
  const auto noisy = io::read_series_csv(fs::path(path("noisy.csv")));
  EXPECT_NEAR(realized_snr_db(clean.samples(), noisy.samples()), 100.0, 1e-6);
  EXPECT_EQ(run("simulate --osc " + path("osc.cfg") + " --duration 1 --dt 0.1 -o " + path("x.csv")), 2);
}

TEST_F(Cli, BenchResolutionIsDeterministic) {
  ASSERT_EQ(run("bench resolution --out-dir " + path("r1")), 0);
  ASSERT_EQ(run("bench resolution --out-dir " + path("r2")), 0);
  EXPECT_EQ(io::read_file(path("r1/resolution.csv")), io::read_file(path("r2/resolution.csv")));
  EXPECT_NE(io::read_file(path("r1/resolution.csv")).find("pass"), std::string::npos);
}
