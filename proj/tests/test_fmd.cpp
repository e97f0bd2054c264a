#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "nfmd/fmd.hpp"
#include "nfmd/synthetic.hpp"

using namespace nfmd;

namespace {

constexpr double kPi = std::numbers::pi;

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

std::vector<double> two_tone(const std::vector<double>& t) {
  std::vector<double> z(t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    z[i] = 3 * std::cos(2 * kPi * 50 * t[i]) + 1.5 * std::cos(2 * kPi * 120 * t[i]);
  return z;
}

// Dense Gaussian elimination with partial pivoting on (W^T W + ridge I) x = W^T z,
// with W built entry by entry.
std::vector<double> normal_equation_oracle(const std::vector<double>& z, const std::vector<double>& w,
                                           const std::vector<double>& t, double ridge) {
  const std::size_t k = w.size(), m = 2 * k, n = t.size();
  auto col = [&](std::size_t j, std::size_t i) {
    return j < k ? std::cos(w[j] * t[i]) : std::sin(w[j - k] * t[i]);
  };
  std::vector<std::vector<double>> a(m, std::vector<double>(m + 1, 0.0));
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < m; ++c)
      for (std::size_t i = 0; i < n; ++i) a[r][c] += col(r, i) * col(c, i);
    a[r][r] += ridge;
    for (std::size_t i = 0; i < n; ++i) a[r][m] += col(r, i) * z[i];
  }
  for (std::size_t p = 0; p < m; ++p) {
    std::size_t piv = p;
    for (std::size_t r = p + 1; r < m; ++r)
      if (std::abs(a[r][p]) > std::abs(a[piv][p])) piv = r;
    std::swap(a[p], a[piv]);
    for (std::size_t r = p + 1; r < m; ++r) {
      const double f = a[r][p] / a[p][p];
      for (std::size_t c = p; c <= m; ++c) a[r][c] -= f * a[p][c];
    }
  }
  std::vector<double> x(m);
  for (std::size_t p = m; p-- > 0;) {
    double acc = a[p][m];
    for (std::size_t c = p + 1; c < m; ++c) acc -= a[p][c] * x[c];
    x[p] = acc / a[p][p];
  }
  return x;
}

}  // namespace

TEST(DesignMatrix, ZeroFrequencyAtOrigin) {
  const std::vector<double> t{0.0};
  const Matrix m = design_matrix(vec({1e-6}), t);
  ASSERT_EQ(m.rows(), 1);
  EXPECT_DOUBLE_EQ(m(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(m(0, 1), 0.0);
}

TEST(DesignMatrix, QuarterPeriods) {
  const std::vector<double> t{0.0, 0.25, 0.5};
  const Matrix m = design_matrix(vec({2 * kPi}), t);
  EXPECT_NEAR(m(0, 0), 1, 1e-15);
  EXPECT_NEAR(m(0, 1), 0, 1e-15);
  EXPECT_NEAR(m(1, 0), 0, 1e-15);
  EXPECT_NEAR(m(1, 1), 1, 1e-15);
  EXPECT_NEAR(m(2, 0), -1, 1e-15);
  EXPECT_NEAR(m(2, 1), 0, 1e-15);
}

TEST(DesignMatrix, MatchesElementwiseLoop) {
  std::vector<double> t(10);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.013 * static_cast<double>(i) - 0.04;
  const Vector w = vec({17.0, 230.5});
  const Matrix m = design_matrix(w, t);
  ASSERT_EQ(m.rows(), 10);
  ASSERT_EQ(m.cols(), 4);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 2; ++j) {
      EXPECT_EQ(m(i, j), std::cos(w(j) * t[static_cast<std::size_t>(i)]));
      EXPECT_EQ(m(i, 2 + j), std::sin(w(j) * t[static_cast<std::size_t>(i)]));
    }
}

TEST(SolveAmplitudes, ExactModel) {
  const auto t = centered_times(200, 1e-3);
  std::vector<double> z(t.size());
  const double w0 = 2 * kPi * 20;
  for (std::size_t i = 0; i < t.size(); ++i) z[i] = 3 * std::cos(w0 * t[i]);
  const auto c = solve_amplitudes(z, vec({w0}), t, 0.0);
  EXPECT_NEAR(c.a(0), 3.0, 1e-9);
  EXPECT_NEAR(c.b(0), 0.0, 1e-9);
  EXPECT_LE(objective(z, c, vec({w0}), t), 1e-18);
}

TEST(SolveAmplitudes, ZeroSignal) {
  const auto t = centered_times(64, 1e-3);
  const std::vector<double> z(64, 0.0);
  const auto c = solve_amplitudes(z, vec({30.0, 400.0}), t, 0.0);
  EXPECT_EQ(c.stacked().norm(), 0.0);
}

TEST(SolveAmplitudes, MatchesNormalEquations) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> freq(5.0, 1500.0);
  for (double ridge : {0.0, 1e-3}) {
    for (int rep = 0; rep < 10; ++rep) {
      const auto t = centered_times(64, 1e-3);
      std::vector<double> z(64);
      for (double& v : z) v = normal(rng);
      const std::vector<double> w{freq(rng), freq(rng)};
      const auto c = solve_amplitudes(z, vec({w[0], w[1]}), t, ridge);
      const auto oracle = normal_equation_oracle(z, w, t, ridge);
      const Vector got = c.stacked();
      Vector want(4);
      for (int i = 0; i < 4; ++i) want(i) = oracle[static_cast<std::size_t>(i)];
      EXPECT_LE((got - want).norm(), 1e-10 * want.norm()) << "rep " << rep << " ridge " << ridge;
    }
  }
}

TEST(SolveAmplitudes, Errors) {
  const auto t = centered_times(3, 1e-3);
  const std::vector<double> z{1, 2, 3};
  EXPECT_THROW(solve_amplitudes(z, vec({10.0, 20.0}), t, 0.0), UnderdeterminedSegmentError);
  const auto t2 = centered_times(50, 1e-3);
  const std::vector<double> z2(50, 1.0);
  EXPECT_THROW(solve_amplitudes(z2, vec({100.0, 100.0}), t2, 0.0), SingularBasisError);
}

TEST(Objective, ZeroModelIsSignalEnergy) {
  const auto t = centered_times(250, 2e-4);
  const auto z = two_tone(t);
  CoefficientVector zero{Vector::Zero(2), Vector::Zero(2)};
  double e = 0;
  for (double v : z) e += v * v;
  EXPECT_NEAR(objective(z, zero, vec({1.0, 2.0}), t), e, 1e-12 * e);
}

TEST(Gradient, ZeroCoefficientsGiveZero) {
  const auto t = centered_times(100, 1e-3);
  std::vector<double> z(100, 1.0);
  CoefficientVector zero{Vector::Zero(2), Vector::Zero(2)};
  EXPECT_EQ(objective_gradient(z, zero, vec({10.0, 50.0}), t).norm(), 0.0);
}

TEST(Gradient, VanishesAtExactFit) {
  const auto t = centered_times(250, 2e-4);
  const auto z = two_tone(t);
  const Vector w = vec({2 * kPi * 50, 2 * kPi * 120});
  const auto c = solve_amplitudes(z, w, t, 0.0);
  EXPECT_LE(objective_gradient(z, c, w, t).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Gradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> freq(20.0, 2000.0);
  for (int rep = 0; rep < 10; ++rep) {
    const auto t = centered_times(128, 2e-4);
    std::vector<double> z(t.size());
    for (double& v : z) v = normal(rng);
    const Vector w = vec({freq(rng), freq(rng)});
    CoefficientVector c{Vector::Random(2), Vector::Random(2)};
    const Vector g = objective_gradient(z, c, w, t);
    Vector fd(2);
    for (int k = 0; k < 2; ++k) {
      const double h = 1e-3;
      Vector wp = w, wm = w;
      wp(k) += h;
      wm(k) -= h;
      fd(k) = (objective(z, c, wp, t) - objective(z, c, wm, t)) / (2 * h);
    }
    EXPECT_LE((g - fd).norm(), 1e-5 * g.norm()) << "rep " << rep;
  }
}

TEST(FftGuess, SingleTone) {
  const double dt = 2e-4;
  std::vector<double> z(250);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::cos(2 * kPi * 50 * static_cast<double>(i) * dt);
  const Vector g = fft_initial_guess(z, dt, 1);
  EXPECT_LE(std::abs(g(0) - 2 * kPi * 50), 2 * kPi * 20);
}

TEST(FftGuess, ConstantFallsBackToLadder) {
  const std::vector<double> z(250, 4.0);
  const Vector g = fft_initial_guess(z, 2e-4, 1);
  EXPECT_DOUBLE_EQ(g(0), 1e-6);
  const Vector g2 = fft_initial_guess(z, 2e-4, 2, 1e-3);
  EXPECT_DOUBLE_EQ(g2(0), 1e-3);
  EXPECT_DOUBLE_EQ(g2(1), 2e-3);
}

TEST(FftGuess, ExampleWindowNearDenseGridMinimum) {
  const auto z = generate(builtin_spec("example"));
  const std::vector<double> seg(z.values().begin(), z.values().begin() + 250);
  const auto t = centered_times(250, z.dt());
  const Vector g = fft_initial_guess(seg, z.dt(), 3, 1e-6, 1);
  ASSERT_EQ(g.size(), 3);
  const double bin = 2 * kPi / (250 * z.dt());
  EXPECT_LT(g(0), bin);
  EXPECT_LE(std::abs(g(1) - 2 * kPi * 80), bin);
  EXPECT_LE(std::abs(g(2) - 2 * kPi * 355), bin);
  // Scan each periodic mode on a fine grid with the others held at their guesses.
  for (int k = 1; k < 3; ++k) {
    double best = 0, best_e = std::numeric_limits<double>::infinity();
    for (double w = g(k) - 3 * bin; w <= g(k) + 3 * bin; w += bin / 100) {
      Vector trial = g;
      trial(k) = w;
      const auto c = solve_amplitudes(seg, trial, t, 0.0);
      const double e = objective(seg, c, trial, t);
      if (e < best_e) {
        best_e = e;
        best = w;
      }
    }
    EXPECT_LE(std::abs(g(k) - best), bin) << "mode " << k;
  }
}

TEST(Fmd, RecoversTwoTonesFromOneBinOff) {
  const double dt = 2e-4;
  const auto t = centered_times(250, dt);
  const auto z = two_tone(t);
  const double bin = 2 * kPi / (250 * dt);
  const auto fit = fmd(z, t, vec({2 * kPi * 50 + bin, 2 * kPi * 120 - bin}), FmdConfig{});
  EXPECT_NEAR(fit.freq(0), 2 * kPi * 50, 0.05);
  EXPECT_NEAR(fit.freq(1), 2 * kPi * 120, 0.05);
  EXPECT_LE(fit.residual, 1e-10);
  EXPECT_NEAR(fit.coef.amplitude(0), 3.0, 1e-6);
  EXPECT_NEAR(fit.coef.amplitude(1), 1.5, 1e-6);
}

TEST(Fmd, ResidualMatchesObjective) {
  const double dt = 2e-4;
  const auto t = centered_times(250, dt);
  auto z = two_tone(t);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += 0.1 * std::sin(17.0 * static_cast<double>(i));
  const auto fit = fmd(z, t, vec({300.0, 760.0}), FmdConfig{});
  const double e = objective(z, fit.coef, fit.freq, t);
  EXPECT_NEAR(fit.residual, e, 1e-12 * e);
}

TEST(Fmd, ExactStartConvergesImmediately) {
  const auto t = centered_times(250, 2e-4);
  const auto z = two_tone(t);
  const auto fit = fmd(z, t, vec({2 * kPi * 50, 2 * kPi * 120}), FmdConfig{});
  EXPECT_LE(fit.iterations, 2);
  EXPECT_LE(fit.residual, 1e-12);  // ridge bias only
}

TEST(Fmd, NoiseTerminates) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  const auto t = centered_times(250, 2e-4);
  std::vector<double> z(250);
  for (double& v : z) v = normal(rng);
  FmdConfig cfg;
  cfg.tol = 0.0;
  cfg.max_iters = 200;
  const auto fit = fmd(z, t, vec({100.0, 900.0, 3000.0}), cfg);
  EXPECT_TRUE(fit.status == StopStatus::converged_rel || fit.status == StopStatus::max_iters);
  EXPECT_LE(fit.iterations, 200);
}

TEST(Fmd, ObjectiveNeverIncreases) {
  const auto t = centered_times(250, 2e-4);
  auto z = two_tone(t);
  FmdConfig cfg;
  cfg.record_trace = true;
  const auto fit = fmd(z, t, vec({250.0, 800.0}), cfg);
  ASSERT_GE(fit.trace.size(), 2u);
  for (std::size_t i = 1; i < fit.trace.size(); ++i) EXPECT_LE(fit.trace[i], fit.trace[i - 1]);
}

TEST(Fmd, InitialOrderDoesNotMatter) {
  const auto t = centered_times(250, 2e-4);
  const auto z = two_tone(t);
  const auto a = fmd(z, t, vec({320.0, 740.0}), FmdConfig{});
  const auto b = fmd(z, t, vec({740.0, 320.0}), FmdConfig{});
  EXPECT_EQ(a.freq, b.freq);
  EXPECT_EQ(a.coef.stacked(), b.coef.stacked());
}

TEST(Fmd, ConvergedFitIsLocalMinimum) {
  const auto t = centered_times(250, 2e-4);
  auto z = two_tone(t);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += 0.5 * t[i];
  const auto fit = fmd(z, t, vec({300.0, 760.0}), FmdConfig{});
  for (int k = 0; k < 2; ++k) {
    Vector w = fit.freq;
    w(k) += 1.0;
    EXPECT_GT(objective(z, solve_amplitudes(z, w, t, 0.0), w, t), fit.residual);
  }
}

TEST(Fmd, RejectsBadInput) {
  const auto t = centered_times(250, 2e-4);
  const auto z = two_tone(t);
  EXPECT_THROW(fmd(z, t, vec({1e6}), FmdConfig{}), ConfigError);
  FmdConfig bad;
  bad.rel_tol = -1;
  EXPECT_THROW(fmd(z, t, vec({100.0}), bad), ConfigError);
  const std::vector<double> short_z{1, 2, 3};
  EXPECT_THROW(fmd(short_z, centered_times(3, 1e-3), vec({10.0, 20.0}), FmdConfig{}), UnderdeterminedSegmentError);
}
