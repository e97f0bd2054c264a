#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <numbers>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "nfmd/error.hpp"

/**
 * @file fmd.hpp
 * @brief Fourier mode decomposition of a single signal segment.
 *
 * A segment z is modelled as sum_k a_k cos(w_k t) + b_k sin(w_k t). For
 * fixed frequencies the coefficients are a linear least-squares problem;
 * the frequencies are refined by projected gradient descent on the squared
 * residual, re-solving the coefficients after every accepted step.
 */
namespace nfmd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Cosine weights `a` and sine weights `b`, one pair per mode.
struct CoefficientVector {
  Vector a;
  Vector b;

  std::size_t size() const noexcept { return static_cast<std::size_t>(a.size()); }

  /// [a_1 .. a_K, b_1 .. b_K]
  Vector stacked() const {
    Vector out(a.size() + b.size());
    out << a, b;
    return out;
  }

  static CoefficientVector from_stacked(const Vector& ab) {
    const Eigen::Index k = ab.size() / 2;
    return {ab.head(k), ab.tail(k)};
  }

  double amplitude(std::size_t k) const {
    const auto i = static_cast<Eigen::Index>(k);
    return std::hypot(a(i), b(i));
  }
};

enum class StopStatus { converged_tol, converged_rel, max_iters, failed };

inline std::string_view to_string(StopStatus s) {
  switch (s) {
    case StopStatus::converged_tol: return "converged_tol";
    case StopStatus::converged_rel: return "converged_rel";
    case StopStatus::max_iters: return "max_iters";
    case StopStatus::failed: return "failed";
  }
  return "unknown";
}

/**
 * @brief Step contract for the frequency update.
 *
 * The search direction is the gradient scaled per mode by the diagonal of
 * the projected Gauss-Newton matrix, capped at `max_step_bins` FFT bins,
 * and accepted by Armijo backtracking (halving by default).
 */
struct StepRule {
  double armijo = 1e-4;
  double shrink = 0.5;
  int max_backtracks = 60;
  double max_step_bins = 1.0;
  bool diagonal_scaling = true;
  /// Diagonal entries are floored at this fraction of the largest one.
  double scale_floor = 1e-4;
};

struct FmdConfig {
  double tol = 0.0;         ///< residual target (squared signal units)
  double rel_tol = 1e-8;    ///< stop when (E_prev - E) <= rel_tol * E_prev
  int max_iters = 500;
  /// Also stop when an accepted step moves no frequency by more than this
  /// many FFT bins; 0 disables the test.
  double freq_tol_bins = 1e-5;
  StepRule step{};
  double omega_min = 1e-6;  ///< rad/s floor for every mode
  double ridge = 1e-10;     ///< per-sample ridge; the solve uses ridge * n
  bool record_trace = false;

  void validate() const {
    if (!(tol >= 0.0)) throw ConfigError("fmd tol must be >= 0");
    if (!(rel_tol >= 0.0)) throw ConfigError("fmd rel_tol must be >= 0");
    if (!(freq_tol_bins >= 0.0)) throw ConfigError("fmd freq_tol_bins must be >= 0");
    if (!(ridge >= 0.0)) throw ConfigError("fmd ridge must be >= 0");
    if (max_iters <= 0) throw ConfigError("fmd max_iters must be > 0");
    if (!(omega_min > 0.0) || !std::isfinite(omega_min)) throw ConfigError("fmd omega_min must be > 0");
    if (!(step.shrink > 0.0 && step.shrink < 1.0)) throw ConfigError("step shrink must be in (0, 1)");
    if (!(step.armijo > 0.0 && step.armijo < 1.0)) throw ConfigError("armijo factor must be in (0, 1)");
    if (!(step.max_step_bins > 0.0)) throw ConfigError("max_step_bins must be > 0");
  }
};

struct SegmentFit {
  Vector freq;  ///< rad/s, ascending
  CoefficientVector coef;
  double residual = 0.0;
  int iterations = 0;
  StopStatus status = StopStatus::converged_rel;
  std::vector<double> trace;  ///< objective per accepted iterate (record_trace only)
};

/// Non-finite objective during descent; `last()` is the last finite iterate.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, SegmentFit last) : Error(what), last_(std::move(last)) {}
  const SegmentFit& last() const noexcept { return last_; }

 private:
  SegmentFit last_;
};

namespace detail {

inline Eigen::Map<const Vector> as_vector(std::span<const double> s) {
  return {s.data(), static_cast<Eigen::Index>(s.size())};
}

inline void check_lengths(std::span<const double> z, std::span<const double> times) {
  if (z.size() != times.size()) throw ConfigError("segment and time vectors differ in length");
}

inline void require_overdetermined(std::size_t n, std::size_t k) {
  if (n < 2 * k)
    throw UnderdeterminedSegmentError("segment of " + std::to_string(n) + " samples cannot fit " +
                                      std::to_string(k) + " modes (needs >= " + std::to_string(2 * k) +
                                      ")");
}

/// Model y = sum_k a_k cos(w_k t) + b_k sin(w_k t) on the given times.
inline Vector model(const CoefficientVector& coef, const Vector& freq, const Eigen::Ref<const Vector>& t) {
  Vector y = Vector::Zero(t.size());
  for (Eigen::Index k = 0; k < freq.size(); ++k) {
    const Eigen::ArrayXd phase = t.array() * freq(k);
    y.array() += coef.a(k) * phase.cos() + coef.b(k) * phase.sin();
  }
  return y;
}

inline double sum_squares(const Vector& r) { return r.squaredNorm(); }

inline double nyquist(std::span<const double> times) {
  if (times.size() < 2) return std::numeric_limits<double>::infinity();
  const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  return std::numbers::pi / dt;
}

inline std::string describe_pair(double w1, double w2) {
  std::ostringstream os;
  os.precision(12);
  os << w1 << " and " << w2 << " rad/s";
  return os.str();
}

/// Sorts frequencies ascending and applies the same permutation to coef.
inline void canonicalize(Vector& freq, CoefficientVector* coef) {
  const auto k = static_cast<std::size_t>(freq.size());
  std::vector<Eigen::Index> order(k);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return freq(i) < freq(j); });
  Vector f(freq.size());
  for (std::size_t i = 0; i < k; ++i) f(static_cast<Eigen::Index>(i)) = freq(order[i]);
  freq = f;
  if (coef) {
    Vector a(coef->a.size()), b(coef->b.size());
    for (std::size_t i = 0; i < k; ++i) {
      a(static_cast<Eigen::Index>(i)) = coef->a(order[i]);
      b(static_cast<Eigen::Index>(i)) = coef->b(order[i]);
    }
    coef->a = a;
    coef->b = b;
  }
}

inline void clamp(Vector& freq, double lo, double hi) {
  for (Eigen::Index k = 0; k < freq.size(); ++k) freq(k) = std::clamp(freq(k), lo, hi);
}

}  // namespace detail

/**
 * @brief n x 2K basis: column j < K is cos(w_j t), column K + j is sin(w_j t).
 *
 * Pure evaluation; the overdetermination requirement is enforced by the
 * solvers, not here.
 */
inline Matrix design_matrix(const Vector& freq, std::span<const double> times) {
  if (times.empty()) throw ConfigError("design matrix needs at least one time");
  const auto t = detail::as_vector(times);
  const Eigen::Index k = freq.size();
  Matrix omega(t.size(), 2 * k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::ArrayXd phase = t.array() * freq(j);
    omega.col(j) = phase.cos().matrix();
    omega.col(k + j) = phase.sin().matrix();
  }
  return omega;
}

namespace detail {

/// Column-pivoted QR of the ridge-augmented basis [Omega; sqrt(ridge) I].
class AugmentedBasis {
 public:
  AugmentedBasis(const Vector& freq, std::span<const double> times, double ridge)
      : n_(static_cast<Eigen::Index>(times.size())), m_(2 * freq.size()) {
    Matrix aug(n_ + m_, m_);
    aug.topRows(n_) = design_matrix(freq, times);
    aug.bottomRows(m_) = Matrix::Identity(m_, m_) * std::sqrt(ridge);
    qr_.setThreshold(1e-13);
    qr_.compute(aug);
    if (qr_.rank() < m_) throw_singular(freq);
  }

  /// argmin_c ||rhs - Omega c||^2 + ridge ||c||^2 for each column of rhs.
  Matrix solve(const Eigen::Ref<const Matrix>& rhs) const {
    Matrix padded = Matrix::Zero(n_ + m_, rhs.cols());
    padded.topRows(n_) = rhs;
    return qr_.solve(padded);
  }

 private:
  [[noreturn]] static void throw_singular(const Vector& freq) {
    std::string which;
    if (freq.size() >= 2) {
      Vector sorted = freq;
      std::sort(sorted.begin(), sorted.end());
      Eigen::Index best = 0;
      for (Eigen::Index i = 1; i + 1 < sorted.size(); ++i)
        if (sorted(i + 1) - sorted(i) < sorted(best + 1) - sorted(best)) best = i;
      which = "near-duplicate frequencies " + describe_pair(sorted(best), sorted(best + 1));
    } else {
      std::ostringstream os;
      os.precision(12);
      os << "frequency " << freq(0) << " rad/s is not resolvable on this segment";
      which = os.str();
    }
    throw SingularBasisError("singular Fourier basis: " + which);
  }

  Eigen::Index n_;
  Eigen::Index m_;
  Eigen::ColPivHouseholderQR<Matrix> qr_;
};

}  // namespace detail

/**
 * @brief Coefficients minimizing ||z - Omega A||^2 + ridge ||A||^2.
 *
 * Solved by column-pivoted Householder QR of the ridge-augmented system
 * [Omega; sqrt(ridge) I] A = [z; 0].
 */
inline CoefficientVector solve_amplitudes(std::span<const double> z, const Vector& freq,
                                          std::span<const double> times, double ridge) {
  detail::check_lengths(z, times);
  detail::require_overdetermined(z.size(), static_cast<std::size_t>(freq.size()));
  if (!(ridge >= 0.0)) throw ConfigError("ridge must be >= 0");
  const detail::AugmentedBasis basis(freq, times, ridge);
  return CoefficientVector::from_stacked(basis.solve(detail::as_vector(z)));
}

/// E(A, w) = sum_t (z_t - A Omega(w t))^2
inline double objective(std::span<const double> z, const CoefficientVector& coef, const Vector& freq,
                        std::span<const double> times) {
  detail::check_lengths(z, times);
  const auto t = detail::as_vector(times);
  return detail::sum_squares(detail::model(coef, freq, t) - detail::as_vector(z));
}

/// dE/dw_k = sum_t 2 (A Omega - z_t) t (-a_k sin(w_k t) + b_k cos(w_k t)), A held fixed.
inline Vector objective_gradient(std::span<const double> z, const CoefficientVector& coef,
                                 const Vector& freq, std::span<const double> times) {
  detail::check_lengths(z, times);
  const auto t = detail::as_vector(times);
  const Vector r = detail::model(coef, freq, t) - detail::as_vector(z);
  Vector g(freq.size());
  for (Eigen::Index k = 0; k < freq.size(); ++k) {
    const Eigen::ArrayXd phase = t.array() * freq(k);
    const Eigen::ArrayXd dcol = t.array() * (-coef.a(k) * phase.sin() + coef.b(k) * phase.cos());
    g(k) = 2.0 * (r.array() * dcol).sum();
  }
  return g;
}

/**
 * @brief FFT seed for K mode frequencies (rad/s, ascending).
 *
 * Picks the largest non-DC local maxima of the magnitude spectrum (ties go
 * to the lower frequency). The first `reserved_low` slots, and any slots left
 * when the spectrum has too few maxima, are filled from the ladder
 * omega_min * 2^j so a slowly varying mean always gets a seed.
 */
inline Vector fft_initial_guess(std::span<const double> z, double dt, std::size_t num_modes,
                                double omega_min = 1e-6, std::size_t reserved_low = 0) {
  if (z.size() < 4) throw ConfigError("fft_initial_guess needs at least 4 samples");
  if (num_modes < 1) throw ConfigError("fft_initial_guess needs K >= 1");
  if (!(dt > 0.0)) throw ConfigError("fft_initial_guess needs dt > 0");

  const std::size_t n = z.size();
  std::vector<double> in(z.begin(), z.end());
  std::vector<std::complex<double>> spec;
  Eigen::FFT<double> fft;
  fft.fwd(spec, in);

  const std::size_t half = n / 2;
  std::vector<double> mag(half + 1);
  for (std::size_t j = 0; j <= half; ++j) mag[j] = std::abs(spec[j]);
  const double peak = *std::max_element(mag.begin(), mag.end());
  const double floor = 1e-9 * peak;

  std::vector<std::size_t> maxima;
  for (std::size_t j = 1; j <= half; ++j) {
    const bool above_left = mag[j] > mag[j - 1];
    const bool above_right = j == half || mag[j] >= mag[j + 1];
    if (above_left && above_right && mag[j] > floor) maxima.push_back(j);
  }
  std::stable_sort(maxima.begin(), maxima.end(),
                   [&](std::size_t i, std::size_t j) { return mag[i] > mag[j]; });

  const double bin = 2.0 * std::numbers::pi / (static_cast<double>(n) * dt);
  const double nyq = std::numbers::pi / dt;
  const std::size_t reserved = std::min(reserved_low, num_modes);
  const std::size_t from_peaks = std::min(num_modes - reserved, maxima.size());

  std::vector<double> guess;
  for (std::size_t i = 0; i < from_peaks; ++i)
    guess.push_back(std::min(static_cast<double>(maxima[i]) * bin, nyq));
  for (std::size_t j = 0; guess.size() < num_modes; ++j)
    guess.push_back(omega_min * std::ldexp(1.0, static_cast<int>(j)));
  std::sort(guess.begin(), guess.end());
  return Eigen::Map<Vector>(guess.data(), static_cast<Eigen::Index>(guess.size()));
}

/**
 * @brief Fits K Fourier modes to one segment starting from `freq_init`.
 *
 * The initial frequencies are sorted and clamped to [omega_min, Nyquist]
 * first, so the result does not depend on their order. Each iteration
 * computes dE/dw at the current least-squares A, scales each component by
 * the Gauss-Newton diagonal of the variable-projection residual (the
 * derivative column with the current basis projected out), caps the step,
 * and backtracks until the objective with A re-solved at the trial
 * frequencies passes the Armijo test. The recorded objective never
 * increases.
 */
inline SegmentFit fmd(std::span<const double> z, std::span<const double> times, const Vector& freq_init,
                      const FmdConfig& config) {
  config.validate();
  detail::check_lengths(z, times);
  const auto k = static_cast<std::size_t>(freq_init.size());
  if (k == 0) throw ConfigError("fmd needs at least one mode");
  detail::require_overdetermined(z.size(), k);

  const double nyq = detail::nyquist(times);
  for (Eigen::Index i = 0; i < freq_init.size(); ++i) {
    if (!std::isfinite(freq_init(i))) throw ConfigError("initial frequency is not finite");
    if (freq_init(i) > nyq * (1.0 + 1e-12)) throw ConfigError("initial frequency exceeds Nyquist");
  }

  const std::size_t n = z.size();
  const double ridge = config.ridge * static_cast<double>(n);
  const auto t = detail::as_vector(times);
  const auto zv = detail::as_vector(z);
  const double span = times.back() - times.front();
  const double bin = 2.0 * std::numbers::pi * static_cast<double>(n - 1) / (static_cast<double>(n) * span);
  const double max_step = config.step.max_step_bins * bin;

  SegmentFit fit;
  fit.freq = freq_init;
  detail::canonicalize(fit.freq, nullptr);
  detail::clamp(fit.freq, config.omega_min, nyq);
  auto basis = std::make_unique<detail::AugmentedBasis>(fit.freq, times, ridge);
  fit.coef = CoefficientVector::from_stacked(basis->solve(zv));
  fit.residual = objective(z, fit.coef, fit.freq, times);
  if (!std::isfinite(fit.residual)) throw DivergenceError("objective is not finite at the initial guess", fit);
  if (config.record_trace) fit.trace.push_back(fit.residual);

  const Eigen::Index kk = fit.freq.size();
  while (true) {
    if (fit.residual <= config.tol) {
      fit.status = StopStatus::converged_tol;
      break;
    }
    if (fit.iterations >= config.max_iters) {
      fit.status = StopStatus::max_iters;
      break;
    }
    ++fit.iterations;

    const Vector r = detail::model(fit.coef, fit.freq, t) - zv;
    Matrix jac(static_cast<Eigen::Index>(n), kk);  // d(model)/dw_k at fixed A
    for (Eigen::Index j = 0; j < kk; ++j) {
      const Eigen::ArrayXd phase = t.array() * fit.freq(j);
      jac.col(j) = (t.array() * (-fit.coef.a(j) * phase.sin() + fit.coef.b(j) * phase.cos())).matrix();
    }
    const Vector g = 2.0 * jac.transpose() * r;
    if (!g.allFinite()) throw DivergenceError("gradient is not finite", fit);

    Vector dir(kk);
    if (config.step.diagonal_scaling) {
      const Matrix projected = jac - design_matrix(fit.freq, times) * basis->solve(jac);
      const Vector d = 2.0 * projected.colwise().squaredNorm().transpose();
      const double dmax = d.maxCoeff();
      for (Eigen::Index j = 0; j < kk; ++j) {
        const double scale = std::max(d(j), config.step.scale_floor * dmax);
        dir(j) = scale > 0.0 ? -g(j) / scale : 0.0;
      }
    } else {
      dir = -g;
    }
    for (Eigen::Index j = 0; j < kk; ++j) dir(j) = std::clamp(dir(j), -max_step, max_step);

    bool accepted = false;
    Vector trial_freq;
    CoefficientVector trial_coef;
    std::unique_ptr<detail::AugmentedBasis> trial_basis;
    double trial_e = fit.residual;
    double s = 1.0;
    for (int bt = 0; bt <= config.step.max_backtracks; ++bt, s *= config.step.shrink) {
      trial_freq = fit.freq + s * dir;
      detail::clamp(trial_freq, config.omega_min, nyq);
      const double descent = g.dot(trial_freq - fit.freq);
      if (!(descent < 0.0)) continue;
      try {
        trial_basis = std::make_unique<detail::AugmentedBasis>(trial_freq, times, ridge);
      } catch (const SingularBasisError&) {
        continue;
      }
      trial_coef = CoefficientVector::from_stacked(trial_basis->solve(zv));
      trial_e = detail::sum_squares(detail::model(trial_coef, trial_freq, t) - zv);
      if (!std::isfinite(trial_e) || !trial_coef.a.allFinite() || !trial_coef.b.allFinite())
        throw DivergenceError("objective became non-finite during descent", fit);
      if (trial_e < fit.residual && trial_e <= fit.residual + config.step.armijo * descent) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      fit.status = StopStatus::converged_rel;
      break;
    }

    const double previous = fit.residual;
    const double moved = (trial_freq - fit.freq).cwiseAbs().maxCoeff();
    fit.freq = trial_freq;
    fit.coef = std::move(trial_coef);
    basis = std::move(trial_basis);
    fit.residual = trial_e;
    if (config.record_trace) fit.trace.push_back(fit.residual);

    if (fit.residual <= config.tol) {
      fit.status = StopStatus::converged_tol;
      break;
    }
    if (previous - fit.residual <= config.rel_tol * previous || moved <= config.freq_tol_bins * bin) {
      fit.status = StopStatus::converged_rel;
      break;
    }
  }
  detail::canonicalize(fit.freq, &fit.coef);
  fit.residual = objective(z, fit.coef, fit.freq, times);
  return fit;
}

/// Convenience overload for a segment of the uniform grid centered at its midpoint.
inline std::vector<double> centered_times(std::size_t n, double dt) {
  std::vector<double> t(n);
  const double mid = 0.5 * static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) t[i] = (static_cast<double>(i) - mid) * dt;
  return t;
}

}  // namespace nfmd
