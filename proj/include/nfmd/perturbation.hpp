#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>

#include "nfmd/error.hpp"

namespace nfmd {

enum class FitVariant { fixed_tprime, fixed_lambda, both_fixed, lambda_zero, all_free };

inline std::string_view to_string(FitVariant v) {
  switch (v) {
    case FitVariant::fixed_tprime: return "fixed_tprime";
    case FitVariant::fixed_lambda: return "fixed_lambda";
    case FitVariant::both_fixed: return "both_fixed";
    case FitVariant::lambda_zero: return "lambda_zero";
    case FitVariant::all_free: return "all_free";
  }
  return "unknown";
}

/// Accepts underscores or dashes ("lambda-zero").
inline FitVariant parse_fit_variant(std::string_view name) {
  std::string s(name);
  std::replace(s.begin(), s.end(), '-', '_');
  for (auto v : {FitVariant::fixed_tprime, FitVariant::fixed_lambda, FitVariant::both_fixed,
                 FitVariant::lambda_zero, FitVariant::all_free})
    if (to_string(v) == s) return v;
  throw ConfigError("unknown fit variant '" + std::string(name) +
                    "' (expected fixed_tprime, fixed_lambda, both_fixed, lambda_zero, all_free)");
}

/// H(t - t') alpha exp(-lambda (t - t')) (1 - exp(-(t - t') / tau))
inline double perturbation_model(double t, double alpha, double lambda, double tau, double t_prime) {
  const double u = t - t_prime;
  if (u <= 0.0) return 0.0;
  return alpha * std::exp(-lambda * u) * -std::expm1(-u / tau);
}

struct FixedParams {
  std::optional<double> t_prime;
  std::optional<double> lambda;
};

struct FitOptions {
  /// Subtracted from the detected onset (s); typically one window duration.
  double onset_backoff = 0.0;
  double noise_floor_factor = 5.0;
  /// Leading fraction of the record used to estimate the noise floor.
  double pre_fraction = 0.1;
  /// When > 0, the floor uses the centers within this span of the first
  /// one instead of `pre_fraction`.
  double pre_duration = 0.0;
  std::size_t min_post_onset = 20;
  double xtol = 1e-8;
  int max_evals = 2000;
};

struct PerturbationFit {
  double alpha = 0.0;
  double lambda = 0.0;
  double tau = 0.0;
  double t_prime = 0.0;
  /// alpha, lambda, tau, t_prime
  std::array<bool, 4> fixed_mask{};
  double rss = 0.0;
  double rss_init = 0.0;
  FitVariant variant = FitVariant::lambda_zero;
  /// |alpha| is within 3 robust residual deviations of zero.
  bool degenerate = false;
  int evaluations = 0;
};

namespace detail {

// Parameters are fit in normalized time s = (t - origin) / scale with
// tau as log(tau / scale), which keeps the problem well scaled across
// decades of tau.
struct PerturbationFunctor {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  std::span<const double> s;
  std::span<const double> mu;
  // Full parameter vector [alpha, Lambda, log tau', s'] and which are free.
  Eigen::Vector4d base;
  std::array<bool, 4> free{};
  int n_free = 0;

  int inputs() const { return n_free; }
  int values() const { return static_cast<int>(s.size()); }

  Eigen::Vector4d expand(const Eigen::VectorXd& x) const {
    Eigen::Vector4d p = base;
    int j = 0;
    for (int i = 0; i < 4; ++i)
      if (free[i]) p(i) = x(j++);
    return p;
  }

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& fvec) const {
    const Eigen::Vector4d p = expand(x);
    const double tau = std::exp(p(2));
    for (std::size_t i = 0; i < s.size(); ++i)
      fvec(static_cast<Eigen::Index>(i)) = perturbation_model(s[i], p(0), p(1), tau, p(3)) - mu[i];
    return 0;
  }

  int df(const Eigen::VectorXd& x, Eigen::MatrixXd& fjac) const {
    const Eigen::Vector4d p = expand(x);
    const double alpha = p(0), lam = p(1), tau = std::exp(p(2)), sp = p(3);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const double u = s[i] - sp;
      std::array<double, 4> g{0.0, 0.0, 0.0, 0.0};
      if (u > 0.0) {
        const double decay = std::exp(-lam * u);
        const double e = std::exp(-u / tau);
        const double rise = -std::expm1(-u / tau);
        g[0] = decay * rise;
        g[1] = -u * alpha * decay * rise;
        g[2] = -alpha * decay * e * u / tau;
        g[3] = -alpha * decay * (-lam * rise + e / tau);
      }
      int j = 0;
      for (int k = 0; k < 4; ++k)
        if (free[k]) fjac(r, j++) = g[k];
    }
    return 0;
  }
};


}  // namespace detail

/// First center past the first `n_pre` where |mu| exceeds factor x their
/// RMS, or nullopt.
inline std::optional<std::size_t> detect_onset(std::span<const double> mu, std::size_t n_pre, double factor) {
  const std::size_t n = mu.size();
  n_pre = std::clamp<std::size_t>(n_pre, 3, n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n_pre; ++i) ss += mu[i] * mu[i];
  const double floor = std::sqrt(ss / static_cast<double>(n_pre));
  for (std::size_t i = n_pre; i < n; ++i)
    if (std::abs(mu[i]) > factor * floor && std::abs(mu[i]) > 0.0) return i;
  return std::nullopt;
}

/**
 * @brief Least-squares fit of the relaxation model to an instantaneous mean.
 *
 * Free parameters depend on the variant; held parameters are echoed
 * verbatim. Uses Levenberg-Marquardt (MINPACK), which only accepts steps
 * that reduce the residual sum of squares.
 */
inline PerturbationFit fit_perturbation_model(std::span<const double> centers, std::span<const double> mu,
                                              FitVariant variant, const FixedParams& fixed = {},
                                              const FitOptions& options = {}) {
  if (centers.size() != mu.size()) throw InputError("centers and mean have different lengths");
  const std::size_t n = centers.size();
  if (n < 2) throw FitError("need at least two points to fit");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(centers[i]) || !std::isfinite(mu[i])) throw InputError("non-finite fit input");
    if (i > 0 && !(centers[i] > centers[i - 1])) throw InputError("centers must be strictly increasing");
  }

  PerturbationFit out;
  out.variant = variant;
  bool fix_tp = false, fix_lam = false;
  double lam0 = 0.0;
  switch (variant) {
    case FitVariant::fixed_tprime:
      fix_tp = true;
      break;
    case FitVariant::fixed_lambda:
      fix_lam = true;
      break;
    case FitVariant::both_fixed:
      fix_tp = fix_lam = true;
      break;
    case FitVariant::lambda_zero:
      fix_lam = true;
      fix_tp = fixed.t_prime.has_value();
      break;
    case FitVariant::all_free:
      break;
  }
  if (fix_tp && !fixed.t_prime) throw ConfigError(std::string(to_string(variant)) + " needs a fixed t_prime");
  if (fix_lam && variant != FitVariant::lambda_zero) {
    if (!fixed.lambda) throw ConfigError(std::string(to_string(variant)) + " needs a fixed lambda");
    lam0 = *fixed.lambda;
  }

  // Onset.
  double t_prime = 0.0;
  if (fix_tp) {
    t_prime = *fixed.t_prime;
  } else {
    std::size_t n_pre = static_cast<std::size_t>(std::floor(options.pre_fraction * static_cast<double>(n)));
    if (options.pre_duration > 0.0)
      n_pre = static_cast<std::size_t>(
          std::upper_bound(centers.begin(), centers.end(), centers[0] + options.pre_duration) - centers.begin());
    auto onset = detect_onset(mu, n_pre, options.noise_floor_factor);
    if (!onset) throw OnsetNotFoundError("no point exceeds the pre-onset noise floor");
    t_prime = centers[*onset] - options.onset_backoff;
  }

  std::size_t first_post = n;
  for (std::size_t i = 0; i < n; ++i)
    if (centers[i] > t_prime) {
      first_post = i;
      break;
    }
  const std::size_t n_post = n - first_post;
  if (n_post < options.min_post_onset)
    throw FitError("only " + std::to_string(n_post) + " points after onset (need " +
                   std::to_string(options.min_post_onset) + ")");

  // Initial guesses: plateau from the tail, tau from the (1 - 1/e) crossing.
  const std::size_t tail = std::max<std::size_t>(1, n_post / 10);
  double plateau = 0.0;
  for (std::size_t i = n - tail; i < n; ++i) plateau += mu[i];
  plateau /= static_cast<double>(tail);
  double peak = 0.0;
  for (std::size_t i = first_post; i < n; ++i)
    if (std::abs(mu[i]) > std::abs(peak)) peak = mu[i];
  const double level = lam0 > 0.0 || std::abs(plateau) < 0.5 * std::abs(peak) ? peak : plateau;
  const double target = (1.0 - std::exp(-1.0)) * level;
  const double spacing = (centers[n - 1] - centers[0]) / static_cast<double>(n - 1);
  double tau0 = centers[n - 1] - t_prime;
  for (std::size_t i = first_post; i < n; ++i)
    if ((level >= 0.0 && mu[i] >= target) || (level < 0.0 && mu[i] <= target)) {
      tau0 = centers[i] - t_prime;
      break;
    }
  tau0 = std::max(tau0, spacing);

  const double origin = centers[0];
  const double scale = centers[n - 1] - centers[0];
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = (centers[i] - origin) / scale;

  detail::PerturbationFunctor f;
  f.s = s;
  f.mu = mu;
  f.base << level, lam0 * scale, std::log(tau0 / scale), (t_prime - origin) / scale;
  f.free = {true, !fix_lam, true, !fix_tp};
  f.n_free = static_cast<int>(std::count(f.free.begin(), f.free.end(), true));

  Eigen::VectorXd x(f.n_free);
  {
    int j = 0;
    for (int i = 0; i < 4; ++i)
      if (f.free[i]) x(j++) = f.base(i);
  }
  Eigen::VectorXd resid(static_cast<Eigen::Index>(n));
  f(x, resid);
  out.rss_init = resid.squaredNorm();

  Eigen::LevenbergMarquardt<detail::PerturbationFunctor> lm(f);
  lm.parameters.xtol = options.xtol;
  lm.parameters.ftol = 1e-14;
  lm.parameters.maxfev = options.max_evals;
  lm.minimize(x);
  out.evaluations = static_cast<int>(lm.nfev);

  f(x, resid);
  double rss = resid.squaredNorm();
  if (!std::isfinite(rss) || rss > out.rss_init) {
    // Keep the initialization; the contract is rss <= rss(init).
    int j = 0;
    for (int i = 0; i < 4; ++i)
      if (f.free[i]) x(j++) = f.base(i);
    f(x, resid);
    rss = out.rss_init;
  }
  const Eigen::Vector4d p = f.expand(x);
  out.alpha = p(0);
  out.lambda = fix_lam ? lam0 : p(1) / scale;
  out.tau = std::exp(p(2)) * scale;
  out.t_prime = fix_tp ? *fixed.t_prime : origin + p(3) * scale;
  out.fixed_mask = {false, fix_lam, false, fix_tp};
  out.rss = rss;
  // Robust residual scale (1.4826 x median absolute residual) so a few
  // outlier windows at a discontinuity do not mask a clear amplitude.
  std::vector<double> abs_res(n);
  for (std::size_t i = 0; i < n; ++i) abs_res[i] = std::abs(resid(static_cast<Eigen::Index>(i)));
  std::nth_element(abs_res.begin(), abs_res.begin() + static_cast<std::ptrdiff_t>(n / 2), abs_res.end());
  const double spread = 1.4826 * abs_res[n / 2];
  out.degenerate = !(std::abs(out.alpha) > 3.0 * spread) || !std::isfinite(out.tau);
  return out;
}

}  // namespace nfmd
