#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "nfmd/config.hpp"
#include "nfmd/decompose.hpp"
#include "nfmd/error.hpp"
#include "nfmd/noise.hpp"
#include "nfmd/oscillator.hpp"
#include "nfmd/perturbation.hpp"

namespace nfmd {

/// splitmix64 finalizer; derives independent per-item seeds from a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Log-spaced values from lo to hi inclusive.
inline std::vector<double> log_space(double lo, double hi, std::size_t count) {
  if (count == 0) return {};
  if (count == 1) return {lo};
  std::vector<double> out(count);
  const double a = std::log10(lo), b = std::log10(hi);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  return out;
}

/**
 * @brief Everything a relaxation-time sweep needs.
 *
 * Defaults describe a resonantly driven oscillator in normalized units: unit
 * mass, 2 MHz resonance, static deflection 1 for the perturbation and a
 * unit steady ripple for the drive, sampled at 25 ns and analyzed with a
 * 40-sample (1 us) window.
 */
struct TauSweepConfig {
  OscillatorSpec osc;
  Drive drive;
  double gamma = 1.0;
  double t_prime = 1e-5;
  std::vector<double> taus;
  double snr_db = 100.0;
  double dt_out = 25e-9;
  /// Record length after the onset: max(min_tail, tail_taus * tau).
  double min_tail = 5e-5;
  double tail_taus = 6.0;
  NfmdConfig nfmd;
  FitVariant variant = FitVariant::lambda_zero;
  /// Fit the onset with alpha and tau. Holding it at the true value hides
  /// the window-scale smoothing of the mean.
  bool fix_t_prime = false;
  std::uint64_t seed = 1;
  /// Concurrent sweep items; 0 or 1 runs sequentially.
  std::size_t threads = 1;
  /// Start from the steady drive response so no start-up transient leaks
  /// into the mean.
  bool steady_start = true;

  double duration(double tau) const { return t_prime + std::max(min_tail, tail_taus * tau); }
};

inline TauSweepConfig default_tau_sweep() {
  TauSweepConfig cfg;
  const double f0 = 2e6;
  cfg.osc.beta = 0.01;
  cfg.osc.omega0 = 2.0 * std::numbers::pi * f0;
  cfg.osc.mass = 1.0;
  const double k = cfg.osc.mass * cfg.osc.omega0 * cfg.osc.omega0;
  cfg.gamma = k;
  cfg.drive.omega = cfg.osc.omega0;
  cfg.drive.alpha = 2.0 * cfg.osc.beta * k;
  cfg.taus = log_space(1e-7, 1e-3, 8);
  cfg.nfmd.window = 40;
  cfg.nfmd.num_modes = 2;
  cfg.nfmd.stride = 1;
  return cfg;
}

/**
 * @brief Reads overrides for a sweep from a key-value config.
 *
 * Keys: the oscillator keys, `drive.alpha`, `drive.omega`/`drive.f`,
 * `gamma`, `t_prime`, `tau.min`, `tau.max`, `tau.count`, `snr`, `dt`,
 * `min_tail`, `tail_taus`, `window`, `stride`, `modes`, `seed`, `threads`.
 */
inline TauSweepConfig tau_sweep_from_config(const KeyValueConfig& kv) {
  TauSweepConfig cfg = default_tau_sweep();
  if (kv.contains("omega0") || kv.contains("f0")) {
    cfg.osc = oscillator_from_config(kv);
  } else {
    cfg.osc.beta = kv.number("beta", cfg.osc.beta);
    cfg.osc.mass = kv.number("mass", cfg.osc.mass);
    cfg.osc.max_phase_step = kv.number("max_phase_step", cfg.osc.max_phase_step);
  }
  const double k = cfg.osc.mass * cfg.osc.omega0 * cfg.osc.omega0;
  cfg.gamma = kv.number("gamma", k);
  cfg.drive.alpha = kv.number("drive.alpha", 2.0 * cfg.osc.beta * k);
  if (auto hz = kv.optional_number("drive.f"))
    cfg.drive.omega = 2.0 * std::numbers::pi * *hz;
  else
    cfg.drive.omega = kv.number("drive.omega", cfg.osc.omega0);
  cfg.t_prime = kv.number("t_prime", cfg.t_prime);
  const double lo = kv.number("tau.min", 1e-7);
  const double hi = kv.number("tau.max", 1e-3);
  const auto count = static_cast<std::size_t>(kv.number("tau.count", 8));
  if (!(lo > 0.0 && hi >= lo)) throw ConfigError("tau range must be positive and ordered");
  cfg.taus = log_space(lo, hi, count);
  cfg.snr_db = kv.number("snr", cfg.snr_db);
  cfg.dt_out = kv.number("dt", cfg.dt_out);
  cfg.min_tail = kv.number("min_tail", cfg.min_tail);
  cfg.tail_taus = kv.number("tail_taus", cfg.tail_taus);
  cfg.nfmd.window = static_cast<std::size_t>(kv.number("window", static_cast<double>(cfg.nfmd.window)));
  cfg.nfmd.stride = static_cast<std::size_t>(kv.number("stride", static_cast<double>(cfg.nfmd.stride)));
  cfg.nfmd.num_modes = static_cast<std::size_t>(kv.number("modes", static_cast<double>(cfg.nfmd.num_modes)));
  cfg.seed = static_cast<std::uint64_t>(kv.number("seed", static_cast<double>(cfg.seed)));
  cfg.threads = static_cast<std::size_t>(kv.number("threads", static_cast<double>(cfg.threads)));
  return cfg;
}

/// Combined and perturbation-only runs for one relaxation time.
struct OscillatorRun {
  TimeSeries combined;     ///< drive + perturbation, noise added
  TimeSeries perturbation; ///< perturbation only, from rest, noiseless
  Decomposition decomposition;
  MeanTrack mean;
};

inline OscillatorRun run_oscillator(const TauSweepConfig& cfg, double tau, std::uint64_t seed) {
  OscillatorSpec osc = cfg.osc;
  if (cfg.steady_start) {
    auto [x0, v0] = steady_state_initial(osc, cfg.drive);
    osc.x0 = x0;
    osc.v0 = v0;
  }
  ForcingSpec both;
  both.drive = cfg.drive;
  both.perturbation = Perturbation{cfg.gamma, cfg.t_prime, tau};
  const double duration = cfg.duration(tau);
  TimeSeries clean = simulate(osc, both, duration, cfg.dt_out);

  OscillatorSpec rest = cfg.osc;
  rest.x0 = rest.v0 = 0.0;
  ForcingSpec only;
  only.perturbation = both.perturbation;
  TimeSeries xp = simulate(rest, only, duration, cfg.dt_out);

  TimeSeries noisy = add_noise(clean, cfg.snr_db, seed);
  Decomposition d = decompose(noisy, cfg.nfmd);
  MeanTrack mean = instantaneous_mean(d);
  return {std::move(noisy), std::move(xp), std::move(d), std::move(mean)};
}

/// RMS of (mean - x_p at the window centers) divided by the range of x_p.
inline double mean_vs_perturbation_error(const OscillatorRun& run) {
  const auto& mu = run.mean.mu;
  const auto& xp = run.perturbation;
  const std::size_t half = (run.decomposition.window - 1) / 2;
  const bool odd_window = run.decomposition.window % 2 == 1;
  double ss = 0.0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    // Even windows have their midpoint halfway between two samples.
    const std::size_t s = i * run.decomposition.stride + half;
    const double ref = odd_window ? xp[s] : 0.5 * (xp[s] + xp[s + 1]);
    ss += (mu[i] - ref) * (mu[i] - ref);
    lo = std::min(lo, ref);
    hi = std::max(hi, ref);
  }
  const double range = hi - lo;
  if (!(range > 0.0)) return std::numeric_limits<double>::infinity();
  return std::sqrt(ss / static_cast<double>(mu.size())) / range;
}

struct SweepPoint {
  double tau_true = 0.0;
  double tau_est = std::numeric_limits<double>::quiet_NaN();
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double rss = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";  ///< ok | degenerate
  std::uint64_t seed = 0;
};

inline SweepPoint tau_sweep_item(const TauSweepConfig& cfg, std::size_t index) {
  const double tau = cfg.taus[index];
  SweepPoint p;
  p.tau_true = tau;
  p.seed = derive_seed(cfg.seed, index);
  try {
    OscillatorRun run = run_oscillator(cfg, tau, p.seed);
    FixedParams fixed;
    if (cfg.fix_t_prime) fixed.t_prime = cfg.t_prime;
    FitOptions opts;
    opts.onset_backoff = static_cast<double>(cfg.nfmd.window) * cfg.dt_out;
    // The first half of the lead-in is quiet by construction of the record.
    opts.pre_duration = 0.5 * cfg.t_prime;
    PerturbationFit fit = fit_perturbation_model(run.mean.centers, run.mean.mu, cfg.variant, fixed, opts);
    p.tau_est = fit.tau;
    p.alpha = fit.alpha;
    p.rss = fit.rss;
    p.status = fit.degenerate ? "degenerate" : "ok";
  } catch (const OnsetNotFoundError&) {
    // Nothing rose above the noise floor: no perturbation to fit.
    p.alpha = 0.0;
    p.status = "degenerate";
  } catch (const SweepItemError&) {
    throw;
  } catch (const Error& e) {
    throw SweepItemError(index, "tau = " + io::format_double(tau, 6) + ": " + e.what());
  }
  return p;
}

/**
 * @brief Simulates, decomposes and fits one record per relaxation time.
 *
 * Item i uses seed derive_seed(cfg.seed, i), so results do not depend on
 * the thread count.
 */
inline std::vector<SweepPoint> tau_sweep(const TauSweepConfig& cfg) {
  for (double tau : cfg.taus)
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("relaxation times must be > 0");
  std::vector<SweepPoint> out(cfg.taus.size());
  if (cfg.threads <= 1) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = tau_sweep_item(cfg, i);
    return out;
  }
  std::vector<std::future<SweepPoint>> jobs;
  for (std::size_t i = 0; i < out.size(); ++i)
    jobs.push_back(std::async(std::launch::async, [&cfg, i] { return tau_sweep_item(cfg, i); }));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = jobs[i].get();
  return out;
}

/// Least-squares slope of log(tau_est) against log(tau_true).
inline double log_log_slope(const std::vector<SweepPoint>& pts, double tau_lo, double tau_hi) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (const auto& p : pts) {
    if (p.tau_true < tau_lo * (1 - 1e-9) || p.tau_true > tau_hi * (1 + 1e-9)) continue;
    if (!(p.tau_est > 0.0)) continue;
    const double x = std::log(p.tau_true), y = std::log(p.tau_est);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double dn = static_cast<double>(n);
  return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

}  // namespace nfmd
