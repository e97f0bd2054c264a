#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nfmd/config.hpp"
#include "nfmd/error.hpp"
#include "nfmd/time_series.hpp"

namespace nfmd {

/// x'' + 2 beta omega0 x' + omega0^2 x = F(t) / m
struct OscillatorSpec {
  double beta = 0.01;
  double omega0 = 1.0;  ///< rad/s
  double mass = 1.0;
  double x0 = 0.0;
  double v0 = 0.0;
  /// Upper bound on omega0 * dt_sim used when choosing the internal step.
  double max_phase_step = 5e-3;

  void validate() const {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("oscillator beta must be >= 0");
    if (!(omega0 > 0.0) || !std::isfinite(omega0)) throw ConfigError("oscillator omega0 must be > 0");
    if (!(mass > 0.0) || !std::isfinite(mass)) throw ConfigError("oscillator mass must be > 0");
    if (!std::isfinite(x0) || !std::isfinite(v0)) throw ConfigError("oscillator initial state must be finite");
    if (!(max_phase_step > 0.0 && max_phase_step < 0.1))
      throw ConfigError("oscillator max_phase_step must be in (0, 0.1)");
  }
};

/// alpha cos(omega t); the real part of alpha e^{i omega t}.
struct Drive {
  double alpha = 0.0;
  double omega = 0.0;
};

/// H(t - t') gamma (1 - exp(-(t - t') / tau))
struct Perturbation {
  double gamma = 0.0;
  double t_prime = 0.0;
  double tau = 1.0;
};

struct ForcingSpec {
  std::optional<Drive> drive;
  std::optional<Perturbation> perturbation;

  void validate() const {
    if (!drive && !perturbation) throw ConfigError("forcing needs a drive, a perturbation, or both");
    if (drive && (!std::isfinite(drive->alpha) || !std::isfinite(drive->omega)))
      throw ConfigError("drive parameters must be finite");
    if (perturbation) {
      if (!(perturbation->tau > 0.0) || !std::isfinite(perturbation->tau))
        throw ConfigError("perturbation tau must be > 0");
      if (!std::isfinite(perturbation->gamma) || !std::isfinite(perturbation->t_prime))
        throw ConfigError("perturbation parameters must be finite");
    }
  }
};

inline double eval_perturbation(const Perturbation& p, double t) {
  const double u = t - p.t_prime;
  if (u < 0.0) return 0.0;
  return p.gamma * -std::expm1(-u / p.tau);
}

inline double eval_forcing(const ForcingSpec& f, double t) {
  double force = 0.0;
  if (f.drive) force += f.drive->alpha * std::cos(f.drive->omega * t);
  if (f.perturbation) force += eval_perturbation(*f.perturbation, t);
  return force;
}

/// Steady-state response to `drive` at t = 0, as (x0, v0).
inline std::pair<double, double> steady_state_initial(const OscillatorSpec& osc, const Drive& drive) {
  const std::complex<double> denom(osc.omega0 * osc.omega0 - drive.omega * drive.omega,
                                   2.0 * osc.beta * osc.omega0 * drive.omega);
  const std::complex<double> x = drive.alpha / osc.mass / denom;
  return {x.real(), -drive.omega * x.imag()};
}

/// Amplitude of the steady driven response.
inline double steady_state_amplitude(const OscillatorSpec& osc, const Drive& drive) {
  const double r = drive.omega / osc.omega0;
  return drive.alpha / (osc.mass * osc.omega0 * osc.omega0) /
         std::sqrt((1.0 - r * r) * (1.0 - r * r) + (2.0 * osc.beta * r) * (2.0 * osc.beta * r));
}

/**
 * @brief Integrates the forced oscillator with classical RK4.
 *
 * Output is x(t) at i * dt_out for i = 0 .. floor(duration / dt_out). The
 * internal step divides dt_out; by default it is the largest such step with
 * omega0 * h <= max_phase_step. An explicit `dt_sim` is rounded to divide
 * dt_out and must keep omega0 * h < 0.1.
 */
inline TimeSeries simulate(const OscillatorSpec& osc, const ForcingSpec& forcing, double duration, double dt_out,
                           std::optional<double> dt_sim = std::nullopt) {
  osc.validate();
  forcing.validate();
  if (!(duration > 0.0) || !std::isfinite(duration)) throw ConfigError("simulation duration must be > 0");
  if (!(dt_out > 0.0) || !std::isfinite(dt_out)) throw ConfigError("simulation dt must be > 0");

  std::size_t substeps = 0;
  if (dt_sim) {
    if (!(*dt_sim > 0.0) || *dt_sim > dt_out * (1.0 + 1e-12))
      throw ConfigError("internal step must be in (0, dt_out]");
    substeps = static_cast<std::size_t>(std::llround(dt_out / *dt_sim));
    if (substeps == 0) substeps = 1;
  } else {
    substeps = static_cast<std::size_t>(std::ceil(osc.omega0 * dt_out / osc.max_phase_step - 1e-12));
    if (substeps == 0) substeps = 1;
  }
  const double h = dt_out / static_cast<double>(substeps);
  if (!(osc.omega0 * h < 0.1))
    throw ConfigError("step resolution guard violated: omega0 * dt_sim = " + std::to_string(osc.omega0 * h) +
                      " (must be < 0.1)");

  const std::size_t n = static_cast<std::size_t>(std::floor(duration / dt_out + 1e-9)) + 1;
  const double damping = 2.0 * osc.beta * osc.omega0;
  const double stiffness = osc.omega0 * osc.omega0;
  const double inv_m = 1.0 / osc.mass;
  auto accel = [&](double x, double v, double force) { return force * inv_m - damping * v - stiffness * x; };

  std::vector<double> out(n);
  double x = osc.x0;
  double v = osc.v0;
  out[0] = x;
  const std::size_t total = (n - 1) * substeps;
  for (std::size_t step = 0; step < total; ++step) {
    const double t = static_cast<double>(step) * h;
    const double f0 = eval_forcing(forcing, t);
    const double fm = eval_forcing(forcing, t + 0.5 * h);
    const double f1 = eval_forcing(forcing, t + h);

    const double k1x = v;
    const double k1v = accel(x, v, f0);
    const double k2x = v + 0.5 * h * k1v;
    const double k2v = accel(x + 0.5 * h * k1x, k2x, fm);
    const double k3x = v + 0.5 * h * k2v;
    const double k3v = accel(x + 0.5 * h * k2x, k3x, fm);
    const double k4x = v + h * k3v;
    const double k4v = accel(x + h * k3x, k4x, f1);

    x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    if ((step + 1) % substeps == 0) out[(step + 1) / substeps] = x;
  }
  return TimeSeries(std::move(out), dt_out, 0.0);
}

/**
 * @brief Oscillator from config keys `beta`, `omega0` (rad/s) or `f0` (Hz),
 * `mass`, `x0`, `v0`, `max_phase_step`.
 */
inline OscillatorSpec oscillator_from_config(const KeyValueConfig& cfg) {
  OscillatorSpec osc;
  osc.beta = cfg.number("beta", osc.beta);
  if (cfg.contains("omega0") && cfg.contains("f0")) throw ConfigError("give either omega0 or f0, not both");
  if (auto f0 = cfg.optional_number("f0"))
    osc.omega0 = 2.0 * std::numbers::pi * *f0;
  else
    osc.omega0 = cfg.number("omega0");
  osc.mass = cfg.number("mass", osc.mass);
  osc.x0 = cfg.number("x0", osc.x0);
  osc.v0 = cfg.number("v0", osc.v0);
  osc.max_phase_step = cfg.number("max_phase_step", osc.max_phase_step);
  osc.validate();
  return osc;
}

/**
 * @brief Forcing from `drive.alpha`, `drive.omega` (or `drive.f`, Hz),
 * `perturbation.gamma`, `perturbation.t_prime`, `perturbation.tau`.
 */
inline ForcingSpec forcing_from_config(const KeyValueConfig& cfg) {
  ForcingSpec f;
  if (cfg.contains("drive.alpha")) {
    Drive d;
    d.alpha = cfg.number("drive.alpha");
    if (auto hz = cfg.optional_number("drive.f"))
      d.omega = 2.0 * std::numbers::pi * *hz;
    else
      d.omega = cfg.number("drive.omega");
    f.drive = d;
  }
  if (cfg.contains("perturbation.gamma")) {
    Perturbation p;
    p.gamma = cfg.number("perturbation.gamma");
    p.t_prime = cfg.number("perturbation.t_prime");
    p.tau = cfg.number("perturbation.tau");
    f.perturbation = p;
  }
  f.validate();
  return f;
}

}  // namespace nfmd
