#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nfmd/error.hpp"
#include "nfmd/time_series.hpp"

namespace nfmd {

/// A named closed-form function of time. The description is canonical text
/// that round-trips through the config parser.
class ClosedForm {
 public:
  ClosedForm() : ClosedForm("const 0", [](double) { return 0.0; }) {}
  ClosedForm(std::string description, std::function<double(double)> fn)
      : description_(std::move(description)), fn_(std::move(fn)) {}

  double operator()(double t) const { return fn_(t); }
  const std::string& description() const noexcept { return description_; }

  /// Central-difference derivative; accurate to ~1e-8 relative for the
  /// smooth primitives used here.
  double derivative(double t, double h = 1e-6) const {
    return (fn_(t + h) - fn_(t - h)) / (2.0 * h);
  }

 private:
  std::string description_;
  std::function<double(double)> fn_;
};

namespace forms {

namespace detail {
inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}
}  // namespace detail

/// H(x) with H(0) = 1.
inline double heaviside(double x) { return x >= 0.0 ? 1.0 : 0.0; }

inline ClosedForm constant(double c) {
  return {"const " + detail::fmt(c), [c](double) { return c; }};
}

/// c0 + c1 t
inline ClosedForm linear(double c0, double c1) {
  return {"linear " + detail::fmt(c0) + " " + detail::fmt(c1),
          [c0, c1](double t) { return c0 + c1 * t; }};
}

/// c0 + c1 exp(-t / tau)
inline ClosedForm exponential(double c0, double c1, double tau) {
  return {"exp " + detail::fmt(c0) + " " + detail::fmt(c1) + " " + detail::fmt(tau),
          [c0, c1, tau](double t) { return c0 + c1 * std::exp(-t / tau); }};
}

/// c0 + amp sin(rate t + phase), rate in rad/s
inline ClosedForm sine(double c0, double amp, double rate, double phase = 0.0) {
  return {"sin " + detail::fmt(c0) + " " + detail::fmt(amp) + " " + detail::fmt(rate) + " " +
              detail::fmt(phase),
          [=](double t) { return c0 + amp * std::sin(rate * t + phase); }};
}

/// c0 + amp cos(rate t + phase), rate in rad/s
inline ClosedForm cosine(double c0, double amp, double rate, double phase = 0.0) {
  return {"cos " + detail::fmt(c0) + " " + detail::fmt(amp) + " " + detail::fmt(rate) + " " +
              detail::fmt(phase),
          [=](double t) { return c0 + amp * std::cos(rate * t + phase); }};
}

/// sum_j c_j t^j
inline ClosedForm polynomial(std::vector<double> coeffs) {
  std::string desc = "poly";
  for (double c : coeffs) desc += " " + detail::fmt(c);
  return {desc, [coeffs = std::move(coeffs)](double t) {
            double acc = 0.0;
            for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * t + *it;
            return acc;
          }};
}

/// c0 + jump H(t - onset) (1 - exp(-(t - onset) / tau))
inline ClosedForm step_exp(double c0, double jump, double onset, double tau) {
  return {"step-exp " + detail::fmt(c0) + " " + detail::fmt(jump) + " " + detail::fmt(onset) +
              " " + detail::fmt(tau),
          [=](double t) {
            const double u = t - onset;
            return c0 + jump * heaviside(u) * (1.0 - std::exp(-u / tau));
          }};
}

/// left(t) for t <= breakpoint, right(t) otherwise.
inline ClosedForm piecewise(double breakpoint, ClosedForm left, ClosedForm right) {
  std::string desc =
      "piecewise " + detail::fmt(breakpoint) + " " + left.description() + " | " + right.description();
  return {desc, [breakpoint, left = std::move(left), right = std::move(right)](double t) {
            return t <= breakpoint ? left(t) : right(t);
          }};
}

}  // namespace forms

/// One periodic component A(t) cos(2 pi f(t) t).
struct SyntheticComponent {
  ClosedForm amplitude;
  ClosedForm frequency_hz;

  /// The labelled frequency curve f(t).
  double labelled_frequency_hz(double t) const { return frequency_hz(t); }
  /// Phase derivative of cos(2 pi f(t) t) in Hz: f(t) + t f'(t).
  double phase_rate_hz(double t) const { return frequency_hz(t) + t * frequency_hz.derivative(t); }
};

struct SyntheticSpec {
  std::vector<SyntheticComponent> components;
  ClosedForm mean = forms::constant(0.0);
  double duration = 1.0;
  double dt = 2e-4;

  std::size_t num_samples() const {
    return static_cast<std::size_t>(std::floor(duration / dt + 1e-9)) + 1;
  }

  /// Noise-free closed form at time t.
  double evaluate(double t) const {
    double z = mean(t);
    for (const auto& c : components)
      z += c.amplitude(t) * std::cos(2.0 * std::numbers::pi * c.frequency_hz(t) * t);
    return z;
  }

  /// Canonical text used for hashing and config echo.
  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    os << "duration = " << duration << "\n" << "dt = " << dt << "\n";
    os << "mean = " << mean.description() << "\n";
    for (std::size_t i = 0; i < components.size(); ++i) {
      os << "component." << i + 1 << ".amplitude = " << components[i].amplitude.description() << "\n";
      os << "component." << i + 1 << ".frequency = " << components[i].frequency_hz.description()
         << "\n";
    }
    return os.str();
  }
};

/// Sample mean(t) + sum_l A_l(t) cos(2 pi f_l(t) t) on the grid i * dt.
inline TimeSeries generate(const SyntheticSpec& spec) {
  if (!std::isfinite(spec.dt) || spec.dt <= 0.0) throw ConfigError("synthetic dt must be > 0");
  if (!std::isfinite(spec.duration) || spec.duration < 0.0)
    throw ConfigError("synthetic duration must be >= 0");

  const std::size_t n = spec.num_samples();
  std::vector<double> z(n);
  auto fail = [](const std::string& what, double t) {
    std::ostringstream os;
    os.precision(17);
    os << what << " is not finite at t = " << t;
    throw GenerationError(os.str());
  };
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * spec.dt;
    double acc = spec.mean(t);
    if (!std::isfinite(acc)) fail("mean", t);
    for (std::size_t l = 0; l < spec.components.size(); ++l) {
      const auto& c = spec.components[l];
      const double a = c.amplitude(t);
      const double f = c.frequency_hz(t);
      const std::string name = "component " + std::to_string(l + 1);
      if (!std::isfinite(a)) fail(name + " amplitude", t);
      if (!std::isfinite(f)) fail(name + " frequency", t);
      if (f < 0.0) {
        std::ostringstream os;
        os.precision(17);
        os << name << " frequency is negative (" << f << " Hz) at t = " << t;
        throw GenerationError(os.str());
      }
      acc += a * std::cos(2.0 * std::numbers::pi * f * t);
    }
    if (!std::isfinite(acc)) fail("signal", t);
    z[i] = acc;
  }
  return TimeSeries(std::move(z), spec.dt, 0.0);
}

/**
 * @brief Benchmark signals.
 *
 * "example": two chirping modes over an exponentially relaxing mean.
 * "sharp-omega": the fast mode's frequency function turns on a 10 Hz
 *   saturating step at t = 0.5 s (H(0) = 1).
 * "sharp-mean": one mode over a mean that jumps at t = 0.25 s
 *   (left branch for t <= 0.25).
 *
 * All are 1 s long at dt = 2e-4 s.
 */
inline std::map<std::string, SyntheticSpec> builtin_specs() {
  using namespace forms;
  std::map<std::string, SyntheticSpec> specs;

  SyntheticSpec example;
  example.components = {
      {exponential(1.0, 0.5, 3.0), exponential(360.0, -10.0, 0.5)},
      {exponential(8.0, -0.5, 1.0), linear(80.0, -2.0)},
  };
  example.mean = exponential(1.5, 2.5, 1.5);
  specs.emplace("example", std::move(example));

  SyntheticSpec sharp_omega;
  sharp_omega.components = {
      {exponential(2.0, 1.0, 4.0), step_exp(400.0, 10.0, 0.5, 0.1)},
      {linear(2.0, 2.0), linear(60.0, -1.0)},
  };
  sharp_omega.mean = exponential(1.5, 2.5, 1.5);
  specs.emplace("sharp-omega", std::move(sharp_omega));

  SyntheticSpec sharp_mean;
  sharp_mean.components = {
      {exponential(5.0, -0.5, 3.0), polynomial({245.0, 0.0, 10.0})},
  };
  sharp_mean.mean = piecewise(0.25, sine(0.0, 1.0, 2.0), cosine(0.0, -2.5, 1.0));
  specs.emplace("sharp-mean", std::move(sharp_mean));

  return specs;
}

inline std::string builtin_names() {
  std::string names;
  for (const auto& [name, spec] : builtin_specs()) {
    if (!names.empty()) names += ", ";
    names += name;
  }
  return names;
}

inline SyntheticSpec builtin_spec(std::string_view name) {
  auto specs = builtin_specs();
  auto it = specs.find(std::string(name));
  if (it == specs.end())
    throw ConfigError("unknown synthetic spec '" + std::string(name) + "' (known: " +
                      builtin_names() + ")");
  return it->second;
}

}  // namespace nfmd
