#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "nfmd/error.hpp"

namespace nfmd {

/**
 * @brief Uniformly sampled real-valued signal.
 *
 * Sample i sits at time t0 + i * dt. Only the grid origin and spacing are
 * stored; there are no per-sample timestamps.
 */
class TimeSeries {
 public:
  TimeSeries(std::vector<double> samples, double dt, double t0 = 0.0)
      : samples_(std::move(samples)), dt_(dt), t0_(t0) {
    if (samples_.empty()) throw InputError("time series must be non-empty");
    if (!std::isfinite(dt_) || dt_ <= 0.0)
      throw InputError("time series dt must be finite and strictly positive");
    if (!std::isfinite(t0_)) throw InputError("time series t0 must be finite");
  }

  std::span<const double> samples() const noexcept { return samples_; }
  const std::vector<double>& values() const noexcept { return samples_; }
  double operator[](std::size_t i) const { return samples_[i]; }

  std::size_t size() const noexcept { return samples_.size(); }
  double dt() const noexcept { return dt_; }
  double t0() const noexcept { return t0_; }
  double sample_rate() const noexcept { return 1.0 / dt_; }
  /// Total covered time (n - 1) * dt.
  double span() const noexcept { return static_cast<double>(samples_.size() - 1) * dt_; }

  double time(std::size_t i) const noexcept { return t0_ + static_cast<double>(i) * dt_; }

  std::vector<double> times() const {
    std::vector<double> t(samples_.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = time(i);
    return t;
  }

  /// Same grid, new sample values.
  TimeSeries with_samples(std::vector<double> samples) const {
    return TimeSeries(std::move(samples), dt_, t0_);
  }

  friend bool operator==(const TimeSeries&, const TimeSeries&) = default;

 private:
  std::vector<double> samples_;
  double dt_;
  double t0_;
};

}  // namespace nfmd
