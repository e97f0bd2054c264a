#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <future>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nfmd/error.hpp"
#include "nfmd/fmd.hpp"
#include "nfmd/time_series.hpp"

namespace nfmd {

enum class MeanModeRule { lowest_frequency, explicit_index };
enum class FailurePolicy { abort, skip_and_reseed };
enum class Seeding { warm_start, fft_each_window };

struct NfmdConfig {
  std::size_t window = 250;   ///< samples per segment
  std::size_t stride = 1;     ///< samples between segment starts
  std::size_t num_modes = 1;  ///< K
  FmdConfig fmd{};
  MeanModeRule mean_mode_rule = MeanModeRule::lowest_frequency;
  std::size_t mean_mode_index = 0;  ///< used with MeanModeRule::explicit_index
  /// Seed the lowest FFT slot from the ladder when K >= 2, reserving one
  /// mode for the instantaneous mean.
  bool reserve_mean_mode = true;
  FailurePolicy failure_policy = FailurePolicy::abort;
  Seeding seeding = Seeding::warm_start;
  /// 0 or 1: one sequential warm-start chain. Otherwise the windows are
  /// split into this many contiguous chunks fit concurrently, each seeded
  /// from the FFT of its first window.
  std::size_t parallel_chunks = 0;

  void validate(std::size_t n) const {
    if (num_modes < 1) throw ConfigError("num_modes must be >= 1");
    if (window < 4) throw ConfigError("window must be >= 4 samples");
    if (window < 2 * num_modes + 2)
      throw ConfigError("window of " + std::to_string(window) + " samples is too short for " +
                        std::to_string(num_modes) + " modes (needs >= 2K + 2)");
    if (stride < 1) throw ConfigError("stride must be >= 1");
    if (mean_mode_rule == MeanModeRule::explicit_index && mean_mode_index >= num_modes)
      throw ConfigError("mean_mode_index out of range");
    if (window > n)
      throw SignalTooShortError("window of " + std::to_string(window) + " samples exceeds signal length " +
                                std::to_string(n));
    fmd.validate();
  }

  std::size_t reserved_low() const { return reserve_mean_mode && num_modes >= 2 ? 1 : 0; }
};

/// Per-window fits stacked row-wise; all instantaneous quantities derive from this.
struct Decomposition {
  Matrix freq;                      ///< n_seg x K, rad/s, rows ascending
  Matrix coef;                      ///< n_seg x 2K, [a_1..a_K, b_1..b_K]
  Vector residuals;                 ///< n_seg
  std::vector<double> centers;      ///< segment midpoint times (s)
  std::vector<StopStatus> statuses;
  std::vector<int> iterations;
  std::size_t window = 0;
  std::size_t stride = 1;
  std::size_t num_modes = 0;
  double dt = 0.0;
  std::size_t mean_index = 0;       ///< resolved from the mean-mode rule at build time
  MeanModeRule mean_mode_rule = MeanModeRule::lowest_frequency;

  std::size_t num_windows() const noexcept { return centers.size(); }

};

/// Start/end (exclusive) sample indices of every window.
inline std::vector<std::pair<std::size_t, std::size_t>> segment_indices(std::size_t n, std::size_t window,
                                                                         std::size_t stride) {
  if (window == 0) throw ConfigError("window must be >= 1");
  if (stride == 0) throw ConfigError("stride must be >= 1");
  if (window > n)
    throw SignalTooShortError("window of " + std::to_string(window) + " samples exceeds signal length " +
                              std::to_string(n));
  const std::size_t count = (n - window) / stride + 1;
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.emplace_back(i * stride, i * stride + window);
  return out;
}

namespace detail {

inline void store_row(Decomposition& d, std::size_t row, const SegmentFit& fit) {
  const auto r = static_cast<Eigen::Index>(row);
  const auto k = static_cast<Eigen::Index>(d.num_modes);
  d.freq.row(r) = fit.freq.transpose();
  d.coef.row(r).head(k) = fit.coef.a.transpose();
  d.coef.row(r).tail(k) = fit.coef.b.transpose();
  d.residuals(r) = fit.residual;
  d.statuses[row] = fit.status;
  d.iterations[row] = fit.iterations;
}

inline void store_failed_row(Decomposition& d, std::size_t row) {
  const auto r = static_cast<Eigen::Index>(row);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  d.freq.row(r).setConstant(nan);
  d.coef.row(r).setConstant(nan);
  d.residuals(r) = nan;
  d.statuses[row] = StopStatus::failed;
  d.iterations[row] = 0;
}

/// Fits windows [first, last) as one warm-start chain (or independently
/// seeded when `seeding` says so).
inline void fit_chain(const TimeSeries& z, const NfmdConfig& cfg,
                      const std::vector<std::pair<std::size_t, std::size_t>>& segs,
                      std::span<const double> local_t, std::size_t first, std::size_t last, Decomposition& d) {
  const auto samples = z.samples();
  auto seed_for = [&](std::size_t w) {
    return fft_initial_guess(samples.subspan(segs[w].first, cfg.window), z.dt(), cfg.num_modes,
                             cfg.fmd.omega_min, cfg.reserved_low());
  };
  bool need_seed = true;
  Vector seed;
  for (std::size_t w = first; w < last; ++w) {
    if (need_seed || cfg.seeding == Seeding::fft_each_window) seed = seed_for(w);
    try {
      SegmentFit fit = fmd(samples.subspan(segs[w].first, cfg.window), local_t, seed, cfg.fmd);
      store_row(d, w, fit);
      seed = fit.freq;
      need_seed = false;
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      if (cfg.failure_policy == FailurePolicy::abort) throw WindowError(w, e.what());
      store_failed_row(d, w);
      need_seed = true;
    }
  }
}

}  // namespace detail

/**
 * @brief Sliding-window decomposition.
 *
 * Window i spans samples [i*stride, i*stride + window). Each window is fit
 * in local time centered on its midpoint, and its learned frequencies seed
 * window i+1. The first window of each chain is seeded from the FFT.
 */
inline Decomposition decompose(const TimeSeries& z, const NfmdConfig& cfg) {
  cfg.validate(z.size());
  const auto segs = segment_indices(z.size(), cfg.window, cfg.stride);
  const std::size_t nseg = segs.size();
  const auto k = static_cast<Eigen::Index>(cfg.num_modes);

  Decomposition d;
  d.window = cfg.window;
  d.stride = cfg.stride;
  d.num_modes = cfg.num_modes;
  d.dt = z.dt();
  d.mean_mode_rule = cfg.mean_mode_rule;
  d.mean_index = cfg.mean_mode_rule == MeanModeRule::explicit_index ? cfg.mean_mode_index : 0;
  d.freq.resize(static_cast<Eigen::Index>(nseg), k);
  d.coef.resize(static_cast<Eigen::Index>(nseg), 2 * k);
  d.residuals.resize(static_cast<Eigen::Index>(nseg));
  d.statuses.resize(nseg);
  d.iterations.resize(nseg);
  d.centers.resize(nseg);
  const double half = 0.5 * static_cast<double>(cfg.window - 1);
  for (std::size_t i = 0; i < nseg; ++i)
    d.centers[i] = z.t0() + (static_cast<double>(segs[i].first) + half) * z.dt();

  const auto local_t = centered_times(cfg.window, z.dt());

  const std::size_t chunks = std::clamp<std::size_t>(cfg.parallel_chunks, 1, nseg);
  if (chunks <= 1) {
    detail::fit_chain(z, cfg, segs, local_t, 0, nseg, d);
    return d;
  }
  std::vector<std::future<void>> jobs;
  jobs.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t first = c * nseg / chunks;
    const std::size_t last = (c + 1) * nseg / chunks;
    jobs.push_back(std::async(std::launch::async, [&, first, last] {
      detail::fit_chain(z, cfg, segs, local_t, first, last, d);
    }));
  }
  for (auto& j : jobs) j.get();
  return d;
}

/// Instantaneous frequency and amplitude of one mode across windows.
struct ModeTrack {
  std::size_t mode_index = 0;
  std::vector<double> freq;  ///< rad/s
  std::vector<double> amp;   ///< sqrt(a^2 + b^2)
  std::vector<double> centers;
};

inline std::vector<ModeTrack> mode_tracks(const Decomposition& d) {
  const auto k = static_cast<Eigen::Index>(d.num_modes);
  std::vector<ModeTrack> tracks(d.num_modes);
  for (std::size_t m = 0; m < d.num_modes; ++m) {
    auto& tr = tracks[m];
    const auto col = static_cast<Eigen::Index>(m);
    tr.mode_index = m;
    tr.centers = d.centers;
    tr.freq.resize(d.num_windows());
    tr.amp.resize(d.num_windows());
    for (std::size_t i = 0; i < d.num_windows(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      tr.freq[i] = d.freq(r, col);
      tr.amp[i] = std::hypot(d.coef(r, col), d.coef(r, k + col));
    }
  }
  return tracks;
}

struct MeanTrack {
  std::vector<double> centers;
  std::vector<double> mu;
};

/**
 * @brief Mode m of window i evaluated at the window midpoint.
 *
 * The midpoint is local time 0, so this is the cosine weight a_{m,i}.
 */
inline double mode_at_center(const Decomposition& d, std::size_t i, std::size_t m) {
  return d.coef(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m));
}

/// The designated mean mode evaluated at each window's midpoint.
inline MeanTrack instantaneous_mean(const Decomposition& d) {
  MeanTrack out;
  out.centers = d.centers;
  out.mu.resize(d.num_windows());
  for (std::size_t i = 0; i < d.num_windows(); ++i) out.mu[i] = mode_at_center(d, i, d.mean_index);
  return out;
}

/// Sum of all modes at each window's midpoint.
inline std::vector<double> reconstruct_centers(const Decomposition& d) {
  std::vector<double> out(d.num_windows(), 0.0);
  for (std::size_t i = 0; i < d.num_windows(); ++i)
    for (std::size_t m = 0; m < d.num_modes; ++m) out[i] += mode_at_center(d, i, m);
  return out;
}

/// Number of spectral peaks above `rel_threshold` of the largest (DC counts
/// as a peak when it dominates its neighbour). A hint for choosing K only.
inline std::size_t suggest_mode_count(const TimeSeries& z, double rel_threshold = 0.05) {
  const std::size_t n = z.size();
  if (n < 4) return 1;
  std::vector<double> in(z.values());
  std::vector<std::complex<double>> spec;
  Eigen::FFT<double> fft;
  fft.fwd(spec, in);
  const std::size_t half = n / 2;
  std::vector<double> mag(half + 1);
  for (std::size_t j = 0; j <= half; ++j) mag[j] = std::abs(spec[j]) * (j == 0 ? 1.0 : 2.0);
  const double peak = *std::max_element(mag.begin(), mag.end());
  std::size_t count = 0;
  for (std::size_t j = 0; j <= half; ++j) {
    const bool left = j == 0 || mag[j] > mag[j - 1];
    const bool right = j == half || mag[j] >= mag[j + 1];
    if (left && right && mag[j] >= rel_threshold * peak) ++count;
  }
  return std::max<std::size_t>(count, 1);
}

}  // namespace nfmd
