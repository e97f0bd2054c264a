#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "nfmd/decompose.hpp"
#include "nfmd/fmd.hpp"
#include "nfmd/noise.hpp"
#include "nfmd/synthetic.hpp"

// Scoring helpers shared by the bench command and the acceptance tests.
namespace nfmd::bench {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Tracking errors of a decomposition against its generator.
struct TrackReport {
  /// Per periodic component (ascending frequency): RMS error in Hz against
  /// the labelled curve f(t) and against the phase derivative f + t f'.
  std::vector<double> freq_rms_labelled;
  std::vector<double> freq_rms_phase;
  /// RMS(amp - A) / RMS(A) per periodic component.
  std::vector<double> amp_rel_rms;
  /// RMS(mu - mean) / RMS(mean).
  double mean_rel_rms = kNaN;
  std::size_t windows_scored = 0;

  double worst_freq_closer() const {
    double worst = 0.0;
    for (std::size_t c = 0; c < freq_rms_labelled.size(); ++c)
      worst = std::max(worst, std::min(freq_rms_labelled[c], freq_rms_phase[c]));
    return worst;
  }
  double worst_freq_labelled() const {
    return freq_rms_labelled.empty() ? 0.0 : *std::max_element(freq_rms_labelled.begin(), freq_rms_labelled.end());
  }
  double worst_freq_phase() const {
    return freq_rms_phase.empty() ? 0.0 : *std::max_element(freq_rms_phase.begin(), freq_rms_phase.end());
  }
  double worst_amp() const {
    return amp_rel_rms.empty() ? 0.0 : *std::max_element(amp_rel_rms.begin(), amp_rel_rms.end());
  }
};

/**
 * @brief Scores every window whose center is outside `exclude` intervals.
 *
 * Modes other than the mean mode are matched to components by ascending
 * phase-rate order at each center, so K must be components + 1.
 */
inline TrackReport score_tracks(const Decomposition& d, const SyntheticSpec& spec,
                                const std::vector<std::pair<double, double>>& exclude = {}) {
  const std::size_t nc = spec.components.size();
  if (d.num_modes != nc + 1) throw ConfigError("scoring needs K = components + 1");
  const auto tracks = mode_tracks(d);
  const auto mean = instantaneous_mean(d);

  std::vector<double> se_lab(nc, 0.0), se_ph(nc, 0.0), se_amp(nc, 0.0), ss_amp(nc, 0.0);
  double se_mean = 0.0, ss_mean = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < d.num_windows(); ++i) {
    const double t = d.centers[i];
    bool skip = false;
    for (const auto& [lo, hi] : exclude) skip = skip || (t >= lo && t <= hi);
    if (skip) continue;
    std::vector<std::size_t> order(nc);
    for (std::size_t c = 0; c < nc; ++c) order[c] = c;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return spec.components[a].phase_rate_hz(t) < spec.components[b].phase_rate_hz(t);
    });
    std::size_t slot = 0;
    for (std::size_t m = 0; m < d.num_modes; ++m) {
      if (m == d.mean_index) continue;
      const auto& comp = spec.components[order[slot]];
      const double f = tracks[m].freq[i] / (2.0 * std::numbers::pi);
      se_lab[slot] += std::pow(f - comp.labelled_frequency_hz(t), 2);
      se_ph[slot] += std::pow(f - comp.phase_rate_hz(t), 2);
      const double a = comp.amplitude(t);
      se_amp[slot] += std::pow(tracks[m].amp[i] - a, 2);
      ss_amp[slot] += a * a;
      ++slot;
    }
    const double ref = spec.mean(t);
    se_mean += std::pow(mean.mu[i] - ref, 2);
    ss_mean += ref * ref;
    ++count;
  }
  TrackReport r;
  r.windows_scored = count;
  if (count == 0) return r;
  const double n = static_cast<double>(count);
  for (std::size_t c = 0; c < nc; ++c) {
    r.freq_rms_labelled.push_back(std::sqrt(se_lab[c] / n));
    r.freq_rms_phase.push_back(std::sqrt(se_ph[c] / n));
    r.amp_rel_rms.push_back(ss_amp[c] > 0.0 ? std::sqrt(se_amp[c] / ss_amp[c]) : kNaN);
  }
  r.mean_rel_rms = ss_mean > 0.0 ? std::sqrt(se_mean / ss_mean) : std::sqrt(se_mean / n);
  return r;
}

/// Default analysis settings for the builtin 5 kHz signals.
inline NfmdConfig builtin_config(std::size_t num_modes, std::size_t stride = 1) {
  NfmdConfig cfg;
  cfg.window = 250;
  cfg.num_modes = num_modes;
  cfg.stride = stride;
  return cfg;
}

inline Decomposition run_builtin(const std::string& name, double snr_db, std::uint64_t seed, std::size_t num_modes,
                                 std::size_t stride = 1) {
  const auto spec = builtin_spec(name);
  const auto z = add_noise(generate(spec), snr_db, seed);
  return decompose(z, builtin_config(num_modes, stride));
}

// --- super-resolution -------------------------------------------------------

struct ResolutionRow {
  double bin_offset = 0.0;  ///< tone position in FFT bins
  double f_true_hz = 0.0;
  double f_est_hz = 0.0;
  double error_bins = 0.0;
  bool pass = false;
};

/// Noiseless unit tone at each bin position, one FMD fit per tone seeded
/// from the FFT, window 250 at 5 kHz.
inline std::vector<ResolutionRow> resolution_suite(const std::vector<double>& bin_positions = {10.5, 25.5, 50.5,
                                                                                              100.5},
                                                   double max_error_bins = 1e-3) {
  const std::size_t n = 250;
  const double fs = 5000.0, dt = 1.0 / fs;
  const double bin_hz = fs / static_cast<double>(n);
  const auto t = centered_times(n, dt);
  std::vector<ResolutionRow> rows;
  for (double pos : bin_positions) {
    ResolutionRow row;
    row.bin_offset = pos;
    row.f_true_hz = pos * bin_hz;
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i)
      z[i] = std::cos(2.0 * std::numbers::pi * row.f_true_hz * static_cast<double>(i) * dt + 0.3);
    const Vector seed = fft_initial_guess(z, dt, 1);
    const SegmentFit fit = fmd(z, t, seed, FmdConfig{});
    row.f_est_hz = fit.freq(0) / (2.0 * std::numbers::pi);
    row.error_bins = std::abs(row.f_est_hz - row.f_true_hz) / bin_hz;
    row.pass = row.error_bins <= max_error_bins;
    rows.push_back(row);
  }
  return rows;
}

// --- discontinuities --------------------------------------------------------

/// How the fast mode of "sharp-omega" crosses from 400 Hz to 410 Hz.
struct FrequencyTransition {
  double t_leave = kNaN;   ///< last center within tol of 400 Hz before t_enter
  /// First center after which the track stays within tol of 410 Hz for a
  /// full window duration; a pass-through on the way elsewhere does not count.
  double t_enter = kNaN;
  double span = kNaN;      ///< t_enter - t_leave
  double limit = kNaN;     ///< 1.5 window durations
  double freq_after = kNaN;  ///< fast-mode frequency one window after the onset
  double phase_rms_hz = kNaN;  ///< RMS error against the phase-derivative curve
  bool pass = false;
};

inline FrequencyTransition frequency_transition(const Decomposition& d, const SyntheticSpec& spec,
                                                double onset = 0.5, double before_hz = 400.0,
                                                double after_hz = 410.0, double tol_hz = 2.0) {
  FrequencyTransition r;
  const double width = static_cast<double>(d.window) * d.dt;
  r.limit = 1.5 * width;
  const std::size_t fast = d.num_modes - 1;
  auto f_at = [&](std::size_t i) { return d.freq(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(fast)) / (2.0 * std::numbers::pi); };

  auto settled_from = [&](std::size_t i) {
    for (std::size_t j = i; j < d.num_windows() && d.centers[j] <= d.centers[i] + width; ++j)
      if (!(std::abs(f_at(j) - after_hz) <= tol_hz)) return false;
    return d.centers[i] + width <= d.centers.back();
  };
  std::optional<std::size_t> enter;
  for (std::size_t i = 0; i < d.num_windows(); ++i)
    if (d.centers[i] >= onset - r.limit && settled_from(i)) {
      enter = i;
      break;
    }
  const std::size_t search_end = enter ? *enter : d.num_windows();
  std::optional<std::size_t> leave;
  for (std::size_t i = 0; i < search_end; ++i)
    if (std::abs(f_at(i) - before_hz) <= tol_hz) leave = i;
  if (leave) r.t_leave = d.centers[*leave];
  if (enter) r.t_enter = d.centers[*enter];
  if (leave && enter) r.span = r.t_enter - r.t_leave;

  double best = std::numeric_limits<double>::infinity();
  double se = 0.0;
  const auto& comps = spec.components;
  std::size_t fast_comp = 0;
  for (std::size_t c = 1; c < comps.size(); ++c)
    if (comps[c].frequency_hz(0.0) > comps[fast_comp].frequency_hz(0.0)) fast_comp = c;
  for (std::size_t i = 0; i < d.num_windows(); ++i) {
    const double dist = std::abs(d.centers[i] - (onset + width));
    if (dist < best) {
      best = dist;
      r.freq_after = f_at(i);
    }
    se += std::pow(f_at(i) - comps[fast_comp].phase_rate_hz(d.centers[i]), 2);
  }
  r.phase_rms_hz = std::sqrt(se / static_cast<double>(d.num_windows()));
  r.pass = leave && enter && r.span <= r.limit && r.t_leave >= onset - r.limit && r.t_enter <= onset + r.limit;
  return r;
}

/// Mean and frequency errors for "sharp-mean", excluding the jump.
struct MeanDiscontinuity {
  double mean_rel_rms = kNaN;
  double freq_rms_labelled = kNaN;  ///< against 245 + 10 t^2
  double freq_rms_phase = kNaN;     ///< against the phase derivative 245 + 30 t^2
  std::size_t windows_scored = 0;
};

inline MeanDiscontinuity mean_discontinuity(const Decomposition& d, const SyntheticSpec& spec, double jump = 0.25) {
  const double half = 0.5 * static_cast<double>(d.window) * d.dt;
  const auto r = score_tracks(d, spec, {{jump - half, jump + half}});
  MeanDiscontinuity out;
  out.mean_rel_rms = r.mean_rel_rms;
  out.freq_rms_labelled = r.worst_freq_labelled();
  out.freq_rms_phase = r.worst_freq_phase();
  out.windows_scored = r.windows_scored;
  return out;
}

}  // namespace nfmd::bench
