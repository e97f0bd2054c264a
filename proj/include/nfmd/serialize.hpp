#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nfmd/decompose.hpp"
#include "nfmd/io.hpp"

namespace nfmd {

inline constexpr const char* kVersion = "0.1.0";

/// Frequencies cross the Hz/rad-s boundary only here.
inline double to_hz(double omega) { return omega / (2.0 * std::numbers::pi); }
inline double to_rad(double hz) { return hz * 2.0 * std::numbers::pi; }

inline std::string_view to_string(MeanModeRule r) {
  return r == MeanModeRule::lowest_frequency ? "lowest_frequency" : "explicit_index";
}
inline std::string_view to_string(FailurePolicy p) {
  return p == FailurePolicy::abort ? "abort" : "skip_and_reseed";
}
inline std::string_view to_string(Seeding s) {
  return s == Seeding::warm_start ? "warm_start" : "fft_each_window";
}

/// Stable text form of every setting that affects a decomposition.
inline std::string canonical(const NfmdConfig& c) {
  std::ostringstream os;
  os << "window=" << c.window << "\nstride=" << c.stride << "\nmodes=" << c.num_modes
     << "\nmean_rule=" << to_string(c.mean_mode_rule) << "\nmean_index=" << c.mean_mode_index
     << "\nreserve_mean=" << c.reserve_mean_mode << "\nfailure=" << to_string(c.failure_policy)
     << "\nseeding=" << to_string(c.seeding) << "\nchunks=" << c.parallel_chunks
     << "\ntol=" << io::format_double(c.fmd.tol) << "\nrel_tol=" << io::format_double(c.fmd.rel_tol)
     << "\nfreq_tol_bins=" << io::format_double(c.fmd.freq_tol_bins) << "\nmax_iters=" << c.fmd.max_iters
     << "\nomega_min=" << io::format_double(c.fmd.omega_min) << "\nridge=" << io::format_double(c.fmd.ridge)
     << "\narmijo=" << io::format_double(c.fmd.step.armijo) << "\nshrink=" << io::format_double(c.fmd.step.shrink)
     << "\nmax_backtracks=" << c.fmd.step.max_backtracks
     << "\nmax_step_bins=" << io::format_double(c.fmd.step.max_step_bins)
     << "\ndiagonal_scaling=" << c.fmd.step.diagonal_scaling
     << "\nscale_floor=" << io::format_double(c.fmd.step.scale_floor) << "\n";
  return os.str();
}

inline std::string config_hash(const NfmdConfig& c) { return io::hex64(io::fnv1a(canonical(c))); }

namespace detail {

inline nlohmann::json number_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

inline double number_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline StopStatus parse_status(const std::string& s) {
  for (auto st : {StopStatus::converged_tol, StopStatus::converged_rel, StopStatus::max_iters, StopStatus::failed})
    if (to_string(st) == s) return st;
  throw InputError("unknown window status '" + s + "'");
}

}  // namespace detail

/**
 * @brief JSON document for a decomposition.
 *
 * `freq_hz` holds frequencies in Hz rounded to 12 significant digits; the
 * remaining numbers keep full precision. Failed windows serialize as null.
 */
inline nlohmann::json to_json(const Decomposition& d, const std::string& cfg_hash) {
  nlohmann::json j;
  j["meta"] = {{"dt", d.dt},
               {"window", d.window},
               {"stride", d.stride},
               {"K", d.num_modes},
               {"mean_index", d.mean_index},
               {"config_hash", cfg_hash},
               {"version", kVersion}};
  j["centers"] = d.centers;
  auto freq = nlohmann::json::array();
  auto coef = nlohmann::json::array();
  auto resid = nlohmann::json::array();
  auto status = nlohmann::json::array();
  for (Eigen::Index i = 0; i < d.freq.rows(); ++i) {
    auto fr = nlohmann::json::array();
    for (Eigen::Index k = 0; k < d.freq.cols(); ++k)
      fr.push_back(detail::number_or_null(io::round_significant(to_hz(d.freq(i, k)), 12)));
    freq.push_back(std::move(fr));
    auto cr = nlohmann::json::array();
    for (Eigen::Index k = 0; k < d.coef.cols(); ++k) cr.push_back(detail::number_or_null(d.coef(i, k)));
    coef.push_back(std::move(cr));
    resid.push_back(detail::number_or_null(d.residuals(i)));
    status.push_back(std::string(to_string(d.statuses[static_cast<std::size_t>(i)])));
  }
  j["freq_hz"] = std::move(freq);
  j["coef"] = std::move(coef);
  j["residuals"] = std::move(resid);
  j["statuses"] = std::move(status);
  return j;
}

/// Inverse of to_json (frequencies carry the 12-digit rounding).
inline Decomposition decomposition_from_json(const nlohmann::json& j) {
  try {
    Decomposition d;
    const auto& meta = j.at("meta");
    d.dt = meta.at("dt").get<double>();
    d.window = meta.at("window").get<std::size_t>();
    d.stride = meta.at("stride").get<std::size_t>();
    d.num_modes = meta.at("K").get<std::size_t>();
    d.mean_index = meta.value("mean_index", std::size_t{0});
    d.centers = j.at("centers").get<std::vector<double>>();
    const auto rows = static_cast<Eigen::Index>(d.centers.size());
    const auto k = static_cast<Eigen::Index>(d.num_modes);
    d.freq.resize(rows, k);
    d.coef.resize(rows, 2 * k);
    d.residuals.resize(rows);
    d.statuses.resize(d.centers.size());
    d.iterations.assign(d.centers.size(), 0);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const auto& fr = j.at("freq_hz").at(static_cast<std::size_t>(i));
      const auto& cr = j.at("coef").at(static_cast<std::size_t>(i));
      for (Eigen::Index m = 0; m < k; ++m) d.freq(i, m) = to_rad(detail::number_from(fr.at(static_cast<std::size_t>(m))));
      for (Eigen::Index m = 0; m < 2 * k; ++m) d.coef(i, m) = detail::number_from(cr.at(static_cast<std::size_t>(m)));
      d.residuals(i) = detail::number_from(j.at("residuals").at(static_cast<std::size_t>(i)));
      d.statuses[static_cast<std::size_t>(i)] =
          detail::parse_status(j.at("statuses").at(static_cast<std::size_t>(i)).get<std::string>());
    }
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed decomposition JSON: ") + e.what());
  }
}

/// One row per window: center, K frequencies (Hz), K amplitudes, mean, residual.
inline void write_decomposition_csv(std::ostream& out, const Decomposition& d) {
  const auto tracks = mode_tracks(d);
  const auto mean = instantaneous_mean(d);
  out << "center";
  for (std::size_t k = 0; k < d.num_modes; ++k) out << ",freq_hz_" << k + 1;
  for (std::size_t k = 0; k < d.num_modes; ++k) out << ",amp_" << k + 1;
  out << ",mean,residual\n";
  for (std::size_t i = 0; i < d.num_windows(); ++i) {
    out << io::format_double(d.centers[i]);
    for (const auto& tr : tracks) out << ',' << io::format_double(to_hz(tr.freq[i]));
    for (const auto& tr : tracks) out << ',' << io::format_double(tr.amp[i]);
    out << ',' << io::format_double(mean.mu[i]) << ','
        << io::format_double(d.residuals(static_cast<Eigen::Index>(i))) << '\n';
  }
}

/// `time,freq_hz,amplitude` for one mode.
inline void write_track_csv(std::ostream& out, const ModeTrack& tr) {
  out << "time,freq_hz,amplitude\n";
  for (std::size_t i = 0; i < tr.centers.size(); ++i)
    out << io::format_double(tr.centers[i]) << ',' << io::format_double(to_hz(tr.freq[i])) << ','
        << io::format_double(tr.amp[i]) << '\n';
}

/// `time,value` so the mean can be read back as a series.
inline void write_mean_csv(std::ostream& out, const MeanTrack& m) {
  out << "time,value\n";
  for (std::size_t i = 0; i < m.centers.size(); ++i)
    out << io::format_double(m.centers[i]) << ',' << io::format_double(m.mu[i]) << '\n';
}

/**
 * @brief Provenance written next to every output.
 *
 * Two runs with equal manifests (ignoring wall time) produce the same
 * bytes; `outputs` records an FNV-1a digest of each data file to check it.
 */
struct RunManifest {
  std::string command_line;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string input_digest;
  std::string version = kVersion;
  double wall_time_s = 0.0;
  std::vector<std::pair<std::string, std::string>> outputs;  ///< file name, digest

  nlohmann::json to_json() const {
    nlohmann::json files = nlohmann::json::object();
    for (const auto& [name, digest] : outputs) files[name] = digest;
    return {{"command_line", command_line}, {"config_hash", config_hash}, {"seed", seed},
            {"input_digest", input_digest}, {"version", version},         {"wall_time_s", wall_time_s},
            {"outputs", files}};
  }
};

}  // namespace nfmd
