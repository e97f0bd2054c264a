#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "nfmd/error.hpp"
#include "nfmd/time_series.hpp"

namespace nfmd {

inline double energy(std::span<const double> u) {
  double e = 0.0;
  for (double v : u) e += v * v;
  return e;
}

/// Realized SNR in dB of a noisy copy against its clean reference.
inline double realized_snr_db(std::span<const double> clean, std::span<const double> noisy) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    num += clean[i] * clean[i];
    const double d = noisy[i] - clean[i];
    den += d * d;
  }
  return 10.0 * std::log10(num / den);
}

/**
 * @brief White Gaussian noise rescaled to an exact energy ratio.
 *
 * The drawn vector is scaled so that ||u||^2 / ||noise||^2 == 10^(snr_db/10)
 * holds to rounding. An infinite snr_db yields a zero vector.
 */
inline std::vector<double> make_noise(std::span<const double> u, double snr_db, std::uint64_t seed) {
  const double eu = energy(u);
  if (!(eu > 0.0)) throw UndefinedSnrError("SNR is undefined for a zero-energy signal");
  std::vector<double> noise(u.size(), 0.0);
  if (std::isinf(snr_db) && snr_db > 0.0) return noise;
  if (!std::isfinite(snr_db)) throw ConfigError("snr_db must be finite or +inf");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : noise) v = normal(rng);
  const double en = energy(noise);
  if (!(en > 0.0)) throw UndefinedSnrError("drawn noise vector has zero energy");
  const double target = eu * std::pow(10.0, -snr_db / 10.0);
  const double scale = std::sqrt(target / en);
  for (double& v : noise) v *= scale;
  return noise;
}

/// z + make_noise(z, snr_db, seed); snr_db = +inf returns z unchanged.
inline TimeSeries add_noise(const TimeSeries& z, double snr_db, std::uint64_t seed) {
  if (!(energy(z.samples()) > 0.0))
    throw UndefinedSnrError("SNR is undefined for a zero-energy signal");
  if (std::isinf(snr_db) && snr_db > 0.0) return z;
  auto noise = make_noise(z.samples(), snr_db, seed);
  std::vector<double> out(z.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += noise[i];
  return z.with_samples(std::move(out));
}

inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

}  // namespace nfmd
