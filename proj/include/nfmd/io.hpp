#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nfmd/error.hpp"
#include "nfmd/time_series.hpp"

namespace nfmd::io {

/// Shortest text that round-trips the double, capped at `digits`
/// significant digits (17 is lossless).
inline std::string format_double(double v, int digits = 17) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, digits);
  return std::string(buf, res.ptr);
}

/// Rounds v to `digits` significant digits.
inline double round_significant(double v, int digits) {
  if (!std::isfinite(v) || v == 0.0) return v;
  double out = v;
  const std::string s = format_double(v, digits);
  std::from_chars(s.data(), s.data() + s.size(), out);
  return out;
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline double parse_double(std::string_view text, std::string_view context) {
  text = trim(text);
  double v = 0.0;
  // from_chars rejects a leading '+'
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw InputError("cannot parse number '" + std::string(text) + "' in " + std::string(context));
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Relative spacing jitter accepted when ingesting a time column.
inline constexpr double kUniformJitter = 1e-6;

/**
 * @brief Reads a two-column `time,value` CSV into a TimeSeries.
 *
 * A header row is required. Times must be strictly increasing and every
 * spacing must match the mean spacing to within 1e-6 relative.
 */
inline TimeSeries read_series_csv(std::istream& in, std::string_view source = "csv") {
  std::string line;
  std::size_t lineno = 0;
  auto where = [&] { return std::string(source) + ":" + std::to_string(lineno); };

  bool header_seen = false;
  std::vector<double> times, values;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = trim(line);
    if (view.empty()) continue;
    if (!header_seen) {
      auto cols = split(view, ',');
      if (cols.size() != 2 || trim(cols[0]) != "time" || trim(cols[1]) != "value")
        throw InputError(where() + ": expected header 'time,value'");
      header_seen = true;
      continue;
    }
    auto cols = split(view, ',');
    if (cols.size() != 2) throw InputError(where() + ": expected two columns");
    times.push_back(parse_double(cols[0], where()));
    values.push_back(parse_double(cols[1], where()));
  }
  if (!header_seen) throw InputError(std::string(source) + ": missing header 'time,value'");
  if (times.size() < 2) throw InputError(std::string(source) + ": need at least two samples");

  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i]) || !std::isfinite(values[i]))
      throw InputError(std::string(source) + ": non-finite value on data row " + std::to_string(i + 1));
  }
  const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  if (!(dt > 0.0)) throw InputError(std::string(source) + ": time must be strictly increasing");
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double step = times[i] - times[i - 1];
    if (!(step > 0.0))
      throw InputError(std::string(source) + ": time not strictly increasing at data row " +
                       std::to_string(i + 1));
    if (std::abs(step - dt) > kUniformJitter * dt)
      throw InputError(std::string(source) + ": non-uniform sampling at data row " +
                       std::to_string(i + 1));
  }
  return TimeSeries(std::move(values), dt, times.front());
}

inline TimeSeries read_series_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return read_series_csv(in, path.string());
}

inline void write_series_csv(std::ostream& out, const TimeSeries& z) {
  out << "time,value\n";
  for (std::size_t i = 0; i < z.size(); ++i)
    out << format_double(z.time(i)) << ',' << format_double(z[i]) << '\n';
}

/// Writes arbitrary aligned columns with a header.
inline void write_columns_csv(std::ostream& out, std::span<const std::string> header,
                              std::span<const std::vector<double>> columns) {
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < columns.size(); ++j)
      out << (j ? "," : "") << format_double(columns[j][i]);
    out << '\n';
  }
}

/// 64-bit FNV-1a; used for config hashes and input digests.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace nfmd::io
