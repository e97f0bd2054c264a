#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nfmd/error.hpp"
#include "nfmd/io.hpp"
#include "nfmd/synthetic.hpp"

namespace nfmd {

/**
 * @brief Flat `key = value` configuration.
 *
 * Blank lines and lines starting with `#` are ignored. Keys are unique.
 * Dotted keys (`component.1.amplitude`) are plain strings; structure is
 * imposed by the readers below.
 */
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, std::string_view source = "config") {
    KeyValueConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto view = io::trim(line);
      if (view.empty() || view.front() == '#') continue;
      const auto eq = view.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError(std::string(source) + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key(io::trim(view.substr(0, eq)));
      const std::string value(io::trim(view.substr(eq + 1)));
      if (key.empty()) throw ConfigError(std::string(source) + ":" + std::to_string(lineno) + ": empty key");
      if (!cfg.values_.emplace(key, value).second)
        throw ConfigError(std::string(source) + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    return cfg;
  }

  static KeyValueConfig parse(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse(in);
  }

  static KeyValueConfig from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    return parse(in, path.string());
  }

  bool contains(const std::string& key) const { return values_.count(key) != 0; }

  std::optional<std::string> get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::string require(const std::string& key) const {
    auto v = get(key);
    if (!v) throw ConfigError("missing config key '" + key + "'");
    return *v;
  }

  double number(const std::string& key) const { return to_number(key, require(key)); }

  double number(const std::string& key, double fallback) const {
    auto v = get(key);
    return v ? to_number(key, *v) : fallback;
  }

  std::optional<double> optional_number(const std::string& key) const {
    auto v = get(key);
    if (!v) return std::nullopt;
    return to_number(key, *v);
  }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  const std::map<std::string, std::string>& entries() const noexcept { return values_; }

  /// Sorted `key = value` lines; stable input for hashing.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

 private:
  static double to_number(const std::string& key, const std::string& value) {
    try {
      return io::parse_double(value, "config key '" + key + "'");
    } catch (const InputError& e) {
      throw ConfigError(e.what());
    }
  }

  std::map<std::string, std::string> values_;
};

/**
 * @brief Parses a closed-form function description.
 *
 * Grammar (numbers separated by whitespace):
 *   const c | linear c0 c1 | exp c0 c1 tau | sin c0 amp rate [phase]
 *   cos c0 amp rate [phase] | poly c0 c1 ... | step-exp c0 jump onset tau
 *   piecewise breakpoint <form> | <form>
 */
inline ClosedForm parse_closed_form(std::string_view text) {
  text = io::trim(text);
  if (text.starts_with("piecewise")) {
    auto rest = io::trim(text.substr(std::string_view("piecewise").size()));
    const auto sp = rest.find_first_of(" \t");
    if (sp == std::string_view::npos) throw ConfigError("piecewise needs a breakpoint and two forms");
    const double breakpoint = io::parse_double(rest.substr(0, sp), "piecewise breakpoint");
    auto forms_text = rest.substr(sp + 1);
    const auto bar = forms_text.find('|');
    if (bar == std::string_view::npos) throw ConfigError("piecewise forms must be separated by '|'");
    return forms::piecewise(breakpoint, parse_closed_form(forms_text.substr(0, bar)),
                            parse_closed_form(forms_text.substr(bar + 1)));
  }

  std::istringstream in{std::string(text)};
  std::string kind;
  in >> kind;
  std::vector<double> args;
  std::string tok;
  while (in >> tok) {
    try {
      args.push_back(io::parse_double(tok, "function '" + std::string(text) + "'"));
    } catch (const InputError& e) {
      throw ConfigError(e.what());
    }
  }
  auto need = [&](std::size_t lo, std::size_t hi) {
    if (args.size() < lo || args.size() > hi)
      throw ConfigError("function '" + std::string(text) + "': wrong number of arguments");
  };
  if (kind == "const") {
    need(1, 1);
    return forms::constant(args[0]);
  }
  if (kind == "linear") {
    need(2, 2);
    return forms::linear(args[0], args[1]);
  }
  if (kind == "exp") {
    need(3, 3);
    return forms::exponential(args[0], args[1], args[2]);
  }
  if (kind == "sin") {
    need(3, 4);
    return forms::sine(args[0], args[1], args[2], args.size() > 3 ? args[3] : 0.0);
  }
  if (kind == "cos") {
    need(3, 4);
    return forms::cosine(args[0], args[1], args[2], args.size() > 3 ? args[3] : 0.0);
  }
  if (kind == "poly") {
    need(1, 64);
    return forms::polynomial(args);
  }
  if (kind == "step-exp") {
    need(4, 4);
    return forms::step_exp(args[0], args[1], args[2], args[3]);
  }
  throw ConfigError("unknown function kind '" + kind + "'");
}

/**
 * @brief Builds a SyntheticSpec from a config.
 *
 * Either `builtin = <name>` (with optional `duration`/`dt` overrides) or an
 * explicit `mean` plus `component.N.amplitude` / `component.N.frequency`
 * entries numbered from 1.
 */
inline SyntheticSpec synthetic_spec_from_config(const KeyValueConfig& cfg) {
  SyntheticSpec spec;
  if (auto name = cfg.get("builtin")) {
    spec = builtin_spec(*name);
  } else {
    spec.mean = parse_closed_form(cfg.get("mean").value_or("const 0"));
    for (std::size_t i = 1;; ++i) {
      const std::string prefix = "component." + std::to_string(i) + ".";
      const bool has_a = cfg.contains(prefix + "amplitude");
      const bool has_f = cfg.contains(prefix + "frequency");
      if (!has_a && !has_f) break;
      if (has_a != has_f)
        throw ConfigError("component " + std::to_string(i) + " needs both amplitude and frequency");
      spec.components.push_back({parse_closed_form(cfg.require(prefix + "amplitude")),
                                 parse_closed_form(cfg.require(prefix + "frequency"))});
    }
  }
  spec.duration = cfg.number("duration", spec.duration);
  spec.dt = cfg.number("dt", spec.dt);
  if (!(spec.dt > 0.0)) throw ConfigError("dt must be > 0");
  if (!(spec.duration >= 0.0)) throw ConfigError("duration must be >= 0");
  return spec;
}

}  // namespace nfmd
