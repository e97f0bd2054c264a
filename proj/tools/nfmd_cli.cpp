// nfmd: generate, decompose, simulate, fit and benchmark from the shell.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nfmd/bench.hpp"
#include "nfmd/config.hpp"
#include "nfmd/decompose.hpp"
#include "nfmd/io.hpp"
#include "nfmd/noise.hpp"
#include "nfmd/oscillator.hpp"
#include "nfmd/perturbation.hpp"
#include "nfmd/serialize.hpp"
#include "nfmd/sweep.hpp"
#include "nfmd/synthetic.hpp"

namespace fs = std::filesystem;
using namespace nfmd;

namespace {

enum Exit : int { kOk = 0, kUsage = 2, kInput = 3, kDecompose = 4, kFit = 5 };

/// Thrown to leave a command with a specific exit code.
struct CommandFailure {
  int code;
  std::string message;
};

fs::path default_dir() {
  if (const char* env = std::getenv("NFMD_OUT_DIR"); env && *env) return env;
  return ".";
}

class Outputs {
 public:
  explicit Outputs(std::string command_line) { manifest_.command_line = std::move(command_line); }

  RunManifest& manifest() { return manifest_; }

  void write(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CommandFailure{kInput, "cannot write " + path.string()};
    out << content;
    manifest_.outputs.emplace_back(path.filename().string(), io::hex64(io::fnv1a(content)));
  }

  void finish(const fs::path& manifest_path, std::chrono::steady_clock::time_point start) {
    manifest_.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (manifest_path.has_parent_path()) fs::create_directories(manifest_path.parent_path());
    std::ofstream out(manifest_path);
    out << manifest_.to_json().dump(2) << '\n';
  }

 private:
  RunManifest manifest_;
};

std::string joined_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

std::string series_csv(const TimeSeries& z) {
  std::ostringstream os;
  io::write_series_csv(os, z);
  return os.str();
}

// --- synth -------------------------------------------------------------------

struct SynthArgs {
  std::string spec;
  std::optional<double> snr;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_synth(const SynthArgs& a, const std::string& cmdline) {
  const auto start = std::chrono::steady_clock::now();
  SyntheticSpec spec;
  std::string stem = a.spec;
  if (fs::exists(a.spec) && fs::is_regular_file(a.spec)) {
    spec = synthetic_spec_from_config(KeyValueConfig::from_file(a.spec));
    stem = fs::path(a.spec).stem().string();
  } else {
    try {
      spec = builtin_spec(a.spec);
    } catch (const ConfigError& e) {
      throw CommandFailure{kUsage, e.what()};
    }
  }
  TimeSeries z = generate(spec);
  if (a.snr) z = add_noise(z, *a.snr, a.seed);

  const fs::path out = a.out.empty() ? default_dir() / (stem + ".csv") : fs::path(a.out);
  Outputs outputs(cmdline);
  outputs.manifest().seed = a.seed;
  outputs.manifest().config_hash =
      io::hex64(io::fnv1a(spec.describe() + "snr=" + (a.snr ? io::format_double(*a.snr) : "none")));
  outputs.manifest().input_digest = io::hex64(io::fnv1a(spec.describe()));
  outputs.write(out, series_csv(z));
  outputs.finish(fs::path(out.string() + ".manifest.json"), start);
  std::cout << out.string() << " (" << z.size() << " samples)\n";
  return kOk;
}

// --- decompose ---------------------------------------------------------------

struct DecomposeArgs {
  std::string input;
  std::size_t window = 250;
  std::size_t modes = 1;
  std::size_t stride = 1;
  double tol = 0.0;
  double rel_tol = 1e-8;
  int max_iters = 500;
  std::optional<std::size_t> mean_index;
  std::string policy = "abort";
  std::string seeding = "warm";
  std::size_t chunks = 0;
  bool no_reserve = false;
  std::string prefix;
};

int cmd_decompose(const DecomposeArgs& a, const std::string& cmdline) {
  const auto start = std::chrono::steady_clock::now();
  std::string raw;
  TimeSeries z({0.0}, 1.0);
  try {
    raw = io::read_file(a.input);
    std::istringstream in(raw);
    z = io::read_series_csv(in, a.input);
  } catch (const InputError& e) {
    throw CommandFailure{kInput, e.what()};
  }

  NfmdConfig cfg;
  cfg.window = a.window;
  cfg.num_modes = a.modes;
  cfg.stride = a.stride;
  cfg.fmd.tol = a.tol;
  cfg.fmd.rel_tol = a.rel_tol;
  cfg.fmd.max_iters = a.max_iters;
  if (a.mean_index) {
    cfg.mean_mode_rule = MeanModeRule::explicit_index;
    cfg.mean_mode_index = *a.mean_index;
  }
  cfg.failure_policy = a.policy == "skip" ? FailurePolicy::skip_and_reseed : FailurePolicy::abort;
  cfg.seeding = a.seeding == "fft" ? Seeding::fft_each_window : Seeding::warm_start;
  cfg.parallel_chunks = a.chunks;
  cfg.reserve_mean_mode = !a.no_reserve;

  Decomposition d;
  try {
    d = decompose(z, cfg);
  } catch (const SignalTooShortError& e) {
    throw CommandFailure{kInput, e.what()};
  } catch (const WindowError& e) {
    throw CommandFailure{kDecompose, e.what()};
  }

  const fs::path prefix = a.prefix.empty() ? default_dir() / fs::path(a.input).stem() : fs::path(a.prefix);
  const std::string hash = config_hash(cfg);
  Outputs outputs(cmdline);
  outputs.manifest().config_hash = hash;
  outputs.manifest().input_digest = io::hex64(io::fnv1a(raw));

  outputs.write(prefix.string() + ".json", to_json(d, hash).dump(1) + "\n");
  {
    std::ostringstream os;
    write_decomposition_csv(os, d);
    outputs.write(prefix.string() + ".csv", os.str());
  }
  const auto tracks = mode_tracks(d);
  for (const auto& tr : tracks) {
    std::ostringstream os;
    write_track_csv(os, tr);
    outputs.write(prefix.string() + "_mode" + std::to_string(tr.mode_index + 1) + ".csv", os.str());
  }
  {
    std::ostringstream os;
    write_mean_csv(os, instantaneous_mean(d));
    outputs.write(prefix.string() + "_mean.csv", os.str());
  }
  outputs.finish(prefix.string() + ".manifest.json", start);
  std::size_t failed = 0;
  for (auto s : d.statuses) failed += s == StopStatus::failed;
  std::cout << prefix.string() << ": " << d.num_windows() << " windows, " << d.num_modes << " modes";
  if (failed) std::cout << ", " << failed << " failed";
  std::cout << "\n";
  return kOk;
}

// --- simulate ----------------------------------------------------------------

struct SimulateArgs {
  std::string osc_config;
  std::string forcing_config;
  double duration = 0.0;
  double dt = 0.0;
  std::optional<double> dt_sim;
  std::optional<double> snr;
  std::uint64_t seed = 0;
  bool steady_start = false;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a, const std::string& cmdline) {
  const auto start = std::chrono::steady_clock::now();
  const auto osc_kv = KeyValueConfig::from_file(a.osc_config);
  const auto forcing_kv = a.forcing_config.empty() ? osc_kv : KeyValueConfig::from_file(a.forcing_config);
  OscillatorSpec osc = oscillator_from_config(osc_kv);
  const ForcingSpec forcing = forcing_from_config(forcing_kv);
  if (a.steady_start) {
    if (!forcing.drive) throw CommandFailure{kUsage, "--steady-start needs a drive"};
    std::tie(osc.x0, osc.v0) = steady_state_initial(osc, *forcing.drive);
  }
  TimeSeries x = simulate(osc, forcing, a.duration, a.dt, a.dt_sim);
  if (a.snr) x = add_noise(x, *a.snr, a.seed);

  const fs::path out = a.out.empty() ? default_dir() / "simulation.csv" : fs::path(a.out);
  Outputs outputs(cmdline);
  outputs.manifest().seed = a.seed;
  outputs.manifest().config_hash = io::hex64(io::fnv1a(osc_kv.canonical() + forcing_kv.canonical()));
  outputs.manifest().input_digest = outputs.manifest().config_hash;
  outputs.write(out, series_csv(x));
  outputs.finish(fs::path(out.string() + ".manifest.json"), start);
  std::cout << out.string() << " (" << x.size() << " samples)\n";
  return kOk;
}

// --- fit-tau -----------------------------------------------------------------

struct FitArgs {
  std::string input;
  std::string variant = "lambda_zero";
  std::optional<double> t_prime;
  std::optional<double> lambda;
  double backoff = 0.0;
  double pre_duration = 0.0;
  std::string out;
};

int cmd_fit_tau(const FitArgs& a, const std::string& cmdline) {
  const auto start = std::chrono::steady_clock::now();
  std::string raw;
  TimeSeries mu({0.0}, 1.0);
  try {
    raw = io::read_file(a.input);
    std::istringstream in(raw);
    mu = io::read_series_csv(in, a.input);
  } catch (const InputError& e) {
    throw CommandFailure{kInput, e.what()};
  }
  FitVariant variant;
  try {
    variant = parse_fit_variant(a.variant);
  } catch (const ConfigError& e) {
    throw CommandFailure{kUsage, e.what()};
  }

  FitOptions opts;
  opts.onset_backoff = a.backoff;
  opts.pre_duration = a.pre_duration;
  nlohmann::json report;
  report["variant"] = std::string(to_string(variant));
  int code = kOk;
  try {
    const auto t = mu.times();
    const PerturbationFit fit =
        fit_perturbation_model(t, mu.samples(), variant, FixedParams{a.t_prime, a.lambda}, opts);
    report["alpha"] = fit.alpha;
    report["lambda"] = fit.lambda;
    report["tau"] = fit.tau;
    report["t_prime"] = fit.t_prime;
    report["fixed"] = {{"alpha", fit.fixed_mask[0]},
                       {"lambda", fit.fixed_mask[1]},
                       {"tau", fit.fixed_mask[2]},
                       {"t_prime", fit.fixed_mask[3]}};
    report["rss"] = fit.rss;
    report["rss_init"] = fit.rss_init;
    report["status"] = fit.degenerate ? "degenerate" : "ok";
    if (fit.degenerate) {
      report["reason"] = "fitted amplitude is indistinguishable from the residual level";
      code = kFit;
    }
  } catch (const OnsetNotFoundError& e) {
    report["status"] = "onset_not_found";
    report["reason"] = e.what();
    code = kFit;
  } catch (const FitError& e) {
    report["status"] = "fit_error";
    report["reason"] = e.what();
    code = kFit;
  } catch (const ConfigError& e) {
    throw CommandFailure{kUsage, e.what()};
  }

  const fs::path out =
      a.out.empty() ? default_dir() / (fs::path(a.input).stem().string() + "_fit.json") : fs::path(a.out);
  Outputs outputs(cmdline);
  outputs.manifest().input_digest = io::hex64(io::fnv1a(raw));
  outputs.manifest().config_hash = io::hex64(io::fnv1a(report["variant"].get<std::string>()));
  outputs.write(out, report.dump(2) + "\n");
  outputs.finish(fs::path(out.string() + ".manifest.json"), start);
  std::cout << report.dump() << "\n";
  return code;
}

// --- bench -------------------------------------------------------------------

struct BenchArgs {
  std::string suite;
  std::uint64_t seed = 1;
  std::string out_dir;
  std::string config;
  std::size_t stride = 1;
};

std::string pass_text(bool ok) { return ok ? "pass" : "fail"; }

int cmd_bench(const BenchArgs& a, const std::string& cmdline) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir = a.out_dir.empty() ? default_dir() : fs::path(a.out_dir);
  Outputs outputs(cmdline);
  outputs.manifest().seed = a.seed;
  std::ostringstream csv;

  if (a.suite == "tau-sweep") {
    TauSweepConfig cfg = a.config.empty() ? default_tau_sweep()
                                          : tau_sweep_from_config(KeyValueConfig::from_file(a.config));
    cfg.seed = a.seed;
    outputs.manifest().config_hash = io::hex64(io::fnv1a(a.config.empty() ? std::string("default")
                                                                          : io::read_file(a.config)));
    const auto pts = tau_sweep(cfg);
    const double width = static_cast<double>(cfg.nfmd.window) * cfg.dt_out;
    csv << "tau_true,tau_est,alpha,rss,status,pass\n";
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& p : pts) {
      // Resolved relaxation times must be recovered to 10%; unresolved ones
      // must sit on the window floor (above twice their true value).
      std::string verdict = "n/a";
      if (p.tau_true >= 2.0 * width) verdict = pass_text(std::abs(p.tau_est / p.tau_true - 1.0) <= 0.1);
      else if (p.tau_true <= 0.2 * width) verdict = pass_text(p.tau_est > 2.0 * p.tau_true);
      csv << io::format_double(p.tau_true) << ',' << io::format_double(p.tau_est) << ','
          << io::format_double(p.alpha) << ',' << io::format_double(p.rss) << ',' << p.status << ',' << verdict
          << '\n';
      rows.push_back({{"tau_true", p.tau_true}, {"tau_est", p.tau_est}, {"alpha", p.alpha},
                      {"rss", p.rss}, {"status", p.status}, {"pass", verdict}});
    }
    nlohmann::json summary = {{"slope", log_log_slope(pts, 2.0 * width, 1e-3)}, {"rows", rows}};
    outputs.write(dir / "tau_sweep.csv", csv.str());
    outputs.write(dir / "tau_sweep.json", summary.dump(2) + "\n");
    outputs.finish(dir / "tau_sweep.manifest.json", start);
  } else if (a.suite == "resolution") {
    outputs.manifest().config_hash = io::hex64(io::fnv1a("resolution"));
    csv << "bin_offset,f_true_hz,f_est_hz,error_bins,pass\n";
    for (const auto& r : bench::resolution_suite())
      csv << io::format_double(r.bin_offset) << ',' << io::format_double(r.f_true_hz) << ','
          << io::format_double(r.f_est_hz) << ',' << io::format_double(r.error_bins) << ',' << pass_text(r.pass)
          << '\n';
    outputs.write(dir / "resolution.csv", csv.str());
    outputs.finish(dir / "resolution.manifest.json", start);
  } else if (a.suite == "discontinuity") {
    outputs.manifest().config_hash = io::hex64(io::fnv1a("discontinuity stride=" + std::to_string(a.stride)));
    csv << "signal,metric,value,threshold,pass\n";
    {
      const auto spec = builtin_spec("sharp-omega");
      const auto d = bench::run_builtin("sharp-omega", 25.0, a.seed, 3, a.stride);
      const auto r = bench::frequency_transition(d, spec);
      csv << "sharp-omega,transition_span_s," << io::format_double(r.span) << ',' << io::format_double(r.limit)
          << ',' << pass_text(r.pass) << '\n';
      csv << "sharp-omega,t_leave_400hz_s," << io::format_double(r.t_leave) << ",,\n";
      csv << "sharp-omega,t_enter_410hz_s," << io::format_double(r.t_enter) << ",,\n";
      csv << "sharp-omega,freq_one_window_after_onset_hz," << io::format_double(r.freq_after) << ",,\n";
      csv << "sharp-omega,fast_mode_rms_vs_phase_rate_hz," << io::format_double(r.phase_rms_hz) << ",,\n";
    }
    {
      const auto spec = builtin_spec("sharp-mean");
      const auto d = bench::run_builtin("sharp-mean", 20.0, a.seed, 2, a.stride);
      const auto r = bench::mean_discontinuity(d, spec);
      csv << "sharp-mean,mean_rel_rms," << io::format_double(r.mean_rel_rms) << ",0.05,"
          << pass_text(r.mean_rel_rms <= 0.05) << '\n';
      csv << "sharp-mean,freq_rms_vs_245+10t2_hz," << io::format_double(r.freq_rms_labelled) << ",2,"
          << pass_text(r.freq_rms_labelled <= 2.0) << '\n';
      csv << "sharp-mean,freq_rms_vs_phase_rate_hz," << io::format_double(r.freq_rms_phase) << ",,\n";
    }
    outputs.write(dir / "discontinuity.csv", csv.str());
    outputs.finish(dir / "discontinuity.manifest.json", start);
  } else {
    throw CommandFailure{kUsage, "unknown suite '" + a.suite + "' (known: tau-sweep, resolution, discontinuity)"};
  }
  std::cout << csv.str();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonstationary Fourier mode decomposition"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  const std::string cmdline = joined_args(argc, argv);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a builtin or configured synthetic signal");
  s->add_option("spec", synth.spec, "Builtin name or key-value config file")->required();
  s->add_option("--snr", synth.snr, "Add white noise at this SNR (dB)");
  s->add_option("--seed", synth.seed, "Noise seed");
  s->add_option("-o,--out", synth.out, "Output CSV");

  DecomposeArgs dec;
  auto* d = app.add_subcommand("decompose", "Sliding-window decomposition of a time,value CSV");
  d->add_option("input", dec.input, "Input CSV")->required();
  d->add_option("-w,--window", dec.window, "Window length in samples")->required();
  d->add_option("-k,--modes", dec.modes, "Number of modes")->required();
  d->add_option("--stride", dec.stride, "Samples between windows");
  d->add_option("--tol", dec.tol, "Absolute residual tolerance");
  d->add_option("--rel-tol", dec.rel_tol, "Relative objective tolerance");
  d->add_option("--max-iters", dec.max_iters, "Iteration cap per window");
  d->add_option("--mean-index", dec.mean_index, "Use this mode (0-based) as the mean");
  d->add_option("--policy", dec.policy, "Window failure policy")->check(CLI::IsMember({"abort", "skip"}));
  d->add_option("--seeding", dec.seeding, "Seed each window from the previous one or the FFT")
      ->check(CLI::IsMember({"warm", "fft"}));
  d->add_option("--chunks", dec.chunks, "Fit this many chunks concurrently");
  d->add_flag("--no-reserve-mean", dec.no_reserve, "Seed every mode from FFT peaks");
  d->add_option("-o,--out-prefix", dec.prefix, "Output path prefix");

  SimulateArgs sim;
  auto* m = app.add_subcommand("simulate", "Integrate the forced oscillator");
  m->add_option("--osc", sim.osc_config, "Oscillator config")->required();
  m->add_option("--forcing", sim.forcing_config, "Forcing config (default: the oscillator config)");
  m->add_option("--duration", sim.duration, "Seconds")->required();
  m->add_option("--dt", sim.dt, "Output spacing (s)")->required();
  m->add_option("--dt-sim", sim.dt_sim, "Internal step (s)");
  m->add_option("--snr", sim.snr, "Add white noise at this SNR (dB)");
  m->add_option("--seed", sim.seed, "Noise seed");
  m->add_flag("--steady-start", sim.steady_start, "Start on the steady drive response");
  m->add_option("-o,--out", sim.out, "Output CSV");

  FitArgs fit;
  auto* f = app.add_subcommand("fit-tau", "Fit the relaxation model to a mean CSV");
  f->add_option("input", fit.input, "Mean CSV (time,value)")->required();
  f->add_option("--variant", fit.variant, "fixed-tprime, fixed-lambda, both-fixed, lambda-zero, all-free");
  f->add_option("--fix-tprime", fit.t_prime, "Hold the onset time (s)");
  f->add_option("--fix-lambda", fit.lambda, "Hold the decay constant (1/s)");
  f->add_option("--backoff", fit.backoff, "Shift a detected onset earlier by this much (s)");
  f->add_option("--quiet-lead", fit.pre_duration, "Leading span known to be free of signal (s)");
  f->add_option("-o,--out", fit.out, "Output JSON");

  BenchArgs bench_args;
  auto* b = app.add_subcommand("bench", "Run a benchmark suite");
  b->add_option("suite", bench_args.suite, "tau-sweep, resolution or discontinuity")->required();
  b->add_option("--seed", bench_args.seed, "Master seed");
  b->add_option("--out-dir", bench_args.out_dir, "Output directory");
  b->add_option("--config", bench_args.config, "Key-value overrides (tau-sweep)");
  b->add_option("--stride", bench_args.stride, "Window stride (discontinuity)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*s) return cmd_synth(synth, cmdline);
    if (*d) return cmd_decompose(dec, cmdline);
    if (*m) return cmd_simulate(sim, cmdline);
    if (*f) return cmd_fit_tau(fit, cmdline);
    if (*b) return cmd_bench(bench_args, cmdline);
  } catch (const CommandFailure& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  } catch (const SweepItemError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFit;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDecompose;
  }
  return kUsage;
}
