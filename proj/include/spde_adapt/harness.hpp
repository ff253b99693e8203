#pragma once

// Strong-convergence and efficiency experiments over shared-noise ensembles.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "spde_adapt/adapt.hpp"
#include "spde_adapt/errors.hpp"
#include "spde_adapt/models.hpp"
#include "spde_adapt/noise.hpp"
#include "spde_adapt/spectral_core.hpp"
#include "spde_adapt/steppers.hpp"

#ifndef SPDE_ADAPT_VERSION
#define SPDE_ADAPT_VERSION "0.0.0"
#endif

namespace spde_adapt {

inline constexpr const char* kVersion = SPDE_ADAPT_VERSION;

struct ExperimentConfig {
  std::string model = "allen_cahn";
  int nx = 128;
  int j = 0;  // 0 means J = nx
  double domain_length = 32.0 * std::numbers::pi;
  double t_final = 1.0;
  double dt_ref = 0x1p-14;
  std::vector<double> dt_max_list{0x1p-4, 0x1p-5, 0x1p-6, 0x1p-7, 0x1p-8, 0x1p-9};
  double rho = 100.0;
  std::optional<double> delta;
  std::vector<SelectionRule> rules{SelectionRule::i};
  double rule_theta = 1.0;
  double theta = 0.25;
  double r = 0.0;
  double noise_eps = 0.1;
  double sigma = 1.0;
  double eta = -0.7;
  double c = 1.8;
  int trials = 100;
  std::uint64_t seed = 20190601;
  std::vector<Scheme> schemes{Scheme::asetd1, Scheme::asetd0};
  std::string outdir = ".";
  bool dealias = false;
  double x0_amplitude = 0.1;
  std::int64_t path_block = 4096;
  std::int64_t materialize_limit = std::int64_t{1} << 25;

  int modes() const { return j == 0 ? nx : j; }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  // Accepts plain numbers and powers of two written as 2^-14.
  try {
    if (auto caret = v.find('^'); caret != std::string::npos) {
      std::size_t used = 0;
      const double base = std::stod(v.substr(0, caret), &used);
      const std::string exp_str = v.substr(caret + 1);
      std::size_t used_exp = 0;
      const double exponent = std::stod(exp_str, &used_exp);
      if (used != caret || used_exp != exp_str.size()) throw std::invalid_argument(v);
      return std::pow(base, exponent);
    }
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

inline std::string fmt_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace detail

inline void validate(const ExperimentConfig& cfg) {
  if (cfg.model != "allen_cahn" && cfg.model != "swift_hohenberg") {
    throw ConfigError("model must be allen_cahn or swift_hohenberg");
  }
  if (cfg.nx < 2 || cfg.nx % 2 != 0) throw ConfigError("nx must be a positive even integer");
  if (cfg.modes() < 1 || cfg.modes() > cfg.nx) throw ConfigError("j must lie in [1, nx]");
  if (cfg.trials < 1) throw ConfigError("trials must be >= 1");
  if (!(cfg.t_final > 0.0) || !(cfg.dt_ref > 0.0)) throw ConfigError("t_final and dt_ref must be positive");
  if (cfg.dt_max_list.empty()) throw ConfigError("dt_max_list must not be empty");
  if (cfg.schemes.empty()) throw ConfigError("schemes must not be empty");
  if (cfg.rules.empty()) throw ConfigError("rule must name at least one selection rule");
  if (!(cfg.rho >= 1.0)) throw ConfigError("rho must be >= 1");
  if (!(cfg.theta > 0.0 && cfg.theta <= 0.25)) throw ConfigError("theta must lie in (0, 1/4]");
  if (!(cfg.r >= 0.0 && cfg.r <= 1.0)) throw ConfigError("r must lie in [0, 1]");
  if (!(cfg.sigma >= 0.0)) throw ConfigError("sigma must be non-negative");
  const auto on_grid = [](double x, double unit) {
    const double q = x / unit;
    return std::llround(q) >= 1 && std::abs(q - static_cast<double>(std::llround(q))) <= 1e-9 * q;
  };
  if (!on_grid(cfg.t_final, cfg.dt_ref)) throw ConfigError("t_final must be a multiple of dt_ref");
  for (double dt : cfg.dt_max_list) {
    if (!on_grid(dt, cfg.dt_ref)) throw ConfigError("every dt_max must be a multiple of dt_ref");
    if (!on_grid(cfg.t_final, dt)) throw ConfigError("every dt_max must divide t_final");
    if (cfg.delta && (*cfg.delta <= 0.0 || *cfg.delta > dt * (1.0 + 1e-12))) {
      throw ConfigError("delta must lie in (0, dt_max] for every dt_max");
    }
  }
}

/// Reads flat `key = value` lines; `#` starts a comment.
inline ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (value.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty value for '" + key + "'");

    const auto num = [&] { return detail::parse_double(key, value); };
    const auto integer = [&] { return detail::parse_int(key, value); };
    try {
      if (key == "model") cfg.model = value;
      else if (key == "nx") cfg.nx = static_cast<int>(integer());
      else if (key == "j") cfg.j = static_cast<int>(integer());
      else if (key == "domain_length") cfg.domain_length = num();
      else if (key == "t_final") cfg.t_final = num();
      else if (key == "dt_ref") cfg.dt_ref = num();
      else if (key == "dt_max_list") {
        cfg.dt_max_list.clear();
        for (const auto& v : detail::split_list(value)) cfg.dt_max_list.push_back(detail::parse_double(key, v));
      } else if (key == "rho") cfg.rho = num();
      else if (key == "delta") cfg.delta = value == "dt_max" ? std::nullopt : std::optional<double>(num());
      else if (key == "rule") {
        cfg.rules.clear();
        for (const auto& v : detail::split_list(value)) cfg.rules.push_back(parse_rule(v));
      } else if (key == "rule_theta") cfg.rule_theta = num();
      else if (key == "theta") cfg.theta = num();
      else if (key == "r") cfg.r = num();
      else if (key == "noise_eps") cfg.noise_eps = num();
      else if (key == "sigma") cfg.sigma = num();
      else if (key == "eta") cfg.eta = num();
      else if (key == "c") cfg.c = num();
      else if (key == "trials") cfg.trials = static_cast<int>(integer());
      else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(integer());
      else if (key == "schemes") {
        cfg.schemes.clear();
        for (const auto& v : detail::split_list(value)) cfg.schemes.push_back(parse_scheme(v));
      } else if (key == "outdir") cfg.outdir = value;
      else if (key == "dealias") cfg.dealias = detail::parse_bool(key, value);
      else if (key == "x0_amplitude") cfg.x0_amplitude = num();
      else if (key == "path_block") cfg.path_block = integer();
      else if (key == "materialize_limit") cfg.materialize_limit = integer();
      else throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    } catch (const std::invalid_argument& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  validate(cfg);
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  return parse_config(in);
}

/// Config as `key = value` text that parse_config reads back unchanged.
inline std::string to_text(const ExperimentConfig& cfg) {
  using detail::fmt_double;
  std::ostringstream os;
  const auto join = [](const auto& items, auto&& f) {
    std::string s;
    for (const auto& it : items) s += (s.empty() ? "" : ",") + std::string(f(it));
    return s;
  };
  os << "model = " << cfg.model << "\n"
     << "nx = " << cfg.nx << "\n"
     << "j = " << cfg.modes() << "\n"
     << "domain_length = " << fmt_double(cfg.domain_length) << "\n"
     << "t_final = " << fmt_double(cfg.t_final) << "\n"
     << "dt_ref = " << fmt_double(cfg.dt_ref) << "\n"
     << "dt_max_list = " << join(cfg.dt_max_list, fmt_double) << "\n"
     << "rho = " << fmt_double(cfg.rho) << "\n"
     << "delta = " << (cfg.delta ? fmt_double(*cfg.delta) : "dt_max") << "\n"
     << "rule = " << join(cfg.rules, [](SelectionRule r) { return to_string(r); }) << "\n"
     << "rule_theta = " << fmt_double(cfg.rule_theta) << "\n"
     << "theta = " << fmt_double(cfg.theta) << "\n"
     << "r = " << fmt_double(cfg.r) << "\n"
     << "noise_eps = " << fmt_double(cfg.noise_eps) << "\n"
     << "sigma = " << fmt_double(cfg.sigma) << "\n"
     << "eta = " << fmt_double(cfg.eta) << "\n"
     << "c = " << fmt_double(cfg.c) << "\n"
     << "trials = " << cfg.trials << "\n"
     << "seed = " << cfg.seed << "\n"
     << "schemes = " << join(cfg.schemes, [](Scheme s) { return to_string(s); }) << "\n"
     << "outdir = " << cfg.outdir << "\n"
     << "dealias = " << (cfg.dealias ? "true" : "false") << "\n"
     << "x0_amplitude = " << fmt_double(cfg.x0_amplitude) << "\n"
     << "path_block = " << cfg.path_block << "\n"
     << "materialize_limit = " << cfg.materialize_limit << "\n";
  return os.str();
}

/// Everything one experiment needs that does not depend on the trial.
struct Problem {
  ModelSpec model;              // shift_into_F = true
  ModelSpec model_unshifted;    // for TEM
  OperatorSpectrum shifted;
  OperatorSpectrum unshifted;
  NoiseModel noise;
  SpectralField x0;

  const ModelSpec& model_for(Scheme s) const { return is_exponential(s) ? model : model_unshifted; }
  const OperatorSpectrum& spectrum_for(Scheme s) const { return is_exponential(s) ? shifted : unshifted; }
};

inline ModelSpec build_model(const ExperimentConfig& cfg) {
  ModelSpec m = cfg.model == "allen_cahn" ? allen_cahn(cfg.sigma, cfg.domain_length)
                                          : swift_hohenberg(cfg.eta, cfg.c, cfg.sigma, cfg.domain_length);
  m.dealias = cfg.dealias;
  return m;
}

/// X0(x) = A (sin(2 pi x / a) + cos(4 pi x / a)).
inline SpectralField initial_condition(int nx, double domain_length, double amplitude) {
  SpectralField x0(nx, domain_length);
  if (nx >= 6) {
    x0.set_coeff(1, cplx(0.0, -amplitude / 2.0));
    x0.set_coeff(2, cplx(amplitude / 2.0, 0.0));
  } else {
    const auto x = grid_points(nx, domain_length);
    std::vector<double> u(x.size());
    for (std::size_t m = 0; m < x.size(); ++m) {
      u[m] = amplitude * (std::sin(2.0 * std::numbers::pi * x[m] / domain_length) +
                          std::cos(4.0 * std::numbers::pi * x[m] / domain_length));
    }
    x0 = to_spectral(u, domain_length);
  }
  return x0;
}

inline Problem make_problem(const ExperimentConfig& cfg) {
  validate(cfg);
  ModelSpec model = build_model(cfg);
  ModelSpec unshifted = model;
  unshifted.shift_into_F = false;
  OperatorSpectrum shifted_spec = make_spectrum(model, cfg.nx);
  OperatorSpectrum unshifted_spec = make_spectrum(unshifted, cfg.nx);
  NoiseModel noise = build_q(cfg.r, cfg.modes(), shifted_spec, cfg.noise_eps);
  return Problem{std::move(model), std::move(unshifted), std::move(shifted_spec), std::move(unshifted_spec),
                 std::move(noise), initial_condition(cfg.nx, cfg.domain_length, cfg.x0_amplitude)};
}

inline WienerPath trial_path(const Problem& p, const ExperimentConfig& cfg, int trial) {
  PathOptions opts;
  opts.block_size = cfg.path_block;
  opts.materialize_limit = cfg.materialize_limit;
  return sample_path(p.noise, cfg.t_final, cfg.dt_ref, cfg.seed, static_cast<std::uint64_t>(trial), opts);
}

inline AdaptConfig adapt_config(const ExperimentConfig& cfg, double dt_max) {
  AdaptConfig a;
  a.dt_max = dt_max;
  a.rho = cfg.rho;
  a.delta = cfg.delta;
  a.theta_rule = cfg.rule_theta;
  a.rules = cfg.rules;
  a.backstop_theta = cfg.theta;
  return a;
}

/// Reference solution: NSEE at the fine step dt_ref.
inline RunResult reference_run(const Problem& p, const ExperimentConfig& cfg, const WienerPath& path) {
  AdaptConfig a = adapt_config(cfg, cfg.dt_ref);
  StepperConfig s{Scheme::nsee, cfg.theta, cfg.dt_ref};
  return run_to_T(p.model, p.shifted, path, s, a, cfg.t_final, p.x0);
}

inline RunResult scheme_run(const Problem& p, const ExperimentConfig& cfg, const WienerPath& path, Scheme scheme,
                            double dt_max, const StepObserver& observer = {}) {
  StepperConfig s{scheme, cfg.theta, dt_max};
  return run_to_T(p.model_for(scheme), p.spectrum_for(scheme), path, s, adapt_config(cfg, dt_max), cfg.t_final,
                  p.x0, observer);
}

/// Worker count: SPDE_ADAPT_THREADS if set (0 = all cores), else all cores.
inline unsigned worker_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SPDE_ADAPT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return hw;
}

/// Runs fn(i) for i in [0, n) on a pool of workers. Results must be written per index so the
/// outcome does not depend on scheduling.
template <class Fn>
void parallel_for(int n, Fn&& fn) {
  const unsigned workers = std::min<unsigned>(worker_count(), static_cast<unsigned>(std::max(n, 1)));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct TrialSample {
  double error2 = 0.0;
  double cpu_seconds = 0.0;
  std::size_t steps = 0;
  std::size_t backstops = 0;
  std::size_t drift_excluded = 0;
  std::size_t admissibility_checks = 0;
  std::size_t admissibility_violations = 0;
  double total_time = 0.0;
  bool diverged = false;
  bool path_shared = true;
};

struct ErrorPoint {
  Scheme scheme = Scheme::asetd1;
  double dt_max = 0.0;
  double rms = 0.0;
  double stderr_rms = 0.0;
  double mean_dt = 0.0;
  double backstop_rate = 0.0;
  int diverged = 0;
  int used = 0;
  bool flagged = false;  // more than 10% of trials diverged
  double cpu_mean_s = 0.0;
  double median_steps = 0.0;
  std::size_t drift_excluded_steps = 0;
  std::size_t admissibility_checks = 0;
  std::size_t admissibility_violations = 0;
  std::vector<TrialSample> samples;
};

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double half_width = 0.0;
};

/// OLS on (log dt, log rms); half_width is twice the standard error of the slope.
inline SlopeFit fit_slope(std::span<const std::pair<double, double>> points) {
  if (points.size() < 3) throw std::invalid_argument("fit_slope: need at least 3 points");
  std::vector<double> xs, ys;
  for (const auto& [dt, rms] : points) {
    if (!(dt > 0.0) || !(rms > 0.0)) throw std::invalid_argument("fit_slope: points must be positive");
    xs.push_back(std::log(dt));
    ys.push_back(std::log(rms));
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_slope: dt values must not all coincide");
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double res = ys[i] - (fit.intercept + fit.slope * xs[i]);
    ssr += res * res;
  }
  fit.half_width = 2.0 * std::sqrt(ssr / (n - 2.0) / sxx);
  return fit;
}

struct ErrorReport {
  std::vector<ErrorPoint> points;
  std::map<Scheme, SlopeFit> slopes;
  int reference_diverged = 0;

  const ErrorPoint& at(Scheme s, double dt_max) const {
    for (const auto& p : points) {
      if (p.scheme == s && p.dt_max == dt_max) return p;
    }
    throw std::out_of_range("no error point for the requested scheme and dt_max");
  }
  std::vector<const ErrorPoint*> for_scheme(Scheme s) const {
    std::vector<const ErrorPoint*> out;
    for (const auto& p : points) {
      if (p.scheme == s) out.push_back(&p);
    }
    return out;
  }
};

namespace detail {

inline ErrorPoint summarize(Scheme scheme, double dt_max, std::vector<TrialSample> samples) {
  ErrorPoint pt;
  pt.scheme = scheme;
  pt.dt_max = dt_max;
  double sum_e2 = 0.0, sum_e4 = 0.0, cpu = 0.0, total_time = 0.0;
  std::size_t steps = 0, backstops = 0;
  std::vector<double> step_counts;
  for (const auto& s : samples) {
    if (s.diverged) {
      ++pt.diverged;
      continue;
    }
    ++pt.used;
    sum_e2 += s.error2;
    sum_e4 += s.error2 * s.error2;
    cpu += s.cpu_seconds;
    steps += s.steps;
    backstops += s.backstops;
    total_time += s.total_time;
    pt.drift_excluded_steps += s.drift_excluded;
    pt.admissibility_checks += s.admissibility_checks;
    pt.admissibility_violations += s.admissibility_violations;
    step_counts.push_back(static_cast<double>(s.steps));
  }
  pt.flagged = pt.diverged * 10 > static_cast<int>(samples.size());
  if (pt.used == 0) {
    pt.rms = std::numeric_limits<double>::quiet_NaN();
    pt.stderr_rms = pt.rms;
    pt.flagged = true;
  } else {
    const double m = static_cast<double>(pt.used);
    const double mse = sum_e2 / m;
    pt.rms = std::sqrt(mse);
    const double var = pt.used > 1 ? std::max(0.0, (sum_e4 - m * mse * mse) / (m - 1.0)) : 0.0;
    pt.stderr_rms = pt.rms > 0.0 ? std::sqrt(var / m) / (2.0 * pt.rms) : 0.0;
    pt.cpu_mean_s = cpu / m;
    pt.mean_dt = steps ? total_time / static_cast<double>(steps) : 0.0;
    pt.backstop_rate = steps ? static_cast<double>(backstops) / static_cast<double>(steps) : 0.0;
    std::sort(step_counts.begin(), step_counts.end());
    const std::size_t mid = step_counts.size() / 2;
    pt.median_steps = step_counts.size() % 2 ? step_counts[mid] : 0.5 * (step_counts[mid - 1] + step_counts[mid]);
  }
  pt.samples = std::move(samples);
  return pt;
}

}  // namespace detail

/// Runs every scheme at every dt_max against the NSEE reference on shared paths.
/// Wall-clock time is measured around the scheme's run_to_T only.
inline ErrorReport run_study(const ExperimentConfig& cfg) {
  const Problem problem = make_problem(cfg);
  const std::size_t n_schemes = cfg.schemes.size();
  const std::size_t n_dt = cfg.dt_max_list.size();
  const auto cell = [&](std::size_t s, std::size_t d) { return s * n_dt + d; };

  std::vector<std::vector<TrialSample>> per_trial(static_cast<std::size_t>(cfg.trials));
  std::vector<char> ref_diverged(static_cast<std::size_t>(cfg.trials), 0);

  parallel_for(cfg.trials, [&](int trial) {
    const WienerPath path = trial_path(problem, cfg, trial);
    const RunResult ref = reference_run(problem, cfg, path);
    auto& out = per_trial[static_cast<std::size_t>(trial)];
    out.assign(n_schemes * n_dt, TrialSample{});
    if (ref.diagnostics.diverged) {
      ref_diverged[static_cast<std::size_t>(trial)] = 1;
      return;
    }
    for (std::size_t s = 0; s < n_schemes; ++s) {
      for (std::size_t d = 0; d < n_dt; ++d) {
        const auto t0 = std::chrono::steady_clock::now();
        const RunResult run = scheme_run(problem, cfg, path, cfg.schemes[s], cfg.dt_max_list[d]);
        const auto t1 = std::chrono::steady_clock::now();
        TrialSample& ts = out[cell(s, d)];
        const auto& dg = run.diagnostics;
        ts.cpu_seconds = std::chrono::duration<double>(t1 - t0).count();
        ts.diverged = dg.diverged;
        ts.steps = dg.steps.size();
        ts.backstops = dg.backstop_count();
        ts.drift_excluded = dg.drift_excluded_count();
        ts.admissibility_checks = dg.admissibility_checks;
        ts.admissibility_violations = dg.admissibility_violations;
        ts.total_time = dg.total_time();
        if (!ts.diverged) {
          ts.path_shared = run.consumed_digest == ref.consumed_digest && run.consumed_digest == path.total_digest();
          if (!ts.path_shared) throw std::logic_error("reference and test run consumed different Wiener paths");
          const double e = l2_norm(run.final_state - ref.final_state);
          ts.error2 = e * e;
        }
      }
    }
  });

  ErrorReport report;
  for (char c : ref_diverged) report.reference_diverged += c;
  if (report.reference_diverged == cfg.trials) throw EmptyResultError("every reference solve diverged");

  for (std::size_t s = 0; s < n_schemes; ++s) {
    std::vector<std::pair<double, double>> fit_points;
    for (std::size_t d = 0; d < n_dt; ++d) {
      std::vector<TrialSample> samples;
      for (int t = 0; t < cfg.trials; ++t) {
        if (!ref_diverged[static_cast<std::size_t>(t)]) samples.push_back(per_trial[static_cast<std::size_t>(t)][cell(s, d)]);
      }
      ErrorPoint pt = detail::summarize(cfg.schemes[s], cfg.dt_max_list[d], std::move(samples));
      if (pt.used > 0 && pt.rms > 0.0) fit_points.emplace_back(pt.dt_max, pt.rms);
      report.points.push_back(std::move(pt));
    }
    if (fit_points.size() >= 3) report.slopes[cfg.schemes[s]] = fit_slope(fit_points);
  }
  return report;
}

/// RMS error of one scheme at one step size (scheme_cfg.dt is the dt_max).
inline ErrorPoint strong_error(const StepperConfig& scheme_cfg, const ExperimentConfig& cfg) {
  ExperimentConfig one = cfg;
  one.schemes = {scheme_cfg.scheme};
  one.dt_max_list = {scheme_cfg.dt};
  one.theta = scheme_cfg.theta;
  ErrorReport report = run_study(one);
  ErrorPoint pt = std::move(report.points.front());
  if (pt.used == 0) throw EmptyResultError("every trial diverged for " + std::string(to_string(pt.scheme)));
  return pt;
}

inline ErrorReport efficiency_study(const ExperimentConfig& cfg) { return run_study(cfg); }

/// Full diagnostics of one trial for one scheme.
inline TrajectoryDiagnostics realization_trace(Scheme scheme, const ExperimentConfig& cfg, int trial, double dt_max) {
  if (trial < 0) throw std::invalid_argument("trial index must be non-negative");
  const Problem problem = make_problem(cfg);
  const WienerPath path = trial_path(problem, cfg, trial);
  return scheme_run(problem, cfg, path, scheme, dt_max).diagnostics;
}

// ---- output ----------------------------------------------------------------

inline void write_converge_csv(const ErrorReport& report, std::ostream& os) {
  using detail::fmt_double;
  os << "scheme,dt_max,rms,stderr,mean_dt,backstop_rate,diverged,flagged\n";
  for (const auto& p : report.points) {
    os << to_string(p.scheme) << ',' << fmt_double(p.dt_max) << ',' << fmt_double(p.rms) << ','
       << fmt_double(p.stderr_rms) << ',' << fmt_double(p.mean_dt) << ',' << fmt_double(p.backstop_rate) << ','
       << p.diverged << ',' << (p.flagged ? 1 : 0) << '\n';
  }
  for (const auto& [scheme, fit] : report.slopes) {
    os << "# slope," << to_string(scheme) << ',' << fmt_double(fit.slope) << ",half_width,"
       << fmt_double(fit.half_width) << '\n';
  }
}

inline void write_efficiency_csv(const ErrorReport& report, std::ostream& os) {
  using detail::fmt_double;
  os << "scheme,dt_max,rms,cpu_mean_s\n";
  for (const auto& p : report.points) {
    os << to_string(p.scheme) << ',' << fmt_double(p.dt_max) << ',' << fmt_double(p.rms) << ','
       << fmt_double(p.cpu_mean_s) << '\n';
  }
}

inline void write_trace_csv(const TrajectoryDiagnostics& diag, std::ostream& os) {
  using detail::fmt_double;
  os << "t,dt,f_norm,backstop,drift_included\n";
  for (const auto& r : diag.steps) {
    os << fmt_double(r.t) << ',' << fmt_double(r.dt) << ',' << fmt_double(r.f_norm) << ',' << (r.backstop ? 1 : 0)
       << ',' << (r.drift_included ? 1 : 0) << '\n';
  }
}

/// Sidecar with every config value, the seeds, the initial condition and the code version.
inline void write_metadata(const ExperimentConfig& cfg, const std::string& command, std::ostream& os) {
  os << "# spde_adapt " << kVersion << "\n"
     << "command = " << command << "\n"
     << "initial_condition = x0_amplitude * (sin(2 pi x / a) + cos(4 pi x / a))\n"
     << "noise_q = j^-(2r + 1 + noise_eps), orthonormal real Fourier chi_j ordered by shifted eigenvalue\n"
     << "reference = nsee at dt_ref\n"
     << "rng = mt19937_64 per (seed, trial, mode, block) via seed_seq\n"
     << to_text(cfg);
}

inline std::filesystem::path write_file(const std::filesystem::path& dir, const std::string& name,
                                        const std::function<void(std::ostream&)>& body) {
  std::filesystem::create_directories(dir);
  const auto file = dir / name;
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  body(os);
  return file;
}

}  // namespace spde_adapt
