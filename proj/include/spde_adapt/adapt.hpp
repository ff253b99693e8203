#pragma once

// Step-size selection, backstop hand-off and the run-to-T driver.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spde_adapt/models.hpp"
#include "spde_adapt/noise.hpp"
#include "spde_adapt/steppers.hpp"

namespace spde_adapt {

/// The five admissible selection rules, named after their bounds:
///   i   dt <= delta / ||F||^{1/theta}
///   ii  dt <= delta / (c3 (1 + ||X||^{1+c2}))
///   iii dt <= delta ||X|| / ||F||
///   iv  dt <= delta ||X|| / (c3 (1 + ||X||^{1+c2}))
///   v   dt <= delta / ||X||
enum class SelectionRule { i, ii, iii, iv, v };

inline std::string_view to_string(SelectionRule r) {
  switch (r) {
    case SelectionRule::i: return "i";
    case SelectionRule::ii: return "ii";
    case SelectionRule::iii: return "iii";
    case SelectionRule::iv: return "iv";
    case SelectionRule::v: return "v";
  }
  return "?";
}

inline SelectionRule parse_rule(std::string_view name) {
  for (auto r : {SelectionRule::i, SelectionRule::ii, SelectionRule::iii, SelectionRule::iv, SelectionRule::v}) {
    if (to_string(r) == name) return r;
  }
  throw std::invalid_argument("unknown selection rule '" + std::string(name) + "'");
}

struct AdaptConfig {
  double dt_max = 1e-2;
  double rho = 100.0;
  std::optional<double> delta;  // defaults to dt_max
  double theta_rule = 1.0;
  std::vector<SelectionRule> rules{SelectionRule::i};
  double backstop_theta = 0.25;
  double c2 = 2.0;
  std::optional<double> c3;  // defaults to 2 c1 + ||F(0)|| of the model drift

  double delta_value() const { return delta.value_or(dt_max); }
};

/// dt_max and dt_min as whole numbers of fine steps. The smallest step taken is dt_max / rho
/// rounded up to the fine grid; the backstop decision uses dt_max / rho itself.
struct StepGrid {
  double dt_ref = 0.0;
  std::int64_t max_fine = 0;
  std::int64_t min_fine = 0;
  double dt_min_nominal = 0.0;

  double dt_max() const { return static_cast<double>(max_fine) * dt_ref; }
  double dt_min() const { return static_cast<double>(min_fine) * dt_ref; }
};

inline StepGrid resolve_steps(const AdaptConfig& cfg, double dt_ref) {
  if (!(dt_ref > 0.0)) throw std::invalid_argument("dt_ref must be positive");
  if (!(cfg.dt_max > 0.0)) throw std::invalid_argument("dt_max must be positive");
  if (!(cfg.rho >= 1.0)) throw std::invalid_argument("rho must be >= 1");
  const double delta = cfg.delta_value();
  if (!(delta > 0.0) || delta > cfg.dt_max * (1.0 + 1e-12)) {
    throw std::invalid_argument("delta must lie in (0, dt_max]");
  }
  const double ratio = cfg.dt_max / dt_ref;
  StepGrid g;
  g.dt_ref = dt_ref;
  g.max_fine = std::llround(ratio);
  if (g.max_fine < 1 || std::abs(ratio - static_cast<double>(g.max_fine)) > 1e-9 * ratio) {
    throw std::invalid_argument("dt_max must be an integer multiple of dt_ref");
  }
  const double min_ratio = ratio / cfg.rho;
  g.min_fine = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(min_ratio - 1e-9 * min_ratio)));
  g.min_fine = std::min(g.min_fine, g.max_fine);
  g.dt_min_nominal = g.dt_max() / cfg.rho;
  return g;
}

struct StepChoice {
  double dt = 0.0;
  std::int64_t fine_steps = 0;
  bool backstop = false;
  double candidate = 0.0;  // largest rule bound before clamping
  SelectionRule active_rule = SelectionRule::i;
};

/// Largest step any enabled rule allows, rounded down to the fine grid and clamped to
/// [dt_min, dt_max]. backstop is set iff the unclamped candidate is <= dt_max / rho.
inline StepChoice select_dt(double f_norm, double x_norm, const AdaptConfig& cfg, double dt_ref) {
  if (!std::isfinite(f_norm) || !std::isfinite(x_norm) || f_norm < 0.0 || x_norm < 0.0) {
    throw std::invalid_argument("select_dt: norms must be finite and non-negative");
  }
  if (cfg.rules.empty()) throw ConfigError("no time-step selection rule enabled");
  const StepGrid grid = resolve_steps(cfg, dt_ref);
  const double delta = cfg.delta_value();
  const double inf = std::numeric_limits<double>::infinity();
  const double c3 = cfg.c3.value_or(1.0);
  const double growth = c3 * (1.0 + std::pow(x_norm, 1.0 + cfg.c2));

  StepChoice choice;
  choice.candidate = -inf;
  for (SelectionRule rule : cfg.rules) {
    double bound = 0.0;
    switch (rule) {
      case SelectionRule::i: bound = f_norm == 0.0 ? inf : delta / std::pow(f_norm, 1.0 / cfg.theta_rule); break;
      case SelectionRule::ii: bound = delta / growth; break;
      case SelectionRule::iii: bound = f_norm == 0.0 ? inf : delta * x_norm / f_norm; break;
      case SelectionRule::iv: bound = delta * x_norm / growth; break;
      case SelectionRule::v: bound = x_norm == 0.0 ? inf : delta / x_norm; break;
    }
    if (bound > choice.candidate) {
      choice.candidate = bound;
      choice.active_rule = rule;
    }
  }

  if (choice.candidate <= grid.dt_min_nominal) {
    choice.backstop = true;
    choice.fine_steps = grid.min_fine;
  } else {
    const double capped = std::min(choice.candidate, grid.dt_max());
    const auto fine = static_cast<std::int64_t>(std::floor(capped / dt_ref * (1.0 + 1e-12)));
    choice.fine_steps = std::clamp(fine, grid.min_fine, grid.max_fine);
  }
  choice.dt = static_cast<double>(choice.fine_steps) * dt_ref;
  return choice;
}

/// ||F||^2 <= R1 + R2 ||X||^2, boundary inclusive.
inline bool admissibility_check(double f_norm2, double x_norm2, double R1, double R2) {
  return f_norm2 <= R1 + R2 * x_norm2;
}

struct StepRecord {
  double t = 0.0;
  double dt = 0.0;
  double f_norm = 0.0;
  double x_norm = 0.0;
  bool backstop = false;
  bool drift_included = true;
};

struct TrajectoryDiagnostics {
  std::vector<StepRecord> steps;
  bool diverged = false;
  std::string divergence_reason;
  std::size_t admissibility_checks = 0;
  std::size_t admissibility_violations = 0;

  double total_time() const {
    double s = 0.0;
    for (const auto& r : steps) s += r.dt;
    return s;
  }
  double mean_dt() const { return steps.empty() ? 0.0 : total_time() / static_cast<double>(steps.size()); }
  std::size_t backstop_count() const {
    return static_cast<std::size_t>(std::count_if(steps.begin(), steps.end(), [](const auto& r) { return r.backstop; }));
  }
  std::size_t drift_excluded_count() const {
    return static_cast<std::size_t>(
        std::count_if(steps.begin(), steps.end(), [](const auto& r) { return !r.drift_included; }));
  }
  /// Maximal [t_start, t_end] intervals over which the drift was switched off.
  std::vector<std::pair<double, double>> switch_off_intervals() const {
    std::vector<std::pair<double, double>> out;
    for (const auto& r : steps) {
      if (r.drift_included) continue;
      if (!out.empty() && out.back().second == r.t) {
        out.back().second = r.t + r.dt;
      } else {
        out.emplace_back(r.t, r.t + r.dt);
      }
    }
    return out;
  }
};

struct RunResult {
  SpectralField final_state;
  TrajectoryDiagnostics diagnostics;
  std::uint64_t consumed_digest = 0;
};

using StepObserver = std::function<void(const StepRecord&, std::span<const double> increments)>;

/// Fields with norm above this are treated as diverged.
inline constexpr double kDivergenceNorm = 1e10;

/// c3 = 2 c1 + ||F(0)|| with c1 the largest drift coefficient magnitude (shift included).
inline double default_growth_c3(const ModelSpec& model, const OperatorSpectrum& spec) {
  double c1 = std::abs(spec.c0());
  for (std::size_t i = 1; i < model.drift_poly.size(); ++i) {
    const double coeff = model.drift_poly[i] + (i == 1 ? spec.c0() : 0.0);
    c1 = std::max(c1, std::abs(coeff));
  }
  const double f0 = model.drift_poly.empty() ? 0.0 : std::abs(model.drift_poly[0]) * std::sqrt(model.domain_length);
  return 2.0 * c1 + f0;
}

/// Integrates from x0 at t = 0 to T on a shared Wiener path.
///
/// Adaptive schemes (ASETD1/ASETD0) pick each step with select_dt and fall back to one NSEE
/// step of dt_min when the rule asks for dt <= dt_min. Fixed-step schemes take steps of
/// adapt.dt_max. The final step is clipped to land on T. `scheme.dt` is ignored.
inline RunResult run_to_T(const ModelSpec& model, const OperatorSpectrum& spec, const WienerPath& path,
                          const StepperConfig& scheme, const AdaptConfig& adapt, double T,
                          const SpectralField& x0, const StepObserver& observer = {}) {
  spec.require_compatible(x0);
  const StepGrid grid = resolve_steps(adapt, path.dt_ref());
  const std::int64_t n_end = path.grid_index(T);
  const bool adaptive = is_adaptive(scheme.scheme);
  const double rho_r1 = std::pow(adapt.rho, 2.0 * adapt.theta_rule);
  const double rho_r2 = adapt.rho * adapt.rho;

  AdaptConfig selection = adapt;
  if (!selection.c3) selection.c3 = default_growth_c3(model, spec);

  RunResult result;
  TrajectoryDiagnostics& diag = result.diagnostics;
  PathReader reader(path);
  std::vector<double> increments(static_cast<std::size_t>(path.n_modes()));
  SpectralField x = x0;
  std::int64_t i = 0;

  try {
    while (i < n_end) {
      const DriftEvaluation f = evaluate_drift(model, spec, x);
      const double x_norm = l2_norm(x);

      StepRecord rec;
      rec.t = static_cast<double>(i) * path.dt_ref();
      rec.f_norm = f.norm;
      rec.x_norm = x_norm;

      std::int64_t fine = grid.max_fine;
      std::optional<SelectionRule> active;
      if (adaptive) {
        const StepChoice choice = select_dt(f.norm, x_norm, selection, path.dt_ref());
        fine = choice.fine_steps;
        rec.backstop = choice.backstop;
        if (!choice.backstop) active = choice.active_rule;
      }
      fine = std::min(fine, n_end - i);
      rec.dt = static_cast<double>(fine) * path.dt_ref();

      reader.increment(i, i + fine, increments);
      const SpectralField dW = wiener_field(increments, path.model(), spec);

      StepperConfig cfg = scheme;
      cfg.dt = rec.dt;
      if (rec.backstop) {
        cfg.scheme = Scheme::nsee;
        cfg.theta = adapt.backstop_theta;
      }
      StepOutcome out = step(cfg, x, spec, model, dW, f);
      rec.drift_included = out.drift_included;

      if (active == SelectionRule::i || active == SelectionRule::iii) {
        const bool rule_i = *active == SelectionRule::i;
        ++diag.admissibility_checks;
        if (!admissibility_check(f.norm * f.norm, x_norm * x_norm, rule_i ? rho_r1 : 0.0, rule_i ? 0.0 : rho_r2)) {
          ++diag.admissibility_violations;
        }
      }

      diag.steps.push_back(rec);
      if (observer) observer(rec, increments);
      x = std::move(out.next_state);
      i += fine;

      const double norm = l2_norm(x);
      if (!std::isfinite(norm) || norm > kDivergenceNorm) {
        throw BlowUpError("state norm " + std::to_string(norm) + " at t = " +
                          std::to_string(static_cast<double>(i) * path.dt_ref()));
      }
    }
  } catch (const BlowUpError& e) {
    diag.diverged = true;
    diag.divergence_reason = e.what();
  }

  result.final_state = std::move(x);
  result.consumed_digest = reader.consumed_digest();
  return result;
}

}  // namespace spde_adapt
