#pragma once

// One-step maps. Steppers never pick step sizes; see adapt.hpp for that.

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

#include "spde_adapt/models.hpp"
#include "spde_adapt/spectral_core.hpp"

namespace spde_adapt {

enum class Scheme { asetd1, asetd0, nsee, tem, tsetd0 };

inline std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::asetd1: return "asetd1";
    case Scheme::asetd0: return "asetd0";
    case Scheme::nsee: return "nsee";
    case Scheme::tem: return "tem";
    case Scheme::tsetd0: return "tsetd0";
  }
  return "unknown";
}

inline Scheme parse_scheme(std::string_view name) {
  for (Scheme s : {Scheme::asetd1, Scheme::asetd0, Scheme::nsee, Scheme::tem, Scheme::tsetd0}) {
    if (to_string(s) == name) return s;
  }
  throw std::invalid_argument("unknown scheme '" + std::string(name) + "'");
}

/// ASETD1 and ASETD0 choose their own steps; the rest run at a fixed dt.
inline bool is_adaptive(Scheme s) { return s == Scheme::asetd1 || s == Scheme::asetd0; }

/// Everything but TEM integrates the shifted operator exactly.
inline bool is_exponential(Scheme s) { return s != Scheme::tem; }

struct StepperConfig {
  Scheme scheme = Scheme::asetd1;
  double theta = 0.25;  // NSEE indicator exponent
  double dt = 0.0;
};

struct StepOutcome {
  SpectralField next_state;
  bool drift_included = true;
  double f_norm = 0.0;
};

namespace detail {

inline void check_dt(double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("step size must be positive");
}

inline void check_theta(double theta) {
  if (!(theta > 0.0 && theta <= 0.25)) throw std::invalid_argument("NSEE theta must lie in (0, 1/4]");
}

inline StepOutcome finish(SpectralField next, bool drift_included, double f_norm) {
  require_finite(next, "step output");
  return {std::move(next), drift_included, f_norm};
}

}  // namespace detail

/// v / (1 + sqrt(dt) ||v||).
inline SpectralField tame(const SpectralField& v, double dt) {
  detail::check_dt(dt);
  return v * (1.0 / (1.0 + std::sqrt(dt) * l2_norm(v)));
}

// Overloads taking a DriftEvaluation reuse a drift the caller already computed at `state`.

/// X+ = S(dt)(X + B(X) dW) + dt phi1(-dt A) F(X).
inline StepOutcome step_asetd1(const SpectralField& state, const OperatorSpectrum& spec, const ModelSpec& model,
                               double dt, const SpectralField& dW, const DriftEvaluation& f) {
  detail::check_dt(dt);
  SpectralField y = state + diffusion_from_grid(model, f.state_grid, dW);
  SpectralField next = y;
  auto c = next.half();
  const auto fy = f.drift.half();
  const auto lambdas = spec.lambdas();
  for (std::size_t k = 0; k < c.size(); ++k) {
    const double z = -dt * lambdas[k];
    c[k] = std::exp(z) * c[k] + dt * phi1(z) * fy[k];
  }
  return detail::finish(std::move(next), true, f.norm);
}

inline StepOutcome step_asetd1(const SpectralField& state, const OperatorSpectrum& spec, const ModelSpec& model,
                               double dt, const SpectralField& dW) {
  return step_asetd1(state, spec, model, dt, dW, evaluate_drift(model, spec, state));
}

/// ASETD1 rearranged around a single phi1 evaluation:
/// X+ = Y + dt phi1(-dt A)(-A Y + F(X)),  Y = X + B(X) dW.
inline StepOutcome step_asetd1_single_exponential(const SpectralField& state, const OperatorSpectrum& spec,
                                                  const ModelSpec& model, double dt, const SpectralField& dW) {
  detail::check_dt(dt);
  const DriftEvaluation f = evaluate_drift(model, spec, state);
  const SpectralField y = state + diffusion_from_grid(model, f.state_grid, dW);
  SpectralField rhs = f.drift - apply_operator(spec, y);
  return detail::finish(y + dt * apply_phi1(spec, dt, rhs), true, f.norm);
}

/// X+ = S(dt)(X + dt F(X) + B(X) dW).
inline StepOutcome step_asetd0(const SpectralField& state, const OperatorSpectrum& spec, const ModelSpec& model,
                               double dt, const SpectralField& dW, const DriftEvaluation& f) {
  detail::check_dt(dt);
  SpectralField inner = state + dt * f.drift;
  inner += diffusion_from_grid(model, f.state_grid, dW);
  return detail::finish(apply_semigroup(spec, dt, inner), true, f.norm);
}

inline StepOutcome step_asetd0(const SpectralField& state, const OperatorSpectrum& spec, const ModelSpec& model,
                               double dt, const SpectralField& dW) {
  return step_asetd0(state, spec, model, dt, dW, evaluate_drift(model, spec, state));
}

/// Nonlinearities-stopped exponential Euler: ASETD0 when ||F(X)|| <= dt^-theta,
/// otherwise the drift and diffusion terms are dropped for this step.
inline StepOutcome step_nsee(const SpectralField& state, const OperatorSpectrum& spec, const ModelSpec& model,
                             double dt, const SpectralField& dW, double theta, const DriftEvaluation& f) {
  detail::check_dt(dt);
  detail::check_theta(theta);
  if (f.norm <= std::pow(1.0 / dt, theta)) return step_asetd0(state, spec, model, dt, dW, f);
  return detail::finish(apply_semigroup(spec, dt, state), false, f.norm);
}

inline StepOutcome step_nsee(const SpectralField& state, const OperatorSpectrum& spec, const ModelSpec& model,
                             double dt, const SpectralField& dW, double theta = 0.25) {
  return step_nsee(state, spec, model, dt, dW, theta, evaluate_drift(model, spec, state));
}

/// Tamed Euler-Maruyama on C(X) = -A X + F(X). The combination C is invariant under the
/// c0 shift, so either spectrum gives the same map.
inline StepOutcome step_tem(const SpectralField& state, const OperatorSpectrum& spec, const ModelSpec& model,
                            double dt, const SpectralField& dW, const DriftEvaluation& f) {
  detail::check_dt(dt);
  const SpectralField c = f.drift - apply_operator(spec, state);
  SpectralField next = state + dt * tame(c, dt);
  next += diffusion_from_grid(model, f.state_grid, dW);
  return detail::finish(std::move(next), true, f.norm);
}

inline StepOutcome step_tem(const SpectralField& state, const OperatorSpectrum& spec, const ModelSpec& model,
                            double dt, const SpectralField& dW) {
  return step_tem(state, spec, model, dt, dW, evaluate_drift(model, spec, state));
}

/// X+ = S(dt)(X + dt tame(F(X)) + B(X) dW).
inline StepOutcome step_tsetd0(const SpectralField& state, const OperatorSpectrum& spec, const ModelSpec& model,
                               double dt, const SpectralField& dW, const DriftEvaluation& f) {
  detail::check_dt(dt);
  SpectralField inner = state + dt * tame(f.drift, dt);
  inner += diffusion_from_grid(model, f.state_grid, dW);
  return detail::finish(apply_semigroup(spec, dt, inner), true, f.norm);
}

inline StepOutcome step_tsetd0(const SpectralField& state, const OperatorSpectrum& spec, const ModelSpec& model,
                               double dt, const SpectralField& dW) {
  return step_tsetd0(state, spec, model, dt, dW, evaluate_drift(model, spec, state));
}

inline StepOutcome step(const StepperConfig& cfg, const SpectralField& state, const OperatorSpectrum& spec,
                        const ModelSpec& model, const SpectralField& dW, const DriftEvaluation& f) {
  switch (cfg.scheme) {
    case Scheme::asetd1: return step_asetd1(state, spec, model, cfg.dt, dW, f);
    case Scheme::asetd0: return step_asetd0(state, spec, model, cfg.dt, dW, f);
    case Scheme::nsee: return step_nsee(state, spec, model, cfg.dt, dW, cfg.theta, f);
    case Scheme::tem: return step_tem(state, spec, model, cfg.dt, dW, f);
    case Scheme::tsetd0: return step_tsetd0(state, spec, model, cfg.dt, dW, f);
  }
  throw std::logic_error("unhandled scheme");
}

inline StepOutcome step(const StepperConfig& cfg, const SpectralField& state, const OperatorSpectrum& spec,
                        const ModelSpec& model, const SpectralField& dW) {
  return step(cfg, state, spec, model, dW, evaluate_drift(model, spec, state));
}

}  // namespace spde_adapt
