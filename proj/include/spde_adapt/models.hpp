#pragma once

// Semilinear SPDE problems dX = [-A X + F(X)] dt + sigma X dW with a
// pointwise polynomial drift, evaluated pseudo-spectrally.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spde_adapt/spectral_core.hpp"

namespace spde_adapt {

struct ModelSpec {
  std::string name;
  /// kappa -> eigenvalue of the unshifted -A on the mode with wavenumber kappa.
  std::function<double(double)> linear_symbol;
  /// F(u) = sum_i drift_poly[i] u^i, before any shift.
  std::vector<double> drift_poly;
  double sigma = 0.0;
  double domain_length = 0.0;
  /// Move c0 X from the operator into the drift (exponential schemes).
  bool shift_into_F = true;
  /// Apply the 2/3 rule to pointwise products.
  bool dealias = false;
};

inline void validate(const ModelSpec& model) {
  if (!model.linear_symbol) throw std::invalid_argument("model " + model.name + " has no linear symbol");
  if (!(model.sigma >= 0.0)) throw std::invalid_argument("model sigma must be non-negative");
  if (!(model.domain_length > 0.0)) throw std::invalid_argument("model domain length must be positive");
  auto last = std::find_if(model.drift_poly.rbegin(), model.drift_poly.rend(), [](double c) { return c != 0.0; });
  if (last == model.drift_poly.rend()) return;  // F == 0
  const auto degree = std::distance(last, model.drift_poly.rend()) - 1;
  if (degree % 2 == 0 || *last >= 0.0) {
    throw std::invalid_argument("drift polynomial must have odd degree and a negative leading coefficient");
  }
}

/// dX = [Laplacian X + X - X^3] dt + sigma X dW.
inline ModelSpec allen_cahn(double sigma, double domain_length) {
  ModelSpec m;
  m.name = "allen_cahn";
  m.linear_symbol = [](double kappa) { return -kappa * kappa; };
  m.drift_poly = {0.0, 1.0, 0.0, -1.0};
  m.sigma = sigma;
  m.domain_length = domain_length;
  validate(m);
  return m;
}

/// dX = [eta X - (1 + Laplacian)^2 X + c X^2 - X^3] dt + sigma X dW.
inline ModelSpec swift_hohenberg(double eta, double c, double sigma, double domain_length) {
  ModelSpec m;
  m.name = "swift_hohenberg";
  m.linear_symbol = [eta](double kappa) {
    const double s = 1.0 - kappa * kappa;
    return eta - s * s;
  };
  m.drift_poly = {0.0, 0.0, c, -1.0};
  m.sigma = sigma;
  m.domain_length = domain_length;
  validate(m);
  return m;
}

/// c0 = max(0, -min_k lambda_k) + 1, lambda_k the unshifted eigenvalues of A.
inline double compute_shift(const ModelSpec& model, int n_modes) {
  double min_lambda = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= n_modes / 2; ++k) {
    min_lambda = std::min(min_lambda, -model.linear_symbol(wavenumber(k, model.domain_length)));
  }
  return std::max(0.0, -min_lambda) + 1.0;
}

/// Spectrum of A on N modes; shifted by c0 when the model routes c0 X into F.
inline OperatorSpectrum make_spectrum(const ModelSpec& model, int n_modes) {
  validate(model);
  const double c0 = model.shift_into_F ? compute_shift(model, n_modes) : 0.0;
  std::vector<double> lambdas(static_cast<std::size_t>(n_modes / 2 + 1));
  for (int k = 0; k <= n_modes / 2; ++k) {
    lambdas[static_cast<std::size_t>(k)] = -model.linear_symbol(wavenumber(k, model.domain_length)) + c0;
  }
  OperatorSpectrum spec(n_modes, model.domain_length, std::move(lambdas), c0);
  if (model.shift_into_F && !spec.positive()) {
    throw std::logic_error("shifted spectrum is not strictly positive");
  }
  return spec;
}

/// F(u) + c0 u evaluated pointwise.
inline double eval_polynomial(std::span<const double> poly, double c0, double u) {
  double acc = 0.0;
  for (auto it = poly.rbegin(); it != poly.rend(); ++it) acc = acc * u + *it;
  return acc + c0 * u;
}

/// Drift F(X) (shifted by the spectrum's c0) together with the grid samples of X it was
/// computed from, so the diffusion term can reuse them.
struct DriftEvaluation {
  std::vector<double> state_grid;
  SpectralField drift;
  double norm = 0.0;
};

inline DriftEvaluation evaluate_drift(const ModelSpec& model, const OperatorSpectrum& spec,
                                      const SpectralField& field) {
  spec.require_compatible(field);
  DriftEvaluation out;
  out.state_grid = to_physical(model.dealias ? truncate_two_thirds(field) : field);
  std::vector<double> values(out.state_grid.size());
  for (std::size_t m = 0; m < values.size(); ++m) {
    values[m] = eval_polynomial(model.drift_poly, spec.c0(), out.state_grid[m]);
  }
  out.drift = to_spectral(values, field.domain_length());
  if (model.dealias) out.drift = truncate_two_thirds(out.drift);
  require_finite(out.drift, "drift");
  out.norm = l2_norm(out.drift);
  return out;
}

/// P_h F(X) by pseudo-spectral evaluation.
inline SpectralField eval_drift(const ModelSpec& model, const OperatorSpectrum& spec, const SpectralField& field) {
  return evaluate_drift(model, spec, field).drift;
}

/// sigma X(x) dW(x) with X already sampled on the grid.
inline SpectralField diffusion_from_grid(const ModelSpec& model, std::span<const double> state_grid,
                                         const SpectralField& dW) {
  SpectralField out(dW.n_modes(), dW.domain_length());
  if (model.sigma == 0.0) return out;
  const auto noise = to_physical(model.dealias ? truncate_two_thirds(dW) : dW);
  if (noise.size() != state_grid.size()) throw std::invalid_argument("state and noise grids differ");
  std::vector<double> prod(noise.size());
  for (std::size_t m = 0; m < prod.size(); ++m) prod[m] = model.sigma * state_grid[m] * noise[m];
  out = to_spectral(prod, dW.domain_length());
  if (model.dealias) out = truncate_two_thirds(out);
  require_finite(out, "diffusion increment");
  return out;
}

/// P_h B(X) P_J Delta W with B(X) = sigma X.
inline SpectralField eval_diffusion_increment(const ModelSpec& model, const SpectralField& field,
                                              const SpectralField& dW) {
  field.require_same_grid(dW);
  const auto grid = to_physical(model.dealias ? truncate_two_thirds(field) : field);
  return diffusion_from_grid(model, grid, dW);
}

inline double drift_norm(const ModelSpec& model, const OperatorSpectrum& spec, const SpectralField& field) {
  return evaluate_drift(model, spec, field).norm;
}

}  // namespace spde_adapt
