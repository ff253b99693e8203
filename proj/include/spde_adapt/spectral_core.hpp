#pragma once

// Periodic 1D Fourier discretisation.
//
// A real field u on [0, a) sampled at x_m = m a / N is stored through its
// Fourier coefficients in the unitary "average" convention
//
//     c_k = (1/N) sum_m u(x_m) exp(-i kappa_k x_m),   kappa_k = 2 pi k / a,
//
// so that u(x_m) = sum_k c_k exp(i kappa_k x_m) and ||u||^2 = a sum_k |c_k|^2.
// Only k = 0..N/2 are kept; negative wavenumbers are the conjugates.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spde_adapt/errors.hpp"

namespace spde_adapt {

using cplx = std::complex<double>;

namespace detail {

class FftPlan {
 public:
  explicit FftPlan(int n) {
    std::vector<double> real(static_cast<std::size_t>(n));
    std::vector<cplx> spec(static_cast<std::size_t>(n / 2 + 1));
    auto* c = reinterpret_cast<fftw_complex*>(spec.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    forward_ = fftw_plan_dft_r2c_1d(n, real.data(), c, flags);
    backward_ = fftw_plan_dft_c2r_1d(n, c, real.data(), flags);
    if (forward_ == nullptr || backward_ == nullptr) {
      throw std::runtime_error("FFTW planning failed for n = " + std::to_string(n));
    }
  }
  ~FftPlan() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  // Unnormalised r2c; input is preserved.
  void forward(const double* in, cplx* out) const {
    fftw_execute_dft_r2c(forward_, const_cast<double*>(in), reinterpret_cast<fftw_complex*>(out));
  }
  // Unnormalised c2r; `in` is overwritten.
  void backward(cplx* in, double* out) const {
    fftw_execute_dft_c2r(backward_, reinterpret_cast<fftw_complex*>(in), out);
  }

 private:
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

// FFTW's planner is not thread safe; plan execution with the new-array API is.
inline const FftPlan& fft_plan(int n) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<FftPlan>> plans;
  std::lock_guard lock(mutex);
  auto& plan = plans[n];
  if (!plan) plan = std::make_unique<FftPlan>(n);
  return *plan;
}

inline void check_grid(int n_modes, double domain_length) {
  if (n_modes < 2 || n_modes % 2 != 0) {
    throw std::invalid_argument("n_modes must be a positive even integer, got " +
                                std::to_string(n_modes));
  }
  if (!(domain_length > 0.0) || !std::isfinite(domain_length)) {
    throw std::invalid_argument("domain length must be positive and finite");
  }
}

}  // namespace detail

/// Physical wavenumber of Fourier index k on a domain of length a.
inline double wavenumber(int k, double domain_length) {
  return 2.0 * std::numbers::pi * k / domain_length;
}

/// Real field on the periodic domain held as its half spectrum (k = 0..N/2).
class SpectralField {
 public:
  SpectralField() = default;

  SpectralField(int n_modes, double domain_length)
      : n_(n_modes), length_(domain_length), half_(static_cast<std::size_t>(n_modes / 2 + 1)) {
    detail::check_grid(n_modes, domain_length);
  }

  SpectralField(int n_modes, double domain_length, std::vector<cplx> half_coeffs)
      : n_(n_modes), length_(domain_length), half_(std::move(half_coeffs)) {
    detail::check_grid(n_modes, domain_length);
    if (half_.size() != static_cast<std::size_t>(n_modes / 2 + 1)) {
      throw std::invalid_argument("half spectrum must hold n_modes/2 + 1 coefficients");
    }
    symmetrize();
  }

  int n_modes() const noexcept { return n_; }
  double domain_length() const noexcept { return length_; }
  int nyquist() const noexcept { return n_ / 2; }

  std::span<const cplx> half() const noexcept { return half_; }
  std::span<cplx> half() noexcept { return half_; }

  /// Coefficient at signed index k in (-N/2, N/2].
  cplx coeff(int k) const {
    check_index(k);
    return k >= 0 ? half_[static_cast<std::size_t>(k)] : std::conj(half_[static_cast<std::size_t>(-k)]);
  }

  /// Sets the coefficient at k; the conjugate at -k follows implicitly.
  void set_coeff(int k, cplx value) {
    check_index(k);
    if (k >= 0) {
      half_[static_cast<std::size_t>(k)] = value;
    } else {
      half_[static_cast<std::size_t>(-k)] = std::conj(value);
    }
    symmetrize();
  }

  bool is_finite() const noexcept {
    return std::all_of(half_.begin(), half_.end(),
                       [](cplx c) { return std::isfinite(c.real()) && std::isfinite(c.imag()); });
  }

  /// The k = 0 and Nyquist coefficients of a real field are real.
  void symmetrize() noexcept {
    if (half_.empty()) return;
    half_.front().imag(0.0);
    half_.back().imag(0.0);
  }

  bool same_grid(const SpectralField& other) const noexcept {
    return n_ == other.n_ && length_ == other.length_;
  }

  SpectralField& operator+=(const SpectralField& rhs) {
    require_same_grid(rhs);
    for (std::size_t k = 0; k < half_.size(); ++k) half_[k] += rhs.half_[k];
    return *this;
  }
  SpectralField& operator-=(const SpectralField& rhs) {
    require_same_grid(rhs);
    for (std::size_t k = 0; k < half_.size(); ++k) half_[k] -= rhs.half_[k];
    return *this;
  }
  SpectralField& operator*=(double s) noexcept {
    for (auto& c : half_) c *= s;
    return *this;
  }

  friend SpectralField operator+(SpectralField lhs, const SpectralField& rhs) { return lhs += rhs; }
  friend SpectralField operator-(SpectralField lhs, const SpectralField& rhs) { return lhs -= rhs; }
  friend SpectralField operator*(double s, SpectralField f) { return f *= s; }
  friend SpectralField operator*(SpectralField f, double s) { return f *= s; }

  void require_same_grid(const SpectralField& rhs) const {
    if (!same_grid(rhs)) throw std::invalid_argument("fields live on different grids");
  }

 private:
  void check_index(int k) const {
    if (k <= -n_ / 2 || k > n_ / 2) {
      throw std::out_of_range("wavenumber index " + std::to_string(k) + " outside (-N/2, N/2]");
    }
  }

  int n_ = 0;
  double length_ = 0.0;
  std::vector<cplx> half_;
};

inline void require_finite(const SpectralField& f, const char* what) {
  if (!f.is_finite()) throw BlowUpError(std::string("non-finite coefficient in ") + what);
}

/// Uniform grid x_m = m a / N.
inline std::vector<double> grid_points(int n_modes, double domain_length) {
  detail::check_grid(n_modes, domain_length);
  std::vector<double> x(static_cast<std::size_t>(n_modes));
  for (int m = 0; m < n_modes; ++m) x[static_cast<std::size_t>(m)] = m * domain_length / n_modes;
  return x;
}

/// Samples of the field on the uniform grid.
inline std::vector<double> to_physical(const SpectralField& field) {
  require_finite(field, "to_physical input");
  std::vector<cplx> scratch(field.half().begin(), field.half().end());
  std::vector<double> grid(static_cast<std::size_t>(field.n_modes()));
  detail::fft_plan(field.n_modes()).backward(scratch.data(), grid.data());
  return grid;
}

/// Exact inverse of to_physical.
inline SpectralField to_spectral(std::span<const double> grid, double domain_length) {
  const int n = static_cast<int>(grid.size());
  detail::check_grid(n, domain_length);
  for (double v : grid) {
    if (!std::isfinite(v)) throw BlowUpError("non-finite grid value in to_spectral");
  }
  SpectralField field(n, domain_length);
  detail::fft_plan(n).forward(grid.data(), field.half().data());
  field *= 1.0 / n;
  field.symmetrize();
  return field;
}

/// Real L2(0, a) inner product via Parseval.
inline double inner_product(const SpectralField& u, const SpectralField& v) {
  u.require_same_grid(v);
  const auto a = u.half();
  const auto b = v.half();
  const std::size_t last = a.size() - 1;
  double sum = (a[0] * std::conj(b[0])).real() + (a[last] * std::conj(b[last])).real();
  for (std::size_t k = 1; k < last; ++k) sum += 2.0 * (a[k] * std::conj(b[k])).real();
  return u.domain_length() * sum;
}

/// ||u||_{L2(0, a)} via Parseval.
inline double l2_norm(const SpectralField& u) {
  const auto c = u.half();
  const std::size_t last = c.size() - 1;
  double sum = std::norm(c[0]) + std::norm(c[last]);
  for (std::size_t k = 1; k < last; ++k) sum += 2.0 * std::norm(c[k]);
  return std::sqrt(u.domain_length() * sum);
}

/// Real degrees of freedom carried by wavenumbers 0..k.
inline int dofs_through(int k, int n_modes) {
  if (k >= n_modes / 2) return n_modes;
  return 1 + 2 * k;
}

/// Orthogonal projection onto the J lowest-|kappa| real degrees of freedom.
/// A +-k pair is kept only when both of its degrees of freedom fit.
inline SpectralField project_J(const SpectralField& field, int J) {
  if (J < 0 || J > field.n_modes()) {
    throw std::invalid_argument("project_J: J must lie in [0, N_x], got " + std::to_string(J));
  }
  SpectralField out = field;
  auto c = out.half();
  for (int k = 0; k < static_cast<int>(c.size()); ++k) {
    if (dofs_through(k, field.n_modes()) > J) c[static_cast<std::size_t>(k)] = 0.0;
  }
  return out;
}

/// Zeroes |k| > N/3 (2/3 dealiasing rule).
inline SpectralField truncate_two_thirds(const SpectralField& field) {
  SpectralField out = field;
  auto c = out.half();
  const int cutoff = field.n_modes() / 3;
  for (int k = cutoff + 1; k < static_cast<int>(c.size()); ++k) c[static_cast<std::size_t>(k)] = 0.0;
  return out;
}

/// Eigenvalues of the (possibly shifted) linear operator A, indexed by |k|.
class OperatorSpectrum {
 public:
  OperatorSpectrum(int n_modes, double domain_length, std::vector<double> lambdas, double c0)
      : n_(n_modes), length_(domain_length), lambdas_(std::move(lambdas)), c0_(c0) {
    detail::check_grid(n_modes, domain_length);
    if (lambdas_.size() != static_cast<std::size_t>(n_modes / 2 + 1)) {
      throw std::invalid_argument("spectrum must hold one eigenvalue per |k| = 0..N/2");
    }
    for (double l : lambdas_) {
      if (!std::isfinite(l)) throw std::invalid_argument("non-finite eigenvalue");
    }
  }

  int n_modes() const noexcept { return n_; }
  double domain_length() const noexcept { return length_; }
  double c0() const noexcept { return c0_; }
  std::span<const double> lambdas() const noexcept { return lambdas_; }
  double lambda(int k) const { return lambdas_.at(static_cast<std::size_t>(k < 0 ? -k : k)); }
  double wavenumber(int k) const { return spde_adapt::wavenumber(k, length_); }

  bool positive() const noexcept {
    return std::all_of(lambdas_.begin(), lambdas_.end(), [](double l) { return l > 0.0; });
  }

  void require_compatible(const SpectralField& f) const {
    if (f.n_modes() != n_ || f.domain_length() != length_) {
      throw std::invalid_argument("field and operator spectrum live on different grids");
    }
  }

 private:
  int n_ = 0;
  double length_ = 0.0;
  std::vector<double> lambdas_;
  double c0_ = 0.0;
};

/// phi_1(z) = (e^z - 1) / z, with phi_1(0) = 1.
inline double phi1(double z) noexcept {
  if (z == 0.0) return 1.0;
  return std::expm1(z) / z;
}

namespace detail {

template <class Multiplier>
SpectralField apply_diagonal(const OperatorSpectrum& spec, const SpectralField& field, Multiplier&& m) {
  spec.require_compatible(field);
  SpectralField out = field;
  auto c = out.half();
  const auto lambdas = spec.lambdas();
  for (std::size_t k = 0; k < c.size(); ++k) c[k] *= m(lambdas[k]);
  return out;
}

}  // namespace detail

/// S(t) u = e^{-tA} u.
inline SpectralField apply_semigroup(const OperatorSpectrum& spec, double t, const SpectralField& field) {
  if (!(t >= 0.0)) throw std::invalid_argument("apply_semigroup: t must be non-negative");
  return detail::apply_diagonal(spec, field, [t](double lambda) { return std::exp(-t * lambda); });
}

/// phi_1(-dt A) u.
inline SpectralField apply_phi1(const OperatorSpectrum& spec, double dt, const SpectralField& field) {
  if (!(dt > 0.0)) throw std::invalid_argument("apply_phi1: dt must be positive");
  return detail::apply_diagonal(spec, field, [dt](double lambda) { return phi1(-dt * lambda); });
}

/// A u.
inline SpectralField apply_operator(const OperatorSpectrum& spec, const SpectralField& field) {
  return detail::apply_diagonal(spec, field, [](double lambda) { return lambda; });
}

}  // namespace spde_adapt
