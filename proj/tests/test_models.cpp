#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "spde_adapt/models.hpp"

using namespace spde_adapt;
using Catch::Approx;

namespace {

constexpr double kDomain = 32.0 * std::numbers::pi;

SpectralField random_field(int n, double a, std::mt19937_64& rng, double scale, int band) {
  std::normal_distribution<double> normal(0.0, scale);
  SpectralField f(n, a);
  auto c = f.half();
  for (int k = 0; k <= band; ++k) c[static_cast<std::size_t>(k)] = cplx(normal(rng), k == 0 ? 0.0 : normal(rng));
  f.symmetrize();
  return f;
}

SpectralField from_grid(int n, double a, double (*fn)(double, double)) {
  const auto x = grid_points(n, a);
  std::vector<double> u(x.size());
  for (std::size_t m = 0; m < u.size(); ++m) u[m] = fn(x[m], a);
  return to_spectral(u, a);
}

SpectralField constant(int n, double a, double value) {
  SpectralField f(n, a);
  f.set_coeff(0, value);
  return f;
}

}  // namespace

TEST_CASE("Allen-Cahn spectrum and shift", "[models]") {
  const auto model = allen_cahn(1.0, kDomain);
  CHECK(compute_shift(model, 128) == 1.0);
  const auto spec = make_spectrum(model, 128);
  CHECK(spec.c0() == 1.0);
  CHECK(spec.lambda(0) == 1.0);
  CHECK(spec.lambda(16) == Approx(2.0).epsilon(1e-14));  // kappa = 1
  CHECK(spec.lambda(64) == Approx(1.0 + 4.0 * 4.0).epsilon(1e-14));
  CHECK(spec.positive());

  auto unshifted = model;
  unshifted.shift_into_F = false;
  const auto raw = make_spectrum(unshifted, 128);
  CHECK(raw.c0() == 0.0);
  CHECK(raw.lambda(0) == 0.0);
}

TEST_CASE("Swift-Hohenberg spectrum and shift", "[models]") {
  const auto model = swift_hohenberg(-0.7, 1.8, 1.0, kDomain);
  const auto spec = make_spectrum(model, 128);
  CHECK(spec.c0() == 1.0);
  CHECK(spec.lambda(16) == Approx(0.7 + 1.0).epsilon(1e-14));
  CHECK(spec.lambda(0) == Approx(1.7 + 1.0).epsilon(1e-14));
  for (double l : spec.lambdas()) CHECK(l >= 1.0 - 1e-12);

  // A destabilising eta makes the minimum eigenvalue negative.
  const auto unstable = swift_hohenberg(0.5, 1.8, 1.0, kDomain);
  CHECK(compute_shift(unstable, 128) == Approx(1.5).epsilon(1e-14));
  CHECK(make_spectrum(unstable, 128).positive());
}

TEST_CASE("compute_shift on a synthetic symbol", "[models]") {
  ModelSpec m;
  m.name = "synthetic";
  m.linear_symbol = [](double kappa) { return 3.0 - kappa * kappa; };
  m.drift_poly = {0.0, 0.0, 0.0, -1.0};
  m.domain_length = kDomain;
  CHECK(compute_shift(m, 64) == Approx(4.0).epsilon(1e-15));
  const auto spec = make_spectrum(m, 64);
  CHECK(spec.lambda(0) == Approx(1.0).epsilon(1e-15));
}

TEST_CASE("drift of constant fields", "[models]") {
  const auto ac = allen_cahn(1.0, kDomain);
  const auto ac_spec = make_spectrum(ac, 32);
  const auto f = eval_drift(ac, ac_spec, constant(32, kDomain, 2.0));
  // u - u^3 + c0 u at u = 2.
  CHECK(f.coeff(0).real() == Approx(-4.0).epsilon(1e-14));
  for (int k = 1; k <= 16; ++k) CHECK(std::abs(f.coeff(k)) < 1e-13);
  CHECK(drift_norm(ac, ac_spec, constant(32, kDomain, 2.0)) == Approx(4.0 * std::sqrt(kDomain)).epsilon(1e-14));

  const auto sh = swift_hohenberg(-0.7, 1.8, 1.0, kDomain);
  const auto sh_spec = make_spectrum(sh, 32);
  CHECK(eval_drift(sh, sh_spec, constant(32, kDomain, 1.0)).coeff(0).real() == Approx(1.8).epsilon(1e-14));

  CHECK(drift_norm(ac, ac_spec, SpectralField(32, kDomain)) == 0.0);
}

TEST_CASE("pseudo-spectral drift matches exact trigonometric expansion", "[models]") {
  // u = cos(kx): u - u^3 = (1/4) cos(kx) - (1/4) cos(3kx), no aliasing on 32 points.
  for (bool dealias : {false, true}) {
    auto model = allen_cahn(1.0, kDomain);
    model.dealias = dealias;
    auto raw = model;
    raw.shift_into_F = false;
    const auto spec = make_spectrum(raw, 32);
    const auto u = from_grid(32, kDomain, [](double x, double a) { return std::cos(2.0 * std::numbers::pi * x / a); });
    const auto f = eval_drift(raw, spec, u);
    CHECK(f.coeff(1).real() == Approx(0.125).epsilon(1e-13));
    CHECK(f.coeff(3).real() == Approx(-0.125).epsilon(1e-13));
    CHECK(std::abs(f.coeff(0)) < 1e-14);
    CHECK(std::abs(f.coeff(2)) < 1e-14);
    for (int k = 4; k <= 16; ++k) CHECK(std::abs(f.coeff(k)) < 1e-14);
  }
}

TEST_CASE("dealiasing removes the upper third", "[models]") {
  std::mt19937_64 rng(8);
  auto model = allen_cahn(1.0, kDomain);
  model.dealias = true;
  const auto spec = make_spectrum(model, 48);
  const auto f = eval_drift(model, spec, random_field(48, kDomain, rng, 0.5, 24));
  for (int k = 17; k <= 24; ++k) CHECK(f.coeff(k) == cplx(0.0));
}

TEST_CASE("diffusion increment is the pointwise product", "[models]") {
  const int n = 32;
  const auto model = allen_cahn(0.5, kDomain);
  const auto x = from_grid(n, kDomain, [](double s, double a) { return std::cos(2.0 * std::numbers::pi * 2.0 * s / a); });
  const auto w = from_grid(n, kDomain, [](double s, double a) { return std::cos(2.0 * std::numbers::pi * 5.0 * s / a); });
  // 0.5 cos(2) cos(5) = 0.25 (cos 3 + cos 7).
  const auto b = eval_diffusion_increment(model, x, w);
  CHECK(b.coeff(3).real() == Approx(0.125).epsilon(1e-13));
  CHECK(b.coeff(7).real() == Approx(0.125).epsilon(1e-13));
  for (int k : {0, 1, 2, 4, 5, 6, 8, 16}) CHECK(std::abs(b.coeff(k)) < 1e-14);

  auto quiet = model;
  quiet.sigma = 0.0;
  CHECK(l2_norm(eval_diffusion_increment(quiet, x, w)) == 0.0);
  CHECK_THROWS_AS(eval_diffusion_increment(model, x, SpectralField(16, kDomain)), std::invalid_argument);
}

TEST_CASE("drift is one-sided Lipschitz", "[models][property]") {
  std::mt19937_64 rng(21);
  struct Case {
    ModelSpec model;
    double bound;  // sup of F'(u) for the unshifted drift
  };
  const double c = 1.8;
  std::vector<Case> cases{{allen_cahn(1.0, kDomain), 1.0}, {swift_hohenberg(-0.7, c, 1.0, kDomain), c * c / 3.0}};
  for (auto& [model, bound] : cases) {
    for (bool shifted : {false, true}) {
      auto m = model;
      m.shift_into_F = shifted;
      const auto spec = make_spectrum(m, 64);
      const double L = bound + spec.c0();
      for (int rep = 0; rep < 300; ++rep) {
        const double scale = std::uniform_real_distribution<double>(0.01, 3.0)(rng);
        const auto u = random_field(64, kDomain, rng, scale, 32);
        const auto v = random_field(64, kDomain, rng, scale, 32);
        const auto du = u - v;
        const double lhs = inner_product(eval_drift(m, spec, u) - eval_drift(m, spec, v), du);
        const double d2 = inner_product(du, du);
        CHECK(lhs <= L * d2 * (1.0 + 1e-10) + 1e-12);
      }
    }
  }
}

TEST_CASE("shifting c0 between A and F leaves the vector field unchanged", "[models][property]") {
  std::mt19937_64 rng(13);
  for (const auto& base : {allen_cahn(1.0, kDomain), swift_hohenberg(-0.7, 1.8, 1.0, kDomain)}) {
    auto shifted = base;
    auto raw = base;
    raw.shift_into_F = false;
    const auto s_spec = make_spectrum(shifted, 64);
    const auto u_spec = make_spectrum(raw, 64);
    for (int rep = 0; rep < 50; ++rep) {
      const auto u = random_field(64, kDomain, rng, 1.0, 32);
      const auto lhs = eval_drift(shifted, s_spec, u) - apply_operator(s_spec, u);
      const auto rhs = eval_drift(raw, u_spec, u) - apply_operator(u_spec, u);
      CHECK(l2_norm(lhs - rhs) <= 1e-12 * std::max(1.0, l2_norm(rhs)));
    }
  }
}

TEST_CASE("model validation", "[models]") {
  ModelSpec m;
  m.name = "bad";
  m.linear_symbol = [](double kappa) { return -kappa * kappa; };
  m.domain_length = 1.0;

  m.drift_poly = {};
  CHECK_NOTHROW(validate(m));
  m.drift_poly = {0.0, 0.0, 0.0};
  CHECK_NOTHROW(validate(m));
  m.drift_poly = {0.0, 1.0, -1.0};
  CHECK_THROWS_AS(validate(m), std::invalid_argument);
  m.drift_poly = {0.0, 1.0, 0.0, 1.0};
  CHECK_THROWS_AS(validate(m), std::invalid_argument);
  m.drift_poly = {0.0, 1.0, 0.0, -1.0};
  CHECK_NOTHROW(validate(m));

  m.sigma = -1.0;
  CHECK_THROWS_AS(validate(m), std::invalid_argument);
  m.sigma = 1.0;
  m.domain_length = 0.0;
  CHECK_THROWS_AS(validate(m), std::invalid_argument);
  m.domain_length = 1.0;
  m.linear_symbol = nullptr;
  CHECK_THROWS_AS(validate(m), std::invalid_argument);

  const auto ac = allen_cahn(1.0, kDomain);
  const auto spec = make_spectrum(ac, 32);
  CHECK_THROWS_AS(eval_drift(ac, spec, SpectralField(16, kDomain)), std::invalid_argument);
}
