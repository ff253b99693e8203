#pragma once

// Truncated Q-Wiener process W = sum_j sqrt(q_j) chi_j beta_j on a fine time
// grid shared by every scheme that integrates the same trial.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "spde_adapt/spectral_core.hpp"

namespace spde_adapt {

enum class BasisKind { constant, cosine, sine, nyquist };

/// One real basis function chi_j: constant, sqrt2 cos(kappa_k x), sqrt2 sin(kappa_k x)
/// or cos(kappa_{N/2} x), each divided by sqrt(a) so that ||chi_j|| = 1.
struct NoiseMode {
  int k = 0;
  BasisKind kind = BasisKind::constant;
};

/// All N real basis functions ordered by eigenvalue, ties broken by |k| then cos before sin.
inline std::vector<NoiseMode> eigen_ordered_basis(const OperatorSpectrum& spec) {
  const int n = spec.n_modes();
  std::vector<NoiseMode> modes;
  modes.reserve(static_cast<std::size_t>(n));
  modes.push_back({0, BasisKind::constant});
  for (int k = 1; k < n / 2; ++k) {
    modes.push_back({k, BasisKind::cosine});
    modes.push_back({k, BasisKind::sine});
  }
  modes.push_back({n / 2, BasisKind::nyquist});
  std::stable_sort(modes.begin(), modes.end(), [&](const NoiseMode& a, const NoiseMode& b) {
    return std::tuple(spec.lambda(a.k), a.k) < std::tuple(spec.lambda(b.k), b.k);
  });
  return modes;
}

/// chi_j as a spectral field.
inline SpectralField basis_field(const NoiseMode& mode, int n_modes, double domain_length) {
  SpectralField f(n_modes, domain_length);
  auto c = f.half();
  const auto k = static_cast<std::size_t>(mode.k);
  const double s = 1.0 / std::sqrt(domain_length);
  switch (mode.kind) {
    case BasisKind::constant:
    case BasisKind::nyquist:
      c[k] = s;
      break;
    case BasisKind::cosine:
      c[k] = cplx(std::numbers::sqrt2 / 2.0 * s, 0.0);
      break;
    case BasisKind::sine:
      c[k] = cplx(0.0, -std::numbers::sqrt2 / 2.0 * s);
      break;
  }
  return f;
}

struct NoiseModel {
  double r = 0.0;
  int J = 0;
  std::vector<double> q;
  double decay_margin = 0.1;
  std::vector<NoiseMode> modes;  // chi_1..chi_J
  int n_modes = 0;
  double domain_length = 0.0;

  double trace() const {
    double s = 0.0;
    for (double v : q) s += v;
    return s;
  }
};

/// q_j = j^{-(2r + 1 + decay_margin)} over the J lowest eigenmodes.
inline NoiseModel build_q(double r, int J, const OperatorSpectrum& spec, double decay_margin = 0.1) {
  if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("build_q: r must lie in [0, 1]");
  if (J < 1 || J > spec.n_modes()) {
    throw std::invalid_argument("build_q: J must lie in [1, N_x], got " + std::to_string(J));
  }
  if (!(decay_margin > 0.0)) throw std::invalid_argument("build_q: decay margin must be positive");

  NoiseModel model;
  model.r = r;
  model.J = J;
  model.decay_margin = decay_margin;
  model.n_modes = spec.n_modes();
  model.domain_length = spec.domain_length();
  model.modes = eigen_ordered_basis(spec);
  model.modes.resize(static_cast<std::size_t>(J));
  model.q.resize(static_cast<std::size_t>(J));
  const double exponent = 2.0 * r + 1.0 + decay_margin;
  for (int j = 1; j <= J; ++j) model.q[static_cast<std::size_t>(j - 1)] = std::pow(j, -exponent);
  return model;
}

/// P_J Delta W = sum_{j <= J} sqrt(q_j) Delta beta_j chi_j.
inline SpectralField wiener_field(std::span<const double> increments, const NoiseModel& model,
                                  const OperatorSpectrum& spec) {
  if (increments.size() != static_cast<std::size_t>(model.J)) {
    throw std::invalid_argument("wiener_field: expected " + std::to_string(model.J) +
                                " increments, got " + std::to_string(increments.size()));
  }
  if (model.n_modes != spec.n_modes() || model.domain_length != spec.domain_length()) {
    throw std::invalid_argument("wiener_field: noise model and spectrum disagree on the grid");
  }
  SpectralField field(spec.n_modes(), spec.domain_length());
  auto c = field.half();
  const double half_sqrt2 = std::numbers::sqrt2 / 2.0;
  const double s = 1.0 / std::sqrt(spec.domain_length());
  for (std::size_t j = 0; j < increments.size(); ++j) {
    const double w = s * std::sqrt(model.q[j]) * increments[j];
    const NoiseMode& m = model.modes[j];
    const auto k = static_cast<std::size_t>(m.k);
    switch (m.kind) {
      case BasisKind::constant:
      case BasisKind::nyquist:
        c[k] += w;
        break;
      case BasisKind::cosine:
        c[k] += cplx(half_sqrt2 * w, 0.0);
        break;
      case BasisKind::sine:
        c[k] += cplx(0.0, -half_sqrt2 * w);
        break;
    }
  }
  return field;
}

struct PathOptions {
  /// Fine steps per seeding block. Part of the path's identity.
  std::int64_t block_size = 4096;
  /// Paths with at most this many (fine step, mode) entries keep every prefix sum in memory.
  std::int64_t materialize_limit = std::int64_t{1} << 25;
};

/// Brownian increments on a fine grid, stored as exact int64 prefix sums in units of 2^-40.
///
/// Mode j of trial `trial_index`, block b, is drawn from std::mt19937_64 seeded by
/// std::seed_seq{seed_lo, seed_hi, trial_lo, trial_hi, j, b_lo, b_hi} through
/// std::normal_distribution. Fixed-point prefix sums make aggregated increments exactly
/// additive over adjacent intervals.
class WienerPath {
 public:
  static constexpr double kUnit = 0x1p-40;

  WienerPath(NoiseModel model, double horizon, double dt_ref, std::uint64_t master_seed,
             std::uint64_t trial_index, PathOptions options = {})
      : model_(std::move(model)),
        dt_ref_(dt_ref),
        seed_(master_seed),
        trial_(trial_index),
        options_(options) {
    if (!(dt_ref > 0.0) || !(horizon > 0.0)) {
      throw std::invalid_argument("sample_path: horizon and dt_ref must be positive");
    }
    if (options_.block_size < 1) throw std::invalid_argument("sample_path: block size must be >= 1");
    const double ratio = horizon / dt_ref;
    n_fine_ = std::llround(ratio);
    if (n_fine_ < 1 || std::abs(ratio - static_cast<double>(n_fine_)) > 1e-9 * ratio) {
      throw std::invalid_argument("sample_path: T / dt_ref must be an integer");
    }
    horizon_ = static_cast<double>(n_fine_) * dt_ref_;
    scale_ = std::sqrt(dt_ref_) / kUnit;
    build();
  }

  const NoiseModel& model() const noexcept { return model_; }
  int n_modes() const noexcept { return model_.J; }
  std::int64_t n_fine() const noexcept { return n_fine_; }
  double dt_ref() const noexcept { return dt_ref_; }
  double horizon() const noexcept { return horizon_; }
  std::uint64_t master_seed() const noexcept { return seed_; }
  std::uint64_t trial_index() const noexcept { return trial_; }
  const PathOptions& options() const noexcept { return options_; }
  bool materialized() const noexcept { return materialized_; }

  /// Fine-grid index of time t; throws when t is off the grid or outside [0, T].
  std::int64_t grid_index(double t) const {
    const double ratio = t / dt_ref_;
    const auto i = std::llround(ratio);
    if (std::abs(ratio - static_cast<double>(i)) > 1e-9 * std::max(1.0, std::abs(ratio))) {
      throw std::invalid_argument("time " + std::to_string(t) + " is not on the fine grid");
    }
    if (i < 0 || i > n_fine_) throw std::invalid_argument("time outside the path horizon");
    return i;
  }

  /// FNV-1a digest of W(T) - W(0) across modes.
  std::uint64_t total_digest() const { return digest_of(terminal_); }

  static std::uint64_t digest_of(std::span<const std::int64_t> values) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::int64_t v : values) {
      auto u = static_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) {
        h ^= (u >> (8 * b)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    }
    return h;
  }

  /// Fixed-point fine increments of every mode in block b, time-major: out[(i - i0) * J + j].
  void generate_block(std::int64_t b, std::vector<std::int64_t>& out) const {
    const std::int64_t i0 = b * options_.block_size;
    const std::int64_t len = std::min(options_.block_size, n_fine_ - i0);
    const auto J = static_cast<std::size_t>(model_.J);
    out.assign(static_cast<std::size_t>(len) * J, 0);
    const auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
    const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    const auto ub = static_cast<std::uint64_t>(b);
    for (std::size_t j = 0; j < J; ++j) {
      std::seed_seq seq{lo(seed_), hi(seed_), lo(trial_), hi(trial_),
                        static_cast<std::uint32_t>(j), lo(ub), hi(ub)};
      std::mt19937_64 engine(seq);
      std::normal_distribution<double> normal(0.0, 1.0);
      for (std::int64_t i = 0; i < len; ++i) {
        out[static_cast<std::size_t>(i) * J + j] = std::llround(normal(engine) * scale_);
      }
    }
  }

  std::int64_t n_blocks() const noexcept {
    return (n_fine_ + options_.block_size - 1) / options_.block_size;
  }

 private:
  friend class PathReader;

  void build() {
    const auto J = static_cast<std::size_t>(model_.J);
    const auto entries = static_cast<std::int64_t>(J) * (n_fine_ + 1);
    materialized_ = entries <= options_.materialize_limit;
    std::vector<std::int64_t> running(J, 0);
    boundaries_.assign(static_cast<std::size_t>(n_blocks() + 1) * J, 0);
    if (materialized_) prefix_.assign(static_cast<std::size_t>(entries), 0);

    std::vector<std::int64_t> block;
    constexpr std::int64_t limit = std::int64_t{1} << 52;
    for (std::int64_t b = 0; b < n_blocks(); ++b) {
      generate_block(b, block);
      const std::int64_t i0 = b * options_.block_size;
      const std::size_t len = block.size() / J;
      for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t j = 0; j < J; ++j) {
          running[j] += block[i * J + j];
          if (running[j] > limit || running[j] < -limit) {
            throw std::overflow_error("sample_path: Brownian path exceeds fixed-point range");
          }
        }
        if (materialized_) {
          std::copy(running.begin(), running.end(),
                    prefix_.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(i0) + i + 1) * J));
        }
      }
      std::copy(running.begin(), running.end(),
                boundaries_.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(b + 1) * J));
    }
    terminal_ = running;
  }

  NoiseModel model_;
  double dt_ref_ = 0.0;
  double horizon_ = 0.0;
  std::uint64_t seed_ = 0;
  std::uint64_t trial_ = 0;
  PathOptions options_;
  std::int64_t n_fine_ = 0;
  double scale_ = 0.0;
  bool materialized_ = false;
  std::vector<std::int64_t> prefix_;      // (n_fine + 1) x J when materialized
  std::vector<std::int64_t> boundaries_;  // (n_blocks + 1) x J
  std::vector<std::int64_t> terminal_;
};

inline WienerPath sample_path(const NoiseModel& model, double horizon, double dt_ref,
                              std::uint64_t master_seed, std::uint64_t trial_index,
                              PathOptions options = {}) {
  return WienerPath(model, horizon, dt_ref, master_seed, trial_index, options);
}

/// Sequential consumer of a WienerPath. Lazily regenerates one block at a time for paths
/// that are not materialized, and tracks the sum of everything it handed out.
class PathReader {
 public:
  explicit PathReader(const WienerPath& path)
      : path_(&path), consumed_(static_cast<std::size_t>(path.n_modes()), 0) {}

  /// Per-mode Delta beta_j over fine steps (i_a, i_b].
  std::vector<double> increment(std::int64_t i_a, std::int64_t i_b) {
    std::vector<double> out(static_cast<std::size_t>(path_->n_modes()));
    increment(i_a, i_b, out);
    return out;
  }

  void increment(std::int64_t i_a, std::int64_t i_b, std::span<double> out) {
    if (i_a > i_b || i_a < 0 || i_b > path_->n_fine()) {
      throw std::invalid_argument("increment: need 0 <= i_a <= i_b <= n_fine");
    }
    const auto J = static_cast<std::size_t>(path_->n_modes());
    if (out.size() != J) throw std::invalid_argument("increment: output size mismatch");
    load(i_a, start_);
    const std::int64_t* end = prefix(i_b);
    for (std::size_t j = 0; j < J; ++j) {
      const std::int64_t d = end[j] - start_[j];
      consumed_[j] += d;
      out[j] = static_cast<double>(d) * WienerPath::kUnit;
    }
  }

  /// Digest of the per-mode sum of all increments handed out so far.
  std::uint64_t consumed_digest() const { return WienerPath::digest_of(consumed_); }

 private:
  void load(std::int64_t i, std::vector<std::int64_t>& dst) {
    const std::int64_t* p = prefix(i);
    dst.assign(p, p + path_->n_modes());
  }

  const std::int64_t* prefix(std::int64_t i) {
    const auto J = static_cast<std::size_t>(path_->n_modes());
    if (path_->materialized_) return path_->prefix_.data() + static_cast<std::size_t>(i) * J;
    const std::int64_t bs = path_->options_.block_size;
    const std::int64_t b = i / bs;
    if (i % bs == 0) return path_->boundaries_.data() + static_cast<std::size_t>(b) * J;
    if (b != cached_block_) {
      path_->generate_block(b, scratch_);
      const std::size_t len = scratch_.size() / J;
      cache_.assign((len + 1) * J, 0);
      std::copy_n(path_->boundaries_.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(b) * J), J,
                  cache_.begin());
      for (std::size_t r = 0; r < len; ++r) {
        for (std::size_t j = 0; j < J; ++j) cache_[(r + 1) * J + j] = cache_[r * J + j] + scratch_[r * J + j];
      }
      cached_block_ = b;
    }
    return cache_.data() + static_cast<std::size_t>(i - b * bs) * J;
  }

  const WienerPath* path_;
  std::vector<std::int64_t> consumed_;
  std::vector<std::int64_t> start_;
  std::vector<std::int64_t> scratch_;
  std::vector<std::int64_t> cache_;
  std::int64_t cached_block_ = -1;
};

/// Per-mode Delta beta_j over (t_a, t_b]; both endpoints must lie on the fine grid.
inline std::vector<double> aggregate_increment(const WienerPath& path, double t_a, double t_b) {
  if (t_a > t_b) throw std::invalid_argument("aggregate_increment: t_a must not exceed t_b");
  PathReader reader(path);
  return reader.increment(path.grid_index(t_a), path.grid_index(t_b));
}

}  // namespace spde_adapt
