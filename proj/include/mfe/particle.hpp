#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "errors.hpp"
#include "field.hpp"
#include "mollifier.hpp"
#include "rng.hpp"

namespace mfe {

// Positions and velocities of N particles on the torus, row-major N x dim.
struct ParticleState {
  int dim = 1;
  double period = kTwoPi;
  std::vector<double> positions;
  std::vector<double> velocities;
  double time = 0.0;

  std::size_t size() const { return positions.size() / dim; }

  EmpiricalMeasure position_measure() const { return EmpiricalMeasure::uniform(dim, positions); }

  // Component q of V^N = (1/N) sum_k V^k delta_{X^k}.
  EmpiricalMeasure velocity_measure(int q) const {
    std::vector<double> w(size());
    const double inv = 1.0 / static_cast<double>(size());
    for (std::size_t k = 0; k < size(); ++k) w[k] = velocities[k * dim + q] * inv;
    return EmpiricalMeasure::weighted(dim, positions, std::move(w));
  }
};

// Diagonal multiplicative noise coefficient sigma_q(x). Must be C^1_b.
class SigmaField {
public:
  using Fn = std::function<double(std::span<const double>, int)>;

  SigmaField() = default;
  SigmaField(int dim, Fn fn, bool zero = false) : dim_(dim), fn_(std::move(fn)), zero_(zero) {}

  static SigmaField zero(int dim) {
    return {dim, [](std::span<const double>, int) { return 0.0; }, true};
  }

  static SigmaField constant(int dim, double s) {
    return {dim, [s](std::span<const double>, int) { return s; }, s == 0.0};
  }

  // sigma_q(x) = base + amplitude * cos(2 pi x_q / period).
  static SigmaField cosine(int dim, double base, double amplitude, double period) {
    return {dim,
            [=](std::span<const double> x, int q) {
              return base + amplitude * std::cos(kTwoPi * x[q] / period);
            },
            base == 0.0 && amplitude == 0.0};
  }

  // Linear interpolation of lattice samples, one field per component.
  static SigmaField sampled(std::vector<GridField> components) {
    const int dim = components.front().grid.dim;
    auto shared = std::make_shared<const std::vector<GridField>>(std::move(components));
    return {dim, [shared](std::span<const double> x, int q) {
              return interpolate((*shared)[q], x, InterpolationScheme::linear)[0];
            }};
  }

  int dim() const { return dim_; }
  bool is_zero() const { return zero_; }
  double operator()(std::span<const double> x, int q) const { return fn_(x, q); }

  struct Bounds {
    double sup = 0.0;
    double grad_sup = 0.0;
  };

  // Sup norms of sigma and its gradient on the lattice (spectral derivative).
  Bounds bounds(const PeriodicGrid& g) const {
    Bounds b;
    for (int q = 0; q < dim_; ++q) {
      const GridField f = GridField::sample(g, [&](std::span<const double> x) { return fn_(x, q); });
      for (double v : f.values) b.sup = std::max(b.sup, std::abs(v));
      for (int a = 0; a < g.dim; ++a)
        for (double v : spectral_derivative(f, a).values) b.grad_sup = std::max(b.grad_sup, std::abs(v));
    }
    return b;
  }

private:
  int dim_ = 1;
  Fn fn_;
  bool zero_ = true;
};

enum class ForceMethod { none, direct, particle_mesh };

inline std::string to_string(ForceMethod m) {
  switch (m) {
  case ForceMethod::none: return "none";
  case ForceMethod::direct: return "direct";
  default: return "particle_mesh";
  }
}

inline ForceMethod parse_force_method(const std::string& s) {
  if (s == "direct") return ForceMethod::direct;
  if (s == "particle_mesh" || s == "particle-mesh" || s == "pm") return ForceMethod::particle_mesh;
  if (s == "none") return ForceMethod::none;
  throw InvalidArgument("unknown force method '" + s + "'");
}

// F_k = -(1/N) sum_l grad phi_N(X_k - X_l), minimum image. The self term is
// grad phi_N(0) = 0 and is not special-cased.
inline std::vector<double> force_direct(const ParticleState& s, const ScaledKernel& kernel,
                                        int threads = 1) {
  require(kernel.dim() == s.dim, "kernel and particle dimensions differ");
  const std::size_t n = s.size();
  const int d = s.dim;
  std::vector<double> f(n * d, 0.0);
  const double inv = 1.0 / static_cast<double>(n);
  parallel_for(n, threads, [&](std::size_t k) {
    Vec acc{};
    Vec r{};
    for (std::size_t l = 0; l < n; ++l) {
      for (int q = 0; q < d; ++q)
        r[q] = min_image(s.positions[k * d + q] - s.positions[l * d + q], s.period);
      const Vec g = kernel.grad_phi(std::span<const double>(r.data(), d));
      for (int q = 0; q < d; ++q) acc[q] += g[q];
    }
    for (int q = 0; q < d; ++q) f[k * d + q] = -inv * acc[q];
  });
  return f;
}

// Fast path for the same force: deposit S^N, multiply by the spectrum of the
// lattice-sampled grad phi_N, interpolate back with the deposit stencil. The
// deposit/interpolation windows are divided out in Fourier space, and by
// default the result is averaged with a half-cell shifted copy.
class ParticleMesh {
public:
  ParticleMesh(const ScaledKernel& kernel, const PeriodicGrid& grid,
               DepositScheme scheme = DepositScheme::linear, bool interlaced = true)
      : grid_(grid), scheme_(scheme) {
    grid.validate();
    require(kernel.dim() == grid.dim, "kernel and grid dimensions differ");
    const double h = grid.spacing();
    if (h > kernel.effective_width() / 4.0)
      throw GridTooCoarse("lattice spacing " + std::to_string(h) +
                          " exceeds a quarter of the kernel width " +
                          std::to_string(kernel.effective_width()));
    const int order = scheme == DepositScheme::nearest ? 2 : 4;
    const double vol = grid.volume();
    for (int q = 0; q < grid.dim; ++q) {
      const GridField gq = sample_periodized_kernel(
          grid, [&kernel, q](std::span<const double> x) { return kernel.grad_phi(x)[q]; });
      SpectralField sq = to_spectral(gq);
      for (std::size_t i = 0; i < sq.coeffs.size(); ++i) {
        const auto n = grid.unflatten(i);
        double window = 1.0;
        for (int a = 0; a < grid.dim; ++a) {
          const double arg = kPi * grid.wavenumber(n[a]) / grid.points;
          window *= arg == 0.0 ? 1.0 : std::sin(arg) / arg;
        }
        sq.coeffs[i] *= vol / std::pow(window, order);
      }
      multipliers_.push_back(std::move(sq));
    }
    // Interlacing: a second deposit on the lattice shifted by h/2 cancels the
    // odd alias images of the particle distribution.
    const int passes = interlaced ? 2 : 1;
    for (int p = 0; p < passes; ++p) {
      const double shift = 0.5 * h * p;
      std::vector<std::complex<double>> ph(grid.size());
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto k = grid.unflatten(i);
        double arg = 0.0;
        for (int a = 0; a < grid.dim; ++a) arg += grid.frequency(k[a]) * shift;
        ph[i] = std::polar(1.0, arg);
      }
      shifts_.push_back(shift);
      phases_.push_back(std::move(ph));
    }
  }

  const PeriodicGrid& grid() const { return grid_; }
  DepositScheme scheme() const { return scheme_; }

  std::vector<double> force(const ParticleState& s) const {
    require(s.dim == grid_.dim, "particle and grid dimensions differ");
    const std::size_t n = s.size();
    const int d = s.dim;
    const auto interp = scheme_ == DepositScheme::nearest ? InterpolationScheme::nearest
                                                          : InterpolationScheme::linear;
    std::vector<double> f(n * d, 0.0);
    const int passes = static_cast<int>(shifts_.size());
    const double w = 1.0 / passes;
    std::vector<std::vector<double>> pos(passes, s.positions);
    SpectralField rho{grid_, std::vector<std::complex<double>>(grid_.size(), 0.0)};
    for (int p = 0; p < passes; ++p) {
      for (auto& x : pos[p]) x = wrap(x - shifts_[p], grid_.period);
      const SpectralField part = to_spectral(deposit(EmpiricalMeasure::uniform(d, pos[p]), grid_, scheme_));
      for (std::size_t i = 0; i < grid_.size(); ++i)
        rho.coeffs[i] += w * std::conj(phases_[p][i]) * part.coeffs[i];
    }
    for (int q = 0; q < d; ++q) {
      for (int p = 0; p < passes; ++p) {
        SpectralField prod = rho;
        for (std::size_t i = 0; i < prod.coeffs.size(); ++i)
          prod.coeffs[i] *= multipliers_[q].coeffs[i] * phases_[p][i];
        const auto at = interpolate(to_physical(prod), pos[p], interp);
        for (std::size_t k = 0; k < n; ++k) f[k * d + q] -= w * at[k];
      }
    }
    return f;
  }

  bool interlaced() const { return shifts_.size() == 2; }

private:
  PeriodicGrid grid_;
  DepositScheme scheme_;
  std::vector<SpectralField> multipliers_;
  std::vector<double> shifts_;
  std::vector<std::vector<std::complex<double>>> phases_;
};

inline std::vector<double> force_particle_mesh(const ParticleState& s, const ScaledKernel& kernel,
                                               const PeriodicGrid& grid,
                                               DepositScheme scheme = DepositScheme::linear) {
  return ParticleMesh(kernel, grid, scheme).force(s);
}

// Force evaluator selected once per run.
class ForceField {
public:
  static ForceField none() { return ForceField(); }

  static ForceField direct(const ScaledKernel& kernel, int threads = 1) {
    ForceField f;
    f.method_ = ForceMethod::direct;
    f.kernel_ = std::make_shared<ScaledKernel>(kernel);
    f.threads_ = threads;
    return f;
  }

  static ForceField particle_mesh(const ScaledKernel& kernel, const PeriodicGrid& grid,
                                  DepositScheme scheme = DepositScheme::linear) {
    ForceField f;
    f.method_ = ForceMethod::particle_mesh;
    f.kernel_ = std::make_shared<ScaledKernel>(kernel);
    f.mesh_ = std::make_shared<ParticleMesh>(kernel, grid, scheme);
    return f;
  }

  ForceMethod method() const { return method_; }

  std::vector<double> operator()(const ParticleState& s) const {
    switch (method_) {
    case ForceMethod::direct: return force_direct(s, *kernel_, threads_);
    case ForceMethod::particle_mesh: return mesh_->force(s);
    default: return std::vector<double>(s.positions.size(), 0.0);
    }
  }

private:
  ForceMethod method_ = ForceMethod::none;
  std::shared_ptr<const ScaledKernel> kernel_;
  std::shared_ptr<const ParticleMesh> mesh_;
  int threads_ = 1;
};

// Identifies a step for error reports.
struct StepTag {
  std::uint64_t seed = 0;
  std::int64_t index = -1;
};

// Lie splitting: symplectic-Euler drift (V += F dt, then X += V dt), then the
// exact Stratonovich factor V_q *= exp(sigma_q(X) dB^q) at the updated X.
inline ParticleState step(ParticleState s, std::span<const double> dB, double dt,
                          const ForceField& force, const SigmaField& sigma, StepTag tag = {}) {
  require(dt > 0.0, "time step must be positive");
  require(static_cast<int>(dB.size()) == s.dim, "Brownian increment has the wrong dimension");
  const int d = s.dim;
  const std::size_t n = s.size();
  if (force.method() != ForceMethod::none) {
    const auto f = force(s);
    for (std::size_t i = 0; i < f.size(); ++i) s.velocities[i] += f[i] * dt;
  }
  for (std::size_t i = 0; i < s.positions.size(); ++i)
    s.positions[i] = wrap(s.positions[i] + s.velocities[i] * dt, s.period);
  if (!sigma.is_zero()) {
    for (std::size_t k = 0; k < n; ++k) {
      const std::span<const double> x(s.positions.data() + k * d, d);
      for (int q = 0; q < d; ++q) s.velocities[k * d + q] *= std::exp(sigma(x, q) * dB[q]);
    }
  }
  s.time += dt;
  for (std::size_t i = 0; i < s.positions.size(); ++i)
    if (!std::isfinite(s.positions[i]) || !std::isfinite(s.velocities[i]))
      throw NonFiniteState("particle " + std::to_string(i / d) + " left the finite range",
                           tag.seed, tag.index);
  return s;
}

enum class InitScheme { stratified, iid };

inline std::string to_string(InitScheme s) { return s == InitScheme::stratified ? "stratified" : "iid"; }

inline InitScheme parse_init_scheme(const std::string& s) {
  if (s == "stratified") return InitScheme::stratified;
  if (s == "iid") return InitScheme::iid;
  throw InvalidArgument("unknown init scheme '" + s + "'");
}

using VectorFn = std::function<double(std::span<const double>, int)>;

inline constexpr double kMassTolerance = 1e-6;

namespace detail {

// Piecewise-linear CDF of a 1-D periodic density on `cells` uniform cells.
struct Cdf1d {
  double period = 0.0;
  std::vector<double> cumulative; // cells + 1 entries, starts at 0

  // Monotone inverse by bisection plus linear interpolation inside the cell.
  double inverse(double u) const {
    const double target = u * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    std::size_t i = static_cast<std::size_t>(std::distance(cumulative.begin(), it));
    i = std::clamp<std::size_t>(i, 1, cumulative.size() - 1);
    const double lo = cumulative[i - 1], hi = cumulative[i];
    const double h = period / static_cast<double>(cumulative.size() - 1);
    const double t = hi > lo ? (target - lo) / (hi - lo) : 0.5;
    return wrap(h * (static_cast<double>(i - 1) + t), period);
  }
};

inline Cdf1d build_cdf(const ScalarFn& rho, double period, std::size_t cells) {
  Cdf1d c{period, std::vector<double>(cells + 1, 0.0)};
  const double h = period / static_cast<double>(cells);
  double prev = 0.0;
  {
    const double x0 = 0.0;
    prev = rho(std::span<const double>(&x0, 1));
  }
  for (std::size_t i = 1; i <= cells; ++i) {
    const double x = h * static_cast<double>(i);
    const double v = rho(std::span<const double>(&x, 1));
    if (v < 0.0 || prev < 0.0) throw DensityNotNormalizable("initial density is negative");
    c.cumulative[i] = c.cumulative[i - 1] + 0.5 * h * (prev + v);
    prev = v;
  }
  return c;
}

} // namespace detail

struct InitOptions {
  InitScheme scheme = InitScheme::stratified;
  std::uint64_t seed = 0;
  std::size_t cdf_cells = 1 << 16;
};

// Well-prepared data: positions from rho0 (stratified quantile midpoints in
// d = 1, or i.i.d. draws), velocities V_0^k = upsilon0(X_0^k) exactly.
inline ParticleState init_well_prepared(const ScalarFn& rho0, const VectorFn& upsilon0, int dim,
                                        double period, std::size_t n, const InitOptions& opts = {}) {
  require(n >= 1, "need at least one particle");
  require(dim == 1 || dim == 2, "particle dimension must be 1 or 2");
  ParticleState s{dim, period, std::vector<double>(n * dim), std::vector<double>(n * dim), 0.0};
  const CounterRng rng(opts.seed);
  constexpr std::uint64_t kInitStream = 0xD15EA5E0000000ull;

  if (dim == 1) {
    const auto cdf = detail::build_cdf(rho0, period, opts.cdf_cells);
    if (std::abs(cdf.cumulative.back() - 1.0) > kMassTolerance)
      throw DensityNotNormalizable("initial density has mass " +
                                   std::to_string(cdf.cumulative.back()));
    for (std::size_t k = 0; k < n; ++k) {
      const double u = opts.scheme == InitScheme::stratified
                           ? (static_cast<double>(k) + 0.5) / static_cast<double>(n)
                           : rng.uniform(kInitStream, static_cast<std::uint32_t>(k), 0);
      s.positions[k] = cdf.inverse(u);
    }
  } else {
    require(opts.scheme == InitScheme::iid, "stratified initialization is defined for d = 1 only");
    // Rejection sampling against the lattice maximum of rho0.
    const PeriodicGrid g{2, 256, period};
    const GridField sampled = GridField::sample(g, rho0);
    const double mass = integral(sampled);
    if (std::abs(mass - 1.0) > kMassTolerance)
      throw DensityNotNormalizable("initial density has mass " + std::to_string(mass));
    double peak = 0.0;
    for (double v : sampled.values) peak = std::max(peak, v);
    peak *= 1.05;
    std::uint32_t draw = 0;
    for (std::size_t k = 0; k < n;) {
      const double x0 = period * rng.uniform(kInitStream + 1, draw, 0);
      const double x1 = period * rng.uniform(kInitStream + 1, draw, 1);
      const double u = peak * rng.uniform(kInitStream + 1, draw, 2);
      ++draw;
      const std::array<double, 2> x{x0, x1};
      if (u <= rho0(std::span<const double>(x.data(), 2))) {
        s.positions[2 * k] = x0;
        s.positions[2 * k + 1] = x1;
        ++k;
      }
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    const std::span<const double> x(s.positions.data() + k * dim, dim);
    for (int q = 0; q < dim; ++q) s.velocities[k * dim + q] = upsilon0(x, q);
  }
  return s;
}

} // namespace mfe
