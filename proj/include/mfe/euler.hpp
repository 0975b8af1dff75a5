#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "errors.hpp"
#include "field.hpp"
#include "particle.hpp"

namespace mfe {

struct EulerConfig {
  double dt = 1e-3;
  double dealias_fraction = 2.0 / 3.0;
  // Damping rate applied at the Nyquist frequency; the operator is
  // -nu (|l| / l_nyquist)^{2p}, i.e. nu (-Laplacian)^p rescaled to the grid.
  double hyperviscosity = 1e-8;
  int hyperviscosity_order = 4;
  double guard_s = 3.5;
  double guard_m = std::numeric_limits<double>::infinity();
  // Accept the weaker s > d/2 + 2 of the solution concept instead of s >= d/2 + 3.
  bool relaxed_guard = false;
  bool drift = true;

  void validate(int dim) const {
    if (!(dt > 0.0)) throw ConfigError("euler.dt", "must be positive");
    if (!(dealias_fraction > 0.0 && dealias_fraction <= 1.0))
      throw ConfigError("euler.dealias_fraction", "must lie in (0, 1]");
    if (!(hyperviscosity >= 0.0)) throw ConfigError("euler.hyperviscosity", "must be >= 0");
    if (hyperviscosity_order < 1) throw ConfigError("euler.hyperviscosity_order", "must be >= 1");
    if (relaxed_guard) {
      if (!(guard_s > 0.5 * dim + 2.0)) throw ConfigError("euler.guard_s", "must exceed d/2 + 2");
    } else if (!(guard_s >= 0.5 * dim + 3.0)) {
      throw ConfigError("euler.guard_s", "must be >= d/2 + 3");
    }
    if (!(guard_m > 0.0)) throw ConfigError("euler.guard_m", "must be positive");
  }
};

struct StopRecord {
  std::int64_t step_index = -1;
  double time = 0.0;
  double norm = 0.0;
  double threshold = 0.0;
};

struct FluidState {
  GridField rho;
  std::vector<GridField> vel;
  double time = 0.0;
  std::int64_t steps = 0;
  bool stopped = false;
  StopRecord stop;

  const PeriodicGrid& grid() const { return rho.grid; }
  double mass() const { return integral(rho); }
  double min_rho() const { return *std::min_element(rho.values.begin(), rho.values.end()); }
};

// p = rho^2 / 2
inline GridField pressure(const GridField& rho) {
  GridField p = rho;
  for (auto& v : p.values) v = 0.5 * v * v;
  return p;
}

struct FluidTendency {
  GridField drho;
  std::vector<GridField> dvel;
};

// Pseudo-spectral solver for
//   d rho = -div(rho u) dt,
//   d u_q = -(d_q rho + u . grad u_q) dt + sigma_q u_q o dB^q,
// where grad p / rho has been reduced to grad rho for p = rho^2/2.
class EulerSolver {
public:
  EulerSolver(const PeriodicGrid& grid, EulerConfig config, SigmaField sigma)
      : grid_(grid), config_(config), sigma_(std::move(sigma)) {
    grid.validate();
    config_.validate(grid.dim);
    require(sigma_.dim() == grid.dim, "sigma and grid dimensions differ");
    const std::size_t n = grid.size();
    mask_.assign(n, 1.0);
    damping_.assign(n, 0.0);
    const double keep = config_.dealias_fraction * grid.points / 2.0;
    const double nyquist = kPi * grid.points / grid.period;
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = grid.unflatten(i);
      for (int q = 0; q < grid.dim; ++q)
        if (std::abs(grid.wavenumber(k[q])) > keep) mask_[i] = 0.0;
      damping_[i] = -config_.hyperviscosity *
                    std::pow(grid.freq_sq(i) / (nyquist * nyquist), config_.hyperviscosity_order);
    }
    if (!sigma_.is_zero())
      for (int q = 0; q < grid.dim; ++q)
        sigma_lattice_.push_back(
            GridField::sample(grid, [&](std::span<const double> x) { return sigma_(x, q); }));
  }

  const PeriodicGrid& grid() const { return grid_; }
  const EulerConfig& config() const { return config_; }
  const SigmaField& sigma() const { return sigma_; }

  FluidState make_state(GridField rho, std::vector<GridField> vel) const {
    require(rho.grid == grid_, "density lives on a different grid");
    require(static_cast<int>(vel.size()) == grid_.dim, "one velocity field per dimension");
    FluidState s{std::move(rho), std::move(vel), 0.0, 0, false, {}};
    return s;
  }

  FluidTendency drift_rhs(const FluidState& s) const {
    const int d = grid_.dim;
    const double lo = s.min_rho();
    if (!(lo > 0.0))
      throw NonPositiveDensity("min rho = " + std::to_string(lo) + " at t = " +
                               std::to_string(s.time));
    const SpectralField rho_hat = to_spectral(s.rho);
    std::vector<SpectralField> u_hat;
    for (int q = 0; q < d; ++q) u_hat.push_back(to_spectral(s.vel[q]));

    // du_q / dx_r in physical space.
    std::vector<std::vector<GridField>> grad_u(d);
    for (int q = 0; q < d; ++q)
      for (int r = 0; r < d; ++r) grad_u[q].push_back(to_physical(spectral_derivative(u_hat[q], r)));

    SpectralField drho{grid_, std::vector<std::complex<double>>(grid_.size(), 0.0)};
    for (int q = 0; q < d; ++q) {
      GridField flux = s.rho;
      for (std::size_t i = 0; i < flux.values.size(); ++i) flux.values[i] *= s.vel[q].values[i];
      const SpectralField div = spectral_derivative(masked(to_spectral(flux)), q);
      for (std::size_t i = 0; i < drho.coeffs.size(); ++i) drho.coeffs[i] -= div.coeffs[i];
    }
    for (std::size_t i = 0; i < drho.coeffs.size(); ++i) drho.coeffs[i] += damping_[i] * rho_hat.coeffs[i];

    FluidTendency out{to_physical(drho), {}};
    for (int q = 0; q < d; ++q) {
      GridField adv = GridField::zeros(grid_);
      for (int r = 0; r < d; ++r)
        for (std::size_t i = 0; i < adv.values.size(); ++i)
          adv.values[i] += s.vel[r].values[i] * grad_u[q][r].values[i];
      const SpectralField adv_hat = masked(to_spectral(adv));
      const SpectralField grad_rho = spectral_derivative(rho_hat, q);
      SpectralField du{grid_, std::vector<std::complex<double>>(grid_.size())};
      for (std::size_t i = 0; i < du.coeffs.size(); ++i)
        du.coeffs[i] = -(grad_rho.coeffs[i] + adv_hat.coeffs[i]) + damping_[i] * u_hat[q].coeffs[i];
      out.dvel.push_back(to_physical(du));
    }
    return out;
  }

  // u_q <- u_q exp(fraction * sigma_q(x) dB^q): the exact flow of the
  // noise-only subsystem at every lattice point. rho is untouched.
  FluidState noise_step(FluidState s, std::span<const double> dB, double fraction = 1.0) const {
    if (s.stopped || sigma_.is_zero()) return s;
    for (int q = 0; q < grid_.dim; ++q) {
      const double db = fraction * dB[q];
      if (db == 0.0) continue;
      auto& u = s.vel[q].values;
      const auto& sg = sigma_lattice_[q].values;
      for (std::size_t i = 0; i < u.size(); ++i) u[i] *= std::exp(sg[i] * db);
    }
    return s;
  }

  // Classical RK4 on drift_rhs over one time step.
  FluidState deterministic_step(const FluidState& s) const {
    if (!config_.drift) return s;
    const double dt = config_.dt;
    const auto k1 = drift_rhs(s);
    const auto k2 = drift_rhs(axpy(s, 0.5 * dt, k1));
    const auto k3 = drift_rhs(axpy(s, 0.5 * dt, k2));
    const auto k4 = drift_rhs(axpy(s, dt, k3));
    FluidState out = s;
    const double w = dt / 6.0;
    for (std::size_t i = 0; i < out.rho.values.size(); ++i)
      out.rho.values[i] += w * (k1.drho.values[i] + 2.0 * k2.drho.values[i] +
                                2.0 * k3.drho.values[i] + k4.drho.values[i]);
    for (int q = 0; q < grid_.dim; ++q)
      for (std::size_t i = 0; i < out.vel[q].values.size(); ++i)
        out.vel[q].values[i] += w * (k1.dvel[q].values[i] + 2.0 * k2.dvel[q].values[i] +
                                     2.0 * k3.dvel[q].values[i] + k4.dvel[q].values[i]);
    return out;
  }

  // Strang composition: half noise, RK4 drift, half noise, then the guard.
  // A stopped state is returned unchanged.
  FluidState step(FluidState s, std::span<const double> dB) const {
    if (s.stopped) return s;
    require(static_cast<int>(dB.size()) == grid_.dim, "Brownian increment has the wrong dimension");
    s = noise_step(std::move(s), dB, 0.5);
    s = deterministic_step(s);
    s = noise_step(std::move(s), dB, 0.5);
    s.time += config_.dt;
    s.steps += 1;
    return stopping_guard(std::move(s));
  }

  // ( ||rho||_{H^s}^2 + sum_q ||u_q||_{H^s}^2 )^{1/2}
  double guard_norm(const FluidState& s) const {
    double acc = std::pow(sobolev_norm(s.rho, config_.guard_s), 2);
    for (const auto& u : s.vel) acc += std::pow(sobolev_norm(u, config_.guard_s), 2);
    return std::sqrt(acc);
  }

  FluidState stopping_guard(FluidState s) const {
    if (s.stopped || std::isinf(config_.guard_m)) return s;
    const double norm = guard_norm(s);
    if (norm >= config_.guard_m) {
      s.stopped = true;
      s.stop = {s.steps, s.time, norm, config_.guard_m};
    }
    return s;
  }

private:
  SpectralField masked(SpectralField f) const {
    for (std::size_t i = 0; i < f.coeffs.size(); ++i) f.coeffs[i] *= mask_[i];
    return f;
  }

  FluidState axpy(const FluidState& s, double a, const FluidTendency& k) const {
    FluidState out = s;
    for (std::size_t i = 0; i < out.rho.values.size(); ++i) out.rho.values[i] += a * k.drho.values[i];
    for (int q = 0; q < grid_.dim; ++q)
      for (std::size_t i = 0; i < out.vel[q].values.size(); ++i)
        out.vel[q].values[i] += a * k.dvel[q].values[i];
    return out;
  }

  PeriodicGrid grid_;
  EulerConfig config_;
  SigmaField sigma_;
  std::vector<double> mask_;
  std::vector<double> damping_;
  std::vector<GridField> sigma_lattice_;
};

// u at arbitrary torus points; N x dim row-major output.
inline std::vector<double> sample_velocity(const FluidState& s, std::span<const double> points,
                                           InterpolationScheme scheme = InterpolationScheme::linear) {
  const int d = s.grid().dim;
  const std::size_t n = points.size() / d;
  std::vector<double> out(n * d);
  for (int q = 0; q < d; ++q) {
    const auto v = interpolate(s.vel[q], points, scheme);
    for (std::size_t k = 0; k < n; ++k) out[k * d + q] = v[k];
  }
  return out;
}

} // namespace mfe
