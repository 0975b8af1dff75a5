#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "errors.hpp"
#include "euler.hpp"
#include "field.hpp"
#include "mollifier.hpp"
#include "particle.hpp"
#include "rng.hpp"

namespace mfe {

struct InitialData {
  ScalarFn rho0;
  VectorFn upsilon0;
};

// Smooth positive unit-mass density with a periodic (von Mises) bump centred
// in the box, and a single-mode velocity:
//   rho0 ~ 1 + a prod_q exp(kappa (cos(2 pi (x_q - L/2) / L) - 1)),
//   u0_q = A sin(2 pi x_q / L).
inline InitialData bump_initial_data(int dim, double period, double bump, double concentration,
                                     double velocity_amplitude) {
  const double per_axis = period * std::exp(-concentration) * std::cyl_bessel_i(0.0, concentration);
  const double mass = std::pow(period, dim) + bump * std::pow(per_axis, dim);
  InitialData data;
  data.rho0 = [=](std::span<const double> x) {
    double b = 1.0;
    for (int q = 0; q < dim; ++q)
      b *= std::exp(concentration * (std::cos(kTwoPi * (x[q] - 0.5 * period) / period) - 1.0));
    return (1.0 + bump * b) / mass;
  };
  data.upsilon0 = [=](std::span<const double> x, int q) {
    return velocity_amplitude * std::sin(kTwoPi * x[q] / period);
  };
  return data;
}

// Everything that defines a coupled simulation except N and the noise sample.
struct Problem {
  PeriodicGrid grid{1, 512, kTwoPi};
  MollifierSpec kernel{KernelFamily::gaussian, 4.0, 1};
  double beta = 0.5;
  QuadratureOptions quadrature{};
  double dt = 1e-3;
  std::size_t steps = 200;
  EulerConfig euler{};
  SigmaField sigma = SigmaField::zero(1);
  InitialData initial{};
  InitScheme init = InitScheme::stratified;
  DepositScheme deposit = DepositScheme::linear;
  InterpolationScheme interpolation = InterpolationScheme::linear;
  ForceMethod force = ForceMethod::particle_mesh;
  double alpha = 2.0;
  int freq_cutoff = 0;
  int force_threads = 1;
};

struct QRecord {
  double time = 0.0;
  double kinetic_term = 0.0;
  double density_term = 0.0;
  double q_total = 0.0;
  bool stopped = false;
};

struct TheoremDistances {
  double dist_s = 0.0; // ||S^N - rho||_{-alpha}^2
  double dist_v = 0.0; // ||V^N - rho u||_{-alpha}^2, summed over components
  double tail_bound_s = 0.0;
  double tail_bound_v = 0.0;
};

// Particle system and fluid driven by one Brownian path on a common clock.
// Once the fluid guard fires both subsystems are frozen at tau_m.
class CoupledRun {
public:
  CoupledRun(std::shared_ptr<const Problem> problem, std::size_t n_particles,
             std::uint64_t master_seed, std::uint64_t sample)
      : problem_(std::move(problem)),
        kernel_(problem_->kernel, static_cast<std::int64_t>(n_particles), problem_->beta,
                problem_->quadrature),
        seed_(master_seed), sample_(sample) {
    const Problem& p = *problem_;
    p.grid.validate();
    require(p.kernel.dim == p.grid.dim, "kernel dimension differs from grid dimension");
    auto euler_cfg = p.euler;
    euler_cfg.dt = p.dt;
    solver_ = std::make_shared<EulerSolver>(p.grid, euler_cfg, p.sigma);
    if (p.force != ForceMethod::none)
      require(kernel_.support_radius() < 0.5 * p.grid.period,
              "kernel support " + std::to_string(kernel_.support_radius()) +
                  " must be below half the box for minimum-image interactions");
    switch (p.force) {
    case ForceMethod::direct: force_ = ForceField::direct(kernel_, p.force_threads); break;
    case ForceMethod::particle_mesh:
      force_ = ForceField::particle_mesh(kernel_, p.grid, p.deposit);
      break;
    default: force_ = ForceField::none();
    }
    noise_ = NoisePath::generate(p.grid.dim, p.steps, p.dt, master_seed, sample);
    particles_ = init_well_prepared(p.initial.rho0, p.initial.upsilon0, p.grid.dim, p.grid.period,
                                    n_particles, {p.init, master_seed ^ (sample * 0x9E3779B97F4A7C15ull)});
    std::vector<GridField> vel;
    for (int q = 0; q < p.grid.dim; ++q)
      vel.push_back(GridField::sample(
          p.grid, [&](std::span<const double> x) { return p.initial.upsilon0(x, q); }));
    fluid_ = solver_->stopping_guard(
        solver_->make_state(GridField::sample(p.grid, p.initial.rho0), std::move(vel)));

    AliasingReport alias;
    const GridField mollifier = sample_periodized_kernel(
        p.grid, [this](std::span<const double> x) { return kernel_.phir(x); }, &alias);
    mollifier_hat_ = to_spectral(mollifier);
    for (auto& c : mollifier_hat_.coeffs) c *= p.grid.volume();
    aliasing_ = alias;
  }

  const Problem& problem() const { return *problem_; }
  const ScaledKernel& kernel() const { return kernel_; }
  const ParticleState& particles() const { return particles_; }
  const FluidState& fluid() const { return fluid_; }
  const NoisePath& noise() const { return noise_; }
  const EulerSolver& solver() const { return *solver_; }
  std::size_t steps_taken() const { return step_; }
  bool stopped() const { return fluid_.stopped; }
  bool finished() const { return stopped() || step_ >= noise_.steps(); }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t sample() const { return sample_; }
  const AliasingReport& mollifier_aliasing() const { return aliasing_; }

  // One shared increment for both subsystems. Returns false (and changes
  // nothing) once the run is stopped or the path is exhausted.
  bool step() {
    if (finished()) return false;
    const auto dB = noise_.increment(step_);
    const StepTag tag{seed_, static_cast<std::int64_t>(step_)};
    try {
      particles_ = mfe::step(std::move(particles_), dB, problem_->dt, force_, problem_->sigma, tag);
      fluid_ = solver_->step(std::move(fluid_), dB);
    } catch (const NonFiniteState&) {
      throw;
    } catch (const NonPositiveDensity& e) {
      throw NonPositiveDensity(std::string(e.what()) + context());
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(e.what()) + context());
    }
    ++step_;
    particles_.time = fluid_.time;
    if (fluid_.stopped) frozen_ = compute_q();
    return true;
  }

  void run() {
    while (step()) {
    }
  }

  // Q_t^N at t ^ tau_m.
  QRecord q() const { return frozen_ ? *frozen_ : compute_q(); }

  // S^N * phi_N^r on the lattice (deposit, then spectral convolution).
  GridField mollified_density() const {
    SpectralField s = to_spectral(deposit(particles_.position_measure(), problem_->grid,
                                          problem_->deposit));
    for (std::size_t i = 0; i < s.coeffs.size(); ++i) s.coeffs[i] *= mollifier_hat_.coeffs[i];
    return to_physical(s);
  }

  TheoremDistances distances(double alpha, int cutoff = 0) const {
    const auto s = neg_sobolev_distance(particles_.position_measure(), fluid_.rho, alpha, cutoff);
    std::vector<EmpiricalMeasure> vm;
    std::vector<GridField> momentum;
    for (int q = 0; q < particles_.dim; ++q) {
      vm.push_back(particles_.velocity_measure(q));
      GridField m = fluid_.rho;
      for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] *= fluid_.vel[q].values[i];
      momentum.push_back(std::move(m));
    }
    const auto v = neg_sobolev_distance(vm, momentum, alpha, cutoff);
    return {s.squared, v.squared, s.tail_bound_sq, v.tail_bound_sq};
  }

private:
  QRecord compute_q() const {
    QRecord r;
    r.time = fluid_.time;
    r.stopped = fluid_.stopped;
    const int d = particles_.dim;
    const auto u = sample_velocity(fluid_, particles_.positions, problem_->interpolation);
    double kin = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double diff = particles_.velocities[i] - u[i];
      kin += diff * diff;
    }
    r.kinetic_term = kin / static_cast<double>(particles_.positions.size() / d);
    r.density_term = lattice_l2_distance_sq(mollified_density(), fluid_.rho);
    r.q_total = r.kinetic_term + r.density_term;
    return r;
  }

  std::string context() const {
    return " [seed " + std::to_string(seed_) + ", sample " + std::to_string(sample_) + ", step " +
           std::to_string(step_) + "]";
  }

  std::shared_ptr<const Problem> problem_;
  ScaledKernel kernel_;
  std::uint64_t seed_;
  std::uint64_t sample_;
  std::shared_ptr<const EulerSolver> solver_;
  ForceField force_;
  NoisePath noise_;
  ParticleState particles_;
  FluidState fluid_;
  SpectralField mollifier_hat_;
  AliasingReport aliasing_;
  std::size_t step_ = 0;
  std::optional<QRecord> frozen_;
};

inline QRecord q_functional(const CoupledRun& run) { return run.q(); }

inline TheoremDistances theorem_distances(const CoupledRun& run, double alpha, int cutoff = 0) {
  return run.distances(alpha, cutoff);
}

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

// Ordinary least squares of log y on log x.
inline LogLogFit fit_loglog(std::span<const double> xs, std::span<const double> ys) {
  require(xs.size() == ys.size(), "fit needs paired samples");
  if (xs.size() < 3) throw DegenerateFit("need at least 3 points, got " + std::to_string(xs.size()));
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    require(xs[i] > 0.0 && ys[i] > 0.0, "log-log fit needs positive data");
    mx += std::log(xs[i]);
    my += std::log(ys[i]);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = std::log(xs[i]) - mx, dy = std::log(ys[i]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx <= 0.0) throw DegenerateFit("abscissae are not distinct");
  LogLogFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

// One (N, sample) outcome of the rate study.
struct SampleOutcome {
  QRecord q0;
  QRecord q_final;
  TheoremDistances dist0;
  TheoremDistances dist_final;
  bool censored = false;
};

struct RateRow {
  std::size_t n = 0;
  double mean_q = 0.0;
  double se_q = 0.0;
  double mean_q0 = 0.0;
  double se_q0 = 0.0;
  double mean_q_excess = 0.0; // E[Q_T - Q_0]
  double se_q_excess = 0.0;
  double mean_dist_s = 0.0;
  double se_dist_s = 0.0;
  double mean_dist_v = 0.0;
  double se_dist_v = 0.0;
  double mean_dist_s0 = 0.0;
  std::size_t censored_count = 0;
};

struct SlopeEstimate {
  std::optional<LogLogFit> fit;
  std::string note; // why no fit, when absent
};

struct RateResult {
  std::vector<RateRow> rows;
  SlopeEstimate slope_q;
  SlopeEstimate slope_q_floor; // after subtracting E Q_0
  SlopeEstimate slope_q0;
  SlopeEstimate slope_dist_s;
  SlopeEstimate slope_dist_v;
  double beta = 0.0;
  int dim = 1;
  double alpha = 0.0;
  double horizon = 0.0;
  double guard_m = 0.0;
  std::size_t samples = 0;
  std::vector<std::string> censored; // "(N, sample)" pairs that stopped early

  double target_slope() const { return -beta / dim; }
};

namespace detail {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
  MeanSe r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() < 2) return r;
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  r.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return r;
}

inline SlopeEstimate slope_of(const std::vector<double>& xs, const std::vector<double>& ys) {
  SlopeEstimate s;
  for (double y : ys)
    if (!(y > 0.0)) {
      s.note = "non-positive mean; log-log fit undefined";
      return s;
    }
  try {
    s.fit = fit_loglog(xs, ys);
  } catch (const DegenerateFit& e) {
    s.note = e.what();
  }
  return s;
}

} // namespace detail

// Runs one (N, sample) coupled simulation to the horizon.
inline SampleOutcome run_sample(const std::shared_ptr<const Problem>& problem, std::size_t n,
                                std::uint64_t master_seed, std::uint64_t sample) {
  CoupledRun run(problem, n, master_seed, sample);
  SampleOutcome out;
  out.q0 = run.q();
  out.dist0 = run.distances(problem->alpha, problem->freq_cutoff);
  run.run();
  out.q_final = run.q();
  out.dist_final = run.distances(problem->alpha, problem->freq_cutoff);
  out.censored = run.stopped();
  return out;
}

// Monte Carlo estimate of E Q_T and the negative-Sobolev distances over a
// sweep of N. Sample m always uses the noise path keyed by (master_seed, m),
// so every N sees the same Brownian paths. Tasks run in parallel; results
// are aggregated in (N, m) order.
inline RateResult monte_carlo_rate(const std::shared_ptr<const Problem>& problem,
                                   const std::vector<std::size_t>& n_values, std::size_t samples,
                                   std::uint64_t master_seed, int threads = 1) {
  require(!n_values.empty(), "need at least one N");
  require(std::is_sorted(n_values.begin(), n_values.end()), "N values must be ascending");
  require(samples >= 2, "need at least two Monte Carlo samples");

  std::vector<SampleOutcome> outcomes(n_values.size() * samples);
  parallel_for(outcomes.size(), threads, [&](std::size_t task) {
    const std::size_t ni = task / samples, m = task % samples;
    outcomes[task] = run_sample(problem, n_values[ni], master_seed, m);
  });

  RateResult res;
  res.beta = problem->beta;
  res.dim = problem->grid.dim;
  res.alpha = problem->alpha;
  res.horizon = problem->dt * static_cast<double>(problem->steps);
  res.guard_m = problem->euler.guard_m;
  res.samples = samples;

  std::vector<double> xs, yq, yfloor, yq0, ys, yv;
  for (std::size_t ni = 0; ni < n_values.size(); ++ni) {
    std::vector<double> q, q0, excess, ds, dv, ds0;
    RateRow row;
    row.n = n_values[ni];
    for (std::size_t m = 0; m < samples; ++m) {
      const auto& o = outcomes[ni * samples + m];
      q.push_back(o.q_final.q_total);
      q0.push_back(o.q0.q_total);
      excess.push_back(o.q_final.q_total - o.q0.q_total);
      ds.push_back(o.dist_final.dist_s);
      dv.push_back(o.dist_final.dist_v);
      ds0.push_back(o.dist0.dist_s);
      if (o.censored) {
        ++row.censored_count;
        res.censored.push_back("(" + std::to_string(row.n) + ", " + std::to_string(m) + ")");
      }
    }
    const auto mq = detail::mean_se(q), mq0 = detail::mean_se(q0), mex = detail::mean_se(excess),
               mds = detail::mean_se(ds), mdv = detail::mean_se(dv), mds0 = detail::mean_se(ds0);
    row.mean_q = mq.mean;
    row.se_q = mq.se;
    row.mean_q0 = mq0.mean;
    row.se_q0 = mq0.se;
    row.mean_q_excess = mex.mean;
    row.se_q_excess = mex.se;
    row.mean_dist_s = mds.mean;
    row.se_dist_s = mds.se;
    row.mean_dist_v = mdv.mean;
    row.se_dist_v = mdv.se;
    row.mean_dist_s0 = mds0.mean;
    res.rows.push_back(row);
    if (row.censored_count == 0) {
      xs.push_back(static_cast<double>(row.n));
      yq.push_back(row.mean_q);
      yfloor.push_back(row.mean_q_excess);
      yq0.push_back(row.mean_q0);
      ys.push_back(row.mean_dist_s);
      yv.push_back(row.mean_dist_v);
    }
  }
  res.slope_q = detail::slope_of(xs, yq);
  res.slope_q_floor = detail::slope_of(xs, yfloor);
  res.slope_q0 = detail::slope_of(xs, yq0);
  res.slope_dist_s = detail::slope_of(xs, ys);
  res.slope_dist_v = detail::slope_of(xs, yv);
  return res;
}

} // namespace mfe
