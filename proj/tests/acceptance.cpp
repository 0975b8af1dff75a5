// Acceptance gate. One PASS/FAIL line per criterion; exit status 1 if any fails.
// Usage: acceptance [output_dir] [threads]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <mfe/app.hpp>

using namespace mfe;

namespace {

// Tolerances and sizes, fixed by the acceptance criteria.
namespace pin {
constexpr double kForceRelDev = 1e-3;
constexpr double kForceSeconds = 10.0;
constexpr double kExactRel = 1e-12;
constexpr double kEmSlope = 1.0, kEmSlopeTol = 0.3;
constexpr std::size_t kEulerSteps = 1000;
constexpr double kMassDrift = 1e-8;
constexpr double kSelfOrder = 3.5;
constexpr double kGuardM = 5.0;
constexpr double kDiracTol = 1e-12;
constexpr double kLemmaSpread = 2.0;
constexpr double kFloorSlope = -0.25;
constexpr double kStudySeconds = 900.0;
} // namespace pin

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double max_dev(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Outcome force_paths() {
  const RunConfig cfg;
  const auto data = bump_initial_data(1, kTwoPi, cfg.initial.density_bump, cfg.initial.bump_concentration,
                                      cfg.initial.velocity_amplitude);
  const ScaledKernel kernel({KernelFamily::gaussian, cfg.kernel.width, 1}, 1024, 0.5);
  const PeriodicGrid grid{1, 256, kTwoPi};
  const auto t0 = Clock::now();
  const auto s = init_well_prepared(data.rho0, data.upsilon0, 1, kTwoPi, 1024, {InitScheme::iid, cfg.master_seed});
  const auto fd = force_direct(s, kernel);
  const auto fp = force_particle_mesh(s, kernel, grid);
  const double secs = seconds_since(t0);
  const double rel = max_dev(fd, fp) / max_abs(fd);

  // informational: the same comparison on the stratified quantile lattice
  const auto st = init_well_prepared(data.rho0, data.upsilon0, 1, kTwoPi, 1024);
  const auto sd = force_direct(st, kernel);
  const double rel_strat = max_dev(sd, force_particle_mesh(st, kernel, grid)) / max_abs(sd);

  return {rel < pin::kForceRelDev && secs < pin::kForceSeconds,
          "iid positions: max|F_direct - F_pm| / max|F| = " + num(rel) + " (< 1e-3), runtime " + num(secs) +
              " s (< 10 s); stratified positions give " + num(rel_strat)};
}

Outcome stratonovich() {
  const double sigma = 0.3, v0 = 1.0;
  double worst = 0.0;
  for (int e : {2, 6, 9, 12}) {
    const std::size_t steps = std::size_t{1} << e;
    const auto path = NoisePath::generate(1, steps, 1.0 / steps, 20240611, 0);
    ParticleState s{1, kTwoPi, {1.0}, {v0}, 0.0};
    for (std::size_t k = 0; k < steps; ++k)
      s = step(std::move(s), path.increment(k), path.dt, ForceField::none(), SigmaField::constant(1, sigma));
    const double exact = v0 * std::exp(sigma * path.brownian(steps)[0]);
    worst = std::max(worst, std::abs(s.velocities[0] - exact) / std::abs(exact));
  }

  // Ito form dV = (sigma^2 V / 2) dt + sigma V dB on one path, coarsened
  const std::size_t finest = std::size_t{1} << 12;
  const auto fine = NoisePath::generate(1, finest, 1.0 / finest, 20240611, 0);
  const double target = v0 * std::exp(sigma * fine.brownian(finest)[0]);
  std::vector<double> dts, errs;
  for (int e = 6; e <= 12; ++e) {
    const std::size_t steps = std::size_t{1} << e;
    const auto path = fine.coarsen(finest / steps);
    double v = v0;
    for (std::size_t k = 0; k < steps; ++k)
      v += 0.5 * sigma * sigma * v * path.dt + sigma * v * path.increment(k)[0];
    dts.push_back(path.dt);
    errs.push_back(std::abs(v - target));
  }
  const double slope = fit_loglog(dts, errs).slope;
  const bool slope_ok = std::abs(slope - pin::kEmSlope) <= pin::kEmSlopeTol;
  std::string errs_text;
  for (double e : errs) errs_text += (errs_text.empty() ? "" : ",") + num(e);
  return {worst < pin::kExactRel && slope_ok,
          "splitting rel. error " + num(worst) + " (< 1e-12); Euler-Maruyama strong-error slope " + num(slope) +
              " (target 1.0 +/- 0.3; errors " + errs_text + ")"};
}

Outcome euler_conservation() {
  RunConfig cfg;
  const auto p = make_problem(cfg);
  auto ecfg = p->euler;
  ecfg.dt = p->dt;
  const EulerSolver solver(p->grid, ecfg, p->sigma);
  const auto initial = [&](const EulerSolver& sv) {
    return sv.make_state(GridField::sample(p->grid, p->initial.rho0),
                         {GridField::sample(p->grid, [&](std::span<const double> x) { return p->initial.upsilon0(x, 0); })});
  };
  const auto path = NoisePath::generate(1, pin::kEulerSteps, p->dt, cfg.master_seed, 0);
  FluidState s = initial(solver);
  const double m0 = s.mass();
  double min_rho = s.min_rho();
  for (std::size_t k = 0; k < path.steps(); ++k) {
    s = solver.step(std::move(s), path.increment(k));
    min_rho = std::min(min_rho, s.min_rho());
  }
  const double drift = std::abs(s.mass() - m0) / m0;

  const EulerSolver quiet(p->grid, ecfg, SigmaField::zero(1));
  FluidState a = initial(quiet), b = a;
  for (std::size_t k = 0; k < path.steps(); ++k) {
    a = quiet.step(std::move(a), path.increment(k));
    b = quiet.deterministic_step(b);
  }
  const bool bitwise = a.rho.values == b.rho.values && a.vel[0].values == b.vel[0].values;

  const double horizon = 0.4;
  const auto run = [&](double dt) {
    auto c = ecfg;
    c.dt = dt;
    const EulerSolver sv(p->grid, c, SigmaField::zero(1));
    FluidState st = initial(sv);
    const std::vector<double> zero{0.0};
    for (long i = 0, n = std::lround(horizon / dt); i < n; ++i) st = sv.step(std::move(st), zero);
    return st;
  };
  const FluidState ref = run(0.01 / 16);
  std::vector<double> dts, errs;
  for (double dt : {0.01, 0.005, 0.0025}) {
    const FluidState st = run(dt);
    dts.push_back(dt);
    errs.push_back(std::max(max_dev(st.rho.values, ref.rho.values), max_dev(st.vel[0].values, ref.vel[0].values)));
  }
  const double order = fit_loglog(dts, errs).slope;
  return {drift < pin::kMassDrift && bitwise && order >= pin::kSelfOrder,
          "mass drift " + num(drift) + " over 1000 steps (< 1e-8), min rho " + num(min_rho) +
              "; sigma=0 bitwise equal to noise-free solver: " + (bitwise ? "yes" : "no") +
              "; self-convergence order " + num(order) + " (>= 3.5)"};
}

Outcome stopping_guard() {
  auto p = make_problem(RunConfig{});
  p->grid = {1, 256, kTwoPi};
  p->dt = 2e-3;
  p->steps = 3000;
  p->euler.guard_m = pin::kGuardM;
  p->initial.rho0 = [](std::span<const double>) { return 1.0 / kTwoPi; };
  p->initial.upsilon0 = [](std::span<const double> x, int) { return 0.5 * std::sin(x[0]); };
  CoupledRun run(p, 1024, 1, 0);
  const double g0 = run.solver().guard_norm(run.fluid());
  while (run.step()) {
  }
  if (!run.stopped()) return {false, "guard never fired (initial norm " + num(g0) + ")"};

  const SpectralField u = to_spectral(run.fluid().vel[0]);
  double peak = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < u.coeffs.size(); ++i) {
    const double a = std::abs(u.coeffs[i]);
    peak = std::max(peak, a);
    if (std::abs(p->grid.wavenumber(static_cast<int>(i))) >= p->grid.points / 4) tail = std::max(tail, a);
  }
  const QRecord q = run.q();
  const auto d = run.distances(p->alpha);
  const FluidState fluid = run.fluid();
  const ParticleState parts = run.particles();
  const bool refused = !run.step() && !run.step();
  const bool frozen = run.q().q_total == q.q_total && run.distances(p->alpha).dist_s == d.dist_s &&
                      run.fluid().vel[0].values == fluid.vel[0].values &&
                      run.particles().positions == parts.positions && run.fluid().time == fluid.time;
  const FluidState again = run.solver().step(fluid, std::vector<double>{0.1});
  const bool idempotent = again.time == fluid.time && again.vel[0].values == fluid.vel[0].values;
  const bool spectral_ok = tail < 1e-3 * peak;
  return {q.stopped && refused && frozen && idempotent && spectral_ok,
          "initial norm " + num(g0) + ", stopped at step " + std::to_string(fluid.stop.step_index) + " (t=" +
              num(fluid.stop.time) + ", norm " + num(fluid.stop.norm) + " >= 5); frozen reads: " +
              (frozen ? "yes" : "no") + ", refuses steps: " + (refused && idempotent ? "yes" : "no") +
              ", spectrum tail/peak " + num(tail / peak) + " (< 1e-3)"};
}

Outcome dirac_oracle() {
  const PeriodicGrid g{1, 64, kTwoPi};
  const double x0 = 1.2345, alpha = 1.0;
  const auto r = neg_sobolev_distance_unchecked(EmpiricalMeasure::uniform(1, {x0}), GridField::zeros(g), alpha);
  // |c_k|^2 = (1/L)^2 for a unit Dirac; the norm carries a factor L
  double direct = 0.0;
  for (int k = -32; k <= 32; ++k) direct += std::pow(1.0 + double(k) * k, -alpha);
  direct /= kTwoPi;
  const double rel = std::abs(r.squared - direct) / direct;

  const auto rejects = [&](double a) {
    try {
      neg_sobolev_distance(EmpiricalMeasure::uniform(1, {x0}), GridField::zeros(g), a);
    } catch (const AlphaTooSmall&) {
      return true;
    }
    return false;
  };
  const bool gate = rejects(1.0) && rejects(1.5) && !rejects(1.5 + 1e-9);
  return {rel < pin::kDiracTol && gate,
          "alpha=1 value " + num(r.squared) + ", relative deviation from direct sum " + num(rel) +
              " (< 1e-12); alpha in {1, 1.5} rejected and 1.5+1e-9 accepted: " + (gate ? "yes" : "no")};
}

Outcome lemma() {
  const auto rows = lemma_sweep({KernelFamily::gaussian, RunConfig{}.kernel.width, 1}, 0.5, 4, 14);
  double lo = 1e300, hi = 0.0;
  std::string text;
  for (const auto& r : rows) {
    lo = std::min(lo, r.ratio);
    hi = std::max(hi, r.ratio);
  }
  text = "N=16: " + num(rows.front().ratio) + ", N=16384: " + num(rows.back().ratio);
  return {hi / lo < pin::kLemmaSpread, "ratio spread max/min " + num(hi / lo) + " (< 2); " + text};
}

struct StudyRun {
  RateResult result;
  double seconds = 0.0;
  std::filesystem::path dir;
};

StudyRun study(const std::filesystem::path& dir, int threads) {
  RunConfig cfg;
  cfg.output_dir = dir.string();
  const auto t0 = Clock::now();
  StudyRun s{rate_study(cfg, threads), 0.0, dir};
  s.seconds = seconds_since(t0);
  auto csv = open_output(dir, "rate.csv");
  write_rate_csv(csv, s.result);
  auto detail = open_output(dir, "rate_detail.csv");
  write_rate_detail_csv(detail, s.result);
  return s;
}

Outcome rate(const StudyRun& s) {
  const auto& r = s.result;
  const auto slope = [](const SlopeEstimate& e) { return e.fit ? e.fit->slope : std::nan(""); };
  const double q = slope(r.slope_q), qf = slope(r.slope_q_floor), ds = slope(r.slope_dist_s),
               dv = slope(r.slope_dist_v);
  const bool ok = q < 0 && ds < 0 && dv < 0 && qf <= pin::kFloorSlope && r.censored.empty() &&
                  s.seconds < pin::kStudySeconds;
  return {ok, "slopes: Q " + num(q) + ", Q-floor " + num(qf) + " (<= -0.25), dist_S " + num(ds) + ", dist_V " +
                  num(dv) + "; censored rows " + std::to_string(r.censored.size()) + "; runtime " + num(s.seconds) +
                  " s (< 900 s)"};
}

Outcome determinism(const StudyRun& first, const std::filesystem::path& root, int threads) {
  const int other = threads == 1 ? 2 : 1;
  const StudyRun second = study(root / "study_rerun", other);
  bool same = true;
  for (const char* f : {"rate.csv", "rate_detail.csv"})
    same = same && slurp(first.dir / f) == slurp(second.dir / f) && !slurp(first.dir / f).empty();

  RunConfig cfg;
  cfg.particles.n = 512;
  cfg.integrator.force_method = ForceMethod::direct;
  cfg.output_dir = (root / "coupled_a").string();
  std::ostringstream log;
  run_coupled(cfg, threads, log);
  cfg.output_dir = (root / "coupled_b").string();
  run_coupled(cfg, other, log);
  const bool coupled_same =
      slurp(root / "coupled_a" / "qrecord.csv") == slurp(root / "coupled_b" / "qrecord.csv") &&
      slurp(root / "coupled_a" / "fluid_diagnostics.csv") == slurp(root / "coupled_b" / "fluid_diagnostics.csv");
  return {same && coupled_same, "rate study CSVs with " + std::to_string(threads) + " vs " + std::to_string(other) +
                                    " threads identical: " + (same ? "yes" : "no") +
                                    "; coupled-run CSVs identical: " + (coupled_same ? "yes" : "no")};
}

} // namespace

int main(int argc, char** argv) {
  const std::filesystem::path root = argc > 1 ? argv[1] : "acceptance_out";
  const int threads = argc > 2 ? std::max(1, std::atoi(argv[2]))
                               : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::filesystem::create_directories(root);

  int failures = 0;
  const auto report = [&](int id, const std::string& name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail << std::endl;
  };

  report(1, "force-path equivalence", force_paths);
  report(2, "Stratonovich noise exactness", stratonovich);
  report(3, "SPDE conservation and reduction", euler_conservation);
  report(4, "stopping guard", stopping_guard);
  report(5, "negative-Sobolev oracle", dirac_oracle);
  report(6, "mollification sweep", lemma);
  std::optional<StudyRun> main_study;
  report(7, "rate study", [&] {
    main_study = study(root / "study", threads);
    return rate(*main_study);
  });
  report(8, "determinism", [&] {
    if (!main_study) return Outcome{false, "rate study did not complete"};
    return determinism(*main_study, root, threads);
  });

  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
