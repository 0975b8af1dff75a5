#pragma once

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "experiment.hpp"
#include "io.hpp"
#include "mollifier.hpp"
#include "rng.hpp"

#ifndef MFE_VERSION
#define MFE_VERSION "dev"
#endif

namespace mfe {

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// The resolved config preceded by '#' comment lines; parse_config accepts
// the file as is, so a manifest can be fed back in to repeat the run.
inline void write_manifest(const std::filesystem::path& dir, const std::string& command,
                           const RunConfig& cfg, const std::vector<std::string>& notes) {
  auto os = open_output(dir, "manifest.ini");
  os << "# command: " << command << "\n"
     << "# version: " << MFE_VERSION << "\n"
     << "# created: " << utc_timestamp() << "\n"
     << "# master_seed: " << cfg.master_seed << "\n";
  for (const auto& n : notes) os << "# " << n << "\n";
  os << to_ini(cfg);
}

// Single coupled simulation of N = particles.n particles with noise sample 0.
inline int run_coupled(const RunConfig& cfg, int threads, std::ostream& log) {
  auto problem = make_problem(cfg);
  problem->force_threads = threads;
  const std::filesystem::path dir = cfg.output_dir;
  CoupledRun run(problem, cfg.particles.n, cfg.master_seed, 0);

  auto qcsv = open_output(dir, "qrecord.csv");
  auto diag = open_output(dir, "fluid_diagnostics.csv");
  write_qrecord_header(qcsv);
  diag << "time,mass,min_rho\n";
  auto record = [&] {
    write_qrecord_row(qcsv, run.q());
    diag << fmt(run.fluid().time) << ',' << fmt(run.fluid().mass()) << ',' << fmt(run.fluid().min_rho())
         << "\n";
  };
  auto snapshot = [&](const std::string& tag) {
    if (!cfg.output.snapshots) return;
    auto b = open_output(dir, "rho_" + tag + ".bin", true);
    write_grid_field(b, run.fluid().rho, "rho");
    for (int q = 0; q < cfg.grid.dim; ++q) {
      auto v = open_output(dir, "u" + std::to_string(q + 1) + "_" + tag + ".bin", true);
      write_grid_field(v, run.fluid().vel[q], "u" + std::to_string(q + 1));
    }
    auto p = open_output(dir, "particles_" + tag + ".csv");
    write_particles_csv(p, run.particles());
    if (cfg.grid.dim == 1) {
      const GridField mollified = run.mollified_density();
      auto f = open_output(dir, "fields_" + tag + ".csv");
      write_grid_csv(f, {{"rho", &run.fluid().rho}, {"u", &run.fluid().vel[0]}, {"mollified_density", &mollified}});
    }
  };

  record();
  snapshot("initial");
  double lowest = run.fluid().min_rho();
  while (run.step()) {
    lowest = std::min(lowest, run.fluid().min_rho());
    if (run.steps_taken() % cfg.output.record_every == 0 || run.finished()) record();
  }
  snapshot("final");

  const auto q = run.q();
  const auto dist = run.distances(cfg.study.alpha, cfg.study.freq_cutoff);
  std::vector<std::string> notes{
      "n_particles: " + std::to_string(cfg.particles.n),
      "steps_taken: " + std::to_string(run.steps_taken()),
      "stopped: " + std::string(run.stopped() ? "true" : "false"),
      "final_q: " + fmt(q.q_total),
      "final_dist_S: " + fmt(dist.dist_s),
      "final_dist_V: " + fmt(dist.dist_v),
      "min_rho: " + fmt(lowest),
      "mollifier_aliasing: " + fmt(run.mollifier_aliasing().wrapped_mass)};
  if (run.stopped()) {
    const auto& s = run.fluid().stop;
    notes.push_back("stop.step: " + std::to_string(s.step_index));
    notes.push_back("stop.time: " + fmt(s.time));
    notes.push_back("stop.norm: " + fmt(s.norm));
    notes.push_back("stop.threshold: " + fmt(s.threshold));
  }
  write_manifest(dir, "run-coupled", cfg, notes);
  for (const auto& n : notes) log << n << "\n";
  return 0;
}

inline RateResult rate_study(const RunConfig& cfg, int threads) {
  return monte_carlo_rate(make_problem(cfg), cfg.study.n_values, cfg.study.samples, cfg.master_seed,
                          threads);
}

inline int run_rate_study(const RunConfig& cfg, int threads, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const RateResult res = rate_study(cfg, threads);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::filesystem::path dir = cfg.output_dir;
  {
    auto os = open_output(dir, "rate.csv");
    write_rate_csv(os, res);
  }
  {
    auto os = open_output(dir, "rate_detail.csv");
    write_rate_detail_csv(os, res);
  }
  const std::string summary = rate_summary(res);
  {
    auto os = open_output(dir, "rate_summary.txt");
    os << summary;
  }
  std::ostringstream elapsed;
  elapsed << std::fixed << std::setprecision(1) << secs;
  write_manifest(dir, "rate-study", cfg, {"elapsed_seconds: " + elapsed.str()});
  log << summary;
  if (res.slope_q.fit)
    log << "fitted slope of E Q_T: " << fmt(res.slope_q.fit->slope) << " (target " << fmt(res.target_slope())
        << ")\n";
  else
    log << "fitted slope of E Q_T unavailable: " << res.slope_q.note << "\n";
  return 0;
}

inline int run_kernel_report(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const MollifierSpec spec{cfg.kernel.family, cfg.kernel.width, cfg.grid.dim};
  const QuadratureOptions quad{cfg.kernel.quadrature_intervals, cfg.kernel.quadrature_tolerance};
  HypothesisOptions opts;
  opts.ceiling = cfg.kernel.report_ceiling;
  opts.quad = quad;
  const auto report = hypothesis_report(TaylorKernelFamily(spec, quad), cfg.kernel.report_freq_window,
                                        cfg.kernel.report_space_window, opts);
  const std::filesystem::path dir = cfg.output_dir;
  {
    auto os = open_output(dir, "kernel_report.txt");
    os << report.to_text();
  }
  const auto rows = lemma_sweep(spec, cfg.kernel.beta, cfg.kernel.lemma_log2_min, cfg.kernel.lemma_log2_max,
                                64, quad);
  double lo = rows.front().ratio, hi = rows.front().ratio;
  {
    auto os = open_output(dir, "lemma_sweep.csv");
    os << "N,ratio\n";
    for (const auto& r : rows) {
      os << r.n << ',' << fmt(r.ratio) << "\n";
      lo = std::min(lo, r.ratio);
      hi = std::max(hi, r.ratio);
    }
  }
  write_manifest(dir, "kernel-report", cfg, {"lemma_ratio_spread: " + fmt(hi / lo)});
  log << report.to_text() << "lemma_ratio_min: " << fmt(lo) << "\nlemma_ratio_max: " << fmt(hi) << "\n";
  return 0;
}

struct SelfCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Quick oracle checks; each compares library output with an independent
// computation.
inline std::vector<SelfCheck> self_test() {
  std::vector<SelfCheck> out;
  auto check = [&out](const std::string& name, const std::function<std::pair<bool, std::string>()>& f) {
    try {
      auto [ok, detail] = f();
      out.push_back({name, ok, detail});
    } catch (const std::exception& e) {
      out.push_back({name, false, e.what()});
    }
  };

  check("philox_known_answer", [] {
    const auto r = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
    const bool ok = r[0] == 0x6627e8d5u && r[1] == 0xe169c58du && r[2] == 0xbc57ac4cu && r[3] == 0x9b00dbd8u;
    return std::pair{ok, std::string(ok ? "matches" : "mismatch")};
  });

  check("dirac_negative_sobolev", [] {
    const PeriodicGrid g{1, 64, kTwoPi};
    const auto m = EmpiricalMeasure::uniform(1, {1.0});
    const auto r = neg_sobolev_distance(m, GridField::zeros(g), 2.0);
    // |delta^(l)| = 1 and ||mu||^2 = (1/L) sum (1 + l^2)^{-alpha} |mu^(l)|^2
    double direct = 0.0;
    for (int k = -32; k <= 32; ++k) direct += std::pow(1.0 + k * k, -2.0);
    direct /= kTwoPi;
    const double rel = std::abs(r.squared - direct) / direct;
    return std::pair{rel < 1e-12, "relative error " + fmt(rel)};
  });

  check("stratonovich_exactness", [] {
    const double sigma = 0.3, dt = 1.0 / 256;
    const auto path = NoisePath::generate(1, 256, dt, 7, 0);
    ParticleState s{1, kTwoPi, {1.0}, {0.7}, 0.0};
    for (std::size_t k = 0; k < path.steps(); ++k)
      s = step(std::move(s), path.increment(k), dt, ForceField::none(), SigmaField::constant(1, sigma));
    const double exact = 0.7 * std::exp(sigma * path.brownian(path.steps())[0]);
    const double rel = std::abs(s.velocities[0] - exact) / std::abs(exact);
    return std::pair{rel < 1e-12, "relative error " + fmt(rel)};
  });

  check("particle_mesh_vs_direct", [] {
    auto data = bump_initial_data(1, kTwoPi, 0.2, 4.0, 0.1);
    const auto st = init_well_prepared(data.rho0, data.upsilon0, 1, kTwoPi, 256, {InitScheme::iid, 3});
    const ScaledKernel k({KernelFamily::gaussian, 4.0, 1}, 256, 0.5);
    const auto fd = force_direct(st, k);
    const auto fp = force_particle_mesh(st, k, {1, 256, kTwoPi});
    double mx = 0.0, dev = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      mx = std::max(mx, std::abs(fd[i]));
      dev = std::max(dev, std::abs(fd[i] - fp[i]));
    }
    return std::pair{dev < 1e-3 * mx, "relative deviation " + fmt(dev / mx)};
  });

  check("loglog_exact_power", [] {
    const std::vector<double> xs{1, 2, 4, 8}, ys{1, std::pow(2, -0.5), 0.5, std::pow(8, -0.5)};
    const auto f = fit_loglog(xs, ys);
    return std::pair{std::abs(f.slope + 0.5) < 1e-12, "slope " + fmt(f.slope)};
  });

  check("config_round_trip", [] {
    RunConfig c;
    c.kernel.width = 0.1 + 0.2;
    c.master_seed = 0xFFFFFFFFFFFFFFFFull;
    const std::string text = to_ini(c);
    return std::pair{to_ini(parse_config(text)) == text, std::string("INI text")};
  });
  return out;
}

} // namespace mfe
