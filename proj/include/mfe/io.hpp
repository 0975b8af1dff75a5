#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "errors.hpp"
#include "euler.hpp"
#include "experiment.hpp"
#include "field.hpp"

namespace mfe {

// All numbers are written in shortest round-trip form so artifacts are
// byte-stable across platforms and thread counts.
inline std::string fmt(double v) { return detail::format_double(v); }

inline constexpr const char* kQRecordHeader = "time,kinetic_term,density_term,q_total,stopped";
inline constexpr const char* kRateHeader = "N,mean_q,se_q,mean_dist_S,mean_dist_V,censored_count";

inline void write_qrecord_header(std::ostream& os) { os << kQRecordHeader << "\n"; }

inline void write_qrecord_row(std::ostream& os, const QRecord& r) {
  os << fmt(r.time) << ',' << fmt(r.kinetic_term) << ',' << fmt(r.density_term) << ','
     << fmt(r.q_total) << ',' << (r.stopped ? 1 : 0) << "\n";
}

inline void write_rate_csv(std::ostream& os, const RateResult& res) {
  os << kRateHeader << "\n";
  for (const auto& row : res.rows)
    os << row.n << ',' << fmt(row.mean_q) << ',' << fmt(row.se_q) << ',' << fmt(row.mean_dist_s) << ','
       << fmt(row.mean_dist_v) << ',' << row.censored_count << "\n";
}

// Extra per-N columns that do not belong in the fixed schema above.
inline void write_rate_detail_csv(std::ostream& os, const RateResult& res) {
  os << "N,mean_q0,se_q0,mean_q_excess,se_q_excess,se_dist_S,se_dist_V,mean_dist_S0\n";
  for (const auto& row : res.rows)
    os << row.n << ',' << fmt(row.mean_q0) << ',' << fmt(row.se_q0) << ',' << fmt(row.mean_q_excess)
       << ',' << fmt(row.se_q_excess) << ',' << fmt(row.se_dist_s) << ',' << fmt(row.se_dist_v) << ','
       << fmt(row.mean_dist_s0) << "\n";
}

inline void write_slope(std::ostream& os, const std::string& name, const SlopeEstimate& s) {
  if (s.fit) {
    os << name << ".slope: " << fmt(s.fit->slope) << "\n"
       << name << ".intercept: " << fmt(s.fit->intercept) << "\n"
       << name << ".r2: " << fmt(s.fit->r2) << "\n";
  } else {
    os << name << ".slope: none\n" << name << ".note: " << s.note << "\n";
  }
}

inline std::string rate_summary(const RateResult& res) {
  std::ostringstream os;
  os << "beta: " << fmt(res.beta) << "\n"
     << "dim: " << res.dim << "\n"
     << "alpha: " << fmt(res.alpha) << "\n"
     << "horizon: " << fmt(res.horizon) << "\n"
     << "guard_m: " << fmt(res.guard_m) << "\n"
     << "samples: " << res.samples << "\n"
     << "target_slope: " << fmt(res.target_slope()) << "\n";
  write_slope(os, "q", res.slope_q);
  write_slope(os, "q_floor_subtracted", res.slope_q_floor);
  write_slope(os, "q0", res.slope_q0);
  write_slope(os, "dist_S", res.slope_dist_s);
  write_slope(os, "dist_V", res.slope_dist_v);
  os << "censored_rows: " << res.censored.size() << "\n";
  for (const auto& c : res.censored) os << "censored: " << c << "\n";
  return os.str();
}

// Binary lattice snapshot: a short text header ending in "end_header\n",
// then size() little-endian doubles in row-major order.
inline void write_grid_field(std::ostream& os, const GridField& f, const std::string& name = "field") {
  const auto& g = f.grid;
  os << "mfe-grid-field\nname " << name << "\ndim " << g.dim << "\npoints " << g.points << "\nperiod "
     << fmt(g.period) << "\nend_header\n";
  for (double v : f.values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char buf[8];
    std::memcpy(buf, &bits, 8);
    os.write(buf, 8);
  }
}

inline GridField read_grid_field(std::istream& is) {
  std::string line, key;
  PeriodicGrid g;
  std::getline(is, line);
  if (line != "mfe-grid-field") throw InvalidArgument("not a grid field file");
  while (std::getline(is, line) && line != "end_header") {
    std::istringstream ls(line);
    ls >> key;
    if (key == "dim") ls >> g.dim;
    else if (key == "points") ls >> g.points;
    else if (key == "period") {
      std::string t;
      ls >> t;
      g.period = detail::parse_number<double>("period", t);
    }
  }
  g.validate();
  GridField f = GridField::zeros(g);
  for (double& v : f.values) {
    char buf[8];
    if (!is.read(buf, 8)) throw InvalidArgument("grid field file is truncated");
    std::uint64_t bits;
    std::memcpy(&bits, buf, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    v = std::bit_cast<double>(bits);
  }
  return f;
}

// 1-D fields as x,value CSV.
inline void write_grid_csv(std::ostream& os, const std::vector<std::pair<std::string, const GridField*>>& cols) {
  require(!cols.empty(), "no columns");
  const auto& g = cols.front().second->grid;
  require(g.dim == 1, "CSV export is for 1-D fields");
  os << "x";
  for (const auto& [name, f] : cols) os << ',' << name;
  os << "\n";
  for (int i = 0; i < g.points; ++i) {
    os << fmt(i * g.spacing());
    for (const auto& [name, f] : cols) os << ',' << fmt(f->values[i]);
    os << "\n";
  }
}

inline void write_particles_csv(std::ostream& os, const ParticleState& s) {
  os << "k";
  for (int q = 0; q < s.dim; ++q) os << ",x" << q + 1;
  for (int q = 0; q < s.dim; ++q) os << ",v" << q + 1;
  os << "\n";
  for (std::size_t k = 0; k < s.size(); ++k) {
    os << k;
    for (int q = 0; q < s.dim; ++q) os << ',' << fmt(s.positions[k * s.dim + q]);
    for (int q = 0; q < s.dim; ++q) os << ',' << fmt(s.velocities[k * s.dim + q]);
    os << "\n";
  }
}

// Opens a file for writing under dir, creating dir as needed.
inline std::ofstream open_output(const std::filesystem::path& dir, const std::string& name,
                                 bool binary = false) {
  std::filesystem::create_directories(dir);
  std::ofstream os(dir / name, binary ? std::ios::binary : std::ios::out);
  if (!os) throw InvalidArgument("cannot write " + (dir / name).string());
  return os;
}

} // namespace mfe
