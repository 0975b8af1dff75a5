#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "errors.hpp"
#include "euler.hpp"
#include "experiment.hpp"
#include "field.hpp"
#include "mollifier.hpp"
#include "particle.hpp"

namespace mfe {

// Every tunable of a run. Serialized as INI sections; see `config_keys()`.
struct RunConfig {
  struct Kernel {
    KernelFamily family = KernelFamily::gaussian;
    double width = 4.0;
    double beta = 0.5;
    int quadrature_intervals = 1 << 12;
    double quadrature_tolerance = 1e-8;
    double report_freq_window = 8.0;
    double report_space_window = 40.0;
    double report_ceiling = 1e3;
    int lemma_log2_min = 4;
    int lemma_log2_max = 14;
  } kernel;

  struct Grid {
    int dim = 1;
    int points = 512;
    double period = kTwoPi;
  } grid;

  struct Particles {
    std::size_t n = 1024;
    InitScheme init_scheme = InitScheme::stratified;
    DepositScheme deposit = DepositScheme::linear;
  } particles;

  struct Integrator {
    double dt = 1e-3;
    double t_final = 0.2;
    ForceMethod force_method = ForceMethod::particle_mesh;
  } integrator;

  struct Euler {
    double dealias_fraction = 2.0 / 3.0;
    double hyperviscosity = 1e-8;
    int hyperviscosity_order = 4;
    double guard_s = 3.5;
    double guard_m = 50.0;
    bool relaxed_guard = false;
    InterpolationScheme interpolation = InterpolationScheme::linear;
  } euler;

  struct Noise {
    double sigma_base = 0.3;
    double sigma_amplitude = 0.1;
  } noise;

  struct Initial {
    double density_bump = 0.2;
    double bump_concentration = 4.0;
    double velocity_amplitude = 0.1;
  } initial;

  struct Study {
    std::vector<std::size_t> n_values{256, 512, 1024, 2048, 4096, 8192};
    std::size_t samples = 32;
    double alpha = 2.0;
    int freq_cutoff = 0;
  } study;

  struct Output {
    std::size_t record_every = 1;
    bool snapshots = false;
  } output;

  std::uint64_t master_seed = 20240611;
  std::string output_dir = "out";

  // Number of steps to reach t_final; t_final must be a whole multiple of dt.
  std::size_t steps() const {
    return static_cast<std::size_t>(std::llround(integrator.t_final / integrator.dt));
  }

  void validate() const;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* b = text.data();
  const char* e = b + text.size();
  const auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc() || r.ptr != e) throw ConfigError(key, "cannot parse '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + text + "'");
}

template <class F>
auto parse_enum(const std::string& key, const std::string& text, F&& parse) {
  try {
    return parse(text);
  } catch (const InvalidArgument& e) {
    throw ConfigError(key, e.what());
  }
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

struct KeyBinding {
  std::string key; // "section.name" or "name" at top level
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

} // namespace detail

// Ordered key table; drives parsing, serialization and unknown-key checks.
inline const std::vector<detail::KeyBinding>& config_keys() {
  using detail::KeyBinding;
  static const std::vector<KeyBinding> keys = [] {
    std::vector<KeyBinding> k;
    auto dbl = [&k](std::string key, auto ref) {
      k.push_back({key, [ref](const RunConfig& c) { return detail::format_double(ref(c)); },
                   [ref, key](RunConfig& c, const std::string& t) {
                     ref(c) = detail::parse_number<double>(key, t);
                   }});
    };
    auto integer = [&k](std::string key, auto ref) {
      using T = std::remove_reference_t<decltype(ref(std::declval<RunConfig&>()))>;
      k.push_back({key, [ref](const RunConfig& c) { return std::to_string(ref(c)); },
                   [ref, key](RunConfig& c, const std::string& t) {
                     ref(c) = detail::parse_number<T>(key, t);
                   }});
    };
    auto boolean = [&k](std::string key, auto ref) {
      k.push_back({key,
                   [ref](const RunConfig& c) {
                     return std::string(ref(c) ? "true" : "false");
                   },
                   [ref, key](RunConfig& c, const std::string& t) { ref(c) = detail::parse_bool(key, t); }});
    };
    auto enumerated = [&k](std::string key, auto ref, auto parse) {
      k.push_back({key, [ref](const RunConfig& c) { return to_string(ref(c)); },
                   [ref, parse, key](RunConfig& c, const std::string& t) {
                     ref(c) = detail::parse_enum(key, t, parse);
                   }});
    };

    enumerated("kernel.family", [](auto& c) -> auto& { return c.kernel.family; }, parse_kernel_family);
    dbl("kernel.width", [](auto& c) -> auto& { return c.kernel.width; });
    dbl("kernel.beta", [](auto& c) -> auto& { return c.kernel.beta; });
    integer("kernel.quadrature_intervals", [](auto& c) -> auto& { return c.kernel.quadrature_intervals; });
    dbl("kernel.quadrature_tolerance", [](auto& c) -> auto& { return c.kernel.quadrature_tolerance; });
    dbl("kernel.report_freq_window", [](auto& c) -> auto& { return c.kernel.report_freq_window; });
    dbl("kernel.report_space_window", [](auto& c) -> auto& { return c.kernel.report_space_window; });
    dbl("kernel.report_ceiling", [](auto& c) -> auto& { return c.kernel.report_ceiling; });
    integer("kernel.lemma_log2_min", [](auto& c) -> auto& { return c.kernel.lemma_log2_min; });
    integer("kernel.lemma_log2_max", [](auto& c) -> auto& { return c.kernel.lemma_log2_max; });

    integer("grid.dim", [](auto& c) -> auto& { return c.grid.dim; });
    integer("grid.points", [](auto& c) -> auto& { return c.grid.points; });
    dbl("grid.period", [](auto& c) -> auto& { return c.grid.period; });

    integer("particles.n", [](auto& c) -> auto& { return c.particles.n; });
    enumerated("particles.init_scheme", [](auto& c) -> auto& { return c.particles.init_scheme; },
               parse_init_scheme);
    enumerated("particles.deposit", [](auto& c) -> auto& { return c.particles.deposit; },
               parse_deposit_scheme);

    dbl("integrator.dt", [](auto& c) -> auto& { return c.integrator.dt; });
    dbl("integrator.t_final", [](auto& c) -> auto& { return c.integrator.t_final; });
    enumerated("integrator.force_method", [](auto& c) -> auto& { return c.integrator.force_method; },
               parse_force_method);

    dbl("euler.dealias_fraction", [](auto& c) -> auto& { return c.euler.dealias_fraction; });
    dbl("euler.hyperviscosity", [](auto& c) -> auto& { return c.euler.hyperviscosity; });
    integer("euler.hyperviscosity_order", [](auto& c) -> auto& { return c.euler.hyperviscosity_order; });
    dbl("euler.guard_s", [](auto& c) -> auto& { return c.euler.guard_s; });
    dbl("euler.guard_m", [](auto& c) -> auto& { return c.euler.guard_m; });
    boolean("euler.relaxed_guard", [](auto& c) -> auto& { return c.euler.relaxed_guard; });
    enumerated("euler.interpolation", [](auto& c) -> auto& { return c.euler.interpolation; },
               parse_interpolation_scheme);

    dbl("noise.sigma_base", [](auto& c) -> auto& { return c.noise.sigma_base; });
    dbl("noise.sigma_amplitude", [](auto& c) -> auto& { return c.noise.sigma_amplitude; });

    dbl("initial.density_bump", [](auto& c) -> auto& { return c.initial.density_bump; });
    dbl("initial.bump_concentration", [](auto& c) -> auto& { return c.initial.bump_concentration; });
    dbl("initial.velocity_amplitude", [](auto& c) -> auto& { return c.initial.velocity_amplitude; });

    k.push_back({"study.n_values",
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.study.n_values.size(); ++i)
                     s += (i ? "," : "") + std::to_string(c.study.n_values[i]);
                   return s;
                 },
                 [](RunConfig& c, const std::string& t) {
                   c.study.n_values.clear();
                   std::stringstream ss(t);
                   std::string item;
                   while (std::getline(ss, item, ','))
                     c.study.n_values.push_back(
                         detail::parse_number<std::size_t>("study.n_values", detail::trim(item)));
                 }});
    integer("study.samples", [](auto& c) -> auto& { return c.study.samples; });
    dbl("study.alpha", [](auto& c) -> auto& { return c.study.alpha; });
    integer("study.freq_cutoff", [](auto& c) -> auto& { return c.study.freq_cutoff; });

    integer("output.record_every", [](auto& c) -> auto& { return c.output.record_every; });
    boolean("output.snapshots", [](auto& c) -> auto& { return c.output.snapshots; });

    integer("master_seed", [](auto& c) -> auto& { return c.master_seed; });
    k.push_back({"output_dir", [](const RunConfig& c) { return c.output_dir; },
                 [](RunConfig& c, const std::string& t) { c.output_dir = t; }});
    return k;
  }();
  return keys;
}

inline void RunConfig::validate() const {
  if (kernel.width <= 0.0 || !std::isfinite(kernel.width)) throw ConfigError("kernel.width", "must be positive");
  if (!(kernel.beta > 0.0 && kernel.beta < 1.0)) throw ConfigError("kernel.beta", "must lie in (0, 1)");
  if (kernel.quadrature_intervals < 16) throw ConfigError("kernel.quadrature_intervals", "must be >= 16");
  if (!(kernel.quadrature_tolerance > 0.0)) throw ConfigError("kernel.quadrature_tolerance", "must be positive");
  if (!(kernel.report_freq_window > 0.0)) throw ConfigError("kernel.report_freq_window", "must be positive");
  if (!(kernel.report_space_window > 0.0)) throw ConfigError("kernel.report_space_window", "must be positive");
  if (!(kernel.report_ceiling > 0.0)) throw ConfigError("kernel.report_ceiling", "must be positive");
  if (kernel.lemma_log2_min < 0 || kernel.lemma_log2_min > 30)
    throw ConfigError("kernel.lemma_log2_min", "must lie in [0, 30]");
  if (kernel.lemma_log2_max < kernel.lemma_log2_min || kernel.lemma_log2_max > 30)
    throw ConfigError("kernel.lemma_log2_max", "must lie in [lemma_log2_min, 30]");
  if (grid.dim != 1 && grid.dim != 2) throw ConfigError("grid.dim", "must be 1 or 2");
  if (grid.points < 4 || (grid.points & (grid.points - 1)) != 0)
    throw ConfigError("grid.points", "must be a power of two >= 4");
  if (!(grid.period > 0.0) || !std::isfinite(grid.period)) throw ConfigError("grid.period", "must be positive");
  if (particles.n < 1) throw ConfigError("particles.n", "must be >= 1");
  if (particles.init_scheme == InitScheme::stratified && grid.dim != 1)
    throw ConfigError("particles.init_scheme", "stratified initialization requires grid.dim = 1");
  if (!(integrator.dt > 0.0) || !std::isfinite(integrator.dt)) throw ConfigError("integrator.dt", "must be positive");
  if (!(integrator.t_final >= 0.0) || !std::isfinite(integrator.t_final))
    throw ConfigError("integrator.t_final", "must be >= 0");
  const double ratio = integrator.t_final / integrator.dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio))
    throw ConfigError("integrator.t_final", "must be a whole multiple of integrator.dt");
  if (!std::isfinite(noise.sigma_base)) throw ConfigError("noise.sigma_base", "must be finite");
  if (!std::isfinite(noise.sigma_amplitude)) throw ConfigError("noise.sigma_amplitude", "must be finite");
  if (!(initial.density_bump >= 0.0)) throw ConfigError("initial.density_bump", "must be >= 0");
  if (!(initial.bump_concentration > 0.0)) throw ConfigError("initial.bump_concentration", "must be positive");
  if (!std::isfinite(initial.velocity_amplitude)) throw ConfigError("initial.velocity_amplitude", "must be finite");
  if (study.n_values.empty()) throw ConfigError("study.n_values", "must list at least one N");
  for (std::size_t i = 0; i < study.n_values.size(); ++i) {
    if (study.n_values[i] < 1) throw ConfigError("study.n_values", "entries must be >= 1");
    if (i && study.n_values[i] <= study.n_values[i - 1])
      throw ConfigError("study.n_values", "must be strictly ascending");
  }
  if (study.samples < 2) throw ConfigError("study.samples", "must be >= 2");
  if (!(study.alpha > 0.5 * grid.dim + 1.0)) throw ConfigError("study.alpha", "must exceed d/2 + 1");
  if (study.freq_cutoff < 0) throw ConfigError("study.freq_cutoff", "must be >= 0");
  if (output.record_every < 1) throw ConfigError("output.record_every", "must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir", "must not be empty");

  EulerConfig e;
  e.dt = integrator.dt;
  e.dealias_fraction = euler.dealias_fraction;
  e.hyperviscosity = euler.hyperviscosity;
  e.hyperviscosity_order = euler.hyperviscosity_order;
  e.guard_s = euler.guard_s;
  e.guard_m = euler.guard_m;
  e.relaxed_guard = euler.relaxed_guard;
  e.validate(grid.dim);
}

// INI text with one section per group, top-level keys first.
inline std::string to_ini(const RunConfig& c) {
  std::ostringstream os;
  std::string section;
  for (const auto& k : config_keys())
    if (k.key.find('.') == std::string::npos) os << k.key << " = " << k.get(c) << "\n";
  for (const auto& k : config_keys()) {
    const auto dot = k.key.find('.');
    if (dot == std::string::npos) continue;
    const std::string sec = k.key.substr(0, dot);
    if (sec != section) {
      os << "\n[" << sec << "]\n";
      section = sec;
    }
    os << k.key.substr(dot + 1) << " = " << k.get(c) << "\n";
  }
  return os.str();
}

// Parses INI text over the defaults. Unknown keys and sections are rejected.
inline RunConfig parse_config(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("<file>", e.message() + " at line " + std::to_string(e.line()));
  }
  RunConfig c;
  const auto& keys = config_keys();
  auto apply = [&](const std::string& key, const std::string& value) {
    for (const auto& k : keys)
      if (k.key == key) {
        k.set(c, detail::trim(value));
        return;
      }
    throw ConfigError(key, "unknown key");
  };
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      apply(name, node.data());
      continue;
    }
    for (const auto& [sub, leaf] : node) {
      if (!leaf.empty()) throw ConfigError(name + "." + sub, "nested sections are not supported");
      apply(name + "." + sub, leaf.data());
    }
  }
  return c;
}

inline RunConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
  return parse_config(in);
}

// The simulation problem described by a validated config.
inline std::shared_ptr<Problem> make_problem(const RunConfig& c) {
  c.validate();
  auto p = std::make_shared<Problem>();
  p->grid = {c.grid.dim, c.grid.points, c.grid.period};
  p->kernel = {c.kernel.family, c.kernel.width, c.grid.dim};
  p->beta = c.kernel.beta;
  p->quadrature = {c.kernel.quadrature_intervals, c.kernel.quadrature_tolerance};
  p->dt = c.integrator.dt;
  p->steps = c.steps();
  p->euler.dt = c.integrator.dt;
  p->euler.dealias_fraction = c.euler.dealias_fraction;
  p->euler.hyperviscosity = c.euler.hyperviscosity;
  p->euler.hyperviscosity_order = c.euler.hyperviscosity_order;
  p->euler.guard_s = c.euler.guard_s;
  p->euler.guard_m = c.euler.guard_m;
  p->euler.relaxed_guard = c.euler.relaxed_guard;
  p->sigma = SigmaField::cosine(c.grid.dim, c.noise.sigma_base, c.noise.sigma_amplitude, c.grid.period);
  p->initial = bump_initial_data(c.grid.dim, c.grid.period, c.initial.density_bump,
                                 c.initial.bump_concentration, c.initial.velocity_amplitude);
  p->init = c.particles.init_scheme;
  p->deposit = c.particles.deposit;
  p->interpolation = c.euler.interpolation;
  p->force = c.integrator.force_method;
  p->alpha = c.study.alpha;
  p->freq_cutoff = c.study.freq_cutoff;
  return p;
}

} // namespace mfe
