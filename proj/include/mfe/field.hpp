#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "errors.hpp"
#include "fft.hpp"

namespace mfe {

// Uniform lattice on the torus [0, period)^dim with `points` nodes per axis.
struct PeriodicGrid {
  int dim = 1;
  int points = 256;
  double period = kTwoPi;

  void validate() const {
    require(dim == 1 || dim == 2, "grid dimension must be 1 or 2");
    require(points >= 2 && std::has_single_bit(static_cast<unsigned>(points)),
            "grid points per axis must be a power of two");
    require(period > 0.0 && std::isfinite(period), "grid period must be positive");
  }

  double spacing() const { return period / points; }
  double cell_volume() const { return std::pow(spacing(), dim); }
  double volume() const { return std::pow(period, dim); }
  std::size_t size() const { return dim == 1 ? points : static_cast<std::size_t>(points) * points; }

  // Signed wavenumber index of FFT slot n: 0..M/2-1, then -M/2..-1.
  int wavenumber(int n) const { return n < points / 2 ? n : n - points; }
  double frequency(int n) const { return kTwoPi * wavenumber(n) / period; }

  // Per-axis slot indices of a flat (row-major) index.
  std::array<int, 2> unflatten(std::size_t flat) const {
    if (dim == 1) return {static_cast<int>(flat), 0};
    return {static_cast<int>(flat / points), static_cast<int>(flat % points)};
  }

  double freq_sq(std::size_t flat) const {
    const auto n = unflatten(flat);
    double s = 0.0;
    for (int q = 0; q < dim; ++q) s += frequency(n[q]) * frequency(n[q]);
    return s;
  }

  Vec node(std::size_t flat) const {
    const auto n = unflatten(flat);
    Vec x{};
    for (int q = 0; q < dim; ++q) x[q] = spacing() * n[q];
    return x;
  }

  bool operator==(const PeriodicGrid&) const = default;
};

struct GridField {
  PeriodicGrid grid;
  std::vector<double> values;

  static GridField zeros(const PeriodicGrid& g) {
    g.validate();
    return {g, std::vector<double>(g.size(), 0.0)};
  }

  static GridField constant(const PeriodicGrid& g, double c) {
    g.validate();
    return {g, std::vector<double>(g.size(), c)};
  }

  template <class F>
  static GridField sample(const PeriodicGrid& g, F&& f) {
    GridField out = zeros(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Vec x = g.node(i);
      out.values[i] = f(std::span<const double>(x.data(), g.dim));
    }
    return out;
  }

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

// Fourier coefficients c_k = (1/L^d) sum_j f(x_j) exp(-i l_k . x_j) h^d in
// FFT slot order.
struct SpectralField {
  PeriodicGrid grid;
  std::vector<std::complex<double>> coeffs;
};

inline SpectralField to_spectral(const GridField& f) {
  f.grid.validate();
  const std::size_t n = f.grid.size();
  std::vector<std::complex<double>> in(f.values.begin(), f.values.end());
  SpectralField out{f.grid, std::vector<std::complex<double>>(n)};
  FftPlanCache::instance().execute(f.grid.dim, f.grid.points, FFTW_FORWARD, in.data(),
                                   out.coeffs.data());
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& c : out.coeffs) c *= inv;
  return out;
}

inline GridField to_physical(const SpectralField& s) {
  std::vector<std::complex<double>> out(s.coeffs.size());
  FftPlanCache::instance().execute(s.grid.dim, s.grid.points, FFTW_BACKWARD, s.coeffs.data(),
                                   out.data());
  GridField f{s.grid, std::vector<double>(out.size())};
  for (std::size_t i = 0; i < out.size(); ++i) f.values[i] = out[i].real();
  return f;
}

// Multiplies each coefficient by i l_q. The Nyquist slot of axis q is zeroed
// so the result stays real.
inline SpectralField spectral_derivative(SpectralField s, int axis) {
  require(axis >= 0 && axis < s.grid.dim, "derivative axis out of range");
  for (std::size_t i = 0; i < s.coeffs.size(); ++i) {
    const int n = s.grid.unflatten(i)[axis];
    if (s.grid.wavenumber(n) == -s.grid.points / 2)
      s.coeffs[i] = 0.0;
    else
      s.coeffs[i] *= std::complex<double>(0.0, s.grid.frequency(n));
  }
  return s;
}

inline GridField spectral_derivative(const GridField& f, int axis) {
  return to_physical(spectral_derivative(to_spectral(f), axis));
}

inline double integral(const GridField& f) {
  double s = 0.0;
  for (double v : f.values) s += v;
  return s * f.grid.cell_volume();
}

inline double lattice_l2_distance_sq(const GridField& a, const GridField& b) {
  require(a.grid == b.grid, "fields live on different grids");
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    s += d * d;
  }
  return s * a.grid.cell_volume();
}

using KernelFn = std::function<double(std::span<const double>)>;

// Kernel mass that wraps around the torus: the convolution is only a faithful
// truncation of the R^d one when this is small.
inline constexpr double kAliasingThreshold = 1e-6;

struct AliasingReport {
  double wrapped_mass = 0.0;
  bool warning = false;
};

// Lattice samples of the periodized kernel sum_n k(x + n L) for |n|_inf <= 1,
// centred at the origin by minimum image.
inline GridField sample_periodized_kernel(const PeriodicGrid& g, const KernelFn& k,
                                          AliasingReport* report = nullptr) {
  // Image shells |s|_inf = 1, 2, ... are added until a shell no longer
  // changes the sum; wide kernels (small N) need several.
  constexpr int kMaxShells = 64;
  GridField out = GridField::zeros(g);
  double wrapped = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    Vec x = g.node(i);
    for (int q = 0; q < g.dim; ++q) x[q] = min_image(x[q], g.period);
    double total = k(std::span<const double>(x.data(), g.dim));
    for (int shell = 1; shell <= kMaxShells; ++shell) {
      double ring = 0.0;
      const int lo1 = g.dim == 2 ? -shell : 0, hi1 = g.dim == 2 ? shell : 0;
      for (int s1 = lo1; s1 <= hi1; ++s1)
        for (int s0 = -shell; s0 <= shell; ++s0) {
          if (std::max(std::abs(s0), std::abs(s1)) != shell) continue;
          Vec y = x;
          y[0] += s0 * g.period;
          if (g.dim == 2) y[1] += s1 * g.period;
          const double v = k(std::span<const double>(y.data(), g.dim));
          ring += v;
          wrapped += std::abs(v);
        }
      total += ring;
      if (std::abs(ring) <= 1e-17 * std::abs(total)) break;
    }
    out.values[i] = total;
  }
  wrapped *= g.cell_volume();
  if (report) *report = {wrapped, wrapped > kAliasingThreshold};
  return out;
}

// Circular convolution (f * k)(x_j) = h^d sum_l f(x_l) k(x_j - x_l) through
// the spectral product c(f * k) = L^d c(f) c(k).
inline GridField convolve(const GridField& f, const KernelFn& k, AliasingReport* report = nullptr) {
  const GridField ks = sample_periodized_kernel(f.grid, k, report);
  SpectralField sf = to_spectral(f);
  const SpectralField sk = to_spectral(ks);
  const double vol = f.grid.volume();
  for (std::size_t i = 0; i < sf.coeffs.size(); ++i) sf.coeffs[i] *= vol * sk.coeffs[i];
  return to_physical(sf);
}

// ( L^d sum_k (1 + |l_k|^2)^s |c_k|^2 )^{1/2}
inline double sobolev_norm(const GridField& f, double s) {
  const SpectralField sf = to_spectral(f);
  double acc = 0.0;
  for (std::size_t i = 0; i < sf.coeffs.size(); ++i)
    acc += std::pow(1.0 + f.grid.freq_sq(i), s) * std::norm(sf.coeffs[i]);
  return std::sqrt(f.grid.volume() * acc);
}

// Atomic measure sum_j w_j delta_{X_j}. Without explicit weights it is the
// uniform probability measure (w_j = 1/N, total weight exactly 1).
struct EmpiricalMeasure {
  int dim = 1;
  std::vector<double> points; // N x dim, row-major
  std::optional<std::vector<double>> weights;

  static EmpiricalMeasure uniform(int dim, std::vector<double> pts) {
    return {dim, std::move(pts), std::nullopt};
  }

  static EmpiricalMeasure weighted(int dim, std::vector<double> pts, std::vector<double> w) {
    require(w.size() * dim == pts.size(), "one weight per support point");
    return {dim, std::move(pts), std::move(w)};
  }

  std::size_t size() const { return points.size() / dim; }
  double weight(std::size_t j) const {
    return weights ? (*weights)[j] : 1.0 / static_cast<double>(size());
  }
  double total_weight() const {
    if (!weights) return 1.0;
    double s = 0.0;
    for (double w : *weights) s += w;
    return s;
  }
  double total_variation() const {
    if (!weights) return 1.0;
    double s = 0.0;
    for (double w : *weights) s += std::abs(w);
    return s;
  }
  std::span<const double> point(std::size_t j) const {
    return {points.data() + j * dim, static_cast<std::size_t>(dim)};
  }
};

enum class DepositScheme { nearest, linear };

inline std::string to_string(DepositScheme s) {
  return s == DepositScheme::nearest ? "nearest" : "linear";
}

inline DepositScheme parse_deposit_scheme(const std::string& s) {
  if (s == "nearest") return DepositScheme::nearest;
  if (s == "linear") return DepositScheme::linear;
  throw InvalidArgument("unknown deposit scheme '" + s + "'");
}

namespace detail {

// Per-axis stencil of a point: up to two (slot, weight) pairs.
struct AxisStencil {
  std::array<int, 2> slot{};
  std::array<double, 2> weight{};
  int count = 1;
};

inline AxisStencil axis_stencil(double x, const PeriodicGrid& g, DepositScheme scheme) {
  const double u = wrap(x, g.period) / g.spacing();
  AxisStencil s;
  if (scheme == DepositScheme::nearest) {
    s.slot[0] = static_cast<int>(std::floor(u + 0.5)) % g.points;
    s.weight[0] = 1.0;
    return s;
  }
  const double base = std::floor(u);
  const double t = u - base;
  const int i = static_cast<int>(base) % g.points;
  s.slot = {i, (i + 1) % g.points};
  s.weight = {1.0 - t, t};
  s.count = t == 0.0 ? 1 : 2;
  return s;
}

template <class Visit>
void for_each_stencil(std::span<const double> x, const PeriodicGrid& g, DepositScheme scheme,
                      Visit&& visit) {
  const AxisStencil a = axis_stencil(x[0], g, scheme);
  if (g.dim == 1) {
    for (int i = 0; i < a.count; ++i) visit(static_cast<std::size_t>(a.slot[i]), a.weight[i]);
    return;
  }
  const AxisStencil b = axis_stencil(x[1], g, scheme);
  for (int i = 0; i < a.count; ++i)
    for (int j = 0; j < b.count; ++j)
      visit(static_cast<std::size_t>(a.slot[i]) * g.points + b.slot[j], a.weight[i] * b.weight[j]);
}

} // namespace detail

// Grid density of a measure: each atom spreads its weight over its nearest
// node or the 2^d surrounding nodes, divided by the cell volume.
inline GridField deposit(const EmpiricalMeasure& m, const PeriodicGrid& g, DepositScheme scheme) {
  require(m.dim == g.dim, "measure and grid dimensions differ");
  GridField out = GridField::zeros(g);
  const double inv_cell = 1.0 / g.cell_volume();
  for (std::size_t j = 0; j < m.size(); ++j) {
    const double w = m.weight(j) * inv_cell;
    detail::for_each_stencil(m.point(j), g, scheme,
                             [&](std::size_t slot, double c) { out.values[slot] += w * c; });
  }
  return out;
}

enum class InterpolationScheme { nearest, linear, spectral };

inline std::string to_string(InterpolationScheme s) {
  switch (s) {
  case InterpolationScheme::nearest: return "nearest";
  case InterpolationScheme::linear: return "linear";
  default: return "spectral";
  }
}

inline InterpolationScheme parse_interpolation_scheme(const std::string& s) {
  if (s == "nearest") return InterpolationScheme::nearest;
  if (s == "linear") return InterpolationScheme::linear;
  if (s == "spectral") return InterpolationScheme::spectral;
  throw InvalidArgument("unknown interpolation scheme '" + s + "'");
}

// Trigonometric interpolant at an off-lattice point. The Nyquist slot is
// split symmetrically between +-M/2, i.e. enters as a cosine.
inline double spectral_interpolate(const SpectralField& s, std::span<const double> x) {
  const auto& g = s.grid;
  const int m = g.points;
  std::array<std::vector<std::complex<double>>, 2> phase;
  for (int q = 0; q < g.dim; ++q) {
    phase[q].resize(m);
    for (int n = 0; n < m; ++n) {
      const double lx = g.frequency(n) * x[q];
      phase[q][n] = g.wavenumber(n) == -m / 2 ? std::complex<double>(std::cos(lx), 0.0)
                                              : std::polar(1.0, lx);
    }
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < s.coeffs.size(); ++i) {
    const auto n = g.unflatten(i);
    std::complex<double> e = phase[0][n[0]];
    if (g.dim == 2) e *= phase[1][n[1]];
    acc += (s.coeffs[i] * e).real();
  }
  return acc;
}

// Values of `f` at arbitrary torus points (N x dim, row-major).
inline std::vector<double> interpolate(const GridField& f, std::span<const double> points,
                                       InterpolationScheme scheme) {
  const int d = f.grid.dim;
  const std::size_t n = points.size() / d;
  std::vector<double> out(n, 0.0);
  if (scheme == InterpolationScheme::spectral) {
    const SpectralField s = to_spectral(f);
    for (std::size_t j = 0; j < n; ++j) out[j] = spectral_interpolate(s, points.subspan(j * d, d));
    return out;
  }
  const auto dep =
      scheme == InterpolationScheme::nearest ? DepositScheme::nearest : DepositScheme::linear;
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    detail::for_each_stencil(points.subspan(j * d, d), f.grid, dep,
                             [&](std::size_t slot, double c) { acc += c * f.values[slot]; });
    out[j] = acc;
  }
  return out;
}

struct NegSobolevResult {
  double squared = 0.0;      // ||mu - f||_{-alpha}^2 over |k|_inf <= K
  double tail_bound_sq = 0.0; // bound on the omitted |k|_inf > K part
  int cutoff = 0;

  double value() const { return std::sqrt(squared); }
};

// sum_{|k|_inf > K} (1 + |l_k|^2)^{-alpha}, bounded by the integral test.
inline double neg_sobolev_weight_tail(const PeriodicGrid& g, double alpha, int cutoff) {
  const double scale = std::pow(g.period / kTwoPi, 2.0 * alpha);
  const double k = std::max(cutoff, 1);
  if (g.dim == 1) return 2.0 * scale * std::pow(k, 1.0 - 2.0 * alpha) / (2.0 * alpha - 1.0);
  return 8.0 * scale * std::pow(k, 2.0 - 2.0 * alpha) / (2.0 * alpha - 2.0);
}

inline void check_alpha(int dim, double alpha) {
  if (!(alpha > 0.5 * dim + 1.0))
    throw AlphaTooSmall("alpha = " + std::to_string(alpha) + " must exceed d/2 + 1 = " +
                        std::to_string(0.5 * dim + 1.0));
}

namespace detail {

// Characteristic-function coefficients (1/L^d) sum_j w_j exp(-i l_k X_j) for
// |k_q| <= K, stored with axis offset K (index k + K).
inline std::vector<std::complex<double>> measure_coefficients(const EmpiricalMeasure& m,
                                                              const PeriodicGrid& g, int K) {
  const int width = 2 * K + 1;
  const std::size_t total = g.dim == 1 ? width : static_cast<std::size_t>(width) * width;
  std::vector<std::complex<double>> acc(total, 0.0);
  const double base = kTwoPi / g.period;
  std::array<std::vector<std::complex<double>>, 2> pw;
  for (auto& v : pw) v.resize(width);
  for (std::size_t j = 0; j < m.size(); ++j) {
    const auto x = m.point(j);
    for (int q = 0; q < g.dim; ++q) {
      const std::complex<double> step = std::polar(1.0, -base * x[q]);
      pw[q][K] = 1.0;
      for (int k = 1; k <= K; ++k) {
        pw[q][K + k] = pw[q][K + k - 1] * step;
        pw[q][K - k] = std::conj(pw[q][K + k]);
      }
    }
    const double w = m.weight(j);
    if (g.dim == 1) {
      for (int i = 0; i < width; ++i) acc[i] += w * pw[0][i];
    } else {
      for (int a = 0; a < width; ++a) {
        const std::complex<double> wa = w * pw[0][a];
        for (int b = 0; b < width; ++b) acc[static_cast<std::size_t>(a) * width + b] += wa * pw[1][b];
      }
    }
  }
  const double inv = 1.0 / g.volume();
  for (auto& c : acc) c *= inv;
  return acc;
}

// Field coefficient at signed wavenumber k (|k| <= M/2), with the Nyquist
// slot shared half-and-half between +-M/2.
inline std::complex<double> field_coefficient(const SpectralField& s, std::array<int, 2> k) {
  const auto& g = s.grid;
  const int m = g.points;
  std::size_t flat = 0;
  double factor = 1.0;
  for (int q = 0; q < g.dim; ++q) {
    int kq = k[q];
    if (std::abs(kq) == m / 2) {
      factor *= 0.5;
      kq = -m / 2;
    }
    const int slot = kq >= 0 ? kq : kq + m;
    flat = flat * m + slot;
  }
  return factor * s.coeffs[flat];
}

inline double l1_norm(const GridField& f) {
  double s = 0.0;
  for (double v : f.values) s += std::abs(v);
  return s * f.grid.cell_volume();
}

} // namespace detail

// The same truncated sum as neg_sobolev_distance with only alpha > d/2
// (summability of the weights) required.
inline NegSobolevResult neg_sobolev_distance_unchecked(const EmpiricalMeasure& m, const GridField& f,
                                                       double alpha, int cutoff = 0) {
  const auto& g = f.grid;
  require(m.dim == g.dim, "measure and field dimensions differ");
  require(alpha > 0.5 * g.dim, "negative-Sobolev weights are not summable for alpha <= d/2");
  const int K = cutoff > 0 ? cutoff : g.points / 2;
  require(K <= g.points / 2, "frequency cutoff must not exceed M/2");

  const auto mc = detail::measure_coefficients(m, g, K);
  const SpectralField fs = to_spectral(f);
  const int width = 2 * K + 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < mc.size(); ++i) {
    std::array<int, 2> k{};
    if (g.dim == 1) {
      k[0] = static_cast<int>(i) - K;
    } else {
      k[0] = static_cast<int>(i / width) - K;
      k[1] = static_cast<int>(i % width) - K;
    }
    double l2 = 0.0;
    for (int q = 0; q < g.dim; ++q) {
      const double l = kTwoPi * k[q] / g.period;
      l2 += l * l;
    }
    acc += std::pow(1.0 + l2, -alpha) * std::norm(mc[i] - detail::field_coefficient(fs, k));
  }
  NegSobolevResult r;
  r.cutoff = K;
  r.squared = g.volume() * acc;
  const double mass = m.total_variation() + detail::l1_norm(f);
  r.tail_bound_sq = mass * mass / g.volume() * neg_sobolev_weight_tail(g, alpha, K);
  return r;
}

// ||mu - f||_{-alpha} from truncated Fourier sums (direct O(N K^d)
// characteristic function, no NUFFT). `cutoff` <= 0 selects K = M/2.
inline NegSobolevResult neg_sobolev_distance(const EmpiricalMeasure& m, const GridField& f,
                                             double alpha, int cutoff = 0) {
  check_alpha(f.grid.dim, alpha);
  return neg_sobolev_distance_unchecked(m, f, alpha, cutoff);
}

// Vector version: sum over components of ||mu_q - f_q||^2_{-alpha}.
inline NegSobolevResult neg_sobolev_distance(std::span<const EmpiricalMeasure> measures,
                                             std::span<const GridField> fields, double alpha,
                                             int cutoff = 0) {
  require(measures.size() == fields.size() && !fields.empty(),
          "one field per measure component");
  NegSobolevResult total;
  for (std::size_t q = 0; q < fields.size(); ++q) {
    const auto r = neg_sobolev_distance(measures[q], fields[q], alpha, cutoff);
    total.squared += r.squared;
    total.tail_bound_sq += r.tail_bound_sq;
    total.cutoff = r.cutoff;
  }
  return total;
}

} // namespace mfe
