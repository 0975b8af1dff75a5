#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "core.hpp"
#include "errors.hpp"

namespace mfe {

enum class KernelFamily { gaussian, compact_bump };

inline std::string to_string(KernelFamily f) {
  return f == KernelFamily::gaussian ? "gaussian" : "compact-bump";
}

inline KernelFamily parse_kernel_family(const std::string& s) {
  if (s == "gaussian") return KernelFamily::gaussian;
  if (s == "compact-bump" || s == "compact_bump" || s == "bump") return KernelFamily::compact_bump;
  throw InvalidArgument("unknown kernel family '" + s + "'");
}

// Base mollifier phi_1^r. For the gaussian family `width` is the standard
// deviation per axis; for the compact bump it is the support radius.
struct MollifierSpec {
  KernelFamily family = KernelFamily::gaussian;
  double width = 1.0;
  int dim = 1;

  void validate() const {
    require(width > 0.0 && std::isfinite(width), "kernel width must be positive");
    require(dim >= 1 && dim <= kMaxDim, "kernel dimension must be in [1, 3]");
  }
};

// Trapezoid settings. `intervals` is per dimension; the residual is the
// difference to the same rule on every other node.
struct QuadratureOptions {
  int intervals = 1 << 12;
  double tolerance = 1e-8;
};

// Relative level below which a kernel is treated as zero (truncation domain).
inline constexpr double kTruncationLevel = 1e-14;

namespace detail {

inline double bump_profile(double r2) { return r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0; }

// Integral over the unit ball of r^power * exp(-1/(1-r^2)) dx in `dim`
// dimensions, by tanh-sinh on the radial coordinate.
inline double bump_ball_moment(int dim, int power) {
  boost::math::quadrature::tanh_sinh<double> integrator;
  const double radial = integrator.integrate(
      [dim, power](double r) { return std::pow(r, dim - 1 + power) * bump_profile(r * r); }, 0.0,
      1.0);
  const double sphere = dim == 1 ? 2.0 : dim == 2 ? kTwoPi : 4.0 * kPi;
  return sphere * radial;
}

inline double bump_norm(int dim) {
  static const std::array<double, kMaxDim> norms = {bump_ball_moment(1, 0), bump_ball_moment(2, 0),
                                                    bump_ball_moment(3, 0)};
  return norms[dim - 1];
}

// Per-axis second moment of the unit-radius normalized bump.
inline double bump_axis_variance(int dim) {
  static const std::array<double, kMaxDim> v = {
      bump_ball_moment(1, 2) / bump_norm(1), bump_ball_moment(2, 2) / bump_norm(2) / 2.0,
      bump_ball_moment(3, 2) / bump_norm(3) / 3.0};
  return v[dim - 1];
}

// Trapezoid rule on the box [-half, half]^dim with `n` intervals per axis.
// Returns {fine, coarse} where coarse uses every other node.
template <class F>
std::array<double, 2> trapezoid_box(int dim, double half, int n, F&& f) {
  require(n >= 2 && n % 2 == 0, "trapezoid interval count must be even and >= 2");
  const double h = 2.0 * half / n;
  const std::size_t nodes = static_cast<std::size_t>(n) + 1;
  std::size_t total = 1;
  for (int q = 0; q < dim; ++q) total *= nodes;
  double fine = 0.0, coarse = 0.0;
  Vec y{};
  std::array<std::size_t, kMaxDim> idx{};
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    double wf = 1.0, wc = 1.0;
    bool on_coarse = true;
    for (int q = dim - 1; q >= 0; --q) {
      idx[q] = rem % nodes;
      rem /= nodes;
      y[q] = -half + h * static_cast<double>(idx[q]);
      const bool end = idx[q] == 0 || idx[q] == nodes - 1;
      wf *= end ? 0.5 * h : h;
      if (idx[q] % 2 != 0) on_coarse = false;
      wc *= end ? h : 2.0 * h;
    }
    const double v = f(std::span<const double>(y.data(), dim));
    fine += wf * v;
    if (on_coarse) coarse += wc * v;
  }
  return {fine, coarse};
}

inline double hermite_prob(int m, double x) {
  double h0 = 1.0, h1 = x;
  if (m == 0) return h0;
  for (int k = 1; k < m; ++k) {
    const double h2 = x * h1 - k * h0;
    h0 = h1;
    h1 = h2;
  }
  return h1;
}

} // namespace detail

// Radius of the truncation domain of phi_1^r (where it drops below
// kTruncationLevel times its peak, or the support for the bump).
inline double truncation_radius_phi1r(const MollifierSpec& spec) {
  if (spec.family == KernelFamily::gaussian)
    return spec.width * std::sqrt(2.0 * std::log(1.0 / kTruncationLevel));
  return spec.width;
}

// Same for phi_1 = phi_1^r * phi_1^r.
inline double truncation_radius_phi1(const MollifierSpec& spec) {
  if (spec.family == KernelFamily::gaussian) return std::sqrt(2.0) * truncation_radius_phi1r(spec);
  return 2.0 * spec.width;
}

// Per-axis standard deviation of phi_1^r.
inline double axis_stddev_phi1r(const MollifierSpec& spec) {
  if (spec.family == KernelFamily::gaussian) return spec.width;
  return spec.width * std::sqrt(detail::bump_axis_variance(spec.dim));
}

inline double eval_phi1r(const MollifierSpec& spec, std::span<const double> x) {
  const double r2 = norm_sq(x.first(spec.dim));
  if (spec.family == KernelFamily::gaussian) {
    const double s2 = spec.width * spec.width;
    return std::exp(-0.5 * r2 / s2) / std::pow(kTwoPi * s2, 0.5 * spec.dim);
  }
  const double a = spec.width;
  return detail::bump_profile(r2 / (a * a)) / (detail::bump_norm(spec.dim) * std::pow(a, spec.dim));
}

inline Vec grad_phi1r(const MollifierSpec& spec, std::span<const double> x) {
  Vec g{};
  const double phi = eval_phi1r(spec, x);
  if (spec.family == KernelFamily::gaussian) {
    const double s2 = spec.width * spec.width;
    for (int q = 0; q < spec.dim; ++q) g[q] = -x[q] / s2 * phi;
    return g;
  }
  if (phi == 0.0) return g;
  const double a2 = spec.width * spec.width;
  const double gap = 1.0 - norm_sq(x.first(spec.dim)) / a2;
  for (int q = 0; q < spec.dim; ++q) g[q] = phi * (-2.0 * x[q] / a2) / (gap * gap);
  return g;
}

// Row-major d x d Hessian of phi_1^r.
inline std::array<Vec, kMaxDim> hessian_phi1r(const MollifierSpec& spec, std::span<const double> x) {
  std::array<Vec, kMaxDim> hess{};
  const double phi = eval_phi1r(spec, x);
  if (spec.family == KernelFamily::gaussian) {
    const double s2 = spec.width * spec.width;
    for (int i = 0; i < spec.dim; ++i)
      for (int j = 0; j < spec.dim; ++j)
        hess[i][j] = phi * (x[i] * x[j] / (s2 * s2) - (i == j ? 1.0 / s2 : 0.0));
    return hess;
  }
  if (phi == 0.0) return hess;
  const double a2 = spec.width * spec.width;
  const double gap = 1.0 - norm_sq(x.first(spec.dim)) / a2;
  for (int i = 0; i < spec.dim; ++i)
    for (int j = 0; j < spec.dim; ++j) {
      const double xx = x[i] * x[j] / (a2 * a2);
      hess[i][j] = phi * (4.0 * xx / std::pow(gap, 4) - 8.0 * xx / std::pow(gap, 3) -
                          (i == j ? 2.0 / (a2 * gap * gap) : 0.0));
    }
  return hess;
}

// (phi_1^r * g)(x) by trapezoid over the truncation box of phi_1^r, where g
// is phi_1^r (component < 0) or its partial derivative `component`.
inline double self_convolution_quadrature(const MollifierSpec& spec, std::span<const double> x,
                                          int component, const QuadratureOptions& opts = {}) {
  Vec shifted{};
  const auto [fine, coarse] = detail::trapezoid_box(
      spec.dim, truncation_radius_phi1r(spec), opts.intervals, [&](std::span<const double> y) {
        const double w = eval_phi1r(spec, y);
        if (w == 0.0) return 0.0;
        for (int q = 0; q < spec.dim; ++q) shifted[q] = x[q] - y[q];
        const std::span<const double> s(shifted.data(), spec.dim);
        return w * (component < 0 ? eval_phi1r(spec, s) : grad_phi1r(spec, s)[component]);
      });
  if (std::abs(fine - coarse) > opts.tolerance) {
    std::ostringstream os;
    os << "self-convolution residual " << std::abs(fine - coarse) << " exceeds "
       << opts.tolerance;
    throw QuadratureNotConverged(os.str());
  }
  return fine;
}

inline double eval_phi1(const MollifierSpec& spec, std::span<const double> x,
                        const QuadratureOptions& opts = {}) {
  if (spec.family == KernelFamily::gaussian) {
    const double s2 = 2.0 * spec.width * spec.width;
    return std::exp(-0.5 * norm_sq(x.first(spec.dim)) / s2) / std::pow(kTwoPi * s2, 0.5 * spec.dim);
  }
  return self_convolution_quadrature(spec, x, -1, opts);
}

inline Vec grad_phi1(const MollifierSpec& spec, std::span<const double> x,
                     const QuadratureOptions& opts = {}) {
  Vec g{};
  if (spec.family == KernelFamily::gaussian) {
    const double s2 = 2.0 * spec.width * spec.width;
    const double phi = eval_phi1(spec, x);
    for (int q = 0; q < spec.dim; ++q) g[q] = -x[q] / s2 * phi;
    return g;
  }
  for (int q = 0; q < spec.dim; ++q) g[q] = self_convolution_quadrature(spec, x, q, opts);
  return g;
}

// Fourier transform with convention u^(l) = \int u(x) exp(-i l.x) dx.
inline std::complex<double> fourier_phi1r(const MollifierSpec& spec, std::span<const double> lambda,
                                          const QuadratureOptions& opts = {}) {
  if (spec.family == KernelFamily::gaussian)
    return std::exp(-0.5 * spec.width * spec.width * norm_sq(lambda.first(spec.dim)));
  // Symmetric kernel: the sine part vanishes.
  const auto [fine, coarse] = detail::trapezoid_box(
      spec.dim, truncation_radius_phi1r(spec), opts.intervals, [&](std::span<const double> y) {
        double phase = 0.0;
        for (int q = 0; q < spec.dim; ++q) phase += lambda[q] * y[q];
        return eval_phi1r(spec, y) * std::cos(phase);
      });
  (void)coarse;
  return fine;
}

inline std::complex<double> fourier_phi1(const MollifierSpec& spec, std::span<const double> lambda,
                                         const QuadratureOptions& opts = {}) {
  const auto r = fourier_phi1r(spec, lambda, opts);
  return r * r;
}

// phi_N(x) = N^beta phi_1(N^{beta/d} x) and phi_N^r likewise.
class ScaledKernel {
public:
  ScaledKernel(MollifierSpec spec, std::int64_t n_particles, double beta,
               QuadratureOptions quad = {})
      : spec_(spec), n_(n_particles), beta_(beta), quad_(quad) {
    spec_.validate();
    require(n_particles >= 1, "particle count must be >= 1");
    require(beta > 0.0 && beta < 1.0, "beta must lie in (0, 1)");
    amplitude_ = std::pow(static_cast<double>(n_), beta_);
    scale_ = std::pow(static_cast<double>(n_), beta_ / spec_.dim);
  }

  const MollifierSpec& spec() const { return spec_; }
  int dim() const { return spec_.dim; }
  std::int64_t n_particles() const { return n_; }
  double beta() const { return beta_; }
  // N^beta and N^{beta/d}.
  double amplitude() const { return amplitude_; }
  double scale() const { return scale_; }
  const QuadratureOptions& quadrature() const { return quad_; }

  double phi(std::span<const double> x) const {
    const Vec y = scaled(x);
    return amplitude_ * eval_phi1(spec_, std::span<const double>(y.data(), dim()), quad_);
  }

  Vec grad_phi(std::span<const double> x) const {
    const Vec y = scaled(x);
    Vec g = grad_phi1(spec_, std::span<const double>(y.data(), dim()), quad_);
    for (int q = 0; q < dim(); ++q) g[q] *= amplitude_ * scale_;
    return g;
  }

  double phir(std::span<const double> x) const {
    const Vec y = scaled(x);
    return amplitude_ * eval_phi1r(spec_, std::span<const double>(y.data(), dim()));
  }

  Vec grad_phir(std::span<const double> x) const {
    const Vec y = scaled(x);
    Vec g = grad_phi1r(spec_, std::span<const double>(y.data(), dim()));
    for (int q = 0; q < dim(); ++q) g[q] *= amplitude_ * scale_;
    return g;
  }

  // Per-axis standard deviation of phi_N (the interaction kernel).
  double effective_width() const { return std::sqrt(2.0) * axis_stddev_phi1r(spec_) / scale_; }
  double support_radius() const { return truncation_radius_phi1(spec_) / scale_; }
  double support_radius_r() const { return truncation_radius_phi1r(spec_) / scale_; }

private:
  Vec scaled(std::span<const double> x) const {
    Vec y{};
    for (int q = 0; q < dim(); ++q) y[q] = scale_ * x[q];
    return y;
  }

  MollifierSpec spec_;
  std::int64_t n_;
  double beta_;
  QuadratureOptions quad_;
  double amplitude_ = 1.0;
  double scale_ = 1.0;
};

// Trapezoid mass of phi_N^r over its truncation box.
inline double kernel_mass(const ScaledKernel& k, const QuadratureOptions& opts = {}) {
  return detail::trapezoid_box(k.dim(), k.support_radius_r(), opts.intervals,
                               [&](std::span<const double> y) { return k.phir(y); })[0];
}

using MultiIndex = std::array<int, kMaxDim>;

inline int order(const MultiIndex& a, int dim) {
  int s = 0;
  for (int q = 0; q < dim; ++q) s += a[q];
  return s;
}

// All multi-indices in `dim` dimensions with |alpha| == total, in
// lexicographically descending order.
inline std::vector<MultiIndex> multi_indices(int dim, int total) {
  std::vector<MultiIndex> out;
  MultiIndex a{};
  std::function<void(int, int)> rec = [&](int axis, int left) {
    if (axis == dim - 1) {
      a[axis] = left;
      out.push_back(a);
      return;
    }
    for (int v = left; v >= 0; --v) {
      a[axis] = v;
      rec(axis + 1, left - v);
    }
  };
  rec(0, total);
  return out;
}

inline std::string to_string(const MultiIndex& a, int dim) {
  std::string s = "(";
  for (int q = 0; q < dim; ++q) s += (q ? "," : "") + std::to_string(a[q]);
  return s + ")";
}

// U^q_{1;alpha}(x) = (-1)^{1+|alpha|} x^alpha / alpha! * d_q phi_1^r(x) for
// 0 <= |alpha| <= L + 1 with L = floor((d+2)/2).
class TaylorKernelFamily {
public:
  explicit TaylorKernelFamily(MollifierSpec spec, QuadratureOptions quad = {})
      : spec_(spec), quad_(quad) {
    spec_.validate();
  }

  const MollifierSpec& spec() const { return spec_; }
  int order_L() const { return (spec_.dim + 2) / 2; }

  double U(int q, const MultiIndex& alpha, std::span<const double> x) const {
    double mono = 1.0, fact = 1.0;
    for (int i = 0; i < spec_.dim; ++i) {
      mono *= std::pow(x[i], alpha[i]);
      fact *= std::tgamma(alpha[i] + 1.0);
    }
    const double sign = (1 + order(alpha, spec_.dim)) % 2 == 0 ? 1.0 : -1.0;
    return sign * mono / fact * grad_phi1r(spec_, x)[q];
  }

  // U^hat / phi_1^r hat. Closed form for the gaussian family (a Hermite
  // polynomial, never divides); quadrature plus division otherwise.
  std::complex<double> fourier_ratio(int q, const MultiIndex& alpha,
                                     std::span<const double> lambda) const {
    if (spec_.family == KernelFamily::gaussian) {
      const double s = spec_.width;
      // U = (-1)^{|alpha|} / (s^2 alpha!) x^{alpha + e_q} phi_1^r.
      std::complex<double> r = (order(alpha, spec_.dim) % 2 == 0 ? 1.0 : -1.0) / (s * s);
      for (int i = 0; i < spec_.dim; ++i) {
        const int m = alpha[i] + (i == q ? 1 : 0);
        r /= std::tgamma(alpha[i] + 1.0);
        r *= std::pow(std::complex<double>(0.0, -s), m) * detail::hermite_prob(m, s * lambda[i]);
      }
      const auto base = fourier_phi1r(spec_, lambda);
      if (std::abs(base) < std::numeric_limits<double>::min()) throw degenerate(lambda);
      return r;
    }
    const auto base = fourier_phi1r(spec_, lambda, quad_);
    if (std::abs(base) < kQuadratureFloor) throw degenerate(lambda);
    return fourier_U_quadrature(q, alpha, lambda) / base;
  }

  std::complex<double> fourier_U_quadrature(int q, const MultiIndex& alpha,
                                            std::span<const double> lambda) const {
    double re = 0.0, im = 0.0;
    re = detail::trapezoid_box(spec_.dim, truncation_radius_phi1r(spec_), quad_.intervals,
                               [&](std::span<const double> y) {
                                 double ph = 0.0;
                                 for (int i = 0; i < spec_.dim; ++i) ph += lambda[i] * y[i];
                                 return U(q, alpha, y) * std::cos(ph);
                               })[0];
    im = detail::trapezoid_box(spec_.dim, truncation_radius_phi1r(spec_), quad_.intervals,
                               [&](std::span<const double> y) {
                                 double ph = 0.0;
                                 for (int i = 0; i < spec_.dim; ++i) ph += lambda[i] * y[i];
                                 return -U(q, alpha, y) * std::sin(ph);
                               })[0];
    return {re, im};
  }

  // |phi^hat| below this is indistinguishable from trapezoid round-off.
  static constexpr double kQuadratureFloor = 1e-13;

private:
  DivisionDegenerate degenerate(std::span<const double> lambda) const {
    std::ostringstream os;
    os << "|phi_1^r hat| underflows at lambda = (";
    for (int i = 0; i < spec_.dim; ++i) os << (i ? ", " : "") << lambda[i];
    os << ")";
    return DivisionDegenerate(os.str());
  }

  MollifierSpec spec_;
  QuadratureOptions quad_;
};

enum class BoundStatus { bounded, unbounded };

inline std::string to_string(BoundStatus s) {
  return s == BoundStatus::bounded ? "bounded" : "unbounded";
}

struct HypothesisEntry {
  std::string hypothesis; // decay | fourier_ratio | remainder_decay
  int q = -1;             // -1 when not indexed by q
  MultiIndex alpha{};
  double sup = 0.0;
  double argsup = 0.0;      // |x| or |lambda| where the sup was attained
  bool growth_trend = false; // sup sits at the window edge and is still rising
  BoundStatus status = BoundStatus::bounded;
};

struct HypothesisOptions {
  int samples = 2001;     // per axis, d = 1
  int samples_2d = 161;   // per axis, d >= 2
  double ceiling = 1e3;
  QuadratureOptions quad{1 << 10, 1e-8};
};

struct HypothesisReport {
  MollifierSpec spec;
  int order_L = 0;
  double freq_window = 0.0;
  double space_window = 0.0;
  double ceiling = 0.0;
  std::vector<HypothesisEntry> entries;

  std::string to_text() const {
    std::ostringstream os;
    os.precision(10);
    os << "family: " << to_string(spec.family) << "\n"
       << "width: " << spec.width << "\n"
       << "dim: " << spec.dim << "\n"
       << "order_L: " << order_L << "\n"
       << "fourier_ratio_orders: 1.." << order_L << "\n"
       << "remainder_order: " << order_L + 1 << "\n"
       << "freq_window: " << freq_window << "\n"
       << "space_window: " << space_window << "\n"
       << "ceiling: " << ceiling << "\n";
    for (const auto& e : entries) {
      std::string key = e.hypothesis;
      if (e.q >= 0) key += ".q" + std::to_string(e.q + 1) + ".alpha" + to_string(e.alpha, spec.dim);
      os << key << ".sup: " << e.sup << "\n"
         << key << ".argsup: " << e.argsup << "\n"
         << key << ".growth_trend: " << (e.growth_trend ? "yes" : "no") << "\n"
         << key << ".status: " << to_string(e.status) << "\n";
    }
    return os.str();
  }
};

namespace detail {

// Sample points of the box [-w, w]^d restricted to lo <= |x| <= w.
inline std::vector<Vec> window_samples(int dim, double lo, double w, int n1, int n2) {
  std::vector<Vec> pts;
  const int n = dim == 1 ? n1 : n2;
  std::size_t total = 1;
  for (int q = 0; q < dim; ++q) total *= static_cast<std::size_t>(n);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    Vec p{};
    for (int q = dim - 1; q >= 0; --q) {
      p[q] = -w + 2.0 * w * static_cast<double>(rem % n) / (n - 1);
      rem /= n;
    }
    const double r = std::sqrt(norm_sq(std::span<const double>(p.data(), dim)));
    if (r >= lo && r <= w) pts.push_back(p);
  }
  return pts;
}

template <class F>
HypothesisEntry scan(const std::vector<Vec>& pts, int dim, double w, double ceiling, F&& value) {
  HypothesisEntry e;
  double inner = 0.0, outer = 0.0;
  for (const auto& p : pts) {
    const std::span<const double> s(p.data(), dim);
    const double r = std::sqrt(norm_sq(s));
    const double v = value(s);
    if (v > e.sup || (v == e.sup && r < e.argsup)) {
      e.sup = v;
      e.argsup = r;
    }
    if (r <= 0.5 * w) inner = std::max(inner, v);
    if (r >= 0.9 * w) outer = std::max(outer, v);
  }
  e.growth_trend = e.argsup >= 0.9 * w && outer > 2.0 * inner;
  e.status = (e.sup > ceiling || e.growth_trend || !std::isfinite(e.sup)) ? BoundStatus::unbounded
                                                                           : BoundStatus::bounded;
  return e;
}

} // namespace detail

// Samples the three kernel hypotheses: polynomial decay of phi_1^r outside
// the unit ball, |U^hat| <= C |phi^hat| for 1 <= |alpha| <= L, and square-root
// decay of U for |alpha| = L + 1. Diagnostics only; never gates a run.
inline HypothesisReport hypothesis_report(const TaylorKernelFamily& family, double freq_window,
                                          double space_window, const HypothesisOptions& opts = {}) {
  require(freq_window > 0.0 && space_window > 0.0, "hypothesis windows must be positive");
  const auto& spec = family.spec();
  const int d = spec.dim;
  const int L = family.order_L();
  HypothesisReport rep{spec, L, freq_window, space_window, opts.ceiling, {}};

  const auto outer_x = detail::window_samples(d, 1.0, space_window, opts.samples, opts.samples_2d);
  auto decay = detail::scan(outer_x, d, space_window, opts.ceiling, [&](std::span<const double> x) {
    return std::abs(eval_phi1r(spec, x)) * (1.0 + std::pow(std::sqrt(norm_sq(x)), d + 2));
  });
  decay.hypothesis = "decay";
  rep.entries.push_back(decay);

  const TaylorKernelFamily fam(spec, opts.quad);
  const auto lambdas =
      detail::window_samples(d, 0.0, freq_window, opts.samples, opts.samples_2d);
  for (int q = 0; q < d; ++q)
    for (int k = 1; k <= L; ++k)
      for (const auto& alpha : multi_indices(d, k)) {
        auto e = detail::scan(lambdas, d, freq_window, opts.ceiling,
                              [&](std::span<const double> lam) {
                                return std::abs(fam.fourier_ratio(q, alpha, lam));
                              });
        e.hypothesis = "fourier_ratio";
        e.q = q;
        e.alpha = alpha;
        rep.entries.push_back(e);
      }

  const auto ball_x = detail::window_samples(d, 0.0, space_window, opts.samples, opts.samples_2d);
  for (int q = 0; q < d; ++q)
    for (const auto& alpha : multi_indices(d, L + 1)) {
      auto e = detail::scan(ball_x, d, space_window, opts.ceiling, [&](std::span<const double> x) {
        return std::abs(family.U(q, alpha, x)) *
               std::sqrt(1.0 + std::pow(std::sqrt(norm_sq(x)), d + 1));
      });
      e.hypothesis = "remainder_decay";
      e.q = q;
      e.alpha = alpha;
      rep.entries.push_back(e);
    }
  return rep;
}

using ScalarFn = std::function<double(std::span<const double>)>;

// sup_probe |f - f * phi_N^r| / (N^{-beta/d} ||grad f||_inf), convolution by
// trapezoid over the truncation box of phi_N^r.
inline double mollification_error_ratio(const ScaledKernel& kernel, const ScalarFn& f,
                                        double grad_sup, const std::vector<Vec>& probes,
                                        const QuadratureOptions& opts = {}) {
  require(grad_sup > 0.0, "||grad f||_inf must be positive");
  const int d = kernel.dim();
  double worst = 0.0;
  Vec shifted{};
  for (const auto& x : probes) {
    const double conv =
        detail::trapezoid_box(d, kernel.support_radius_r(), opts.intervals,
                              [&](std::span<const double> y) {
                                for (int q = 0; q < d; ++q) shifted[q] = x[q] - y[q];
                                return kernel.phir(y) *
                                       f(std::span<const double>(shifted.data(), d));
                              })[0];
    worst = std::max(worst, std::abs(f(std::span<const double>(x.data(), d)) - conv));
  }
  return worst / (grad_sup / kernel.scale());
}

struct LemmaRow {
  std::int64_t n = 0;
  double ratio = 0.0;
};

// Ratio of mollification_error_ratio for f = sin(x_1) at N = 2^lo .. 2^hi,
// probed at `probes` evenly spaced points of one period.
inline std::vector<LemmaRow> lemma_sweep(const MollifierSpec& spec, double beta, int lo, int hi,
                                         int probes = 64, const QuadratureOptions& opts = {}) {
  require(lo >= 0 && hi >= lo, "invalid sweep range");
  std::vector<Vec> pts(probes);
  for (int i = 0; i < probes; ++i) pts[i][0] = kTwoPi * (i + 0.5) / probes;
  const ScalarFn f = [](std::span<const double> x) { return std::sin(x[0]); };
  std::vector<LemmaRow> rows;
  for (int e = lo; e <= hi; ++e) {
    const std::int64_t n = std::int64_t{1} << e;
    rows.push_back({n, mollification_error_ratio(ScaledKernel(spec, n, beta, opts), f, 1.0, pts, opts)});
  }
  return rows;
}

} // namespace mfe
