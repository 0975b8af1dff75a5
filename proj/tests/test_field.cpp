#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <random>
#include <sstream>

#include <mfe/field.hpp>
#include <mfe/io.hpp>
#include <mfe/mollifier.hpp>

using namespace mfe;

namespace {

GridField random_field(const PeriodicGrid& g, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n;
  GridField f = GridField::zeros(g);
  for (auto& v : f.values) v = n(gen);
  return f;
}

// Naive DFT coefficient c_k = (1/L^d) sum_j f(x_j) exp(-i l_k x_j) h^d, 1-D.
std::complex<double> naive_coefficient(const GridField& f, int k) {
  const auto& g = f.grid;
  std::complex<double> c = 0.0;
  for (int j = 0; j < g.points; ++j)
    c += f.values[j] * std::polar(1.0, -kTwoPi * k * j / g.points);
  return c * g.spacing() / g.period;
}

} // namespace

TEST(Grid, Validation) {
  EXPECT_THROW((PeriodicGrid{3, 16, 1.0}.validate()), InvalidArgument);
  EXPECT_THROW((PeriodicGrid{1, 12, 1.0}.validate()), InvalidArgument);
  EXPECT_THROW((PeriodicGrid{1, 16, -1.0}.validate()), InvalidArgument);
  EXPECT_NO_THROW((PeriodicGrid{2, 16, 1.0}.validate()));
}

TEST(Grid, FrequencyLayout) {
  const PeriodicGrid g{1, 8, 4.0};
  EXPECT_EQ(g.wavenumber(3), 3);
  EXPECT_EQ(g.wavenumber(4), -4);
  EXPECT_EQ(g.wavenumber(7), -1);
  EXPECT_DOUBLE_EQ(g.frequency(1), kTwoPi / 4.0);
  EXPECT_DOUBLE_EQ(g.spacing(), 0.5);
}

TEST(Spectral, ConstantField) {
  const PeriodicGrid g{1, 32, 3.0};
  const SpectralField s = to_spectral(GridField::constant(g, 1.0));
  EXPECT_NEAR(std::abs(s.coeffs[0] - 1.0), 0.0, 1e-15);
  for (std::size_t i = 1; i < s.coeffs.size(); ++i) EXPECT_NEAR(std::abs(s.coeffs[i]), 0.0, 1e-15);
}

TEST(Spectral, SineCoefficients) {
  const PeriodicGrid g{1, 64, 5.0};
  const GridField f = GridField::sample(g, [&](std::span<const double> x) { return std::sin(kTwoPi * x[0] / g.period); });
  const SpectralField s = to_spectral(f);
  EXPECT_NEAR(std::abs(s.coeffs[1] - std::complex<double>(0, -0.5)), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(s.coeffs[63] - std::complex<double>(0, 0.5)), 0.0, 1e-14);
  for (int k = 2; k < 63; ++k) EXPECT_NEAR(std::abs(s.coeffs[k]), 0.0, 1e-14);
}

TEST(Spectral, MatchesNaiveDft) {
  const PeriodicGrid g{1, 32, 2.5};
  const GridField f = random_field(g, 3);
  const SpectralField s = to_spectral(f);
  for (int n = 0; n < g.points; ++n)
    EXPECT_NEAR(std::abs(s.coeffs[n] - naive_coefficient(f, g.wavenumber(n))), 0.0, 1e-13);
}

TEST(Spectral, RoundTripIdentity) {
  for (const PeriodicGrid& g : {PeriodicGrid{1, 256, 1.0}, PeriodicGrid{2, 64, 7.0}}) {
    const GridField f = random_field(g, 11);
    const GridField back = to_physical(to_spectral(f));
    double err = 0.0, mx = 0.0;
    for (std::size_t i = 0; i < f.values.size(); ++i) {
      err = std::max(err, std::abs(back.values[i] - f.values[i]));
      mx = std::max(mx, std::abs(f.values[i]));
    }
    EXPECT_LT(err, 1e-12 * mx);
  }
}

TEST(Derivative, ConstantGivesZero) {
  const PeriodicGrid g{2, 16, 2.0};
  for (double v : spectral_derivative(GridField::constant(g, 4.2), 1).values) EXPECT_NEAR(v, 0.0, 1e-14);
}

TEST(Derivative, SineFirstAndSecond) {
  const PeriodicGrid g{1, 128, 3.0};
  const double w = kTwoPi / g.period;
  const GridField f = GridField::sample(g, [&](std::span<const double> x) { return std::sin(w * x[0]); });
  const GridField d1 = spectral_derivative(f, 0);
  const GridField d2 = spectral_derivative(d1, 0);
  for (int j = 0; j < g.points; ++j) {
    const double x = j * g.spacing();
    EXPECT_NEAR(d1.values[j], w * std::cos(w * x), 1e-10);
    EXPECT_NEAR(d2.values[j], -w * w * std::sin(w * x), 1e-9);
  }
}

TEST(Derivative, TwoDimensionalAxes) {
  const PeriodicGrid g{2, 32, kTwoPi};
  const GridField f = GridField::sample(g, [](std::span<const double> x) { return std::sin(x[0]) * std::cos(2 * x[1]); });
  const GridField dx = spectral_derivative(f, 0), dy = spectral_derivative(f, 1);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec x = g.node(i);
    EXPECT_NEAR(dx.values[i], std::cos(x[0]) * std::cos(2 * x[1]), 1e-12);
    EXPECT_NEAR(dy.values[i], -2 * std::sin(x[0]) * std::sin(2 * x[1]), 1e-12);
  }
}

TEST(Convolve, ConstantIsPreserved) {
  const PeriodicGrid g{1, 128, kTwoPi};
  const ScaledKernel k({KernelFamily::gaussian, 1.0, 1}, 256, 0.5);
  const GridField c = convolve(GridField::constant(g, 2.5), [&](std::span<const double> x) { return k.phir(x); });
  for (double v : c.values) EXPECT_NEAR(v, 2.5, 1e-10);
}

TEST(Convolve, MatchesDirectDoubleLoop) {
  const PeriodicGrid g{1, 128, kTwoPi};
  const ScaledKernel k({KernelFamily::gaussian, 1.0, 1}, 64, 0.5);
  const auto kern = [&](std::span<const double> x) { return k.phir(x); };
  const GridField f = GridField::sample(g, [](std::span<const double> x) { return std::exp(std::sin(x[0])); });
  const GridField c = convolve(f, kern);
  const double h = g.spacing();
  for (int j = 0; j < g.points; ++j) {
    double direct = 0.0;
    for (int l = 0; l < g.points; ++l) {
      const double r[1] = {min_image((j - l) * h, g.period)};
      direct += f.values[l] * k.phir(r) * h;
    }
    EXPECT_NEAR(c.values[j], direct, 1e-6);
  }
}

TEST(Convolve, CentredDiracGivesKernelSamples) {
  const PeriodicGrid g{1, 256, kTwoPi};
  const ScaledKernel k({KernelFamily::gaussian, 1.0, 1}, 1024, 0.5);
  const auto dep = deposit(EmpiricalMeasure::uniform(1, {kPi}), g, DepositScheme::nearest);
  const GridField c = convolve(dep, [&](std::span<const double> x) { return k.phir(x); });
  for (int j = 0; j < g.points; ++j) {
    const double r[1] = {j * g.spacing() - kPi};
    EXPECT_NEAR(c.values[j], k.phir(r), 1e-10);
  }
}

TEST(Convolve, AliasingWarningForWideKernel) {
  const PeriodicGrid g{1, 64, 1.0};
  const ScaledKernel k({KernelFamily::gaussian, 1.0, 1}, 1, 0.5);
  AliasingReport rep;
  convolve(GridField::constant(g, 1.0), [&](std::span<const double> x) { return k.phir(x); }, &rep);
  EXPECT_TRUE(rep.warning);
  EXPECT_GT(rep.wrapped_mass, kAliasingThreshold);
}

TEST(Sobolev, Examples) {
  const PeriodicGrid g{1, 64, kTwoPi};
  EXPECT_EQ(sobolev_norm(GridField::zeros(g), 1.0), 0.0);
  const GridField f = GridField::sample(g, [](std::span<const double> x) { return std::sin(x[0]); });
  EXPECT_NEAR(sobolev_norm(f, 0.0), std::sqrt(kPi), 1e-13);
  EXPECT_NEAR(sobolev_norm(f, 1.0), std::sqrt(kPi) * std::sqrt(2.0), 1e-13);
}

TEST(Sobolev, ParsevalOnRandomFields) {
  for (const PeriodicGrid& g : {PeriodicGrid{1, 128, 3.0}, PeriodicGrid{2, 32, 5.0}}) {
    const GridField f = random_field(g, 5);
    double direct = 0.0;
    for (double v : f.values) direct += v * v;
    direct *= g.cell_volume();
    EXPECT_NEAR(std::pow(sobolev_norm(f, 0.0), 2), direct, 1e-10 * direct);
  }
}

TEST(Deposit, NearestSingleParticle) {
  const PeriodicGrid g{1, 32, 4.0};
  const auto f = deposit(EmpiricalMeasure::uniform(1, {1.01}), g, DepositScheme::nearest);
  int nonzero = 0;
  for (double v : f.values)
    if (v != 0.0) {
      ++nonzero;
      EXPECT_NEAR(v, 1.0 / g.spacing(), 1e-12);
    }
  EXPECT_EQ(nonzero, 1);
  EXPECT_NEAR(f.values[8], 1.0 / g.spacing(), 1e-12);
}

TEST(Deposit, MassConservation) {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int dim : {1, 2})
    for (auto scheme : {DepositScheme::nearest, DepositScheme::linear}) {
      const PeriodicGrid g{dim, 32, 3.0};
      std::vector<double> pts(500 * dim);
      for (auto& p : pts) p = u(gen);
      EXPECT_NEAR(integral(deposit(EmpiricalMeasure::uniform(dim, pts), g, scheme)), 1.0, 1e-12);
      std::vector<double> w(500, 0.003);
      EXPECT_NEAR(integral(deposit(EmpiricalMeasure::weighted(dim, pts, w), g, scheme)), 1.5, 1e-12);
    }
}

TEST(Deposit, LinearAtNodeEqualsNearest) {
  const PeriodicGrid g{2, 16, 2.0};
  const std::vector<double> pts{5 * g.spacing(), 9 * g.spacing()};
  const auto a = deposit(EmpiricalMeasure::uniform(2, pts), g, DepositScheme::nearest);
  const auto b = deposit(EmpiricalMeasure::uniform(2, pts), g, DepositScheme::linear);
  for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-12);
}

TEST(Deposit, LinearSplitsBarycentrically) {
  const PeriodicGrid g{1, 8, 8.0};
  const auto f = deposit(EmpiricalMeasure::uniform(1, {2.25}), g, DepositScheme::linear);
  EXPECT_NEAR(f.values[2], 0.75, 1e-14);
  EXPECT_NEAR(f.values[3], 0.25, 1e-14);
}

TEST(Deposit, ConvolveMatchesDirectKernelSum) {
  const PeriodicGrid g{1, 256, kTwoPi};
  const ScaledKernel k({KernelFamily::gaussian, 4.0, 1}, 64, 0.5);
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  std::vector<double> pts(64);
  for (auto& p : pts) p = u(gen);
  const auto dep = deposit(EmpiricalMeasure::uniform(1, pts), g, DepositScheme::linear);
  const GridField c = convolve(dep, [&](std::span<const double> x) { return k.phir(x); });
  double err = 0.0, mx = 0.0;
  for (int j = 0; j < g.points; ++j) {
    double direct = 0.0;
    for (double p : pts) {
      const double r[1] = {min_image(j * g.spacing() - p, g.period)};
      direct += k.phir(r) / 64.0;
    }
    err = std::max(err, std::abs(c.values[j] - direct));
    mx = std::max(mx, direct);
  }
  // linear deposit error is O(h^2 |phi''|)
  EXPECT_LT(err, 1e-3 * mx);
}

TEST(Interpolate, LinearExactForNodesAndSpectralForModes) {
  const PeriodicGrid g{1, 32, kTwoPi};
  const GridField f = GridField::sample(g, [](std::span<const double> x) { return std::cos(3 * x[0]) + 0.5; });
  const std::vector<double> nodes{4 * g.spacing(), 17 * g.spacing()};
  const auto lin = interpolate(f, nodes, InterpolationScheme::linear);
  EXPECT_NEAR(lin[0], f.values[4], 1e-14);
  EXPECT_NEAR(lin[1], f.values[17], 1e-14);
  const std::vector<double> off{0.123, 4.567};
  const auto sp = interpolate(f, off, InterpolationScheme::spectral);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(sp[i], std::cos(3 * off[i]) + 0.5, 1e-12);
}

TEST(NegSobolev, DiracAgainstDirectLatticeSum) {
  const PeriodicGrid g{1, 128, kTwoPi};
  const auto m = EmpiricalMeasure::uniform(1, {0.0});
  double direct = 0.0;
  for (int k = -64; k <= 64; ++k) direct += 1.0 / (1.0 + k * k);
  direct /= kTwoPi;
  const auto r = neg_sobolev_distance_unchecked(m, GridField::zeros(g), 1.0);
  EXPECT_NEAR(r.squared, direct, 1e-12 * direct);
  for (double alpha : {2.0, 3.5}) {
    double d2 = 0.0;
    for (int k = -64; k <= 64; ++k) d2 += std::pow(1.0 + k * k, -alpha);
    EXPECT_NEAR(neg_sobolev_distance(m, GridField::zeros(g), alpha).squared, d2 / kTwoPi, 1e-12 * d2);
  }
}

TEST(NegSobolev, RejectsSmallAlpha) {
  const PeriodicGrid g{1, 16, kTwoPi};
  const auto m = EmpiricalMeasure::uniform(1, {0.0});
  EXPECT_THROW(neg_sobolev_distance(m, GridField::zeros(g), 1.0), AlphaTooSmall);
  EXPECT_THROW(neg_sobolev_distance(m, GridField::zeros(g), 1.5), AlphaTooSmall);
  EXPECT_NO_THROW(neg_sobolev_distance(m, GridField::zeros(g), 1.5000001));
  const PeriodicGrid g2{2, 16, kTwoPi};
  EXPECT_THROW(neg_sobolev_distance(EmpiricalMeasure::uniform(2, {0.0, 0.0}), GridField::zeros(g2), 2.0),
               AlphaTooSmall);
}

TEST(NegSobolev, MeasureAgainstItsOwnDensityVanishes) {
  // a single Fourier mode density and its lattice-quantile particles
  const PeriodicGrid g{1, 64, kTwoPi};
  const GridField rho =
      GridField::sample(g, [](std::span<const double> x) { return (1.0 + 0.3 * std::cos(x[0])) / kTwoPi; });
  // quantile points reproduce the low modes up to round-off
  for (int n : {64, 256, 1024}) {
    // invert the CDF x + 0.3 sin x = 2 pi u by Newton
    std::vector<double> pts(n);
    for (int j = 0; j < n; ++j) {
      const double target = kTwoPi * (j + 0.5) / n;
      double x = target;
      for (int it = 0; it < 50; ++it) x -= (x + 0.3 * std::sin(x) - target) / (1.0 + 0.3 * std::cos(x));
      pts[j] = x;
    }
    EXPECT_LT(neg_sobolev_distance(EmpiricalMeasure::uniform(1, pts), rho, 2.0).squared, 1e-15);
  }
}

TEST(NegSobolev, TranslationInvariant) {
  const PeriodicGrid g{1, 64, kTwoPi};
  const GridField rho =
      GridField::sample(g, [](std::span<const double> x) { return (1.0 + 0.5 * std::sin(2 * x[0])) / kTwoPi; });
  std::vector<double> pts{0.3, 1.1, 2.9, 4.4, 5.0};
  const double a = neg_sobolev_distance(EmpiricalMeasure::uniform(1, pts), rho, 2.0).squared;
  const int shift = 5;
  for (auto& p : pts) p = wrap(p + shift * g.spacing(), g.period);
  GridField shifted = rho;
  for (int j = 0; j < g.points; ++j) shifted.values[(j + shift) % g.points] = rho.values[j];
  const double b = neg_sobolev_distance(EmpiricalMeasure::uniform(1, pts), shifted, 2.0).squared;
  EXPECT_NEAR(a, b, 1e-12 * a);
}

TEST(NegSobolev, PermutationInvariant) {
  const PeriodicGrid g{1, 32, kTwoPi};
  std::vector<double> pts{0.3, 1.1, 2.9, 4.4};
  std::vector<double> w{0.1, -0.2, 0.4, 0.05};
  const GridField zero = GridField::zeros(g);
  const double a = neg_sobolev_distance(EmpiricalMeasure::weighted(1, pts, w), zero, 2.0).squared;
  std::swap(pts[0], pts[3]);
  std::swap(w[0], w[3]);
  const double b = neg_sobolev_distance(EmpiricalMeasure::weighted(1, pts, w), zero, 2.0).squared;
  EXPECT_NEAR(a, b, 1e-14);
}

TEST(NegSobolev, DecreasesInAlpha) {
  const PeriodicGrid g{2, 16, 3.0};
  const GridField f = GridField::sample(g, [](std::span<const double> x) { return 1.0 + std::sin(x[0]); });
  const auto m = EmpiricalMeasure::uniform(2, {0.1, 0.2, 1.3, 2.2, 2.9, 0.4});
  double prev = 1e300;
  for (double alpha : {2.1, 2.5, 3.0, 4.0}) {
    const double v = neg_sobolev_distance(m, f, alpha).squared;
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(NegSobolev, CutoffDifferenceWithinTailBound) {
  const PeriodicGrid g{1, 256, kTwoPi};
  const GridField rho = GridField::sample(g, [](std::span<const double> x) { return (1.0 + 0.2 * std::cos(x[0])) / kTwoPi; });
  const auto m = EmpiricalMeasure::uniform(1, {0.5, 1.5, 2.5, 3.5, 4.5});
  for (int K : {8, 32, 64}) {
    const auto a = neg_sobolev_distance(m, rho, 2.0, K);
    const auto b = neg_sobolev_distance(m, rho, 2.0, 2 * K);
    EXPECT_GE(b.squared, a.squared);
    EXPECT_LE(b.squared - a.squared, a.tail_bound_sq);
  }
}

TEST(NegSobolev, VectorVersionSumsComponents) {
  const PeriodicGrid g{1, 32, kTwoPi};
  const std::vector<EmpiricalMeasure> ms{EmpiricalMeasure::weighted(1, {1.0, 2.0}, {0.5, 0.5}),
                                         EmpiricalMeasure::weighted(1, {3.0}, {-0.3})};
  const std::vector<GridField> fs{GridField::zeros(g), GridField::constant(g, 0.1)};
  const double sum = neg_sobolev_distance(ms[0], fs[0], 2.0).squared + neg_sobolev_distance(ms[1], fs[1], 2.0).squared;
  EXPECT_NEAR(neg_sobolev_distance(ms, fs, 2.0).squared, sum, 1e-15);
}

TEST(Serialization, GridFieldBinaryRoundTrip) {
  const PeriodicGrid g{2, 8, 1.7};
  const GridField f = random_field(g, 21);
  std::stringstream ss;
  write_grid_field(ss, f, "rho");
  const GridField back = read_grid_field(ss);
  EXPECT_EQ(back.grid, g);
  EXPECT_EQ(back.values, f.values);
}
