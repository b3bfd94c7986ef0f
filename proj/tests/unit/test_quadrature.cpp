#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "tdcp/errors.hpp"
#include "tdcp/lobatto.hpp"
#include "tdcp/mesh.hpp"
#include "tdcp/potential.hpp"
#include "tdcp/quadrature.hpp"
#include "tdcp/stationary.hpp"

using namespace tdcp;
using cd = std::complex<double>;

namespace {

constexpr double kPi = std::numbers::pi;

// Applies a rule on [-h, h] to f given with its derivative.
template <class F, class DF>
cd apply_rule(const EFRule& r, F f, DF df) {
  cd v[4], d[4];
  for (std::size_t k = 0; k < 4; ++k) {
    const double x = r.h * kLobattoNodes[k];
    v[k] = f(x);
    d[k] = df(x);
  }
  return r.apply(v, d);
}

// Closed forms on [-h, h] for exp(m x) and x exp(m x), m complex and nonzero.
cd int_exp(cd m, double h) { return (std::exp(m * h) - std::exp(-m * h)) / m; }
cd int_xexp(cd m, double h) {
  auto prim = [&](double x) { return std::exp(m * x) * (x / m - 1.0 / (m * m)); };
  return prim(h) - prim(-h);
}

// Largest relative error of the rule on its fitted functions, measured against
// max(h, |integral|) so that near-vanishing oscillatory integrals do not
// inflate the figure.
double exactness_residual(const EFRule& r) {
  double worst = 0.0;
  for (cd mu_sq : {r.mu1_sq, r.mu2_sq}) {
    const cd mu = std::sqrt(mu_sq);
    for (double sign : {1.0, -1.0}) {
      const cd m = sign * mu;
      const cd e = int_exp(m, r.h);
      const cd q = apply_rule(r, [&](double x) { return std::exp(m * x); },
                              [&](double x) { return m * std::exp(m * x); });
      worst = std::max(worst, std::abs(q - e) / std::max(r.h, std::abs(e)));
      if (!r.with_derivatives) continue;
      const cd ex = int_xexp(m, r.h);
      const cd qx = apply_rule(r, [&](double x) { return x * std::exp(m * x); },
                               [&](double x) { return (1.0 + m * x) * std::exp(m * x); });
      worst = std::max(worst, std::abs(qx - ex) / std::max(r.h, std::abs(ex)));
    }
  }
  return worst;
}

StaticPotential harmonic() {
  return static_potential([](double x) { return 0.5 * x * x; }, [](double x) { return x; });
}

const Basis& harmonic_basis() {
  static const Basis b = compute_basis(harmonic(), build_mesh(-10.0, 10.0, 200), 6, 1.0);
  return b;
}

}  // namespace

TEST(EFRule, ZeroFrequenciesGiveTheDegreeSevenRule) {
  const EFRule r = build_ef_rule(0.0, 0.0, 1.0, true);
  EXPECT_TRUE(r.degenerate);
  const cd v = apply_rule(r, [](double x) { return std::pow(x, 6); }, [](double x) { return 6 * std::pow(x, 5); });
  EXPECT_NEAR(v.real(), 2.0 / 7.0, 1e-12);
  const auto a0 = hermite_lobatto_value_weights();
  const auto a1 = hermite_lobatto_derivative_weights();
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_DOUBLE_EQ(r.a0[k], a0[k]);
    EXPECT_DOUBLE_EQ(r.a1[k], a1[k]);
  }
}

TEST(EFRule, IntegratesFittedExponential) {
  const EFRule r = build_ef_rule(4.0, 0.0, 1.0, true);
  EXPECT_FALSE(r.degenerate);
  const cd v = apply_rule(r, [](double x) { return std::exp(2 * x); }, [](double x) { return 2 * std::exp(2 * x); });
  const double exact = (std::exp(2.0) - std::exp(-2.0)) / 2.0;
  EXPECT_NEAR(v.real() / exact, 1.0, 1e-12);
}

TEST(EFRule, DerivativeFreeOscillatory) {
  const EFRule r = build_ef_rule(-kPi * kPi, -kPi * kPi, 1.0, false);
  EXPECT_FALSE(r.degenerate);
  cd v[4];
  for (std::size_t k = 0; k < 4; ++k) v[k] = std::cos(kPi * kLobattoNodes[k]);
  EXPECT_NEAR(r.apply(v).real(), 0.0, 1e-12);
  EXPECT_EQ(r.a1, (std::array<double, 4>{}));
}

TEST(EFRule, RandomFrequencyPairs) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> dist(-30.0, 30.0);
  for (int s = 0; s < 100; ++s) {
    const double Z1 = dist(rng), Z2 = dist(rng);
    for (bool with_d : {true, false}) {
      const EFRule r = build_ef_rule(Z1, Z2, 1.0, with_d);
      ASSERT_FALSE(r.degenerate) << Z1 << ", " << Z2;
      EXPECT_LE(exactness_residual(r), 1e-11) << "Z = (" << Z1 << ", " << Z2 << ") derivatives " << with_d;
      EXPECT_LE(r.imag_residue, 1e-12);
    }
  }
}

TEST(EFRule, ScalesWithHalfWidth) {
  for (double h : {0.05, 0.37, 2.0}) {
    const EFRule r = build_ef_rule(7.0 / (h * h), -11.0 / (h * h), h, true);
    EXPECT_LE(exactness_residual(r), 1e-11) << "h = " << h;
  }
}

// Mixed regimes enter as complex squared frequencies.
TEST(EFRule, ComplexFrequencies) {
  const EFRule r = build_ef_rule(cd(3.0, 4.0), cd(3.0, -4.0), 1.0, true);
  EXPECT_LE(exactness_residual(r), 1e-11);
  EXPECT_LE(r.imag_residue, 1e-12);
}

TEST(EFRule, NearlyEqualFrequencies) {
  for (double gap : {0.0, 1e-12, 1e-7, 1e-3, 0.5, 0.99, 1.01}) {
    for (double Z : {-20.0, -2.0, 1.5, 25.0}) {
      for (bool with_d : {true, false}) {
        const EFRule r = build_ef_rule(Z, Z + gap, 1.0, with_d);
        EXPECT_LE(exactness_residual(r), 1e-11) << "Z = " << Z << " gap " << gap;
      }
    }
  }
}

// The fitted weights tend to the polynomial ones as both frequencies vanish.
TEST(EFRule, PolynomialLimit) {
  const auto a0 = hermite_lobatto_value_weights();
  double prev = std::numeric_limits<double>::infinity();
  for (double Z : {4.0, 1.0, 0.25}) {
    const EFRule r = build_ef_rule(Z, -Z, 1.0, true);
    ASSERT_FALSE(r.degenerate);
    double dev = 0.0;
    for (std::size_t k = 0; k < 4; ++k) dev = std::max(dev, std::abs(r.a0[k] - a0[k]));
    EXPECT_LT(dev, prev);
    prev = dev;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(EFRule, ContinuousAtDegeneracySwitch) {
  for (bool with_d : {true, false}) {
    const double z = with_d ? kEfDegenerateThreshold : kEfDegenerateThresholdValuesOnly;
    const double below = 0.98 * z;
    const double above = 1.0001 * z;
    const EFRule fallback = build_ef_rule(below * below, 0.0, 1.0, with_d);
    const EFRule fitted = build_ef_rule(above * above, 0.0, 1.0, with_d);
    ASSERT_TRUE(fallback.degenerate);
    ASSERT_FALSE(fitted.degenerate);
    auto f = [&](double x) { return std::exp(below * x); };
    auto df = [&](double x) { return below * std::exp(below * x); };
    const cd a = apply_rule(fallback, f, df), b = apply_rule(fitted, f, df);
    EXPECT_LE(std::abs(a - b) / std::abs(a), 1e-10) << "derivatives " << with_d;
  }
}

TEST(EFRule, RejectsBadInput) {
  EXPECT_THROW(build_ef_rule(1.0, 1.0, 0.0, true), ConfigError);
  EXPECT_THROW(build_ef_rule(std::nan(""), 1.0, 1.0, true), NumericalError);
  EXPECT_THROW(build_ef_rule(std::numeric_limits<double>::infinity(), 1.0, 1.0, false), NumericalError);
}

// Order 8 on smooth data that lies outside the fitted space.
TEST(CompositeEF, EighthOrderConvergence) {
  auto f = [](double x) { return std::exp(std::sin(x)); };
  auto df = [](double x) { return std::cos(x) * std::exp(std::sin(x)); };
  const double exact = 4.2365311572210098;  // int_0^2 exp(sin x) dx
  double prev = 0.0;
  for (std::size_t n : {2u, 4u, 8u}) {
    const SpatialMesh m = build_mesh(0.0, 2.0, n);
    const double h = 0.5 * m.dx;
    std::vector<EFRule> rules(n, build_ef_rule(4.0, -9.0, h, true));
    std::vector<double> v(m.node_count()), d(m.node_count());
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = f(m.nodes[i]);
      d[i] = df(m.nodes[i]);
    }
    const double err = std::abs(integrate_with_rules<double>(rules, v, d) - exact);
    if (prev > 0.0) {
      EXPECT_GE(prev / err, 64.0) << "n = " << n;
    }
    prev = err;
  }
}

TEST(CompositeEF, RejectsMismatchedData) {
  std::vector<EFRule> rules(3, polynomial_limit_rule(0.5, true));
  std::vector<double> v(9);
  EXPECT_THROW(integrate_with_rules<double>(rules, v, {}), ConfigError);
}

TEST(IntegrateProduct, Orthonormality) {
  const Basis& b = harmonic_basis();
  for (std::size_t n = 0; n < b.size(); ++n) {
    for (std::size_t m = 0; m < b.size(); ++m) {
      const double v = integrate_product(b[n], b[m], b.mesh_refs, b.mesh_refs, b.mesh, b.mass);
      EXPECT_NEAR(v, n == m ? 1.0 : 0.0, 1e-9) << n << ", " << m;
    }
  }
}

TEST(IntegrateProduct, IdenticalPotentialsGiveIdentity) {
  const Basis& a = harmonic_basis();
  const Basis b = compute_basis(harmonic(), a.mesh, 6, 1.0, StationaryOptions{4, 24, 1e-12});
  for (std::size_t n = 0; n < a.size(); ++n) {
    for (std::size_t m = 0; m < b.size(); ++m) {
      const double v = integrate_product(b[n], a[m], b.mesh_refs, a.mesh_refs, a.mesh, a.mass);
      EXPECT_NEAR(v, n == m ? 1.0 : 0.0, 1e-9) << n << ", " << m;
    }
  }
}

TEST(IntegrateWeightedProduct, ZeroWeight) {
  const Basis& b = harmonic_basis();
  std::vector<double> zero(b.mesh.node_count(), 0.0);
  EXPECT_EQ(integrate_weighted_product(zero, zero, b[1], b[3], b.mesh_refs, b.mesh_refs, b.mesh, b.mass), 0.0);
  EXPECT_EQ(integrate_weighted_product(zero, {}, b[2], b[2], b.mesh_refs, b.mesh_refs, b.mesh, b.mass), 0.0);
}

TEST(IntegrateWeightedProduct, ConstantWeight) {
  const Basis& b = harmonic_basis();
  const double c = -3.25;
  auto f = [c](double) { return c; };
  auto df = [](double) { return 0.0; };
  for (std::size_t n = 0; n < b.size(); ++n) {
    for (std::size_t m = n; m < b.size(); ++m) {
      const double expected = n == m ? c : 0.0;
      EXPECT_NEAR(integrate_weighted_product(f, df, b[n], b[m], b.mesh_refs, b.mesh_refs, b.mesh, b.mass),
                  expected, 1e-9 * std::abs(c));
      // without derivative data the derivative-free rule is used
      EXPECT_NEAR(integrate_weighted_product(f, {}, b[n], b[m], b.mesh_refs, b.mesh_refs, b.mesh, b.mass),
                  expected, 1e-7 * std::abs(c));
    }
  }
}

TEST(IntegrateWeightedProduct, OddWeightVanishes) {
  const Basis& b = harmonic_basis();
  auto f = [](double x) { return x; };
  auto df = [](double) { return 1.0; };
  EXPECT_NEAR(integrate_weighted_product(f, df, b[0], b[0], b.mesh_refs, b.mesh_refs, b.mesh, b.mass), 0.0, 1e-9);
  // <0|x|1> = 1/sqrt(2) for the oscillator, up to the sign convention of y_2
  const double x01 = integrate_weighted_product(f, df, b[0], b[1], b.mesh_refs, b.mesh_refs, b.mesh, b.mass);
  EXPECT_NEAR(std::abs(x01), 1.0 / std::numbers::sqrt2, 1e-9);
}

TEST(IntegrateWeightedProduct, RejectsMismatchedWeight) {
  const Basis& b = harmonic_basis();
  std::vector<double> shorter(b.mesh.node_count() - 1, 1.0);
  EXPECT_THROW(
      integrate_weighted_product(shorter, {}, b[0], b[0], b.mesh_refs, b.mesh_refs, b.mesh, b.mass),
      ConfigError);
}
