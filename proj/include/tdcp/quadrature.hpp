#pragma once

// Exponentially fitted 4-point Lobatto rules for products of CP eigenfunctions.
//
// On a step [X - h, X + h] the rule reads
//   h * sum a0_n I(x_n) + h^2 * sum a1_n I'(x_n)
// and is exact for exp(+-mu1 x), exp(+-mu2 x), x exp(+-mu1 x), x exp(+-mu2 x).
// The derivative-free variant keeps only a0 and the four exponentials.
//
// Node symmetry forces a0 even and a1 odd, so the odd exactness conditions hold
// automatically and only a 4x4 (resp. 2x2) system over the even functions
// cosh(z t) and t sinh(z t) / z remains; both are entire in Z = z^2.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tdcp/errors.hpp"
#include "tdcp/lobatto.hpp"
#include "tdcp/mesh.hpp"
#include "tdcp/specfun.hpp"
#include "tdcp/stationary.hpp"

namespace tdcp {

using cdouble = std::complex<double>;

/// Below this max(|z1|, |z2|) the fitted system is replaced by the polynomial
/// limit rule. At 0.3 the two rules differ by 2.6e-11 on exp(0.3 x).
inline constexpr double kEfDegenerateThreshold = 0.3;
/// Same for the derivative-free rule, whose degree-5 fallback is cruder.
inline constexpr double kEfDegenerateThresholdValuesOnly = 0.05;
inline constexpr double kEfConditionLimit = 1e10;
/// Below this |Z1 - Z2| the exactness system is assembled from divided differences.
inline constexpr double kEfConfluentGap = 1.0;

struct EFRule {
  double h = 0.0;      // half-width of the step
  cdouble mu1_sq{};    // squared frequencies; complex for mixed regimes
  cdouble mu2_sq{};
  std::array<double, 4> a0{};
  std::array<double, 4> a1{};
  bool with_derivatives = true;
  bool degenerate = false;
  double condition = 1.0;     // of the scaled even system (1 when degenerate)
  double imag_residue = 0.0;  // largest |Im w| / max |w| before taking real parts

  /// Integral of one step from node data (derivatives ignored without a1).
  template <class T>
  T apply(const T* values, const T* derivatives = nullptr) const {
    T v{};
    for (std::size_t k = 0; k < 4; ++k) v += a0[k] * values[k];
    if (!with_derivatives || derivatives == nullptr) return h * v;
    T d{};
    for (std::size_t k = 0; k < 4; ++k) d += a1[k] * derivatives[k];
    return h * v + h * h * d;
  }
};

/// Polynomial rule the fitted weights tend to as both frequencies vanish:
/// degree 7 with derivatives, degree 5 (classical) without.
inline EFRule polynomial_limit_rule(double h, bool with_derivatives) {
  EFRule r;
  r.h = h;
  r.with_derivatives = with_derivatives;
  r.degenerate = true;
  if (with_derivatives) {
    r.a0 = hermite_lobatto_value_weights();
    r.a1 = hermite_lobatto_derivative_weights();
  } else {
    r.a0 = classical_lobatto_weights();
  }
  return r;
}

/// (mu1^2, mu2^2) for the product of two CP-type solutions with local squared
/// wavenumbers p = Q_u - lambda_u and q = Q_z - lambda_z:
/// mu1 = sqrt(p) + sqrt(q), mu2 = sqrt(p) - sqrt(q).
inline std::pair<cdouble, cdouble> frequency_pair(double p, double q) {
  const cdouble a = std::sqrt(cdouble(p, 0.0));
  const cdouble b = std::sqrt(cdouble(q, 0.0));
  return {(a + b) * (a + b), (a - b) * (a - b)};
}

namespace detail {

inline constexpr double kInner = kLobattoInner;
inline constexpr double kInnerSq = 0.2;

inline std::string describe_pair(cdouble z1_sq, cdouble z2_sq) {
  std::ostringstream os;
  os.precision(6);
  os << "z1^2 = " << z1_sq << ", z2^2 = " << z2_sq;
  return os.str();
}

// 1-norm condition number of a small square matrix.
template <class M>
double condition_1(const M& a) {
  const auto lu = a.fullPivLu();
  if (!lu.isInvertible()) return std::numeric_limits<double>::infinity();
  const auto inv = lu.inverse();
  auto norm1 = [](const auto& m) {
    double best = 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) best = std::max(best, m.col(j).cwiseAbs().sum());
    return best;
  };
  return norm1(a) * norm1(inv);
}

// Taylor coefficients c_k (of Z^k) of the functionals applied to cosh(sqrt(Z) t):
// value at t, derivative at t, and the half-integral over [-1, 1].
inline double inverse_factorial(int n) {
  static const std::array<double, 171> table = [] {
    std::array<double, 171> t{};
    t[0] = 1.0;
    for (int i = 1; i < 171; ++i) t[static_cast<std::size_t>(i)] = t[static_cast<std::size_t>(i - 1)] / i;
    return t;
  }();
  return n < 171 ? table[static_cast<std::size_t>(n)] : 0.0;
}

inline auto value_coefficient(double t) {
  return [t](int k) { return std::pow(t, 2 * k) * inverse_factorial(2 * k); };
}
inline auto slope_coefficient(double t) {
  return [t](int k) { return k == 0 ? 0.0 : std::pow(t, 2 * k - 1) * inverse_factorial(2 * k - 1); };
}
inline auto integral_coefficient() {
  return [](int k) { return inverse_factorial(2 * k + 1); };
}

// Divided differences F[Z1,Z2], F[Z1,Z1,Z2], F[Z1,Z1,Z2,Z2] of F = sum c_k Z^k,
// summed through the complete homogeneous polynomials of the nodes.
template <class Coef>
std::array<cdouble, 3> divided_differences(cdouble Z1, cdouble Z2, Coef c) {
  cdouble p1{1.0, 0.0};  // Z1^j
  cdouble h2{}, h3{}, h4{};
  std::array<cdouble, 3> sum{};
  for (int j = 0; j < 160; ++j) {
    h2 = Z2 * h2 + p1;                               // sum Z1^a Z2^b
    h3 = Z2 * h3 + static_cast<double>(j + 1) * p1;  // sum (a+1) Z1^a Z2^b
    h4 = Z2 * h4 + h3;                               // sum (a+1)(b+1) Z1^a Z2^b
    const cdouble t2 = c(j + 1) * h2, t3 = c(j + 2) * h3, t4 = c(j + 3) * h4;
    sum[0] += t2;
    sum[1] += t3;
    sum[2] += t4;
    p1 *= Z1;
    if (j > 4 && std::abs(t2) <= 1e-18 * std::abs(sum[0]) && std::abs(t3) <= 1e-18 * std::abs(sum[1]) &&
        std::abs(t4) <= 1e-18 * std::abs(sum[2])) {
      break;
    }
  }
  return sum;
}

inline void scale_rows(Eigen::Matrix4cd& a, Eigen::Vector4cd& rhs) {
  for (Eigen::Index i = 0; i < 4; ++i) {
    const double s = a.row(i).cwiseAbs().maxCoeff();
    if (s > 0.0) {
      a.row(i) /= s;
      rhs(i) /= s;
    }
  }
}

}  // namespace detail

/// Fitted rule for squared frequencies (mu1^2, mu2^2) on a step of half-width h.
inline EFRule build_ef_rule(cdouble mu1_sq, cdouble mu2_sq, double h, bool with_derivatives) {
  if (!(h > 0.0)) throw ConfigError("build_ef_rule: half-width must be positive");
  const cdouble Z1 = mu1_sq * (h * h);
  const cdouble Z2 = mu2_sq * (h * h);
  if (!(std::isfinite(Z1.real()) && std::isfinite(Z1.imag()) && std::isfinite(Z2.real()) &&
        std::isfinite(Z2.imag()))) {
    throw NumericalError("build_ef_rule: non-finite frequencies (" + detail::describe_pair(Z1, Z2) + ")");
  }

  EFRule rule = polynomial_limit_rule(h, with_derivatives);
  rule.mu1_sq = mu1_sq;
  rule.mu2_sq = mu2_sq;
  const double zmax = std::sqrt(std::max(std::abs(Z1), std::abs(Z2)));
  if (zmax < (with_derivatives ? kEfDegenerateThreshold : kEfDegenerateThresholdValuesOnly)) return rule;

  const double s = detail::kInner;
  std::array<cdouble, 4> w{};
  // Close frequencies make the two halves of the system nearly equal; the
  // divided-difference form stays regular there.
  const bool confluent = std::abs(Z1 - Z2) < kEfConfluentGap;

  if (with_derivatives) {
    // Unknowns (w0e, w0i, w1e, w1i); a0 = [w0e, w0i, w0i, w0e], a1 = [-w1e, -w1i, w1i, w1e].
    // Row for an even f: [f(1), f(s), f'(1), f'(s)] . w = (1/2) int_{-1}^{1} f.
    Eigen::Matrix4cd a;
    Eigen::Vector4cd rhs;
    auto fill_plain = [&](Eigen::Index rc, cdouble Z) {
      const cdouble Zi = Z * detail::kInnerSq;
      const cdouble x1 = xi(Z), e1 = eta0(Z);
      const cdouble xs = xi(Zi), es = eta0(Zi);
      // cosh(z t)
      a(rc, 0) = x1;
      a(rc, 1) = xs;
      a(rc, 2) = Z * e1;
      a(rc, 3) = Z * s * es;
      rhs(rc) = e1;
      // t sinh(z t) / z
      a(rc + 1, 0) = e1;
      a(rc + 1, 1) = detail::kInnerSq * es;
      a(rc + 1, 2) = e1 + x1;
      a(rc + 1, 3) = s * (es + xs);
      rhs(rc + 1) = eta1(Z);
    };
    fill_plain(0, Z1);
    if (confluent) {
      const auto d_ev1 = detail::divided_differences(Z1, Z2, detail::value_coefficient(1.0));
      const auto d_evs = detail::divided_differences(Z1, Z2, detail::value_coefficient(s));
      const auto d_de1 = detail::divided_differences(Z1, Z2, detail::slope_coefficient(1.0));
      const auto d_des = detail::divided_differences(Z1, Z2, detail::slope_coefficient(s));
      const auto d_int = detail::divided_differences(Z1, Z2, detail::integral_coefficient());
      for (Eigen::Index r = 2; r < 4; ++r) {
        const std::size_t k = static_cast<std::size_t>(r - 1);  // third and fourth difference
        a(r, 0) = d_ev1[k];
        a(r, 1) = d_evs[k];
        a(r, 2) = d_de1[k];
        a(r, 3) = d_des[k];
        rhs(r) = d_int[k];
      }
    } else {
      fill_plain(2, Z2);
    }
    detail::scale_rows(a, rhs);
    rule.condition = detail::condition_1(a);
    if (!(rule.condition <= kEfConditionLimit)) {
      rule.condition = 1.0;
      return rule;
    }
    const Eigen::Vector4cd sol = a.partialPivLu().solve(rhs);
    for (Eigen::Index i = 0; i < 4; ++i) w[static_cast<std::size_t>(i)] = sol(i);
  } else {
    Eigen::Matrix2cd a;
    Eigen::Vector2cd rhs;
    a(0, 0) = xi(Z1);
    a(0, 1) = xi(Z1 * detail::kInnerSq);
    rhs(0) = eta0(Z1);
    if (confluent) {
      a(1, 0) = detail::divided_differences(Z1, Z2, detail::value_coefficient(1.0))[0];
      a(1, 1) = detail::divided_differences(Z1, Z2, detail::value_coefficient(s))[0];
      rhs(1) = detail::divided_differences(Z1, Z2, detail::integral_coefficient())[0];
    } else {
      a(1, 0) = xi(Z2);
      a(1, 1) = xi(Z2 * detail::kInnerSq);
      rhs(1) = eta0(Z2);
    }
    for (Eigen::Index j = 0; j < 2; ++j) {
      const double sc = a.row(j).cwiseAbs().maxCoeff();
      a.row(j) /= sc;
      rhs(j) /= sc;
    }
    rule.condition = detail::condition_1(a);
    if (!(rule.condition <= kEfConditionLimit)) {
      rule.condition = 1.0;
      return rule;
    }
    const Eigen::Vector2cd sol = a.partialPivLu().solve(rhs);
    w[0] = sol(0);
    w[1] = sol(1);
  }

  double wmax = 0.0, imax = 0.0;
  for (const auto& v : w) {
    if (!(std::isfinite(v.real()) && std::isfinite(v.imag()))) {
      throw NumericalError("build_ef_rule: singular system (" + detail::describe_pair(Z1, Z2) + ")");
    }
    wmax = std::max(wmax, std::abs(v.real()));
    imax = std::max(imax, std::abs(v.imag()));
  }
  rule.imag_residue = wmax > 0.0 ? imax / wmax : 0.0;
  rule.degenerate = false;
  rule.a0 = {w[0].real(), w[1].real(), w[1].real(), w[0].real()};
  if (with_derivatives) {
    rule.a1 = {-w[2].real(), -w[3].real(), w[3].real(), w[2].real()};
  } else {
    rule.a1 = {};
  }
  return rule;
}

inline EFRule build_ef_rule(double mu1_sq, double mu2_sq, double h, bool with_derivatives) {
  return build_ef_rule(cdouble(mu1_sq, 0.0), cdouble(mu2_sq, 0.0), h, with_derivatives);
}

/// Rule for the product of eigenpairs with energies eu, ez living on steps
/// with reference potentials ru, rz.
inline EFRule pair_rule(const StepReference& ru, double eu, const StepReference& rz, double ez,
                        double mass, double h, bool with_derivatives) {
  const auto [m1, m2] =
      frequency_pair(2.0 * mass * (ru.mean - eu), 2.0 * mass * (rz.mean - ez));
  return build_ef_rule(m1, m2, h, with_derivatives);
}

/// Fitted rules for one pair of eigenpairs, one per mesh step.
inline std::vector<EFRule> pair_rules(const Eigenpair& u, const Eigenpair& z,
                                      std::span<const StepReference> refs_u,
                                      std::span<const StepReference> refs_z, const SpatialMesh& mesh,
                                      double mass, bool with_derivatives) {
  if (refs_u.size() != mesh.n_steps || refs_z.size() != mesh.n_steps) {
    throw ConfigError("pair_rules: references do not match the mesh");
  }
  std::vector<EFRule> rules;
  rules.reserve(mesh.n_steps);
  const double h = 0.5 * mesh.dx;
  for (std::size_t s = 0; s < mesh.n_steps; ++s) {
    try {
      rules.push_back(pair_rule(refs_u[s], u.energy, refs_z[s], z.energy, mass, h, with_derivatives));
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at step " + std::to_string(s));
    }
  }
  return rules;
}

/// Composite integral from node data using per-step rules.
template <class T>
T integrate_with_rules(std::span<const EFRule> rules, std::span<const T> values,
                       std::span<const T> derivatives) {
  if (values.size() != 3 * rules.size() + 1) {
    throw ConfigError("integrate_with_rules: node data does not match the rules");
  }
  const bool use_d = !derivatives.empty();
  T total{};
  for (std::size_t s = 0; s < rules.size(); ++s) {
    total += rules[s].apply(values.data() + 3 * s, use_d ? derivatives.data() + 3 * s : nullptr);
  }
  return total;
}

/// Integral of u z over the mesh (overlap of two eigenfunctions).
inline double integrate_product(const Eigenpair& u, const Eigenpair& z,
                                std::span<const StepReference> refs_u,
                                std::span<const StepReference> refs_z, const SpatialMesh& mesh,
                                double mass) {
  const auto rules = pair_rules(u, z, refs_u, refs_z, mesh, mass, true);
  const std::size_t n = mesh.node_count();
  if (u.values.size() != n || z.values.size() != n) {
    throw ConfigError("integrate_product: eigenpairs do not match the mesh");
  }
  std::vector<double> v(n), d(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = u.values[i] * z.values[i];
    d[i] = u.derivatives[i] * z.values[i] + u.values[i] * z.derivatives[i];
  }
  return integrate_with_rules<double>(rules, v, d);
}

/// Integral of f u z from node values of f (and f' when given).
inline double integrate_weighted_product(std::span<const double> f, std::span<const double> df,
                                         const Eigenpair& u, const Eigenpair& z,
                                         std::span<const StepReference> refs_u,
                                         std::span<const StepReference> refs_z,
                                         const SpatialMesh& mesh, double mass) {
  const std::size_t n = mesh.node_count();
  if (f.size() != n || (!df.empty() && df.size() != n)) {
    throw ConfigError("integrate_weighted_product: weight data does not match the mesh");
  }
  const bool with_d = !df.empty();
  const auto rules = pair_rules(u, z, refs_u, refs_z, mesh, mass, with_d);
  std::vector<double> v(n), d(with_d ? n : 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double uz = u.values[i] * z.values[i];
    v[i] = f[i] * uz;
    if (with_d) {
      d[i] = df[i] * uz + f[i] * (u.derivatives[i] * z.values[i] + u.values[i] * z.derivatives[i]);
    }
  }
  return integrate_with_rules<double>(rules, v, d);
}

/// Integral of f u z with f given as a function (f' optional).
inline double integrate_weighted_product(const std::function<double(double)>& f,
                                         const std::function<double(double)>& df,
                                         const Eigenpair& u, const Eigenpair& z,
                                         std::span<const StepReference> refs_u,
                                         std::span<const StepReference> refs_z,
                                         const SpatialMesh& mesh, double mass) {
  std::vector<double> fv(mesh.node_count()), dv;
  for (std::size_t i = 0; i < fv.size(); ++i) fv[i] = f(mesh.nodes[i]);
  if (df) {
    dv.resize(mesh.node_count());
    for (std::size_t i = 0; i < dv.size(); ++i) dv[i] = df(mesh.nodes[i]);
  }
  return integrate_weighted_product(fv, dv, u, z, refs_u, refs_z, mesh, mass);
}

}  // namespace tdcp
