#pragma once

// Time-dependent potentials V(x, t), their sector averages, initial states and
// the three built-in benchmark problems.

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tdcp/errors.hpp"
#include "tdcp/lobatto.hpp"
#include "tdcp/mesh.hpp"

namespace tdcp {

using RealFunction = std::function<double(double)>;
using SpaceTimeFunction = std::function<double(double, double)>;
using ComplexFunction = std::function<std::complex<double>(double)>;

/// One product term g(t) * w(x) of a separable potential.
struct SeparableTerm {
  RealFunction g;
  RealFunction w;
  RealFunction w_prime;
};

/// V(x, t) = V_s(x) + sum_j g_j(t) w_j(x).
struct SeparableForm {
  RealFunction static_value;
  RealFunction static_derivative;
  std::vector<SeparableTerm> terms;

  double evaluate(double x, double t) const {
    double v = static_value(x);
    for (const auto& term : terms) v += term.g(t) * term.w(x);
    return v;
  }
};

struct PotentialModel {
  double mass = 1.0;
  SpaceTimeFunction value;
  SpaceTimeFunction x_derivative;  // may be empty
  std::optional<SeparableForm> separable;

  double operator()(double x, double t) const { return value(x, t); }
  bool has_derivative() const noexcept { return static_cast<bool>(x_derivative); }
};

/// A time-independent potential V(x) with optional derivative.
struct StaticPotential {
  RealFunction value;
  RealFunction derivative;  // may be empty

  double operator()(double x) const { return value(x); }
  bool has_derivative() const noexcept { return static_cast<bool>(derivative); }
};

struct InitialState {
  ComplexFunction psi0;
  ComplexFunction psi0_derivative;  // may be empty
  bool normalized = true;
};

struct ProblemSpec {
  std::string label;
  PotentialModel potential;
  InitialState initial;
  double x_min = 0.0;
  double x_max = 0.0;
  std::function<std::complex<double>(double, double)> exact;  // may be empty
  double time_unit = 1.0;
  std::vector<std::pair<std::string, double>> parameters;
};

/// Potential frozen at the sector midpoint.
inline StaticPotential sector_average(const PotentialModel& model, double t_left, double t_right) {
  if (!(t_left < t_right)) throw ConfigError("sector_average: need t_left < t_right");
  const double t_mid = 0.5 * (t_left + t_right);
  StaticPotential avg;
  avg.value = [value = model.value, t_mid](double x) { return value(x, t_mid); };
  if (model.has_derivative()) {
    avg.derivative = [deriv = model.x_derivative, t_mid](double x) { return deriv(x, t_mid); };
  }
  return avg;
}

inline StaticPotential static_potential(RealFunction value, RealFunction derivative = {}) {
  return StaticPotential{std::move(value), std::move(derivative)};
}

/// Physicists' Hermite polynomial H_n.
inline double hermite(int n, double x) {
  if (n < 0) throw std::invalid_argument("hermite: negative degree");
  double prev = 1.0;
  if (n == 0) return prev;
  double cur = 2.0 * x;
  for (int k = 1; k < n; ++k) {
    const double next = 2.0 * x * cur - 2.0 * k * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

/// L2 norm squared of an initial state by the composite degree-7 rule
/// (classical rule when no derivative is provided).
inline double initial_norm(const InitialState& state, double x_min, double x_max,
                           std::size_t n_steps = 4000) {
  const SpatialMesh mesh = build_mesh(x_min, x_max, n_steps);
  std::vector<double> dens(mesh.node_count());
  for (std::size_t i = 0; i < dens.size(); ++i) dens[i] = std::norm(state.psi0(mesh.nodes[i]));
  if (!state.psi0_derivative) return composite_lobatto<double>(dens, mesh);
  std::vector<double> ddens(mesh.node_count());
  for (std::size_t i = 0; i < dens.size(); ++i) {
    const auto p = state.psi0(mesh.nodes[i]);
    const auto dp = state.psi0_derivative(mesh.nodes[i]);
    ddens[i] = 2.0 * std::real(std::conj(p) * dp);
  }
  return composite_hermite_lobatto<double>(dens, ddens, mesh);
}

/// V(x,t) = x^2/2 - 2t with a harmonic-oscillator eigenstate of degree n.
inline ProblemSpec problem1(int n) {
  if (n < 0) throw ConfigError("problem1: n must be nonnegative");
  ProblemSpec p;
  p.label = "problem1:" + std::to_string(n);
  p.x_min = -10.0;
  p.x_max = 10.0;

  p.potential.mass = 1.0;
  p.potential.value = [](double x, double t) { return 0.5 * x * x - 2.0 * t; };
  p.potential.x_derivative = [](double x, double) { return x; };
  p.potential.separable = SeparableForm{
      [](double x) { return 0.5 * x * x; },
      [](double x) { return x; },
      {SeparableTerm{[](double t) { return -2.0 * t; }, [](double) { return 1.0; },
                     [](double) { return 0.0; }}}};

  // (2^n n! sqrt(pi))^(-1/2), in log form to stay finite for large n.
  const double log_norm =
      -0.5 * (n * std::log(2.0) + std::lgamma(n + 1.0) + 0.5 * std::log(std::numbers::pi));
  const double norm = std::exp(log_norm);
  p.initial.psi0 = [n, norm](double x) {
    return std::complex<double>(norm * std::exp(-0.5 * x * x) * hermite(n, x), 0.0);
  };
  p.initial.psi0_derivative = [n, norm](double x) {
    const double dh = n > 0 ? 2.0 * n * hermite(n - 1, x) : 0.0;
    return std::complex<double>(norm * std::exp(-0.5 * x * x) * (dh - x * hermite(n, x)), 0.0);
  };
  p.exact = [psi0 = p.initial.psi0, n](double x, double t) {
    return psi0(x) * std::exp(std::complex<double>(0.0, -(n + 0.5) * t + t * t));
  };
  p.parameters = {{"n", n}, {"mu", 1.0}};
  return p;
}

inline double problem2_omega_squared(double t) { return 4.0 - 3.0 * std::exp(-t); }

/// Harmonic oscillator with omega^2(t) = 4 - 3 exp(-t), coherent initial state.
inline ProblemSpec problem2() {
  ProblemSpec p;
  p.label = "problem2";
  p.x_min = -10.0;
  p.x_max = 10.0;
  p.potential.mass = 1.0;
  p.potential.value = [](double x, double t) { return 0.5 * problem2_omega_squared(t) * x * x; };
  p.potential.x_derivative = [](double x, double t) { return problem2_omega_squared(t) * x; };
  p.potential.separable = SeparableForm{
      [](double) { return 0.0; },
      [](double) { return 0.0; },
      {SeparableTerm{[](double t) { return 0.5 * problem2_omega_squared(t); },
                     [](double x) { return x * x; }, [](double x) { return 2.0 * x; }}}};
  const double c = std::pow(std::numbers::pi, -0.25);
  p.initial.psi0 = [c](double x) { return std::complex<double>(c * std::exp(-0.5 * x * x), 0.0); };
  p.initial.psi0_derivative = [c](double x) {
    return std::complex<double>(-x * c * std::exp(-0.5 * x * x), 0.0);
  };
  p.parameters = {{"mu", 1.0}};
  return p;
}

/// Parameters of the driven Morse oscillator (HF molecule, atomic units).
struct MorseLaserParameters {
  double mass = 1745.0;
  double depth = 0.2251;      // D
  double alpha = 1.1741;
  double amplitude = 0.011025;  // A
  double frequency = 0.01787;   // laser omega
  double x_min = -1.0;
  double x_max = 4.32;

  double omega0() const { return alpha * std::sqrt(2.0 * depth / mass); }
  double rho() const { return 2.0 * depth / omega0(); }
  double period() const { return 2.0 * std::numbers::pi / frequency; }
  /// Bound-state energy of level n (1-based) on the full line.
  double morse_level(int n) const {
    const double w0 = omega0();
    const double v = n - 0.5;
    return w0 * v - w0 * w0 * v * v / (4.0 * depth);
  }
};

/// Reference value of the ground-state normalization constant used as a cross-check.
inline constexpr double kMorseSigmaReference = 0.2411580885e-10;

/// Morse oscillator in a laser field: V = D(1 - e^{-alpha x})^2 + A cos(omega t) x.
///
/// The initial state is exp(-(rho - 1/2) alpha x) exp(-rho e^{-alpha x}) / sigma,
/// with sigma the L2 norm of the unnormalized function on the domain.
inline ProblemSpec problem3(const MorseLaserParameters& prm = {}) {
  ProblemSpec p;
  p.label = "problem3";
  p.x_min = prm.x_min;
  p.x_max = prm.x_max;
  p.time_unit = prm.period();

  const double D = prm.depth, a = prm.alpha, A = prm.amplitude, w = prm.frequency;
  auto morse = [D, a](double x) {
    const double e = 1.0 - std::exp(-a * x);
    return D * e * e;
  };
  auto morse_prime = [D, a](double x) {
    const double ex = std::exp(-a * x);
    return 2.0 * D * a * ex * (1.0 - ex);
  };
  p.potential.mass = prm.mass;
  p.potential.value = [=](double x, double t) { return morse(x) + A * std::cos(w * t) * x; };
  p.potential.x_derivative = [=](double x, double t) { return morse_prime(x) + A * std::cos(w * t); };
  p.potential.separable = SeparableForm{
      morse, morse_prime,
      {SeparableTerm{[A, w](double t) { return A * std::cos(w * t); }, [](double x) { return x; },
                     [](double) { return 1.0; }}}};

  const double rho = prm.rho();
  auto raw = [rho, a](double x) { return std::exp(-(rho - 0.5) * a * x - rho * std::exp(-a * x)); };
  auto raw_prime = [rho, a, raw](double x) {
    return (-(rho - 0.5) * a + rho * a * std::exp(-a * x)) * raw(x);
  };
  InitialState unnormalized{[raw](double x) { return std::complex<double>(raw(x), 0.0); },
                            [raw_prime](double x) { return std::complex<double>(raw_prime(x), 0.0); },
                            false};
  const double sigma = std::sqrt(initial_norm(unnormalized, p.x_min, p.x_max, 8000));
  p.initial.psi0 = [raw, sigma](double x) { return std::complex<double>(raw(x) / sigma, 0.0); };
  p.initial.psi0_derivative = [raw_prime, sigma](double x) {
    return std::complex<double>(raw_prime(x) / sigma, 0.0);
  };

  p.parameters = {{"mu", prm.mass},     {"D", D},           {"alpha", a},
                  {"A", A},             {"omega", w},       {"omega0", prm.omega0()},
                  {"rho", rho},         {"sigma", sigma},   {"tau", prm.period()}};
  return p;
}

/// Built-in problem by name: "problem1:n", "problem2", "problem3".
inline ProblemSpec problem_by_name(std::string_view name) {
  if (name == "problem2") return problem2();
  if (name == "problem3") return problem3();
  if (name.starts_with("problem1")) {
    int n = 0;
    if (name.size() > 8) {
      if (name[8] != ':') throw ConfigError("unknown problem '" + std::string(name) + "'");
      try {
        std::size_t used = 0;
        const std::string digits(name.substr(9));
        n = std::stoi(digits, &used);
        if (used != digits.size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw ConfigError("problem1: cannot parse degree in '" + std::string(name) + "'");
      }
    }
    return problem1(n);
  }
  throw ConfigError("unknown problem '" + std::string(name) + "'");
}

}  // namespace tdcp
