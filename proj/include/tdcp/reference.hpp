#pragma once

// Reference solutions and error metrics: the closed form of problem 1, a
// Crank-Nicolson finite-difference comparator, and the norm defect / maximum
// pointwise error at the final time.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "tdcp/errors.hpp"
#include "tdcp/lobatto.hpp"
#include "tdcp/mesh.hpp"
#include "tdcp/potential.hpp"

namespace tdcp {

using cvector = std::vector<std::complex<double>>;

/// psi0(x) exp(-i(n + 1/2) t + i t^2) for V = x^2/2 - 2t.
inline std::complex<double> analytic_problem1(double x, double t, int n) {
  const double log_norm =
      -0.5 * (n * std::log(2.0) + std::lgamma(n + 1.0) + 0.5 * std::log(std::numbers::pi));
  const double amp = std::exp(log_norm - 0.5 * x * x) * hermite(n, x);
  return std::polar(amp, -(n + 0.5) * t + t * t);
}

struct GridSolution {
  std::vector<double> x;
  cvector psi;
  double dx = 0.0;
  double dt = 0.0;
  double t = 0.0;
  double initial_norm = 0.0;  // discrete l2 norm, dx * sum |psi|^2
  double final_norm = 0.0;
};

namespace detail {

// Solves the tridiagonal system (sub, diag, sup) x = rhs in place of rhs.
inline void thomas_solve(std::complex<double> sub, std::span<const std::complex<double>> diag,
                         std::complex<double> sup, std::span<std::complex<double>> rhs,
                         std::vector<std::complex<double>>& work) {
  const std::size_t n = diag.size();
  work.resize(n);
  std::complex<double> beta = diag[0];
  if (std::abs(beta) == 0.0) throw NumericalError("Crank-Nicolson: singular tridiagonal system");
  rhs[0] /= beta;
  for (std::size_t i = 1; i < n; ++i) {
    work[i] = sup / beta;
    beta = diag[i] - sub * work[i];
    if (std::abs(beta) == 0.0) throw NumericalError("Crank-Nicolson: singular tridiagonal system");
    rhs[i] = (rhs[i] - sub * rhs[i - 1]) / beta;
  }
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= work[i + 1] * rhs[i + 1];
}

inline double grid_norm(const cvector& psi, double dx) {
  double s = 0.0;
  for (const auto& v : psi) s += std::norm(v);
  return s * dx;
}

}  // namespace detail

/// Crank-Nicolson with the step-midpoint Hamiltonian on a uniform grid with
/// Dirichlet ends.
inline GridSolution crank_nicolson_solve(const ProblemSpec& problem, double dx, double dt, double T) {
  if (!(dx > 0.0) || !(dt > 0.0)) throw ConfigError("crank_nicolson_solve: dx and dt must be positive");
  if (!(T >= 0.0)) throw ConfigError("crank_nicolson_solve: T must be nonnegative");
  const double steps_real = T / dt;
  const double steps = std::round(steps_real);
  if (std::abs(steps_real - steps) > 1e-9 * std::max(1.0, steps)) {
    throw ConfigError("crank_nicolson_solve: T is not a multiple of dt");
  }
  const double cells_real = (problem.x_max - problem.x_min) / dx;
  const auto cells = static_cast<std::size_t>(std::round(cells_real));
  if (cells < 2 || std::abs(cells_real - static_cast<double>(cells)) > 1e-9 * static_cast<double>(cells)) {
    throw ConfigError("crank_nicolson_solve: dx does not divide the domain");
  }

  GridSolution g;
  g.dx = (problem.x_max - problem.x_min) / static_cast<double>(cells);
  g.dt = dt;
  g.x.resize(cells + 1);
  g.psi.resize(cells + 1);
  for (std::size_t i = 0; i <= cells; ++i) {
    g.x[i] = problem.x_min + static_cast<double>(i) * g.dx;
    g.psi[i] = problem.initial.psi0(g.x[i]);
  }
  g.x.back() = problem.x_max;
  g.psi.front() = 0.0;
  g.psi.back() = 0.0;
  g.initial_norm = detail::grid_norm(g.psi, g.dx);

  // Interior unknowns only.
  const std::size_t n = cells - 1;
  const double mu = problem.potential.mass;
  const double kin = 1.0 / (2.0 * mu * g.dx * g.dx);
  const std::complex<double> half_i(0.0, 0.5 * dt);
  const std::complex<double> off = -half_i * kin;  // i dt/2 * (-kin)
  std::vector<std::complex<double>> diag(n), rhs(n), work;
  std::vector<double> h_diag(n);

  const auto count = static_cast<long>(steps);
  for (long m = 0; m < count; ++m) {
    const double t_mid = (static_cast<double>(m) + 0.5) * dt;
    for (std::size_t i = 0; i < n; ++i) {
      h_diag[i] = 2.0 * kin + problem.potential.value(g.x[i + 1], t_mid);
      if (!std::isfinite(h_diag[i])) throw ModelError("potential is not finite on the grid");
    }
    // rhs = (I - i dt/2 H) psi
    for (std::size_t i = 0; i < n; ++i) {
      std::complex<double> hpsi = h_diag[i] * g.psi[i + 1] - kin * (g.psi[i] + g.psi[i + 2]);
      rhs[i] = g.psi[i + 1] - half_i * hpsi;
      diag[i] = 1.0 + half_i * h_diag[i];
    }
    detail::thomas_solve(off, diag, off, rhs, work);
    for (std::size_t i = 0; i < n; ++i) g.psi[i + 1] = rhs[i];
  }
  g.t = steps * dt;
  g.final_norm = detail::grid_norm(g.psi, g.dx);
  return g;
}

/// Signed norm defect: composite classical Lobatto of |approx|^2 minus that of |exact|^2.
inline double err_norm(std::span<const std::complex<double>> approx,
                       std::span<const std::complex<double>> exact, const SpatialMesh& mesh) {
  if (approx.size() != mesh.node_count() || exact.size() != mesh.node_count()) {
    throw ConfigError("err_norm: node data does not match the mesh");
  }
  std::vector<double> a(approx.size()), e(exact.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = std::norm(approx[i]);
    e[i] = std::norm(exact[i]);
  }
  return composite_lobatto<double>(a, mesh) - composite_lobatto<double>(e, mesh);
}

/// Maximum pointwise error over the nodes.
inline double err_abs(std::span<const std::complex<double>> approx,
                      std::span<const std::complex<double>> exact) {
  if (approx.size() != exact.size()) throw ConfigError("err_abs: node sets differ");
  double worst = 0.0;
  for (std::size_t i = 0; i < approx.size(); ++i) worst = std::max(worst, std::abs(approx[i] - exact[i]));
  return worst;
}

struct ErrorReport {
  double err_N = 0.0;
  double err_A = 0.0;
  double wall_time_s = 0.0;
  bool has_reference = false;
  std::vector<std::pair<std::string, std::string>> echo;
};

}  // namespace tdcp
