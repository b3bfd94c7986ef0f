#pragma once

// Coefficient propagation inside a sector for
//
//   i dc/dt = H(t) c,   H(t) = diag(E_n) + dV(t).
//
// Order 2 freezes H at the substep midpoint. Order 4 fits H linearly in time,
// H(t_a + d) ~ H0 + H1 h P1*(d / h), diagonalizes H0 = D Lambda D^T and adds the
// first modified-Neumann term N1 in the eigenframe of H0.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <string>
#include <tuple>
#include <vector>

#include "tdcp/errors.hpp"
#include "tdcp/numerics.hpp"
#include "tdcp/sector.hpp"

namespace tdcp {

using Eigen::MatrixXcd;
using Eigen::VectorXd;

struct PropagatorConfig {
  int order = 4;
  double dt = 0.0;
  bool record_norms = true;
};

struct SubstepOperators {
  double h = 0.0;
  MatrixXd H0;
  MatrixXd H1;
  MatrixXd D;
  VectorXd lambda;
  MatrixXd H1D;  // D^T H1 D
};

struct SectorPropagation {
  CoefficientState state;
  std::vector<double> norms;  // after each substep
};

/// H0, H1 from 2-point Gauss samples of H(t) on [t_a, t_b].
inline std::pair<MatrixXd, MatrixXd> legendre_fit(const TimeSector& sector, double t_a, double t_b) {
  const double h = t_b - t_a;
  if (!(h > 0.0)) throw ConfigError("legendre_fit: need t_a < t_b");
  const double off = h / (2.0 * std::numbers::sqrt3);
  const double t1 = t_a + 0.5 * h - off;
  const double t2 = t_a + 0.5 * h + off;
  const MatrixXd d1 = delta_v(sector, t1);
  const MatrixXd d2 = delta_v(sector, t2);
  MatrixXd h0 = 0.5 * (d1 + d2);
  const auto e = sector.basis.energies();
  for (std::size_t n = 0; n < e.size(); ++n) h0(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) += e[n];
  MatrixXd h1 = (std::numbers::sqrt3 / (2.0 * h)) * (d2 - d1);
  return {std::move(h0), std::move(h1)};
}

inline void diagonalize(SubstepOperators& ops) {
  const SymmetricEigen eig = jacobi_eigen(ops.H0);
  ops.D = eig.vectors;
  ops.lambda = eig.values;
  ops.H1D = ops.D.transpose() * ops.H1 * ops.D;
}

inline SubstepOperators substep_operators(const TimeSector& sector, double t_a, double t_b, int order) {
  SubstepOperators ops;
  ops.h = t_b - t_a;
  if (order == 2) {
    ops.H0 = delta_v(sector, 0.5 * (t_a + t_b));
    const auto e = sector.basis.energies();
    for (std::size_t n = 0; n < e.size(); ++n) ops.H0(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) += e[n];
    ops.H1 = MatrixXd::Zero(ops.H0.rows(), ops.H0.cols());
  } else if (order == 4) {
    std::tie(ops.H0, ops.H1) = legendre_fit(sector, t_a, t_b);
  } else {
    throw ConfigError("propagator: order must be 2 or 4");
  }
  diagonalize(ops);
  return ops;
}

namespace detail {

// h^2 * sum_{m>=3} (m - 2)/m! x^(m-2), the small-x form of
// [(x + 2) + (x - 2) e^x] / Delta^2 with x = h Delta.
inline std::complex<double> n1_kernel_series(std::complex<double> x, double h) {
  std::complex<double> sum{};
  std::complex<double> xp = x;  // x^(m-2)
  double inv_fact = 1.0 / 6.0;  // 1/m!
  for (int m = 3; m < 40; ++m) {
    const std::complex<double> term = static_cast<double>(m - 2) * inv_fact * xp;
    sum += term;
    if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
    xp *= x;
    inv_fact /= static_cast<double>(m + 1);
  }
  return h * h * sum;
}

}  // namespace detail

/// Scalar kernel int_0^h (2d - h) e^{d Delta} dd for Delta = -i(lambda_j - lambda_i).
inline std::complex<double> n1_kernel(double lambda_i, double lambda_j, double h) {
  const std::complex<double> delta(0.0, -(lambda_j - lambda_i));
  const std::complex<double> x = h * delta;
  if (std::abs(x) < 1.0) return detail::n1_kernel_series(x, h);
  return ((x + 2.0) + (x - 2.0) * std::exp(x)) / (delta * delta);
}

/// N1_ij = kernel(Delta_ji) (A1^D)_ij with A1^D = -i H1^D.
inline MatrixXcd neumann_n1(const VectorXd& lambda, const MatrixXd& h1d, double h) {
  const Eigen::Index n = lambda.size();
  if (h1d.rows() != n || h1d.cols() != n) throw ConfigError("neumann_n1: dimension mismatch");
  MatrixXcd out(n, n);
  const std::complex<double> minus_i(0.0, -1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      out(i, j) = i == j ? std::complex<double>{} : n1_kernel(lambda(i), lambda(j), h) * (minus_i * h1d(i, j));
    }
  }
  return out;
}

inline void check_start(const CoefficientState& c, double t_a, const char* who) {
  if (std::abs(c.t - t_a) > 1e-9 * std::max(1.0, std::abs(t_a))) {
    throw ConfigError(std::string(who) + ": coefficients are not at the step start");
  }
}

/// Applies D e^{-i Lambda h} (I + N1) D^T to c.
inline CoefficientVector apply_substep(const SubstepOperators& ops, const CoefficientVector& c,
                                       bool with_correction) {
  CoefficientVector y = ops.D.transpose().cast<std::complex<double>>() * c;
  if (with_correction) y += neumann_n1(ops.lambda, ops.H1D, ops.h) * y;
  for (Eigen::Index n = 0; n < y.size(); ++n) {
    y(n) *= std::polar(1.0, -ops.lambda(n) * ops.h);
  }
  return ops.D.cast<std::complex<double>>() * y;
}

inline CoefficientState step_order2(const CoefficientState& c, const TimeSector& sector, double t_a,
                                    double t_b) {
  check_start(c, t_a, "step_order2");
  if (t_b == t_a) return c;
  const SubstepOperators ops = substep_operators(sector, t_a, t_b, 2);
  return CoefficientState{apply_substep(ops, c.c, false), t_b};
}

inline CoefficientState step_order4(const CoefficientState& c, const TimeSector& sector, double t_a,
                                    double t_b) {
  check_start(c, t_a, "step_order4");
  if (t_b == t_a) return c;
  const SubstepOperators ops = substep_operators(sector, t_a, t_b, 4);
  return CoefficientState{apply_substep(ops, c.c, true), t_b};
}

/// Number of substeps of width dt in the sector; dt must divide the width.
inline int substep_count(double width, double dt) {
  if (!(dt > 0.0)) throw ConfigError("propagator: dt must be positive");
  if (width == 0.0) return 0;
  const double ratio = width / dt;
  const double count = std::round(ratio);
  if (count < 1.0 || std::abs(ratio - count) > 1e-9 * count) {
    throw ConfigError("propagator: dt = " + std::to_string(dt) + " does not divide the sector width " +
                      std::to_string(width));
  }
  return static_cast<int>(count);
}

/// Propagates across the sector; `on_step` (optional) sees the state after each substep.
inline SectorPropagation propagate_sector(const CoefficientState& c, const TimeSector& sector,
                                          const PropagatorConfig& config,
                                          const std::function<void(const CoefficientState&)>& on_step = {}) {
  check_start(c, sector.t_left, "propagate_sector");
  if (config.order != 2 && config.order != 4) throw ConfigError("propagator: order must be 2 or 4");
  SectorPropagation out;
  out.state = c;
  const int steps = substep_count(sector.width(), config.dt);
  const double h = sector.width() / steps;
  if (config.record_norms) out.norms.reserve(static_cast<std::size_t>(steps));
  for (int s = 0; s < steps; ++s) {
    const double t_a = sector.t_left + s * h;
    const double t_b = s + 1 == steps ? sector.t_right : sector.t_left + (s + 1) * h;
    out.state.t = t_a;
    out.state = config.order == 2 ? step_order2(out.state, sector, t_a, t_b)
                                  : step_order4(out.state, sector, t_a, t_b);
    if (!out.state.c.allFinite()) {
      throw NumericalError("sector " + std::to_string(sector.index) + ": coefficients overflow at t = " +
                           std::to_string(t_b));
    }
    if (config.record_norms) out.norms.push_back(out.state.norm());
    if (on_step) on_step(out.state);
  }
  out.state.t = sector.t_right;
  return out;
}

}  // namespace tdcp
