#pragma once

// One time sector [t_left, t_right]: the eigenbasis of the potential frozen at
// t_mid, the overlap with the previous sector's basis, and the coupling
// matrices dV(t)_nm = int y_n (V(x,t) - V(x,t_mid)) y_m dx.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tdcp/errors.hpp"
#include "tdcp/lobatto.hpp"
#include "tdcp/mesh.hpp"
#include "tdcp/potential.hpp"
#include "tdcp/quadrature.hpp"
#include "tdcp/stationary.hpp"

namespace tdcp {

using Eigen::MatrixXd;
using CoefficientVector = Eigen::VectorXcd;

struct CoefficientState {
  CoefficientVector c;
  double t = 0.0;

  double norm() const { return c.norm(); }
};

struct SectorOptions {
  StationaryOptions stationary;
  bool use_separable = true;  // fast path when the potential provides it
};

struct TimeSector {
  int index = 1;
  double t_left = 0.0;
  double t_right = 0.0;
  double t_mid = 0.0;
  PotentialModel model;
  Basis basis;
  std::optional<MatrixXd> overlap;  // S_nm = int y_n^[k] y_m^[k-1]
  std::vector<MatrixXd> couplings;  // W_j, one per separable term
  std::vector<double> g_mid;        // g_j(t_mid)
  bool separable = false;

  std::size_t size() const noexcept { return basis.size(); }
  double width() const noexcept { return t_right - t_left; }
  const SpatialMesh& mesh() const noexcept { return basis.mesh; }
};

namespace detail {

// Per-pair fitted rules for products within one basis, n <= m.
inline std::vector<EFRule> same_basis_rules(const Basis& b, std::size_t n, std::size_t m,
                                            bool with_derivatives) {
  return pair_rules(b.states[n], b.states[m], b.mesh_refs, b.mesh_refs, b.mesh, b.mass,
                    with_derivatives);
}

inline void product_data(const Eigenpair& u, const Eigenpair& z, std::vector<double>& v,
                         std::vector<double>& d) {
  const std::size_t n = u.values.size();
  v.resize(n);
  d.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = u.values[i] * z.values[i];
    d[i] = u.derivatives[i] * z.values[i] + u.values[i] * z.derivatives[i];
  }
}

}  // namespace detail

/// Coupling blocks W_j = int y_n w_j y_m for the separable terms (symmetric).
inline std::vector<MatrixXd> coupling_blocks(const Basis& basis, const SeparableForm& form) {
  const std::size_t N = basis.size();
  const auto& mesh = basis.mesh;
  const std::size_t nodes = mesh.node_count();
  std::vector<std::vector<double>> w(form.terms.size()), dw(form.terms.size());
  for (std::size_t j = 0; j < form.terms.size(); ++j) {
    w[j].resize(nodes);
    for (std::size_t i = 0; i < nodes; ++i) w[j][i] = form.terms[j].w(mesh.nodes[i]);
    if (form.terms[j].w_prime) {
      dw[j].resize(nodes);
      for (std::size_t i = 0; i < nodes; ++i) dw[j][i] = form.terms[j].w_prime(mesh.nodes[i]);
    }
  }

  std::vector<MatrixXd> blocks(form.terms.size(), MatrixXd::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N)));
  std::vector<double> uz, duz, f, df;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t m = n; m < N; ++m) {
      detail::product_data(basis.states[n], basis.states[m], uz, duz);
      std::vector<EFRule> with_d, without_d;
      for (std::size_t j = 0; j < form.terms.size(); ++j) {
        const bool has_d = !dw[j].empty();
        auto& rules = has_d ? with_d : without_d;
        if (rules.empty()) rules = detail::same_basis_rules(basis, n, m, has_d);
        f.resize(nodes);
        for (std::size_t i = 0; i < nodes; ++i) f[i] = w[j][i] * uz[i];
        double value;
        if (has_d) {
          df.resize(nodes);
          for (std::size_t i = 0; i < nodes; ++i) df[i] = dw[j][i] * uz[i] + w[j][i] * duz[i];
          value = integrate_with_rules<double>(rules, f, df);
        } else {
          value = integrate_with_rules<double>(rules, f, {});
        }
        blocks[j](static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) = value;
        blocks[j](static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)) = value;
      }
    }
  }
  return blocks;
}

/// S_nm = int y_n^[current] y_m^[previous] dx.
inline MatrixXd overlap_matrix(const Basis& current, const Basis& previous) {
  if (current.mesh.node_count() != previous.mesh.node_count() ||
      current.mesh.x_min != previous.mesh.x_min || current.mesh.x_max != previous.mesh.x_max) {
    throw ConfigError("overlap_matrix: bases live on different meshes");
  }
  const auto N = static_cast<Eigen::Index>(current.size());
  const auto M = static_cast<Eigen::Index>(previous.size());
  MatrixXd s(N, M);
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index m = 0; m < M; ++m) {
      s(n, m) = integrate_product(current.states[static_cast<std::size_t>(n)],
                                  previous.states[static_cast<std::size_t>(m)], current.mesh_refs,
                                  previous.mesh_refs, current.mesh, current.mass);
    }
  }
  return s;
}

/// Gram matrix of one basis under the fitted quadrature.
inline MatrixXd gram_matrix(const Basis& basis) {
  const auto N = static_cast<Eigen::Index>(basis.size());
  MatrixXd g(N, N);
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index m = n; m < N; ++m) {
      const double v = integrate_product(basis.states[static_cast<std::size_t>(n)],
                                         basis.states[static_cast<std::size_t>(m)], basis.mesh_refs,
                                         basis.mesh_refs, basis.mesh, basis.mass);
      g(n, m) = v;
      g(m, n) = v;
    }
  }
  return g;
}

/// Builds sector k. `previous` supplies the overlap and seeds the eigenvalue search.
inline TimeSector build_sector(int k, double t_left, double t_right, const PotentialModel& model,
                               const SpatialMesh& mesh, int N, const TimeSector* previous = nullptr,
                               const SectorOptions& options = {}) {
  if (!(t_left < t_right)) throw ConfigError("build_sector: need t_left < t_right");
  if (previous != nullptr && std::abs(previous->t_right - t_left) > 1e-12 * std::max(1.0, std::abs(t_left))) {
    throw ConfigError("build_sector: sector " + std::to_string(k) + " does not start where the previous one ends");
  }
  TimeSector s;
  s.index = k;
  s.t_left = t_left;
  s.t_right = t_right;
  s.t_mid = 0.5 * (t_left + t_right);
  s.model = model;

  try {
    std::vector<double> guesses;
    if (previous != nullptr) guesses = previous->basis.energies();
    s.basis = compute_basis(sector_average(model, t_left, t_right), mesh, N, model.mass,
                            options.stationary, guesses);
  } catch (const NumericalError& e) {
    throw NumericalError("sector " + std::to_string(k) + ": " + e.what());
  }

  if (previous != nullptr) s.overlap = overlap_matrix(s.basis, previous->basis);

  s.separable = options.use_separable && model.separable.has_value();
  if (s.separable) {
    s.couplings = coupling_blocks(s.basis, *model.separable);
    for (const auto& term : model.separable->terms) s.g_mid.push_back(term.g(s.t_mid));
  }
  return s;
}

/// dV(t) by quadrature of V(x,t) - V(x,t_mid) for every pair (any potential).
inline MatrixXd delta_v_generic(const TimeSector& sector, double t) {
  const Basis& b = sector.basis;
  const auto& mesh = b.mesh;
  const std::size_t nodes = mesh.node_count();
  const bool with_d = sector.model.has_derivative();
  std::vector<double> f(nodes), df(with_d ? nodes : 0);
  for (std::size_t i = 0; i < nodes; ++i) {
    const double x = mesh.nodes[i];
    f[i] = sector.model.value(x, t) - sector.model.value(x, sector.t_mid);
    if (with_d) df[i] = sector.model.x_derivative(x, t) - sector.model.x_derivative(x, sector.t_mid);
  }
  const auto N = static_cast<Eigen::Index>(b.size());
  MatrixXd dv(N, N);
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index m = n; m < N; ++m) {
      const double v = integrate_weighted_product(f, df, b.states[static_cast<std::size_t>(n)],
                                                  b.states[static_cast<std::size_t>(m)], b.mesh_refs,
                                                  b.mesh_refs, mesh, b.mass);
      dv(n, m) = v;
      dv(m, n) = v;
    }
  }
  return dv;
}

/// dV(t) = sum_j (g_j(t) - g_j(t_mid)) W_j on the separable path.
inline MatrixXd delta_v(const TimeSector& sector, double t) {
  if (!sector.separable) return delta_v_generic(sector, t);
  const auto N = static_cast<Eigen::Index>(sector.size());
  MatrixXd dv = MatrixXd::Zero(N, N);
  const auto& terms = sector.model.separable->terms;
  for (std::size_t j = 0; j < terms.size(); ++j) {
    const double g = terms[j].g(t) - sector.g_mid[j];
    if (g != 0.0) dv += g * sector.couplings[j];
  }
  return dv;
}

/// c_n = int y_n psi0 dx, degree-7 composite rule when psi0' is known.
inline CoefficientState project_initial(const InitialState& psi0, const TimeSector& sector) {
  const Basis& b = sector.basis;
  const auto& mesh = b.mesh;
  const std::size_t nodes = mesh.node_count();
  std::vector<std::complex<double>> p(nodes), dp;
  for (std::size_t i = 0; i < nodes; ++i) {
    p[i] = psi0.psi0(mesh.nodes[i]);
    if (!std::isfinite(p[i].real()) || !std::isfinite(p[i].imag())) {
      throw ModelError("initial state is not finite at x = " + std::to_string(mesh.nodes[i]));
    }
  }
  if (psi0.psi0_derivative) {
    dp.resize(nodes);
    for (std::size_t i = 0; i < nodes; ++i) dp[i] = psi0.psi0_derivative(mesh.nodes[i]);
  }

  CoefficientState out;
  out.t = sector.t_left;
  out.c.resize(static_cast<Eigen::Index>(b.size()));
  std::vector<std::complex<double>> f(nodes), df(dp.empty() ? 0 : nodes);
  for (std::size_t n = 0; n < b.size(); ++n) {
    const auto& y = b.states[n];
    for (std::size_t i = 0; i < nodes; ++i) {
      f[i] = y.values[i] * p[i];
      if (!dp.empty()) df[i] = y.derivatives[i] * p[i] + y.values[i] * dp[i];
    }
    out.c(static_cast<Eigen::Index>(n)) =
        dp.empty() ? composite_lobatto<std::complex<double>>(f, mesh)
                   : composite_hermite_lobatto<std::complex<double>>(f, df, mesh);
  }
  return out;
}

/// Coefficients at the start of `sector` from the previous sector's final ones.
inline CoefficientState carry_coefficients(const TimeSector& sector, const CoefficientState& previous) {
  if (!sector.overlap) throw ConfigError("carry_coefficients: sector has no overlap matrix");
  const MatrixXd& s = *sector.overlap;
  if (s.cols() != previous.c.size()) {
    throw ConfigError("carry_coefficients: coefficient count does not match the overlap matrix");
  }
  if (std::abs(previous.t - sector.t_left) > 1e-9 * std::max(1.0, std::abs(sector.t_left))) {
    throw ConfigError("carry_coefficients: coefficients are not at the sector start");
  }
  CoefficientState out;
  out.t = sector.t_left;
  out.c = s.cast<std::complex<double>>() * previous.c;
  return out;
}

/// psi at the mesh nodes from expansion coefficients.
inline std::vector<std::complex<double>> synthesize_wavefunction(const CoefficientState& state,
                                                                 const TimeSector& sector,
                                                                 bool derivative = false) {
  const Basis& b = sector.basis;
  if (static_cast<std::size_t>(state.c.size()) > b.size()) {
    throw ConfigError("synthesize_wavefunction: more coefficients than basis functions");
  }
  std::vector<std::complex<double>> psi(b.mesh.node_count());
  for (Eigen::Index n = 0; n < state.c.size(); ++n) {
    const auto& y = b.states[static_cast<std::size_t>(n)];
    const auto& data = derivative ? y.derivatives : y.values;
    const std::complex<double> c = state.c(n);
    for (std::size_t i = 0; i < psi.size(); ++i) psi[i] += c * data[i];
  }
  return psi;
}

/// psi at arbitrary points, evaluating each eigenfunction by CP propagation.
inline std::vector<std::complex<double>> synthesize_at(const CoefficientState& state,
                                                       const TimeSector& sector,
                                                       std::span<const double> xs) {
  std::vector<std::complex<double>> psi(xs.size());
  for (Eigen::Index n = 0; n < state.c.size(); ++n) {
    const std::complex<double> c = state.c(n);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      psi[i] += c * eigenfunction_at(sector.basis, static_cast<std::size_t>(n), xs[i]).first;
    }
  }
  return psi;
}

/// The same sector restricted to its first N basis functions.
inline TimeSector truncate_sector(const TimeSector& sector, int N) {
  if (N < 1 || static_cast<std::size_t>(N) > sector.size()) {
    throw ConfigError("truncate_sector: N out of range");
  }
  TimeSector t = sector;
  const auto n = static_cast<Eigen::Index>(N);
  t.basis.states.resize(static_cast<std::size_t>(N));
  if (t.overlap) t.overlap = MatrixXd(t.overlap->topLeftCorner(n, std::min<Eigen::Index>(n, t.overlap->cols())));
  for (auto& w : t.couplings) w = MatrixXd(w.topLeftCorner(n, n));
  return t;
}

}  // namespace tdcp
