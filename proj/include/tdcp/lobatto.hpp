#pragma once

// Polynomial 4-point Lobatto rules on the mesh nodes.
//
// On a step [X - h, X + h] with nodes X + x_n h:
//   classical (degree 5):             h * sum a0_n I(x_n)
//   derivative-augmented (degree 7):  h * sum a0_n I(x_n) + h^2 * sum a1_n I'(x_n)

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <string>

#include "tdcp/errors.hpp"
#include "tdcp/mesh.hpp"

namespace tdcp {

inline constexpr std::array<double, 4> classical_lobatto_weights() {
  return {1.0 / 6.0, 5.0 / 6.0, 5.0 / 6.0, 1.0 / 6.0};
}

/// Value weights of the degree-7 rule that also uses first derivatives.
inline constexpr std::array<double, 4> hermite_lobatto_value_weights() {
  return {2.0 / 7.0, 5.0 / 7.0, 5.0 / 7.0, 2.0 / 7.0};
}

/// Derivative weights of the degree-7 rule (antisymmetric about the centre).
inline constexpr std::array<double, 4> hermite_lobatto_derivative_weights() {
  constexpr double inner = 2.2360679774997896964 / 42.0;  // sqrt(5)/42
  return {1.0 / 42.0, inner, -inner, -1.0 / 42.0};
}

namespace detail {

inline void check_node_data(const SpatialMesh& mesh, std::size_t n, const char* who) {
  if (n != mesh.node_count()) {
    throw ConfigError(std::string(who) + ": node data does not match the mesh");
  }
}

}  // namespace detail

/// Composite classical rule over all mesh steps.
template <class T>
T composite_lobatto(std::span<const T> values, const SpatialMesh& mesh) {
  detail::check_node_data(mesh, values.size(), "composite_lobatto");
  constexpr auto w = classical_lobatto_weights();
  const double h = 0.5 * mesh.dx;
  T total{};
  for (std::size_t step = 0; step < mesh.n_steps; ++step) {
    T local{};
    for (std::size_t k = 0; k < 4; ++k) local += w[k] * values[3 * step + k];
    total += h * local;
  }
  return total;
}

/// Composite degree-7 rule using values and first derivatives at the nodes.
template <class T>
T composite_hermite_lobatto(std::span<const T> values, std::span<const T> derivatives,
                            const SpatialMesh& mesh) {
  detail::check_node_data(mesh, values.size(), "composite_hermite_lobatto");
  detail::check_node_data(mesh, derivatives.size(), "composite_hermite_lobatto");
  constexpr auto w0 = hermite_lobatto_value_weights();
  constexpr auto w1 = hermite_lobatto_derivative_weights();
  const double h = 0.5 * mesh.dx;
  T total{};
  for (std::size_t step = 0; step < mesh.n_steps; ++step) {
    T v{};
    T d{};
    for (std::size_t k = 0; k < 4; ++k) {
      v += w0[k] * values[3 * step + k];
      d += w1[k] * derivatives[3 * step + k];
    }
    total += h * v + h * h * d;
  }
  return total;
}

}  // namespace tdcp
