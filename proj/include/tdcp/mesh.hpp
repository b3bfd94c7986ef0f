#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "tdcp/errors.hpp"

namespace tdcp {

/// Interior abscissa of the 4-point Gauss-Lobatto rule, 1/sqrt(5).
inline constexpr double kLobattoInner = 0.447213595499957939281834733746;

/// Reference nodes on [-1, 1].
inline constexpr std::array<double, 4> kLobattoNodes{-1.0, -kLobattoInner, kLobattoInner, 1.0};

/// Equidistant steps over [x_min, x_max], each carrying the four Lobatto
/// nodes. Adjacent steps share their boundary node, so there are
/// 3 * n_steps + 1 nodes in total.
struct SpatialMesh {
  double x_min = 0.0;
  double x_max = 0.0;
  std::size_t n_steps = 0;
  double dx = 0.0;
  std::vector<double> nodes;

  std::size_t node_count() const noexcept { return nodes.size(); }

  static constexpr std::size_t node_of_step(std::size_t step, std::size_t local) noexcept {
    return 3 * step + local;
  }

  /// Step owning a node; a shared boundary node belongs to the step on its right
  /// (the last node belongs to the last step).
  std::size_t step_of_node(std::size_t node) const noexcept {
    const std::size_t s = node / 3;
    return s < n_steps ? s : n_steps - 1;
  }

  double step_left(std::size_t step) const noexcept { return nodes[3 * step]; }
  double step_right(std::size_t step) const noexcept { return nodes[3 * step + 3]; }
  double step_center(std::size_t step) const noexcept {
    return 0.5 * (step_left(step) + step_right(step));
  }
};

inline SpatialMesh build_mesh(double x_min, double x_max, std::size_t n_steps) {
  if (!(std::isfinite(x_min) && std::isfinite(x_max)) || !(x_min < x_max)) {
    throw ConfigError("build_mesh: need finite x_min < x_max");
  }
  if (n_steps == 0) throw ConfigError("build_mesh: n_steps must be positive");

  SpatialMesh mesh;
  mesh.x_min = x_min;
  mesh.x_max = x_max;
  mesh.n_steps = n_steps;
  mesh.dx = (x_max - x_min) / static_cast<double>(n_steps);
  mesh.nodes.resize(3 * n_steps + 1);
  for (std::size_t step = 0; step < n_steps; ++step) {
    const double left = x_min + static_cast<double>(step) * mesh.dx;
    for (std::size_t local = 0; local < 3; ++local) {
      mesh.nodes[3 * step + local] = left + (kLobattoNodes[local] + 1.0) * (0.5 * mesh.dx);
    }
  }
  mesh.nodes.back() = x_max;
  return mesh;
}

/// Mesh from a target step width; the width is adjusted so that an integer
/// number of steps spans the range.
inline SpatialMesh build_mesh_with_width(double x_min, double x_max, double dx) {
  if (!(dx > 0.0)) throw ConfigError("build_mesh: step width must be positive");
  const double count = std::round((x_max - x_min) / dx);
  if (count < 1.0) throw ConfigError("build_mesh: step width exceeds the domain");
  return build_mesh(x_min, x_max, static_cast<std::size_t>(count));
}

}  // namespace tdcp
