#pragma once

// Constant-reference-potential (CP) shooting eigensolver for
//
//   -(1/2mu) y'' + Vbar(x) y = E y,   y(x_min) = y(x_max) = 0.
//
// Each propagation step freezes the potential at its Lobatto average and
// keeps the linear Legendre component as a perturbation. Order 2 uses the
// exact reference propagator only; order 4 adds the first modified-Neumann
// correction of the linear component, integrated by 5-point Gauss-Legendre.
//
// The propagation partition is finer than the output mesh: every mesh step is
// split into StationaryOptions::cp_substeps equal CP steps, and eigenfunction
// values are produced on the mesh nodes by partial transfers.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tdcp/errors.hpp"
#include "tdcp/lobatto.hpp"
#include "tdcp/mesh.hpp"
#include "tdcp/numerics.hpp"
#include "tdcp/potential.hpp"
#include "tdcp/specfun.hpp"

namespace tdcp {

/// Potential model on one propagation step:
/// V(x) ~ mean + slope * P1*((x - start) / width),  P1*(s) = 2s - 1.
struct StepReference {
  double start = 0.0;
  double width = 0.0;
  double mean = 0.0;
  double slope = 0.0;
};

struct Eigenpair {
  int index = 0;  // 1-based
  double energy = 0.0;
  std::vector<double> values;       // on mesh nodes
  std::vector<double> derivatives;  // on mesh nodes
};

struct StationaryOptions {
  int order = 4;             // 2 or 4
  int cp_substeps = 48;      // CP propagation steps per mesh step
  double tol_energy = 1e-12;  // relative to max(1, |E|)
};

/// The N lowest Dirichlet eigenpairs of one static potential.
struct Basis {
  SpatialMesh mesh;
  StaticPotential potential;
  double mass = 1.0;
  StationaryOptions options;
  std::vector<StepReference> mesh_refs;  // one per mesh step
  std::vector<StepReference> cp_steps;   // propagation partition
  std::vector<Eigenpair> states;

  std::size_t size() const noexcept { return states.size(); }
  const Eigenpair& operator[](std::size_t n) const { return states[n]; }
  std::vector<double> energies() const {
    std::vector<double> e;
    e.reserve(states.size());
    for (const auto& s : states) e.push_back(s.energy);
    return e;
  }
};

// ---------------------------------------------------------------------------
// References

inline StepReference reference_on(const StaticPotential& potential, double start, double width) {
  constexpr auto w = classical_lobatto_weights();
  double sum = 0.0;
  double moment = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double x = start + 0.5 * width * (kLobattoNodes[k] + 1.0);
    const double v = potential(x);
    if (!std::isfinite(v)) {
      throw ModelError("potential is not finite at x = " + std::to_string(x));
    }
    sum += w[k] * v;
    moment += w[k] * kLobattoNodes[k] * v;
  }
  return StepReference{start, width, 0.5 * sum, 1.5 * moment};
}

/// One reference per mesh step.
inline std::vector<StepReference> build_references(const StaticPotential& potential,
                                                   const SpatialMesh& mesh) {
  std::vector<StepReference> refs;
  refs.reserve(mesh.n_steps);
  for (std::size_t s = 0; s < mesh.n_steps; ++s) {
    refs.push_back(reference_on(potential, mesh.step_left(s), mesh.dx));
  }
  return refs;
}

// ---------------------------------------------------------------------------
// Transfer matrices

namespace detail {

// Gauss-Legendre, 5 points on [-1, 1].
inline constexpr std::array<double, 5> kGauss5Nodes{-0.906179845938663992797626878299,
                                                    -0.538469310105683091036314420700, 0.0,
                                                    0.538469310105683091036314420700,
                                                    0.906179845938663992797626878299};
inline constexpr std::array<double, 5> kGauss5Weights{
    0.236926885056189087514264040720, 0.478628670499366468041291514836,
    0.568888888888888888888888888889, 0.478628670499366468041291514836,
    0.236926885056189087514264040720};

// Reference propagator over a length d for y'' = q y.
inline Eigen::Matrix2d reference_propagator(double q, double d) {
  const double Z = q * d * d;
  double c, s;  // xi, eta0
  if (std::abs(Z) < kSeriesSwitch) {
    c = 1.0 + Z * (0.5 + Z * (1.0 / 24.0 + Z / 720.0));
    s = 1.0 + Z * (1.0 / 6.0 + Z * (1.0 / 120.0 + Z / 5040.0));
  } else if (Z > 0.0) {
    const double r = std::sqrt(Z);
    c = std::cosh(r);
    s = std::sinh(r) / r;
  } else {
    const double r = std::sqrt(-Z);
    c = std::cos(r);
    s = std::sin(r) / r;
  }
  Eigen::Matrix2d t;
  t << c, d * s, q * d * s, c;
  return t;
}

}  // namespace detail

/// Transfer matrix mapping (y, y') from offset `from` to offset `to` inside
/// the step described by `ref` (both offsets measured from ref.start).
inline Eigen::Matrix2d transfer_segment(double energy, const StepReference& ref, double mass,
                                        int order, double from, double to) {
  const double q = 2.0 * mass * (ref.mean - energy);
  const double d = to - from;
  Eigen::Matrix2d t = detail::reference_propagator(q, d);
  if (order == 2 || ref.slope == 0.0 || d == 0.0) return t;

  // First Neumann term: int_from^to T0(to - s) dB(s) T0(s - from) ds with
  // dB = [[0, 0], [2 mu slope P1*(s / width), 0]].
  std::array<Eigen::Matrix2d, 5> partial;
  for (std::size_t i = 0; i < 5; ++i) {
    partial[i] = detail::reference_propagator(q, 0.5 * d * (detail::kGauss5Nodes[i] + 1.0));
  }
  Eigen::Matrix2d corr = Eigen::Matrix2d::Zero();
  const double coupling = 2.0 * mass * ref.slope;
  for (std::size_t i = 0; i < 5; ++i) {
    const double s = from + 0.5 * d * (detail::kGauss5Nodes[i] + 1.0);
    const double b = coupling * (2.0 * s / ref.width - 1.0) * detail::kGauss5Weights[i];
    const Eigen::Matrix2d& left = partial[4 - i];  // T0(d - s_i) by node symmetry
    const Eigen::Matrix2d& right = partial[i];
    // left * E21 * right, E21 = [[0,0],[1,0]]
    corr(0, 0) += b * left(0, 1) * right(0, 0);
    corr(0, 1) += b * left(0, 1) * right(0, 1);
    corr(1, 0) += b * left(1, 1) * right(0, 0);
    corr(1, 1) += b * left(1, 1) * right(0, 1);
  }
  return t + (0.5 * d) * corr;
}

/// Transfer across a whole step (order 2: reference propagator; order 4:
/// plus the first Neumann correction of the linear potential component).
inline Eigen::Matrix2d transfer_step(double energy, const StepReference& ref, double mass,
                                     int order) {
  if (order != 2 && order != 4) throw ConfigError("transfer_step: order must be 2 or 4");
  return transfer_segment(energy, ref, mass, order, 0.0, ref.width);
}

// ---------------------------------------------------------------------------
// Shooting

/// The propagation partition plus the mirrored copy used for the sweep that
/// starts at x_max. `match` is the partition boundary where the sweeps meet.
struct CpPartition {
  std::vector<StepReference> steps;
  std::vector<StepReference> mirrored;  // mirrored[j] is steps[n-1-j] seen from x_max
  std::size_t match = 0;

  std::size_t size() const noexcept { return steps.size(); }
  double match_position() const {
    return match < steps.size() ? steps[match].start : steps.back().start + steps.back().width;
  }
};

inline StepReference mirror(const StepReference& ref, double x_max) {
  return StepReference{x_max - (ref.start + ref.width), ref.width, ref.mean, -ref.slope};
}

inline CpPartition make_partition(std::vector<StepReference> steps, std::size_t match) {
  if (steps.size() < 2) throw ConfigError("CP partition needs at least two steps");
  if (match == 0 || match >= steps.size()) {
    throw ConfigError("matching point must be strictly interior");
  }
  CpPartition p;
  const double x_max = steps.back().start + steps.back().width;
  p.mirrored.reserve(steps.size());
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) p.mirrored.push_back(mirror(*it, x_max));
  p.steps = std::move(steps);
  p.match = match;
  return p;
}

/// Uniform refinement of the mesh steps with the matching boundary placed at
/// the mesh step boundary nearest to the minimum of the potential.
inline CpPartition make_partition(const StaticPotential& potential, const SpatialMesh& mesh,
                                  int cp_substeps) {
  if (cp_substeps < 1) throw ConfigError("cp_substeps must be at least 1");
  std::size_t per_step = static_cast<std::size_t>(cp_substeps);
  if (mesh.n_steps * per_step < 2) per_step = 2;
  const double w = mesh.dx / static_cast<double>(per_step);

  std::vector<StepReference> steps;
  steps.reserve(mesh.n_steps * per_step);
  for (std::size_t s = 0; s < mesh.n_steps; ++s) {
    const double left = mesh.step_left(s);
    for (std::size_t j = 0; j < per_step; ++j) {
      steps.push_back(reference_on(potential, left + static_cast<double>(j) * w, w));
    }
  }

  std::size_t argmin = 0;
  double vmin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    const double v = potential(mesh.nodes[i]);
    if (v < vmin) {
      vmin = v;
      argmin = i;
    }
  }
  std::size_t match;
  if (mesh.n_steps >= 2) {
    const std::size_t boundary = std::clamp<std::size_t>((argmin + 1) / 3, 1, mesh.n_steps - 1);
    match = boundary * per_step;
  } else {
    match = per_step / 2;
  }
  return make_partition(std::move(steps), match);
}

namespace detail {

struct SweepState {
  double u = 0.0;
  double du = 1.0;
  double log_scale = 0.0;
  int zeros = 0;
};

// Zeros of u inside (start, end] of one step.
inline int zeros_in_step(double q, double width, double u0, double du0, double u1, double du1) {
  if (q < 0.0) {
    const double k = std::sqrt(-q);
    const double phi0 = std::atan2(k * u0, du0);
    const double raw = std::atan2(k * u1, du1);
    const double target = phi0 + k * width;
    const double two_pi = 2.0 * std::numbers::pi;
    const double phi1 = raw + two_pi * std::round((target - raw) / two_pi);
    return static_cast<int>(std::floor(phi1 / std::numbers::pi) -
                            std::floor(phi0 / std::numbers::pi));
  }
  if (u0 == 0.0) return 0;
  if (u1 == 0.0) return 1;
  return (u0 > 0.0) != (u1 > 0.0) ? 1 : 0;
}

inline void advance(SweepState& st, double energy, const StepReference& ref, double mass,
                    int order, bool count) {
  const Eigen::Matrix2d t = transfer_segment(energy, ref, mass, order, 0.0, ref.width);
  const double u1 = t(0, 0) * st.u + t(0, 1) * st.du;
  const double du1 = t(1, 0) * st.u + t(1, 1) * st.du;
  if (count) st.zeros += zeros_in_step(2.0 * mass * (ref.mean - energy), ref.width, st.u, st.du, u1, du1);
  const double m = std::max(std::abs(u1), std::abs(du1));
  if (!(std::isfinite(m) && m > 0.0)) {
    throw NumericalError("shoot: solution overflow at x = " + std::to_string(ref.start));
  }
  st.u = u1 / m;
  st.du = du1 / m;
  st.log_scale += std::log(m);
}

inline SweepState sweep(std::span<const StepReference> steps, double energy, double mass, int order,
                        bool count) {
  SweepState st;
  for (const auto& ref : steps) advance(st, energy, ref, mass, order, count);
  return st;
}

// angle of (y, y') modulo pi, in [0, pi)
inline double angle_mod_pi(double y, double dy) {
  double a = std::atan2(y, dy);
  if (a < 0.0) a += std::numbers::pi;
  if (a >= std::numbers::pi) a -= std::numbers::pi;
  return a;
}

}  // namespace detail

struct ShootResult {
  double mismatch = 0.0;  // (yL y'R - yR y'L) / (|L| |R|)
  int node_count = 0;     // zeros of both partial solutions
  int eigen_count = 0;    // number of eigenvalues strictly below E
};

/// Propagates (0, 1) from x_min and (0, -1) from x_max to the matching point.
inline ShootResult shoot(double energy, const CpPartition& part, double mass, int order,
                         bool count = true) {
  const std::span<const StepReference> all(part.steps);
  const std::span<const StepReference> mirrored(part.mirrored);
  const auto left = detail::sweep(all.first(part.match), energy, mass, order, count);
  const auto right = detail::sweep(mirrored.first(part.size() - part.match), energy, mass, order, count);

  // back to original orientation: y' = -u'
  const double yl = left.u, dyl = left.du;
  const double yr = right.u, dyr = -right.du;
  ShootResult r;
  r.mismatch = (yl * dyr - yr * dyl) / (std::hypot(yl, dyl) * std::hypot(yr, dyr));
  if (count) {
    r.node_count = left.zeros + right.zeros;
    const double alpha_left = detail::angle_mod_pi(yl, dyl);
    const double alpha_mirror = detail::angle_mod_pi(right.u, right.du);
    r.eigen_count = r.node_count + (alpha_left + alpha_mirror > std::numbers::pi ? 1 : 0);
  }
  return r;
}

/// Convenience form over a plain list of step references.
inline ShootResult shoot(double energy, std::span<const StepReference> refs, std::size_t match,
                         double mass, int order = 4) {
  const CpPartition part = make_partition(std::vector<StepReference>(refs.begin(), refs.end()), match);
  return shoot(energy, part, mass, order);
}

// ---------------------------------------------------------------------------
// Eigenfunctions

namespace detail {

struct NodeSlot {
  bool from_left = true;
  std::size_t step = 0;  // index into steps (left) or mirrored (right)
  double offset = 0.0;   // from the start of that step in its own orientation
};

inline std::vector<NodeSlot> locate_nodes(const CpPartition& part, const SpatialMesh& mesh) {
  const double x_match = part.match_position();
  const double x_max = mesh.x_max;
  std::vector<NodeSlot> slots(mesh.node_count());
  auto find = [](std::span<const StepReference> steps, double x) {
    // last step with start < x (x lies in (start, start + width])
    auto it = std::lower_bound(steps.begin(), steps.end(), x,
                               [](const StepReference& r, double v) { return r.start < v; });
    std::size_t j = static_cast<std::size_t>(it - steps.begin());
    return j == 0 ? std::size_t{0} : j - 1;
  };
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    const double x = mesh.nodes[i];
    NodeSlot s;
    if (x <= x_match) {
      s.from_left = true;
      if (i == 0) {
        s.step = 0;
        s.offset = 0.0;
      } else {
        s.step = find(part.steps, x);
        s.offset = std::min(x - part.steps[s.step].start, part.steps[s.step].width);
      }
    } else {
      s.from_left = false;
      const double xr = x_max - x;
      if (i + 1 == mesh.node_count()) {
        s.step = 0;
        s.offset = 0.0;
      } else {
        s.step = find(part.mirrored, xr);
        s.offset = std::min(xr - part.mirrored[s.step].start, part.mirrored[s.step].width);
      }
    }
    slots[i] = s;
  }
  return slots;
}

struct NodeValue {
  double y = 0.0;
  double dy = 0.0;
  double log_scale = 0.0;
};

// Sweep recording node values on the way; nodes_by_step lists mesh nodes per step.
inline SweepState recording_sweep(std::span<const StepReference> steps, double energy, double mass,
                                  int order,
                                  const std::vector<std::vector<std::pair<std::size_t, double>>>& nodes_by_step,
                                  std::vector<NodeValue>& out, bool mirrored) {
  SweepState st;
  for (std::size_t j = 0; j < steps.size(); ++j) {
    for (const auto& [node, offset] : nodes_by_step[j]) {
      double y, dy;
      if (offset == 0.0) {
        y = st.u;
        dy = st.du;
      } else {
        const Eigen::Matrix2d t = transfer_segment(energy, steps[j], mass, order, 0.0, offset);
        y = t(0, 0) * st.u + t(0, 1) * st.du;
        dy = t(1, 0) * st.u + t(1, 1) * st.du;
      }
      out[node] = NodeValue{y, mirrored ? -dy : dy, st.log_scale};
    }
    advance(st, energy, steps[j], mass, order, false);
  }
  return st;
}

}  // namespace detail

/// Eigenfunction at a converged energy, normalized, with y'(x_min) > 0.
inline Eigenpair assemble_eigenfunction(int index, double energy, const CpPartition& part,
                                        const SpatialMesh& mesh, double mass, int order) {
  const auto slots = detail::locate_nodes(part, mesh);
  std::vector<std::vector<std::pair<std::size_t, double>>> left_nodes(part.match);
  std::vector<std::vector<std::pair<std::size_t, double>>> right_nodes(part.size() - part.match);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& s = slots[i];
    if (s.from_left) {
      left_nodes[std::min(s.step, part.match - 1)].emplace_back(i, s.offset);
    } else {
      right_nodes[std::min(s.step, part.size() - part.match - 1)].emplace_back(i, s.offset);
    }
  }

  std::vector<detail::NodeValue> raw(mesh.node_count());
  const std::span<const StepReference> all(part.steps);
  const std::span<const StepReference> mirrored(part.mirrored);
  const auto left = detail::recording_sweep(all.first(part.match), energy, mass, order, left_nodes, raw, false);
  const auto right = detail::recording_sweep(mirrored.first(part.size() - part.match), energy, mass,
                                             order, right_nodes, raw, true);

  const double yl = left.u, dyl = left.du;
  const double yr = right.u, dyr = -right.du;
  const double join = (yl * yr + dyl * dyr) / (yr * yr + dyr * dyr);

  Eigenpair ep;
  ep.index = index;
  ep.energy = energy;
  ep.values.resize(mesh.node_count());
  ep.derivatives.resize(mesh.node_count());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double scale = slots[i].from_left ? std::exp(raw[i].log_scale - left.log_scale)
                                            : join * std::exp(raw[i].log_scale - right.log_scale);
    ep.values[i] = raw[i].y * scale;
    ep.derivatives[i] = raw[i].dy * scale;
  }
  ep.values.front() = 0.0;
  ep.values.back() = 0.0;

  std::vector<double> dens(mesh.node_count()), ddens(mesh.node_count());
  for (std::size_t i = 0; i < dens.size(); ++i) {
    dens[i] = ep.values[i] * ep.values[i];
    ddens[i] = 2.0 * ep.values[i] * ep.derivatives[i];
  }
  const double norm = std::sqrt(composite_hermite_lobatto<double>(dens, ddens, mesh));
  if (!(norm > 0.0 && std::isfinite(norm))) {
    throw NumericalError("eigenfunction " + std::to_string(index) + " has no finite norm");
  }
  for (std::size_t i = 0; i < dens.size(); ++i) {
    ep.values[i] /= norm;
    ep.derivatives[i] /= norm;
  }
  return ep;
}

namespace detail {

// Eigenvalue search state shared by all indices of one basis.
class EnergySampler {
 public:
  EnergySampler(const CpPartition& part, double mass, int order)
      : part_(part), mass_(mass), order_(order) {}

  int count(double e) {
    auto it = samples_.find(e);
    if (it != samples_.end()) return it->second;
    const int c = shoot(e, part_, mass_, order_, true).eigen_count;
    samples_.emplace(e, c);
    return c;
  }

  double mismatch(double e) const { return shoot(e, part_, mass_, order_, false).mismatch; }

  // Largest sample with count <= k and smallest with count > k.
  bool bracket(int k, double& lo, double& hi) const {
    bool have_lo = false, have_hi = false;
    for (const auto& [e, c] : samples_) {
      if (c <= k) {
        lo = e;
        have_lo = true;
      } else if (!have_hi) {
        hi = e;
        have_hi = true;
      }
    }
    return have_lo && have_hi;
  }

  bool lower(int k, double& lo) const {
    bool found = false;
    for (const auto& [e, c] : samples_) {
      if (c <= k) {
        lo = e;
        found = true;
      }
    }
    return found;
  }

 private:
  const CpPartition& part_;
  double mass_;
  int order_;
  std::map<double, int> samples_;
};

}  // namespace detail

/// The N lowest eigenpairs of `potential` on `mesh`. `guesses` (e.g. the
/// previous sector's energies) only seed the search; the index of every
/// eigenvalue is fixed by node counting.
inline Basis compute_basis(const StaticPotential& potential, const SpatialMesh& mesh, int count,
                           double mass, const StationaryOptions& options = {},
                           std::span<const double> guesses = {}) {
  if (count < 1) throw ConfigError("compute_basis: N must be at least 1");
  if (!(mass > 0.0)) throw ConfigError("compute_basis: mass must be positive");
  if (options.order != 2 && options.order != 4) throw ConfigError("compute_basis: order must be 2 or 4");
  if (!(options.tol_energy > 0.0)) throw ConfigError("compute_basis: tol_energy must be positive");

  Basis basis;
  basis.mesh = mesh;
  basis.potential = potential;
  basis.mass = mass;
  basis.options = options;
  basis.mesh_refs = build_references(potential, mesh);
  const CpPartition part = make_partition(potential, mesh, options.cp_substeps);

  double vmin = std::numeric_limits<double>::infinity();
  for (const auto& r : part.steps) vmin = std::min(vmin, r.mean - std::abs(r.slope));
  detail::EnergySampler sampler(part, mass, options.order);
  double floor_energy = vmin - 1.0;
  for (int tries = 0; sampler.count(floor_energy) > 0; ++tries) {
    if (tries > 60) throw EigenSearchError(1, floor_energy, floor_energy, "no energy below the spectrum");
    floor_energy -= std::max(1.0, std::abs(floor_energy));
  }
  // Straddle each guess instead of sampling it: a guess that coincides with an
  // eigenvalue would leave count and mismatch sign to roundoff.
  for (double g : guesses) {
    if (!std::isfinite(g)) continue;
    const double d = 1e-6 * std::max(1.0, std::abs(g));
    if (g - d > floor_energy) sampler.count(g - d);
    if (g + d > floor_energy) sampler.count(g + d);
  }

  basis.states.reserve(static_cast<std::size_t>(count));
  for (int n = 1; n <= count; ++n) {
    double lo = floor_energy, hi = 0.0;
    if (!sampler.bracket(n - 1, lo, hi)) {
      sampler.lower(n - 1, lo);
      double width = std::max(1.0, 0.5 * std::abs(lo));
      hi = lo + width;
      int expansions = 0;
      while (sampler.count(hi) < n) {
        lo = hi;
        width *= 2.0;
        hi = lo + width;
        if (++expansions > 64 || !std::isfinite(hi)) {
          throw EigenSearchError(n, lo, hi, "compute_basis: no upper bracket");
        }
      }
      sampler.bracket(n - 1, lo, hi);
    }
    // Narrow until the bracket isolates exactly eigenvalue n.
    for (int iter = 0; !(sampler.count(lo) == n - 1 && sampler.count(hi) == n); ++iter) {
      if (iter > 200) throw EigenSearchError(n, lo, hi, "compute_basis: bracket does not isolate");
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) throw EigenSearchError(n, lo, hi, "compute_basis: bracket collapsed");
      if (sampler.count(mid) <= n - 1) {
        lo = mid;
      } else {
        hi = mid;
      }
    }

    const double tol = options.tol_energy * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
    auto f = [&](double e) { return sampler.mismatch(e); };
    double flo = f(lo), fhi = f(hi);
    if (flo != 0.0 && fhi != 0.0 && (flo > 0.0) == (fhi > 0.0)) {
      // An endpoint sits on an eigenvalue to roundoff, so count and mismatch
      // sign disagree there. Nudge one end until the sign change reappears.
      bool found = false;
      const double limit = 0.25 * (hi - lo);
      for (double d = tol; d < limit && !found; d *= 4.0) {
        for (const auto& [a, b] : {std::pair{lo - d, hi}, std::pair{lo, hi + d}, std::pair{lo + d, hi},
                                   std::pair{lo, hi - d}}) {
          const double fa = a == lo ? flo : f(a);
          const double fb = b == hi ? fhi : f(b);
          if ((fa > 0.0) != (fb > 0.0)) {
            lo = a;
            hi = b;
            flo = fa;
            fhi = fb;
            found = true;
            break;
          }
        }
      }
      if (!found) throw EigenSearchError(n, lo, hi, "compute_basis: mismatch does not change sign");
    }
    const double energy = brent_root(f, lo, hi, flo, fhi, tol);
    basis.states.push_back(assemble_eigenfunction(n, energy, part, mesh, mass, options.order));
  }
  basis.cp_steps = part.steps;
  return basis;
}

/// Eigenfunction value and derivative at an arbitrary x, by CP propagation
/// from the nearest mesh node at or to the left of x.
inline std::pair<double, double> eigenfunction_at(const Basis& basis, std::size_t n, double x) {
  const auto& mesh = basis.mesh;
  const auto& ep = basis.states.at(n);
  if (x <= mesh.x_min || x >= mesh.x_max) return {0.0, x == mesh.x_min ? ep.derivatives.front() : ep.derivatives.back()};
  auto it = std::upper_bound(mesh.nodes.begin(), mesh.nodes.end(), x);
  const std::size_t node = static_cast<std::size_t>(it - mesh.nodes.begin()) - 1;
  double y = ep.values[node], dy = ep.derivatives[node];
  double pos = mesh.nodes[node];
  if (pos == x) return {y, dy};

  const auto& steps = basis.cp_steps;
  auto sit = std::upper_bound(steps.begin(), steps.end(), pos,
                              [](double v, const StepReference& r) { return v < r.start; });
  std::size_t j = static_cast<std::size_t>(sit - steps.begin()) - 1;
  while (pos < x) {
    const auto& ref = steps[j];
    const double end = std::min(ref.start + ref.width, x);
    const Eigen::Matrix2d t =
        transfer_segment(ep.energy, ref, basis.mass, basis.options.order, pos - ref.start, end - ref.start);
    const double y1 = t(0, 0) * y + t(0, 1) * dy;
    const double dy1 = t(1, 0) * y + t(1, 1) * dy;
    y = y1;
    dy = dy1;
    pos = end;
    if (pos < x) ++j;
  }
  return {y, dy};
}

}  // namespace tdcp
