#pragma once

// Batch driver: run configuration, the sector pipeline from projection to the
// final wavefunction, reference solutions, sweeps and the output files behind
// the command-line modes.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tdcp/errors.hpp"
#include "tdcp/mesh.hpp"
#include "tdcp/potential.hpp"
#include "tdcp/propagator.hpp"
#include "tdcp/quadrature.hpp"
#include "tdcp/reference.hpp"
#include "tdcp/sector.hpp"
#include "tdcp/specfun.hpp"
#include "tdcp/stationary.hpp"

namespace tdcp {

/// A time given either in the problem's units or in periods of its natural
/// time unit ("10tau").
struct TimeValue {
  double value = 0.0;
  bool periods = false;

  double resolve(double unit) const noexcept { return periods ? value * unit : value; }
};

struct RunConfig {
  std::string problem = "problem1:2";
  std::optional<double> x_min;
  std::optional<double> x_max;
  std::optional<std::size_t> n_steps;
  std::optional<double> dx;
  TimeValue T{20.0};
  int K = 5;
  int N = 12;
  TimeValue dt{1.0};
  int order = 4;
  std::string mode = "solve";
  std::string out = "tdcp_out";
  std::vector<TimeValue> snapshots;

  int cp_substeps = 48;
  double tol_energy = 1e-12;

  // Self-reference refinement for problems without a closed form.
  int ref_dt_divisor = 8;
  std::optional<int> ref_N;  // default N + 10
  int ref_dx_divisor = 2;

  std::string sweep_axis = "dt";
  std::vector<TimeValue> sweep_values;

  double cn_dx = 0.02;
  TimeValue cn_dt{0.02};

  std::uint64_t seed = 1;
  int samples = 100;
  TimeValue eigen_t{0.0};
  bool norm_log = false;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline double parse_real(std::string_view key, std::string_view text) {
  text = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

template <class Int>
Int parse_integer(std::string_view key, std::string_view text) {
  text = trim(text);
  Int v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError(std::string(key) + ": expected an integer, got '" + std::string(text) + "'");
  }
  return v;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  text = trim(text);
  if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
  if (text == "0" || text == "false" || text == "no" || text == "off") return false;
  throw ConfigError(std::string(key) + ": expected a boolean, got '" + std::string(text) + "'");
}

inline std::vector<std::string_view> split_list(std::string_view text) {
  std::vector<std::string_view> items;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = trim(text.substr(0, comma));
    if (!item.empty()) items.push_back(item);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return items;
}

}  // namespace detail

/// "0.5", "10tau", "0.01 tau".
inline TimeValue parse_time(std::string_view key, std::string_view text) {
  text = detail::trim(text);
  TimeValue t;
  if (text.ends_with("tau")) {
    t.periods = true;
    text = detail::trim(text.substr(0, text.size() - 3));
    if (text.empty()) text = "1";
  }
  t.value = detail::parse_real(key, text);
  return t;
}

inline std::vector<TimeValue> parse_time_list(std::string_view key, std::string_view text) {
  std::vector<TimeValue> out;
  for (auto item : detail::split_list(text)) out.push_back(parse_time(key, item));
  return out;
}

/// Sets one configuration key. Keys match the long flag names, with '-' and
/// '_' interchangeable.
inline void apply_setting(RunConfig& c, std::string_view raw_key, std::string_view value) {
  std::string key(detail::trim(raw_key));
  std::replace(key.begin(), key.end(), '-', '_');
  const std::string v(detail::trim(value));

  if (key == "problem") {
    if (v.empty()) throw ConfigError("problem: empty selector");
    c.problem = v;
  } else if (key == "xmin") {
    c.x_min = detail::parse_real(key, v);
  } else if (key == "xmax") {
    c.x_max = detail::parse_real(key, v);
  } else if (key == "nx") {
    c.n_steps = detail::parse_integer<std::size_t>(key, v);
  } else if (key == "dx") {
    c.dx = detail::parse_real(key, v);
  } else if (key == "T") {
    c.T = parse_time(key, v);
  } else if (key == "K") {
    c.K = detail::parse_integer<int>(key, v);
  } else if (key == "N") {
    c.N = detail::parse_integer<int>(key, v);
  } else if (key == "dt") {
    c.dt = parse_time(key, v);
  } else if (key == "order") {
    c.order = detail::parse_integer<int>(key, v);
  } else if (key == "mode") {
    c.mode = v;
  } else if (key == "out") {
    c.out = v;
  } else if (key == "snap") {
    c.snapshots = parse_time_list(key, v);
  } else if (key == "cp_substeps") {
    c.cp_substeps = detail::parse_integer<int>(key, v);
  } else if (key == "tol_E") {
    c.tol_energy = detail::parse_real(key, v);
  } else if (key == "ref_dt_divisor") {
    c.ref_dt_divisor = detail::parse_integer<int>(key, v);
  } else if (key == "ref_N") {
    c.ref_N = detail::parse_integer<int>(key, v);
  } else if (key == "ref_dx_divisor") {
    c.ref_dx_divisor = detail::parse_integer<int>(key, v);
  } else if (key == "sweep") {
    c.sweep_axis = v;
  } else if (key == "values") {
    c.sweep_values = parse_time_list(key, v);
  } else if (key == "cn_dx") {
    c.cn_dx = detail::parse_real(key, v);
  } else if (key == "cn_dt") {
    c.cn_dt = parse_time(key, v);
  } else if (key == "seed") {
    c.seed = detail::parse_integer<std::uint64_t>(key, v);
  } else if (key == "samples") {
    c.samples = detail::parse_integer<int>(key, v);
  } else if (key == "eigen_t") {
    c.eigen_t = parse_time(key, v);
  } else if (key == "norm_log") {
    c.norm_log = detail::parse_bool(key, v);
  } else {
    throw ConfigError("unknown configuration key '" + std::string(raw_key) + "'");
  }
}

/// Flat key=value text, one setting per line, '#' starts a comment.
inline void apply_config_text(RunConfig& c, std::string_view text, std::string_view origin = "config") {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": expected key=value");
    }
    try {
      apply_setting(c, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline void apply_config_file(RunConfig& c, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  apply_config_text(c, buf.str(), path.string());
}

/// Configuration with the problem and mesh materialized and all invariants checked.
struct ResolvedRun {
  ProblemSpec problem;
  SpatialMesh mesh;
  double T = 0.0;
  double dt = 0.0;
  int K = 1;
  int N = 1;
  int order = 4;
  SectorOptions options;
};

inline ResolvedRun resolve(const RunConfig& c) {
  ResolvedRun r;
  r.problem = problem_by_name(c.problem);
  const double unit = r.problem.time_unit;
  const double x_min = c.x_min.value_or(r.problem.x_min);
  const double x_max = c.x_max.value_or(r.problem.x_max);
  if (!(x_min < x_max)) throw ConfigError("need xmin < xmax");
  r.problem.x_min = x_min;
  r.problem.x_max = x_max;

  std::size_t steps = 0;
  if (c.dx) {
    if (!(*c.dx > 0.0)) throw ConfigError("dx must be positive");
    const double ratio = (x_max - x_min) / *c.dx;
    const double count = std::round(ratio);
    if (count < 1.0 || std::abs(ratio - count) > 1e-9 * count) {
      throw ConfigError("dx does not divide the domain [xmin, xmax]");
    }
    steps = static_cast<std::size_t>(count);
    if (c.n_steps && *c.n_steps != steps) throw ConfigError("nx and dx disagree");
  } else if (c.n_steps) {
    steps = *c.n_steps;
  } else {
    steps = static_cast<std::size_t>(std::round((x_max - x_min) / 0.25));
  }
  if (steps == 0) throw ConfigError("nx must be positive");
  r.mesh = build_mesh(x_min, x_max, steps);

  r.T = c.T.resolve(unit);
  r.dt = c.dt.resolve(unit);
  r.K = c.K;
  r.N = c.N;
  r.order = c.order;
  if (!(r.T > 0.0)) throw ConfigError("T must be positive");
  if (r.K < 1) throw ConfigError("K must be at least 1");
  if (r.N < 1) throw ConfigError("N must be at least 1");
  if (r.order != 2 && r.order != 4) throw ConfigError("order must be 2 or 4");
  substep_count(r.T / r.K, r.dt);  // throws unless dt divides the sector width
  if (c.cp_substeps < 1) throw ConfigError("cp_substeps must be positive");
  if (!(c.tol_energy > 0.0)) throw ConfigError("tol_E must be positive");

  r.options.stationary.order = 4;
  r.options.stationary.cp_substeps = c.cp_substeps;
  r.options.stationary.tol_energy = c.tol_energy;
  return r;
}

/// Sectors [T(k-1)/K, Tk/K], each built from the previous one.
inline std::vector<TimeSector> build_sectors(const ProblemSpec& problem, const SpatialMesh& mesh, int K,
                                             double T, int N, const SectorOptions& options = {}) {
  if (K < 1) throw ConfigError("build_sectors: K must be at least 1");
  if (!(T > 0.0)) throw ConfigError("build_sectors: T must be positive");
  std::vector<TimeSector> sectors;
  sectors.reserve(static_cast<std::size_t>(K));
  for (int k = 1; k <= K; ++k) {
    const double tl = k == 1 ? 0.0 : sectors.back().t_right;
    const double tr = k == K ? T : T * k / K;
    sectors.push_back(build_sector(k, tl, tr, problem.potential, mesh, N,
                                   sectors.empty() ? nullptr : &sectors.back(), options));
  }
  return sectors;
}

struct Snapshot {
  double t = 0.0;
  std::vector<std::complex<double>> psi;  // at the mesh nodes
};

struct Trajectory {
  CoefficientState final;
  std::vector<Snapshot> snapshots;
  double initial_norm = 0.0;
  double max_norm_drift = 0.0;  // of the coefficient 2-norm, across all substeps
  long substeps = 0;
  std::vector<std::pair<double, double>> norm_log;  // (t, |c|) after each substep
};

/// Projects psi0 on the first sector and propagates through all sectors.
/// Snapshot times must fall on substep ends (or t = 0).
inline Trajectory propagate_all(const std::vector<TimeSector>& sectors, const InitialState& initial,
                                const PropagatorConfig& config, std::span<const double> snapshot_times = {},
                                bool keep_norm_log = false) {
  if (sectors.empty()) throw ConfigError("propagate_all: no sectors");
  const double t_end = sectors.back().t_right;
  const double t_tol = 1e-9 * std::max(1.0, t_end);
  std::vector<double> pending(snapshot_times.begin(), snapshot_times.end());
  std::sort(pending.begin(), pending.end());
  for (double t : pending) {
    if (t < -t_tol || t > t_end + t_tol) {
      throw ConfigError("snapshot time " + std::to_string(t) + " lies outside [0, T]");
    }
  }
  std::size_t next = 0;

  Trajectory out;
  CoefficientState c = project_initial(initial, sectors.front());
  out.initial_norm = c.norm();
  const TimeSector* current = &sectors.front();
  auto take_snapshots = [&](const CoefficientState& state) {
    while (next < pending.size() && std::abs(pending[next] - state.t) <= t_tol) {
      out.snapshots.push_back({pending[next], synthesize_wavefunction(state, *current)});
      ++next;
    }
  };
  take_snapshots(c);

  auto on_step = [&](const CoefficientState& state) {
    ++out.substeps;
    const double n = state.norm();
    out.max_norm_drift = std::max(out.max_norm_drift, std::abs(n - out.initial_norm));
    if (keep_norm_log) out.norm_log.emplace_back(state.t, n);
    take_snapshots(state);
  };

  PropagatorConfig quiet = config;
  quiet.record_norms = false;
  for (std::size_t k = 0; k < sectors.size(); ++k) {
    current = &sectors[k];
    if (k > 0) c = carry_coefficients(sectors[k], c);
    c = propagate_sector(c, sectors[k], quiet, on_step).state;
  }
  if (next < pending.size()) {
    throw ConfigError("snapshot time " + std::to_string(pending[next]) + " is not a substep end");
  }
  out.final = c;
  return out;
}

/// Final-time solution used as ground truth: the closed form when the problem
/// has one, otherwise a refined run of the same configuration.
struct ReferenceSolution {
  double t = 0.0;
  std::function<std::complex<double>(double, double)> exact;
  std::optional<TimeSector> last_sector;
  CoefficientState final;
  std::string description;

  std::vector<std::complex<double>> at(std::span<const double> xs) const {
    if (exact) {
      std::vector<std::complex<double>> v(xs.size());
      for (std::size_t i = 0; i < xs.size(); ++i) v[i] = exact(xs[i], t);
      return v;
    }
    if (!last_sector) throw ConfigError("reference solution is empty");
    return synthesize_at(final, *last_sector, xs);
  }
};

/// The refined configuration: dt / ref_dt_divisor, N = ref_N (or N + 10),
/// mesh steps times ref_dx_divisor.
inline RunConfig refined_config(const RunConfig& c) {
  if (c.ref_dt_divisor < 1 || c.ref_dx_divisor < 1) throw ConfigError("reference divisors must be positive");
  const ResolvedRun base = resolve(c);
  RunConfig r = c;
  r.dt = TimeValue{base.dt / c.ref_dt_divisor, false};
  r.T = TimeValue{base.T, false};
  r.N = c.ref_N.value_or(c.N + 10);
  r.dx.reset();
  r.n_steps = base.mesh.n_steps * static_cast<std::size_t>(c.ref_dx_divisor);
  r.x_min = base.mesh.x_min;
  r.x_max = base.mesh.x_max;
  r.snapshots.clear();
  return r;
}

inline ReferenceSolution reference_solution(const RunConfig& c) {
  const ResolvedRun base = resolve(c);
  ReferenceSolution ref;
  ref.t = base.T;
  if (base.problem.exact) {
    ref.exact = base.problem.exact;
    ref.description = "analytic";
    return ref;
  }
  const RunConfig fine = refined_config(c);
  const ResolvedRun r = resolve(fine);
  const auto sectors = build_sectors(r.problem, r.mesh, r.K, r.T, r.N, r.options);
  const Trajectory tr = propagate_all(sectors, r.problem.initial, PropagatorConfig{r.order, r.dt, false});
  ref.final = tr.final;
  ref.last_sector = sectors.back();
  std::ostringstream os;
  os << "self(dt=" << r.dt << ",N=" << r.N << ",nx=" << r.mesh.n_steps << ")";
  ref.description = os.str();
  return ref;
}

struct RunResult {
  ErrorReport report;
  ResolvedRun resolved;
  Trajectory trajectory;
  std::vector<TimeSector> sectors;
  std::vector<std::complex<double>> final_psi;
  std::vector<std::complex<double>> reference_psi;
};

namespace detail {

inline std::string format_real(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::vector<std::pair<std::string, std::string>> echo_parameters(const RunConfig& c,
                                                                        const ResolvedRun& r) {
  std::vector<std::pair<std::string, std::string>> e{
      {"problem", c.problem},
      {"xmin", format_real(r.mesh.x_min)},
      {"xmax", format_real(r.mesh.x_max)},
      {"nx", std::to_string(r.mesh.n_steps)},
      {"dx", format_real(r.mesh.dx)},
      {"T", format_real(r.T)},
      {"K", std::to_string(r.K)},
      {"N", std::to_string(r.N)},
      {"dt", format_real(r.dt)},
      {"order", std::to_string(r.order)},
      {"cp_substeps", std::to_string(c.cp_substeps)},
      {"tol_E", format_real(c.tol_energy)},
      {"time_unit", format_real(r.problem.time_unit)},
  };
  for (const auto& [name, value] : r.problem.parameters) e.emplace_back("param_" + name, format_real(value));
  return e;
}

}  // namespace detail

/// Runs the pipeline and, when `reference` is given, the error metrics.
inline RunResult run_pipeline(const RunConfig& c, const ReferenceSolution* reference) {
  RunResult res;
  res.resolved = resolve(c);
  const ResolvedRun& r = res.resolved;
  const double unit = r.problem.time_unit;
  std::vector<double> snaps;
  for (const auto& s : c.snapshots) snaps.push_back(s.resolve(unit));

  const auto start = std::chrono::steady_clock::now();
  res.sectors = build_sectors(r.problem, r.mesh, r.K, r.T, r.N, r.options);
  res.trajectory =
      propagate_all(res.sectors, r.problem.initial, PropagatorConfig{r.order, r.dt, false}, snaps, c.norm_log);
  res.final_psi = synthesize_wavefunction(res.trajectory.final, res.sectors.back());
  res.report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  res.report.echo = detail::echo_parameters(c, r);
  if (reference != nullptr) {
    res.reference_psi = reference->at(r.mesh.nodes);
    res.report.err_N = err_norm(res.final_psi, res.reference_psi, r.mesh);
    res.report.err_A = err_abs(res.final_psi, res.reference_psi);
    res.report.has_reference = true;
    res.report.echo.emplace_back("reference", reference->description);
  }
  return res;
}

/// Full run with metrics against the closed form or the self-reference.
inline RunResult run(const RunConfig& c) {
  const ReferenceSolution ref = reference_solution(c);
  return run_pipeline(c, &ref);
}

struct SweepRow {
  double value = 0.0;
  double err_N = 0.0;
  double err_A = 0.0;
  double wall_time_s = 0.0;
  std::optional<double> observed_order;  // dt sweeps only
  std::string error;                     // non-empty when the run failed
};

struct SweepResult {
  std::string axis;
  std::vector<SweepRow> rows;
  std::optional<double> fitted_order;  // least-squares slope of log err_A over log dt
  std::string reference;
};

namespace detail {

inline void apply_axis(RunConfig& c, const std::string& axis, const TimeValue& v) {
  if (axis == "dt") {
    c.dt = v;
    return;
  }
  if (v.periods) throw ConfigError("sweep values for " + axis + " cannot be given in periods");
  if (axis == "N" || axis == "K") {
    const double r = std::round(v.value);
    if (r != v.value || r < 1.0) throw ConfigError(axis + " sweep values must be positive integers");
    (axis == "N" ? c.N : c.K) = static_cast<int>(r);
  } else if (axis == "dx") {
    c.dx = v.value;
    c.n_steps.reset();
  } else {
    throw ConfigError("sweep axis must be one of dt, N, dx, K");
  }
}

inline double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace detail

/// One run per value against a common reference built from the finest value.
inline SweepResult converge(const RunConfig& base, const std::string& axis, const std::vector<TimeValue>& values) {
  if (values.empty()) throw ConfigError("converge: no sweep values");
  const double unit = problem_by_name(base.problem).time_unit;
  SweepResult out;
  out.axis = axis;

  // Finest setting: smallest dt or dx, largest N or K.
  std::size_t finest = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    const double a = values[i].resolve(unit), b = values[finest].resolve(unit);
    if ((axis == "dt" || axis == "dx") ? a < b : a > b) finest = i;
  }
  RunConfig ref_cfg = base;
  detail::apply_axis(ref_cfg, axis, values[finest]);
  if (axis == "N" && !base.ref_N) ref_cfg.ref_N = ref_cfg.N + 10;
  const ReferenceSolution ref = reference_solution(ref_cfg);
  out.reference = ref.description;

  for (const auto& v : values) {
    SweepRow row;
    row.value = v.resolve(unit);
    try {
      RunConfig c = base;
      detail::apply_axis(c, axis, v);
      const RunResult r = run_pipeline(c, &ref);
      row.err_N = r.report.err_N;
      row.err_A = r.report.err_A;
      row.wall_time_s = r.report.wall_time_s;
    } catch (const std::exception& e) {
      row.error = e.what();
      row.err_N = row.err_A = std::numeric_limits<double>::quiet_NaN();
    }
    out.rows.push_back(std::move(row));
  }

  if (axis == "dt") {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
      const auto& row = out.rows[i];
      if (!row.error.empty() || !(row.err_A > 0.0)) continue;
      if (i > 0) {
        const auto& prev = out.rows[i - 1];
        if (prev.error.empty() && prev.err_A > 0.0 && prev.value != row.value) {
          out.rows[i].observed_order = std::log(row.err_A / prev.err_A) / std::log(row.value / prev.value);
        }
      }
      lx.push_back(std::log(row.value));
      ly.push_back(std::log(row.err_A));
    }
    if (lx.size() >= 2) out.fitted_order = detail::least_squares_slope(lx, ly);
  }
  return out;
}

/// Exactness residuals of the fitted rules on random squared frequencies.
struct QuadcheckRow {
  double Z1 = 0.0;
  double Z2 = 0.0;
  bool with_derivatives = true;
  bool degenerate = false;
  double condition = 0.0;
  double residual = 0.0;  // largest relative residual over the fitted functions
};

inline std::vector<QuadcheckRow> quadcheck(std::uint64_t seed, int samples, double range = 30.0) {
  if (samples < 1) throw ConfigError("quadcheck: samples must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-range, range);
  std::vector<QuadcheckRow> rows;
  for (int s = 0; s < samples; ++s) {
    const double Z[2] = {dist(rng), dist(rng)};
    for (bool with_d : {true, false}) {
      const EFRule rule = build_ef_rule(Z[0], Z[1], 1.0, with_d);
      QuadcheckRow row{Z[0], Z[1], with_d, rule.degenerate, rule.condition, 0.0};
      for (double z : Z) {
        // cosh(z t) and t sinh(z t) / z on [-1, 1], through xi and eta0 of z^2 t^2.
        double f[4], df[4], g[4], dg[4];
        for (std::size_t k = 0; k < 4; ++k) {
          const double t = kLobattoNodes[k];
          const double zt = z * t * t;  // Z t^2
          f[k] = xi(zt);
          df[k] = z * t * eta0(zt);
          g[k] = t * t * eta0(zt);
          dg[k] = t * eta0(zt) + t * xi(zt);
        }
        const double exact_f = 2.0 * eta0(z);
        const double exact_g = 2.0 * eta1(z);
        const double rf = std::abs(rule.apply(f, df) - exact_f) / std::max(1.0, std::abs(exact_f));
        row.residual = std::max(row.residual, rf);
        if (with_d) {
          const double rg = std::abs(rule.apply(g, dg) - exact_g) / std::max(1.0, std::abs(exact_g));
          row.residual = std::max(row.residual, rg);
        }
      }
      rows.push_back(row);
    }
  }
  return rows;
}

/// Largest |S - I| entry over the overlap matrices.
inline double overlap_defect(const TimeSector& sector) {
  if (!sector.overlap) return 0.0;
  const MatrixXd& s = *sector.overlap;
  return (s - MatrixXd::Identity(s.rows(), s.cols())).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Output files

inline void write_snapshot(const std::filesystem::path& path, std::span<const double> x,
                           std::span<const std::complex<double>> psi) {
  if (x.size() != psi.size()) throw ConfigError("write_snapshot: sizes differ");
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "x,re,im\n" << std::setprecision(17);
  for (std::size_t i = 0; i < x.size(); ++i) out << x[i] << ',' << psi[i].real() << ',' << psi[i].imag() << '\n';
}

inline void write_metrics(const std::filesystem::path& path, const ErrorReport& report,
                          const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << std::setprecision(17);
  if (report.has_reference) {
    out << "err_N=" << report.err_N << '\n' << "err_A=" << report.err_A << '\n';
  }
  out << "wall_time_s=" << report.wall_time_s << '\n';
  for (const auto& [k, v] : extra) out << k << '=' << v << '\n';
  for (const auto& [k, v] : report.echo) out << k << '=' << v << '\n';
}

inline std::string snapshot_name(double t) {
  std::ostringstream os;
  os << "psi_t" << std::setprecision(10) << t << ".csv";
  return os.str();
}

inline std::filesystem::path prepare_output(const RunConfig& c) {
  std::filesystem::path dir(c.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

// ---------------------------------------------------------------------------
// Modes

inline void mode_solve(const RunConfig& c, std::ostream& log) {
  const RunResult r = run(c);
  const auto dir = prepare_output(c);
  const auto& mesh = r.resolved.mesh;
  for (const auto& s : r.trajectory.snapshots) write_snapshot(dir / snapshot_name(s.t), mesh.nodes, s.psi);
  write_snapshot(dir / "psi_final.csv", mesh.nodes, r.final_psi);

  std::vector<double> dens(r.final_psi.size());
  for (std::size_t i = 0; i < dens.size(); ++i) dens[i] = std::norm(r.final_psi[i]);
  const double final_norm = composite_lobatto<double>(dens, mesh);
  write_metrics(dir / "metrics.txt", r.report,
                {{"final_norm", detail::format_real(final_norm)},
                 {"coefficient_norm_drift", detail::format_real(r.trajectory.max_norm_drift)},
                 {"substeps", std::to_string(r.trajectory.substeps)}});
  if (c.norm_log) {
    std::ofstream out(dir / "norms.csv");
    out << "t,norm\n" << std::setprecision(17);
    for (const auto& [t, n] : r.trajectory.norm_log) out << t << ',' << n << '\n';
  }
  log << std::setprecision(6) << "err_N=" << r.report.err_N << " err_A=" << r.report.err_A
      << " wall_time_s=" << r.report.wall_time_s << '\n';
}

inline void mode_eigen(const RunConfig& c, std::ostream& log) {
  const ResolvedRun r = resolve(c);
  const double t = c.eigen_t.resolve(r.problem.time_unit);
  const auto& model = r.problem.potential;
  StaticPotential frozen{[v = model.value, t](double x) { return v(x, t); }, {}};
  if (model.has_derivative()) frozen.derivative = [d = model.x_derivative, t](double x) { return d(x, t); };
  const Basis basis = compute_basis(frozen, r.mesh, r.N, model.mass, r.options.stationary);

  const auto dir = prepare_output(c);
  std::ofstream ev(dir / "eigenvalues.csv");
  ev << "n,E\n" << std::setprecision(17);
  for (const auto& s : basis.states) ev << s.index << ',' << s.energy << '\n';
  std::ofstream ef(dir / "eigenfunctions.csv");
  ef << 'x';
  for (const auto& s : basis.states) ef << ",y" << s.index;
  ef << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < r.mesh.node_count(); ++i) {
    ef << r.mesh.nodes[i];
    for (const auto& s : basis.states) ef << ',' << s.values[i];
    ef << '\n';
  }
  log << std::setprecision(15);
  for (const auto& s : basis.states) log << s.index << ' ' << s.energy << '\n';
}

inline void mode_sectors(const RunConfig& c, std::ostream& log) {
  const ResolvedRun r = resolve(c);
  const auto sectors = build_sectors(r.problem, r.mesh, r.K, r.T, r.N, r.options);
  const auto dir = prepare_output(c);
  std::ofstream out(dir / "sectors.csv");
  out << "k,t_left,t_right,overlap_defect";
  for (int n = 1; n <= r.N; ++n) out << ",E" << n;
  out << '\n' << std::setprecision(17);
  for (const auto& s : sectors) {
    out << s.index << ',' << s.t_left << ',' << s.t_right << ',' << overlap_defect(s);
    for (const auto& st : s.basis.states) out << ',' << st.energy;
    out << '\n';
  }
  double worst = 0.0;
  for (const auto& s : sectors) worst = std::max(worst, overlap_defect(s));
  log << "sectors=" << sectors.size() << " max_overlap_defect=" << std::setprecision(6) << worst << '\n';
}

inline void mode_quadcheck(const RunConfig& c, std::ostream& log) {
  const auto rows = quadcheck(c.seed, c.samples);
  const auto dir = prepare_output(c);
  std::ofstream out(dir / "quadcheck.csv");
  out << "Z1,Z2,derivatives,degenerate,condition,residual\n" << std::setprecision(17);
  double worst_d = 0.0, worst_f = 0.0;
  for (const auto& row : rows) {
    out << row.Z1 << ',' << row.Z2 << ',' << row.with_derivatives << ',' << row.degenerate << ','
        << row.condition << ',' << row.residual << '\n';
    (row.with_derivatives ? worst_d : worst_f) = std::max(row.with_derivatives ? worst_d : worst_f, row.residual);
  }
  log << std::setprecision(6) << "max_residual_with_derivatives=" << worst_d
      << " max_residual_derivative_free=" << worst_f << '\n';
}

inline void mode_converge(const RunConfig& c, std::ostream& log) {
  const std::vector<TimeValue> values = c.sweep_values.empty() ? std::vector<TimeValue>{c.dt} : c.sweep_values;
  const SweepResult sw = converge(c, c.sweep_axis, values);
  const auto dir = prepare_output(c);
  std::ofstream out(dir / "converge.csv");
  out << sw.axis << ",err_N,err_A,wall_time_s,observed_order,error\n" << std::setprecision(17);
  for (const auto& row : sw.rows) {
    out << row.value << ',' << row.err_N << ',' << row.err_A << ',' << row.wall_time_s << ',';
    if (row.observed_order) out << *row.observed_order;
    out << ',' << '"' << row.error << '"' << '\n';
  }
  log << std::setprecision(6);
  for (const auto& row : sw.rows) {
    log << sw.axis << '=' << row.value << " err_N=" << row.err_N << " err_A=" << row.err_A;
    if (!row.error.empty()) log << " error: " << row.error;
    log << '\n';
  }
  if (sw.fitted_order) log << "fitted_order=" << *sw.fitted_order << '\n';
}

inline void mode_compare_cn(const RunConfig& c, std::ostream& log) {
  const ResolvedRun r = resolve(c);
  const ReferenceSolution ref = reference_solution(c);
  const RunResult cp = run_pipeline(c, &ref);

  const double cn_dt = c.cn_dt.resolve(r.problem.time_unit);
  const auto start = std::chrono::steady_clock::now();
  const GridSolution g = crank_nicolson_solve(r.problem, c.cn_dx, cn_dt, r.T);
  const double cn_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto exact = ref.at(g.x);
  const double cn_err_a = err_abs(g.psi, exact);
  const double cn_drift = g.final_norm - g.initial_norm;

  const auto dir = prepare_output(c);
  write_snapshot(dir / "psi_cn.csv", g.x, g.psi);
  write_snapshot(dir / "psi_final.csv", r.mesh.nodes, cp.final_psi);
  write_metrics(dir / "metrics.txt", cp.report,
                {{"cn_err_A", detail::format_real(cn_err_a)},
                 {"cn_norm_drift", detail::format_real(cn_drift)},
                 {"cn_wall_time_s", detail::format_real(cn_time)},
                 {"cn_dx", detail::format_real(g.dx)},
                 {"cn_dt", detail::format_real(cn_dt)}});
  log << std::setprecision(6) << "CP: err_N=" << cp.report.err_N << " err_A=" << cp.report.err_A
      << " wall_time_s=" << cp.report.wall_time_s << '\n'
      << "CN: err_A=" << cn_err_a << " norm_drift=" << cn_drift << " wall_time_s=" << cn_time << '\n';
}

/// Dispatches on `c.mode`.
inline void execute(const RunConfig& c, std::ostream& log) {
  if (c.mode == "solve") return mode_solve(c, log);
  if (c.mode == "eigen") return mode_eigen(c, log);
  if (c.mode == "sectors") return mode_sectors(c, log);
  if (c.mode == "quadcheck") return mode_quadcheck(c, log);
  if (c.mode == "converge") return mode_converge(c, log);
  if (c.mode == "compare-cn") return mode_compare_cn(c, log);
  throw ConfigError("unknown mode '" + c.mode + "'");
}

}  // namespace tdcp
