// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "tdcp/tdcp.hpp"

using namespace tdcp;
using cd = std::complex<double>;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* title, const std::function<Outcome()>& body) {
  Outcome o;
  const auto start = Clock::now();
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(),
              seconds_since(start));
  std::fflush(stdout);
}

// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
struct GaussRule {
  std::vector<double> x, w;
};

GaussRule gauss_legendre(int n) {
  GaussRule g;
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    g.x.push_back(x);
    g.w.push_back(2.0 / ((1.0 - x * x) * dp * dp));
  }
  return g;
}

CoefficientVector random_state(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  CoefficientVector c(n);
  for (Eigen::Index i = 0; i < n; ++i) c(i) = cd(nd(rng), nd(rng));
  return c / c.norm();
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

// Problem 2 at the table settings, shared by several criteria.
constexpr double kP2Horizon = 12.0;
constexpr int kP2K = 20;
constexpr int kP2N = 20;

const std::vector<TimeSector>& desk_sectors() {
  static const std::vector<TimeSector> s =
      build_sectors(problem2(), build_mesh_with_width(-10.0, 10.0, 0.2), kP2K, kP2Horizon, kP2N);
  return s;
}

std::vector<cd> final_state(const std::vector<TimeSector>& sectors, int order, double dt) {
  const Trajectory tr = propagate_all(sectors, problem2().initial, PropagatorConfig{order, dt, false});
  return synthesize_wavefunction(tr.final, sectors.back());
}

// --------------------------------------------------------------------------

Outcome harmonic_spectrum() {
  const auto start = Clock::now();
  const Basis b = compute_basis(static_potential([](double x) { return 0.5 * x * x; }, [](double x) { return x; }),
                                build_mesh_with_width(-10.0, 10.0, 0.1), 20, 1.0);
  const double elapsed = seconds_since(start);
  double worst = 0.0;
  for (std::size_t n = 0; n < b.size(); ++n) worst = std::max(worst, std::abs(b[n].energy - (n + 0.5)));
  return {b.size() == 20 && worst <= 1e-8 && elapsed <= 10.0,
          fmt("max|E_n - (n-1/2)| = %.2e over n=1..20, %.2f s", worst, elapsed)};
}

Outcome morse_levels() {
  const auto p = problem3();
  const MorseLaserParameters prm;
  const auto& s = *p.potential.separable;
  const Basis b = compute_basis(static_potential(s.static_value, s.static_derivative),
                                build_mesh(p.x_min, p.x_max, 128), 5, p.potential.mass);
  const double w0 = prm.omega0();
  double worst = 0.0;
  for (std::size_t n = 0; n < 5; ++n) {
    const double v = n + 0.5;
    worst = std::max(worst, std::abs(b[n].energy - (w0 * v - w0 * w0 * v * v / (4.0 * prm.depth))));
  }
  return {worst <= 1e-8 * prm.depth, fmt("max error = %.2e = %.2e D", worst, worst / prm.depth)};
}

RunConfig problem1_config(int n, double dx) {
  RunConfig c;
  c.problem = "problem1:" + std::to_string(n);
  c.N = 12;
  c.K = 5;
  c.dx = dx;
  c.dt = TimeValue{1.0};
  c.T = TimeValue{20.0};
  return c;
}

std::vector<TimeSector> problem1_sectors;  // n = 2 at dx = 0.25, reused below

Outcome problem1_end_to_end() {
  bool ok = true;
  std::string detail;
  for (int n : {2, 4, 6}) {
    const RunResult coarse = run(problem1_config(n, 0.25));
    const RunResult fine = run(problem1_config(n, 0.125));
    const auto& a = coarse.report;
    const auto& b = fine.report;
    ok = ok && std::abs(a.err_N) <= 1e-8 && a.err_A <= 1e-8 && a.wall_time_s <= 60.0;
    ok = ok && std::abs(b.err_N) < std::abs(a.err_N) && b.err_A < a.err_A;
    detail += fmt("n=%d err_N %.1e err_A %.1e (%.1f s), halved dx %.1e/%.1e; ", n, a.err_N, a.err_A, a.wall_time_s,
                  b.err_N, b.err_A);
    if (n == 2) problem1_sectors = coarse.sectors;
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

// The quadrature reproduces the identity coupling; with the coupling taken as
// exactly diagonal each coefficient gains the closed-form scalar phase.
Outcome decoupled_phases() {
  if (problem1_sectors.empty()) problem1_sectors = run(problem1_config(2, 0.25)).sectors;
  std::mt19937_64 rng(4);
  double w_defect = 0.0, worst = 0.0;
  for (const TimeSector& sector : problem1_sectors) {
    const Eigen::Index N = static_cast<Eigen::Index>(sector.size());
    w_defect = std::max(w_defect, (sector.couplings.at(0) - MatrixXd::Identity(N, N)).cwiseAbs().maxCoeff());
    TimeSector s = sector;
    s.couplings[0] = MatrixXd::Identity(N, N);
    const CoefficientState c{random_state(N, rng), s.t_left};
    const auto e = s.basis.energies();
    for (int order : {2, 4}) {
      const auto out = propagate_sector(c, s, PropagatorConfig{order, 1.0, false});
      for (Eigen::Index n = 0; n < N; ++n) {
        const double phase = -e[static_cast<std::size_t>(n)] * s.width() +
                             (s.t_right * s.t_right - s.t_left * s.t_left) - 2.0 * s.t_mid * s.width();
        worst = std::max(worst, std::abs(out.state.c(n) - c.c(n) * std::polar(1.0, phase)));
      }
    }
  }
  return {worst <= 1e-12 && w_defect <= 1e-9,
          fmt("max phase error %.1e over %zu sectors, max|W - I| = %.1e", worst, problem1_sectors.size(), w_defect)};
}

Outcome norm_conservation() {
  const auto& sectors = desk_sectors();
  const InitialState psi0 = problem2().initial;
  const double dt = 0.02;

  // Order 2: drift of the stepping within every sector, measured from the norm
  // at sector entry so that the basis change between sectors is left out.
  CoefficientState c = project_initial(psi0, sectors.front());
  double drift2 = 0.0;
  std::size_t steps = 0;
  for (std::size_t k = 0; k < sectors.size(); ++k) {
    if (k > 0) c = carry_coefficients(sectors[k], c);
    const double entry = c.norm();
    const auto out = propagate_sector(c, sectors[k], PropagatorConfig{2, dt, true});
    for (double n : out.norms) drift2 = std::max(drift2, std::abs(n - entry));
    steps += out.norms.size();
    c = out.state;
  }

  const Trajectory tr4 = propagate_all(sectors, psi0, PropagatorConfig{4, dt, false});
  return {steps >= 100 && drift2 <= 1e-12 && tr4.max_norm_drift <= 1e-9,
          fmt("order 2 drift %.1e over %zu substeps, order 4 desk-run drift %.1e", drift2, steps,
              tr4.max_norm_drift)};
}

Outcome temporal_order() {
  const auto& sectors = desk_sectors();
  const std::vector<double> dts{0.2, 0.1, 0.05, 0.025};
  const auto reference = final_state(sectors, 4, dts.back() / 8.0);
  std::vector<double> lx, ly;
  std::string detail = "err_A";
  for (double dt : dts) {
    const double e = err_abs(final_state(sectors, 4, dt), reference);
    lx.push_back(std::log(dt));
    ly.push_back(std::log(e));
    detail += fmt(" %.2e", e);
  }
  const double order = slope(lx, ly);
  return {order >= 3.5 && order <= 4.5, detail + fmt(", fitted order %.3f", order)};
}

Outcome n1_against_quadrature() {
  const GaussRule g = gauss_legendre(64);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ul(-8.0, 8.0), uh(0.01, 1.0), uc(-1.0, 1.0);
  std::uniform_int_distribution<int> un(3, 8);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = un(rng);
    const double h = uh(rng);
    VectorXd lambda(n);
    for (int i = 0; i < n; ++i) lambda(i) = ul(rng);
    MatrixXd h1(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) h1(i, j) = h1(j, i) = uc(rng);
    const MatrixXcd n1 = neumann_n1(lambda, h1, h);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        // int_0^h exp(i lambda_i d) (-i H1_ij) h P1*(d/h) exp(-i lambda_j d) dd
        cd sum{};
        for (std::size_t q = 0; q < g.x.size(); ++q) {
          const double d = 0.5 * h * (g.x[q] + 1.0);
          sum += g.w[q] * std::exp(cd(0.0, (lambda(i) - lambda(j)) * d)) * (2.0 * d - h);
        }
        const cd oracle = 0.5 * h * sum * cd(0.0, -h1(i, j));
        worst = std::max(worst, std::abs(n1(i, j) - oracle));
      }
    }
  }
  return {worst <= 1e-10, fmt("max entry error %.1e over 100 triples", worst)};
}

// Rule on [-h, h] applied to exp(m x) and x exp(m x), compared with closed forms
// relative to max(h, |integral|).
double ef_residual(const EFRule& r) {
  auto apply = [&](auto f, auto df) {
    cd v[4], d[4];
    for (std::size_t k = 0; k < 4; ++k) {
      const double x = r.h * kLobattoNodes[k];
      v[k] = f(x);
      d[k] = df(x);
    }
    return r.apply(v, d);
  };
  double worst = 0.0;
  for (cd mu_sq : {r.mu1_sq, r.mu2_sq}) {
    for (double sign : {1.0, -1.0}) {
      const cd m = sign * std::sqrt(mu_sq);
      const cd e = (std::exp(m * r.h) - std::exp(-m * r.h)) / m;
      const cd q = apply([&](double x) { return std::exp(m * x); }, [&](double x) { return m * std::exp(m * x); });
      worst = std::max(worst, std::abs(q - e) / std::max(r.h, std::abs(e)));
      if (!r.with_derivatives) continue;
      auto prim = [&](double x) { return std::exp(m * x) * (x / m - 1.0 / (m * m)); };
      const cd ex = prim(r.h) - prim(-r.h);
      const cd qx = apply([&](double x) { return x * std::exp(m * x); },
                          [&](double x) { return (1.0 + m * x) * std::exp(m * x); });
      worst = std::max(worst, std::abs(qx - ex) / std::max(r.h, std::abs(ex)));
    }
  }
  return worst;
}

Outcome ef_quadrature() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> dist(-30.0, 30.0);
  double exact_worst = 0.0;
  for (int s = 0; s < 100; ++s) {
    const double z1 = dist(rng), z2 = dist(rng);
    for (bool with_d : {true, false}) exact_worst = std::max(exact_worst, ef_residual(build_ef_rule(z1, z2, 1.0, with_d)));
  }

  double jump = 0.0;
  for (bool with_d : {true, false}) {
    const double z = with_d ? kEfDegenerateThreshold : kEfDegenerateThresholdValuesOnly;
    const double below = 0.98 * z;
    const EFRule fallback = build_ef_rule(below * below, 0.0, 1.0, with_d);
    const EFRule fitted = build_ef_rule(1.0001 * z * 1.0001 * z, 0.0, 1.0, with_d);
    if (!fallback.degenerate || fitted.degenerate) return {false, "threshold does not switch the rule"};
    cd v[4], d[4];
    for (std::size_t k = 0; k < 4; ++k) {
      v[k] = std::exp(below * kLobattoNodes[k]);
      d[k] = below * v[k];
    }
    const cd a = fallback.apply(v, d), b = fitted.apply(v, d);
    jump = std::max(jump, std::abs(a - b) / std::abs(a));
  }

  // Dense oracle: composite 5-point Gauss over 2e5 cells, eigenfunctions
  // evaluated off the mesh by CP propagation.
  const TimeSector& s = desk_sectors().front();
  const Basis& b = s.basis;
  const auto N = static_cast<Eigen::Index>(b.size());
  const GaussRule g5 = gauss_legendre(5);
  const int cells = 200000;
  const double width = (b.mesh.x_max - b.mesh.x_min) / cells;
  MatrixXd gram_dense = MatrixXd::Zero(N, N), w_dense = MatrixXd::Zero(N, N);
  VectorXd y(N);
  for (int cell = 0; cell < cells; ++cell) {
    for (std::size_t q = 0; q < 5; ++q) {
      const double x = b.mesh.x_min + width * (cell + 0.5 * (g5.x[q] + 1.0));
      for (Eigen::Index n = 0; n < N; ++n) y(n) = eigenfunction_at(b, static_cast<std::size_t>(n), x).first;
      const double w = 0.5 * width * g5.w[q];
      gram_dense.noalias() += w * y * y.transpose();
      w_dense.noalias() += (w * x * x) * y * y.transpose();
    }
  }
  const double dense_err = std::max((gram_matrix(b) - gram_dense).cwiseAbs().maxCoeff(),
                                    (s.couplings.at(0) - w_dense).cwiseAbs().maxCoeff());

  return {exact_worst <= 1e-11 && jump <= 1e-10 && dense_err <= 1e-8,
          fmt("exactness %.1e, switch jump %.1e, composite vs 1e6-point oracle %.1e", exact_worst, jump, dense_err)};
}

Outcome overlap_sanity() {
  PotentialModel frozen;
  frozen.value = [](double x, double) { return 0.5 * x * x + 0.1 * x * x * x * x; };
  frozen.x_derivative = [](double x, double) { return x + 0.4 * x * x * x; };
  const auto mesh = build_mesh_with_width(-10.0, 10.0, 0.2);
  std::vector<TimeSector> still;
  for (int k = 1; k <= 3; ++k) {
    still.push_back(build_sector(k, k - 1.0, k, frozen, mesh, 12, still.empty() ? nullptr : &still.back()));
  }
  double defect = 0.0;
  for (const auto& s : still) defect = std::max(defect, overlap_defect(s));

  const auto& sectors = desk_sectors();
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> pick(1, sectors.size() - 1);
  double growth = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const MatrixXd& S = *sectors[pick(rng)].overlap;
    const CoefficientVector c = random_state(S.cols(), rng);
    growth = std::max(growth, (S.cast<cd>() * c).norm() / c.norm() - 1.0);
  }
  return {defect <= 1e-9 && growth <= 1e-6,
          fmt("static |S - I|_max %.1e, problem 2 max(|SC|/|C| - 1) %.1e", defect, growth)};
}

Outcome n_sweep_trend() {
  RunConfig c;
  c.problem = "problem2";
  c.T = TimeValue{kP2Horizon};
  c.K = kP2K;
  c.dx = 0.2;
  c.dt = TimeValue{0.02};
  const SweepResult r = converge(c, "N", {TimeValue{5}, TimeValue{10}, TimeValue{15}, TimeValue{20}});
  bool ok = r.rows.size() == 4;
  std::string detail = "err_A";
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    ok = ok && r.rows[i].error.empty();
    if (i > 0) ok = ok && r.rows[i].err_A < r.rows[i - 1].err_A;
    detail += fmt(" %.1e", r.rows[i].err_A);
  }
  const double span = std::log10(r.rows.front().err_A / r.rows.back().err_A);
  return {ok && span >= 4.0, detail + fmt(", span %.2f decades vs %s", span, r.reference.c_str())};
}

Outcome crank_nicolson() {
  const GridSolution g = crank_nicolson_solve(problem1(2), 0.02, 0.02, 2.0);
  std::vector<cd> exact(g.x.size());
  for (std::size_t i = 0; i < g.x.size(); ++i) exact[i] = analytic_problem1(g.x[i], g.t, 2);
  const double e = err_abs(g.psi, exact);
  const double drift = std::abs(g.final_norm - g.initial_norm);
  return {e >= 3e-4 / 5.0 && e <= 3e-4 * 5.0 && drift <= 1e-12, fmt("err_A %.2e, norm drift %.1e", e, drift)};
}

Outcome morse_desk_run() {
  RunConfig c;
  c.problem = "problem3";
  c.T = TimeValue{10.0, true};
  c.n_steps = 64;
  c.N = 15;
  c.K = 20;
  c.dt = TimeValue{0.01, true};
  c.ref_dt_divisor = 4;
  c.ref_N = 25;
  c.ref_dx_divisor = 1;
  const auto start = Clock::now();
  const RunResult r = run(c);
  const double total = seconds_since(start);
  return {std::abs(r.report.err_N) <= 1e-6 && r.report.err_A <= 1e-5 && total <= 120.0,
          fmt("err_N %.1e, err_A %.1e, %.1f s with reference", r.report.err_N, r.report.err_A, total)};
}

}  // namespace

int main() {
  criterion(1, "harmonic spectrum", harmonic_spectrum);
  criterion(2, "Morse levels", morse_levels);
  criterion(3, "problem 1 end to end", problem1_end_to_end);
  criterion(4, "decoupled phases", decoupled_phases);
  criterion(5, "norm conservation", norm_conservation);
  criterion(6, "temporal order", temporal_order);
  criterion(7, "N1 against quadrature", n1_against_quadrature);
  criterion(8, "EF quadrature", ef_quadrature);
  criterion(9, "overlap sanity", overlap_sanity);
  criterion(10, "N-sweep trend", n_sweep_trend);
  criterion(11, "Crank-Nicolson comparator", crank_nicolson);
  criterion(12, "Morse desk run", morse_desk_run);
  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
