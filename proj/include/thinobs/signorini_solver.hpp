#ifndef THINOBS_SIGNORINI_SOLVER_HPP
#define THINOBS_SIGNORINI_SOLVER_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "thinobs/competitors.hpp"
#include "thinobs/expression.hpp"
#include "thinobs/parallel.hpp"
#include "thinobs/quadrature.hpp"
#include "thinobs/spectral_basis.hpp"
#include "thinobs/special_solutions.hpp"

namespace thinobs {

// ---------------------------------------------------------------------------
// Boundary data

/// Dirichlet datum on R^d minus the origin, even in x_d.
struct Datum {
  std::string kind;
  int d = 2;
  std::function<double(const Point&)> value;
  nlohmann::json descriptor;
};

namespace detail {

inline Point plane_direction(const nlohmann::json& j, int d) {
  Point e{1.0, 0.0, 0.0};
  if (j.contains("e")) {
    auto v = j.at("e").get<std::vector<double>>();
    for (int i = 0; i < d - 1 && i < static_cast<int>(v.size()); ++i) e[i] = v[i];
    e[d - 1] = 0.0;
    double n = norm(e);
    if (n == 0.0) throw std::invalid_argument("datum: direction e must be nonzero in the thin plane");
    e = (1.0 / n) * e;
  }
  return e;
}

inline void check_datum(const Datum& f) {
  const int d = f.d;
  std::vector<Point> equator;
  if (d == 2) {
    equator = {{1.0, 0.0, 0.0}, {-1.0, 0.0, 0.0}};
  } else {
    for (int k = 0; k < 720; ++k) {
      double t = 2.0 * std::numbers::pi * k / 720.0;
      equator.push_back({std::cos(t), std::sin(t), 0.0});
    }
  }
  for (const Point& x : equator) {
    double v = f.value(x);
    if (!std::isfinite(v) || v < -1e-12)
      throw InvalidTrace("datum: negative on the equator (" + std::to_string(v) + ")");
  }
  for (int k = 0; k < 64; ++k) {
    double a = 0.3 + 0.011 * k, b = 0.7 * std::sin(1.3 * k + 0.2), c = 0.25 + 0.6 * std::cos(0.7 * k) * std::cos(0.7 * k);
    Point x = d == 2 ? Point{a * std::cos(1.7 * k), c, 0.0} : Point{a * std::cos(1.7 * k), b, c};
    Point y = x;
    y[d - 1] = -y[d - 1];
    double u = f.value(x), w = f.value(y);
    if (std::abs(u - w) > 1e-10 * (1.0 + std::abs(u))) throw InvalidTrace("datum: not even in x_d");
  }
}

}  // namespace detail

/// Builds a datum from its JSON descriptor. Kinds:
///   model: name h32 (optional e), u0, half_integer (m, d = 2), h2m (m), one
///   fourier: trace (trace file contents), extended by r^alpha_j per mode
///   expression: expr in x, y, z, theta on the unit sphere, extended by
///     |x|^homogeneity (default 0)
inline Datum make_datum(const nlohmann::json& j, int d) {
  if (d != 2 && d != 3) throw std::invalid_argument("datum: d must be 2 or 3");
  Datum f;
  f.d = d;
  f.descriptor = j;
  f.kind = j.at("kind").get<std::string>();
  if (f.kind == "model") {
    std::string name = j.at("name").get<std::string>();
    if (name == "h32") {
      ModelSolution s = make_he(d, detail::plane_direction(j, d));
      f.value = [s](const Point& x) { return s.value(x); };
    } else if (name == "u0") {
      ModelSolution s = make_u0(d);
      f.value = [s](const Point& x) { return s.value(x); };
    } else if (name == "half_integer") {
      if (d != 2) throw std::invalid_argument("datum: half_integer model needs d = 2");
      ModelSolution s = make_half_integer(j.at("m").get<int>());
      f.value = [s](const Point& x) { return s.value(x); };
    } else if (name == "h2m") {
      HarmonicPolynomial p = build_h2m(d, j.at("m").get<int>());
      f.value = [p](const Point& x) { return p.value(x); };
    } else if (name == "one") {
      f.value = [](const Point&) { return 1.0; };
    } else {
      throw std::invalid_argument("datum: unknown model " + name);
    }
  } else if (f.kind == "fourier") {
    TraceExpansion c = trace_from_json(j.at("trace"));
    if (c.d() != d) throw std::invalid_argument("datum: trace dimension mismatch");
    auto table = c.table;
    auto coef = c.coef;
    f.value = [table, coef](const Point& x) {
      double r = norm(x);
      if (r == 0.0) return 0.0;
      std::vector<double> v(coef.size());
      table->evaluate((1.0 / r) * x, v.data(), nullptr);
      double s = 0.0;
      for (std::size_t k = 0; k < coef.size(); ++k)
        if (coef[k] != 0.0) s += coef[k] * std::pow(r, table->entries[k].alpha) * v[k];
      return s;
    };
  } else if (f.kind == "expression") {
    auto e = std::make_shared<Expression>(j.at("expr").get<std::string>());
    double a = j.value("homogeneity", 0.0);
    f.value = [e, a, d](const Point& x) {
      double r = norm(x);
      if (r == 0.0) return 0.0;
      Point t = (1.0 / r) * x;
      double th = std::atan2(t[1], t[0]);
      if (th < 0.0) th += 2.0 * std::numbers::pi;
      Expression::Vars v{{"x", t[0]}, {"y", t[1]}, {"theta", th}};
      if (d == 3) v["z"] = t[2];
      return (*e)(v) * (a == 0.0 ? 1.0 : std::pow(r, a));
    };
  } else {
    throw std::invalid_argument("datum: kind must be model, fourier or expression");
  }
  detail::check_datum(f);
  return f;
}

// ---------------------------------------------------------------------------
// Solver

struct SolveConfig {
  int d = 2;
  double h = 1.0 / 64.0;
  nlohmann::json datum;
  double tol = 1e-10;
  long max_iters = 200000;
  double omega = 0.0;  ///< 0 selects 1.7 (d = 2) or 1.5 (d = 3)
  bool warm_start = true;

  double relaxation() const { return omega > 0.0 ? omega : (d == 2 ? 1.7 : 1.5); }

  static SolveConfig from_json(const nlohmann::json& j) {
    SolveConfig c;
    c.d = j.at("d").get<int>();
    c.h = j.at("h").get<double>();
    c.datum = j.at("datum");
    c.tol = j.value("tol", c.tol);
    c.max_iters = j.value("max_iters", c.max_iters);
    c.omega = j.value("omega", c.omega);
    c.warm_start = j.value("warm_start", c.warm_start);
    return c;
  }

  nlohmann::json to_json() const {
    return {{"d", d}, {"h", h}, {"datum", datum}, {"tol", tol}, {"max_iters", max_iters}, {"omega", relaxation()},
            {"warm_start", warm_start}};
  }
};

/// Node values on the half box [-1,1]^{d-1} x [0,1]; nodes with |x| >= 1
/// carry the datum. Row-major: index = (i * ny + j) * nz + k.
struct GridSolution {
  int d = 2;
  int N = 0;
  double h = 0.0;
  int nx = 0, ny = 1, nz = 0;
  std::vector<double> u;
  std::vector<std::uint8_t> fixed;
  std::array<std::vector<double>, 3> grad;  ///< nodal gradients, x_d >= 0 side
  nlohmann::json datum;
  double tol = 0.0;
  double last_change = 0.0;
  double residual = 0.0;  ///< max of the Laplace and complementarity residuals
  long iterations = 0;
  long total_iterations = 0;
  bool converged = false;
  double omega = 0.0;
  bool omega_fallback = false;
  std::shared_ptr<const GridSolution> coarse;

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * ny + j) * nz + k;
  }
  Point node(int i, int j, int k) const {
    if (d == 2) return {-1.0 + i * h, k * h, 0.0};
    return {-1.0 + i * h, -1.0 + j * h, k * h};
  }
  Point node(std::size_t p) const {
    int k = static_cast<int>(p % nz);
    std::size_t q = p / nz;
    return node(static_cast<int>(q / ny), static_cast<int>(q % ny), k);
  }
  bool on_plane(std::size_t p) const { return p % nz == 0; }
  double contact_tol() const { return std::max(10.0 * tol, 1e-14); }

  double value_at(const Point& x) const { return interpolate(u, x); }

  Point grad_at(const Point& x) const {
    Point g{0.0, 0.0, 0.0};
    for (int a = 0; a < d; ++a) g[a] = interpolate(grad[a], x);
    if (x[d - 1] < 0.0) g[d - 1] = -g[d - 1];
    return g;
  }

  /// Bilinear (d = 2) or trilinear (d = 3) interpolation of a nodal field at
  /// (x', |x_d|), clamped to the box.
  double interpolate(const std::vector<double>& f, const Point& x) const {
    auto locate = [this](double s, int n, int& i0, double& t) {
      double fi = std::clamp(s / h, 0.0, n - 1.0);
      i0 = std::min(static_cast<int>(fi), n - 2);
      t = fi - i0;
    };
    int i0, j0 = 0, k0;
    double ti, tj = 0.0, tk;
    locate(x[0] + 1.0, nx, i0, ti);
    locate(std::abs(x[d - 1]), nz, k0, tk);
    if (d == 3) locate(x[1] + 1.0, ny, j0, tj);
    double s = 0.0;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < (d == 3 ? 2 : 1); ++b)
        for (int c = 0; c < 2; ++c) {
          double w = (a ? ti : 1.0 - ti) * (c ? tk : 1.0 - tk) * (d == 3 ? (b ? tj : 1.0 - tj) : 1.0);
          if (w != 0.0) s += w * f[index(i0 + a, j0 + b, k0 + c)];
        }
    return s;
  }

  /// Maximum of |Laplacian| off the plane and |min(u, -Laplacian)| on it,
  /// in units of the averaged stencil.
  void compute_residual() {
    residual = 0.0;
    for (std::size_t p = 0; p < u.size(); ++p) {
      if (fixed[p]) continue;
      double avg = neighbor_average(p);
      double r = on_plane(p) ? std::abs(std::min(u[p], u[p] - avg)) : std::abs(avg - u[p]);
      residual = std::max(residual, r);
    }
  }

  double neighbor_average(std::size_t p) const {
    const std::size_t si = static_cast<std::size_t>(ny) * nz, sj = nz;
    double s = u[p + si] + u[p - si];
    if (d == 3) s += u[p + sj] + u[p - sj];
    s += on_plane(p) ? 2.0 * u[p + 1] : u[p + 1] + u[p - 1];
    return s / (2.0 * d);
  }

  void compute_gradients() {
    const std::size_t si = static_cast<std::size_t>(ny) * nz, sj = nz;
    for (int a = 0; a < 3; ++a) grad[a].assign(a < d ? u.size() : 0, 0.0);
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j)
        for (int k = 0; k < nz; ++k) {
          std::size_t p = index(i, j, k);
          auto diff = [&](int pos, int n, std::size_t stride) {
            if (pos == 0) return (u[p + stride] - u[p]) / h;
            if (pos == n - 1) return (u[p] - u[p - stride]) / h;
            return (u[p + stride] - u[p - stride]) / (2.0 * h);
          };
          grad[0][p] = diff(i, nx, si);
          if (d == 3) grad[1][p] = diff(j, ny, sj);
          grad[d - 1][p] = diff(k, nz, 1);
        }
  }
};

namespace detail {

inline std::shared_ptr<GridSolution> make_grid(int d, int N, const Datum& f) {
  auto g = std::make_shared<GridSolution>();
  g->d = d;
  g->N = N;
  g->h = 1.0 / N;
  g->nx = 2 * N + 1;
  g->ny = d == 3 ? 2 * N + 1 : 1;
  g->nz = N + 1;
  g->u.assign(static_cast<std::size_t>(g->nx) * g->ny * g->nz, 0.0);
  g->fixed.assign(g->u.size(), 0);
  for (std::size_t p = 0; p < g->u.size(); ++p) {
    Point x = g->node(p);
    if (norm(x) >= 1.0 - 1e-12) {
      g->fixed[p] = 1;
      g->u[p] = f.value(x);
    }
  }
  g->datum = f.descriptor;
  return g;
}

/// Red-black projected SOR on one grid. Returns false on divergence.
inline bool psor(GridSolution& g, double omega, double tol, long max_iters) {
  const std::size_t si = static_cast<std::size_t>(g.ny) * g.nz, sj = g.nz;
  std::array<std::vector<std::size_t>, 2> interior, plane;
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.ny; ++j)
      for (int k = 0; k < g.nz; ++k) {
        std::size_t p = g.index(i, j, k);
        if (g.fixed[p]) continue;
        int c = (i + j + k) & 1;
        (k == 0 ? plane : interior)[c].push_back(p);
      }
  double* u = g.u.data();
  const double inv = 1.0 / (2.0 * g.d);
  const bool three = g.d == 3;
  double first = -1.0;
  g.converged = false;
  for (long it = 1; it <= max_iters; ++it) {
    double change = 0.0;
    for (int c = 0; c < 2; ++c) {
      for (std::size_t p : interior[c]) {
        double s = u[p + si] + u[p - si] + u[p + 1] + u[p - 1];
        if (three) s += u[p + sj] + u[p - sj];
        double dv = omega * (s * inv - u[p]);
        u[p] += dv;
        change = std::max(change, std::abs(dv));
      }
      for (std::size_t p : plane[c]) {
        double s = u[p + si] + u[p - si] + 2.0 * u[p + 1];
        if (three) s += u[p + sj] + u[p - sj];
        double v = std::max(0.0, u[p] + omega * (s * inv - u[p]));
        change = std::max(change, std::abs(v - u[p]));
        u[p] = v;
      }
    }
    g.iterations = it;
    g.last_change = change;
    if (first < 0.0) first = change;
    if (!std::isfinite(change) || change > 1e6 * std::max(1.0, first)) return false;
    if (change <= tol) {
      g.converged = true;
      break;
    }
  }
  return true;
}

}  // namespace detail

/// Projected SOR solve with coarse-to-fine warm starts. The grid one level
/// coarser is kept as `coarse` for discretization estimates.
inline std::shared_ptr<const GridSolution> solve(const SolveConfig& cfg) {
  if (cfg.d != 2 && cfg.d != 3) throw std::invalid_argument("solve: d must be 2 or 3");
  if (!(cfg.h > 0.0)) throw std::invalid_argument("solve: h must be positive");
  const int N = static_cast<int>(std::lround(1.0 / cfg.h));
  if (N < 4 || std::abs(N * cfg.h - 1.0) > 1e-9) throw std::invalid_argument("solve: 1/h must be an integer >= 4");
  if (!(cfg.tol > 0.0) || cfg.max_iters < 1) throw std::invalid_argument("solve: tol and max_iters must be positive");
  Datum f = make_datum(cfg.datum, cfg.d);

  std::vector<int> levels{N};
  while (levels.back() % 2 == 0 && levels.back() / 2 >= 16) levels.push_back(levels.back() / 2);
  if (levels.size() == 1 && N % 2 == 0 && N / 2 >= 2) levels.push_back(N / 2);
  std::reverse(levels.begin(), levels.end());

  std::shared_ptr<GridSolution> prev;
  long total = 0;
  for (int n : levels) {
    auto g = detail::make_grid(cfg.d, n, f);
    g->tol = cfg.tol;
    auto init = [&] {
      if (!prev || !cfg.warm_start) {
        std::fill(g->u.begin(), g->u.end(), 0.0);
        for (std::size_t p = 0; p < g->u.size(); ++p)
          if (g->fixed[p]) g->u[p] = f.value(g->node(p));
        return;
      }
      for (std::size_t p = 0; p < g->u.size(); ++p)
        if (!g->fixed[p]) g->u[p] = g->on_plane(p) ? std::max(0.0, prev->value_at(g->node(p))) : prev->value_at(g->node(p));
    };
    init();
    g->omega = cfg.relaxation();
    if (!detail::psor(*g, g->omega, cfg.tol, cfg.max_iters)) {
      total += g->iterations;
      init();
      g->omega = 1.0;
      g->omega_fallback = true;
      detail::psor(*g, 1.0, cfg.tol, cfg.max_iters);
    }
    total += g->iterations;
    g->total_iterations = total;
    g->compute_residual();
    g->compute_gradients();
    if (prev) prev->coarse.reset();
    g->coarse = prev;
    prev = g;
  }
  return prev;
}

// ---------------------------------------------------------------------------
// Free boundary

struct FreeBoundaryPoint {
  Point x{0.0, 0.0, 0.0};
  bool boundary_touching = false;
  bool isolated = false;
};

/// Contact nodes: plane nodes with u below 10 tol, including datum nodes on
/// or outside the unit sphere.
inline std::vector<std::uint8_t> contact_mask(const GridSolution& s) {
  std::vector<std::uint8_t> m(s.u.size(), 0);
  for (std::size_t p = 0; p < s.u.size(); p += s.nz) m[p] = s.u[p] <= s.contact_tol();
  return m;
}

/// Points where the contact mask changes state along plane edges, refined by
/// linear extrapolation of u from the noncontact side. Edges with a datum
/// node give a point on the unit sphere flagged boundary-touching. Isolated
/// contact nodes are reported once, at the node.
inline std::vector<FreeBoundaryPoint> detect_free_boundary(const GridSolution& s) {
  std::vector<std::uint8_t> c = contact_mask(s);
  std::vector<FreeBoundaryPoint> out;
  const int ny = s.ny;
  auto plane = [&](int i, int j) { return s.index(i, j, 0); };
  auto inside = [&](int i, int j) { return i >= 0 && i < s.nx && j >= 0 && j < ny; };
  std::vector<std::array<int, 2>> dirs{{1, 0}};
  if (s.d == 3) dirs.push_back({0, 1});

  std::vector<std::uint8_t> isolated(s.u.size(), 0);
  for (int i = 0; i < s.nx; ++i)
    for (int j = 0; j < ny; ++j) {
      std::size_t p = plane(i, j);
      if (!c[p] || s.fixed[p]) continue;
      bool alone = true;
      for (auto [di, dj] : dirs)
        for (int sg : {-1, 1})
          if (inside(i + sg * di, j + sg * dj) && c[plane(i + sg * di, j + sg * dj)]) alone = false;
      if (alone) {
        isolated[p] = 1;
        out.push_back({s.node(i, j, 0), false, true});
      }
    }

  for (int i = 0; i < s.nx; ++i)
    for (int j = 0; j < ny; ++j) {
      std::size_t p = plane(i, j);
      for (auto [di, dj] : dirs) {
        int i2 = i + di, j2 = j + dj;
        if (!inside(i2, j2)) continue;
        std::size_t q = plane(i2, j2);
        if (c[p] == c[q] || isolated[p] || isolated[q]) continue;
        if (s.fixed[p] && s.fixed[q]) continue;
        bool p_contact = c[p] != 0;
        Point a = s.node(i, j, 0), b = s.node(i2, j2, 0);
        FreeBoundaryPoint fb;
        if (s.fixed[p] || s.fixed[q]) {
          // Intersection of the edge with the unit sphere.
          Point dv = b - a;
          double A = dot(dv, dv), B = 2.0 * dot(a, dv), C = dot(a, a) - 1.0;
          double disc = std::sqrt(std::max(0.0, B * B - 4.0 * A * C));
          double t = (-B + disc) / (2.0 * A);
          if (t < 0.0 || t > 1.0) t = (-B - disc) / (2.0 * A);
          fb.x = a + std::clamp(t, 0.0, 1.0) * dv;
          fb.boundary_touching = true;
        } else {
          // Zero of the line through the first two noncontact nodes.
          int sg = p_contact ? 1 : -1;
          int ia = p_contact ? i2 : i, ja = p_contact ? j2 : j;
          int ib = ia + sg * di, jb = ja + sg * dj;
          double t = 0.5;
          if (inside(ib, jb) && !c[plane(ib, jb)]) {
            double u1 = s.u[plane(ia, ja)], u2 = s.u[plane(ib, jb)];
            if (u2 > u1) t = std::clamp(u1 / (u2 - u1), 0.0, 1.0);
          }
          Point na = s.node(ia, ja, 0);
          fb.x = na + (-sg * t * s.h) * Point{static_cast<double>(di), s.d == 3 ? static_cast<double>(dj) : 0.0, 0.0};
        }
        out.push_back(fb);
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Frequency and Weiss profiles

struct MonotoneCheck {
  std::string quantity;
  bool checked = true;
  double tau = 0.0;
  int violations = 0;
  double worst_drop = 0.0;
  bool pass() const { return !checked || violations == 0; }

  nlohmann::json to_json() const {
    return {{"quantity", quantity}, {"checked", checked}, {"tau", tau}, {"violations", violations},
            {"worst_drop", worst_drop}, {"pass", pass()}};
  }
};

struct FrequencyProfile {
  int d = 2;
  Point x0{0.0, 0.0, 0.0};
  double lambda = 1.5;
  double h = 0.0;
  std::vector<double> r, H, D, D_volume, N, W, H_ratio;
  std::vector<std::vector<double>> snapshots;  ///< u(x0 + r w) / r^lambda per radius
  SphereRule angular;                          ///< unit-sphere rule of the snapshots
  double estimate_N = 0.0, estimate_W = 0.0, estimate_H = 0.0;
  std::string estimate_source;
  MonotoneCheck mono_N, mono_W, mono_H;

  bool monotone() const { return mono_N.pass() && mono_W.pass() && mono_H.pass(); }

  nlohmann::json to_json() const {
    nlohmann::json j{{"d", d},
                     {"x0", std::vector<double>(x0.begin(), x0.begin() + d)},
                     {"lambda", lambda},
                     {"h", h},
                     {"r", r},
                     {"H", H},
                     {"D", D},
                     {"D_volume", D_volume},
                     {"N", N},
                     {"W_lambda", W},
                     {"H_ratio", H_ratio},
                     {"estimate", {{"N", estimate_N}, {"W", estimate_W}, {"H_ratio", estimate_H}, {"source", estimate_source}}},
                     {"monotonicity", {mono_N.to_json(), mono_W.to_json(), mono_H.to_json()}},
                     {"monotone", monotone()}};
    return j;
  }
};

inline SphereRule profile_rule(int d) {
  if (d == 2) return circle_rule(trapezoid_circle(720));
  return sphere_product_rule(48, 96);
}

/// Geometric ladder of n radii from r_min to r_max.
inline std::vector<double> geometric_radii(double r_min, double r_max, int n) {
  if (n < 2 || !(r_min > 0.0) || !(r_max > r_min)) throw std::invalid_argument("geometric_radii: need 0 < r_min < r_max, n >= 2");
  std::vector<double> r(n);
  for (int k = 0; k < n; ++k) r[k] = r_min * std::pow(r_max / r_min, static_cast<double>(k) / (n - 1));
  return r;
}

namespace detail {

struct RadiusSample {
  double H = 0.0, D = 0.0, D_volume = 0.0;
  std::vector<double> snapshot;
};

inline RadiusSample sample_radius(const GridSolution& s, const Point& x0, double r, double lambda, const SphereRule& rule,
                                  bool with_volume) {
  RadiusSample out;
  const double area = std::pow(r, s.d - 1), scale = std::pow(r, -lambda);
  out.snapshot.reserve(rule.size());
  for (const SphereNode& q : rule) {
    Point w = q.x;
    if (s.d == 2) w = {q.x[0], q.x[1], 0.0};
    Point x = x0 + r * w;
    double v = s.value_at(x);
    Point g = s.grad_at(x);
    out.H += q.w * area * v * v;
    out.D += q.w * area * v * dot(g, w);
    out.snapshot.push_back(v * scale);
  }
  if (with_volume) {
    double cell = std::pow(s.h, s.d);
    for (std::size_t p = 0; p < s.u.size(); ++p) {
      Point x = s.node(p);
      if (norm(x - x0) >= r) continue;
      double g2 = 0.0;
      for (int a = 0; a < s.d; ++a) g2 += s.grad[a][p] * s.grad[a][p];
      out.D_volume += (s.on_plane(p) ? 1.0 : 2.0) * cell * g2;
    }
  }
  return out;
}

inline void check_monotone(MonotoneCheck& m, const std::vector<double>& q) {
  m.violations = 0;
  m.worst_drop = 0.0;
  if (!m.checked) return;
  for (std::size_t k = 0; k + 1 < q.size(); ++k) {
    double drop = q[k] - q[k + 1];
    m.worst_drop = std::max(m.worst_drop, drop);
    if (drop > m.tau) ++m.violations;
  }
}

}  // namespace detail

/// H, D, N = rD/H and W_lambda at each radius about a thin-plane point x0.
/// D uses the boundary identity D(r) = int_{dB_r} u u_r; the volume sum of
/// nodal |grad u|^2 is kept as D_volume. Tolerances for the monotonicity
/// report are 5 times the difference against the coarse companion grid.
inline FrequencyProfile frequency_profile(const GridSolution& s, const Point& x0, double lambda, std::vector<double> radii,
                                          bool with_volume = true) {
  if (std::abs(x0[s.d - 1]) > 1e-14) throw std::invalid_argument("frequency_profile: x0 must lie on the thin plane");
  if (radii.empty()) throw std::invalid_argument("frequency_profile: no radii");
  std::sort(radii.begin(), radii.end());
  const double dist = 1.0 - norm(x0);
  for (double r : radii) {
    if (r <= 2.0 * s.h) throw std::invalid_argument("frequency_profile: radius " + std::to_string(r) + " below the resolution floor 2h");
    if (r >= dist) throw std::invalid_argument("frequency_profile: radius " + std::to_string(r) + " leaves the unit ball");
  }
  FrequencyProfile f;
  f.d = s.d;
  f.x0 = x0;
  f.lambda = lambda;
  f.h = s.h;
  f.r = radii;
  f.angular = profile_rule(s.d);
  auto samples = parallel_map<detail::RadiusSample>(radii.size(), [&](std::size_t k) {
    return detail::sample_radius(s, x0, radii[k], lambda, f.angular, with_volume);
  });
  const double dm1 = s.d - 1.0;
  for (std::size_t k = 0; k < radii.size(); ++k) {
    double r = radii[k];
    const auto& q = samples[k];
    f.H.push_back(q.H);
    f.D.push_back(q.D);
    f.D_volume.push_back(q.D_volume);
    f.N.push_back(r * q.D / q.H);
    f.W.push_back(std::pow(r, -(s.d - 2.0 + 2.0 * lambda)) * q.D - lambda * std::pow(r, -(dm1 + 2.0 * lambda)) * q.H);
    f.H_ratio.push_back(q.H / std::pow(r, dm1 + 2.0 * lambda));
    f.snapshots.push_back(q.snapshot);
  }

  auto max_abs = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  };
  bool estimated = false;
  if (s.coarse) {
    std::vector<double> rc;
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < radii.size(); ++k)
      if (radii[k] > 2.0 * s.coarse->h) {
        rc.push_back(radii[k]);
        idx.push_back(k);
      }
    if (!rc.empty()) {
      FrequencyProfile c = frequency_profile(*s.coarse, x0, lambda, rc, false);
      for (std::size_t k = 0; k < rc.size(); ++k) {
        f.estimate_N = std::max(f.estimate_N, std::abs(f.N[idx[k]] - c.N[k]));
        f.estimate_W = std::max(f.estimate_W, std::abs(f.W[idx[k]] - c.W[k]));
        f.estimate_H = std::max(f.estimate_H, std::abs(f.H_ratio[idx[k]] - c.H_ratio[k]));
      }
      f.estimate_source = "coarse grid h=" + std::to_string(s.coarse->h);
      estimated = true;
    }
  }
  if (!estimated) {
    f.estimate_N = s.h * (1.0 + max_abs(f.N));
    f.estimate_W = s.h * (1.0 + max_abs(f.W));
    f.estimate_H = s.h * (1.0 + max_abs(f.H_ratio));
    f.estimate_source = "h times magnitude";
  }
  f.mono_N = {"N", true, 5.0 * f.estimate_N + 1e-12 * (1.0 + max_abs(f.N))};
  f.mono_W = {"W_lambda", true, 5.0 * f.estimate_W + 1e-12 * (1.0 + max_abs(f.W))};
  double nmin = *std::min_element(f.N.begin(), f.N.end());
  f.mono_H = {"H_ratio", nmin > lambda + 0.05, 5.0 * f.estimate_H + 1e-12 * (1.0 + max_abs(f.H_ratio))};
  detail::check_monotone(f.mono_N, f.N);
  detail::check_monotone(f.mono_W, f.W);
  detail::check_monotone(f.mono_H, f.H_ratio);
  return f;
}

inline std::string format_double(double x) {
  std::ostringstream o;
  o.precision(17);
  o << x;
  return o.str();
}

inline std::string profile_csv(const FrequencyProfile& f) {
  std::string s = "r,H,D,N,W_lambda\n";
  for (std::size_t k = 0; k < f.r.size(); ++k)
    s += format_double(f.r[k]) + "," + format_double(f.H[k]) + "," + format_double(f.D[k]) + "," + format_double(f.N[k]) + "," +
         format_double(f.W[k]) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Classification

struct Classification {
  std::string label;  ///< "Reg", "Sing(2m)" or "Other"
  int m = 0;          ///< for Sing(2m)
  double N_hat = 0.0;
  double N_smallest = 0.0;
  bool unstable = false;
  double lambda_label = 0.0;
  double nondegeneracy = 0.0;  ///< min over radii of H/r^{d-1+2 lambda} relative to the smallest radius
  bool nondegenerate = false;

  nlohmann::json to_json() const {
    return {{"label", label}, {"m", m}, {"N_hat", N_hat}, {"N_smallest", N_smallest}, {"unstable", unstable},
            {"lambda", lambda_label}, {"nondegeneracy", nondegeneracy}, {"nondegenerate", nondegenerate}};
  }
};

/// Linear extrapolation of N to r = 0 from the two smallest radii, then
/// labels Reg (|N - 3/2| <= 0.1), Sing(2m) (|N - 2m| <= 0.1) or Other.
inline Classification classify_point(const FrequencyProfile& f) {
  if (f.r.size() < 6) throw std::invalid_argument("classify_point: need at least 6 radii");
  Classification c;
  double r1 = f.r[0], r2 = f.r[1], n1 = f.N[0], n2 = f.N[1];
  c.N_smallest = n1;
  c.N_hat = n1 - r1 * (n2 - n1) / (r2 - r1);
  c.unstable = !std::isfinite(c.N_hat) || std::abs(c.N_hat - n1) > 0.25;
  if (!std::isfinite(c.N_hat)) c.N_hat = n1;
  int m = static_cast<int>(std::lround(c.N_hat / 2.0));
  if (std::abs(c.N_hat - 1.5) <= 0.1) {
    c.label = "Reg";
    c.lambda_label = 1.5;
  } else if (m >= 1 && std::abs(c.N_hat - 2.0 * m) <= 0.1) {
    c.label = "Sing(" + std::to_string(2 * m) + ")";
    c.m = m;
    c.lambda_label = 2.0 * m;
  } else {
    c.label = "Other";
    c.lambda_label = c.N_hat;
  }
  double base = f.H[0] / std::pow(f.r[0], f.d - 1.0 + 2.0 * c.lambda_label);
  c.nondegeneracy = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < f.r.size(); ++k)
    c.nondegeneracy = std::min(c.nondegeneracy, f.H[k] / std::pow(f.r[k], f.d - 1.0 + 2.0 * c.lambda_label) / base);
  c.nondegenerate = base > 0.0 && c.nondegeneracy >= 0.5;
  return c;
}

// ---------------------------------------------------------------------------
// Decay at singular points

struct DecayReport {
  int d = 2;
  int m = 1;
  Point x0{0.0, 0.0, 0.0};
  std::vector<double> r;  ///< descending
  std::vector<double> W;
  double tau = 0.0;
  bool trivial = false;
  double beta_hat = std::numeric_limits<double>::quiet_NaN();   ///< d = 2
  double log_slope = std::numeric_limits<double>::quiet_NaN();  ///< d = 3, slope of W^{-gamma} against log r
  double gamma = 0.0;
  std::vector<double> increments;  ///< L1(dB_1) distance of consecutive blow-ups
  bool increments_monotone = false;
  double increment_exponent = std::numeric_limits<double>::quiet_NaN();
  bool decay_ok = false;
  Classification classification;

  nlohmann::json to_json() const {
    auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
    return {{"d", d},
            {"m", m},
            {"x0", std::vector<double>(x0.begin(), x0.begin() + d)},
            {"r", r},
            {"W", W},
            {"tau", tau},
            {"trivial", trivial},
            {"beta_hat", num(beta_hat)},
            {"log_slope", num(log_slope)},
            {"gamma", gamma},
            {"increments", increments},
            {"increments_monotone", increments_monotone},
            {"increment_exponent", num(increment_exponent)},
            {"decay_ok", decay_ok},
            {"classification", classification.to_json()}};
  }
};

struct DecayRefused : std::domain_error {
  using std::domain_error::domain_error;
};

/// Slope of the least-squares line through (x_k, y_k).
inline double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  Eigen::MatrixXd A(x.size(), 2);
  Eigen::VectorXd b(y.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    A(k, 0) = x[k];
    A(k, 1) = 1.0;
    b(k) = y[k];
  }
  return A.colPivHouseholderQr().solve(b)(0);
}

/// Default ladder for decay_check: 6 geometric rungs from 0.85 dist down to
/// 0.35 times that.
inline std::vector<double> decay_radii(const GridSolution& s, const Point& x0) {
  double top = 0.85 * (1.0 - norm(x0));
  return geometric_radii(std::max(0.35 * top, 3.0 * s.h), top, 6);
}

/// Fits the decay of W_{2m}(r) along the ladder. d = 2: W ~ r^beta by a
/// log-log fit; d = 3: slope of W^{-gamma} against log r. Also reports L1
/// distances of consecutive blow-ups, largest radius first.
inline DecayReport decay_check(const GridSolution& s, const Point& x0, int m, std::vector<double> radii = {}) {
  if (m < 1) throw std::invalid_argument("decay_check: m >= 1");
  if (radii.empty()) radii = decay_radii(s, x0);
  if (radii.size() < 6) throw std::invalid_argument("decay_check: need at least 6 radii");
  FrequencyProfile f = frequency_profile(s, x0, 2.0 * m, radii);
  DecayReport rep;
  rep.d = s.d;
  rep.m = m;
  rep.x0 = x0;
  rep.classification = classify_point(f);
  if (rep.classification.m != m)
    throw DecayRefused("decay_check: point classified " + rep.classification.label + ", not Sing(" + std::to_string(2 * m) + ")");
  rep.gamma = singular_gamma(s.d);
  const std::size_t n = f.r.size();
  for (std::size_t k = n; k-- > 0;) {
    rep.r.push_back(f.r[k]);
    rep.W.push_back(f.W[k]);
  }
  rep.tau = f.mono_W.tau;
  std::vector<double> lx, ly;
  bool negative = false;
  for (std::size_t k = 0; k < n; ++k) {
    if (rep.W[k] < -rep.tau) negative = true;
    if (rep.W[k] > rep.tau) {
      lx.push_back(std::log(rep.r[k]));
      ly.push_back(s.d == 2 ? std::log(rep.W[k]) : std::pow(rep.W[k], -rep.gamma));
    }
  }
  rep.trivial = lx.empty() && !negative;
  if (rep.trivial) {
    rep.decay_ok = true;
  } else if (lx.size() >= 2 && !negative) {
    double slope = least_squares_slope(lx, ly);
    if (s.d == 2) {
      rep.beta_hat = slope;
      rep.decay_ok = slope > 0.0;
    } else {
      rep.log_slope = slope;
      rep.decay_ok = slope < 0.0;
    }
  }
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const auto& a = f.snapshots[n - 1 - k];
    const auto& b = f.snapshots[n - 2 - k];
    double s1 = 0.0;
    for (std::size_t q = 0; q < a.size(); ++q) s1 += f.angular[q].w * std::abs(a[q] - b[q]);
    rep.increments.push_back(s1);
  }
  rep.increments_monotone = true;
  for (std::size_t k = 0; k + 1 < rep.increments.size(); ++k)
    if (rep.increments[k + 1] > rep.increments[k] * (1.0 + 1e-9) + 1e-14) rep.increments_monotone = false;
  std::vector<double> ix, iy;
  for (std::size_t k = 0; k < rep.increments.size(); ++k)
    if (rep.increments[k] > 0.0) {
      ix.push_back(std::log(rep.r[k]));
      iy.push_back(std::log(rep.increments[k]));
    }
  if (ix.size() >= 2) rep.increment_exponent = least_squares_slope(ix, iy);
  return rep;
}

// ---------------------------------------------------------------------------
// Output

inline nlohmann::json solution_summary(const GridSolution& s) {
  std::size_t contact = 0;
  for (std::size_t p = 0; p < s.u.size(); p += s.nz)
    if (!s.fixed[p] && s.u[p] <= s.contact_tol()) ++contact;
  return {{"d", s.d},           {"h", s.h},
          {"N", s.N},           {"converged", s.converged},
          {"iterations", s.iterations}, {"total_iterations", s.total_iterations},
          {"last_change", s.last_change}, {"residual", s.residual},
          {"omega", s.omega},   {"omega_fallback", s.omega_fallback},
          {"contact_nodes", contact}, {"datum", s.datum}};
}

/// Flat little-endian float64 node values plus a JSON sidecar.
inline void write_solution_dump(const GridSolution& s, const std::string& bin_path, const std::string& json_path) {
  std::ofstream b(bin_path, std::ios::binary);
  if (!b) throw std::runtime_error("cannot write " + bin_path);
  b.write(reinterpret_cast<const char*>(s.u.data()), static_cast<std::streamsize>(s.u.size() * sizeof(double)));
  nlohmann::json j = solution_summary(s);
  j["dims"] = s.d == 2 ? std::vector<int>{s.nx, s.nz} : std::vector<int>{s.nx, s.ny, s.nz};
  j["spacing"] = s.h;
  j["origin"] = s.d == 2 ? std::vector<double>{-1.0, 0.0} : std::vector<double>{-1.0, -1.0, 0.0};
  j["ordering"] = "row-major, last axis x_d >= 0";
  j["dtype"] = "float64 little-endian";
  j["file"] = bin_path.substr(bin_path.find_last_of('/') + 1);
  std::ofstream o(json_path);
  if (!o) throw std::runtime_error("cannot write " + json_path);
  o << j.dump(2) << "\n";
}

}  // namespace thinobs

#endif
