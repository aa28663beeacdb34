#ifndef THINOBS_COMPETITORS_HPP
#define THINOBS_COMPETITORS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "thinobs/quadrature.hpp"
#include "thinobs/random.hpp"
#include "thinobs/spectral_basis.hpp"
#include "thinobs/special_solutions.hpp"
#include "thinobs/weiss_energy.hpp"

namespace thinobs {

/// Construction failure that depends on the caller's parameters.
struct CompetitorError : std::runtime_error {
  enum class Kind { epsilon_too_large, delta_too_large, singular_system };
  Kind kind;
  CompetitorError(Kind k, const std::string& what) : std::runtime_error(what), kind(k) {}
};

// ---------------------------------------------------------------------------
// Equator utilities

struct EquatorMin {
  double value = 0.0;
  Point where{1.0, 0.0, 0.0};
};

/// Points of {x_d = 0} on the unit sphere: two points for d = 2, n points for d = 3.
inline std::vector<Point> equator_points(int d, int n = 4096) {
  if (d == 2) return {{1.0, 0.0, 0.0}, {-1.0, 0.0, 0.0}};
  std::vector<Point> p;
  p.reserve(n);
  for (int i = 0; i < n; ++i) p.push_back(circle_point(2.0 * std::numbers::pi * i / n));
  return p;
}

/// One Newton step along the equator from grid point ibest of n.
inline EquatorMin equator_polish(const std::function<void(const Point&, double&, Point&)>& fg, int n, int ibest, EquatorMin best) {
  double v;
  Point g;
  auto deriv = [&](double t) {
    Point x = circle_point(t);
    fg(x, v, g);
    return dot(g, Point{-std::sin(t), std::cos(t), 0.0});
  };
  double t = 2.0 * std::numbers::pi * ibest / n, h = 1e-5;
  double f1 = deriv(t), f2 = (deriv(t + h) - deriv(t - h)) / (2.0 * h);
  if (f2 > 0.0) {
    double tn = t - f1 / f2;
    if (std::abs(tn - t) < 2.0 * std::numbers::pi / n) {
      Point x = circle_point(tn);
      fg(x, v, g);
      if (v < best.value) best = {v, x};
    }
  }
  return best;
}

/// Minimum over the equator of a function given with its tangential gradient.
/// d = 3 uses a 4096-point grid and one Newton step along the equator.
inline EquatorMin equator_min(int d, const std::function<void(const Point&, double&, Point&)>& fg, int n = 4096) {
  EquatorMin best;
  best.value = std::numeric_limits<double>::infinity();
  double v;
  Point g;
  if (d == 2) {
    for (const Point& x : equator_points(2)) {
      fg(x, v, g);
      if (v < best.value) best = {v, x};
    }
    return best;
  }
  int ibest = 0;
  for (int i = 0; i < n; ++i) {
    Point x = circle_point(2.0 * std::numbers::pi * i / n);
    fg(x, v, g);
    if (v < best.value) {
      best = {v, x};
      ibest = i;
    }
  }
  return equator_polish(fg, n, ibest, best);
}

inline EquatorMin equator_min(const TraceExpansion& c) {
  auto fg = [&c](const Point& x, double& v, Point& g) { c.value_grad(x, v, g); };
  if (c.d() == 2) return equator_min(2, fg);
  const int n = 4096;
  const std::vector<double>& S = c.table->equator_samples(n);
  const std::size_t M = c.coef.size();
  EquatorMin best;
  best.value = std::numeric_limits<double>::infinity();
  int ibest = 0;
  for (int i = 0; i < n; ++i) {
    const double* row = S.data() + static_cast<std::size_t>(i) * M;
    double v = 0.0;
    for (std::size_t j = 0; j < M; ++j) v += row[j] * c.coef[j];
    if (v < best.value) {
      best.value = v;
      ibest = i;
    }
  }
  best.where = circle_point(2.0 * std::numbers::pi * ibest / n);
  return equator_polish(fg, n, ibest, best);
}

/// Throws InvalidTrace when c is negative on the equator beyond -1e-12.
inline void require_admissible(const TraceExpansion& c) {
  EquatorMin mn = equator_min(c);
  if (mn.value < -1e-12) {
    std::ostringstream os;
    os << "inadmissible trace: minimum " << mn.value << " on the equator";
    throw InvalidTrace(os.str());
  }
}

/// Expansion of the h_{2m} trace on a table with K >= 2m. The trace is the
/// zonal degree-2m mode, so all other coefficients are set to zero.
inline TraceExpansion h2m_expansion(std::shared_ptr<const ModeTable> table, int m) {
  if (table->slit || table->K < 2 * m) throw std::invalid_argument("h2m_expansion: table must be even with K >= 2m");
  HarmonicPolynomial h = build_h2m(table->d, m);
  TraceExpansion e = expand_trace(sample_on_grid(*table, [&h](const Point& x) { return h.value(x); }), table);
  for (std::size_t j = 0; j < e.coef.size(); ++j)
    if (table->entries[j].alpha != 2.0 * m || table->entries[j].order != 0) e.coef[j] = 0.0;
  return e;
}

/// Splits c into modes with alpha_j below, at and above alpha.
struct ModeSplit {
  TraceExpansion below, at, above;
};

inline ModeSplit split_modes(const TraceExpansion& c, double alpha) {
  ModeSplit s{zero_trace(c.table), zero_trace(c.table), zero_trace(c.table)};
  for (std::size_t j = 0; j < c.coef.size(); ++j) {
    double a = c.table->entries[j].alpha;
    if (a < alpha - 1e-9)
      s.below.coef[j] = c.coef[j];
    else if (a > alpha + 1e-9)
      s.above.coef[j] = c.coef[j];
    else
      s.at.coef[j] = c.coef[j];
  }
  return s;
}

// ---------------------------------------------------------------------------
// Recipes and reports

using BallFn = std::function<double(const Point&)>;

struct CompetitorRecipe {
  std::string kind;  ///< regular_3_2, singular_2m, negative_2m, half_integer_2d
  int d = 2;
  int m = 0;
  double param = 0.0;  ///< epsilon (singular, negative) or delta (half-integer)
  double base = 0.0;   ///< homogeneity of z
  double alpha = 0.0;  ///< homogeneity of the modified part
  double kappa = 0.0;
  bool trivial = false;
  TraceExpansion trace;

  // regular
  Point e{1.0, 0.0, 0.0};
  double C = 0.0;
  double c0 = 0.0;
  std::function<void(const Point&, double&, Point&)> phi;  ///< remainder trace with tangential gradient

  // singular / negative: competitor is r^{alpha_a} piece_a + r^{alpha_b} piece_b
  double M = 0.0;
  TraceExpansion piece_a, piece_b;
  double alpha_a = 0.0, alpha_b = 0.0;
  double grad_phi_sq = 0.0;  ///< ||grad phi||^2 of the modes above 2m (singular)
  double low_norm_sq = 0.0;  ///< ||c_<||^2 (negative)

  // half-integer
  std::vector<double> a;  ///< sector amplitudes a_1..a_{2m}
  std::vector<double> s;  ///< sector angles s_0..s_{2m}
  std::function<void(double, double&, double&)> c_tilde;  ///< residual trace and its theta-derivative

  BallFn value;  ///< competitor on the ball (x != 0)

  nlohmann::json to_json() const {
    nlohmann::json j{{"case", kind}, {"d", d}, {"m", m}, {"param", param}, {"base", base},
                     {"alpha", alpha}, {"kappa", kappa}, {"trivial", trivial}};
    if (kind == "regular_3_2") {
      j["e"] = {e[0], e[1], e[2]};
      j["C"] = C;
      j["c0"] = c0;
    } else if (kind == "half_integer_2d") {
      j["a"] = a;
      j["s"] = s;
    } else {
      j["M"] = M;
      j["grad_phi_sq"] = grad_phi_sq;
      j["low_norm_sq"] = low_norm_sq;
    }
    return j;
  }
};

struct EpiReport {
  std::string kind;
  int d = 2;
  int m = 0;
  double Wz = 0.0;
  double Wh = 0.0;
  double factor = 0.0;  ///< kappa, eps |W(z)|^gamma, or -eps for the negative case
  double gap = 0.0;     ///< W(h) - (1 - factor) W(z)
  double tol = 0.0;
  bool pass = false;
  std::string bound2_name;  ///< secondary inequality, gap <= bound2
  double bound2 = 0.0;
  bool pass2 = true;
  nlohmann::json diagnostics = nlohmann::json::object();

  nlohmann::json to_json() const {
    return {{"case", kind}, {"d", d},     {"m", m},       {"W_z", Wz},           {"W_h", Wh},
            {"factor", factor}, {"gap", gap}, {"tol", tol}, {"pass", pass},        {"bound2_name", bound2_name},
            {"bound2", bound2}, {"pass2", pass2}, {"diagnostics", diagnostics}};
  }
};

/// Competitor minus trace at the table's grid nodes (sup norm).
inline double trace_fidelity(const CompetitorRecipe& r) {
  double err = 0.0;
  for (const auto& q : r.trace.table->grid().nodes) err = std::max(err, std::abs(r.value(q.x) - r.trace.value(q.x)));
  return err;
}

/// Minimum of the competitor on the thin set, sampled at radii k/32 and on the equator.
inline double thin_set_min(const CompetitorRecipe& r, int n_eq = 512) {
  double mn = std::numeric_limits<double>::infinity();
  for (const Point& th : equator_points(r.d, n_eq))
    for (int k = 1; k <= 32; ++k) mn = std::min(mn, r.value((k / 32.0) * th));
  return mn;
}

// ---------------------------------------------------------------------------
// Regular case, homogeneity 3/2

/// <h_e, Y_e>, <h_e, Y_0>, <u_0, Y_0> for the unit linear mode Y_e along e and the constant mode.
struct RegularConstants {
  double he_lin = 0.0, he_const = 0.0, u0_const = 0.0;
};

inline double unit_constant_mode(int d) { return d == 2 ? 1.0 / std::sqrt(2.0 * std::numbers::pi) : 1.0 / std::sqrt(4.0 * std::numbers::pi); }
inline double unit_linear_scale(int d) { return d == 2 ? 1.0 / std::sqrt(std::numbers::pi) : std::sqrt(3.0 / (4.0 * std::numbers::pi)); }

inline RegularConstants regular_constants(int d) {
  static const RegularConstants cache[2] = {[] {
    RegularConstants k;
    ModelSolution he = make_he(2, {1.0, 0.0, 0.0}), u0 = make_u0(2);
    for (const auto& q : singular_sphere_rule(2, {1.0, 0.0, 0.0}, 96)) {
      k.he_lin += q.w * he.value(q.x) * unit_linear_scale(2) * q.x[0];
      k.he_const += q.w * he.value(q.x) * unit_constant_mode(2);
      k.u0_const += q.w * u0.value(q.x) * unit_constant_mode(2);
    }
    return k;
  }(), [] {
    RegularConstants k;
    ModelSolution he = make_he(3, {1.0, 0.0, 0.0}), u0 = make_u0(3);
    for (const auto& q : singular_sphere_rule(3, {1.0, 0.0, 0.0}, 96)) {
      k.he_lin += q.w * he.value(q.x) * unit_linear_scale(3) * q.x[0];
      k.he_const += q.w * he.value(q.x) * unit_constant_mode(3);
      k.u0_const += q.w * u0.value(q.x) * unit_constant_mode(3);
    }
    return k;
  }()};
  if (d != 2 && d != 3) throw std::invalid_argument("regular_constants: d must be 2 or 3");
  return cache[d - 2];
}

inline CompetitorRecipe build_regular(const TraceExpansion& c) {
  int d = c.d();
  if (c.table->slit) throw std::invalid_argument("build_regular: even table required");
  if (c.table->K < 1) throw std::invalid_argument("build_regular: table must contain the linear modes");
  require_admissible(c);
  const RegularConstants& K = regular_constants(d);
  CompetitorRecipe r;
  r.kind = "regular_3_2";
  r.d = d;
  r.base = 1.5;
  r.alpha = 2.0;
  r.kappa = kappa(2.0, 1.5, d);
  r.trace = c;
  double lin = 0.0;
  if (d == 2) {
    double c1 = c.coef[c.table->find(1.0, 0)];
    lin = std::abs(c1);
    if (c1 < 0.0) r.e = {-1.0, 0.0, 0.0};
  } else {
    double cx = c.coef[c.table->find(1.0, 1)], cy = c.coef[c.table->find(1.0, -1)];
    lin = std::hypot(cx, cy);
    if (lin > 0.0) r.e = {cx / lin, cy / lin, 0.0};
  }
  r.C = lin / K.he_lin;
  r.c0 = (c.coef[c.table->find(0.0, 0)] - r.C * K.he_const) / K.u0_const;
  ModelSolution he = make_he(d, r.e), u0 = make_u0(d);
  const double C = r.C, c0 = r.c0;
  r.phi = [c, he, u0, C, c0](const Point& x, double& v, Point& g) {
    c.value_grad(x, v, g);
    v -= C * he.value(x) + c0 * u0.value(x);
    g = g - tangential(C * he.grad(x) + c0 * u0.grad(x), x);
  };
  auto phi = r.phi;
  r.value = [he, u0, C, c0, phi](const Point& x) {
    double rr = norm(x), v;
    Point g;
    phi((1.0 / rr) * x, v, g);
    return C * he.value(x) + c0 * u0.value(x) + rr * rr * v;
  };
  // phi has no constant or linear content
  double worst = 0.0;
  std::vector<double> modes(c.table->size());
  std::vector<double> proj(c.table->size(), 0.0);
  for (const auto& q : singular_sphere_rule(d, r.e, 48)) {
    double v;
    Point g;
    phi(q.x, v, g);
    c.table->evaluate(q.x, modes.data(), nullptr);
    for (std::size_t j = 0; j < modes.size(); ++j)
      if (c.table->entries[j].alpha <= 1.0) proj[j] += q.w * v * modes[j];
  }
  for (double p : proj) worst = std::max(worst, std::abs(p));
  if (worst > 1e-10 * std::max(1.0, std::sqrt(c.norm_sq())))
    throw std::logic_error("build_regular: remainder has constant or linear content");
  return r;
}

inline EpiReport verify_regular(const TraceExpansion& c, int n = 48) {
  CompetitorRecipe r = build_regular(c);
  int d = r.d;
  EpiReport rep;
  rep.kind = r.kind;
  rep.d = d;
  rep.Wz = weiss_fourier(c, 1.5, 1.5).total;
  double I0 = 0.0, I1 = 0.0;
  for (const auto& q : singular_sphere_rule(d, r.e, n)) {
    double v;
    Point g;
    r.phi(q.x, v, g);
    I0 += q.w * v * v;
    I1 += q.w * dot(g, g);
  }
  double W_phi = (4.0 * I0 + I1) / (d + 2.0) - 1.5 * I0;
  SphereFn phi_val = [&r](const Point& x) {
    double v;
    Point g;
    r.phi(x, v, g);
    return v;
  };
  double pair_u0 = distributional_laplacian_pairing(make_u0(d), phi_val, 2.0, n, r.e);
  double pair_he = distributional_laplacian_pairing(make_he(d, r.e), phi_val, 2.0, n);
  double cross = -2.0 * (r.c0 * pair_u0 + r.C * pair_he);
  double abs_xd = ball_abs_xd_integral(d);
  rep.Wh = -0.75 * abs_xd * r.c0 * r.c0 + W_phi + cross;
  rep.factor = r.kappa;
  rep.gap = rep.Wh - (1.0 - r.kappa) * rep.Wz;
  rep.tol = 1e-8 * (1.0 + std::abs(rep.Wz));
  rep.pass = rep.gap <= rep.tol;
  rep.bound2_name = "c0_term";
  rep.bound2 = -0.75 * r.kappa * r.c0 * r.c0 * abs_xd;
  rep.pass2 = rep.gap <= rep.bound2 + rep.tol;
  double predicted = rep.bound2 + r.kappa / (d + 2.0) * (2.0 * d * I0 - I1);
  rep.diagnostics = r.to_json();
  rep.diagnostics["phi_norm_sq"] = I0;
  rep.diagnostics["phi_grad_norm_sq"] = I1;
  rep.diagnostics["identity_residual"] = rep.gap - predicted;
  return rep;
}

// ---------------------------------------------------------------------------
// Singular case, homogeneity 2m

inline double singular_gamma(int d) { return (d - 2.0) / d; }

/// (lambda(2m+1) - lambda(2m+1/2)) / lambda(2m+1).
inline double singular_C2(int d, int m) {
  double l1 = eigenvalue_of_homogeneity(2.0 * m + 1.0, d), lh = eigenvalue_of_homogeneity(2.0 * m + 0.5, d);
  return (l1 - lh) / l1;
}

/// (4m + d) ||h_{2m}||^2.
inline double singular_C1(int d, int m) { return (4.0 * m + d) * h2m_norm_sq(d, m); }

/// Rescales c so that ||c||^2 <= 1 and |W_{2m}(z)| <= 1 with one of them equal to 1.
inline TraceExpansion normalize_singular(const TraceExpansion& c, int m) {
  double w = std::abs(weiss_fourier(c, 2.0 * m, 2.0 * m).total);
  double s = std::max(c.norm_sq(), w);
  if (s == 0.0) return c;
  return c.scaled(1.0 / std::sqrt(s));
}

inline CompetitorRecipe build_singular(const TraceExpansion& c, int m, double eps) {
  int d = c.d();
  if (c.table->slit || c.table->K < 2 * m) throw std::invalid_argument("build_singular: even table with K >= 2m required");
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("build_singular: eps must lie in (0, 1)");
  require_admissible(c);
  const double mu = 2.0 * m;
  CompetitorRecipe r;
  r.kind = "singular_2m";
  r.d = d;
  r.m = m;
  r.param = eps;
  r.base = mu;
  r.trace = c;
  r.alpha_a = mu;
  ModeSplit sp = split_modes(c, mu);
  TraceExpansion P = sp.below + sp.at;
  r.grad_phi_sq = sp.above.grad_norm_sq();
  double Wz = weiss_fourier(c, mu, mu).total;
  if (Wz <= 0.0) {
    r.trivial = true;
    r.alpha = r.alpha_b = mu;
    r.piece_a = c;
    r.piece_b = zero_trace(c.table);
  } else {
    r.M = std::max(0.0, -equator_min(P).value);
    double kbar = eps * std::pow(r.grad_phi_sq, singular_gamma(d));
    r.alpha = (mu + kbar * (mu + d - 2.0)) / (1.0 - kbar);
    if (r.alpha > mu + 0.5 + 1e-12)
      throw CompetitorError(CompetitorError::Kind::epsilon_too_large, "build_singular: alpha exceeds 2m + 1/2, lower epsilon");
    TraceExpansion h = h2m_expansion(c.table, m);
    r.piece_a = P + h.scaled(r.M);
    r.piece_b = sp.above + h.scaled(-r.M);
    r.alpha_b = r.alpha;
  }
  r.kappa = kappa(r.alpha, mu, d);
  TraceExpansion A = r.piece_a, B = r.piece_b;
  double aa = r.alpha_a, ab = r.alpha_b;
  r.value = [A, B, aa, ab](const Point& x) {
    double rr = norm(x);
    Point th = (1.0 / rr) * x;
    return std::pow(rr, aa) * A.value(th) + std::pow(rr, ab) * B.value(th);
  };
  return r;
}

inline EpiReport verify_singular(const TraceExpansion& c, int m, double eps) {
  CompetitorRecipe r = build_singular(c, m, eps);
  int d = r.d;
  const double mu = 2.0 * m, g = singular_gamma(d);
  EpiReport rep;
  rep.kind = r.kind;
  rep.d = d;
  rep.m = m;
  rep.Wz = weiss_fourier(c, mu, mu).total;
  rep.Wh = weiss_fourier_two(r.piece_a, r.alpha_a, r.piece_b, r.alpha_b, mu);
  rep.factor = eps * std::pow(std::abs(rep.Wz), g);
  rep.gap = rep.Wh - (1.0 - rep.factor) * rep.Wz;
  rep.tol = 1e-8 * (1.0 + std::abs(rep.Wz));
  rep.pass = rep.gap <= rep.tol;
  rep.bound2_name = "improved";
  rep.diagnostics = r.to_json();
  if (r.trivial) {
    rep.bound2 = 0.0;
    rep.pass2 = true;
    rep.diagnostics["improved_applicable"] = false;
    return rep;
  }
  rep.bound2 = -0.5 * singular_C2(d, m) * eps * std::pow(r.grad_phi_sq, 1.0 + g);
  rep.pass2 = rep.gap <= rep.bound2 + rep.tol;
  rep.diagnostics["improved_applicable"] = true;
  // closed form of W(h) - (1 - kappa) W(z)
  ModeSplit sp = split_modes(c, mu);
  double la = eigenvalue_of_homogeneity(r.alpha, d), den = d + 2.0 * r.alpha - 2.0, k = r.kappa, hi = 0.0;
  for (std::size_t j = 0; j < c.coef.size(); ++j)
    hi += (c.table->entries[j].lambda - la) * sp.above.coef[j] * sp.above.coef[j];
  double closed = k * weiss_fourier(sp.below, mu, mu).total +
                  r.M * r.M * h2m_norm_sq(d, m) * k * k * std::pow(r.alpha + mu + d - 2.0, 2) / den - k / den * hi;
  rep.diagnostics["identity_residual"] = rep.Wh - (1.0 - k) * rep.Wz - closed;
  rep.diagnostics["C3_ratio"] = r.grad_phi_sq > 0.0 ? r.M * r.M / std::pow(r.grad_phi_sq, 1.0 - g) : 0.0;
  return rep;
}

struct EpsilonCalibration {
  int d = 2, m = 1;
  double C1 = 0.0, C2 = 0.0, C3_hat = 0.0, G_hat = 0.0, kappa_cap = 0.0, safety = 0.5, eps = 0.0;
  std::size_t samples = 0;

  nlohmann::json to_json() const {
    return {{"d", d},         {"m", m},           {"C1", C1},   {"C2", C2},     {"C3_hat", C3_hat}, {"G_hat", G_hat},
            {"kappa_cap", kappa_cap}, {"safety", safety}, {"eps", eps}, {"samples", samples}};
  }
};

/// Measures max M^2 / ||grad phi||^{2(1-gamma)} and max ||grad phi||^{2 gamma} over
/// normalized traces with W(z) > 0, then sets
/// eps = safety * min(kappa_{2m+1/2,2m} / G, C2 / (C1 C3)).
inline EpsilonCalibration calibrate_singular_epsilon(int d, int m, const std::vector<TraceExpansion>& traces,
                                                     double safety = 0.5) {
  EpsilonCalibration cal;
  cal.d = d;
  cal.m = m;
  cal.safety = safety;
  cal.C1 = singular_C1(d, m);
  cal.C2 = singular_C2(d, m);
  cal.kappa_cap = kappa(2.0 * m + 0.5, 2.0 * m, d);
  const double mu = 2.0 * m, g = singular_gamma(d);
  for (const auto& c : traces) {
    if (weiss_fourier(c, mu, mu).total <= 0.0) continue;
    ModeSplit sp = split_modes(c, mu);
    double g2 = sp.above.grad_norm_sq();
    if (g2 <= 0.0) continue;
    double M = std::max(0.0, -equator_min(sp.below + sp.at).value);
    cal.C3_hat = std::max(cal.C3_hat, M * M / std::pow(g2, 1.0 - g));
    cal.G_hat = std::max(cal.G_hat, std::pow(g2, g));
    ++cal.samples;
  }
  double e1 = cal.G_hat > 0.0 ? cal.kappa_cap / cal.G_hat : cal.kappa_cap;
  double e2 = cal.C3_hat > 0.0 ? cal.C2 / (cal.C1 * cal.C3_hat) : std::numeric_limits<double>::infinity();
  cal.eps = safety * std::min(e1, e2);
  return cal;
}

// ---------------------------------------------------------------------------
// Negative energy, homogeneity 2m

inline CompetitorRecipe build_negative(const TraceExpansion& c, int m, double eps) {
  int d = c.d();
  if (c.table->slit || c.table->K < 2 * m) throw std::invalid_argument("build_negative: even table with K >= 2m required");
  if (std::abs(c.norm_sq() - 1.0) > 1e-9) throw std::invalid_argument("build_negative: trace must have unit L2 norm");
  if (!(eps > 0.0)) throw std::invalid_argument("build_negative: eps must be positive");
  require_admissible(c);
  const double mu = 2.0 * m;
  CompetitorRecipe r;
  r.kind = "negative_2m";
  r.d = d;
  r.m = m;
  r.param = eps;
  r.base = mu;
  r.trace = c;
  r.alpha = (mu - eps * (mu + d - 2.0)) / (1.0 + eps);
  if (r.alpha <= mu - 1.0)
    throw CompetitorError(CompetitorError::Kind::epsilon_too_large, "build_negative: alpha at or below 2m - 1, lower epsilon");
  r.kappa = kappa(r.alpha, mu, d);
  ModeSplit sp = split_modes(c, mu);
  r.low_norm_sq = sp.below.norm_sq();
  r.M = std::max(0.0, -equator_min(sp.below).value);
  TraceExpansion h = h2m_expansion(c.table, m);
  r.piece_a = sp.below + h.scaled(r.M);
  r.alpha_a = r.alpha;
  r.piece_b = sp.at + h.scaled(-r.M) + sp.above;
  r.alpha_b = mu;
  r.trivial = r.low_norm_sq == 0.0;
  TraceExpansion A = r.piece_a, B = r.piece_b;
  double aa = r.alpha_a, ab = r.alpha_b;
  r.value = [A, B, aa, ab](const Point& x) {
    double rr = norm(x);
    Point th = (1.0 / rr) * x;
    return std::pow(rr, aa) * A.value(th) + std::pow(rr, ab) * B.value(th);
  };
  return r;
}

inline EpiReport verify_negative(const TraceExpansion& c, int m, double eps) {
  CompetitorRecipe r = build_negative(c, m, eps);
  const double mu = 2.0 * m;
  EpiReport rep;
  rep.kind = r.kind;
  rep.d = r.d;
  rep.m = m;
  rep.Wz = weiss_fourier(c, mu, mu).total;
  rep.Wh = weiss_fourier_two(r.piece_a, r.alpha_a, r.piece_b, r.alpha_b, mu);
  rep.factor = -eps;
  rep.gap = rep.Wh - (1.0 + eps) * rep.Wz;
  rep.tol = 1e-8 * (1.0 + std::abs(rep.Wz));
  rep.pass = rep.gap <= rep.tol;
  rep.bound2_name = "none";
  rep.diagnostics = r.to_json();
  rep.diagnostics["M_sq"] = r.M * r.M;
  return rep;
}

// ---------------------------------------------------------------------------
// Half-integer case in d = 2, homogeneity 2m - 1/2

/// Nodal sectors of sin((1 - 4m) theta / 2) on (0, 2 pi).
struct Sectors {
  int m = 1;
  std::vector<double> s;  ///< s_i = 2 i pi / (4m - 1), i = 0..2m

  explicit Sectors(int m_) : m(m_) {
    if (m < 1) throw std::invalid_argument("Sectors: m must be positive");
    for (int i = 0; i <= 2 * m; ++i) s.push_back(2.0 * i * std::numbers::pi / (4.0 * m - 1.0));
  }

  double homogeneity() const { return 2.0 * m - 0.5; }
  double h(double th) const { return std::sin((1.0 - 4.0 * m) * th / 2.0); }
  double dh(double th) const { return (1.0 - 4.0 * m) / 2.0 * std::cos((1.0 - 4.0 * m) * th / 2.0); }

  /// Intervals of sector j in 1..2m.
  std::vector<std::pair<double, double>> intervals(int j) const {
    const double tp = 2.0 * std::numbers::pi;
    if (j == 2 * m) return {{s[2 * m - 1], tp - s[2 * m - 1]}};
    return {{s[j - 1], s[j]}, {tp - s[j], tp - s[j - 1]}};
  }

  int sector_of(double th) const {
    double t = std::min(th, 2.0 * std::numbers::pi - th);
    int j = static_cast<int>(std::floor(t / s[1])) + 1;
    return std::clamp(j, 1, 2 * m);
  }

  std::vector<double> breaks() const {
    std::vector<double> b(s.begin(), s.end() - 1);
    for (int i = 2 * m - 1; i >= 0; --i) b.push_back(2.0 * std::numbers::pi - s[i]);
    return b;
  }

  /// Piecewise Gauss rule on (0, 2 pi) with nodes strictly inside each sector interval.
  Rule1D rule(int n = 40) const {
    Rule1D r;
    std::vector<double> b = breaks();
    for (std::size_t k = 0; k + 1 < b.size(); ++k) {
      Rule1D g = gauss_interval(b[k], b[k + 1], n);
      r.x.insert(r.x.end(), g.x.begin(), g.x.end());
      r.w.insert(r.w.end(), g.w.begin(), g.w.end());
    }
    return r;
  }
};

inline double slit_theta(const Point& x) { return ModelSolution::slit_angle(x); }

/// Trace value and theta-derivative of an expansion on the slit table.
inline void slit_trace_eval(const TraceExpansion& c, double th, double& v, double& dv) {
  Point g;
  Point x = circle_point(th);
  c.value_grad(x, v, g);
  dv = dot(g, Point{-std::sin(th), std::cos(th), 0.0});
}

/// Coefficients of h_{2m-1/2} on a slit table.
inline TraceExpansion half_integer_expansion(std::shared_ptr<const ModeTable> table, int m) {
  if (!table->slit) throw std::invalid_argument("half_integer_expansion: slit table required");
  int idx = table->find(2.0 * m - 0.5, 0);
  if (idx < 0) throw std::invalid_argument("half_integer_expansion: table too small");
  TraceExpansion e = zero_trace(table);
  e.coef[idx] = -std::sqrt(std::numbers::pi);
  return e;
}

inline CompetitorRecipe build_half_integer(const TraceExpansion& c, int m, double delta) {
  if (!c.table->slit) throw std::invalid_argument("build_half_integer: slit table required");
  TraceExpansion diff = c + half_integer_expansion(c.table, m).scaled(-1.0);
  if (std::sqrt(diff.norm_sq()) > delta * (1.0 + 1e-12))
    throw InvalidTrace("build_half_integer: trace is farther than delta from h_{2m-1/2}");
  require_admissible(c);
  Sectors S(m);
  const int n = 2 * m;
  Rule1D rule = S.rule();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (std::size_t q = 0; q < rule.size(); ++q) {
    double th = rule.x[q], w = rule.w[q], v, dv;
    slit_trace_eval(c, th, v, dv);
    int j = S.sector_of(th);
    for (int k = 0; k < n; ++k) {
      double ck = std::cos(k * th);
      G(k, j - 1) += w * S.h(th) * ck;
      b(k) += w * v * ck;
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(G);
  if (lu.rank() < n) throw CompetitorError(CompetitorError::Kind::singular_system, "build_half_integer: projection matrix is singular");
  Eigen::VectorXd a = lu.solve(b);
  CompetitorRecipe r;
  r.kind = "half_integer_2d";
  r.d = 2;
  r.m = m;
  r.param = delta;
  r.base = S.homogeneity();
  r.alpha = 2.0 * m;
  r.kappa = kappa(r.alpha, r.base, 2);
  r.trace = c;
  r.a.assign(a.data(), a.data() + n);
  r.s = S.s;
  if (!(r.a.back() > 0.0))
    throw CompetitorError(CompetitorError::Kind::delta_too_large, "build_half_integer: a_2m <= 0, delta too large");
  std::vector<double> amp = r.a;
  r.c_tilde = [c, S, amp](double th, double& v, double& dv) {
    slit_trace_eval(c, th, v, dv);
    double a = amp[S.sector_of(th) - 1];
    v -= a * S.h(th);
    dv -= a * S.dh(th);
  };
  auto ct = r.c_tilde;
  double base = r.base, alpha = r.alpha;
  r.value = [S, amp, ct, base, alpha](const Point& x) {
    double rr = std::hypot(x[0], x[1]), th = slit_theta(x), v, dv;
    ct(th, v, dv);
    return std::pow(rr, base) * amp[S.sector_of(th) - 1] * S.h(th) + std::pow(rr, alpha) * v;
  };
  return r;
}

/// W_{2m-1/2} of sum_j b_j r^{2m-1/2} f_j by quadrature.
inline double sector_energy(const std::vector<double>& bj, int m) {
  Sectors S(m);
  Rule1D rule = S.rule();
  double a = S.homogeneity(), I0 = 0.0, I1 = 0.0;
  for (std::size_t q = 0; q < rule.size(); ++q) {
    double th = rule.x[q], w = rule.w[q], bb = bj.at(S.sector_of(th) - 1);
    I0 += w * bb * bb * S.h(th) * S.h(th);
    I1 += w * bb * bb * S.dh(th) * S.dh(th);
  }
  return (a * a * I0 + I1) / (2.0 * a) - a * I0;
}

inline EpiReport verify_half_integer(const TraceExpansion& c, int m, double delta) {
  CompetitorRecipe r = build_half_integer(c, m, delta);
  Sectors S(m);
  const double mu = r.base, al = r.alpha, k = r.kappa;
  EpiReport rep;
  rep.kind = r.kind;
  rep.d = 2;
  rep.m = m;
  rep.Wz = weiss_fourier(c, mu, mu).total;
  // residual energies and the sector cross term
  Rule1D rule = S.rule();
  double I0 = 0.0, I1 = 0.0, FC = 0.0, dFdC = 0.0;
  for (std::size_t q = 0; q < rule.size(); ++q) {
    double th = rule.x[q], w = rule.w[q], v, dv;
    r.c_tilde(th, v, dv);
    double a = r.a[S.sector_of(th) - 1];
    I0 += w * v * v;
    I1 += w * dv * dv;
    FC += w * a * S.h(th) * v;
    dFdC += w * a * S.dh(th) * dv;
  }
  double bdry = 0.0;
  for (int j = 1; j <= 2 * m; ++j)
    for (auto [lo, hi] : S.intervals(j)) {
      double vl, dl, vh, dh;
      r.c_tilde(lo, vl, dl);
      r.c_tilde(hi, vh, dh);
      // c_tilde equals c on sector boundaries
      if (lo == 0.0) vl = 0.0;
      bdry += r.a[j - 1] * (S.dh(hi) * vh - S.dh(lo) * vl);
    }
  double W_sectors = sector_energy(r.a, m);
  double W_ct_alpha = (al * al * I0 + I1) / (2.0 * al) - mu * I0;
  double W_ct_mu = (mu * mu * I0 + I1) / (2.0 * mu) - mu * I0;
  double cross_h = 2.0 / (al + mu) * bdry, cross_z = 2.0 / (2.0 * mu) * bdry;
  rep.Wh = W_sectors + W_ct_alpha + cross_h;
  double helps = 2.0 / (al + mu) - (1.0 - k) * 2.0 / (4.0 * m - 1.0);
  if (std::abs(helps) > 1e-12) throw std::logic_error("verify_half_integer: kappa cancellation fails");
  rep.factor = k;
  rep.gap = rep.Wh - (1.0 - k) * rep.Wz;
  rep.tol = 1e-8 * (1.0 + std::abs(rep.Wz));
  rep.pass = rep.gap <= rep.tol;
  rep.bound2_name = "none";
  rep.diagnostics = r.to_json();
  rep.diagnostics["kappa_cancellation"] = helps;
  rep.diagnostics["sector_energy"] = W_sectors;
  rep.diagnostics["Wz_decomposition_residual"] = W_sectors + W_ct_mu + cross_z - rep.Wz;
  rep.diagnostics["cross_direct_residual"] = 2.0 * ((al * mu * FC + dFdC) / (al + mu) - mu * FC) - cross_h;
  return rep;
}

// ---------------------------------------------------------------------------
// Admissible-trace fuzzing

/// Adds a multiple of profile (equal to 1 on the equator) so the equator
/// minimum becomes a random fraction of its old magnitude, exactly zero with
/// probability 1/4. Returns the multiple.
inline double make_admissible(TraceExpansion& c, CounterRng& rng, const TraceExpansion& profile) {
  EquatorMin mn = equator_min(c);
  bool touch = rng.uniform() < 0.25;
  double frac = rng.uniform(0.0, 0.3);
  if (mn.value >= 0.0) return 0.0;
  double shift = (touch ? 0.0 : frac * (-mn.value)) - mn.value;
  c = c + profile.scaled(shift);
  return shift;
}

/// The constant trace 1.
inline TraceExpansion unit_constant(std::shared_ptr<const ModeTable> table) {
  TraceExpansion e = zero_trace(table);
  e.coef[table->find(0.0, 0)] = 1.0 / unit_constant_mode(table->d);
  return e;
}

/// Random band-limited admissible trace for the regular case.
inline TraceExpansion fuzz_regular_trace(int d, std::uint64_t seed, std::uint64_t index, int K = 6) {
  CounterRng rng(seed, 1, index);
  auto table = make_table(d, K);
  TraceExpansion c = zero_trace(table);
  for (std::size_t j = 0; j < c.coef.size(); ++j) c.coef[j] = rng.normal(0.0, 1.0 / (1.0 + 0.5 * table->entries[j].alpha));
  make_admissible(c, rng, unit_constant(table));
  return c;
}

/// Random admissible trace under the singular normalization; the admissibility
/// shift uses h_{2m}, which leaves W_{2m}(z) unchanged.
inline TraceExpansion fuzz_singular_trace(int d, int m, std::uint64_t seed, std::uint64_t index) {
  CounterRng rng(seed, 2, index);
  auto table = make_table(d, 2 * m + 2);
  TraceExpansion c = zero_trace(table);
  const double mu = 2.0 * m;
  for (std::size_t j = 0; j < c.coef.size(); ++j) {
    double a = table->entries[j].alpha;
    double sd = a < mu ? 0.3 : (a == mu ? 1.0 : 1.0 / (a - mu));
    c.coef[j] = rng.normal(0.0, sd);
  }
  make_admissible(c, rng, h2m_expansion(table, m));
  return normalize_singular(c, m);
}

/// Random admissible unit-norm trace for the negative-energy case.
inline TraceExpansion fuzz_negative_trace(int d, int m, std::uint64_t seed, std::uint64_t index) {
  CounterRng rng(seed, 3, index);
  auto table = make_table(d, 2 * m + 2);
  TraceExpansion c = zero_trace(table);
  const double mu = 2.0 * m;
  for (std::size_t j = 0; j < c.coef.size(); ++j) {
    double a = table->entries[j].alpha;
    c.coef[j] = rng.normal(0.0, a < mu ? 1.0 : (a == mu ? 0.7 : 0.4));
  }
  make_admissible(c, rng, unit_constant(table));
  return c.scaled(1.0 / std::sqrt(c.norm_sq()));
}

/// h_{2m-1/2} plus a slit-mode perturbation of norm at most delta.
inline TraceExpansion fuzz_half_integer_trace(int m, double delta, std::uint64_t seed, std::uint64_t index, int extra = 6) {
  CounterRng rng(seed, 4, index);
  auto table = make_table(2, 2 * m + extra, true);
  TraceExpansion g = zero_trace(table);
  for (double& x : g.coef) x = rng.normal();
  g = g.scaled(delta * rng.uniform(0.05, 1.0) / std::sqrt(g.norm_sq()));
  return half_integer_expansion(table, m) + g;
}

/// Singular epsilon calibrated on n fuzzed traces of the given seed.
inline EpsilonCalibration reference_singular_epsilon(int d, int m, std::size_t n = 300, std::uint64_t seed = 2024) {
  std::vector<TraceExpansion> corpus;
  corpus.reserve(n);
  for (std::size_t i = 0; i < n; ++i) corpus.push_back(fuzz_singular_trace(d, m, seed, i));
  return calibrate_singular_epsilon(d, m, corpus);
}

/// Re-evaluates the pass flags with tolerance rel * (1 + |W(z)|).
inline void apply_tolerance(EpiReport& r, double rel) {
  r.tol = rel * (1.0 + std::abs(r.Wz));
  r.pass = r.gap <= r.tol;
  bool second = r.bound2_name == "c0_term" ||
                (r.bound2_name == "improved" && r.diagnostics.value("improved_applicable", false));
  if (second) r.pass2 = r.gap <= r.bound2 + r.tol;
}

// ---------------------------------------------------------------------------
// Campaign rows

struct CampaignRow {
  std::uint64_t seed = 0;
  std::size_t index = 0;
  EpiReport report;
  std::string error;  ///< non-empty when the item was rejected
};

inline std::string campaign_csv_header() { return "seed,index,case,d,m,W_z,W_h,factor,gap,pass,bound2,pass2,error\n"; }

inline std::string campaign_csv_row(const CampaignRow& row) {
  std::ostringstream os;
  os.precision(17);
  const EpiReport& r = row.report;
  os << row.seed << ',' << row.index << ',' << r.kind << ',' << r.d << ',' << r.m << ',' << r.Wz << ',' << r.Wh << ','
     << r.factor << ',' << r.gap << ',' << (r.pass ? 1 : 0) << ',' << r.bound2 << ',' << (r.pass2 ? 1 : 0) << ','
     << row.error << '\n';
  return os.str();
}

}  // namespace thinobs

#endif
