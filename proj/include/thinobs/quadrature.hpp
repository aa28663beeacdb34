#ifndef THINOBS_QUADRATURE_HPP
#define THINOBS_QUADRATURE_HPP

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace thinobs {

/// Point in R^3; two-dimensional callers leave the last entry at zero.
using Point = std::array<double, 3>;

inline double dot(const Point& a, const Point& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Point& a) { return std::sqrt(dot(a, a)); }
inline Point operator+(const Point& a, const Point& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Point operator-(const Point& a, const Point& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Point operator*(double s, const Point& a) { return {s * a[0], s * a[1], s * a[2]}; }

/// Tangential part of an ambient vector g at the sphere point x.
inline Point tangential(const Point& g, const Point& x) { return g - dot(g, x) * x; }

struct Rule1D {
  std::vector<double> x;
  std::vector<double> w;
  std::size_t size() const { return x.size(); }
};

struct SphereNode {
  Point x;
  double w;
};
using SphereRule = std::vector<SphereNode>;

/// Gauss-Legendre rule on [-1, 1] by Newton iteration on the three-term recurrence.
inline Rule1D gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
  Rule1D r;
  r.x.assign(n, 0.0);
  r.w.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double pm = 1.0, pc = z;
      for (int j = 2; j <= n; ++j) {
        double pn = ((2.0 * j - 1.0) * z * pc - (j - 1.0) * pm) / j;
        pm = pc;
        pc = pn;
      }
      dp = n * (z * pc - pm) / (z * z - 1.0);
      double dz = pc / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    r.x[i] = -z;
    r.x[n - 1 - i] = z;
    r.w[i] = r.w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return r;
}

/// Gauss-Legendre rule mapped to [a, b].
inline Rule1D gauss_interval(double a, double b, int n) {
  Rule1D g = gauss_legendre(n);
  double h = 0.5 * (b - a), c = 0.5 * (a + b);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.x[i] = c + h * g.x[i];
    g.w[i] *= h;
  }
  return g;
}

/// Composite rule on [a, b] graded quadratically toward both endpoints.
/// Each half uses x = end +- L s^2 with n Gauss nodes in s, so root-type
/// endpoint singularities become smooth in s.
inline Rule1D graded_interval(double a, double b, int n) {
  Rule1D g = gauss_interval(0.0, 1.0, n);
  Rule1D r;
  double mid = 0.5 * (a + b), L = mid - a;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double s = g.x[i];
    r.x.push_back(a + L * s * s);
    r.w.push_back(g.w[i] * 2.0 * L * s);
  }
  for (std::size_t i = g.size(); i-- > 0;) {
    double s = g.x[i];
    r.x.push_back(b - L * s * s);
    r.w.push_back(g.w[i] * 2.0 * L * s);
  }
  return r;
}

/// Graded composite rule over consecutive breakpoints.
inline Rule1D graded_breaks(const std::vector<double>& breaks, int n) {
  Rule1D r;
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    Rule1D p = graded_interval(breaks[k], breaks[k + 1], n);
    r.x.insert(r.x.end(), p.x.begin(), p.x.end());
    r.w.insert(r.w.end(), p.w.begin(), p.w.end());
  }
  return r;
}

inline Point circle_point(double theta) { return {std::cos(theta), std::sin(theta), 0.0}; }

/// Circle rule from an angular rule.
inline SphereRule circle_rule(const Rule1D& theta) {
  SphereRule r;
  r.reserve(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) r.push_back({circle_point(theta.x[i]), theta.w[i]});
  return r;
}

/// Uniform trapezoid angles 2*pi*i/N on [0, 2*pi).
inline Rule1D trapezoid_circle(int N) {
  Rule1D r;
  for (int i = 0; i < N; ++i) {
    r.x.push_back(2.0 * std::numbers::pi * i / N);
    r.w.push_back(2.0 * std::numbers::pi / N);
  }
  return r;
}

/// Gauss-Legendre in the polar cosine times uniform azimuth.
inline SphereRule sphere_product_rule(int nz, int nphi) {
  Rule1D g = gauss_legendre(nz);
  SphereRule r;
  r.reserve(static_cast<std::size_t>(nz) * nphi);
  for (int i = 0; i < nz; ++i) {
    double z = g.x[i], s = std::sqrt(std::max(0.0, 1.0 - z * z));
    for (int k = 0; k < nphi; ++k) {
      double ph = 2.0 * std::numbers::pi * k / nphi;
      r.push_back({{s * std::cos(ph), s * std::sin(ph), z}, g.w[i] * 2.0 * std::numbers::pi / nphi});
    }
  }
  return r;
}

/// Graded rule on S^2 adapted to a horizontal unit direction e.
/// Coordinates: x = cos(v) p + sin(v) (cos(w) e + sin(w) e3) with p = e3 x e.
/// Grading is applied at v in {0, pi} and w in {-pi, 0, pi}; this is the
/// singular set of h_e, u_0 and |x_3|^{-1/2}.
inline SphereRule sphere_graded_rule(const Point& e, int n) {
  Point p{-e[1], e[0], 0.0};
  Point e3{0.0, 0.0, 1.0};
  Rule1D rv = graded_interval(0.0, std::numbers::pi, n);
  Rule1D rw = graded_breaks({-std::numbers::pi, 0.0, std::numbers::pi}, n);
  SphereRule r;
  r.reserve(rv.size() * rw.size());
  for (std::size_t i = 0; i < rv.size(); ++i) {
    double cv = std::cos(rv.x[i]), sv = std::sin(rv.x[i]);
    for (std::size_t k = 0; k < rw.size(); ++k) {
      double cw = std::cos(rw.x[k]), sw = std::sin(rw.x[k]);
      Point x = cv * p + sv * (cw * e + sw * e3);
      r.push_back({x, rv.w[i] * rw.w[k] * sv});
    }
  }
  return r;
}

/// Graded rule for the thin-set singular set in the given dimension,
/// adapted to the direction e (ignored for d = 2 beyond symmetry).
inline SphereRule singular_sphere_rule(int d, const Point& e, int n) {
  if (d == 2) return circle_rule(graded_breaks({-std::numbers::pi, 0.0, std::numbers::pi}, n));
  if (d == 3) return sphere_graded_rule(e, n);
  throw std::invalid_argument("singular_sphere_rule: d must be 2 or 3");
}

}  // namespace thinobs

#endif
