#ifndef THINOBS_SPECIAL_SOLUTIONS_HPP
#define THINOBS_SPECIAL_SOLUTIONS_HPP

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include "thinobs/quadrature.hpp"

namespace thinobs {

using Rational = boost::multiprecision::cpp_rational;

inline std::string rational_string(const Rational& q) {
  std::string s = boost::multiprecision::numerator(q).str();
  if (boost::multiprecision::denominator(q) != 1) s += "/" + boost::multiprecision::denominator(q).str();
  return s;
}

inline double to_double(const Rational& q) { return q.convert_to<double>(); }

/// Even harmonic polynomial sum_n C_n x_d^{2n} |x'|^{2(m-n)} equal to 1 on the equator.
struct HarmonicPolynomial {
  int d = 2;
  int m = 1;
  std::vector<Rational> C;

  double value(const Point& x) const {
    double z = x[d - 1], rho2 = 0.0;
    for (int i = 0; i < d - 1; ++i) rho2 += x[i] * x[i];
    double s = 0.0;
    for (int n = 0; n <= m; ++n) s += to_double(C[n]) * std::pow(z, 2 * n) * std::pow(rho2, m - n);
    return s;
  }

  Point grad(const Point& x) const {
    double z = x[d - 1], rho2 = 0.0;
    for (int i = 0; i < d - 1; ++i) rho2 += x[i] * x[i];
    double dz = 0.0, drho2 = 0.0;
    for (int n = 0; n <= m; ++n) {
      double c = to_double(C[n]);
      if (n > 0) dz += c * 2.0 * n * std::pow(z, 2 * n - 1) * std::pow(rho2, m - n);
      if (m - n > 0) drho2 += c * std::pow(z, 2 * n) * (m - n) * std::pow(rho2, m - n - 1);
    }
    Point g{0.0, 0.0, 0.0};
    for (int i = 0; i < d - 1; ++i) g[i] = 2.0 * x[i] * drho2;
    g[d - 1] = dz;
    return g;
  }

  /// Pointwise Laplacian from the coefficient representation.
  double laplacian(const Point& x) const {
    double z = x[d - 1], rho2 = 0.0;
    for (int i = 0; i < d - 1; ++i) rho2 += x[i] * x[i];
    double s = 0.0;
    for (int n = 0; n <= m; ++n) {
      double c = to_double(C[n]);
      int k = m - n;
      if (n > 0) s += c * 2.0 * n * (2.0 * n - 1.0) * std::pow(z, 2 * n - 2) * std::pow(rho2, k);
      if (k > 0) s += c * std::pow(z, 2 * n) * 2.0 * k * (2.0 * k + d - 3.0) * std::pow(rho2, k - 1);
    }
    return s;
  }

  double coef_norm() const {
    double s = 0.0;
    for (const auto& c : C) s += to_double(c) * to_double(c);
    return std::sqrt(s);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["d"] = d;
    j["m"] = m;
    j["C"] = nlohmann::json::array();
    for (const auto& c : C) j["C"].push_back(rational_string(c));
    return j;
  }
};

inline HarmonicPolynomial build_h2m(int d, int m) {
  if (d < 2) throw std::invalid_argument("build_h2m: d < 2");
  if (m < 1) throw std::invalid_argument("build_h2m: m < 1");
  HarmonicPolynomial h;
  h.d = d;
  h.m = m;
  h.C.push_back(Rational(1));
  for (int n = 1; n <= m; ++n) {
    Rational num(2 * (m - n + 1) * (d - 1 + 2 * m - 2 * n));
    Rational den(2 * n * (2 * n - 1));
    h.C.push_back(-(num / den) * h.C.back());
  }
  return h;
}

/// ||h_{2m}||^2 on the unit sphere of R^3 as q * pi with q rational:
/// 2 pi int_{-1}^{1} (sum_n C_n z^{2n} (1 - z^2)^{m-n})^2 dz.
inline Rational h2m_norm_sq_over_pi_d3(const HarmonicPolynomial& h) {
  if (h.d != 3) throw std::invalid_argument("h2m_norm_sq_over_pi_d3: d must be 3");
  int m = h.m;
  std::vector<Rational> p(2 * m + 1, Rational(0));  // coefficients in z
  for (int n = 0; n <= m; ++n) {
    int k = m - n;
    Rational binom(1);
    for (int i = 0; i <= k; ++i) {
      // (1 - z^2)^k = sum_i binom(k,i) (-1)^i z^{2i}
      Rational term = h.C[n] * binom * ((i % 2) ? Rational(-1) : Rational(1));
      p[2 * n + 2 * i] += term;
      binom = binom * Rational(k - i) / Rational(i + 1);
    }
  }
  Rational integral(0);
  for (std::size_t a = 0; a < p.size(); ++a)
    for (std::size_t b = 0; b < p.size(); ++b) {
      std::size_t e = a + b;
      if (e % 2 == 0) integral += p[a] * p[b] * Rational(2) / Rational(static_cast<long long>(e + 1));
    }
  return 2 * integral;
}

/// ||h_{2m}||^2 on S^{d-1} from the 1D reduction
/// |S^{d-2}| int_{-1}^{1} h(z)^2 (1 - z^2)^{(d-3)/2} dz, using Beta integrals.
inline double h2m_norm_sq_beta(const HarmonicPolynomial& h) {
  int d = h.d, m = h.m;
  std::vector<double> p(2 * m + 1, 0.0);
  for (int n = 0; n <= m; ++n) {
    int k = m - n;
    double binom = 1.0;
    for (int i = 0; i <= k; ++i) {
      p[2 * n + 2 * i] += to_double(h.C[n]) * binom * ((i % 2) ? -1.0 : 1.0);
      binom = binom * (k - i) / (i + 1.0);
    }
  }
  double q = (d - 3.0) / 2.0, s = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a)
    for (std::size_t b = 0; b < p.size(); ++b)
      if ((a + b) % 2 == 0) s += p[a] * p[b] * std::beta((a + b) / 2.0 + 0.5, q + 1.0);
  double area = 2.0 * std::pow(std::numbers::pi, (d - 1.0) / 2.0) / std::tgamma((d - 1.0) / 2.0);
  return area * s;
}

/// ||h_{2m}||^2 on the unit sphere: pi for d = 2 (h_{2m} = cos 2m theta), exact
/// rational times pi for d = 3, Beta integrals otherwise.
inline double h2m_norm_sq(int d, int m) {
  if (d == 2) return std::numbers::pi;
  if (d == 3) return to_double(h2m_norm_sq_over_pi_d3(build_h2m(3, m))) * std::numbers::pi;
  return h2m_norm_sq_beta(build_h2m(d, m));
}

enum class ModelKind { he, u0, half_integer };

/// Closed-form model solutions on the unit ball.
struct ModelSolution {
  ModelKind kind = ModelKind::he;
  int d = 2;
  Point e{1.0, 0.0, 0.0};  ///< direction in the thin plane (he only)
  int m = 1;               ///< half_integer only

  double homogeneity() const { return kind == ModelKind::half_integer ? (4.0 * m - 1.0) / 2.0 : 1.5; }

  double xd(const Point& x) const { return x[d - 1]; }
  double along_e(const Point& x) const {
    double a = 0.0;
    for (int i = 0; i < d - 1; ++i) a += x[i] * e[i];
    return a;
  }

  double value(const Point& x) const {
    switch (kind) {
      case ModelKind::he: {
        std::complex<double> w(along_e(x), std::abs(xd(x)));
        return std::pow(w, 1.5).real();
      }
      case ModelKind::u0:
        return std::pow(std::abs(xd(x)), 1.5);
      case ModelKind::half_integer: {
        double r = std::hypot(x[0], x[1]);
        double th = slit_angle(x);
        double a = homogeneity();
        return std::pow(r, a) * std::sin((1.0 - 4.0 * m) * th / 2.0);
      }
    }
    return 0.0;
  }

  Point grad(const Point& x) const {
    Point g{0.0, 0.0, 0.0};
    switch (kind) {
      case ModelKind::he: {
        double b = std::abs(xd(x));
        std::complex<double> w(along_e(x), b);
        std::complex<double> s = 1.5 * std::sqrt(w);
        double da = s.real(), db = -s.imag();
        for (int i = 0; i < d - 1; ++i) g[i] = da * e[i];
        g[d - 1] = db * (xd(x) < 0.0 ? -1.0 : 1.0);
        return g;
      }
      case ModelKind::u0: {
        double z = xd(x);
        g[d - 1] = 1.5 * std::sqrt(std::abs(z)) * (z < 0.0 ? -1.0 : 1.0);
        return g;
      }
      case ModelKind::half_integer: {
        double r = std::hypot(x[0], x[1]);
        if (r == 0.0) return g;
        double th = slit_angle(x);
        double a = homogeneity(), k = (1.0 - 4.0 * m) / 2.0;
        double fr = a * std::pow(r, a - 1.0) * std::sin(k * th);
        double ft = std::pow(r, a - 1.0) * k * std::cos(k * th);
        g[0] = fr * std::cos(th) - ft * std::sin(th);
        g[1] = fr * std::sin(th) + ft * std::cos(th);
        return g;
      }
    }
    return g;
  }

  /// Radical expression (2a - rho) sqrt(rho + a) of the h_e formula; equals
  /// sqrt(2) times value() for every point.
  double radical_value(const Point& x) const {
    double a = along_e(x), b = xd(x);
    double rho = std::sqrt(a * a + b * b);
    return (2.0 * a - rho) * std::sqrt(rho + a);
  }

  static double slit_angle(const Point& x) {
    double th = std::atan2(x[1], x[0]);
    return th < 0.0 ? th + 2.0 * std::numbers::pi : th;
  }
};

inline ModelSolution make_he(int d, const Point& e) { return {ModelKind::he, d, e, 1}; }
inline ModelSolution make_u0(int d) { return {ModelKind::u0, d, {1.0, 0.0, 0.0}, 1}; }
inline ModelSolution make_half_integer(int m) { return {ModelKind::half_integer, 2, {1.0, 0.0, 0.0}, m}; }

using SphereFn = std::function<double(const Point&)>;

/// int_{dB_1} f^2 with a rule graded toward the thin-set singularities.
inline double l2_sphere_norm_sq(const SphereFn& f, int d, int n = 48) {
  SphereRule r = singular_sphere_rule(d, {1.0, 0.0, 0.0}, n);
  double s = 0.0;
  for (const auto& q : r) {
    double v = f(q.x);
    s += q.w * v * v;
  }
  return s;
}

/// int_{B_1} |x_d| over the unit ball (4/3 for d = 2, pi/2 for d = 3).
inline double ball_abs_xd_integral(int d) {
  if (d == 2) return 4.0 / 3.0;
  if (d == 3) return std::numbers::pi / 2.0;
  throw std::invalid_argument("ball_abs_xd_integral: d must be 2 or 3");
}

/// int_{dB_1} phi |theta_d|^{-1/2}; the rule is graded for a horizontal frame direction.
inline double sphere_inverse_root_integral(const SphereFn& phi, int d, int n = 48, const Point& frame = {1.0, 0.0, 0.0}) {
  SphereRule r = singular_sphere_rule(d, frame, n);
  double s = 0.0;
  for (const auto& q : r) s += q.w * phi(q.x) / std::sqrt(std::abs(q.x[d - 1]));
  return s;
}

/// int over the equator sphere of phi(theta') (theta'.e)_-^{1/2}.
inline double equator_negative_root_integral(const SphereFn& phi, int d, const Point& e, int n = 48) {
  if (d == 2) {
    double s = 0.0;
    for (double sg : {-1.0, 1.0}) {
      double t = sg * e[0];
      if (t < 0.0) s += phi({sg, 0.0, 0.0}) * std::sqrt(-t);
    }
    return s;
  }
  if (d != 3) throw std::invalid_argument("equator_negative_root_integral: d must be 2 or 3");
  Point p{-e[1], e[0], 0.0};
  Rule1D r = graded_interval(std::numbers::pi / 2.0, 1.5 * std::numbers::pi, n);
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    double c = std::cos(r.x[i]);
    Point x = c * e + std::sin(r.x[i]) * p;
    s += r.w[i] * phi(x) * std::sqrt(std::max(0.0, -c));
  }
  return s;
}

/// int_{B_1} psi Delta(sol) for psi = r^alpha phi(theta), through the reduced
/// boundary integrals. Delta u_0 = (3/4)|x_d|^{-1/2} and
/// Delta h_e = -3 (x'.e)_-^{1/2} on the thin plane for the normalization of value().
/// For u_0 the sphere rule is graded around the horizontal direction frame.
inline double distributional_laplacian_pairing(const ModelSolution& sol, const SphereFn& phi, double alpha, int n = 48,
                                               const Point& frame = {1.0, 0.0, 0.0}) {
  if (alpha <= 0.5) throw std::invalid_argument("distributional_laplacian_pairing: alpha must exceed 1/2");
  double radial = 1.0 / (sol.d + alpha - 0.5);
  switch (sol.kind) {
    case ModelKind::u0:
      return radial * 0.75 * sphere_inverse_root_integral(phi, sol.d, n, frame);
    case ModelKind::he:
      return -radial * 3.0 * equator_negative_root_integral(phi, sol.d, sol.e, n);
    default:
      throw std::invalid_argument("distributional_laplacian_pairing: only he and u0 are supported");
  }
}

}  // namespace thinobs

#endif
