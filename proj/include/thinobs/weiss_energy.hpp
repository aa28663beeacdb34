#ifndef THINOBS_WEISS_ENERGY_HPP
#define THINOBS_WEISS_ENERGY_HPP

#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include <json.hpp>

#include "thinobs/quadrature.hpp"
#include "thinobs/spectral_basis.hpp"

namespace thinobs {

inline double kappa(double alpha, double mu, int d) { return (alpha - mu) / (alpha + mu + d - 2.0); }

struct WeissReport {
  int d = 2;
  double mu = 0.0;
  double alpha = 0.0;
  double total = 0.0;
  double kappa = 0.0;
  std::vector<double> contributions;
  std::vector<double> alphas, lambdas, coefs;

  nlohmann::json to_json() const {
    nlohmann::json j{{"d", d}, {"mu", mu}, {"alpha", alpha}, {"total", total}, {"kappa", kappa}};
    j["modes"] = nlohmann::json::array();
    for (std::size_t i = 0; i < contributions.size(); ++i)
      j["modes"].push_back({{"j", i}, {"alpha_j", alphas[i]}, {"lambda_j", lambdas[i]}, {"coef", coefs[i]},
                            {"contribution", contributions[i]}});
    return j;
  }

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "j,alpha_j,lambda_j,coef,contribution\n";
    for (std::size_t i = 0; i < contributions.size(); ++i)
      os << i << ',' << alphas[i] << ',' << lambdas[i] << ',' << coefs[i] << ',' << contributions[i] << '\n';
    return os.str();
  }
};

/// Energy W_mu of the alpha-homogeneous extension of a band-limited trace.
inline WeissReport weiss_fourier(const TraceExpansion& c, double alpha, double mu) {
  int d = c.d();
  if (!(d + 2.0 * alpha - 2.0 > 0.0)) throw std::invalid_argument("weiss_fourier: d + 2 alpha - 2 must be positive");
  WeissReport r;
  r.d = d;
  r.mu = mu;
  r.alpha = alpha;
  r.kappa = kappa(alpha, mu, d);
  for (std::size_t j = 0; j < c.coef.size(); ++j) {
    const Mode& m = c.table->entries[j];
    double v = c.coef[j] * c.coef[j] * ((alpha * alpha + m.lambda) / (d + 2.0 * alpha - 2.0) - mu);
    r.contributions.push_back(v);
    r.alphas.push_back(m.alpha);
    r.lambdas.push_back(m.lambda);
    r.coefs.push_back(c.coef[j]);
    r.total += v;
  }
  return r;
}

/// Bilinear Weiss form of r^a f and r^b g for band-limited traces on one table.
inline double weiss_fourier_bilinear(const TraceExpansion& f, double a, const TraceExpansion& g, double b, double mu) {
  int d = f.d();
  if (f.coef.size() != g.coef.size() || f.table->slit != g.table->slit)
    throw std::invalid_argument("weiss_fourier_bilinear: table mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < f.coef.size(); ++j)
    s += f.coef[j] * g.coef[j] * ((a * b + f.table->entries[j].lambda) / (a + b + d - 2.0) - mu);
  return s;
}

/// W_mu of r^a f + r^b g.
inline double weiss_fourier_two(const TraceExpansion& f, double a, const TraceExpansion& g, double b, double mu) {
  return weiss_fourier_bilinear(f, a, f, a, mu) + 2.0 * weiss_fourier_bilinear(f, a, g, b, mu) +
         weiss_fourier_bilinear(g, b, g, b, mu);
}

/// Right side of W(phi_alpha) - (1 - kappa) W(phi_mu) in closed form; checks it
/// against the difference of the two energies.
inline double weiss_identity_gap(const TraceExpansion& c, double alpha, double mu) {
  int d = c.d();
  double k = kappa(alpha, mu, d);
  double la = alpha * (alpha + d - 2.0);
  double s = 0.0;
  for (std::size_t j = 0; j < c.coef.size(); ++j) s += (la - c.table->entries[j].lambda) * c.coef[j] * c.coef[j];
  double closed = k / (d + 2.0 * alpha - 2.0) * s;
  double diff = weiss_fourier(c, alpha, mu).total - (1.0 - k) * weiss_fourier(c, mu, mu).total;
  double scale = std::max({1.0, std::abs(closed), std::abs(diff), c.grad_norm_sq() + c.norm_sq()});
  if (std::abs(closed - diff) > 1e-12 * scale)
    throw std::logic_error("weiss_identity_gap: closed form disagrees with energy difference");
  return closed;
}

/// A function on the ball known to be homogeneous of degree alpha.
struct HomogeneousFn {
  double alpha = 0.0;
  std::function<double(const Point&)> value;
  std::function<Point(const Point&)> grad;  ///< ambient gradient
};

/// Homogeneous extension of a trace: r^alpha c(x/|x|).
inline HomogeneousFn extend(const TraceExpansion& c, double alpha) {
  HomogeneousFn f;
  f.alpha = alpha;
  f.value = [c, alpha](const Point& x) {
    double r = norm(x);
    return std::pow(r, alpha) * c.value((1.0 / r) * x);
  };
  f.grad = [c, alpha](const Point& x) {
    double r = norm(x);
    Point th = (1.0 / r) * x;
    double v;
    Point g;
    c.value_grad(th, v, g);
    return std::pow(r, alpha - 1.0) * (alpha * v * th + g);
  };
  return f;
}

/// Sphere integrals <f, g> and <grad f, grad g> for a pair of functions.
struct SpherePair {
  double fg = 0.0;
  double grad = 0.0;
};

inline SpherePair sphere_pair(const HomogeneousFn& f, const HomogeneousFn& g, const SphereRule& rule) {
  SpherePair s;
  for (const auto& q : rule) {
    Point gf = tangential(f.grad(q.x), q.x), gg = tangential(g.grad(q.x), q.x);
    s.fg += q.w * f.value(q.x) * g.value(q.x);
    s.grad += q.w * dot(gf, gg);
  }
  return s;
}

/// Bilinear Weiss form for r^a f and r^b g from sphere integrals.
inline double weiss_bilinear(double a, double b, const SpherePair& s, double mu, int d) {
  return (a * b * s.fg + s.grad) / (a + b + d - 2.0) - mu * s.fg;
}

/// Checks f(x/2) = 2^{-alpha} f(x) on the rule nodes.
inline void check_homogeneous(const HomogeneousFn& f, const SphereRule& rule, double tol = 1e-6) {
  double scale = 0.0, err = 0.0;
  const double fac = std::pow(0.5, f.alpha);
  for (std::size_t i = 0; i < rule.size(); i += 7) {
    double v1 = f.value(rule[i].x), vh = f.value(0.5 * rule[i].x);
    scale = std::max(scale, std::abs(v1));
    err = std::max(err, std::abs(vh - fac * v1));
  }
  if (err > tol * scale + 1e-300)
    throw InvalidTrace("weiss_quadrature: function is not homogeneous of the declared degree");
}

/// Direct quadrature of W_mu for a sum of homogeneous pieces.
inline double weiss_quadrature_sum(const std::vector<HomogeneousFn>& pieces, double mu, int d, const SphereRule& rule) {
  for (const auto& p : pieces) check_homogeneous(p, rule);
  double w = 0.0;
  for (std::size_t i = 0; i < pieces.size(); ++i)
    for (std::size_t k = i; k < pieces.size(); ++k) {
      SpherePair s = sphere_pair(pieces[i], pieces[k], rule);
      double b = weiss_bilinear(pieces[i].alpha, pieces[k].alpha, s, mu, d);
      w += (i == k ? 1.0 : 2.0) * b;
    }
  return w;
}

/// Oracle for weiss_fourier: (alpha^2 I_0 + I_1)/(d + 2 alpha - 2) - mu I_0.
inline double weiss_quadrature(const HomogeneousFn& f, double mu, int d, const SphereRule& rule) {
  return weiss_quadrature_sum({f}, mu, d, rule);
}

inline double weiss_quadrature(const HomogeneousFn& f, double mu, int d, int n = 48) {
  return weiss_quadrature(f, mu, d, singular_sphere_rule(d, {1.0, 0.0, 0.0}, n));
}

inline std::pair<double, double> mumut_values(double norm_sq, double mu, double t, int d) {
  if (2.0 * mu + d - 2.0 <= 0.0) throw std::invalid_argument("mumut_values: 2 mu + d - 2 must be positive");
  double a = mu + t;
  double lam = a * (a + d - 2.0);
  double first = ((a * a + lam) / (d + 2.0 * a - 2.0) - mu) * norm_sq;
  double second = ((mu * mu + lam) / (d + 2.0 * mu - 2.0) - mu) * norm_sq;
  return {first, second};
}

/// (W_mu(r^{mu+t} c), W_mu(r^mu c)) for a minimizer with the eigen-relation imposed.
inline std::pair<double, double> mumut_check(const TraceExpansion& c, double mu, double t) {
  int d = c.d();
  if (2.0 * mu + d - 2.0 <= 0.0) throw std::invalid_argument("mumut_check: 2 mu + d - 2 must be positive");
  return mumut_values(c.norm_sq(), mu, t, d);
}

}  // namespace thinobs

#endif
