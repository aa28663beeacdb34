#ifndef THINOBS_GAP_CERTIFIER_HPP
#define THINOBS_GAP_CERTIFIER_HPP

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "thinobs/special_solutions.hpp"

namespace thinobs {

/// Dimension of the degree-l spherical harmonics on S^{d-1}.
inline long long harmonic_dimension(int d, int l) {
  auto binom = [](long long n, long long k) -> long long {
    if (k < 0 || n < k) return 0;
    long long r = 1;
    for (long long i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
  };
  return binom(l + d - 1, d - 1) - binom(l + d - 3, d - 1);
}

/// Number of sphere eigenfunctions (of either parity) with homogeneity below 2m.
inline int count_low_modes(int d, int m) {
  if (d < 2) throw std::invalid_argument("count_low_modes: d < 2");
  long long n = 0;
  for (int l = 0; l < 2 * m; ++l) n += harmonic_dimension(d, l);
  return static_cast<int>(n);
}

/// lambda(2m - 1/2) - lambda(2m - 1) as an exact rational.
inline Rational negative_C2(int d, int m) {
  Rational a(4 * m - 1, 2), b(2 * m - 1);
  return a * (a + d - 2) - b * (b + d - 2);
}

/// Smallest t in (0, 1] with (1 - eps t^gamma)(1 + t/(4m + d - 2)) = 1.
/// Returns 1 with root_found = false when no root lies in (0, 1].
struct PositiveGap {
  double t = 1.0;
  bool root_found = false;
  bool closed_form = false;
};

inline PositiveGap certify_positive_gap(int d, int m, double eps, double gamma) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("certify_positive_gap: eps must lie in (0, 1)");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("certify_positive_gap: gamma must lie in [0, 1)");
  const double n = 4.0 * m + d - 2.0;
  PositiveGap g;
  if (gamma == 0.0) {
    g.t = eps * n / (1.0 - eps);
    g.closed_form = true;
    g.root_found = g.t <= 1.0;
    if (!g.root_found) g.t = 1.0;
    return g;
  }
  auto f = [&](double t) { return (1.0 - eps * std::pow(t, gamma)) * (1.0 + t / n) - 1.0; };
  // scan a log grid for the first sign change, then bisect
  double lo = 0.0, hi = 0.0;
  double prev = 1e-16;
  for (int i = 1; i <= 4000; ++i) {
    double t = std::pow(10.0, -16.0 + 16.0 * i / 4000.0);
    if (f(prev) < 0.0 && f(t) >= 0.0) {
      lo = prev;
      hi = t;
      break;
    }
    prev = t;
  }
  if (hi == 0.0) return g;
  while (hi - lo > 1e-12 * std::max(1e-300, hi) && hi - lo > 1e-300) {
    double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  g.t = hi;
  g.root_found = true;
  return g;
}

/// Threshold t of (1 - 1/(2d+3))(1 + t/(d+1)) >= 1.
inline double regular_gap(int d) {
  if (d < 2) throw std::invalid_argument("regular_gap: d < 2");
  double k = 1.0 / (2.0 * d + 3.0);
  double t = (d + 1.0) * (1.0 / (1.0 - k) - 1.0);
  if (std::abs(t - 0.5) > 1e-14) throw std::logic_error("regular_gap: threshold is not 1/2");
  return 0.5;
}

struct GapCertificate {
  int d = 3;
  int m = 2;
  int C1 = 0;
  Rational C2;
  double norm_sq = 0.0;
  std::string norm_sq_exact;  ///< "q*pi" when exact
  double eps = 0.0;
  double c_minus = 0.0;
  double gamma = 0.0;
  double eps_singular = 0.0;  ///< calibrated epsilon used for c_plus; 0 when absent
  double c_plus = 0.0;
  bool c_plus_root_found = false;
  double regular_gap_value = 0.5;
  std::vector<std::string> notes;

  nlohmann::json to_json() const {
    nlohmann::json j{{"d", d},
                     {"m", m},
                     {"C1", C1},
                     {"C2", rational_string(C2)},
                     {"norm_sq", norm_sq},
                     {"norm_sq_exact", norm_sq_exact},
                     {"epsilon", eps},
                     {"c_minus", c_minus},
                     {"gamma", gamma},
                     {"regular_gap", regular_gap_value},
                     {"notes", notes}};
    if (eps_singular > 0.0) {
      j["epsilon_singular"] = eps_singular;
      j["c_plus"] = c_plus;
      j["c_plus_root_found"] = c_plus_root_found;
    } else {
      j["c_plus"] = nullptr;
    }
    return j;
  }
};

/// Constants of the negative-energy gap: eps = C2/(C1 ||h_{2m}||^2 (4m+d)^2) and
/// c^- = (4m+d-2) eps/(1+eps).
inline GapCertificate certify_negative_gap(int d, int m) {
  if (d < 2 || m < 1) throw std::invalid_argument("certify_negative_gap: need d >= 2 and m >= 1");
  GapCertificate g;
  g.d = d;
  g.m = m;
  g.C1 = count_low_modes(d, m);
  g.C2 = negative_C2(d, m);
  g.norm_sq = h2m_norm_sq(d, m);
  if (d == 3)
    g.norm_sq_exact = rational_string(h2m_norm_sq_over_pi_d3(build_h2m(3, m))) + "*pi";
  else if (d == 2)
    g.norm_sq_exact = "1*pi";
  else
    g.notes.push_back("norm_sq from Beta-function integrals in double precision");
  double n = 4.0 * m + d;
  g.eps = to_double(g.C2) / (g.C1 * g.norm_sq * n * n);
  g.c_minus = (n - 2.0) * g.eps / (1.0 + g.eps);
  g.gamma = (d - 2.0) / d;
  g.regular_gap_value = regular_gap(d);
  return g;
}

/// Adds c^+ computed with a calibrated singular epsilon.
inline GapCertificate& attach_positive_gap(GapCertificate& g, double eps_singular) {
  PositiveGap p = certify_positive_gap(g.d, g.m, eps_singular, g.gamma);
  g.eps_singular = eps_singular;
  g.c_plus = p.t;
  g.c_plus_root_found = p.root_found;
  g.notes.push_back("c_plus is conditional on the calibrated singular epsilon");
  if (!p.root_found) g.notes.push_back("no root in (0, 1]; c_plus floored at 1");
  return g;
}

}  // namespace thinobs

#endif
