// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "thinobs/competitors.hpp"
#include "thinobs/gap_certifier.hpp"
#include "thinobs/parallel.hpp"
#include "thinobs/signorini_solver.hpp"
#include "thinobs/special_solutions.hpp"
#include "thinobs/weiss_energy.hpp"

using namespace thinobs;

namespace {

constexpr std::uint64_t kSeed = 7;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

struct Tally {
  std::size_t n = 0, fail1 = 0, fail2 = 0, errors = 0;
  std::string str() const {
    std::ostringstream os;
    os << n << " items, " << fail1 << " violations, " << fail2 << " secondary violations, " << errors << " errors";
    return os.str();
  }
};

Tally campaign(std::size_t n, const std::function<EpiReport(std::size_t)>& run) {
  struct Row {
    bool ok1 = false, ok2 = false, err = false;
  };
  auto rows = parallel_map<Row>(n, [&](std::size_t i) {
    Row r;
    try {
      EpiReport rep = run(i);
      r.ok1 = rep.pass;
      r.ok2 = rep.pass2;
    } catch (const std::exception&) {
      r.err = true;
    }
    return r;
  });
  Tally t;
  t.n = n;
  for (const auto& r : rows) {
    if (r.err) {
      ++t.errors;
      continue;
    }
    if (!r.ok1) ++t.fail1;
    if (!r.ok2) ++t.fail2;
  }
  return t;
}

HomogeneousFn model_fn(const ModelSolution& s) {
  return {s.homogeneity(), [s](const Point& x) { return s.value(x); }, [s](const Point& x) { return s.grad(x); }};
}

// 1. gap constants for d = 3, m = 2
Outcome gap_constants() {
  auto t0 = std::chrono::steady_clock::now();
  GapCertificate g = certify_negative_gap(3, 2);
  double t = seconds_since(t0);
  Outcome o;
  o.pass = g.C1 == 16 && g.C2 == Rational(15, 4) && g.c_minus >= 0.0015 && g.c_minus <= 0.0025 && t < 1.0;
  o.detail = "C1=" + std::to_string(g.C1) + " C2=" + rational_string(g.C2) + fmt(" c_minus=%.6g", g.c_minus) + fmt(" (%.3f s)", t);
  return o;
}

// 2. regular fuzz, 500 per dimension
Outcome regular_fuzz() {
  auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  for (int d : {2, 3}) {
    Tally t = campaign(500, [d](std::size_t i) { return verify_regular(fuzz_regular_trace(d, kSeed, i)); });
    o.pass = o.pass && t.fail1 == 0 && t.fail2 == 0 && t.errors == 0;
    o.detail += "d=" + std::to_string(d) + ": " + t.str() + "; ";
  }
  double t = seconds_since(t0);
  o.pass = o.pass && t < 120.0;
  o.detail += fmt("%.1f s", t);
  return o;
}

// 3. logarithmic fuzz, 300 per (d, m), calibrated epsilon
Outcome singular_fuzz() {
  auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  for (int d : {2, 3})
    for (int m : {1, 2}) {
      const double eps = reference_singular_epsilon(d, m).eps;
      bool constant_factor = true;
      Tally t = campaign(300, [&](std::size_t i) {
        EpiReport r = verify_singular(fuzz_singular_trace(d, m, kSeed, i), m, eps);
        if (d == 2 && r.factor != eps) constant_factor = false;
        return r;
      });
      o.pass = o.pass && t.fail1 == 0 && t.fail2 == 0 && t.errors == 0 && constant_factor;
      o.detail += "(" + std::to_string(d) + "," + std::to_string(m) + ")" + fmt(" eps=%.4g: ", eps) + t.str() +
                  (d == 2 ? (constant_factor ? ", factor constant" : ", factor NOT constant") : "") + "; ";
    }
  double t = seconds_since(t0);
  o.pass = o.pass && t < 300.0;
  o.detail += fmt("%.1f s", t);
  return o;
}

// 4. negative energy, half-integer perturbations, sector nullity
Outcome negative_and_half_integer() {
  auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  const double eps = certify_negative_gap(3, 2).eps;
  Tally tn = campaign(300, [eps](std::size_t i) { return verify_negative(fuzz_negative_trace(3, 2, kSeed, i), 2, eps); });
  o.pass = tn.fail1 == 0 && tn.errors == 0;
  o.detail = "negative (3,2): " + tn.str() + "; ";
  for (int m : {1, 2}) {
    Tally th = campaign(200, [m](std::size_t i) { return verify_half_integer(fuzz_half_integer_trace(m, 0.05, kSeed, i), m, 0.05); });
    o.pass = o.pass && th.fail1 == 0 && th.errors == 0;
    o.detail += "half-integer m=" + std::to_string(m) + fmt(" kappa=%.4g: ", 1.0 / (8.0 * m - 1.0)) + th.str() + "; ";
  }
  std::mt19937_64 gen(kSeed);
  std::normal_distribution<double> N(0.0, 1.0);
  double worst = 0.0;
  for (int m : {1, 2})
    for (int i = 0; i < 50; ++i) {
      std::vector<double> b(2 * m);
      for (double& x : b) x = N(gen);
      worst = std::max(worst, std::abs(sector_energy(b, m)));
    }
  o.pass = o.pass && worst <= 1e-8;
  double t = seconds_since(t0);
  o.pass = o.pass && t < 180.0;
  o.detail += fmt("sector nullity max %.2e; ", worst) + fmt("%.1f s", t);
  return o;
}

// 5. Fourier and quadrature Weiss energies agree
Outcome oracle_equivalence() {
  Outcome o;
  std::mt19937_64 gen(kSeed);
  std::normal_distribution<double> N(0.0, 1.0);
  std::uniform_real_distribution<double> A(0.6, 4.0);
  double worst = 0.0;
  for (int d : {2, 3}) {
    auto t = make_table(d, 6);
    SphereRule rule = d == 2 ? circle_rule(trapezoid_circle(64)) : sphere_product_rule(20, 40);
    for (int it = 0; it < 100; ++it) {
      TraceExpansion e = zero_trace(t);
      for (double& c : e.coef) c = N(gen);
      double a = A(gen), mu = A(gen);
      double wf = weiss_fourier(e, a, mu).total;
      double wq = weiss_quadrature(extend(e, a), mu, d, rule);
      worst = std::max(worst, std::abs(wf - wq) / std::max(1.0, std::abs(wf)));
    }
  }
  double he2 = weiss_quadrature(model_fn(make_he(2, {1.0, 0.0, 0.0})), 1.5, 2);
  double he3 = weiss_quadrature(model_fn(make_he(3, {1.0, 0.0, 0.0})), 1.5, 3);
  double u0 = weiss_quadrature(model_fn(make_u0(2)), 1.5, 2);
  o.pass = worst <= 1e-6 && std::abs(he2) <= 1e-7 && std::abs(he3) <= 1e-7 && std::abs(u0 + 1.0) <= 1e-12;
  o.detail = fmt("max relative difference %.2e; ", worst) + fmt("W(h_e) d=2 %.2e, ", he2) + fmt("d=3 %.2e; ", he3) +
             fmt("W(u_0) d=2 %.15g", u0);
  return o;
}

// 6. h_2m construction
Outcome h2m_construction() {
  Outcome o;
  std::mt19937_64 gen(kSeed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double lap = 0.0, eq = 0.0;
  for (int d : {2, 3})
    for (int m = 1; m <= 4; ++m) {
      HarmonicPolynomial h = build_h2m(d, m);
      for (int i = 0; i < 500; ++i) {
        Point x{U(gen), U(gen), d == 3 ? U(gen) : 0.0};
        if (norm(x) > 1.0) continue;
        lap = std::max(lap, std::abs(h.laplacian(x)));
        double t = 2.0 * std::numbers::pi * (0.5 + 0.5 * U(gen));
        Point e = d == 2 ? Point{(i % 2 ? 1.0 : -1.0), 0.0, 0.0} : Point{std::cos(t), std::sin(t), 0.0};
        eq = std::max(eq, std::abs(h.value(e) - 1.0));
      }
    }
  HarmonicPolynomial h = build_h2m(3, 2);
  bool exact = h.C.size() == 3 && h.C[0] == Rational(1) && h.C[1] == Rational(-8) && h.C[2] == Rational(8, 3);
  o.pass = lap <= 1e-9 && eq <= 1e-12 && exact;
  std::string coefs;
  for (const auto& c : h.C) coefs += (coefs.empty() ? "" : ", ") + rational_string(c);
  o.detail = fmt("max |Laplacian| %.2e in the unit ball; ", lap) + fmt("max |h - 1| on the equator %.2e; ", eq) + "(3,2) coefficients [" +
             coefs + "]";
  return o;
}

// 7. solver model solutions at h = 1/256
Outcome solver_models() {
  Outcome o;
  const std::vector<double> radii = geometric_radii(0.1, 0.5, 8);
  const Point origin{0.0, 0.0, 0.0};
  double worst_time = 0.0;

  auto t0 = std::chrono::steady_clock::now();
  auto s = solve(SolveConfig{2, 1.0 / 256, nlohmann::json({{"kind", "model"}, {"name", "h32"}})});
  FrequencyProfile f = frequency_profile(*s, origin, 1.5, radii);
  worst_time = std::max(worst_time, seconds_since(t0));
  double nlo = 1e9, nhi = -1e9, wmax = 0.0;
  for (std::size_t i = 0; i < f.r.size(); ++i) {
    nlo = std::min(nlo, f.N[i]);
    nhi = std::max(nhi, f.N[i]);
    wmax = std::max(wmax, std::abs(f.W[i]));
  }
  bool ok_h32 = s->converged && nlo >= 1.45 && nhi <= 1.55 && wmax <= 5e-3 && f.monotone();
  o.detail = fmt("h32: N in [%.5f, ", nlo) + fmt("%.5f], ", nhi) + fmt("max |W| %.2e, ", wmax) + (f.monotone() ? "monotone" : "NOT monotone");

  t0 = std::chrono::steady_clock::now();
  auto q = solve(SolveConfig{2, 1.0 / 256, nlohmann::json({{"kind", "model"}, {"name", "h2m"}, {"m", 1}})});
  FrequencyProfile g = frequency_profile(*q, origin, 2.0, radii);
  worst_time = std::max(worst_time, seconds_since(t0));
  double dev = 0.0;
  for (double n : g.N) dev = std::max(dev, std::abs(n - 2.0));
  bool ok_q = q->converged && dev <= 0.05 && g.monotone();
  o.detail += fmt("; x1^2-x2^2: max |N-2| %.2e, ", dev) + (g.monotone() ? "monotone" : "NOT monotone");

  o.pass = ok_h32 && ok_q && worst_time < 180.0;
  o.detail += fmt("; slowest solve+profile %.2f s", worst_time);
  return o;
}

// 8. decay at a perturbed singular point
Outcome decay_property() {
  Outcome o;
  auto s = solve(SolveConfig{2, 1.0 / 256, nlohmann::json({{"kind", "expression"}, {"expr", "cos(2*theta) + 0.1*cos(4*theta)"}})});
  DecayReport r = decay_check(*s, {0.0, 0.0, 0.0}, 1);
  o.pass = s->converged && r.r.size() >= 6 && std::isfinite(r.beta_hat) && r.beta_hat > 0.0 && r.increments_monotone;
  o.detail = std::to_string(r.r.size()) + " rungs, " + fmt("beta_hat %.4f, ", r.beta_hat) +
             (r.increments_monotone ? "L1 increments decreasing" : "L1 increments NOT decreasing") +
             fmt(", increment exponent %.3f", r.increment_exponent);
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {"gap constant reproduction", gap_constants},
      {"regular epiperimetric fuzz", regular_fuzz},
      {"logarithmic epiperimetric fuzz", singular_fuzz},
      {"negative-energy and half-integer fuzz", negative_and_half_integer},
      {"Fourier-quadrature oracle equivalence", oracle_equivalence},
      {"h_2m construction", h2m_construction},
      {"solver model-solution suite", solver_models},
      {"decay property", decay_property},
  };
  int failed = 0, k = 0;
  for (const auto& c : criteria) {
    ++k;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    if (!o.pass) ++failed;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", k, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", k - failed, k);
  return failed == 0 ? 0 : 1;
}
