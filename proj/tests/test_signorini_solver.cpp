#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "thinobs/competitors.hpp"
#include "thinobs/expression.hpp"
#include "thinobs/signorini_solver.hpp"

using namespace thinobs;

namespace {

nlohmann::json model(const std::string& name, int m = 0) {
  nlohmann::json j{{"kind", "model"}, {"name", name}};
  if (m > 0) j["m"] = m;
  return j;
}

std::shared_ptr<const GridSolution> run(int d, int N, const nlohmann::json& datum) {
  SolveConfig c;
  c.d = d;
  c.h = 1.0 / N;
  c.datum = datum;
  return solve(c);
}

double sup_error_half_ball(const GridSolution& s, const std::function<double(const Point&)>& exact) {
  double e = 0.0;
  for (std::size_t p = 0; p < s.u.size(); ++p) {
    Point x = s.node(p);
    if (norm(x) <= 0.5) e = std::max(e, std::abs(s.u[p] - exact(x)));
  }
  return e;
}

const Point origin{0.0, 0.0, 0.0};

}  // namespace

// ---------------------------------------------------------------------------
// Expression parser

TEST(Expression, Arithmetic) {
  Expression::Vars v{{"x", 0.5}, {"y", -2.0}};
  EXPECT_DOUBLE_EQ(Expression("1 + 2 * 3")(v), 7.0);
  EXPECT_DOUBLE_EQ(Expression("(1 + 2) * 3")(v), 9.0);
  EXPECT_DOUBLE_EQ(Expression("2 ^ 3 ^ 2")(v), 512.0);
  EXPECT_DOUBLE_EQ(Expression("-x^2")(v), -0.25);
  EXPECT_DOUBLE_EQ(Expression("x - y - 1")(v), 1.5);
  EXPECT_DOUBLE_EQ(Expression("8 / 4 / 2")(v), 1.0);
  EXPECT_DOUBLE_EQ(Expression("1e-1 * 10")(v), 1.0);
  EXPECT_DOUBLE_EQ(Expression("abs(y) + sqrt(4) + pow(x, 2)")(v), 4.25);
  EXPECT_NEAR(Expression("cos(pi) + atan2(1, 1)")(v), -1.0 + std::numbers::pi / 4.0, 1e-15);
  EXPECT_NEAR(Expression("exp(log(3)) + sin(0) + tan(0)")(v), 3.0, 1e-15);
}

TEST(Expression, Errors) {
  EXPECT_THROW(Expression("1 +"), std::invalid_argument);
  EXPECT_THROW(Expression("(1"), std::invalid_argument);
  EXPECT_THROW(Expression("1 2"), std::invalid_argument);
  EXPECT_THROW(Expression("foo(1)"), std::invalid_argument);
  EXPECT_THROW(Expression("sin(1, 2)"), std::invalid_argument);
  EXPECT_THROW(Expression("q")({}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Data

TEST(Datum, ModelsAndExpressions) {
  Datum a = make_datum(model("h2m", 1), 2);
  Datum b = make_datum({{"kind", "expression"}, {"expr", "x^2 - y^2"}, {"homogeneity", 2}}, 2);
  Datum c = make_datum({{"kind", "expression"}, {"expr", "cos(2*theta)"}, {"homogeneity", 2}}, 2);
  for (Point x : {Point{0.3, 0.4, 0.0}, Point{-1.2, 0.7, 0.0}, Point{0.0, -0.9, 0.0}}) {
    EXPECT_NEAR(a.value(x), x[0] * x[0] - x[1] * x[1], 1e-14);
    EXPECT_NEAR(b.value(x), a.value(x), 1e-14);
    EXPECT_NEAR(c.value(x), a.value(x), 1e-14);
  }
  Datum z = make_datum({{"kind", "expression"}, {"expr", "x^2 + y^2 - 2*z^2"}}, 3);
  EXPECT_NEAR(z.value({0.0, 0.0, 2.0}), -2.0, 1e-15);
  Datum e = make_datum({{"kind", "model"}, {"name", "h32"}, {"e", {0.0, 2.0}}}, 3);
  EXPECT_NEAR(e.value({0.0, 1.0, 0.0}), 1.0, 1e-15);
  EXPECT_NEAR(e.value({1.0, 0.0, 0.0}), 0.0, 1e-15);
  EXPECT_NEAR(e.value({0.0, 0.0, 1.0}), -std::sqrt(0.5), 1e-15);
}

TEST(Datum, FourierMatchesSynthesis) {
  for (int d : {2, 3}) {
    TraceExpansion c = fuzz_regular_trace(d, 3, 1);
    Datum f = make_datum({{"kind", "fourier"}, {"trace", trace_to_json(c)}}, d);
    for (Point x : {Point{0.6, 0.0, 0.8}, Point{0.0, 0.6, 0.8}, Point{-0.36, 0.48, 0.8}}) {
      if (d == 2) x = {x[0], x[1] + x[2], 0.0};
      x = (1.0 / norm(x)) * x;
      EXPECT_NEAR(f.value(x), c.value(x), 1e-12);
    }
    // Mode-wise homogeneous extension: the constant is kept, degree l scales by r^l.
    TraceExpansion k = unit_constant(c.table);
    Datum g = make_datum({{"kind", "fourier"}, {"trace", trace_to_json(k)}}, d);
    EXPECT_NEAR(g.value({0.2, 0.1, 0.0}), 1.0, 1e-13);
  }
}

TEST(Datum, Inadmissible) {
  EXPECT_THROW(make_datum({{"kind", "expression"}, {"expr", "-1"}}, 2), InvalidTrace);
  EXPECT_THROW(make_datum({{"kind", "expression"}, {"expr", "1 + y"}}, 2), InvalidTrace);
  EXPECT_THROW(make_datum({{"kind", "expression"}, {"expr", "1 + z"}}, 3), InvalidTrace);
  EXPECT_THROW(make_datum({{"kind", "expression"}, {"expr", "x"}}, 3), InvalidTrace);
  EXPECT_THROW(make_datum({{"kind", "model"}, {"name", "nope"}}, 2), std::invalid_argument);
  EXPECT_THROW(make_datum({{"kind", "model"}, {"name", "half_integer"}, {"m", 1}}, 3), std::invalid_argument);
  EXPECT_THROW(make_datum({{"kind", "table"}}, 2), std::invalid_argument);
  EXPECT_THROW(make_datum(model("one"), 4), std::invalid_argument);
}

TEST(SolveConfig, JsonRoundTrip) {
  SolveConfig c = SolveConfig::from_json({{"d", 3}, {"h", 0.125}, {"datum", model("one")}, {"omega", 1.2}});
  EXPECT_EQ(c.d, 3);
  EXPECT_EQ(c.tol, 1e-10);
  EXPECT_EQ(c.relaxation(), 1.2);
  SolveConfig b = SolveConfig::from_json(c.to_json());
  EXPECT_EQ(b.to_json(), c.to_json());
  EXPECT_EQ(SolveConfig::from_json({{"d", 3}, {"h", 0.125}, {"datum", model("one")}}).relaxation(), 1.5);
  EXPECT_EQ(SolveConfig::from_json({{"d", 2}, {"h", 0.125}, {"datum", model("one")}}).relaxation(), 1.7);
}

TEST(Solve, RejectsBadGrids) {
  SolveConfig c;
  c.datum = model("one");
  c.h = 0.3;
  EXPECT_THROW(solve(c), std::invalid_argument);
  c.h = 0.5;
  EXPECT_THROW(solve(c), std::invalid_argument);
  c.h = 1.0 / 8.0;
  c.d = 4;
  EXPECT_THROW(solve(c), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Model solutions

TEST(Solve, H32D2) {
  auto s = run(2, 64, model("h32"));
  EXPECT_TRUE(s->converged);
  EXPECT_LE(s->residual, 1e-9);
  ASSERT_NE(s->coarse, nullptr);
  EXPECT_EQ(s->coarse->N, 32);

  auto fb = detect_free_boundary(*s);
  ASSERT_EQ(fb.size(), 1u);
  EXPECT_LE(norm(fb[0].x), 2.0 * s->h);
  EXPECT_FALSE(fb[0].boundary_touching);

  FrequencyProfile f = frequency_profile(*s, origin, 1.5, geometric_radii(0.1, 0.5, 8));
  for (std::size_t k = 0; k < f.r.size(); ++k) {
    EXPECT_GE(f.N[k], 1.45);
    EXPECT_LE(f.N[k], 1.55);
    EXPECT_LE(std::abs(f.W[k]), 5e-3);
    EXPECT_NEAR(f.H_ratio[k], std::numbers::pi, 1e-2);
    EXPECT_NEAR(f.D_volume[k], f.D[k], 0.05 * f.D[k]);
  }
  EXPECT_TRUE(f.monotone());
  EXPECT_FALSE(f.mono_H.checked);
  Classification c = classify_point(f);
  EXPECT_EQ(c.label, "Reg");
  EXPECT_FALSE(c.unstable);
  EXPECT_TRUE(c.nondegenerate);
}

TEST(Solve, H32D3) {
  auto s = run(3, 32, model("h32"));
  EXPECT_TRUE(s->converged);
  auto fb = detect_free_boundary(*s);
  ASSERT_FALSE(fb.empty());
  int interior = 0;
  for (const auto& p : fb) {
    if (p.boundary_touching) continue;
    ++interior;
    EXPECT_LE(std::abs(p.x[0]), 2.0 * s->h) << p.x[1];
  }
  EXPECT_GE(interior, 40);
  FrequencyProfile f = frequency_profile(*s, origin, 1.5, geometric_radii(0.15, 0.6, 6));
  for (double n : f.N) EXPECT_NEAR(n, 1.5, 0.05);
  EXPECT_TRUE(f.monotone());
  EXPECT_EQ(classify_point(f).label, "Reg");
}

TEST(Solve, QuadraticIsItsOwnSolution) {
  for (int d : {2, 3}) {
    auto s = run(d, d == 2 ? 64 : 16, model("h2m", 1));
    HarmonicPolynomial p = build_h2m(d, 1);
    EXPECT_LE(sup_error_half_ball(*s, [&p](const Point& x) { return p.value(x); }), 1e-8);
    auto fb = detect_free_boundary(*s);
    ASSERT_EQ(fb.size(), 1u);
    EXPECT_TRUE(fb[0].isolated);
    EXPECT_LE(norm(fb[0].x), 1e-15);
    FrequencyProfile f = frequency_profile(*s, origin, 2.0, geometric_radii(d == 2 ? 0.1 : 0.2, 0.6, 6));
    for (std::size_t k = 0; k < f.r.size(); ++k) {
      EXPECT_NEAR(f.N[k], 2.0, 0.05);
      EXPECT_LE(std::abs(f.W[k]), f.mono_W.tau);
    }
    EXPECT_TRUE(f.monotone());
    Classification c = classify_point(f);
    EXPECT_EQ(c.label, "Sing(2)");
    EXPECT_EQ(c.m, 1);
    EXPECT_TRUE(c.nondegenerate);
  }
}

TEST(Solve, ConstantDatum) {
  for (int d : {2, 3}) {
    auto s = run(d, 16, model("one"));
    for (double v : s->u) EXPECT_NEAR(v, 1.0, 1e-8);
    EXPECT_TRUE(detect_free_boundary(*s).empty());
    EXPECT_EQ(solution_summary(*s)["contact_nodes"], 0);
  }
}

// The harmonic extension of |x_d|^{3/2} is positive on the open thin ball, so
// only the two zeros on the sphere remain, both boundary-touching.
TEST(Solve, U0TraceTouchesBoundary) {
  auto s = run(2, 64, model("u0"));
  auto fb = detect_free_boundary(*s);
  ASSERT_EQ(fb.size(), 2u);
  for (const auto& p : fb) {
    EXPECT_TRUE(p.boundary_touching);
    EXPECT_NEAR(std::abs(p.x[0]), 1.0, 1e-12);
  }
  EXPECT_EQ(solution_summary(*s)["contact_nodes"], 0);
}

TEST(Solve, HalfIntegerM2IsOther) {
  auto s = run(2, 128, model("half_integer", 2));
  EXPECT_TRUE(s->converged);
  ModelSolution e = make_half_integer(2);
  EXPECT_LE(sup_error_half_ball(*s, [&e](const Point& x) { return e.value(x); }), 1e-4);
  FrequencyProfile f = frequency_profile(*s, origin, 3.5, geometric_radii(0.1, 0.5, 8));
  Classification c = classify_point(f);
  EXPECT_EQ(c.label, "Other");
  EXPECT_NEAR(c.N_hat, 3.5, 0.1);
  for (double n : f.N) EXPECT_NEAR(n, 3.5, 0.05);
}

TEST(Solve, RefinementRatio) {
  for (int d : {2, 3}) {
    ModelSolution m = make_he(d, {1.0, 0.0, 0.0});
    std::vector<double> err;
    for (int N : d == 2 ? std::vector<int>{16, 32, 64} : std::vector<int>{8, 16, 32})
      err.push_back(sup_error_half_ball(*run(d, N, model("h32")), [&m](const Point& x) { return m.value(x); }));
    for (std::size_t k = 0; k + 1 < err.size(); ++k) EXPECT_GE(err[k] / err[k + 1], 1.7) << d << " " << k;
  }
}

// ---------------------------------------------------------------------------
// Invariants on fuzzed admissible data

TEST(Solve, InvariantsOnFuzzedData) {
  for (int d : {2, 3}) {
    for (int i = 0; i < (d == 2 ? 8 : 3); ++i) {
      TraceExpansion c = fuzz_regular_trace(d, 17, i);
      auto s = run(d, d == 2 ? 32 : 16, {{"kind", "fourier"}, {"trace", trace_to_json(c)}});
      ASSERT_TRUE(s->converged);
      double lo = 0.0, hi = 0.0;
      for (std::size_t p = 0; p < s->u.size(); ++p)
        if (s->fixed[p]) {
          lo = std::min(lo, s->u[p]);
          hi = std::max(hi, s->u[p]);
        }
      for (std::size_t p = 0; p < s->u.size(); ++p) {
        if (s->fixed[p]) continue;
        EXPECT_GE(s->u[p], lo - 1e-9);
        EXPECT_LE(s->u[p], hi + 1e-9);
        double avg = s->neighbor_average(p);
        if (s->on_plane(p)) {
          EXPECT_GE(s->u[p], 0.0);
          EXPECT_LE(std::abs(std::min(s->u[p], s->u[p] - avg)), 1e-8);
        } else {
          EXPECT_LE(std::abs(avg - s->u[p]), 1e-8);
        }
      }
    }
  }
}

TEST(Solve, Deterministic) {
  auto a = run(2, 32, model("h32")), b = run(2, 32, model("h32"));
  EXPECT_EQ(a->u, b->u);
  EXPECT_EQ(a->total_iterations, b->total_iterations);
}

TEST(Solve, OmegaFallbackAndNonConvergence) {
  SolveConfig c;
  c.h = 1.0 / 16.0;
  c.datum = model("h32");
  c.omega = 2.5;
  auto s = solve(c);
  EXPECT_TRUE(s->omega_fallback);
  EXPECT_EQ(s->omega, 1.0);
  EXPECT_TRUE(s->converged);
  c.omega = 0.0;
  c.max_iters = 3;
  c.warm_start = false;
  s = solve(c);
  EXPECT_FALSE(s->converged);
  EXPECT_EQ(s->iterations, 3);
  EXPECT_GT(s->last_change, c.tol);
}

// ---------------------------------------------------------------------------
// Profiles and decay

TEST(FrequencyProfile, Preconditions) {
  auto s = run(2, 32, model("h32"));
  EXPECT_THROW(frequency_profile(*s, origin, 1.5, {0.05, 0.3}), std::invalid_argument);
  EXPECT_THROW(frequency_profile(*s, origin, 1.5, {0.3, 1.0}), std::invalid_argument);
  EXPECT_THROW(frequency_profile(*s, {0.5, 0.0, 0.0}, 1.5, {0.3, 0.6}), std::invalid_argument);
  EXPECT_THROW(frequency_profile(*s, {0.0, 0.1, 0.0}, 1.5, {0.3}), std::invalid_argument);
  EXPECT_THROW(frequency_profile(*s, origin, 1.5, {}), std::invalid_argument);
  FrequencyProfile f = frequency_profile(*s, origin, 1.5, {0.4, 0.2, 0.3});
  EXPECT_EQ(f.r, (std::vector<double>{0.2, 0.3, 0.4}));
  EXPECT_THROW(classify_point(f), std::invalid_argument);
  EXPECT_THROW(geometric_radii(0.5, 0.1, 6), std::invalid_argument);
}

TEST(FrequencyProfile, HRatioCheckedAboveLambda) {
  // N = 2 exceeds lambda = 3/2, so H / r^{d-1+3} must be nondecreasing.
  auto s = run(2, 64, model("h2m", 1));
  FrequencyProfile f = frequency_profile(*s, origin, 1.5, geometric_radii(0.1, 0.6, 6));
  EXPECT_TRUE(f.mono_H.checked);
  EXPECT_TRUE(f.monotone());
  for (std::size_t k = 0; k + 1 < f.r.size(); ++k) EXPECT_GT(f.H_ratio[k + 1], f.H_ratio[k]);
  for (std::size_t k = 0; k + 1 < f.r.size(); ++k) EXPECT_GT(f.W[k + 1], f.W[k]);
}

TEST(FrequencyProfile, CsvLayout) {
  auto s = run(2, 32, model("h32"));
  FrequencyProfile f = frequency_profile(*s, origin, 1.5, geometric_radii(0.1, 0.5, 6));
  std::string csv = profile_csv(f);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "r,H,D,N,W_lambda");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
}

TEST(DecayCheck, PerturbedSingularDatum) {
  auto s = run(2, 128, {{"kind", "expression"}, {"expr", "cos(2*theta) + 0.1*cos(4*theta)"}});
  DecayReport r = decay_check(*s, origin, 1);
  EXPECT_EQ(r.classification.label, "Sing(2)");
  EXPECT_FALSE(r.trivial);
  EXPECT_TRUE(r.decay_ok);
  EXPECT_GT(r.beta_hat, 0.0);
  EXPECT_NEAR(r.beta_hat, 4.0, 0.2);
  ASSERT_EQ(r.increments.size(), 5u);
  EXPECT_TRUE(r.increments_monotone);
  EXPECT_NEAR(r.increment_exponent, 2.0, 0.1);
  // W_2(r) = 0.02 pi r^4 for this datum.
  for (std::size_t k = 0; k < r.r.size(); ++k) EXPECT_NEAR(r.W[k], 0.02 * std::numbers::pi * std::pow(r.r[k], 4), 2e-3);
}

TEST(DecayCheck, HomogeneousIsTrivial) {
  for (int d : {2, 3}) {
    auto s = run(d, d == 2 ? 64 : 16, model("h2m", 1));
    DecayReport r = decay_check(*s, origin, 1);
    EXPECT_TRUE(r.trivial);
    EXPECT_TRUE(r.decay_ok);
    EXPECT_EQ(r.gamma, d == 2 ? 0.0 : 1.0 / 3.0);
    EXPECT_TRUE(r.to_json()["beta_hat"].is_null());
  }
}

TEST(DecayCheck, Refusals) {
  auto s = run(2, 64, model("h32"));
  EXPECT_THROW(decay_check(*s, origin, 1), DecayRefused);
  auto q = run(2, 64, model("h2m", 1));
  EXPECT_THROW(decay_check(*q, origin, 2), DecayRefused);
  EXPECT_THROW(decay_check(*q, origin, 1, {0.2, 0.3, 0.4}), std::invalid_argument);
  EXPECT_THROW(decay_check(*q, origin, 0), std::invalid_argument);
}

TEST(Dump, BinaryAndSidecar) {
  auto s = run(2, 16, model("h32"));
  auto dir = std::filesystem::temp_directory_path() / "thinobs_dump_test";
  std::filesystem::create_directories(dir);
  write_solution_dump(*s, (dir / "u.bin").string(), (dir / "u.json").string());
  EXPECT_EQ(std::filesystem::file_size(dir / "u.bin"), s->u.size() * sizeof(double));
  std::ifstream in(dir / "u.json");
  nlohmann::json j = nlohmann::json::parse(in);
  EXPECT_EQ(j["dims"], (std::vector<int>{33, 17}));
  EXPECT_EQ(j["spacing"], 1.0 / 16.0);
  EXPECT_EQ(j["file"], "u.bin");
  std::ifstream b(dir / "u.bin", std::ios::binary);
  std::vector<double> back(s->u.size());
  b.read(reinterpret_cast<char*>(back.data()), static_cast<std::streamsize>(back.size() * sizeof(double)));
  EXPECT_EQ(back, s->u);
  std::filesystem::remove_all(dir);
}
