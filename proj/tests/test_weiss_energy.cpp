#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "thinobs/special_solutions.hpp"
#include "thinobs/weiss_energy.hpp"

using namespace thinobs;

static HomogeneousFn model_fn(const ModelSolution& s) {
  return {s.homogeneity(), [s](const Point& x) { return s.value(x); }, [s](const Point& x) { return s.grad(x); }};
}

TEST(Kappa, Basics) {
  EXPECT_EQ(kappa(1.5, 1.5, 3), 0.0);
  EXPECT_NEAR(kappa(2.0, 1.5, 2), 1.0 / 7.0, 1e-16);
  for (int d = 2; d <= 6; ++d) EXPECT_NEAR(kappa(2.0, 1.5, d), 1.0 / (2.0 * d + 3.0), 1e-16);
}

TEST(WeissFourier, Examples) {
  auto t = make_table(2, 4);
  TraceExpansion e = zero_trace(t);
  e.coef[2] = 1.0;
  EXPECT_NEAR(weiss_fourier(e, 2.0, 1.5).total, 0.5, 1e-15);
  EXPECT_NEAR(weiss_fourier(e, 2.0, 2.0).total, 0.0, 1e-15);
  TraceExpansion s = e.scaled(3.0);
  EXPECT_NEAR(weiss_fourier(s, 2.0, 1.5).total, 4.5, 1e-14);
  EXPECT_THROW(weiss_fourier(e, -1.0, 1.5), std::invalid_argument);
  WeissReport r = weiss_fourier(e, 2.0, 1.5);
  EXPECT_EQ(r.to_json()["modes"].size(), t->size());
  EXPECT_NE(r.to_csv().find("j,alpha_j,lambda_j,coef,contribution"), std::string::npos);
}

TEST(WeissFourier, ResonantFormula) {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int d : {2, 3}) {
    auto t = make_table(d, 6);
    TraceExpansion e = zero_trace(t);
    for (double& c : e.coef) c = N(gen);
    for (double mu : {1.5, 2.0, 3.5}) {
      double la = eigenvalue_of_homogeneity(mu, d), s = 0.0;
      for (std::size_t j = 0; j < e.coef.size(); ++j) s += (t->entries[j].lambda - la) * e.coef[j] * e.coef[j];
      EXPECT_NEAR(weiss_fourier(e, mu, mu).total, s / (2.0 * mu + d - 2.0), 1e-12);
    }
  }
}

TEST(WeissIdentity, GapProperties) {
  std::mt19937_64 gen(13);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int d : {2, 3}) {
    auto t = make_table(d, 7);
    TraceExpansion e = zero_trace(t);
    for (double& c : e.coef) c = N(gen);
    EXPECT_EQ(weiss_identity_gap(e, 2.0, 2.0), 0.0);
    // supported above alpha, alpha > mu: strictly negative
    TraceExpansion hi = zero_trace(t);
    for (std::size_t j = 0; j < hi.coef.size(); ++j)
      if (t->entries[j].alpha > 2.0) hi.coef[j] = N(gen);
    EXPECT_LT(weiss_identity_gap(hi, 2.0, 1.5), 0.0);
    // resonant support
    TraceExpansion res = zero_trace(t);
    for (std::size_t j = 0; j < res.coef.size(); ++j)
      if (t->entries[j].alpha == 3.0) res.coef[j] = N(gen);
    EXPECT_NEAR(weiss_identity_gap(res, 3.0, 2.0), 0.0, 1e-14);
    for (double a : {1.6, 2.0, 2.5}) EXPECT_NO_THROW(weiss_identity_gap(e, a, 1.5));
  }
}

TEST(WeissFourier, PositivityAboveResonance) {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int d : {2, 3}) {
    auto t = make_table(d, 6);
    for (int it = 0; it < 50; ++it) {
      TraceExpansion e = zero_trace(t);
      for (std::size_t j = 0; j < e.coef.size(); ++j)
        if (t->entries[j].alpha >= 2.0) e.coef[j] = N(gen);
      EXPECT_GE(weiss_fourier(e, 2.0, 2.0).total, -1e-14);
    }
  }
}

TEST(WeissQuadrature, ModelValues) {
  // W_{3/2}(h_e) = 0 in d = 2, 3; W_{3/2}(u_0) = -(3/4) int_B |x_d|, which is -1 in d = 2
  for (int d : {2, 3}) {
    EXPECT_NEAR(weiss_quadrature(model_fn(make_he(d, {1.0, 0.0, 0.0})), 1.5, d), 0.0, 1e-7) << d;
    EXPECT_NEAR(weiss_quadrature(model_fn(make_u0(d)), 1.5, d), -0.75 * ball_abs_xd_integral(d), 1e-10) << d;
  }
  EXPECT_NEAR(weiss_quadrature(model_fn(make_u0(2)), 1.5, 2), -1.0, 1e-12);
  Point e{0.6, -0.8, 0.0};
  SphereRule r = singular_sphere_rule(3, e, 48);
  EXPECT_NEAR(weiss_quadrature(model_fn(make_he(3, e)), 1.5, 3, r), 0.0, 1e-7);
}

TEST(WeissQuadrature, CosTwoThetaD2) {
  HomogeneousFn f{2.0, [](const Point& x) { return x[0] * x[0] - x[1] * x[1]; },
                  [](const Point& x) { return Point{2 * x[0], -2 * x[1], 0.0}; }};
  // unit mode cos(2t)/sqrt(pi) gives 1/2; this function is sqrt(pi) times it
  EXPECT_NEAR(weiss_quadrature(f, 1.5, 2), 0.5 * std::numbers::pi, 1e-10);
}

TEST(WeissQuadrature, RejectsWrongHomogeneity) {
  HomogeneousFn f = model_fn(make_u0(2));
  f.alpha = 2.0;
  EXPECT_THROW(weiss_quadrature(f, 1.5, 2), InvalidTrace);
}

TEST(WeissQuadrature, AgreesWithFourier) {
  std::mt19937_64 gen(19);
  std::normal_distribution<double> N(0.0, 1.0);
  std::uniform_real_distribution<double> A(0.6, 4.0);
  for (int d : {2, 3}) {
    auto t = make_table(d, 6);
    SphereRule rule = sphere_product_rule(20, 40);
    if (d == 2) rule = circle_rule(trapezoid_circle(64));
    for (int it = 0; it < 20; ++it) {
      TraceExpansion e = zero_trace(t);
      for (double& c : e.coef) c = N(gen);
      double a = A(gen), mu = A(gen);
      double wf = weiss_fourier(e, a, mu).total;
      double wq = weiss_quadrature(extend(e, a), mu, d, rule);
      EXPECT_NEAR(wf, wq, 1e-9 * (1.0 + std::abs(wf)));
    }
  }
}

TEST(Mumut, Examples) {
  auto t = make_table(3, 4);
  TraceExpansion e = zero_trace(t);
  e.coef[3] = 1.0;
  auto z = mumut_check(e, 4.0, 0.0);
  EXPECT_EQ(z.first, 0.0);
  EXPECT_EQ(z.second, 0.0);
  auto p = mumut_check(e, 4.0, -0.5);
  EXPECT_NEAR(p.first, -0.5, 1e-14);
  EXPECT_NEAR(p.second, -17.0 / 36.0, 1e-14);
  for (double mu : {1.5, 2.0, 4.0})
    for (double t2 : {-0.7, 0.3, 1.1}) {
      auto q = mumut_values(2.0, mu, t2, 3);
      EXPECT_NEAR(q.first, 2.0 * t2, 1e-13);
      EXPECT_NEAR(q.second, 2.0 * (1.0 + t2 / (2.0 * mu + 1.0)) * t2, 1e-13);
    }
  EXPECT_NEAR(mumut_values(1.0, 4.0, -9.0, 3).second, 0.0, 1e-13);
  EXPECT_THROW(mumut_values(1.0, -1.0, 0.1, 2), std::invalid_argument);
}
