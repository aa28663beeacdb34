#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "thinobs/special_solutions.hpp"

using namespace thinobs;

TEST(H2m, FirstStep) {
  for (int d = 2; d <= 6; ++d) {
    HarmonicPolynomial h = build_h2m(d, 1);
    ASSERT_EQ(h.C.size(), 2u);
    EXPECT_EQ(h.C[0], Rational(1));
    EXPECT_EQ(h.C[1], Rational(-(d - 1)));
  }
}

TEST(H2m, D3M2Exact) {
  HarmonicPolynomial h = build_h2m(3, 2);
  ASSERT_EQ(h.C.size(), 3u);
  EXPECT_EQ(h.C[0], Rational(1));
  EXPECT_EQ(h.C[1], Rational(-8));
  EXPECT_EQ(h.C[2], Rational(8) / Rational(3));
  EXPECT_EQ(h.to_json()["C"][2], "8/3");
}

TEST(H2m, D2IsRealPartOfPower) {
  for (int m = 1; m <= 4; ++m) {
    HarmonicPolynomial h = build_h2m(2, m);
    for (double t = 0.1; t < 6.0; t += 0.7)
      EXPECT_NEAR(h.value({std::cos(t), std::sin(t), 0.0}), std::cos(2.0 * m * t), 1e-12);
  }
}

TEST(H2m, HarmonicAndEquatorOne) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int d : {2, 3})
    for (int m = 1; m <= 8; ++m) {
      HarmonicPolynomial h = build_h2m(d, m);
      for (int i = 0; i < 200; ++i) {
        Point x{U(gen), U(gen), d == 3 ? U(gen) : 0.0};
        double r = norm(x);
        EXPECT_LE(std::abs(h.laplacian(x)), 1e-9 * std::max(1.0, std::pow(r, 2 * m - 2)) * h.coef_norm());
        double t = 2.0 * std::numbers::pi * U(gen);
        Point eq = d == 2 ? Point{(t > 0 ? 1.0 : -1.0), 0.0, 0.0} : Point{std::cos(t), std::sin(t), 0.0};
        EXPECT_NEAR(h.value(eq), 1.0, 1e-12);
      }
    }
}

TEST(H2m, DisplayedAlternativeIsNotHarmonic) {
  // (32/3) z^4 - 10 z^2 rho^2 + rho^4 in coefficient form [1, -10, 32/3]
  HarmonicPolynomial h{3, 2, {Rational(1), Rational(-10), Rational(32) / Rational(3)}};
  EXPECT_GT(std::abs(h.laplacian({0.3, 0.2, 0.5})), 1e-3);
}

TEST(H2m, NormSquaredD3M2) {
  // 2 pi int (1 - 10 z^2 + 35/3 z^4)^2 dz = 256 pi / 81
  HarmonicPolynomial h = build_h2m(3, 2);
  Rational q = h2m_norm_sq_over_pi_d3(h);
  EXPECT_EQ(q, Rational(256) / Rational(81));
  EXPECT_NEAR(to_double(q) * std::numbers::pi, 9.92898418912329714872144081629, 1e-13);
  EXPECT_NEAR(l2_sphere_norm_sq([&](const Point& x) { return h.value(x); }, 3), 256.0 * std::numbers::pi / 81.0, 1e-10);
}

TEST(SphereNorm, Examples) {
  EXPECT_NEAR(l2_sphere_norm_sq([](const Point&) { return 1.0; }, 3), 4.0 * std::numbers::pi, 1e-12);
  EXPECT_NEAR(l2_sphere_norm_sq([](const Point& x) { return x[0]; }, 3), 4.0 * std::numbers::pi / 3.0, 1e-12);
  EXPECT_NEAR(l2_sphere_norm_sq([](const Point&) { return 1.0; }, 2), 2.0 * std::numbers::pi, 1e-12);
}

TEST(Models, HeFormsDifferBySqrt2) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int d : {2, 3}) {
    ModelSolution he = make_he(d, d == 2 ? Point{1.0, 0.0, 0.0} : Point{0.6, 0.8, 0.0});
    for (int i = 0; i < 100; ++i) {
      Point x{U(gen), U(gen), d == 3 ? U(gen) : 0.0};
      EXPECT_NEAR(he.radical_value(x), std::sqrt(2.0) * he.value(x), 1e-12);
    }
  }
  ModelSolution he = make_he(2, {1.0, 0.0, 0.0});
  EXPECT_NEAR(he.value({1.0, 0.0, 0.0}), 1.0, 1e-15);
  EXPECT_NEAR(he.radical_value({1.0, 0.0, 0.0}), std::sqrt(2.0), 1e-15);
}

TEST(Models, HomogeneityAndSigns) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0), R(0.05, 1.0);
  for (int d : {2, 3}) {
    std::vector<ModelSolution> sols = {make_he(d, {1.0, 0.0, 0.0}), make_u0(d)};
    if (d == 2) {
      sols.push_back(make_half_integer(1));
      sols.push_back(make_half_integer(2));
    }
    for (const auto& s : sols)
      for (int i = 0; i < 100; ++i) {
        Point x{U(gen), U(gen), d == 3 ? U(gen) : 0.0};
        double r = R(gen);
        EXPECT_NEAR(s.value(r * x), std::pow(r, s.homogeneity()) * s.value(x), 1e-12);
      }
    for (int i = 0; i < 100; ++i) {
      Point x{U(gen), d == 3 ? U(gen) : 0.0, 0.0};
      EXPECT_GE(make_he(d, {1.0, 0.0, 0.0}).value(x), -1e-15);
      EXPECT_EQ(make_u0(d).value(x), 0.0);
    }
  }
  // zeros of the half-integer model at the sector angles
  for (int m = 1; m <= 3; ++m) {
    ModelSolution h = make_half_integer(m);
    for (int i = 1; i < 4 * m - 1; ++i) {
      double s = 2.0 * i * std::numbers::pi / (4.0 * m - 1.0);
      EXPECT_NEAR(h.value({std::cos(s), std::sin(s), 0.0}), 0.0, 1e-12);
    }
  }
  EXPECT_NEAR(make_u0(3).value({0.0, 0.0, -0.49}), std::pow(0.49, 1.5), 1e-15);
}

TEST(Models, GradientsMatchFiniteDifferences) {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const double h = 1e-6;
  for (int d : {2, 3}) {
    std::vector<ModelSolution> sols = {make_he(d, {1.0, 0.0, 0.0}), make_u0(d)};
    if (d == 2) sols.push_back(make_half_integer(2));
    for (const auto& s : sols)
      for (int i = 0; i < 50; ++i) {
        Point x{U(gen), U(gen), d == 3 ? U(gen) : 0.0};
        Point g = s.grad(x);
        for (int k = 0; k < d; ++k) {
          Point a = x, b = x;
          a[k] += h;
          b[k] -= h;
          EXPECT_NEAR(g[k], (s.value(a) - s.value(b)) / (2 * h), 1e-6);
        }
      }
  }
}

TEST(Pairing, ZeroTrace) {
  EXPECT_EQ(distributional_laplacian_pairing(make_u0(2), [](const Point&) { return 0.0; }, 2.0), 0.0);
  EXPECT_THROW(distributional_laplacian_pairing(make_u0(2), [](const Point&) { return 1.0; }, 0.5), std::invalid_argument);
}

TEST(Pairing, U0ConstantD2) {
  // oracle: (1/3.5)(3/4) int |sin|^{-1/2} / sqrt(2 pi), matched by direct 2D quadrature
  const double expected = 0.896613960045515594984675078241;
  double v = distributional_laplacian_pairing(make_u0(2), [](const Point&) { return 1.0 / std::sqrt(2.0 * std::numbers::pi); }, 2.0);
  EXPECT_NEAR(v, expected, 1e-10);
}

TEST(Pairing, HeCosineD2) {
  // oracle: jump integral int_{-1}^{0} x^2 sgn(x)/sqrt(pi) * (-3)|x|^{1/2} dx
  const double expected = 0.483591071612362531669782387052;
  double v = distributional_laplacian_pairing(make_he(2, {1.0, 0.0, 0.0}),
                                              [](const Point& x) { return x[0] / std::sqrt(std::numbers::pi); }, 2.0);
  EXPECT_NEAR(v, expected, 1e-13);
}

TEST(Pairing, U0MatchesVolumeQuadratureD3) {
  // psi = r^alpha phi with phi = x_1^2 + 0.3; compare with int_B psi (3/4)|x_3|^{-1/2}
  auto phi = [](const Point& x) { return x[0] * x[0] + 0.3; };
  double alpha = 2.5;
  double red = distributional_laplacian_pairing(make_u0(3), phi, alpha);
  Rule1D rr = gauss_interval(0.0, 1.0, 40);
  SphereRule sr = singular_sphere_rule(3, {1.0, 0.0, 0.0}, 48);
  double vol = 0.0;
  for (std::size_t i = 0; i < rr.size(); ++i) {
    double r = rr.x[i];
    for (const auto& q : sr) {
      double xd = std::abs(r * q.x[2]);
      vol += rr.w[i] * r * r * q.w * std::pow(r, alpha) * phi(q.x) * 0.75 / std::sqrt(xd);
    }
  }
  EXPECT_NEAR(red, vol, 1e-5 * std::abs(vol));
}
