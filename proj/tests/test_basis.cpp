#include <catch_amalgamated.hpp>

#include <random>

#include "eqrec/basis.hpp"
#include "support/oracles.hpp"

using namespace eqrec;
using Catch::Approx;

TEST_CASE("piecewise-linear hats are nodal", "[basis]") {
  auto f = BasisFamily::uniform(BasisFamily::Kind::PiecewiseLinear, 6);
  for (int k = 0; k < f.m; ++k) {
    Eigen::VectorXd v = f.eval(f.knots[k]);
    for (int i = 0; i < f.m; ++i)
      CHECK(v[i] == Approx(i == k ? 1.0 : 0.0).margin(1e-14));
  }
}

TEST_CASE("both families form a partition of unity", "[basis]") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (auto kind : {BasisFamily::Kind::PiecewiseLinear, BasisFamily::Kind::CubicBSpline}) {
    for (int m : {4, 7, 12}) {
      auto f = BasisFamily::uniform(kind, m);
      for (int trial = 0; trial < 50; ++trial) {
        double x = dist(rng);
        Eigen::VectorXd v = f.eval(x);
        CHECK(v.sum() == Approx(1.0).margin(1e-12));
        CHECK(v.minCoeff() >= -1e-14);
      }
      CHECK(f.eval(0.0).sum() == Approx(1.0).margin(1e-12));
      CHECK(f.eval(1.0).sum() == Approx(1.0).margin(1e-12));
    }
  }
}

TEST_CASE("cubic B-spline values match the Cox-de Boor recursion", "[basis]") {
  auto f = BasisFamily::uniform(BasisFamily::Kind::CubicBSpline, 7);
  auto t = f.full_knots();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    double x = dist(rng);
    Eigen::VectorXd v = f.eval(x);
    for (int i = 0; i < f.m; ++i)
      CHECK(v[i] == Approx(testing::coxdeboor(t, i, 3, x)).margin(1e-12));
  }
  // endpoints
  Eigen::VectorXd v0 = f.eval(0.0), v1 = f.eval(1.0);
  CHECK(v0[0] == Approx(1.0).margin(1e-14));
  CHECK(v1[f.m - 1] == Approx(1.0).margin(1e-14));
}

TEST_CASE("cubic second derivatives match the recursive derivative oracle", "[basis]") {
  auto f = BasisFamily::uniform(BasisFamily::Kind::CubicBSpline, 8);
  auto t = f.full_knots();
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> dist(0.01, 0.99);
  for (int trial = 0; trial < 50; ++trial) {
    double x = dist(rng);
    Eigen::VectorXd d2 = f.eval_second(x);
    for (int i = 0; i < f.m; ++i)
      CHECK(d2[i] == Approx(testing::coxdeboor_deriv(t, i, 3, x, 2)).margin(1e-9));
  }
}

TEST_CASE("basis evaluation rejects points outside [0,1]", "[basis]") {
  auto f = BasisFamily::uniform(BasisFamily::Kind::CubicBSpline, 5);
  CHECK_THROWS_AS(f.eval(-0.01), DataError);
  CHECK_THROWS_AS(f.eval(1.01), DataError);
}

TEST_CASE("basis dimension is clamped to [4, 20]", "[basis]") {
  CHECK_THROWS_AS(BasisFamily::uniform(BasisFamily::Kind::CubicBSpline, 3), DataError);
  CHECK_THROWS_AS(BasisFamily::uniform(BasisFamily::Kind::PiecewiseLinear, 21), DataError);
  CHECK_NOTHROW(BasisFamily::uniform(BasisFamily::Kind::CubicBSpline, 4));
  CHECK_NOTHROW(BasisFamily::uniform(BasisFamily::Kind::PiecewiseLinear, 20));
}

TEST_CASE("cubic regularizer annihilates affine coefficient vectors", "[basis]") {
  for (int m : {5, 7, 11}) {
    auto f = BasisFamily::uniform(BasisFamily::Kind::CubicBSpline, m);
    Eigen::MatrixXd L = regularization_matrix(f);
    double scale = L.norm();
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(m);
    Eigen::VectorXd xi = f.affine_abscissae();
    CHECK((L * ones).norm() <= 1e-12 * scale);
    CHECK((L * xi).norm() <= 1e-12 * scale);
  }
}

TEST_CASE("regularizer matrices are symmetric positive semidefinite", "[basis]") {
  for (auto kind : {BasisFamily::Kind::PiecewiseLinear, BasisFamily::Kind::CubicBSpline}) {
    auto f = BasisFamily::uniform(kind, 9);
    Eigen::MatrixXd L = regularization_matrix(f);
    CHECK((L - L.transpose()).norm() <= 1e-13 * L.norm());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12 * L.norm());
  }
}

TEST_CASE("cubic regularizer matches per-span Simpson quadrature of the oracle",
          "[basis]") {
  auto f = BasisFamily::uniform(BasisFamily::Kind::CubicBSpline, 6);
  auto t = f.full_knots();
  Eigen::MatrixXd L = regularization_matrix(f);
  // Phi'' products are piecewise quadratic, so Simpson per span is exact
  Eigen::MatrixXd O = Eigen::MatrixXd::Zero(f.m, f.m);
  for (size_t s = 0; s + 1 < f.knots.size(); ++s) {
    double a = f.knots[s], b = f.knots[s + 1], mid = 0.5 * (a + b);
    for (int i = 0; i < f.m; ++i) {
      for (int j = 0; j < f.m; ++j) {
        // evaluate strictly inside the span to dodge knot discontinuities
        double eps = 1e-9 * (b - a);
        double fa = testing::coxdeboor_deriv(t, i, 3, a + eps, 2) *
                    testing::coxdeboor_deriv(t, j, 3, a + eps, 2);
        double fm = testing::coxdeboor_deriv(t, i, 3, mid, 2) *
                    testing::coxdeboor_deriv(t, j, 3, mid, 2);
        double fb = testing::coxdeboor_deriv(t, i, 3, b - eps, 2) *
                    testing::coxdeboor_deriv(t, j, 3, b - eps, 2);
        O(i, j) += (b - a) / 6.0 * (fa + 4.0 * fm + fb);
      }
    }
  }
  for (int i = 0; i < f.m; ++i)
    for (int j = 0; j < f.m; ++j)
      CHECK(L(i, j) == Approx(O(i, j)).margin(1e-10 * (1.0 + O.norm())));
}

TEST_CASE("piecewise-linear regularizer penalizes curvature of the sequence",
          "[basis]") {
  auto f = BasisFamily::uniform(BasisFamily::Kind::PiecewiseLinear, 8);
  Eigen::MatrixXd L = regularization_matrix(f);
  Eigen::VectorXd affine(f.m);
  for (int i = 0; i < f.m; ++i) affine[i] = 3.0 - 2.0 * f.knots[i];
  CHECK((L * affine).norm() <= 1e-10 * L.norm());
  // a kinked sequence is penalized
  Eigen::VectorXd kink = Eigen::VectorXd::Zero(f.m);
  kink[f.m / 2] = 1.0;
  CHECK(kink.dot(L * kink) > 0.0);
}

TEST_CASE("affine abscissae reproduce affine functions", "[basis]") {
  for (auto kind : {BasisFamily::Kind::PiecewiseLinear, BasisFamily::Kind::CubicBSpline}) {
    auto f = BasisFamily::uniform(kind, 7);
    Eigen::VectorXd xi = f.affine_abscissae();
    Eigen::VectorXd coeffs(f.m);
    for (int i = 0; i < f.m; ++i) coeffs[i] = 1.0 - xi[i];
    for (double x : {0.0, 0.21, 0.5, 0.83, 1.0})
      CHECK(f.eval(x).dot(coeffs) == Approx(1.0 - x).margin(1e-12));
  }
}
