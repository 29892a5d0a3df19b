#include <catch_amalgamated.hpp>

#include <random>

#include "eqrec/profiles.hpp"
#include "support/meshgen.hpp"

using namespace eqrec;
using Catch::Approx;

namespace {

BasisFamily cubic7() { return BasisFamily::uniform(BasisFamily::Kind::CubicBSpline, 7); }

}  // namespace

TEST_CASE("eval_profile is the basis expansion", "[profiles]") {
  auto f = cubic7();
  Eigen::VectorXd ones = Eigen::VectorXd::Constant(f.m, 2.5);
  for (double x : {0.0, 0.3, 0.77, 1.0})
    CHECK(eval_profile(ones, f, x) == Approx(2.5).margin(1e-12));

  auto pl = BasisFamily::uniform(BasisFamily::Kind::PiecewiseLinear, 6);
  Eigen::VectorXd ek = Eigen::VectorXd::Zero(pl.m);
  ek[2] = 1.0;
  CHECK(eval_profile(ek, pl, pl.knots[2]) == Approx(1.0));
  CHECK(eval_profile(ek, pl, pl.knots[3]) == Approx(0.0).margin(1e-14));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-1, 1);
  Eigen::VectorXd c(f.m);
  for (int i = 0; i < f.m; ++i) c[i] = dist(rng);
  CHECK(eval_profile(c, f, 0.37) == Approx(f.eval(0.37).dot(c)).margin(1e-15));
}

TEST_CASE("eval_profile is linear in the coefficients", "[profiles]") {
  auto f = cubic7();
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> dist(-1, 1);
  Eigen::VectorXd u(f.m), v(f.m);
  for (int i = 0; i < f.m; ++i) {
    u[i] = dist(rng);
    v[i] = dist(rng);
  }
  for (double x : {0.1, 0.5, 0.9}) {
    double lhs = eval_profile(2.0 * u - 3.0 * v, f, x);
    double rhs = 2.0 * eval_profile(u, f, x) - 3.0 * eval_profile(v, f, x);
    CHECK(lhs == Approx(rhs).margin(1e-13 * (std::abs(lhs) + 1)));
  }
}

TEST_CASE("current density vanishes outside the plasma", "[profiles]") {
  auto f = cubic7();
  Eigen::VectorXd a = Eigen::VectorXd::Ones(f.m), b = Eigen::VectorXd::Ones(f.m);
  CHECK(toroidal_current_density(a, b, f, 1e6, 2.4, 2.0, 0.5, false) == 0.0);
  CHECK_THROWS_AS(toroidal_current_density(a, b, f, 1e6, 2.4, -1.0, 0.5, true),
                  DataError);
}

TEST_CASE("current density collapses at r = R0", "[profiles]") {
  auto f = cubic7();
  Eigen::VectorXd a = Eigen::VectorXd::Constant(f.m, 0.7);
  Eigen::VectorXd b = Eigen::VectorXd::Constant(f.m, 0.2);
  double lambda = 1.3e6, R0 = 2.4;
  double j = toroidal_current_density(a, b, f, lambda, R0, R0, 0.42, true);
  CHECK(j == Approx(lambda * (0.7 + 0.2)).epsilon(1e-12));
}

TEST_CASE("current density is gauge invariant", "[profiles]") {
  auto f = cubic7();
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> dist(0.1, 1.0);
  Eigen::VectorXd a(f.m), b(f.m);
  for (int i = 0; i < f.m; ++i) {
    a[i] = dist(rng);
    b[i] = dist(rng);
  }
  double lambda = 2.0e6;
  for (double gamma : {2.0, 0.125, 3.7}) {
    for (double psibar : {0.0, 0.33, 0.9}) {
      double j0 = toroidal_current_density(a, b, f, lambda, 2.4, 2.1, psibar, true);
      double j1 = toroidal_current_density(gamma * a, gamma * b, f, lambda / gamma,
                                           2.4, 2.1, psibar, true);
      CHECK(j1 == Approx(j0).epsilon(4e-16));
    }
  }
}

TEST_CASE("zero A gives zero pressure, zero B keeps f at the vacuum constant",
          "[profiles]") {
  auto f = cubic7();
  ProfileCoefficients pc;
  pc.a = Eigen::VectorXd::Zero(f.m);
  pc.b = Eigen::VectorXd::Constant(f.m, 0.4);
  pc.c = Eigen::VectorXd::Zero(f.m);
  DerivedProfiles d = derived_profiles(pc, f, 1e6, 2.4, 9.24, 101, 0.3, -0.1);
  for (long i = 0; i < d.p.size(); ++i) CHECK(d.p[i] == 0.0);

  pc.a = Eigen::VectorXd::Constant(f.m, 0.4);
  pc.b.setZero();
  d = derived_profiles(pc, f, 1e6, 2.4, 9.24, 101, 0.3, -0.1);
  for (long i = 0; i < d.f.size(); ++i) CHECK(d.f[i] == Approx(9.24).margin(1e-12));
}

TEST_CASE("affine A reproduces the closed-form pressure antiderivative",
          "[profiles]") {
  auto f = cubic7();
  Eigen::VectorXd xi = f.affine_abscissae();
  ProfileCoefficients pc;
  pc.a.resize(f.m);
  for (int i = 0; i < f.m; ++i) pc.a[i] = 1.0 - xi[i];  // A(x) = 1 - x
  pc.b = Eigen::VectorXd::Zero(f.m);
  pc.c = Eigen::VectorXd::Zero(f.m);

  const double lambda = 2.0e6, R0 = 2.4, psi_axis = 0.35, psi_b = -0.12;
  DerivedProfiles d = derived_profiles(pc, f, lambda, R0, 9.24, 101, psi_axis, psi_b);
  // p(x) = (psi_axis - psi_b) (lambda/R0) (1-x)^2 / 2
  for (long i = 0; i < d.grid.size(); ++i) {
    double x = d.grid[i];
    double exact = (psi_axis - psi_b) * lambda / R0 * (1.0 - x) * (1.0 - x) / 2.0;
    CHECK(d.p[i] == Approx(exact).margin(1e-8 * std::abs(d.p[0])));
  }
  CHECK(d.p[d.p.size() - 1] == 0.0);
}

TEST_CASE("pprime is recovered from p by central differences", "[profiles]") {
  auto f = cubic7();
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> dist(0.2, 1.0);
  ProfileCoefficients pc;
  pc.a.resize(f.m);
  for (int i = 0; i < f.m; ++i) pc.a[i] = dist(rng);
  pc.b = Eigen::VectorXd::Zero(f.m);
  pc.c = Eigen::VectorXd::Zero(f.m);
  const double lambda = 1e6, R0 = 2.4, psi_axis = 0.3, psi_b = -0.1;
  DerivedProfiles d = derived_profiles(pc, f, lambda, R0, 9.24, 101, psi_axis, psi_b);
  const double h = d.grid[1] - d.grid[0];
  double scale = d.pprime.cwiseAbs().maxCoeff() * std::abs(psi_b - psi_axis);
  for (long i = 1; i + 1 < d.grid.size(); ++i) {
    double dp_dx = (d.p[i + 1] - d.p[i - 1]) / (2.0 * h);
    CHECK(dp_dx == Approx((psi_b - psi_axis) * d.pprime[i]).margin(5e-3 * scale));
  }
}

TEST_CASE("negative f^2 is reported with its grid point", "[profiles]") {
  auto f = cubic7();
  ProfileCoefficients pc;
  pc.a = Eigen::VectorXd::Zero(f.m);
  // strongly negative ff' drains f^2 inward from a tiny vacuum constant
  pc.b = Eigen::VectorXd::Constant(f.m, -5.0);
  pc.c = Eigen::VectorXd::Zero(f.m);
  CHECK_THROWS_WITH(derived_profiles(pc, f, 1e7, 2.4, 1e-3, 101, 0.3, -0.1),
                    Catch::Matchers::ContainsSubstring("grid point"));
}

TEST_CASE("safety factor vanishes with f and scales linearly in f", "[profiles]") {
  Mesh m = testing::make_uniform_disk({2.0, 0.0}, 0.5, 8, 10);
  PsiField psi;
  psi.values.resize(m.node_count());
  for (int i = 0; i < m.node_count(); ++i) {
    double dr = m.nodes[i].r - 2.0, dz = m.nodes[i].z;
    psi.values[i] = -(dr * dr + dz * dz);
  }
  PlasmaDomain dom = analyze_flux(m, psi);
  std::vector<double> levels{0.3, 0.6};
  Eigen::VectorXd f0 = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd f1 = Eigen::VectorXd::Constant(2, 3.1);
  Eigen::VectorXd q0 = safety_factor(m, psi, dom, f0, levels);
  Eigen::VectorXd q1 = safety_factor(m, psi, dom, f1, levels);
  Eigen::VectorXd q2 = safety_factor(m, psi, dom, 2.0 * f1, levels);
  CHECK(q0[0] == 0.0);
  CHECK(q0[1] == 0.0);
  for (int i = 0; i < 2; ++i) CHECK(q2[i] == Approx(2.0 * q1[i]).epsilon(1e-14));
}

TEST_CASE("safety factor matches the concentric-circle closed form", "[profiles]") {
  // cone flux: |grad psi| = 1, contours are circles of radius rho around
  // (r0, 0), and (1/2pi) oint dl/r = rho / sqrt(r0^2 - rho^2)
  const double r0 = 2.0;
  Mesh m = testing::make_uniform_disk({r0, 0.0}, 0.5, 12, 12);
  PsiField psi;
  psi.values.resize(m.node_count());
  for (int i = 0; i < m.node_count(); ++i)
    psi.values[i] = -norm(m.nodes[i] - Point{r0, 0.0});
  PlasmaDomain dom = analyze_flux(m, psi);

  const double fval = 2.0;
  std::vector<double> levels{0.5};
  Eigen::VectorXd fv = Eigen::VectorXd::Constant(1, fval);
  Eigen::VectorXd q = safety_factor(m, psi, dom, fv, levels);

  double rho = -(dom.psi_axis + 0.5 * (dom.psi_b - dom.psi_axis));
  double expected = fval * rho / std::sqrt(r0 * r0 - rho * rho);
  CHECK(q[0] == Approx(expected).epsilon(0.02));
}
