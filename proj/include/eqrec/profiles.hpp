#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eqrec/basis.hpp"
#include "eqrec/errors.hpp"
#include "eqrec/flux.hpp"
#include "eqrec/mesh.hpp"

namespace eqrec {

// Reduced-basis coefficients of the profile functions: a for A (~ p'),
// b for B (~ ff'), c for the electron density n_e.
struct ProfileCoefficients {
  Eigen::VectorXd a, b, c;

  Eigen::VectorXd stacked() const {
    Eigen::VectorXd u(a.size() + b.size());
    u << a, b;
    return u;
  }
  static ProfileCoefficients from_stacked(const Eigen::VectorXd& u,
                                          const Eigen::VectorXd& c) {
    ProfileCoefficients pc;
    int m = int(u.size()) / 2;
    pc.a = u.head(m);
    pc.b = u.tail(m);
    pc.c = c;
    return pc;
  }
};

inline double eval_profile(const Eigen::VectorXd& coeffs, const BasisFamily& family,
                           double x) {
  if (coeffs.size() != family.m) throw DataError("profile coefficient length mismatch");
  return family.eval(x).dot(coeffs);
}

// Toroidal current density at (r, psibar): lambda [ (r/R0) A + (R0/r) B ]
// inside the plasma, zero outside.
inline double toroidal_current_density(const Eigen::VectorXd& a,
                                       const Eigen::VectorXd& b,
                                       const BasisFamily& family, double lambda,
                                       double R0, double r, double psibar,
                                       bool inside) {
  if (!(r > 0.0)) throw DataError("current density evaluation needs r > 0");
  if (!inside) return 0.0;
  Eigen::VectorXd phi = family.eval(psibar);
  return lambda * ((r / R0) * phi.dot(a) + (R0 / r) * phi.dot(b));
}

// Physical profiles sampled on a uniform grid over normalized flux.
// p' and ff' come straight from A and B; p integrates p' inward from the
// boundary (p(1) = 0); f comes from f^2 = f_b^2 + 2 int ff' dpsi with the
// vacuum constant f_b = B0 R0. q is filled separately by safety_factor().
struct DerivedProfiles {
  Eigen::VectorXd grid;     // psibar samples
  Eigen::VectorXd A, B, ne;
  Eigen::VectorXd pprime;   // Pa / Wb
  Eigen::VectorXd ffprime;  // T^2 m^2 / Wb
  Eigen::VectorXd p;        // Pa
  Eigen::VectorXd f;        // T m
  Eigen::VectorXd q;        // safety factor (may be empty until filled)
};

inline DerivedProfiles derived_profiles(const ProfileCoefficients& coeffs,
                                        const BasisFamily& family, double lambda,
                                        double R0, double f_b, int grid_points,
                                        double psi_axis, double psi_b) {
  if (psi_b == psi_axis) throw NumericalError("degenerate flux interval");
  if (grid_points < 2) throw DataError("profile grid needs at least 2 points");

  DerivedProfiles d;
  const int n = grid_points;
  d.grid.resize(n);
  d.A.resize(n);
  d.B.resize(n);
  d.ne.resize(n);
  d.pprime.resize(n);
  d.ffprime.resize(n);
  d.p.resize(n);
  d.f.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = double(i) / double(n - 1);
    d.grid[i] = x;
    Eigen::VectorXd phi = family.eval(x);
    d.A[i] = phi.dot(coeffs.a);
    d.B[i] = phi.dot(coeffs.b);
    d.ne[i] = coeffs.c.size() == family.m ? phi.dot(coeffs.c) : 0.0;
    d.pprime[i] = lambda * d.A[i] / R0;
    d.ffprime[i] = lambda * kMu0 * R0 * d.B[i];
  }

  // cumulative trapezoid from the boundary (x = 1) inward;
  // dpsi = (psi_b - psi_axis) dx and p(psibar) = -(psi_b - psi_axis)
  // * int_psibar^1 p' dx, so p(1) = 0 and p peaks on axis for p' > 0.
  const double dpsi = psi_b - psi_axis;
  const double h = 1.0 / double(n - 1);
  d.p[n - 1] = 0.0;
  double f2 = f_b * f_b;
  d.f[n - 1] = f_b;
  for (int i = n - 2; i >= 0; --i) {
    d.p[i] = d.p[i + 1] - dpsi * 0.5 * h * (d.pprime[i] + d.pprime[i + 1]);
    f2 -= 2.0 * dpsi * 0.5 * h * (d.ffprime[i] + d.ffprime[i + 1]);
    if (f2 < 0.0)
      throw NumericalError("f^2 negative at grid point " + std::to_string(i) +
                           " (psibar = " + std::to_string(d.grid[i]) + ")");
    d.f[i] = (f_b < 0.0 ? -1.0 : 1.0) * std::sqrt(f2);
  }
  return d;
}

// Safety factor q(level) = (1/2pi) oint f / (r |grad psi|) dl along the flux
// contour, using the segment-midpoint rule; segments are subdivided toward a
// 256-sample target per contour.
inline Eigen::VectorXd safety_factor(const Mesh& mesh, const PsiField& psi,
                                     const PlasmaDomain& dom,
                                     const Eigen::VectorXd& f_at_levels,
                                     const std::vector<double>& levels) {
  if (f_at_levels.size() != static_cast<long>(levels.size()))
    throw DataError("safety factor: f values and levels length mismatch");
  Eigen::VectorXd q(levels.size());
  for (size_t li = 0; li < levels.size(); ++li) {
    double level = levels[li];
    if (!(level > 0.0 && level < 1.0))
      throw DataError("safety factor levels must lie in (0, 1)");
    double psi_level = dom.psi_axis + level * (dom.psi_b - dom.psi_axis);
    auto segs = detail::contour_segments(mesh, psi, dom, psi_level);
    if (segs.empty())
      throw NumericalError("no contour at level " + std::to_string(level));
    int subdiv = std::max(1, int(std::ceil(256.0 / double(segs.size()))));
    double integral = 0.0;
    for (const auto& seg : segs) {
      Point g = mesh.triangle_gradient(psi, seg.triangle);
      double gn = norm(g);
      if (gn <= 0.0) continue;
      double len = norm(seg.b - seg.a) / subdiv;
      for (int s = 0; s < subdiv; ++s) {
        Point mid = seg.a + ((s + 0.5) / subdiv) * (seg.b - seg.a);
        integral += len * f_at_levels[li] / (mid.r * gn);
      }
    }
    q[li] = integral / (2.0 * 3.14159265358979323846);
  }
  return q;
}

}  // namespace eqrec
