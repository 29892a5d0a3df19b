#pragma once

// Independent oracles used by the tests: high-order quadrature, the naive
// B-spline recursion, segment clipping by brute force. None of these share
// code with the library paths they check.

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "eqrec/mesh.hpp"

namespace eqrec::testing {

// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on the
// Legendre recurrence.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      double dp = n * (t * p1 - p0) / (t * t - 1.0);
      double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    x[i] = t;
    double p0 = 1.0, p1 = t;
    for (int k = 2; k <= n; ++k) {
      double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    double dp = n * (t * p1 - p0) / (t * t - 1.0);
    w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
  }
}

// High-order integral of f over a triangle: tensor Gauss-Legendre through the
// Duffy map (collapsed square). n = 12 integrates smooth integrands such as
// 1/r far beyond degree 10.
inline double integrate_triangle(Point a, Point b, Point c,
                                 const std::function<double(Point)>& f,
                                 int n = 12) {
  std::vector<double> x, w;
  gauss_legendre(n, x, w);
  double area2 = cross(b - a, c - a);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double u = 0.5 * (x[i] + 1.0);  // [0,1]
    for (int j = 0; j < n; ++j) {
      double v = 0.5 * (x[j] + 1.0);
      // Duffy: (u, v) -> barycentric (1-u, u(1-v), uv), Jacobian u
      double l1 = 1.0 - u, l2 = u * (1.0 - v), l3 = u * v;
      Point p = l1 * a + l2 * b + l3 * c;
      total += 0.25 * w[i] * w[j] * u * f(p);
    }
  }
  return total * area2;
}

// Naive Cox-de Boor recursion for B-spline basis values.
inline double coxdeboor(const std::vector<double>& t, int i, int p, double x) {
  if (p == 0) {
    // half-open spans, closed at the right end of the last nonempty span
    bool last = t[i] < t[i + 1] && x == t.back() && t[i + 1] == t.back();
    return (x >= t[i] && x < t[i + 1]) || last ? 1.0 : 0.0;
  }
  double left = 0.0, right = 0.0;
  if (t[i + p] > t[i]) left = (x - t[i]) / (t[i + p] - t[i]) * coxdeboor(t, i, p - 1, x);
  if (t[i + p + 1] > t[i + 1])
    right = (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * coxdeboor(t, i + 1, p - 1, x);
  return left + right;
}

// Derivative of the recursion, applied recursively for higher orders.
inline double coxdeboor_deriv(const std::vector<double>& t, int i, int p, double x,
                              int order) {
  if (order == 0) return coxdeboor(t, i, p, x);
  double left = 0.0, right = 0.0;
  if (t[i + p] > t[i])
    left = p / (t[i + p] - t[i]) * coxdeboor_deriv(t, i, p - 1, x, order - 1);
  if (t[i + p + 1] > t[i + 1])
    right = p / (t[i + p + 1] - t[i + 1]) * coxdeboor_deriv(t, i + 1, p - 1, x, order - 1);
  return left - right;
}

// Exact clipped length of a segment against a convex triangle, by bisection
// on the inside indicator; independent of the half-plane clipping in the
// library.
inline double clipped_length_oracle(const Mesh& mesh, int tri, Point p, Point q,
                                    int samples = 200000) {
  auto inside = [&](Point pt) {
    auto bc = mesh.barycentric(tri, pt);
    return bc[0] >= 0 && bc[1] >= 0 && bc[2] >= 0;
  };
  double len = norm(q - p);
  double acc = 0.0;
  for (int i = 0; i < samples; ++i) {
    double t = (i + 0.5) / samples;
    if (inside(p + t * (q - p))) acc += len / samples;
  }
  return acc;
}

}  // namespace eqrec::testing
