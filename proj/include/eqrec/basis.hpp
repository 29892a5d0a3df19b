#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eqrec/errors.hpp"

namespace eqrec {

// Reduced basis (Phi_1..Phi_m) on [0,1] for the profile functions.
// PiecewiseLinear: hat functions on the knots (m knots).
// CubicBSpline: clamped cubic B-splines; knots holds the m-2 distinct
// breakpoints, endpoint multiplicities are internal.
// Both kinds are nonnegative and sum to 1 on [0,1].
class BasisFamily {
public:
  enum class Kind { PiecewiseLinear, CubicBSpline };

  Kind kind = Kind::CubicBSpline;
  int m = 7;
  std::vector<double> knots;  // distinct, ascending, knots.front()=0, knots.back()=1

  static BasisFamily uniform(Kind kind, int m) {
    BasisFamily f;
    f.kind = kind;
    f.m = m;
    int nk = (kind == Kind::PiecewiseLinear) ? m : m - 2;
    f.knots.resize(nk);
    for (int i = 0; i < nk; ++i) f.knots[i] = double(i) / double(nk - 1);
    f.knots.front() = 0.0;
    f.knots.back() = 1.0;
    f.validate();
    return f;
  }

  void validate() const {
    if (m < 4 || m > 20)
      throw DataError("basis dimension m = " + std::to_string(m) +
                      " outside the supported range [4, 20]");
    size_t expected = (kind == Kind::PiecewiseLinear) ? size_t(m) : size_t(m - 2);
    if (knots.size() != expected)
      throw DataError("basis knot count does not match dimension");
    if (knots.front() != 0.0 || knots.back() != 1.0)
      throw DataError("basis knots must start at 0 and end at 1");
    for (size_t i = 1; i < knots.size(); ++i)
      if (!(knots[i] > knots[i - 1]))
        throw DataError("basis knots must be strictly increasing");
  }

  // Values of all m basis functions at x in [0,1].
  Eigen::VectorXd eval(double x) const {
    check_x(x);
    return (kind == Kind::PiecewiseLinear) ? eval_linear(x) : eval_cubic(x, 0);
  }

  // Second derivatives at x. For the piecewise-linear family the classical
  // second derivative is distributional; this returns zeros (the a.e. value)
  // and the regularizer uses a discrete surrogate instead.
  Eigen::VectorXd eval_second(double x) const {
    check_x(x);
    if (kind == Kind::PiecewiseLinear) return Eigen::VectorXd::Zero(m);
    return eval_cubic(x, 2);
  }

  // Abscissae xi_i with sum_i f(xi_i) Phi_i(x) == f(x) for affine f.
  Eigen::VectorXd affine_abscissae() const {
    Eigen::VectorXd xi(m);
    if (kind == Kind::PiecewiseLinear) {
      for (int i = 0; i < m; ++i) xi[i] = knots[i];
    } else {
      auto t = full_knots();
      for (int i = 0; i < m; ++i) xi[i] = (t[i + 1] + t[i + 2] + t[i + 3]) / 3.0;
    }
    return xi;
  }

  // Full clamped knot vector (cubic kind only), size m + 4.
  std::vector<double> full_knots() const {
    std::vector<double> t(m + 4);
    for (int i = 0; i < 4; ++i) t[i] = 0.0;
    for (size_t i = 1; i + 1 < knots.size(); ++i) t[3 + i] = knots[i];
    for (int i = m; i < m + 4; ++i) t[i] = 1.0;
    return t;
  }

private:
  void check_x(double x) const {
    if (!(x >= 0.0 && x <= 1.0))
      throw DataError("basis evaluation point " + std::to_string(x) +
                      " outside [0,1]");
  }

  Eigen::VectorXd eval_linear(double x) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(m);
    auto it = std::upper_bound(knots.begin(), knots.end(), x);
    int k = int(it - knots.begin()) - 1;
    if (k >= m - 1) k = m - 2;
    double h = knots[k + 1] - knots[k];
    double s = (x - knots[k]) / h;
    v[k] = 1.0 - s;
    v[k + 1] = s;
    return v;
  }

  // Iterative basis-function evaluation with derivatives (triangular table),
  // cubic order. deriv = 0 for values, 2 for second derivatives.
  Eigen::VectorXd eval_cubic(double x, int deriv) const {
    constexpr int p = 3;
    auto t = full_knots();
    // span index: largest i with t[i] <= x < t[i+1], clamped at the right end
    int span = p;
    int hi = m;  // one past last valid span start
    while (span + 1 < hi && !(x < t[span + 1])) ++span;

    double left[p + 1], right[p + 1];
    double ndu[p + 1][p + 1];
    ndu[0][0] = 1.0;
    for (int j = 1; j <= p; ++j) {
      left[j] = x - t[span + 1 - j];
      right[j] = t[span + j] - x;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        ndu[j][r] = right[r + 1] + left[j - r];
        double temp = ndu[r][j - 1] / ndu[j][r];
        ndu[r][j] = saved + right[r + 1] * temp;
        saved = left[j - r] * temp;
      }
      ndu[j][j] = saved;
    }

    Eigen::VectorXd out = Eigen::VectorXd::Zero(m);
    if (deriv == 0) {
      for (int j = 0; j <= p; ++j) out[span - p + j] = ndu[j][p];
      return out;
    }

    // second derivative via the two-row difference recurrence
    for (int r = 0; r <= p; ++r) {
      double a[2][p + 1];
      a[0][0] = 1.0;
      int s1 = 0, s2 = 1;
      double d = 0.0;
      for (int k = 1; k <= deriv; ++k) {
        d = 0.0;
        int rk = r - k, pk = p - k;
        if (r >= k) {
          a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
          d = a[s2][0] * ndu[rk][pk];
        }
        int j1 = (rk >= -1) ? 1 : -rk;
        int j2 = (r - 1 <= pk) ? k - 1 : p - r;
        for (int j = j1; j <= j2; ++j) {
          a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
          d += a[s2][j] * ndu[rk + j][pk];
        }
        if (r <= pk) {
          a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
          d += a[s2][k] * ndu[r][pk];
        }
        std::swap(s1, s2);
      }
      double factor = 1.0;
      for (int k = p; k > p - deriv; --k) factor *= k;
      out[span - p + r] = d * factor;
    }
    return out;
  }
};

// Curvature penalty matrix Lambda_1 (m x m).
// Cubic B-splines: exact Gram matrix of second derivatives. Phi'' is
// piecewise linear, so a 2-point Gauss rule per knot span integrates the
// products exactly.
// Piecewise linear: Gram matrix of the divided second differences of the
// coefficient sequence at interior knots, penalizing the same curvature the
// classical term would.
inline Eigen::MatrixXd regularization_matrix(const BasisFamily& family) {
  const int m = family.m;
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(m, m);
  if (family.kind == BasisFamily::Kind::CubicBSpline) {
    const double g = 1.0 / std::sqrt(3.0);
    for (size_t s = 0; s + 1 < family.knots.size(); ++s) {
      double a = family.knots[s], b = family.knots[s + 1];
      double mid = 0.5 * (a + b), half = 0.5 * (b - a);
      for (int q = 0; q < 2; ++q) {
        double x = mid + (q == 0 ? -g : g) * half;
        Eigen::VectorXd d2 = family.eval_second(x);
        L.noalias() += half * d2 * d2.transpose();
      }
    }
  } else {
    for (int i = 1; i + 1 < m; ++i) {
      double h0 = family.knots[i] - family.knots[i - 1];
      double h1 = family.knots[i + 1] - family.knots[i];
      Eigen::VectorXd row = Eigen::VectorXd::Zero(m);
      row[i - 1] = 2.0 / (h0 * (h0 + h1));
      row[i] = -2.0 / (h0 * h1);
      row[i + 1] = 2.0 / (h1 * (h0 + h1));
      L.noalias() += row * row.transpose();
    }
  }
  return L;
}

// Block-diagonal 2m x 2m regularizer diag(eps1 * Lambda1, eps2 * Lambda1)
// for the stacked coefficient vector u = (a, b).
inline Eigen::MatrixXd stacked_regularizer(const Eigen::MatrixXd& lambda1,
                                           double eps1, double eps2) {
  const int m = lambda1.rows();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  L.topLeftCorner(m, m) = eps1 * lambda1;
  L.bottomRightCorner(m, m) = eps2 * lambda1;
  return L;
}

}  // namespace eqrec
