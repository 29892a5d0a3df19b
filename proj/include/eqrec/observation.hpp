#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "eqrec/basis.hpp"
#include "eqrec/errors.hpp"
#include "eqrec/flux.hpp"
#include "eqrec/measurements.hpp"
#include "eqrec/mesh.hpp"
#include "eqrec/profiles.hpp"

namespace eqrec {

// Periodic cubic spline interpolation of flux-loop readings in boundary
// arclength, evaluated at every boundary node. Needs at least 4 loops.
inline Eigen::VectorXd interpolate_dirichlet(const std::vector<FluxLoop>& loops,
                                             const Mesh& mesh) {
  const int n = static_cast<int>(loops.size());
  if (n < 4) throw DataError("Dirichlet interpolation needs at least 4 flux loops");
  const double period = mesh.boundary_perimeter;

  std::vector<std::pair<double, double>> pts(n);
  for (int i = 0; i < n; ++i) {
    double s = std::fmod(loops[i].s, period);
    if (s < 0) s += period;
    pts[i] = {s, loops[i].value};
  }
  std::sort(pts.begin(), pts.end());
  for (int i = 1; i < n; ++i)
    if (pts[i].first - pts[i - 1].first < 1e-12 * period)
      throw DataError("flux loops at duplicate arclength positions");

  // second derivatives of the periodic natural spline; the cyclic
  // tridiagonal system is small enough for a dense solve
  Eigen::VectorXd h(n);
  for (int i = 0; i < n; ++i) {
    double s1 = (i + 1 < n) ? pts[i + 1].first : pts[0].first + period;
    h[i] = s1 - pts[i].first;
  }
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhs(n);
  for (int i = 0; i < n; ++i) {
    int im = (i + n - 1) % n, ip = (i + 1) % n;
    A(i, im) += h[im] / 6.0;
    A(i, i) += (h[im] + h[i]) / 3.0;
    A(i, ip) += h[i] / 6.0;
    double yi = pts[i].second, yip = pts[ip].second, yim = pts[im].second;
    rhs[i] = (yip - yi) / h[i] - (yi - yim) / h[im];
  }
  Eigen::VectorXd M = A.partialPivLu().solve(rhs);

  auto eval = [&](double s) {
    s = std::fmod(s, period);
    if (s < 0) s += period;
    int k = n - 1;
    for (int i = 0; i < n - 1; ++i)
      if (s >= pts[i].first && s < pts[i + 1].first) {
        k = i;
        break;
      }
    if (s < pts[0].first) {
      // wrap segment from the last point backwards through 0
      k = n - 1;
      s += period;
    }
    double s0 = pts[k].first;
    double hk = h[k];
    double t = s - s0;
    double y0 = pts[k].second, y1 = pts[(k + 1) % n].second;
    double m0 = M[k], m1 = M[(k + 1) % n];
    double a = (hk - t);
    return (m0 * a * a * a + m1 * t * t * t) / (6.0 * hk) +
           (y0 / hk - m0 * hk / 6.0) * a + (y1 / hk - m1 * hk / 6.0) * t;
  };

  Eigen::VectorXd hout(mesh.boundary_nodes.size());
  for (size_t k = 0; k < mesh.boundary_nodes.size(); ++k)
    hout[k] = eval(mesh.boundary_arclength[k]);
  return hout;
}

namespace detail {

inline double distance_to_boundary(const Mesh& mesh, Point p) {
  double best = std::numeric_limits<double>::infinity();
  const int nb = static_cast<int>(mesh.boundary_nodes.size());
  for (int k = 0; k < nb; ++k) {
    Point a = mesh.nodes[mesh.boundary_nodes[k]];
    Point b = mesh.nodes[mesh.boundary_nodes[(k + 1) % nb]];
    Point d = b - a;
    double t = std::clamp(dot(p - a, d) / dot(d, d), 0.0, 1.0);
    best = std::min(best, norm(p - (a + t * d)));
  }
  return best;
}

}  // namespace detail

// Observation rows for magnetic probes: row . Psi = (1/r) dpsi/dn at the
// probe point, via the P1 gradient of the containing triangle and the
// sensor's stored normal.
inline Eigen::MatrixXd probe_rows(const Mesh& mesh,
                                  const std::vector<MagneticProbe>& probes) {
  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(probes.size(), mesh.node_count());
  double tol = 1e-6 * mesh.boundary_perimeter;
  for (size_t i = 0; i < probes.size(); ++i) {
    const auto& pr = probes[i];
    if (detail::distance_to_boundary(mesh, pr.position) > tol)
      throw DataError("probe " + std::to_string(i) + " does not lie on the boundary");
    auto loc = locate_point(mesh, pr.position);
    if (!loc) throw DataError("probe " + std::to_string(i) + " is outside the mesh");
    const auto& tri = mesh.triangles[loc->triangle];
    for (int k = 0; k < 3; ++k)
      rows(i, tri[k]) = dot(pr.normal, mesh.tri_grad[loc->triangle][k]) / pr.position.r;
  }
  return rows;
}

struct ChordQuadPoint {
  Point x;
  double weight;
  int triangle;
};

// Clips the chord polyline against every triangle and lays a 2-point Gauss
// rule on each clipped piece. Weights sum to the in-mesh chord length.
inline std::vector<ChordQuadPoint> chord_quadrature(const Mesh& mesh,
                                                    const Chord& chord) {
  std::vector<ChordQuadPoint> qps;
  const double g = 0.5 / std::sqrt(3.0);
  for (size_t s = 0; s + 1 < chord.points.size(); ++s) {
    Point p = chord.points[s], q = chord.points[s + 1];
    Point d = q - p;
    double seglen = norm(d);
    if (seglen <= 0.0) continue;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
      const auto& tri = mesh.triangles[t];
      // intersect the parametric segment with the three inner half-planes
      double t0 = 0.0, t1 = 1.0;
      bool empty = false;
      for (int k = 0; k < 3 && !empty; ++k) {
        Point a = mesh.nodes[tri[k]], b = mesh.nodes[tri[(k + 1) % 3]];
        Point e = b - a;
        double f0 = cross(e, p - a);
        double f1 = cross(e, d);  // f(t) = f0 + t f1 >= 0 inside
        if (std::abs(f1) < 1e-300) {
          if (f0 < 0.0) empty = true;
          continue;
        }
        double tc = -f0 / f1;
        if (f1 > 0.0)
          t0 = std::max(t0, tc);
        else
          t1 = std::min(t1, tc);
        if (t0 >= t1) empty = true;
      }
      if (empty || t1 - t0 <= 1e-14) continue;
      double mid = 0.5 * (t0 + t1), halfw = (t1 - t0) * seglen * 0.5;
      for (int sign = -1; sign <= 1; sign += 2) {
        double tt = mid + sign * g * (t1 - t0);
        qps.push_back({p + tt * d, halfw, t});
      }
    }
  }
  if (qps.empty()) throw DataError("chord lies entirely outside the mesh");
  return qps;
}

namespace detail {

// Normalized flux at a chord quadrature point with the vacuum policy:
// returns false when the point is outside the plasma (its triangle is not in
// the axis component or psibar > 1), where the density is taken as zero.
inline bool plasma_psibar(const Mesh& mesh, const PsiField& psi,
                          const PlasmaDomain& dom, const ChordQuadPoint& qp,
                          double& psibar) {
  if (!dom.tri_in_component[qp.triangle]) return false;
  auto bary = mesh.barycentric(qp.triangle, qp.x);
  double v = mesh.interpolate(psi, qp.triangle, bary);
  psibar = normalize_flux(v, dom.psi_axis, dom.psi_b);
  if (psibar > 1.0) return false;
  if (psibar < 0.0) psibar = 0.0;  // interpolation overshoot near the axis
  return true;
}

}  // namespace detail

// Interferometry design matrix: M_ij = int_{C_i} Phi_j(psibar) dl over the
// in-plasma part of each active chord. M . c predicts the beta readings.
inline Eigen::MatrixXd interferometry_matrix(const Mesh& mesh,
                                             const std::vector<Chord>& chords,
                                             const PsiField& psi,
                                             const PlasmaDomain& dom,
                                             const BasisFamily& family) {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(chords.size(), family.m);
  for (size_t i = 0; i < chords.size(); ++i) {
    for (const auto& qp : chord_quadrature(mesh, chords[i])) {
      double psibar;
      if (!detail::plasma_psibar(mesh, psi, dom, qp, psibar)) continue;
      M.row(i) += qp.weight * family.eval(psibar).transpose();
    }
  }
  return M;
}

// Polarimetry rows: row . Psi = int_{C_i} (n_e(psibar)/r) (grad psi . nu) dl
// with nu the in-plane unit normal of the chord direction. The rows are
// linear in Psi for frozen psibar and n_e.
inline Eigen::MatrixXd polarimetry_rows(const Mesh& mesh,
                                        const std::vector<Chord>& chords,
                                        const Eigen::VectorXd& ne_coeffs,
                                        const BasisFamily& family,
                                        const PsiField& psi,
                                        const PlasmaDomain& dom) {
  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(chords.size(), mesh.node_count());
  for (size_t i = 0; i < chords.size(); ++i) {
    const auto& chord = chords[i];
    // chord direction per point; single-segment chords have one direction
    for (const auto& qp : chord_quadrature(mesh, chord)) {
      double psibar;
      if (!detail::plasma_psibar(mesh, psi, dom, qp, psibar)) continue;
      // find the segment this point belongs to for its normal
      Point dir{0, 0};
      for (size_t s = 0; s + 1 < chord.points.size(); ++s) {
        Point a = chord.points[s], b = chord.points[s + 1];
        Point d = b - a;
        double len2 = dot(d, d);
        double t = len2 > 0 ? dot(qp.x - a, d) / len2 : -1;
        if (t >= -1e-9 && t <= 1.0 + 1e-9 &&
            std::abs(cross(d, qp.x - a)) <= 1e-9 * std::sqrt(len2) * (1 + norm(qp.x - a))) {
          dir = (1.0 / std::sqrt(len2)) * d;
          break;
        }
      }
      if (dir.r == 0 && dir.z == 0) {
        Point d = chord.points.back() - chord.points.front();
        dir = (1.0 / norm(d)) * d;
      }
      Point nu{-dir.z, dir.r};
      double ne = family.eval(psibar).dot(ne_coeffs);
      const auto& tri = mesh.triangles[qp.triangle];
      for (int k = 0; k < 3; ++k)
        rows(i, tri[k]) +=
            qp.weight * (ne / qp.x.r) * dot(nu, mesh.tri_grad[qp.triangle][k]);
    }
  }
  return rows;
}

enum class RowKind { Probe, Polarimetry };

// Observation operator C with its readings k and weight diagonal d:
// probe rows first, then the active polarimetry chords.
struct ObservationOperator {
  Eigen::MatrixXd C;
  Eigen::VectorXd k;
  Eigen::VectorXd d;  // w_i / sigma_i^2
  std::vector<RowKind> row_kinds;
};

inline ObservationOperator assemble_observations(
    const Mesh& mesh, const MeasurementSet& ms, const Eigen::VectorXd& ne_coeffs,
    const BasisFamily& family, const PsiField& psi, const PlasmaDomain& dom,
    double K1) {
  std::vector<Chord> active;
  std::vector<size_t> active_idx;
  for (size_t i = 0; i < ms.chords.size(); ++i)
    if (ms.chords[i].polarimetry_active) {
      active.push_back(ms.chords[i]);
      active_idx.push_back(i);
    }

  const int l = static_cast<int>(ms.probes.size() + active.size());
  ObservationOperator obs;
  obs.C.resize(l, mesh.node_count());
  obs.k.resize(l);
  obs.d.resize(l);
  obs.row_kinds.resize(l);

  Eigen::MatrixXd pr = probe_rows(mesh, ms.probes);
  for (size_t i = 0; i < ms.probes.size(); ++i) {
    obs.C.row(i) = pr.row(i);
    obs.k[i] = ms.probes[i].value;
    obs.d[i] = 1.0 / (ms.probes[i].sigma * ms.probes[i].sigma);
    obs.row_kinds[i] = RowKind::Probe;
  }
  if (!active.empty()) {
    Eigen::MatrixXd po = polarimetry_rows(mesh, active, ne_coeffs, family, psi, dom);
    for (size_t a = 0; a < active.size(); ++a) {
      int row = static_cast<int>(ms.probes.size() + a);
      obs.C.row(row) = po.row(a);
      obs.k[row] = active[a].alpha;
      obs.d[row] = K1 / (active[a].sigma_alpha * active[a].sigma_alpha);
      obs.row_kinds[row] = RowKind::Polarimetry;
    }
  }
  return obs;
}

}  // namespace eqrec
