#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "eqrec/errors.hpp"
#include "eqrec/mesh.hpp"

namespace eqrec {

enum class BoundaryKind { Limiter, XPoint };

struct AxisResult {
  Point point;
  double psi_axis;
  int node;  // nodal maximizer
};

struct SaddleResult {
  Point point;
  double psi;
};

// Plasma region Omega_p = {psi >= psi_b}, restricted to the edge-connected
// triangle component containing the magnetic axis. Membership is tracked at
// quadrature-point granularity so boundary elements contribute partial
// plasma current.
struct PlasmaDomain {
  double psi_axis = 0.0;
  Point axis_point{};
  double psi_b = 0.0;
  BoundaryKind boundary_kind = BoundaryKind::Limiter;
  std::optional<Point> xpoint;

  std::vector<std::array<char, 3>> quad_inside;   // per triangle, per quad point
  std::vector<std::array<double, 3>> quad_psibar; // normalized flux at quad points
  std::vector<char> tri_in_component;             // axis-connected plasma triangles
  int axis_triangle = -1;

  bool inside(int t, int q) const { return quad_inside[t][q] != 0; }
  bool empty() const {
    for (const auto& tq : quad_inside)
      for (char c : tq)
        if (c) return false;
    return true;
  }
};

inline double normalize_flux(double psi_value, double psi_axis, double psi_b) {
  if (psi_b == psi_axis)
    throw NumericalError("cannot normalize flux: psi_b equals psi_axis");
  return (psi_value - psi_axis) / (psi_b - psi_axis);
}

namespace detail {

// Least-squares quadratic fit psi ~ c0 + c1 dr + c2 dz + c3 dr^2 + c4 dr dz
// + c5 dz^2 over the 1-ring patch of a node, in coordinates centered on the
// node and scaled by the patch diameter.
struct PatchFit {
  Eigen::Matrix<double, 6, 1> c;
  double scale;       // patch radius used for conditioning
  double flux_range;  // max - min of psi over the patch
  bool ok = false;
};

inline PatchFit fit_patch(const Mesh& mesh, const PsiField& psi, int node) {
  std::vector<int> patch{node};
  for (int t : mesh.node_tris[node])
    for (int k : mesh.triangles[t])
      if (k != node && std::find(patch.begin(), patch.end(), k) == patch.end())
        patch.push_back(k);

  PatchFit fit;
  if (patch.size() < 6) return fit;
  Point c0 = mesh.nodes[node];
  double radius = 0.0;
  for (int k : patch) radius = std::max(radius, norm(mesh.nodes[k] - c0));
  if (radius <= 0.0) return fit;

  Eigen::MatrixXd A(patch.size(), 6);
  Eigen::VectorXd b(patch.size());
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (size_t i = 0; i < patch.size(); ++i) {
    Point d = mesh.nodes[patch[i]] - c0;
    double x = d.r / radius, y = d.z / radius;
    A.row(i) << 1.0, x, y, x * x, x * y, y * y;
    b[i] = psi.values[patch[i]];
    lo = std::min(lo, b[i]);
    hi = std::max(hi, b[i]);
  }
  fit.c = A.colPivHouseholderQr().solve(b);
  fit.scale = radius;
  fit.flux_range = hi - lo;
  fit.ok = true;
  return fit;
}

inline double fit_value(const PatchFit& f, double x, double y) {
  return f.c[0] + f.c[1] * x + f.c[2] * y + f.c[3] * x * x + f.c[4] * x * y +
         f.c[5] * y * y;
}

// Stationary point of the fitted quadratic in scaled coordinates.
inline bool fit_stationary(const PatchFit& f, double& x, double& y) {
  double a = 2.0 * f.c[3], bq = f.c[4], c = 2.0 * f.c[5];
  double det = a * c - bq * bq;
  if (std::abs(det) < 1e-300) return false;
  x = (-f.c[1] * c + f.c[2] * bq) / det;
  y = (-f.c[2] * a + f.c[1] * bq) / det;
  return true;
}

}  // namespace detail

// Magnetic axis: the interior maximum of psi, refined by a quadratic fit on
// the maximizer's node patch. Fails if the maximum sits on the wall
// (no confined plasma).
inline AxisResult find_axis(const Mesh& mesh, const PsiField& psi) {
  const int n = mesh.node_count();
  if (psi.values.size() != n) throw DataError("psi field length mismatch");
  if (!psi.values.allFinite()) throw DataError("psi field contains non-finite values");

  int imax = 0;
  for (int i = 1; i < n; ++i)
    if (psi.values[i] > psi.values[imax]) imax = i;

  double max_boundary = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    if (mesh.node_on_boundary[i]) max_boundary = std::max(max_boundary, psi.values[i]);
  if (mesh.node_on_boundary[imax] || !(psi.values[imax] > max_boundary))
    throw NumericalError("no plasma: psi attains its maximum on the domain boundary");

  AxisResult res;
  res.node = imax;
  res.point = mesh.nodes[imax];
  res.psi_axis = psi.values[imax];

  auto fit = detail::fit_patch(mesh, psi, imax);
  if (fit.ok) {
    double x, y;
    bool have = detail::fit_stationary(fit, x, y);
    // accept only a concave stationary point inside the patch
    bool concave = (2.0 * fit.c[3] < 0.0) &&
                   (4.0 * fit.c[3] * fit.c[5] - fit.c[4] * fit.c[4] > 0.0);
    if (have && concave && x * x + y * y <= 1.0) {
      res.point = mesh.nodes[imax] + Point{x * fit.scale, y * fit.scale};
      res.psi_axis = std::max(res.psi_axis, detail::fit_value(fit, x, y));
    }
  }
  return res;
}

// Saddle-point search for the X-point: interior nodes whose patch fit has an
// indefinite Hessian and a small fitted gradient. Returns the saddle with the
// largest psi, or nothing.
inline std::optional<SaddleResult> find_xpoint(const Mesh& mesh, const PsiField& psi) {
  if (psi.values.size() != mesh.node_count())
    throw DataError("psi field length mismatch");
  std::optional<SaddleResult> best;
  for (int i = 0; i < mesh.node_count(); ++i) {
    if (mesh.node_on_boundary[i]) continue;
    auto fit = detail::fit_patch(mesh, psi, i);
    if (!fit.ok || fit.flux_range <= 0.0) continue;
    double det = 4.0 * fit.c[3] * fit.c[5] - fit.c[4] * fit.c[4];
    if (!(det < 0.0)) continue;  // not a saddle
    // gradient of the fit at the node, back in physical units
    double grad = std::hypot(fit.c[1], fit.c[2]) / fit.scale;
    double tol = 1e-3 * fit.flux_range / fit.scale;
    if (grad > tol) continue;
    double x, y;
    if (!detail::fit_stationary(fit, x, y)) continue;
    if (x * x + y * y > 1.0) continue;  // stationary point escaped the patch
    SaddleResult cand;
    cand.point = mesh.nodes[i] + Point{x * fit.scale, y * fit.scale};
    cand.psi = detail::fit_value(fit, x, y);
    if (!best || cand.psi > best->psi) best = cand;
  }
  return best;
}

// Plasma boundary flux: the largest of the limiter flux and the X-point flux
// wins (the surface the plasma touches first moving outward from the axis).
// Ties resolve to the limiter. An empty limiter list means the wall itself
// limits the plasma.
inline std::pair<double, BoundaryKind> compute_boundary_flux(
    const PsiField& psi, const Mesh& mesh, const AxisResult& axis,
    const std::optional<SaddleResult>& xp) {
  const std::vector<int>& lim =
      mesh.limiter_nodes.empty() ? mesh.boundary_nodes : mesh.limiter_nodes;
  double psi_lim = -std::numeric_limits<double>::infinity();
  for (int i : lim) psi_lim = std::max(psi_lim, psi.values[i]);

  double psi_b = psi_lim;
  BoundaryKind kind = BoundaryKind::Limiter;
  if (xp && xp->psi > psi_lim) {
    psi_b = xp->psi;
    kind = BoundaryKind::XPoint;
  }
  if (!(psi_b < axis.psi_axis))
    throw NumericalError("no plasma: boundary flux is not below the axis flux");
  return {psi_b, kind};
}

// Marks plasma membership per quadrature point: psi >= psi_b and the owning
// triangle belongs to the axis-connected component (disconnected super-level
// lobes are excluded).
inline PlasmaDomain build_plasma_domain(const Mesh& mesh, const PsiField& psi,
                                        const AxisResult& axis, double psi_b,
                                        BoundaryKind kind,
                                        std::optional<Point> xpoint = std::nullopt) {
  const int nt = mesh.triangle_count();
  PlasmaDomain dom;
  dom.psi_axis = axis.psi_axis;
  dom.axis_point = axis.point;
  dom.psi_b = psi_b;
  dom.boundary_kind = kind;
  dom.xpoint = xpoint;
  dom.quad_inside.assign(nt, {0, 0, 0});
  dom.quad_psibar.assign(nt, {0.0, 0.0, 0.0});
  dom.tri_in_component.assign(nt, 0);

  std::vector<char> touches(nt, 0);
  for (int t = 0; t < nt; ++t) {
    auto qps = tri_quadrature(mesh, t);
    for (int q = 0; q < 3; ++q) {
      double v = mesh.interpolate(psi, t, {qps[q].shape[0], qps[q].shape[1], qps[q].shape[2]});
      dom.quad_psibar[t][q] = normalize_flux(v, dom.psi_axis, psi_b);
      if (v >= psi_b) touches[t] = 1;
    }
  }

  auto loc = locate_point(mesh, axis.point);
  if (!loc) throw NumericalError("magnetic axis fell outside the mesh");
  dom.axis_triangle = loc->triangle;
  if (!touches[dom.axis_triangle])
    throw NumericalError("empty plasma: the axis triangle has no point above psi_b");

  std::deque<int> queue{dom.axis_triangle};
  dom.tri_in_component[dom.axis_triangle] = 1;
  while (!queue.empty()) {
    int t = queue.front();
    queue.pop_front();
    for (int nb : mesh.tri_neighbor[t]) {
      if (nb >= 0 && touches[nb] && !dom.tri_in_component[nb]) {
        dom.tri_in_component[nb] = 1;
        queue.push_back(nb);
      }
    }
  }

  bool any = false;
  for (int t = 0; t < nt; ++t) {
    if (!dom.tri_in_component[t]) continue;
    for (int q = 0; q < 3; ++q) {
      if (dom.quad_psibar[t][q] <= 1.0) {
        dom.quad_inside[t][q] = 1;
        any = true;
        // interpolation can overshoot psi_axis only by roundoff near the axis
        if (dom.quad_psibar[t][q] < 0.0) {
          if (dom.quad_psibar[t][q] < -1e-9)
            throw NumericalError("normalized flux fell below 0 inside the plasma");
          dom.quad_psibar[t][q] = 0.0;
        }
      }
    }
  }
  if (!any) throw NumericalError("empty plasma: no quadrature point above psi_b");
  return dom;
}

// Convenience: axis + X-point + boundary flux + membership in one call.
inline PlasmaDomain analyze_flux(const Mesh& mesh, const PsiField& psi) {
  AxisResult axis = find_axis(mesh, psi);
  auto xp = find_xpoint(mesh, psi);
  auto [psi_b, kind] = compute_boundary_flux(psi, mesh, axis, xp);
  std::optional<Point> xpt;
  if (kind == BoundaryKind::XPoint) xpt = xp->point;
  return build_plasma_domain(mesh, psi, axis, psi_b, kind, xpt);
}

// One marching-triangles segment of a level set, with its owning triangle.
// Endpoints carry the crossed mesh edge so segments chain exactly.
struct ContourSegment {
  Point a, b;
  std::pair<int, int> edge_a, edge_b;  // (min, max) node indices
  int triangle;
};

namespace detail {

// Level-set segments of the P1 interpolant at psi = level, restricted to the
// plasma component. "Inside" is psi >= level, so nodes sitting exactly on the
// level are handled consistently. The crossing point on an edge is computed
// from the lower-index node, making it identical for both incident triangles.
inline std::vector<ContourSegment> contour_segments(const Mesh& mesh,
                                                    const PsiField& psi,
                                                    const PlasmaDomain& dom,
                                                    double psi_level) {
  // vertex-ring closure of the plasma component: near the boundary surface
  // the level set clips triangle corners whose interior quadrature points lie
  // below psi_b, so the component alone would leave gaps in the contour
  std::vector<char> allowed(mesh.triangle_count(), 0);
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    if (!dom.tri_in_component[t]) continue;
    allowed[t] = 1;
    for (int v : mesh.triangles[t])
      for (int nb : mesh.node_tris[v]) allowed[nb] = 1;
  }

  std::vector<ContourSegment> segs;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    if (!allowed[t]) continue;
    const auto& tri = mesh.triangles[t];
    bool in[3];
    for (int k = 0; k < 3; ++k) in[k] = psi.values[tri[k]] >= psi_level;
    if (in[0] == in[1] && in[1] == in[2]) continue;
    Point pts[2];
    std::pair<int, int> edges[2];
    int np = 0;
    for (int k = 0; k < 3; ++k) {
      int i = tri[k], j = tri[(k + 1) % 3];
      if (in[k] == in[(k + 1) % 3]) continue;
      if (i > j) std::swap(i, j);
      double s = (psi_level - psi.values[i]) / (psi.values[j] - psi.values[i]);
      if (np < 2) {
        // crossings that land exactly on a node get a node key (i,i) so the
        // chain reconnects across the vertex
        if (s == 0.0) {
          pts[np] = mesh.nodes[i];
          edges[np] = {i, i};
        } else if (s == 1.0) {
          pts[np] = mesh.nodes[j];
          edges[np] = {j, j};
        } else {
          pts[np] = mesh.nodes[i] + s * (mesh.nodes[j] - mesh.nodes[i]);
          edges[np] = {i, j};
        }
        ++np;
      }
    }
    if (np == 2 && edges[0] != edges[1])
      segs.push_back({pts[0], pts[1], edges[0], edges[1], t});
  }
  return segs;
}

}  // namespace detail

// Closed contour polyline of the interpolant at normalized level in (0, 1],
// restricted to the plasma component, ordered counterclockwise; the first
// vertex is repeated at the end. When the level set splits into several
// loops, the one enclosing the largest area is returned.
inline std::vector<Point> flux_contour(const Mesh& mesh, const PsiField& psi,
                                       const PlasmaDomain& dom, double level) {
  if (!(level > 0.0 && level <= 1.0))
    throw DataError("contour level must lie in (0, 1]");
  double psi_level = dom.psi_axis + level * (dom.psi_b - dom.psi_axis);
  auto segs = detail::contour_segments(mesh, psi, dom, psi_level);
  if (segs.empty()) throw NumericalError("empty contour at level " + std::to_string(level));

  // chain segments into loops by matching the crossed edges
  std::multimap<std::pair<int, int>, size_t> by_edge;
  for (size_t i = 0; i < segs.size(); ++i) {
    by_edge.insert({segs[i].edge_a, i});
    by_edge.insert({segs[i].edge_b, i});
  }
  std::vector<char> used(segs.size(), 0);
  std::vector<std::vector<Point>> loops;
  for (size_t start = 0; start < segs.size(); ++start) {
    if (used[start]) continue;
    std::vector<Point> loop{segs[start].a, segs[start].b};
    used[start] = 1;
    auto cur_edge = segs[start].edge_b;
    while (true) {
      auto range = by_edge.equal_range(cur_edge);
      size_t next = segs.size();
      for (auto it = range.first; it != range.second; ++it)
        if (!used[it->second]) {
          next = it->second;
          break;
        }
      if (next == segs.size()) break;
      used[next] = 1;
      if (segs[next].edge_a == cur_edge) {
        loop.push_back(segs[next].b);
        cur_edge = segs[next].edge_b;
      } else {
        loop.push_back(segs[next].a);
        cur_edge = segs[next].edge_a;
      }
    }
    loops.push_back(std::move(loop));
  }

  // pick the loop with the largest enclosed area
  size_t best = 0;
  double best_area = -1.0;
  for (size_t i = 0; i < loops.size(); ++i) {
    double a2 = 0.0;
    const auto& lp = loops[i];
    for (size_t k = 0; k + 1 < lp.size(); ++k) a2 += cross(lp[k], lp[k + 1]);
    a2 += cross(lp.back(), lp.front());
    if (std::abs(a2) > best_area) {
      best_area = std::abs(a2);
      best = i;
    }
  }
  std::vector<Point> loop = loops[best];
  if (loop.size() > 1 && loop.back().r == loop.front().r &&
      loop.back().z == loop.front().z)
    loop.pop_back();  // the walk already closed onto the start edge

  // enforce CCW orientation and closure
  double a2 = 0.0;
  for (size_t k = 0; k + 1 < loop.size(); ++k) a2 += cross(loop[k], loop[k + 1]);
  a2 += cross(loop.back(), loop.front());
  if (a2 < 0.0) std::reverse(loop.begin(), loop.end());
  loop.push_back(loop.front());
  return loop;
}

}  // namespace eqrec
