#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eqrec/errors.hpp"

namespace eqrec {

inline constexpr double kMu0 = 4.0e-7 * 3.14159265358979323846;

struct Point {
  double r = 0.0;
  double z = 0.0;
};

inline Point operator+(Point a, Point b) { return {a.r + b.r, a.z + b.z}; }
inline Point operator-(Point a, Point b) { return {a.r - b.r, a.z - b.z}; }
inline Point operator*(double s, Point p) { return {s * p.r, s * p.z}; }
inline double dot(Point a, Point b) { return a.r * b.r + a.z * b.z; }
inline double cross(Point a, Point b) { return a.r * b.z - a.z * b.r; }
inline double norm(Point p) { return std::hypot(p.r, p.z); }

// Nodal values of the poloidal flux psi on a mesh.
struct PsiField {
  Eigen::VectorXd values;
};

// Triangulated poloidal cross-section. Nodes carry (r, z) coordinates in
// meters; triangles are CCW-oriented index triples; boundary_nodes trace the
// outer wall as a single closed loop ordered by arclength; limiter_nodes
// trace the limiter curve (may be empty, in which case the wall acts as the
// limiter).
//
// Construction goes through make_mesh()/load_mesh(), which validate all
// structural invariants eagerly and precompute the derived geometry below.
class Mesh {
public:
  std::vector<Point> nodes;
  std::vector<std::array<int, 3>> triangles;
  std::vector<int> boundary_nodes;
  std::vector<int> limiter_nodes;

  // derived geometry, filled by finalize()
  std::vector<double> tri_area;
  std::vector<std::array<Point, 3>> tri_grad;   // gradients of the 3 hats
  std::vector<Point> tri_centroid;
  std::vector<std::array<int, 3>> tri_neighbor; // across edge k = (k+1,k+2); -1 on boundary
  std::vector<std::vector<int>> node_tris;      // incident triangles per node
  std::vector<char> node_on_boundary;
  std::vector<double> boundary_arclength;       // per boundary_nodes entry
  double boundary_perimeter = 0.0;

  int node_count() const { return static_cast<int>(nodes.size()); }
  int triangle_count() const { return static_cast<int>(triangles.size()); }

  std::array<double, 3> barycentric(int t, Point p) const {
    const auto& tri = triangles[t];
    Point a = nodes[tri[0]], b = nodes[tri[1]], c = nodes[tri[2]];
    double twice = 2.0 * tri_area[t];
    double l0 = cross(b - p, c - p) / twice;
    double l1 = cross(c - p, a - p) / twice;
    double l2 = cross(a - p, b - p) / twice;
    return {l0, l1, l2};
  }

  Point point_at(int t, const std::array<double, 3>& bary) const {
    const auto& tri = triangles[t];
    return bary[0] * nodes[tri[0]] + bary[1] * nodes[tri[1]] +
           bary[2] * nodes[tri[2]];
  }

  double interpolate(const PsiField& psi, int t,
                     const std::array<double, 3>& bary) const {
    const auto& tri = triangles[t];
    return bary[0] * psi.values[tri[0]] + bary[1] * psi.values[tri[1]] +
           bary[2] * psi.values[tri[2]];
  }

  Point triangle_gradient(const PsiField& psi, int t) const {
    const auto& tri = triangles[t];
    Point g{0, 0};
    for (int k = 0; k < 3; ++k) {
      g.r += psi.values[tri[k]] * tri_grad[t][k].r;
      g.z += psi.values[tri[k]] * tri_grad[t][k].z;
    }
    return g;
  }

  void finalize();  // validates invariants, builds derived data
};

// One quadrature point of the canonical per-triangle rule.
struct TriQuadPoint {
  Point x;
  double weight;
  std::array<double, 3> shape;  // P1 hat values (= barycentric coords)
};

// Canonical 3-point barycentric Gauss rule, degree-2 exact. All plasma
// integrals (stiffness weight, current source, lambda normalization,
// plasma membership) share this rule so that chi_{Omega_p} is consistent
// across operators.
inline std::array<TriQuadPoint, 3> tri_quadrature(const Mesh& mesh, int t) {
  static constexpr double kBary[3][3] = {
      {2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0},
      {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0},
      {1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0},
  };
  const auto& tri = mesh.triangles[t];
  Point a = mesh.nodes[tri[0]], b = mesh.nodes[tri[1]], c = mesh.nodes[tri[2]];
  double w = mesh.tri_area[t] / 3.0;
  std::array<TriQuadPoint, 3> out;
  for (int q = 0; q < 3; ++q) {
    const double* l = kBary[q];
    out[q].x = l[0] * a + l[1] * b + l[2] * c;
    out[q].weight = w;
    out[q].shape = {l[0], l[1], l[2]};
  }
  return out;
}

namespace detail {

inline bool segments_intersect(Point p1, Point p2, Point q1, Point q2) {
  auto orient = [](Point a, Point b, Point c) {
    double v = cross(b - a, c - a);
    double scale = norm(b - a) * norm(c - a);
    if (std::abs(v) <= 1e-14 * scale) return 0;
    return v > 0 ? 1 : -1;
  };
  int o1 = orient(p1, p2, q1), o2 = orient(p1, p2, q2);
  int o3 = orient(q1, q2, p1), o4 = orient(q1, q2, p2);
  return o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0;
}

}  // namespace detail

inline void Mesh::finalize() {
  const int n = node_count();
  const int nt = triangle_count();
  if (n < 3) throw DataError("mesh needs at least 3 nodes");
  if (nt < 1) throw DataError("mesh needs at least 1 triangle");
  if (boundary_nodes.size() < 3) throw DataError("boundary loop needs at least 3 nodes");

  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(nodes[i].r) || !std::isfinite(nodes[i].z))
      throw DataError("node " + std::to_string(i) + " has non-finite coordinates");
    if (nodes[i].r <= 0.0)
      throw DataError("node " + std::to_string(i) + " has r <= 0");
  }

  tri_area.assign(nt, 0.0);
  tri_grad.assign(nt, {});
  tri_centroid.assign(nt, {});
  node_tris.assign(n, {});
  for (int t = 0; t < nt; ++t) {
    const auto& tri = triangles[t];
    for (int k = 0; k < 3; ++k) {
      if (tri[k] < 0 || tri[k] >= n)
        throw DataError("triangle " + std::to_string(t) + " references invalid node " +
                        std::to_string(tri[k]));
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      throw DataError("triangle " + std::to_string(t) + " has repeated nodes");
    Point a = nodes[tri[0]], b = nodes[tri[1]], c = nodes[tri[2]];
    double twice = cross(b - a, c - a);
    if (!(twice > 0.0))
      throw DataError("triangle " + std::to_string(t) + " has non-positive area");
    tri_area[t] = 0.5 * twice;
    // P1 hat gradients: grad v_k is perpendicular to the opposite edge
    tri_grad[t][0] = {(b.z - c.z) / twice, (c.r - b.r) / twice};
    tri_grad[t][1] = {(c.z - a.z) / twice, (a.r - c.r) / twice};
    tri_grad[t][2] = {(a.z - b.z) / twice, (b.r - a.r) / twice};
    tri_centroid[t] = (1.0 / 3.0) * (a + b + c);
    for (int k = 0; k < 3; ++k) node_tris[tri[k]].push_back(t);
  }

  // edge -> incident triangles; also gives neighbor table
  std::map<std::pair<int, int>, std::vector<int>> edge_tris;
  for (int t = 0; t < nt; ++t) {
    const auto& tri = triangles[t];
    for (int k = 0; k < 3; ++k) {
      int i = tri[(k + 1) % 3], j = tri[(k + 2) % 3];
      auto key = std::minmax(i, j);
      edge_tris[{key.first, key.second}].push_back(t);
    }
  }
  for (const auto& [edge, ts] : edge_tris) {
    if (ts.size() > 2)
      throw DataError("edge " + std::to_string(edge.first) + "-" +
                      std::to_string(edge.second) + " is shared by more than 2 triangles");
  }
  tri_neighbor.assign(nt, {-1, -1, -1});
  for (int t = 0; t < nt; ++t) {
    const auto& tri = triangles[t];
    for (int k = 0; k < 3; ++k) {
      int i = tri[(k + 1) % 3], j = tri[(k + 2) % 3];
      auto key = std::minmax(i, j);
      const auto& ts = edge_tris[{key.first, key.second}];
      for (int other : ts)
        if (other != t) tri_neighbor[t][k] = other;
    }
  }

  // boundary loop: every consecutive pair must be an edge with exactly one
  // incident triangle, the loop must visit each node once, and it must cover
  // all such edges (single closed loop, no interior holes).
  node_on_boundary.assign(n, 0);
  std::set<int> seen;
  const int nb = static_cast<int>(boundary_nodes.size());
  for (int k = 0; k < nb; ++k) {
    int i = boundary_nodes[k];
    if (i < 0 || i >= n)
      throw DataError("boundary loop references invalid node " + std::to_string(i));
    if (!seen.insert(i).second)
      throw DataError("boundary loop repeats node " + std::to_string(i));
    node_on_boundary[i] = 1;
  }
  int boundary_edge_count = 0;
  for (const auto& [edge, ts] : edge_tris)
    if (ts.size() == 1) ++boundary_edge_count;
  for (int k = 0; k < nb; ++k) {
    int i = boundary_nodes[k], j = boundary_nodes[(k + 1) % nb];
    auto key = std::minmax(i, j);
    auto it = edge_tris.find({key.first, key.second});
    if (it == edge_tris.end() || it->second.size() != 1)
      throw DataError("boundary loop segment " + std::to_string(i) + "-" +
                      std::to_string(j) + " is not a boundary edge");
  }
  if (boundary_edge_count != nb)
    throw DataError("boundary loop does not cover all boundary edges (" +
                    std::to_string(nb) + " listed, " +
                    std::to_string(boundary_edge_count) + " present)");
  for (int k = 0; k < nb; ++k) {
    Point p1 = nodes[boundary_nodes[k]];
    Point p2 = nodes[boundary_nodes[(k + 1) % nb]];
    for (int l = k + 2; l < nb; ++l) {
      if (k == 0 && l == nb - 1) continue;  // wrap-adjacent
      Point q1 = nodes[boundary_nodes[l]];
      Point q2 = nodes[boundary_nodes[(l + 1) % nb]];
      if (detail::segments_intersect(p1, p2, q1, q2))
        throw DataError("boundary loop self-intersects near segment " + std::to_string(k));
    }
  }
  boundary_arclength.assign(nb, 0.0);
  for (int k = 1; k < nb; ++k)
    boundary_arclength[k] = boundary_arclength[k - 1] +
                            norm(nodes[boundary_nodes[k]] - nodes[boundary_nodes[k - 1]]);
  boundary_perimeter = boundary_arclength[nb - 1] +
                       norm(nodes[boundary_nodes[0]] - nodes[boundary_nodes[nb - 1]]);

  std::set<int> lim_seen;
  for (int i : limiter_nodes) {
    if (i < 0 || i >= n)
      throw DataError("limiter list references invalid node " + std::to_string(i));
    if (!lim_seen.insert(i).second)
      throw DataError("limiter list repeats node " + std::to_string(i));
  }
}

inline Mesh make_mesh(std::vector<Point> nodes,
                      std::vector<std::array<int, 3>> triangles,
                      std::vector<int> boundary_nodes,
                      std::vector<int> limiter_nodes = {}) {
  Mesh m;
  m.nodes = std::move(nodes);
  m.triangles = std::move(triangles);
  m.boundary_nodes = std::move(boundary_nodes);
  m.limiter_nodes = std::move(limiter_nodes);
  m.finalize();
  return m;
}

// Text format:
//   nodes N triangles T boundary B limiter L
//   N lines "r z", T lines "i j k" (0-based), B boundary indices in loop
//   order, L limiter indices, one per line.
inline Mesh load_mesh(std::istream& in) {
  std::string line;
  long lineno = 0;
  auto next_line = [&](const char* what) {
    while (std::getline(in, line)) {
      ++lineno;
      auto pos = line.find_first_not_of(" \t\r\n");
      if (pos == std::string::npos) continue;  // blank
      if (line[pos] == '#') continue;          // comment
      return;
    }
    throw ParseError(std::string("unexpected end of file, expected ") + what, lineno);
  };

  next_line("header");
  std::istringstream hs(line);
  std::string w_nodes, w_tris, w_bnd, w_lim;
  long n = -1, t = -1, b = -1, l = -1;
  hs >> w_nodes >> n >> w_tris >> t >> w_bnd >> b >> w_lim >> l;
  if (hs.fail() || w_nodes != "nodes" || w_tris != "triangles" ||
      w_bnd != "boundary" || w_lim != "limiter")
    throw ParseError("malformed header, expected 'nodes N triangles T boundary B limiter L'",
                     lineno);
  if (n < 3 || t < 1 || b < 3 || l < 0)
    throw ParseError("inconsistent counts in header", lineno);

  Mesh m;
  m.nodes.reserve(n);
  for (long i = 0; i < n; ++i) {
    next_line("node coordinates");
    std::istringstream ls(line);
    Point p;
    ls >> p.r >> p.z;
    if (ls.fail()) throw ParseError("expected 'r z' for node " + std::to_string(i), lineno);
    m.nodes.push_back(p);
  }
  m.triangles.reserve(t);
  for (long i = 0; i < t; ++i) {
    next_line("triangle indices");
    std::istringstream ls(line);
    std::array<int, 3> tri{};
    ls >> tri[0] >> tri[1] >> tri[2];
    if (ls.fail())
      throw ParseError("expected 'i j k' for triangle " + std::to_string(i), lineno);
    m.triangles.push_back(tri);
  }
  m.boundary_nodes.reserve(b);
  for (long i = 0; i < b; ++i) {
    next_line("boundary node index");
    std::istringstream ls(line);
    int idx;
    ls >> idx;
    if (ls.fail()) throw ParseError("expected boundary node index", lineno);
    m.boundary_nodes.push_back(idx);
  }
  m.limiter_nodes.reserve(l);
  for (long i = 0; i < l; ++i) {
    next_line("limiter node index");
    std::istringstream ls(line);
    int idx;
    ls >> idx;
    if (ls.fail()) throw ParseError("expected limiter node index", lineno);
    m.limiter_nodes.push_back(idx);
  }
  m.finalize();
  return m;
}

inline Mesh load_mesh_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open mesh file: " + path);
  return load_mesh(in);
}

inline void save_mesh(const Mesh& m, std::ostream& out) {
  char buf[128];
  out << "nodes " << m.node_count() << " triangles " << m.triangle_count()
      << " boundary " << m.boundary_nodes.size() << " limiter "
      << m.limiter_nodes.size() << "\n";
  for (const auto& p : m.nodes) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g\n", p.r, p.z);
    out << buf;
  }
  for (const auto& t : m.triangles)
    out << t[0] << " " << t[1] << " " << t[2] << "\n";
  for (int i : m.boundary_nodes) out << i << "\n";
  for (int i : m.limiter_nodes) out << i << "\n";
}

struct PointLocation {
  int triangle = -1;
  std::array<double, 3> bary{};
};

// Point location: neighbor walk from a hint triangle with a brute-force
// fallback. Points on shared edges/vertices resolve to the lowest-index
// containing triangle so results are deterministic.
inline std::optional<PointLocation> locate_point(const Mesh& mesh, Point p,
                                                 int hint = 0) {
  const int nt = mesh.triangle_count();
  auto contains = [&](int t, std::array<double, 3>& bary) {
    bary = mesh.barycentric(t, p);
    double tol = 1e-12;
    return bary[0] >= -tol && bary[1] >= -tol && bary[2] >= -tol;
  };

  int t = (hint >= 0 && hint < nt) ? hint : 0;
  std::array<double, 3> bary{};
  bool found = false;
  for (int step = 0; step < 2 * nt + 8; ++step) {
    if (contains(t, bary)) {
      found = true;
      break;
    }
    int worst = 0;
    for (int k = 1; k < 3; ++k)
      if (bary[k] < bary[worst]) worst = k;
    int next = mesh.tri_neighbor[t][worst];
    if (next < 0) break;  // walked off the domain; fall back
    t = next;
  }
  if (!found) {
    for (int s = 0; s < nt; ++s) {
      if (contains(s, bary)) {
        t = s;
        found = true;
        break;
      }
    }
    if (!found) return std::nullopt;
    return PointLocation{t, bary};
  }
  // tie-break: if the point sits on an edge/vertex, prefer the lowest-index
  // containing triangle among the neighbors
  int best = t;
  auto best_bary = bary;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(bary[k]) <= 1e-12) {
      int nb = mesh.tri_neighbor[t][k];
      if (nb >= 0 && nb < best) {
        std::array<double, 3> b2{};
        if (contains(nb, b2)) {
          best = nb;
          best_bary = b2;
        }
      }
    }
  }
  // vertex case: scan the vertex star
  for (int k = 0; k < 3; ++k) {
    if (bary[k] >= 1.0 - 1e-12) {
      for (int cand : mesh.node_tris[mesh.triangles[t][k]]) {
        if (cand < best) {
          std::array<double, 3> b2{};
          if (contains(cand, b2)) {
            best = cand;
            best_bary = b2;
          }
        }
      }
    }
  }
  return PointLocation{best, best_bary};
}

// Piecewise-constant P1 gradient at a point (of the containing triangle).
inline Point gradient_at(const Mesh& mesh, const PsiField& psi, Point p) {
  auto loc = locate_point(mesh, p);
  if (!loc)
    throw DataError("point (" + std::to_string(p.r) + ", " + std::to_string(p.z) +
                    ") is outside the mesh");
  return mesh.triangle_gradient(psi, loc->triangle);
}

}  // namespace eqrec
