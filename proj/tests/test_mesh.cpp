#include <catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "eqrec/mesh.hpp"
#include "support/meshgen.hpp"

using namespace eqrec;
using Catch::Approx;

namespace {

std::string single_triangle_text() {
  return "nodes 3 triangles 1 boundary 3 limiter 0\n"
         "1 0\n"
         "2 0\n"
         "1.5 1\n"
         "0 1 2\n"
         "0\n"
         "1\n"
         "2\n";
}

}  // namespace

TEST_CASE("load_mesh accepts the smallest valid mesh", "[mesh]") {
  std::istringstream in(single_triangle_text());
  Mesh m = load_mesh(in);
  CHECK(m.node_count() == 3);
  CHECK(m.triangle_count() == 1);
  CHECK(m.tri_area[0] == Approx(0.5));
  CHECK(m.boundary_nodes.size() == 3);
}

TEST_CASE("load_mesh rejects nodes at r <= 0", "[mesh]") {
  std::string text =
      "nodes 3 triangles 1 boundary 3 limiter 0\n"
      "0 0\n"
      "2 0\n"
      "1.5 1\n"
      "0 1 2\n0\n1\n2\n";
  std::istringstream in(text);
  CHECK_THROWS_WITH(load_mesh(in), Catch::Matchers::ContainsSubstring("r <= 0"));
}

TEST_CASE("load_mesh names the triangle with non-positive area", "[mesh]") {
  std::string text =
      "nodes 3 triangles 1 boundary 3 limiter 0\n"
      "1 0\n"
      "2 0\n"
      "1.5 1\n"
      "0 2 1\n0\n1\n2\n";  // clockwise
  std::istringstream in(text);
  CHECK_THROWS_WITH(load_mesh(in),
                    Catch::Matchers::ContainsSubstring("triangle 0") &&
                        Catch::Matchers::ContainsSubstring("non-positive area"));
}

TEST_CASE("load_mesh reports parse errors with line numbers", "[mesh]") {
  std::string text =
      "nodes 3 triangles 1 boundary 3 limiter 0\n"
      "1 0\n"
      "definitely-not-a-number\n";
  std::istringstream in(text);
  try {
    load_mesh(in);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("the bundled reconstruction mesh has 412 nodes and 762 elements", "[mesh]") {
  Mesh m = load_mesh_file(std::string(EQREC_DATA_DIR) + "/ts412.mesh");
  CHECK(m.node_count() == 412);
  CHECK(m.triangle_count() == 762);
  CHECK(m.boundary_nodes.size() == 60);
  CHECK(m.limiter_nodes.size() == 60);
}

TEST_CASE("mesh text round-trips through save and load", "[mesh]") {
  Mesh m = testing::make_uniform_disk({2.0, 0.0}, 0.5, 3, 6);
  std::ostringstream out;
  save_mesh(m, out);
  std::istringstream in(out.str());
  Mesh m2 = load_mesh(in);
  REQUIRE(m2.node_count() == m.node_count());
  REQUIRE(m2.triangle_count() == m.triangle_count());
  for (int i = 0; i < m.node_count(); ++i) {
    CHECK(m2.nodes[i].r == m.nodes[i].r);
    CHECK(m2.nodes[i].z == m.nodes[i].z);
  }
}

TEST_CASE("boundary loop validation catches broken loops", "[mesh]") {
  // two triangles sharing an edge, boundary listed out of order
  std::vector<Point> nodes{{1, 0}, {2, 0}, {2, 1}, {1, 1}};
  std::vector<std::array<int, 3>> tris{{0, 1, 2}, {0, 2, 3}};
  CHECK_THROWS_AS(make_mesh(nodes, tris, {0, 2, 1, 3}), DataError);
  CHECK_NOTHROW(make_mesh(nodes, tris, {0, 1, 2, 3}));
}

TEST_CASE("gradient_at reproduces linear fields exactly", "[mesh]") {
  Mesh m = testing::make_rect_mesh(5, 5, 1.0, 2.0, -0.5, 0.5);
  PsiField psi;
  psi.values.resize(m.node_count());
  const double gr = 0.7, gz = -1.3;
  for (int i = 0; i < m.node_count(); ++i)
    psi.values[i] = 2.0 + gr * m.nodes[i].r + gz * m.nodes[i].z;

  for (Point p : {Point{1.2, 0.1}, Point{1.77, -0.31}, Point{1.5, 0.0}}) {
    Point g = gradient_at(m, psi, p);
    CHECK(g.r == Approx(gr).epsilon(1e-12));
    CHECK(g.z == Approx(gz).epsilon(1e-12));
  }
}

TEST_CASE("gradient_at of a constant field is zero", "[mesh]") {
  Mesh m = testing::make_uniform_disk({2.0, 0.0}, 0.4, 3, 6);
  PsiField psi;
  psi.values = Eigen::VectorXd::Constant(m.node_count(), 3.25);
  Point g = gradient_at(m, psi, {2.05, 0.03});
  CHECK(g.r == 0.0);
  CHECK(g.z == 0.0);
}

TEST_CASE("gradient_at matches the per-triangle affine oracle", "[mesh]") {
  Mesh m = testing::make_rect_mesh(4, 4, 1.0, 2.0, 0.0, 1.0);
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  PsiField psi;
  psi.values.resize(m.node_count());
  for (int i = 0; i < m.node_count(); ++i) psi.values[i] = dist(rng);

  for (int t : {0, 7, 13, 21}) {
    // strictly interior point of triangle t
    Point p = m.point_at(t, {0.4, 0.35, 0.25});
    // oracle: solve the 3x3 affine system for the plane through the vertices
    const auto& tri = m.triangles[t];
    Eigen::Matrix3d A;
    Eigen::Vector3d b;
    for (int k = 0; k < 3; ++k) {
      A(k, 0) = 1.0;
      A(k, 1) = m.nodes[tri[k]].r;
      A(k, 2) = m.nodes[tri[k]].z;
      b(k) = psi.values[tri[k]];
    }
    Eigen::Vector3d coef = A.fullPivLu().solve(b);
    Point g = gradient_at(m, psi, p);
    CHECK(g.r == Approx(coef[1]).margin(1e-12));
    CHECK(g.z == Approx(coef[2]).margin(1e-12));
  }
}

TEST_CASE("points outside the mesh are rejected", "[mesh]") {
  Mesh m = testing::make_rect_mesh(3, 3, 1.0, 2.0, 0.0, 1.0);
  PsiField psi;
  psi.values = Eigen::VectorXd::Zero(m.node_count());
  CHECK_THROWS_AS(gradient_at(m, psi, {5.0, 5.0}), DataError);
}

TEST_CASE("point location ties resolve to the lowest containing triangle", "[mesh]") {
  Mesh m = testing::make_rect_mesh(3, 3, 1.0, 2.0, 0.0, 1.0);
  // midpoint of the diagonal shared by triangles 0 and 1
  Point a = m.nodes[m.triangles[0][0]];
  Point c = m.nodes[m.triangles[0][2]];
  Point p = 0.5 * (a + c);
  auto loc = locate_point(m, p, /*hint=*/1);
  REQUIRE(loc.has_value());
  CHECK(loc->triangle == 0);
  // walks from distant hints agree
  auto loc2 = locate_point(m, p, /*hint=*/m.triangle_count() - 1);
  REQUIRE(loc2.has_value());
  CHECK(loc2->triangle == loc->triangle);
}

TEST_CASE("disk meshes satisfy all structural invariants", "[mesh]") {
  Mesh m = testing::make_bundled_mesh();
  CHECK(m.node_count() == 412);
  CHECK(m.triangle_count() == 762);
  double total = 0.0;
  for (double a : m.tri_area) {
    CHECK(a > 0.0);
    total += a;
  }
  // close to the area of the 0.8-radius disk
  CHECK(total == Approx(M_PI * 0.8 * 0.8).epsilon(0.02));
}
