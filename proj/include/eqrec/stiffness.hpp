#pragma once

#include <map>
#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "eqrec/errors.hpp"
#include "eqrec/mesh.hpp"

namespace eqrec {

using SparseMatrix = Eigen::SparseMatrix<double>;

// Stiffness operator of the weak Delta* form, int (1/(mu0 r)) grad u . grad v.
// K_raw is the pure-Neumann assembly (symmetric, annihilates constants);
// K_mod has boundary rows replaced by unit diagonal rows and is factorized
// once by a sparse LU that is reused for every subsequent solve. The row
// replacement breaks symmetry, hence a general LU rather than a Cholesky.
class StiffnessSystem {
public:
  SparseMatrix K_raw;
  SparseMatrix K_mod;
  std::vector<int> boundary_rows;  // = mesh.boundary_nodes at assembly time

  bool factorized() const { return lu_ != nullptr; }
  int factorization_count() const { return factorization_count_; }

  const Eigen::SparseLU<SparseMatrix>& lu() const {
    if (!lu_) throw NumericalError("stiffness system is not factorized");
    return *lu_;
  }

  // Solve K_mod^T x = rhs with the stored factorization. Eigen's transpose
  // view is a non-const method for API reasons only; the solve is read-only,
  // so this stays safe for concurrent use.
  Eigen::VectorXd solve_transposed(const Eigen::VectorXd& rhs) const {
    if (!lu_) throw NumericalError("stiffness system is not factorized");
    return const_cast<Eigen::SparseLU<SparseMatrix>&>(*lu_).transpose().solve(rhs);
  }

  void factorize() {
    lu_ = std::make_unique<Eigen::SparseLU<SparseMatrix>>();
    lu_->compute(K_mod);
    ++factorization_count_;
    if (lu_->info() != Eigen::Success) {
      lu_.reset();
      throw NumericalError("factorization of the modified stiffness matrix failed "
                           "(degenerate mesh?)");
    }
  }

private:
  std::unique_ptr<Eigen::SparseLU<SparseMatrix>> lu_;
  int factorization_count_ = 0;
};

// Neumann assembly of K_raw. The hat gradients are constant per triangle, so
// only the 1/(mu0 r) weight is quadratured (canonical 3-point rule).
// Entries (i,j) and (j,i) accumulate the same contributions in the same
// order, which makes K_raw symmetric to the bit.
inline StiffnessSystem assemble_stiffness(const Mesh& mesh) {
  const int n = mesh.node_count();
  std::map<std::pair<int, int>, double> acc;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    auto qps = tri_quadrature(mesh, t);
    double wsum = 0.0;
    for (const auto& qp : qps) wsum += qp.weight / (kMu0 * qp.x.r);
    const auto& tri = mesh.triangles[t];
    for (int a = 0; a < 3; ++a) {
      for (int b = a; b < 3; ++b) {
        double e = wsum * dot(mesh.tri_grad[t][a], mesh.tri_grad[t][b]);
        acc[{tri[a], tri[b]}] += e;
        if (a != b) acc[{tri[b], tri[a]}] += e;
      }
    }
  }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(acc.size());
  for (const auto& [ij, v] : acc) trips.emplace_back(ij.first, ij.second, v);

  StiffnessSystem sys;
  sys.K_raw.resize(n, n);
  sys.K_raw.setFromTriplets(trips.begin(), trips.end());
  return sys;
}

// Dirichlet rows: 1 on the diagonal, 0 elsewhere; the boundary data moves to
// the right-hand side. Factorizes K_mod immediately; the factorization is
// kept for all later solves.
inline void apply_dirichlet(StiffnessSystem& sys, const Mesh& mesh) {
  const int n = mesh.node_count();
  sys.boundary_rows = mesh.boundary_nodes;
  std::vector<char> is_bnd(n, 0);
  for (int i : sys.boundary_rows) is_bnd[i] = 1;

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(sys.K_raw.nonZeros());
  for (int col = 0; col < sys.K_raw.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(sys.K_raw, col); it; ++it) {
      if (is_bnd[it.row()]) continue;
      trips.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (int i : sys.boundary_rows) trips.emplace_back(i, i, 1.0);
  sys.K_mod.resize(n, n);
  sys.K_mod.setFromTriplets(trips.begin(), trips.end());
  sys.factorize();
}

inline StiffnessSystem build_stiffness(const Mesh& mesh) {
  StiffnessSystem sys = assemble_stiffness(mesh);
  apply_dirichlet(sys, mesh);
  return sys;
}

// Expands per-boundary-node values into the full-length Dirichlet vector H.
inline Eigen::VectorXd dirichlet_vector(const StiffnessSystem& sys, int n,
                                        const Eigen::VectorXd& h) {
  if (h.size() != static_cast<long>(sys.boundary_rows.size()))
    throw DataError("boundary value vector has wrong length");
  Eigen::VectorXd H = Eigen::VectorXd::Zero(n);
  for (size_t k = 0; k < sys.boundary_rows.size(); ++k)
    H[sys.boundary_rows[k]] = h[k];
  return H;
}

// Solves K_mod Psi = y + H. Boundary entries of y are ignored (those rows
// carry the Dirichlet data), h holds one value per boundary node in loop
// order. The result is checked against the residual contract.
inline PsiField solve_direct(const StiffnessSystem& sys, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& h) {
  const int n = sys.K_mod.rows();
  if (y.size() != n) throw DataError("source vector has wrong length");
  Eigen::VectorXd rhs = y;
  Eigen::VectorXd H = dirichlet_vector(sys, n, h);
  for (int i : sys.boundary_rows) rhs[i] = 0.0;
  rhs += H;

  PsiField psi;
  psi.values = sys.lu().solve(rhs);
  // normwise backward error; the absolute scale of K (1/mu0) makes a plain
  // residual bound meaningless when the data are small
  double res = (sys.K_mod * psi.values - rhs).norm();
  double scale = rhs.norm() + sys.K_mod.norm() * psi.values.norm();
  if (scale > 0 && res > 1e-10 * scale)
    throw NumericalError("direct solve backward error " + std::to_string(res / scale) +
                         " exceeds tolerance");
  return psi;
}

}  // namespace eqrec
