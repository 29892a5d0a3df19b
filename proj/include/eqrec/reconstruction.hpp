#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "eqrec/basis.hpp"
#include "eqrec/errors.hpp"
#include "eqrec/flux.hpp"
#include "eqrec/measurements.hpp"
#include "eqrec/mesh.hpp"
#include "eqrec/observation.hpp"
#include "eqrec/profiles.hpp"
#include "eqrec/stiffness.hpp"

namespace eqrec {

enum class RunMode { FullConvergence, RealTime };

struct ReconstructionConfig {
  double K1 = 1.0;   // polarimetry misfit weight
  double K2 = 1.0;   // interferometry misfit weight
  double eps1 = 5e-5;
  double eps2 = 5e-5;
  double eps3 = 5e-5;
  double tol = 1e-6;
  int max_iter = 30;
  RunMode mode = RunMode::FullConvergence;
  int realtime_iters = 2;  // hard cap in RealTime mode, 1 or 2
  double R0 = 2.4;         // major radius (m)
  double f_b = 9.24;       // vacuum poloidal current constant B0 R0 (T m)
  BasisFamily family = BasisFamily::uniform(BasisFamily::Kind::CubicBSpline, 7);

  void validate() const {
    if (!(tol > 0.0)) throw DataError("config: tol must be positive");
    if (eps1 < 0 || eps2 < 0 || eps3 < 0)
      throw DataError("config: regularization parameters must be >= 0");
    if (max_iter < 1) throw DataError("config: max_iter must be >= 1");
    if (realtime_iters < 1 || realtime_iters > 2)
      throw DataError("config: realtime_iters must be 1 or 2");
    if (!(R0 > 0.0)) throw DataError("config: R0 must be positive");
    family.validate();
  }
};

inline ReconstructionConfig config_from_json(const nlohmann::json& j) {
  ReconstructionConfig c;
  c.K1 = j.value("K1", c.K1);
  c.K2 = j.value("K2", c.K2);
  c.eps1 = j.value("eps1", c.eps1);
  c.eps2 = j.value("eps2", c.eps2);
  c.eps3 = j.value("eps3", c.eps3);
  c.tol = j.value("tol", c.tol);
  c.max_iter = j.value("max_iter", c.max_iter);
  c.realtime_iters = j.value("realtime_iters", c.realtime_iters);
  c.R0 = j.value("R0", c.R0);
  c.f_b = j.value("f_b", c.f_b);
  if (j.contains("mode")) {
    std::string mode = j["mode"].get<std::string>();
    if (mode == "full")
      c.mode = RunMode::FullConvergence;
    else if (mode == "realtime")
      c.mode = RunMode::RealTime;
    else
      throw ParseError("config: mode must be 'full' or 'realtime'");
  }
  if (j.contains("basis")) {
    const auto& b = j["basis"];
    std::string kind = b.value("kind", std::string("cubic_bspline"));
    int m = b.value("m", 7);
    if (kind == "cubic_bspline")
      c.family = BasisFamily::uniform(BasisFamily::Kind::CubicBSpline, m);
    else if (kind == "piecewise_linear")
      c.family = BasisFamily::uniform(BasisFamily::Kind::PiecewiseLinear, m);
    else
      throw ParseError("config: basis.kind must be 'cubic_bspline' or 'piecewise_linear'");
  }
  c.validate();
  return c;
}

inline ReconstructionConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config file " + path + ": " + e.what());
  }
  return config_from_json(j);
}

// Iterate of the fixed-point algorithm.
struct EquilibriumState {
  PsiField psi;
  PlasmaDomain domain;
  ProfileCoefficients coeffs;
  double lambda = 0.0;
  int iteration = 0;
};

enum class RunStatus { Converged, MaxIterReached };

struct ConvergenceHistory {
  std::vector<double> psi_residual;
  std::vector<double> a_residual;
  std::vector<double> b_residual;
  std::vector<double> iter_seconds;
  RunStatus status = RunStatus::MaxIterReached;
  int iterations() const { return static_cast<int>(psi_residual.size()); }
};

// Current-source matrix Y (n x 2m) of the discrete right-hand side
// y = Y(psibar) u: column j <= m carries lambda (r/R0) Phi_j, column j > m
// carries lambda (R0/r) Phi_{j-m}, integrated over the plasma-marked
// quadrature points against the P1 hats. Dirichlet rows are zeroed.
inline Eigen::MatrixXd current_source_matrix(const Mesh& mesh,
                                             const PlasmaDomain& dom,
                                             const BasisFamily& family,
                                             double lambda, double R0) {
  const int m = family.m;
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(mesh.node_count(), 2 * m);
  if (dom.empty()) throw NumericalError("current source: empty plasma domain");
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    if (!dom.tri_in_component[t]) continue;
    auto qps = tri_quadrature(mesh, t);
    const auto& tri = mesh.triangles[t];
    for (int q = 0; q < 3; ++q) {
      if (!dom.inside(t, q)) continue;
      Eigen::VectorXd phi = family.eval(dom.quad_psibar[t][q]);
      double wa = lambda * qps[q].weight * qps[q].x.r / R0;
      double wb = lambda * qps[q].weight * R0 / qps[q].x.r;
      for (int k = 0; k < 3; ++k) {
        double v = qps[q].shape[k];
        Y.row(tri[k]).head(m) += (wa * v) * phi.transpose();
        Y.row(tri[k]).tail(m) += (wb * v) * phi.transpose();
      }
    }
  }
  for (int i : mesh.boundary_nodes) Y.row(i).setZero();
  return Y;
}

// Normalization factor lambda so that the plasma integral of the current
// density reproduces I_p, with the same quadrature as the Y assembly.
inline double normalize_lambda(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                               const BasisFamily& family, const PlasmaDomain& dom,
                               const Mesh& mesh, double I_p, double R0) {
  double integral = 0.0, abs_integral = 0.0;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    if (!dom.tri_in_component[t]) continue;
    auto qps = tri_quadrature(mesh, t);
    for (int q = 0; q < 3; ++q) {
      if (!dom.inside(t, q)) continue;
      Eigen::VectorXd phi = family.eval(dom.quad_psibar[t][q]);
      double bracket =
          (qps[q].x.r / R0) * phi.dot(a) + (R0 / qps[q].x.r) * phi.dot(b);
      integral += qps[q].weight * bracket;
      abs_integral += qps[q].weight * std::abs(bracket);
    }
  }
  if (!(std::abs(integral) > 1e-12 * abs_integral) || abs_integral == 0.0)
    throw NumericalError("current normalization integral is degenerate "
                         "(sign-cancelling or zero source)");
  return I_p / integral;
}

// Total plasma current for given coefficients and lambda (the Eq-9 integral
// scaled back); used for the conservation invariant.
inline double plasma_current_integral(const Eigen::VectorXd& a,
                                      const Eigen::VectorXd& b,
                                      const BasisFamily& family,
                                      const PlasmaDomain& dom, const Mesh& mesh,
                                      double lambda, double R0) {
  double integral = 0.0;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    if (!dom.tri_in_component[t]) continue;
    auto qps = tri_quadrature(mesh, t);
    for (int q = 0; q < 3; ++q) {
      if (!dom.inside(t, q)) continue;
      Eigen::VectorXd phi = family.eval(dom.quad_psibar[t][q]);
      integral += qps[q].weight *
                  ((qps[q].x.r / R0) * phi.dot(a) + (R0 / qps[q].x.r) * phi.dot(b));
    }
  }
  return lambda * integral;
}

// Density identification from interferometry: solves
// (M^T D M + eps3 Lambda1) c = M^T D beta with D = diag(K2 / sigma_beta^2).
inline Eigen::VectorXd estimate_density(const Eigen::MatrixXd& M,
                                        const Eigen::VectorXd& beta,
                                        const Eigen::VectorXd& sigma_beta,
                                        double K2, double eps3,
                                        const Eigen::MatrixXd& lambda1) {
  if (M.rows() != beta.size() || M.rows() != sigma_beta.size())
    throw DataError("density estimation: shape mismatch");
  if (M.rows() < 1) throw DataError("density estimation needs at least one chord");
  Eigen::VectorXd d(M.rows());
  for (long i = 0; i < M.rows(); ++i) {
    if (!(sigma_beta[i] > 0.0)) throw DataError("density estimation: sigma_beta <= 0");
    d[i] = K2 / (sigma_beta[i] * sigma_beta[i]);
  }
  Eigen::MatrixXd G = M.transpose() * d.asDiagonal() * M + eps3 * lambda1;
  Eigen::VectorXd rhs = M.transpose() * (d.asDiagonal() * beta);
  auto ldlt = G.ldlt();
  Eigen::VectorXd c = ldlt.solve(rhs);
  double res = (G * c - rhs).norm();
  if (!(ldlt.rcond() > 1e-14) ||
      !(res <= 1e-8 * (rhs.norm() + G.norm() * c.norm()) + 1e-300))
    throw NumericalError("density normal equation is singular "
                         "(degenerate chords with eps3 = 0?)");
  return c;
}

// Regularized normal equation for u = (a, b):
//   E = C K^-1 Y,  F = k - C K^-1 H,
//   (Et^T Et + Lreg) u = Et^T Ft with Et = D^(1/2) E, Ft = D^(1/2) F,
//   Lreg = diag(eps1 Lambda1, eps2 Lambda1).
// C K^-1 is formed as W^T with W = K^-T C^T (one transpose solve per
// measurement row; the factorization is reused).
inline Eigen::VectorXd solve_normal_equation(const ObservationOperator& obs,
                                             const StiffnessSystem& sys,
                                             const Eigen::MatrixXd& Y,
                                             const Eigen::VectorXd& H,
                                             const Eigen::MatrixXd& Lreg) {
  const long l = obs.C.rows();
  const long n = obs.C.cols();
  if (Y.rows() != n || H.size() != n)
    throw DataError("normal equation: shape mismatch");

  Eigen::MatrixXd W(n, l);
  for (long j = 0; j < l; ++j)
    W.col(j) = sys.solve_transposed(obs.C.row(j).transpose());

  Eigen::MatrixXd E = W.transpose() * Y;       // l x 2m
  Eigen::VectorXd F = obs.k - W.transpose() * H;
  Eigen::VectorXd sqrt_d = obs.d.cwiseSqrt();
  Eigen::MatrixXd Et = sqrt_d.asDiagonal() * E;
  Eigen::VectorXd Ft = sqrt_d.asDiagonal() * F;

  Eigen::MatrixXd G = Et.transpose() * Et + Lreg;
  Eigen::VectorXd rhs = Et.transpose() * Ft;
  Eigen::VectorXd u = G.ldlt().solve(rhs);
  double res = (G * u - rhs).norm();
  if (!(res <= 1e-10 * rhs.norm() + 1e-300)) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    throw NumericalError("normal equation solve failed; smallest eigenvalue " +
                         std::to_string(es.eigenvalues().minCoeff()));
  }
  return u;
}

namespace detail {

// Function-space relative L2 residual of a profile update, sampled on a
// uniform grid over [0,1].
inline double profile_residual(const Eigen::VectorXd& cur, const Eigen::VectorXd& prev,
                               const BasisFamily& family) {
  const int ns = 101;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < ns; ++i) {
    double x = double(i) / double(ns - 1);
    Eigen::VectorXd phi = family.eval(x);
    double vc = phi.dot(cur), vp = phi.dot(prev);
    num += (vc - vp) * (vc - vp);
    den += vp * vp;
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace detail

// One fixed-point iteration: density estimate, observation and source
// assembly at the frozen psibar, normal-equation solve, lambda
// renormalization, linear direct solve, and flux-geometry update.
inline EquilibriumState reconstruct_step(const EquilibriumState& state,
                                         const MeasurementSet& ms,
                                         const ReconstructionConfig& cfg,
                                         const StiffnessSystem& sys,
                                         const Mesh& mesh,
                                         const Eigen::VectorXd& h,
                                         const Eigen::MatrixXd& lambda1) {
  if (state.domain.empty())
    throw NumericalError("iteration " + std::to_string(state.iteration) +
                         ": empty plasma domain");
  try {
    // density first, from the interferometric chords, then frozen for C
    Eigen::VectorXd ne = state.coeffs.c;
    std::vector<Chord> interf;
    for (const auto& c : ms.chords)
      if (c.interferometry_active) interf.push_back(c);
    if (!interf.empty()) {
      Eigen::MatrixXd M =
          interferometry_matrix(mesh, interf, state.psi, state.domain, cfg.family);
      Eigen::VectorXd beta(interf.size()), sb(interf.size());
      for (size_t i = 0; i < interf.size(); ++i) {
        beta[i] = interf[i].beta;
        sb[i] = interf[i].sigma_beta;
      }
      ne = estimate_density(M, beta, sb, cfg.K2, cfg.eps3, lambda1);
    } else if (ne.size() != cfg.family.m) {
      ne = Eigen::VectorXd::Zero(cfg.family.m);
    }

    ObservationOperator obs = assemble_observations(mesh, ms, ne, cfg.family,
                                                    state.psi, state.domain, cfg.K1);
    Eigen::MatrixXd Y_unit =
        current_source_matrix(mesh, state.domain, cfg.family, 1.0, cfg.R0);
    Eigen::VectorXd H = dirichlet_vector(sys, mesh.node_count(), h);
    Eigen::MatrixXd Lreg = stacked_regularizer(lambda1, cfg.eps1, cfg.eps2);

    Eigen::VectorXd u =
        solve_normal_equation(obs, sys, state.lambda * Y_unit, H, Lreg);

    EquilibriumState next;
    next.coeffs = ProfileCoefficients::from_stacked(u, ne);
    next.lambda = normalize_lambda(next.coeffs.a, next.coeffs.b, cfg.family,
                                   state.domain, mesh, ms.plasma_current, cfg.R0);
    next.psi = solve_direct(sys, next.lambda * (Y_unit * u), h);
    if (!next.psi.values.allFinite())
      throw NumericalError("psi contains non-finite values");
    next.domain = analyze_flux(mesh, next.psi);
    next.iteration = state.iteration + 1;
    return next;
  } catch (const NumericalError& e) {
    throw NumericalError("iteration " + std::to_string(state.iteration + 1) + ": " +
                         e.what());
  }
}

// Starting state when no previous time step is available: psi from a uniform
// current disk (total current I_p) centered at the domain centroid, with
// affine 1 - x profiles.
inline EquilibriumState cold_start(const Mesh& mesh, const StiffnessSystem& sys,
                                   const MeasurementSet& ms,
                                   const ReconstructionConfig& cfg,
                                   const Eigen::VectorXd& h) {
  Point centroid{0, 0};
  for (const auto& p : mesh.nodes) centroid = centroid + p;
  centroid = (1.0 / mesh.node_count()) * centroid;
  double inradius = std::numeric_limits<double>::infinity();
  for (int i : mesh.boundary_nodes)
    inradius = std::min(inradius, norm(mesh.nodes[i] - centroid));
  double disk_r = inradius / 3.0;

  double disk_area = 3.14159265358979323846 * disk_r * disk_r;
  double j0 = ms.plasma_current / disk_area;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(mesh.node_count());
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    auto qps = tri_quadrature(mesh, t);
    const auto& tri = mesh.triangles[t];
    for (int q = 0; q < 3; ++q) {
      if (norm(qps[q].x - centroid) > disk_r) continue;
      for (int k = 0; k < 3; ++k)
        y[tri[k]] += qps[q].weight * j0 * qps[q].shape[k];
    }
  }

  EquilibriumState state;
  state.psi = solve_direct(sys, y, h);
  state.domain = analyze_flux(mesh, state.psi);

  Eigen::VectorXd xi = cfg.family.affine_abscissae();
  const int m = cfg.family.m;
  state.coeffs.a.resize(m);
  state.coeffs.b.resize(m);
  for (int i = 0; i < m; ++i) state.coeffs.a[i] = state.coeffs.b[i] = 1.0 - xi[i];
  state.coeffs.c = Eigen::VectorXd::Zero(m);
  state.lambda = normalize_lambda(state.coeffs.a, state.coeffs.b, cfg.family,
                                  state.domain, mesh, ms.plasma_current, cfg.R0);
  state.iteration = 0;
  return state;
}

struct ReconstructionResult {
  EquilibriumState state;
  ConvergenceHistory history;
  DerivedProfiles profiles;
};

// Outer fixed-point loop. Stops when the relative psi residual drops below
// tol, or at the iteration cap (RealTime mode caps at 1-2 iterations
// regardless of convergence). Only the psi residual gates convergence; the
// A and B residuals are recorded for reporting.
inline ReconstructionResult reconstruct(const MeasurementSet& ms,
                                        std::optional<EquilibriumState> initial,
                                        const ReconstructionConfig& cfg,
                                        const Mesh& mesh,
                                        const StiffnessSystem& sys) {
  cfg.validate();
  MeasurementSet data = ms;
  data.validate();
  data.normalize_sign();

  Eigen::VectorXd h = interpolate_dirichlet(data.flux_loops, mesh);
  Eigen::MatrixXd lambda1 = regularization_matrix(cfg.family);

  EquilibriumState state =
      initial ? std::move(*initial) : cold_start(mesh, sys, data, cfg, h);
  state.iteration = 0;

  ConvergenceHistory hist;
  int cap = (cfg.mode == RunMode::RealTime) ? cfg.realtime_iters : cfg.max_iter;
  for (int it = 0; it < cap; ++it) {
    auto t0 = std::chrono::steady_clock::now();
    EquilibriumState next = reconstruct_step(state, data, cfg, sys, mesh, h, lambda1);
    auto t1 = std::chrono::steady_clock::now();

    double denom = state.psi.values.norm();
    double rpsi = denom > 0 ? (next.psi.values - state.psi.values).norm() / denom
                            : (next.psi.values - state.psi.values).norm();
    hist.psi_residual.push_back(rpsi);
    hist.a_residual.push_back(
        detail::profile_residual(next.coeffs.a, state.coeffs.a, cfg.family));
    hist.b_residual.push_back(
        detail::profile_residual(next.coeffs.b, state.coeffs.b, cfg.family));
    hist.iter_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());

    state = std::move(next);
    if (cfg.mode == RunMode::FullConvergence && rpsi <= cfg.tol) {
      hist.status = RunStatus::Converged;
      break;
    }
  }
  if (!hist.psi_residual.empty() && hist.psi_residual.back() <= cfg.tol)
    hist.status = RunStatus::Converged;

  ReconstructionResult res;
  res.profiles = derived_profiles(state.coeffs, cfg.family, state.lambda, cfg.R0,
                                  cfg.f_b, 101, state.domain.psi_axis,
                                  state.domain.psi_b);
  // q on the interior levels where a contour exists; levels without one
  // (possible right at the axis) and the endpoints are filled by linear
  // extrapolation from the nearest computed pair
  {
    const long ng = res.profiles.grid.size();
    res.profiles.q = Eigen::VectorXd::Zero(ng);
    std::vector<long> have;
    for (long i = 1; i + 1 < ng; ++i) {
      try {
        Eigen::VectorXd qi = safety_factor(mesh, state.psi, state.domain,
                                           res.profiles.f.segment(i, 1),
                                           {res.profiles.grid[i]});
        res.profiles.q[i] = qi[0];
        have.push_back(i);
      } catch (const NumericalError&) {
        // degenerate contour; filled below
      }
    }
    if (have.size() >= 2) {
      for (long i = 0; i < ng; ++i) {
        if (std::binary_search(have.begin(), have.end(), i)) continue;
        auto up = std::lower_bound(have.begin(), have.end(), i);
        long i0, i1;
        if (up == have.begin()) {
          i0 = have[0];
          i1 = have[1];
        } else if (up == have.end()) {
          i0 = have[have.size() - 2];
          i1 = have.back();
        } else {
          i1 = *up;
          i0 = *(up - 1);
        }
        double t = double(i - i0) / double(i1 - i0);
        res.profiles.q[i] = (1.0 - t) * res.profiles.q[i0] + t * res.profiles.q[i1];
      }
    }
  }
  res.state = std::move(state);
  res.history = std::move(hist);
  return res;
}

}  // namespace eqrec
