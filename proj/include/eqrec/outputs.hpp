#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "eqrec/errors.hpp"
#include "eqrec/flux.hpp"
#include "eqrec/measurements.hpp"
#include "eqrec/observation.hpp"
#include "eqrec/profiles.hpp"
#include "eqrec/reconstruction.hpp"

namespace eqrec {

// Locale-independent fixed formatting, 17 significant digits.
inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Per-family relative misfit between predicted and measured readings of the
// final state, plus twin-mode recovery errors when a truth is known.
struct RunReport {
  ConvergenceHistory history;
  double misfit_probe = 0.0;         // relative RMS
  double misfit_polarimetry = 0.0;   // mean per-chord relative error
  double misfit_interferometry = 0.0;
  std::vector<double> chord_interferometry_errors;
  std::vector<double> chord_polarimetry_errors;
  double current_error = 0.0;        // |int j - I_p| / |I_p|
  bool sign_flipped = false;
  // twin mode only
  bool has_truth = false;
  double err_A = 0.0, err_B = 0.0;   // relative L2 over [0,1]
  double err_psi = 0.0;
};

// Fills the misfit block of a report by re-evaluating the observation
// operators on the reconstructed state.
inline void evaluate_misfits(RunReport& rep, const Mesh& mesh,
                             const MeasurementSet& ms,
                             const EquilibriumState& state,
                             const ReconstructionConfig& cfg) {
  if (!ms.probes.empty()) {
    Eigen::MatrixXd rows = probe_rows(mesh, ms.probes);
    Eigen::VectorXd pred = rows * state.psi.values;
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < ms.probes.size(); ++i) {
      num += (pred[i] - ms.probes[i].value) * (pred[i] - ms.probes[i].value);
      den += ms.probes[i].value * ms.probes[i].value;
    }
    rep.misfit_probe = den > 0 ? std::sqrt(num / den) : std::sqrt(num);
  }
  std::vector<Chord> interf, polar;
  for (const auto& c : ms.chords) {
    if (c.interferometry_active) interf.push_back(c);
    if (c.polarimetry_active) polar.push_back(c);
  }
  if (!interf.empty()) {
    Eigen::MatrixXd M =
        interferometry_matrix(mesh, interf, state.psi, state.domain, cfg.family);
    Eigen::VectorXd pred = M * state.coeffs.c;
    double acc = 0.0;
    for (size_t i = 0; i < interf.size(); ++i) {
      double rel = std::abs(pred[i] - interf[i].beta) /
                   std::max(std::abs(interf[i].beta), 1e-300);
      rep.chord_interferometry_errors.push_back(rel);
      acc += rel;
    }
    rep.misfit_interferometry = acc / interf.size();
  }
  if (!polar.empty()) {
    Eigen::MatrixXd rows = polarimetry_rows(mesh, polar, state.coeffs.c, cfg.family,
                                            state.psi, state.domain);
    Eigen::VectorXd pred = rows * state.psi.values;
    double acc = 0.0;
    for (size_t i = 0; i < polar.size(); ++i) {
      double rel = std::abs(pred[i] - polar[i].alpha) /
                   std::max(std::abs(polar[i].alpha), 1e-300);
      rep.chord_polarimetry_errors.push_back(rel);
      acc += rel;
    }
    rep.misfit_polarimetry = acc / polar.size();
  }
  double itot = plasma_current_integral(state.coeffs.a, state.coeffs.b, cfg.family,
                                        state.domain, mesh, state.lambda, cfg.R0);
  rep.current_error = std::abs(itot - ms.plasma_current) / std::abs(ms.plasma_current);
  rep.sign_flipped = ms.sign_flipped;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write output file: " + p.string());
  return out;
}

}  // namespace detail

// psi.txt: node index, r, z, psi, psibar (one row per node).
inline void write_psi(const std::filesystem::path& path, const Mesh& mesh,
                      const PsiField& psi, const PlasmaDomain& dom) {
  auto out = detail::open_out(path);
  out << "# node r z psi psibar\n";
  for (int i = 0; i < mesh.node_count(); ++i) {
    double pb = normalize_flux(psi.values[i], dom.psi_axis, dom.psi_b);
    out << i << " " << fmt(mesh.nodes[i].r) << " " << fmt(mesh.nodes[i].z) << " "
        << fmt(psi.values[i]) << " " << fmt(pb) << "\n";
  }
}

// profiles.txt: psibar A B n_e pprime ffprime p f q.
inline void write_profiles(const std::filesystem::path& path,
                           const DerivedProfiles& d) {
  auto out = detail::open_out(path);
  out << "# psibar A B n_e pprime ffprime p f q\n";
  for (long i = 0; i < d.grid.size(); ++i) {
    out << fmt(d.grid[i]) << " " << fmt(d.A[i]) << " " << fmt(d.B[i]) << " "
        << fmt(d.ne[i]) << " " << fmt(d.pprime[i]) << " " << fmt(d.ffprime[i])
        << " " << fmt(d.p[i]) << " " << fmt(d.f[i]) << " "
        << fmt(d.q.size() > i ? d.q[i] : 0.0) << "\n";
  }
}

// contours.txt: one block per level psibar in {0.1, ..., 1.0}.
inline void write_contours(const std::filesystem::path& path, const Mesh& mesh,
                           const PsiField& psi, const PlasmaDomain& dom) {
  auto out = detail::open_out(path);
  out << "# contour blocks: 'level x N' header, then N 'r z' vertices\n";
  for (int k = 1; k <= 10; ++k) {
    double level = k / 10.0;
    std::vector<Point> loop;
    try {
      loop = flux_contour(mesh, psi, dom, level);
    } catch (const NumericalError&) {
      continue;  // contour may degenerate at the innermost level on coarse meshes
    }
    out << "level " << fmt(level) << " " << loop.size() << "\n";
    for (const auto& p : loop) out << fmt(p.r) << " " << fmt(p.z) << "\n";
  }
}

// report.txt: status, per-iteration residuals, misfits; wall-clock timings
// go into a clearly separated trailing section (they are the only
// non-deterministic lines).
inline void write_report(const std::filesystem::path& path, const RunReport& rep) {
  auto out = detail::open_out(path);
  out << "status "
      << (rep.history.status == RunStatus::Converged ? "converged" : "max_iter_reached")
      << "\n";
  out << "iterations " << rep.history.iterations() << "\n";
  out << "sign_flipped " << (rep.sign_flipped ? 1 : 0) << "\n";
  out << "# iter psi_residual A_residual B_residual\n";
  for (int i = 0; i < rep.history.iterations(); ++i)
    out << (i + 1) << " " << fmt(rep.history.psi_residual[i]) << " "
        << fmt(rep.history.a_residual[i]) << " " << fmt(rep.history.b_residual[i])
        << "\n";
  out << "misfit_probe_rms " << fmt(rep.misfit_probe) << "\n";
  out << "misfit_interferometry_mean " << fmt(rep.misfit_interferometry) << "\n";
  out << "misfit_polarimetry_mean " << fmt(rep.misfit_polarimetry) << "\n";
  for (size_t i = 0; i < rep.chord_interferometry_errors.size(); ++i)
    out << "chord " << i << " interferometry_rel_err "
        << fmt(rep.chord_interferometry_errors[i]) << "\n";
  for (size_t i = 0; i < rep.chord_polarimetry_errors.size(); ++i)
    out << "chord " << i << " polarimetry_rel_err "
        << fmt(rep.chord_polarimetry_errors[i]) << "\n";
  out << "current_rel_err " << fmt(rep.current_error) << "\n";
  if (rep.has_truth) {
    out << "twin_err_A " << fmt(rep.err_A) << "\n";
    out << "twin_err_B " << fmt(rep.err_B) << "\n";
    out << "twin_err_psi " << fmt(rep.err_psi) << "\n";
  }
  out << "timing\n";
  for (int i = 0; i < rep.history.iterations(); ++i)
    out << "time " << (i + 1) << " " << fmt(rep.history.iter_seconds[i]) << "\n";
}

// Writes the full output set for a finished reconstruction.
inline void write_outputs(const std::filesystem::path& dir, const Mesh& mesh,
                          const EquilibriumState& state,
                          const DerivedProfiles& profiles, const RunReport& rep) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (!std::filesystem::is_directory(dir))
    throw DataError("output directory is not writable: " + dir.string());
  write_psi(dir / "psi.txt", mesh, state.psi, state.domain);
  write_profiles(dir / "profiles.txt", profiles);
  write_contours(dir / "contours.txt", mesh, state.psi, state.domain);
  write_report(dir / "report.txt", rep);
}

}  // namespace eqrec
