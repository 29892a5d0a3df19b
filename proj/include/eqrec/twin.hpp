#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "eqrec/errors.hpp"
#include "eqrec/measurements.hpp"
#include "eqrec/observation.hpp"
#include "eqrec/reconstruction.hpp"

namespace eqrec {

// Synthetic-experiment description: true profile coefficients, sensor
// layout, per-family relative noise levels and the RNG seed. A fixed seed
// gives a byte-identical synthetic dataset.
struct TwinSpec {
  Eigen::VectorXd a_true, b_true, c_true;
  double I_p = 1.5e6;
  double boundary_value = -0.1;  // constant Dirichlet flux on the wall

  std::vector<double> loop_positions;           // arclengths along the wall
  std::vector<std::pair<Point, Point>> probes;  // (position, unit normal)
  std::vector<std::vector<Point>> chords;

  double noise_probe = 0.0;  // relative sigma per family
  double noise_loop = 0.0;
  double noise_alpha = 0.0;
  double noise_beta = 0.0;
  std::uint64_t seed = 1;
  bool coarse_synthesis_quadrature = false;  // midpoint rule instead of 2-pt Gauss
};

inline nlohmann::json to_json(const TwinSpec& s) {
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  nlohmann::json j;
  j["version"] = 1;
  j["a_true"] = vec(s.a_true);
  j["b_true"] = vec(s.b_true);
  j["c_true"] = vec(s.c_true);
  j["I_p"] = s.I_p;
  j["boundary_value"] = s.boundary_value;
  j["loop_positions"] = s.loop_positions;
  j["probes"] = nlohmann::json::array();
  for (const auto& [pos, nrm] : s.probes)
    j["probes"].push_back({{"r", pos.r}, {"z", pos.z}, {"nr", nrm.r}, {"nz", nrm.z}});
  j["chords"] = nlohmann::json::array();
  for (const auto& ch : s.chords) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : ch) pts.push_back({p.r, p.z});
    j["chords"].push_back(pts);
  }
  j["noise"] = {{"probe", s.noise_probe},
                {"loop", s.noise_loop},
                {"alpha", s.noise_alpha},
                {"beta", s.noise_beta}};
  j["seed"] = s.seed;
  j["coarse_synthesis_quadrature"] = s.coarse_synthesis_quadrature;
  return j;
}

inline TwinSpec twin_spec_from_json(const nlohmann::json& j) {
  TwinSpec s;
  auto vec = [](const nlohmann::json& a) {
    Eigen::VectorXd v(a.size());
    for (size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
    return v;
  };
  s.a_true = vec(j.at("a_true"));
  s.b_true = vec(j.at("b_true"));
  s.c_true = vec(j.at("c_true"));
  s.I_p = j.at("I_p").get<double>();
  s.boundary_value = j.value("boundary_value", -0.1);
  for (const auto& v : j.value("loop_positions", nlohmann::json::array()))
    s.loop_positions.push_back(v.get<double>());
  for (const auto& p : j.value("probes", nlohmann::json::array()))
    s.probes.push_back({{p.at("r").get<double>(), p.at("z").get<double>()},
                        {p.at("nr").get<double>(), p.at("nz").get<double>()}});
  for (const auto& ch : j.value("chords", nlohmann::json::array())) {
    std::vector<Point> pts;
    for (const auto& p : ch) pts.push_back({p[0].get<double>(), p[1].get<double>()});
    s.chords.push_back(pts);
  }
  if (j.contains("noise")) {
    s.noise_probe = j["noise"].value("probe", 0.0);
    s.noise_loop = j["noise"].value("loop", 0.0);
    s.noise_alpha = j["noise"].value("alpha", 0.0);
    s.noise_beta = j["noise"].value("beta", 0.0);
  }
  s.seed = j.value("seed", std::uint64_t(1));
  s.coarse_synthesis_quadrature = j.value("coarse_synthesis_quadrature", false);
  return s;
}

inline TwinSpec load_twin_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open twin spec file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("twin spec " + path + ": " + e.what());
  }
  return twin_spec_from_json(j);
}

struct TwinTruth {
  PsiField psi;
  PlasmaDomain domain;
  double lambda = 0.0;
};

// Manufactured equilibrium: the direct problem iterated with the profile
// coefficients held fixed, lambda renormalized each pass, until the psi
// residual drops to 1e-10. Used as the known truth of twin experiments.
inline TwinTruth manufacture_equilibrium(const Mesh& mesh, const StiffnessSystem& sys,
                                         const TwinSpec& spec,
                                         const BasisFamily& family, double R0,
                                         const Eigen::VectorXd& h) {
  if (spec.a_true.lpNorm<Eigen::Infinity>() == 0.0 &&
      spec.b_true.lpNorm<Eigen::Infinity>() == 0.0)
    throw DataError("twin spec has A = B = 0: no plasma current, "
                    "lambda normalization is undefined");

  MeasurementSet seed_ms;  // only I_p is needed by the cold start
  seed_ms.plasma_current = spec.I_p;
  ReconstructionConfig cfg;
  cfg.R0 = R0;
  cfg.family = family;
  EquilibriumState state = cold_start(mesh, sys, seed_ms, cfg, h);

  Eigen::VectorXd u(2 * family.m);
  u << spec.a_true, spec.b_true;

  std::vector<double> trace;
  const int max_pass = 400;
  for (int pass = 0; pass < max_pass; ++pass) {
    double lambda = normalize_lambda(spec.a_true, spec.b_true, family, state.domain,
                                     mesh, spec.I_p, R0);
    Eigen::MatrixXd Y =
        current_source_matrix(mesh, state.domain, family, lambda, R0);
    PsiField next = solve_direct(sys, Y * u, h);
    double res = (next.values - state.psi.values).norm() / state.psi.values.norm();
    trace.push_back(res);
    state.psi = next;
    state.domain = analyze_flux(mesh, state.psi);
    state.lambda = lambda;
    if (res <= 1e-10) {
      TwinTruth truth;
      truth.psi = std::move(state.psi);
      truth.domain = std::move(state.domain);
      truth.lambda = lambda;
      return truth;
    }
  }
  std::ostringstream os;
  os << "forward equilibrium did not converge in " << max_pass
     << " passes; residual trace tail:";
  for (size_t i = trace.size() >= 5 ? trace.size() - 5 : 0; i < trace.size(); ++i)
    os << " " << trace[i];
  throw NumericalError(os.str());
}

namespace detail {

// Deterministic standard normal via Box-Muller on a 64-bit LCG-independent
// engine; avoids std::normal_distribution, whose sequence is
// implementation-defined.
class GaussianSource {
public:
  explicit GaussianSource(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b9) {}

  double next() {
    if (have_) {
      have_ = false;
      return cached_;
    }
    double u1 = uniform(), u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(th);
    have_ = true;
    return r * std::cos(th);
  }

private:
  double uniform() {
    // splitmix64; top 53 bits, shifted into (0, 1]
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    return (double(z >> 11) + 1.0) * 0x1.0p-53;
  }
  std::uint64_t state_;
  bool have_ = false;
  double cached_ = 0.0;
};

inline double family_rms(const std::vector<double>& v) {
  if (v.empty()) return 1.0;
  double s = 0.0;
  for (double x : v) s += x * x;
  double rms = std::sqrt(s / v.size());
  return rms > 0 ? rms : 1.0;
}

// P1 trace of psi along the wall at a given arclength.
inline double boundary_flux_at(const Mesh& mesh, const PsiField& psi, double s) {
  const int nb = static_cast<int>(mesh.boundary_nodes.size());
  double period = mesh.boundary_perimeter;
  s = std::fmod(s, period);
  if (s < 0) s += period;
  for (int k = 0; k < nb; ++k) {
    double s0 = mesh.boundary_arclength[k];
    double s1 = (k + 1 < nb) ? mesh.boundary_arclength[k + 1] : period;
    if (s >= s0 && s <= s1) {
      double t = (s1 > s0) ? (s - s0) / (s1 - s0) : 0.0;
      double v0 = psi.values[mesh.boundary_nodes[k]];
      double v1 = psi.values[mesh.boundary_nodes[(k + 1) % nb]];
      return (1.0 - t) * v0 + t * v1;
    }
  }
  return psi.values[mesh.boundary_nodes[0]];
}

}  // namespace detail

// Midpoint-rule variant of the chord quadrature, used by the optional
// alternative synthesis path so that synthetic data does not share the exact
// quadrature of the reconstruction operators.
inline std::vector<ChordQuadPoint> chord_quadrature_midpoint(const Mesh& mesh,
                                                             const Chord& chord) {
  auto gauss = chord_quadrature(mesh, chord);
  // collapse each 2-point pair back to its midpoint
  std::vector<ChordQuadPoint> out;
  for (size_t i = 0; i + 1 < gauss.size(); i += 2) {
    ChordQuadPoint qp;
    qp.x = 0.5 * (gauss[i].x + gauss[i + 1].x);
    qp.weight = gauss[i].weight + gauss[i + 1].weight;
    qp.triangle = gauss[i].triangle;
    out.push_back(qp);
  }
  return out;
}

// Evaluates every sensor on the manufactured truth and adds seeded Gaussian
// noise per family. Absolute sigmas are the relative level times the family
// RMS (with a 1e-4 floor so sigmas stay positive for noise-free data).
inline MeasurementSet synthesize_measurements(const Mesh& mesh, const TwinTruth& truth,
                                              const TwinSpec& spec,
                                              const BasisFamily& family) {
  MeasurementSet ms;
  ms.plasma_current = spec.I_p;
  detail::GaussianSource rng(spec.seed);

  const double sigma_floor = 1e-4;

  // flux loops
  {
    std::vector<double> vals;
    for (double s : spec.loop_positions)
      vals.push_back(detail::boundary_flux_at(mesh, truth.psi, s));
    double scale = detail::family_rms(vals);
    double sigma = std::max(spec.noise_loop, sigma_floor) * scale;
    for (size_t i = 0; i < vals.size(); ++i) {
      FluxLoop l;
      l.s = spec.loop_positions[i];
      l.value = vals[i] + (spec.noise_loop > 0 ? spec.noise_loop * scale * rng.next() : 0.0);
      l.sigma = sigma;
      ms.flux_loops.push_back(l);
    }
  }

  // probes
  {
    std::vector<MagneticProbe> probes;
    for (const auto& [pos, nrm] : spec.probes) {
      MagneticProbe p;
      p.position = pos;
      p.normal = nrm;
      probes.push_back(p);
    }
    Eigen::MatrixXd rows = probe_rows(mesh, probes);
    Eigen::VectorXd readings = rows * truth.psi.values;
    std::vector<double> vals(readings.data(), readings.data() + readings.size());
    double scale = detail::family_rms(vals);
    double sigma = std::max(spec.noise_probe, sigma_floor) * scale;
    for (size_t i = 0; i < probes.size(); ++i) {
      probes[i].value =
          readings[i] + (spec.noise_probe > 0 ? spec.noise_probe * scale * rng.next() : 0.0);
      probes[i].sigma = sigma;
    }
    ms.probes = probes;
  }

  // chords: polarimetry with the true density, interferometry from M c_true
  {
    std::vector<Chord> chords;
    for (const auto& pts : spec.chords) {
      Chord c;
      c.points = pts;
      chords.push_back(c);
    }
    Eigen::VectorXd alpha(chords.size()), beta(chords.size());
    if (!spec.coarse_synthesis_quadrature) {
      Eigen::MatrixXd rows =
          polarimetry_rows(mesh, chords, spec.c_true, family, truth.psi, truth.domain);
      alpha = rows * truth.psi.values;
      Eigen::MatrixXd M =
          interferometry_matrix(mesh, chords, truth.psi, truth.domain, family);
      beta = M * spec.c_true;
    } else {
      for (size_t i = 0; i < chords.size(); ++i) {
        double ai = 0.0, bi = 0.0;
        Point d = chords[i].points.back() - chords[i].points.front();
        Point nu{-d.z / norm(d), d.r / norm(d)};
        for (const auto& qp : chord_quadrature_midpoint(mesh, chords[i])) {
          double psibar;
          if (!detail::plasma_psibar(mesh, truth.psi, truth.domain, qp, psibar)) continue;
          Eigen::VectorXd phi = family.eval(psibar);
          double ne = phi.dot(spec.c_true);
          Point g = mesh.triangle_gradient(truth.psi, qp.triangle);
          ai += qp.weight * (ne / qp.x.r) * dot(nu, g);
          bi += qp.weight * ne;
        }
        alpha[i] = ai;
        beta[i] = bi;
      }
    }
    std::vector<double> av(alpha.data(), alpha.data() + alpha.size());
    std::vector<double> bv(beta.data(), beta.data() + beta.size());
    double ascale = detail::family_rms(av), bscale = detail::family_rms(bv);
    double sa = std::max(spec.noise_alpha, sigma_floor) * ascale;
    double sb = std::max(spec.noise_beta, sigma_floor) * bscale;
    for (size_t i = 0; i < chords.size(); ++i) {
      chords[i].alpha =
          alpha[i] + (spec.noise_alpha > 0 ? spec.noise_alpha * ascale * rng.next() : 0.0);
      chords[i].beta =
          beta[i] + (spec.noise_beta > 0 ? spec.noise_beta * bscale * rng.next() : 0.0);
      chords[i].sigma_alpha = sa;
      chords[i].sigma_beta = sb;
    }
    ms.chords = chords;
  }

  ms.validate();
  return ms;
}

// Dirichlet data of the twin problem: the spec's constant wall flux.
inline Eigen::VectorXd twin_boundary_values(const Mesh& mesh, const TwinSpec& spec) {
  return Eigen::VectorXd::Constant(mesh.boundary_nodes.size(), spec.boundary_value);
}

}  // namespace eqrec
