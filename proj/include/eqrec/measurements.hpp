#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eqrec/errors.hpp"
#include "eqrec/mesh.hpp"

namespace eqrec {

struct FluxLoop {
  double s = 0.0;      // arclength position along the wall
  double value = 0.0;  // measured psi (Wb)
  double sigma = 1.0;
};

struct MagneticProbe {
  Point position;      // on the wall
  Point normal;        // sensor orientation, unit vector
  double value = 0.0;  // measured (1/r) dpsi/dn
  double sigma = 1.0;
};

struct Chord {
  std::vector<Point> points;  // polyline, usually two endpoints
  double alpha = 0.0;         // polarimetry reading
  double beta = 0.0;          // interferometry reading
  double sigma_alpha = 1.0;
  double sigma_beta = 1.0;
  bool polarimetry_active = true;
  bool interferometry_active = true;
};

// Flux-loop, probe, chord and plasma-current data with error variances.
struct MeasurementSet {
  std::vector<FluxLoop> flux_loops;
  std::vector<MagneticProbe> probes;
  std::vector<Chord> chords;
  double plasma_current = 0.0;  // I_p (A)
  bool sign_flipped = false;    // set when ingestion negated the dataset

  void validate() const {
    for (size_t i = 0; i < flux_loops.size(); ++i)
      if (!(flux_loops[i].sigma > 0.0))
        throw DataError("flux loop " + std::to_string(i) + " has sigma <= 0");
    for (size_t i = 0; i < probes.size(); ++i) {
      if (!(probes[i].sigma > 0.0))
        throw DataError("probe " + std::to_string(i) + " has sigma <= 0");
      double nn = norm(probes[i].normal);
      if (std::abs(nn - 1.0) > 1e-6)
        throw DataError("probe " + std::to_string(i) + " normal is not a unit vector");
    }
    for (size_t i = 0; i < chords.size(); ++i) {
      const Chord& c = chords[i];
      if (c.points.size() < 2)
        throw DataError("chord " + std::to_string(i) + " needs at least 2 points");
      if (c.polarimetry_active && !(c.sigma_alpha > 0.0))
        throw DataError("chord " + std::to_string(i) + " has sigma_alpha <= 0");
      if (c.interferometry_active && !(c.sigma_beta > 0.0))
        throw DataError("chord " + std::to_string(i) + " has sigma_beta <= 0");
    }
    if (plasma_current == 0.0) throw DataError("plasma current I_p must be nonzero");
  }

  // The reconstruction assumes psi peaks at the magnetic axis, which holds
  // for I_p > 0 in this sign convention. Datasets with inverted current are
  // negated wholesale on ingestion and the flip is recorded.
  void normalize_sign() {
    if (plasma_current >= 0.0) return;
    plasma_current = -plasma_current;
    for (auto& l : flux_loops) l.value = -l.value;
    for (auto& p : probes) p.value = -p.value;
    for (auto& c : chords) c.alpha = -c.alpha;
    sign_flipped = !sign_flipped;
  }
};

inline nlohmann::json to_json(const MeasurementSet& ms) {
  nlohmann::json j;
  j["version"] = 1;
  j["plasma_current"] = ms.plasma_current;
  j["flux_loops"] = nlohmann::json::array();
  for (const auto& l : ms.flux_loops)
    j["flux_loops"].push_back({{"s", l.s}, {"value", l.value}, {"sigma", l.sigma}});
  j["probes"] = nlohmann::json::array();
  for (const auto& p : ms.probes)
    j["probes"].push_back({{"r", p.position.r},
                           {"z", p.position.z},
                           {"nr", p.normal.r},
                           {"nz", p.normal.z},
                           {"value", p.value},
                           {"sigma", p.sigma}});
  j["chords"] = nlohmann::json::array();
  for (const auto& c : ms.chords) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : c.points) pts.push_back({p.r, p.z});
    j["chords"].push_back({{"points", pts},
                           {"alpha", c.alpha},
                           {"beta", c.beta},
                           {"sigma_alpha", c.sigma_alpha},
                           {"sigma_beta", c.sigma_beta},
                           {"polarimetry_active", c.polarimetry_active},
                           {"interferometry_active", c.interferometry_active}});
  }
  return j;
}

inline MeasurementSet measurements_from_json(const nlohmann::json& j) {
  if (!j.contains("version") || j["version"].get<int>() != 1)
    throw ParseError("measurement file: unsupported or missing version (expected 1)");
  MeasurementSet ms;
  ms.plasma_current = j.at("plasma_current").get<double>();
  for (const auto& l : j.value("flux_loops", nlohmann::json::array())) {
    FluxLoop fl;
    fl.s = l.at("s").get<double>();
    fl.value = l.at("value").get<double>();
    fl.sigma = l.at("sigma").get<double>();
    ms.flux_loops.push_back(fl);
  }
  for (const auto& p : j.value("probes", nlohmann::json::array())) {
    MagneticProbe mp;
    mp.position = {p.at("r").get<double>(), p.at("z").get<double>()};
    mp.normal = {p.at("nr").get<double>(), p.at("nz").get<double>()};
    mp.value = p.at("value").get<double>();
    mp.sigma = p.at("sigma").get<double>();
    ms.probes.push_back(mp);
  }
  for (const auto& c : j.value("chords", nlohmann::json::array())) {
    Chord ch;
    for (const auto& pt : c.at("points")) {
      if (!pt.is_array() || pt.size() != 2)
        throw ParseError("measurement file: chord point must be [r, z]");
      ch.points.push_back({pt[0].get<double>(), pt[1].get<double>()});
    }
    ch.alpha = c.value("alpha", 0.0);
    ch.beta = c.value("beta", 0.0);
    ch.sigma_alpha = c.value("sigma_alpha", 1.0);
    ch.sigma_beta = c.value("sigma_beta", 1.0);
    ch.polarimetry_active = c.value("polarimetry_active", true);
    ch.interferometry_active = c.value("interferometry_active", true);
    ms.chords.push_back(ch);
  }
  ms.validate();
  return ms;
}

inline MeasurementSet load_measurements(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open measurement file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("measurement file " + path + ": " + e.what());
  }
  return measurements_from_json(j);
}

inline void save_measurements(const MeasurementSet& ms, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write measurement file: " + path);
  out << to_json(ms).dump(2) << "\n";
}

}  // namespace eqrec
