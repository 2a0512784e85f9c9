#pragma once

// Shipped simulation configs and a few checks shared by study tests.

#include <cmath>
#include <string>
#include <variant>

#include "skintone/simulate.hpp"
#include "skintone/study.hpp"

namespace skintone::testing {

inline std::string data_path(const std::string& rel) { return std::string(SKINTONE_DATA_DIR) + "/" + rel; }

inline Study1Simulation shipped_study1() {
  return std::get<Study1Simulation>(load_simulation_config(data_path("config/sim_study1.json")));
}
inline Study2Simulation shipped_study2() {
  return std::get<Study2Simulation>(load_simulation_config(data_path("config/sim_study2.json")));
}
inline Study2Simulation shipped_oracle() {
  return std::get<Study2Simulation>(load_simulation_config(data_path("config/sim_study2_oracle.json")));
}
inline Study1Config shipped_study1_config() { return load_study1_config(data_path("config/study1.json")); }
inline Study2Config shipped_study2_config() { return load_study2_config(data_path("config/study2.json")); }

inline const PlantedScale& planted(const std::vector<PlantedScale>& all, const std::string& id) {
  for (const auto& p : all)
    if (p.scale_id == id) return p;
  throw std::out_of_range(id);
}

inline Study1Report run(const SimulatedStudy& s, const Study1Config& c) {
  return run_study1(s.measurements, s.demographics, s.ratings, c);
}
inline Study2Report run(const SimulatedStudy& s, const Study2Config& c) {
  return run_study2(s.stimuli, s.measurements, s.demographics, s.ratings, c);
}

// Largest |estimate - planted| / SE over the planted effects; a planted
// effect missing from the fit counts as infinitely far unless it is zero.
inline double worst_z(const stats::ModelFit& fit, const PlantedScale& p) {
  double worst = 0.0;
  for (const auto& [name, beta] : p.effects) {
    const auto* c = fit.find(name);
    if (!c) {
      if (beta != 0.0) return INFINITY;
      continue;
    }
    worst = std::max(worst, std::abs(c->estimate - beta) / c->std_error);
  }
  return worst;
}

}  // namespace skintone::testing
