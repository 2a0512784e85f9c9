#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "skintone/measurement.hpp"
#include "skintone/rating.hpp"
#include "skintone/scale.hpp"
#include "skintone/study.hpp"

namespace skintone {

/// Skin-like hue and chroma trends over L* (hue roughly 45 to 60 degrees,
/// chroma 12 to 25), used to synthesize scale-building corpora.
double typical_skin_hue(double L);
double typical_skin_chroma(double L);

/// L* uniform on [20, 72], hue and chroma scattered about the trends.
std::vector<PolarTone> synthetic_skin_corpus(std::size_t n, std::uint64_t seed);

struct Normal {
  double mean = 0.0;
  double sd = 0.0;
};

/// Planted response model for one scale. Effects are keyed by coefficient
/// name ("L", "hue", "chroma", "race:Asian", "device:E", ...); continuous
/// covariates act on centered values. `center` is the mean response. Noise
/// comes from `noise_sd` when given, otherwise it is tuned so the model
/// explains `target_r2` of the variance (rounding included).
struct PlantedScale {
  std::string scale_id;
  double center = 5.5;
  std::optional<double> noise_sd;
  double target_r2 = 0.6;
  double sigma_b2 = 0.0;  // study 2 only: subject random-intercept variance
  std::map<std::string, double> effects;
};

struct PlantedPreference {
  double intercept = 0.0;
  double background_white = 0.0;
  double hand_L = 0.0;  // per unit of centered hand L*
};

struct Study1Simulation {
  std::uint64_t seed = 1;
  std::size_t raters = 0;
  std::vector<Scale> scales;  // the first palette scales are shown in random order, text scales last
  std::vector<PlantedScale> planted;
  std::map<std::string, double> race_mix;  // category -> weight
  std::map<std::string, Normal> race_lightness;
  Normal hue{50.0, 7.0};
  Normal chroma{18.0, 3.0};
  LabColor face_offset{-2.0, 1.0, 0.5};  // face minus hand, in Lab
  double hand_delta_e = 3.3;
  double face_delta_e = 3.5;
  std::vector<std::string> locations{"CA", "MD"};
  std::optional<PlantedPreference> preference;
  std::string preference_choice_a = "CST";
  std::string preference_choice_b = "MST";
  std::size_t extra_other_race = 0;           // appended raters removed by the demographic filter
  std::size_t extra_unspecified_gender = 0;
};

struct SimSubject {
  std::string id;
  std::string race;
  std::string gender;
  PolarTone face;
};

struct Study2Simulation {
  std::uint64_t seed = 1;
  std::size_t raters_per_scale = 0;
  std::vector<Scale> scales;
  std::vector<PlantedScale> planted;
  std::vector<SimSubject> subjects;
  std::map<std::string, double> device_L_offset{{"B", 0.0}, {"D", 1.1}, {"E", -21.7}};
  std::map<std::string, double> device_noise_sd;  // extra per-device response noise
  std::map<std::string, double> race_mix;          // raters
  double face_delta_e = 3.5;
  std::vector<int> attentional_swatches{4, 7};
  double attentional_failure_rate = 0.0;  // raters missing one check by two or more
  double outlier_rate = 0.0;              // image responses replaced by the far end of the scale
  bool oracle = false;                    // respond with the nearest swatch to the image color
  std::string location = "MD";
};

/// Datasets in the ingestion formats. `truth` records what was planted.
struct SimulatedStudy {
  std::vector<MeasurementRecord> measurements;
  std::vector<Demographics> demographics;
  std::vector<ImageStimulus> stimuli;
  std::vector<RatingRecord> ratings;
  nlohmann::json truth;
};

SimulatedStudy simulate_study1(const Study1Simulation& sim);
SimulatedStudy simulate_study2(const Study2Simulation& sim);

using SimulationConfig = std::variant<Study1Simulation, Study2Simulation>;

/// JSON with "study": 1 or 2. Scale paths resolve relative to the file.
SimulationConfig load_simulation_config(const std::filesystem::path& path);

/// Runs the configured study, optionally overriding the rater count and seed.
SimulatedStudy simulate_study(SimulationConfig config, std::optional<std::size_t> n = std::nullopt,
                              std::optional<std::uint64_t> seed = std::nullopt);

/// measurements.csv, demographics.csv, ratings.jsonl, truth.json, and for
/// study 2 stimuli.csv. Returns the written paths.
std::vector<std::filesystem::path> write_simulation(const SimulatedStudy& study, const std::filesystem::path& dir);

}  // namespace skintone
