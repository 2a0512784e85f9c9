#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skintone/measurement.hpp"
#include "skintone/rating.hpp"
#include "skintone/scale.hpp"
#include "skintone/stats/mixed.hpp"
#include "skintone/stats/models.hpp"

namespace skintone {

enum class Race { asian, black, hispanic, white, other };
enum class Gender { female, male, unspecified };

std::string_view to_string(Race r);
std::string_view to_string(Gender g);
std::optional<Race> parse_race(std::string_view s);
Gender parse_gender(std::string_view s);

/// Raw self-reported race and ethnicity collapse into one ethno-racial
/// category. Any ethnicity in `hispanic_ethnicities` wins; otherwise the race
/// label is looked up, and unknown labels become Other. Matching ignores case.
struct RaceMapping {
  std::map<std::string, Race, std::less<>> race_labels;
  std::vector<std::string> hispanic_ethnicities;

  static RaceMapping defaults();
  Race map(std::string_view race, std::string_view ethnicity) const;
};

struct Demographics {
  std::string person_id;
  std::string race_raw;
  std::string ethnicity_raw;
  Race race = Race::other;
  Gender gender = Gender::unspecified;
  std::string age_bin;
  std::string location;
};

/// CSV: person_id,race,ethnicity,gender,age_bin,location
std::vector<Demographics> read_demographics(std::istream& in, const RaceMapping& mapping = RaceMapping::defaults());
std::vector<Demographics> read_demographics(const std::filesystem::path& path,
                                            const RaceMapping& mapping = RaceMapping::defaults());
void write_demographics(std::ostream& out, std::span<const Demographics> people);

struct DemographicFilter {
  std::vector<Demographics> kept;
  std::size_t removed_other_race = 0;
  std::size_t removed_unspecified_gender = 0;  // among those not already removed for race
  std::vector<std::string> removed_ids;
};

/// Drops people whose category is Other or whose gender is unspecified.
DemographicFilter filter_demographics(std::span<const Demographics> people);

struct ImageStimulus {
  std::string image_id;
  std::string subject_id;
  std::string device;  // B, D or E
  LabColor image_region_lab;
  std::string file;
};

/// CSV: image_id,subject_id,device,L,a,b,file
std::vector<ImageStimulus> read_stimuli(std::istream& in);
std::vector<ImageStimulus> read_stimuli(const std::filesystem::path& path);
void write_stimuli(std::ostream& out, std::span<const ImageStimulus> stimuli);

struct Study1Config {
  std::vector<Scale> scales;  // palette and text scales rated by every rater
  Site tone_site = Site::hand;
  std::string race_reference = "White";
  std::string gender_reference = "Female";
  std::string background_reference = "gray";
  std::optional<std::string> location_reference;  // lexicographic first when unset
  int utilization_bins = 8;
  bool stepwise = true;
  std::string preferred_scale = "CST";
  ExclusionOptions exclusion;
  RaceMapping mapping = RaceMapping::defaults();
};

struct Study2Config {
  std::vector<Scale> scales;  // palette scales used to rate images
  Site tone_site = Site::face;
  std::string subject_race_reference = "Black";
  std::string rater_race_reference = "Black";
  std::string gender_reference = "Female";
  std::string device_reference = "B";
  int utilization_bins = 8;
  ExclusionOptions exclusion;
  stats::MixedOptions mixed;
  RaceMapping mapping = RaceMapping::defaults();
};

/// JSON configuration. Scale paths resolve relative to the config file.
Study1Config load_study1_config(const std::filesystem::path& path);
Study2Config load_study2_config(const std::filesystem::path& path);

struct ScaleModel {
  std::string scale_id;
  std::size_t n = 0;
  std::vector<std::string> full_terms;
  stats::ModelFit fit;
  std::vector<stats::StepwiseStep> trace;
  std::vector<std::pair<std::string, double>> l_star_ratios;
};

struct AccuracyRow {
  std::string scale_id;
  std::string group;  // background, race, or device
  SwatchAccuracy accuracy;
};

struct UtilizationRow {
  std::string scale_id;
  std::string group;
  Utilization utilization;
};

struct ExclusionCounts {
  std::size_t raters_excluded = 0;
  std::size_t responses_excluded_attentional = 0;
  std::size_t responses_excluded_outlier = 0;
  std::size_t responses_kept = 0;
};

struct Study1Report {
  std::size_t raters_in = 0;
  std::size_t removed_other_race = 0;
  std::size_t removed_unspecified_gender = 0;
  ExclusionCounts exclusions;
  std::optional<MinErrorEstimate> delta_e_min_hand;
  std::optional<MinErrorEstimate> delta_e_min_face;
  std::vector<ScaleModel> models;
  std::vector<AccuracyRow> accuracy;
  std::vector<UtilizationRow> utilization;
  std::optional<PreferenceSummary> preference;
  std::optional<ScaleModel> preference_model;
  std::vector<std::string> diagnostics;
};

struct MixedScaleModel {
  std::string scale_id;
  std::size_t n = 0;
  stats::MixedFit fit;
  std::vector<std::pair<std::string, double>> l_star_ratios;
};

struct Study2Report {
  std::size_t raters_in = 0;
  std::size_t removed_other_race = 0;
  std::size_t removed_unspecified_gender = 0;
  ExclusionCounts exclusions;
  std::vector<MixedScaleModel> models;
  std::vector<IccResult> icc;
  std::vector<AccuracyRow> accuracy;         // by measured subject tone
  std::vector<AccuracyRow> device_accuracy;  // by image-region color, per device
  std::vector<UtilizationRow> utilization;
  std::vector<std::string> diagnostics;
};

/// Self-rating study: ratings join to rater demographics and rater tone.
Study1Report run_study1(std::span<const MeasurementRecord> measurements, std::span<const Demographics> demographics,
                        std::span<const RatingRecord> ratings, const Study1Config& config);

/// Image-rating study: ratings join to stimuli, the subject's tone and
/// demographics, and the rater's demographics.
Study2Report run_study2(std::span<const ImageStimulus> stimuli, std::span<const MeasurementRecord> subject_measurements,
                        std::span<const Demographics> demographics, std::span<const RatingRecord> ratings,
                        const Study2Config& config);

/// Human-readable covariate label for a model coefficient name.
std::string covariate_label(std::string_view coefficient);

enum class ReportFormat { text, csv, both };

/// Writes the reports into `dir` (created if needed) and returns the paths.
std::vector<std::filesystem::path> emit_reports(const Study1Report& report, const std::filesystem::path& dir,
                                                ReportFormat format = ReportFormat::both);
std::vector<std::filesystem::path> emit_reports(const Study2Report& report, const std::filesystem::path& dir,
                                                ReportFormat format = ReportFormat::both);

inline constexpr std::string_view kTable1Columns[] = {"Estimate", "Standard Error", "t-statistic",
                                                      "p-value",  "L* Ratio",       "Adjusted R²"};

}  // namespace skintone
