#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "skintone/color.hpp"
#include "skintone/scale.hpp"
#include "skintone/stats/design.hpp"

namespace skintone {

enum class TaskKind { self, image, preference, attentional };
enum class Background { white, gray };

std::string_view to_string(TaskKind k);
std::string_view to_string(Background b);
std::optional<TaskKind> parse_task_kind(std::string_view s);
std::optional<Background> parse_background(std::string_view s);

/// One response. `stimulus_id` is the rater's own id for self ratings, the
/// image id for image ratings, the true swatch index for attentional checks,
/// and empty for the preference question.
struct RatingRecord {
  std::string rater_id;
  std::string session_id;
  std::string task_id;
  std::string scale_id;
  TaskKind task = TaskKind::self;
  std::string stimulus_id;
  std::variant<int, std::string> response;  // swatch/item index, or a preferred scale_id
  std::optional<Background> background;     // palette tasks only
  int presentation_order = 0;
  std::string timestamp;

  /// Integer response; throws std::logic_error for a preference record.
  int index() const;
};

nlohmann::json to_json(const RatingRecord& r);
/// Throws InputError(schema) naming the missing or malformed field.
RatingRecord rating_from_json(const nlohmann::json& j);

/// Line-delimited JSON, one record per line. Errors carry the line number.
std::vector<RatingRecord> read_ratings(std::istream& in);
std::vector<RatingRecord> read_ratings_file(const std::string& path);
void write_ratings(std::ostream& out, std::span<const RatingRecord> ratings);

/// Measured color behind each rated stimulus, keyed by stimulus_id.
using ToneMap = std::map<std::string, LabColor, std::less<>>;

struct SwatchAccuracy {
  int index = 0;
  std::size_t n = 0;
  std::optional<LabColor> mean_tone;  // absent when no one chose this swatch
  std::optional<double> delta_e;
};

/// Per swatch, the mean measured color of everyone assigned that response,
/// compared with the swatch color. Uses self and image ratings on `scale`.
/// Throws InputError(join) naming the first rating whose stimulus has no tone.
std::vector<SwatchAccuracy> swatch_accuracy(std::span<const RatingRecord> ratings, const ToneMap& tones,
                                            const Scale& scale);

struct UtilizationBin {
  double L_low = 0.0;
  double L_high = 0.0;
  std::size_t n = 0;
  std::optional<double> mean_response;
};

struct Utilization {
  double fraction = 0.0;  // (max bin mean - min bin mean) / (K - 1)
  std::vector<UtilizationBin> bins;
};

/// Bins the rated stimuli by measured L* into `n_bins` equal-width bins over
/// the observed range. Throws std::invalid_argument when fewer than two bins
/// are occupied.
Utilization scale_utilization(std::span<const RatingRecord> ratings, const ToneMap& tones,
                              std::string_view scale_id, int K, int n_bins);

struct IccResult {
  std::string scale_id;
  std::string device;
  double icc_single = 0.0;   // ICC(2,1)
  double icc_average = 0.0;  // ICC(2,k)
  std::size_t n_targets = 0;
  std::size_t k_raters = 0;
  double ms_rows = 0.0;
  double ms_cols = 0.0;
  double ms_error = 0.0;
};

/// Two-way random-effects ICC on a complete targets x raters table.
/// Throws std::invalid_argument for ragged or non-finite tables and
/// std::domain_error when the table has no variance at all.
IccResult icc_two_way(const std::vector<std::vector<double>>& table);

struct StimulusInfo {
  std::string subject_id;
  std::string device;
};

/// Per device, a subjects x raters table of image ratings on `scale_id`.
/// Each subject's ratings through that device are ordered by rater_id and
/// the first k kept, k being the smallest count over subjects, so the table
/// is complete. Column j is therefore a rating slot, not one person.
std::map<std::string, std::vector<std::vector<double>>> device_tables(
    std::span<const RatingRecord> ratings, const std::map<std::string, StimulusInfo, std::less<>>& stimuli,
    std::string_view scale_id);

struct ExclusionOptions {
  int attentional_tolerance = 1;
  double mad_multiplier = 3.0;
  double mad_floor = 1.0;
};

enum class ExclusionReason { attentional, outlier };
std::string_view to_string(ExclusionReason r);

struct Exclusion {
  RatingRecord record;
  ExclusionReason reason = ExclusionReason::outlier;
  std::string detail;
};

struct ExclusionResult {
  std::vector<RatingRecord> kept;
  std::vector<Exclusion> excluded;
  std::vector<std::string> excluded_raters;  // failed an attentional check
};

/// Drops every record of a rater who misses an attentional check by more
/// than the tolerance, then drops image ratings far from their image's
/// median (|x - median| > multiplier * max(MAD, floor)) per scale. The
/// outlier pass repeats until nothing changes, so the filter is idempotent.
ExclusionResult exclusion_filter(std::span<const RatingRecord> ratings, const ExclusionOptions& options = {});

struct PreferenceCell {
  Background background = Background::white;
  std::string race;
  std::size_t n = 0;
  std::optional<double> percent_preferring;  // absent for empty cells
};

struct PreferenceSummary {
  std::string preferred_scale;
  std::vector<PreferenceCell> cells;
  /// Response `prefers` (0/1) on background and centered hand L*, with the
  /// gray background as reference.
  stats::DesignSpec design;
};

/// Percent of raters choosing `preferred_scale`, by background and race.
/// `race_of` and `hand_tone` are keyed by rater_id; raters missing from
/// either are left out of the logistic design but still counted in cells
/// when their race is known.
PreferenceSummary preference_summary(std::span<const RatingRecord> ratings,
                                     const std::map<std::string, std::string, std::less<>>& race_of,
                                     const ToneMap& hand_tone, const std::vector<std::string>& races,
                                     std::string_view preferred_scale = "CST");

}  // namespace skintone
