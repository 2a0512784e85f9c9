#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "skintone/color.hpp"

namespace skintone {

enum class Site { hand, face };
enum class Side { left, right };

std::string_view to_string(Site s);
std::string_view to_string(Side s);
std::optional<Site> parse_site(std::string_view s);

/// One colorimeter reading. The device reports either raw sRGB or
/// pre-converted Lab; both are accepted.
struct MeasurementRecord {
  std::string subject_id;
  Site site = Site::hand;
  Side side = Side::left;
  std::variant<RgbColor, LabColor> color;
  std::optional<std::string> captured_at;

  LabColor lab() const;
};

/// Bilateral average per site. A site is empty when one side is missing.
struct SubjectTone {
  std::string subject_id;
  std::optional<LabColor> face;
  std::optional<LabColor> hand;
  std::optional<PolarTone> face_polar;
  std::optional<PolarTone> hand_polar;

  const std::optional<LabColor>& at(Site s) const { return s == Site::face ? face : hand; }
  const std::optional<PolarTone>& polar_at(Site s) const { return s == Site::face ? face_polar : hand_polar; }
};

struct IncompletePair {
  std::string subject_id;
  Site site = Site::hand;
  Side missing = Side::left;
};

struct BilateralSummary {
  std::vector<SubjectTone> tones;           // sorted by subject_id
  std::vector<IncompletePair> incomplete;   // subjects with a one-sided site
};

struct MinErrorEstimate {
  double delta_e_min = 0.0;
  std::size_t pairs = 0;
  std::vector<std::string> excluded;  // subjects lacking a side at this site
};

/// CSV: subject_id,site,side,space,c1,c2,c3[,captured_at]
std::vector<MeasurementRecord> ingest_measurements(std::istream& in);
std::vector<MeasurementRecord> ingest_measurements(const std::filesystem::path& path);
void write_measurements(std::ostream& out, std::span<const MeasurementRecord> records);

BilateralSummary average_bilateral(std::span<const MeasurementRecord> records);

/// Left/right color difference for one subject at one site. `records` may
/// contain other subjects and sites; only `subject_id` at `site` is used.
double bilateral_delta_e(std::span<const MeasurementRecord> records, std::string_view subject_id, Site site);

/// Mean bilateral difference over every subject with both sides at `site`.
MinErrorEstimate expected_min_error(std::span<const MeasurementRecord> records, Site site);

}  // namespace skintone
