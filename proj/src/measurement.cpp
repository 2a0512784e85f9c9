#include "skintone/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <tuple>

#include <fmt/format.h>

#include "skintone/csv.hpp"
#include "skintone/errors.hpp"

namespace skintone {

namespace {

const std::vector<std::string> kHeader = {"subject_id", "site", "side", "space", "c1", "c2", "c3"};

std::optional<Side> parse_side(std::string_view s) {
  if (s == "left") return Side::left;
  if (s == "right") return Side::right;
  return std::nullopt;
}

using PairKey = std::pair<std::string, Site>;

struct Pair {
  std::optional<LabColor> left;
  std::optional<LabColor> right;
};

std::map<PairKey, Pair> collect_pairs(std::span<const MeasurementRecord> records) {
  std::map<PairKey, Pair> pairs;
  for (const auto& r : records) {
    auto& p = pairs[{r.subject_id, r.site}];
    (r.side == Side::left ? p.left : p.right) = r.lab();
  }
  return pairs;
}

LabColor midpoint(const LabColor& x, const LabColor& y) {
  return {(x.L + y.L) / 2.0, (x.a + y.a) / 2.0, (x.b + y.b) / 2.0};
}

}  // namespace

std::string_view to_string(Site s) { return s == Site::hand ? "hand" : "face"; }
std::string_view to_string(Side s) { return s == Side::left ? "left" : "right"; }

std::optional<Site> parse_site(std::string_view s) {
  if (s == "hand") return Site::hand;
  if (s == "face") return Site::face;
  return std::nullopt;
}

LabColor MeasurementRecord::lab() const {
  if (const auto* lab = std::get_if<LabColor>(&color)) return *lab;
  return srgb_to_lab(std::get<RgbColor>(color));
}

std::vector<MeasurementRecord> ingest_measurements(std::istream& in) {
  const csv::Table table = csv::read(in, kHeader);
  const bool has_time = table.header.size() > kHeader.size() && table.header[kHeader.size()] == "captured_at";

  std::vector<MeasurementRecord> out;
  std::set<std::tuple<std::string, Site, Side>> seen;
  for (const auto& row : table.rows) {
    MeasurementRecord rec;
    rec.subject_id = row.fields[0];
    if (rec.subject_id.empty()) throw InputError(InputError::Kind::malformed, row.line, "empty subject_id");

    const auto site = parse_site(row.fields[1]);
    if (!site) throw InputError(InputError::Kind::malformed, row.line, "unknown site '" + row.fields[1] + "'");
    const auto side = parse_side(row.fields[2]);
    if (!side) throw InputError(InputError::Kind::malformed, row.line, "unknown side '" + row.fields[2] + "'");
    rec.site = *site;
    rec.side = *side;

    const std::string& space = row.fields[3];
    if (space == "srgb") {
      const int r = csv::to_int(row, 4, "c1");
      const int g = csv::to_int(row, 5, "c2");
      const int b = csv::to_int(row, 6, "c3");
      try {
        rec.color = RgbColor::from_ints(r, g, b);
      } catch (const std::out_of_range& e) {
        throw InputError(InputError::Kind::range, row.line, e.what());
      }
    } else if (space == "lab") {
      const LabColor lab{csv::to_double(row, 4, "L"), csv::to_double(row, 5, "a"), csv::to_double(row, 6, "b")};
      if (!(lab.L >= 0.0 && lab.L <= 100.0))
        throw InputError(InputError::Kind::range, row.line, fmt::format("L* {} outside [0, 100]", lab.L));
      if (!std::isfinite(lab.a) || !std::isfinite(lab.b))
        throw InputError(InputError::Kind::range, row.line, "a*/b* must be finite");
      rec.color = lab;
    } else {
      throw InputError(InputError::Kind::malformed, row.line, "unknown color space '" + space + "'");
    }
    if (has_time && !row.fields[kHeader.size()].empty()) rec.captured_at = row.fields[kHeader.size()];

    if (!seen.emplace(rec.subject_id, rec.site, rec.side).second) {
      throw InputError(InputError::Kind::duplicate, row.line,
                       fmt::format("duplicate reading for ({}, {}, {})", rec.subject_id, to_string(rec.site),
                                   to_string(rec.side)));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<MeasurementRecord> ingest_measurements(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(InputError::Kind::missing, 0, "cannot open " + path.string());
  return ingest_measurements(in);
}

void write_measurements(std::ostream& out, std::span<const MeasurementRecord> records) {
  auto header = kHeader;
  header.push_back("captured_at");
  csv::write_row(out, header);
  for (const auto& r : records) {
    std::vector<std::string> row = {r.subject_id, std::string(to_string(r.site)), std::string(to_string(r.side))};
    if (const auto* rgb = std::get_if<RgbColor>(&r.color)) {
      row.insert(row.end(), {"srgb", std::to_string(rgb->r), std::to_string(rgb->g), std::to_string(rgb->b)});
    } else {
      const auto& lab = std::get<LabColor>(r.color);
      row.insert(row.end(),
                 {"lab", csv::format_double(lab.L), csv::format_double(lab.a), csv::format_double(lab.b)});
    }
    row.push_back(r.captured_at.value_or(""));
    csv::write_row(out, row);
  }
}

BilateralSummary average_bilateral(std::span<const MeasurementRecord> records) {
  std::map<std::string, SubjectTone> tones;
  BilateralSummary summary;
  for (const auto& [key, pair] : collect_pairs(records)) {
    const auto& [subject, site] = key;
    auto& tone = tones[subject];
    tone.subject_id = subject;
    if (!pair.left || !pair.right) {
      summary.incomplete.push_back({subject, site, pair.left ? Side::right : Side::left});
      continue;
    }
    const LabColor avg = midpoint(*pair.left, *pair.right);
    if (site == Site::face) {
      tone.face = avg;
      tone.face_polar = to_polar(avg);
    } else {
      tone.hand = avg;
      tone.hand_polar = to_polar(avg);
    }
  }
  for (auto& [id, tone] : tones) {
    if (tone.face || tone.hand) summary.tones.push_back(std::move(tone));
  }
  return summary;
}

double bilateral_delta_e(std::span<const MeasurementRecord> records, std::string_view subject_id, Site site) {
  std::optional<LabColor> left, right;
  for (const auto& r : records) {
    if (r.subject_id != subject_id || r.site != site) continue;
    (r.side == Side::left ? left : right) = r.lab();
  }
  if (!left || !right) {
    throw InputError(InputError::Kind::missing, 0,
                     fmt::format("subject {} has no {} {} reading", subject_id, to_string(site),
                                 left ? "right" : "left"));
  }
  return delta_e(*right, *left);
}

MinErrorEstimate expected_min_error(std::span<const MeasurementRecord> records, Site site) {
  MinErrorEstimate est;
  double sum = 0.0;
  for (const auto& [key, pair] : collect_pairs(records)) {
    if (key.second != site) continue;
    if (!pair.left || !pair.right) {
      est.excluded.push_back(key.first);
      continue;
    }
    sum += delta_e(*pair.right, *pair.left);
    ++est.pairs;
  }
  if (est.pairs == 0) {
    throw InputError(InputError::Kind::missing, 0,
                     fmt::format("no complete bilateral {} pair", to_string(site)));
  }
  est.delta_e_min = sum / static_cast<double>(est.pairs);
  return est;
}

}  // namespace skintone
