#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "skintone/csv.hpp"
#include "skintone/errors.hpp"
#include "skintone/study.hpp"

namespace skintone {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  return std::string(s.substr(b, s.find_last_not_of(" \t") - b + 1));
}

}  // namespace

std::string_view to_string(Race r) {
  switch (r) {
    case Race::asian: return "Asian";
    case Race::black: return "Black";
    case Race::hispanic: return "Hispanic";
    case Race::white: return "White";
    case Race::other: return "Other";
  }
  return "?";
}

std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::female: return "Female";
    case Gender::male: return "Male";
    case Gender::unspecified: return "Unspecified";
  }
  return "?";
}

std::optional<Race> parse_race(std::string_view s) {
  const auto l = lower(trim(s));
  for (auto r : {Race::asian, Race::black, Race::hispanic, Race::white, Race::other})
    if (l == lower(to_string(r))) return r;
  return std::nullopt;
}

Gender parse_gender(std::string_view s) {
  const auto l = lower(trim(s));
  if (l == "female" || l == "f" || l == "woman") return Gender::female;
  if (l == "male" || l == "m" || l == "man") return Gender::male;
  return Gender::unspecified;
}

RaceMapping RaceMapping::defaults() {
  RaceMapping m;
  m.race_labels = {
      {"asian", Race::asian},
      {"black", Race::black},
      {"black or african american", Race::black},
      {"african american", Race::black},
      {"white", Race::white},
      {"hispanic", Race::hispanic},
      {"hispanic or latino", Race::hispanic},
      {"latino", Race::hispanic},
  };
  m.hispanic_ethnicities = {"hispanic", "hispanic or latino", "latino", "latina", "latinx"};
  return m;
}

Race RaceMapping::map(std::string_view race, std::string_view ethnicity) const {
  const auto eth = lower(trim(ethnicity));
  for (const auto& h : hispanic_ethnicities)
    if (eth == lower(h)) return Race::hispanic;
  const auto it = race_labels.find(lower(trim(race)));
  return it == race_labels.end() ? Race::other : it->second;
}

std::vector<Demographics> read_demographics(std::istream& in, const RaceMapping& mapping) {
  const auto table = csv::read(in, {"person_id", "race", "ethnicity", "gender", "age_bin", "location"});
  std::vector<Demographics> out;
  std::set<std::string, std::less<>> seen;
  for (const auto& row : table.rows) {
    Demographics d;
    d.person_id = trim(row.fields[0]);
    if (d.person_id.empty()) throw InputError(InputError::Kind::malformed, row.line, "empty person_id");
    if (!seen.insert(d.person_id).second)
      throw InputError(InputError::Kind::duplicate, row.line, fmt::format("person '{}' listed twice", d.person_id));
    d.race_raw = trim(row.fields[1]);
    d.ethnicity_raw = trim(row.fields[2]);
    d.race = mapping.map(d.race_raw, d.ethnicity_raw);
    const auto g = lower(trim(row.fields[3]));
    d.gender = parse_gender(g);
    if (d.gender == Gender::unspecified && !g.empty() && g != "unspecified" && g != "prefer not to say")
      throw InputError(InputError::Kind::range, row.line, fmt::format("unknown gender '{}'", row.fields[3]));
    d.age_bin = trim(row.fields[4]);
    d.location = trim(row.fields[5]);
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Demographics> read_demographics(const std::filesystem::path& path, const RaceMapping& mapping) {
  std::ifstream in(path);
  if (!in) throw InputError(InputError::Kind::missing, 0, "cannot open " + path.string());
  return read_demographics(in, mapping);
}

void write_demographics(std::ostream& out, std::span<const Demographics> people) {
  csv::write_row(out, {"person_id", "race", "ethnicity", "gender", "age_bin", "location"});
  for (const auto& d : people) {
    csv::write_row(out, {d.person_id, d.race_raw.empty() ? std::string(to_string(d.race)) : d.race_raw,
                         d.ethnicity_raw, std::string(to_string(d.gender)), d.age_bin, d.location});
  }
}

DemographicFilter filter_demographics(std::span<const Demographics> people) {
  DemographicFilter f;
  for (const auto& d : people) {
    if (d.race == Race::other) {
      ++f.removed_other_race;
      f.removed_ids.push_back(d.person_id);
    } else if (d.gender == Gender::unspecified) {
      ++f.removed_unspecified_gender;
      f.removed_ids.push_back(d.person_id);
    } else {
      f.kept.push_back(d);
    }
  }
  return f;
}

std::vector<ImageStimulus> read_stimuli(std::istream& in) {
  const auto table = csv::read(in, {"image_id", "subject_id", "device", "L", "a", "b", "file"});
  std::vector<ImageStimulus> out;
  std::set<std::string, std::less<>> seen;
  for (const auto& row : table.rows) {
    ImageStimulus s;
    s.image_id = trim(row.fields[0]);
    s.subject_id = trim(row.fields[1]);
    s.device = trim(row.fields[2]);
    if (s.image_id.empty() || s.subject_id.empty())
      throw InputError(InputError::Kind::malformed, row.line, "empty image_id or subject_id");
    if (!seen.insert(s.image_id).second)
      throw InputError(InputError::Kind::duplicate, row.line, fmt::format("image '{}' listed twice", s.image_id));
    if (s.device != "B" && s.device != "D" && s.device != "E")
      throw InputError(InputError::Kind::range, row.line, fmt::format("device '{}' is not one of B, D, E", s.device));
    s.image_region_lab = {csv::to_double(row, 3, "L"), csv::to_double(row, 4, "a"), csv::to_double(row, 5, "b")};
    const auto& c = s.image_region_lab;
    if (!std::isfinite(c.L) || !std::isfinite(c.a) || !std::isfinite(c.b))
      throw InputError(InputError::Kind::range, row.line, "image-region color is not finite");
    s.file = trim(row.fields[6]);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ImageStimulus> read_stimuli(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(InputError::Kind::missing, 0, "cannot open " + path.string());
  return read_stimuli(in);
}

void write_stimuli(std::ostream& out, std::span<const ImageStimulus> stimuli) {
  csv::write_row(out, {"image_id", "subject_id", "device", "L", "a", "b", "file"});
  for (const auto& s : stimuli) {
    csv::write_row(out, {s.image_id, s.subject_id, s.device, csv::format_double(s.image_region_lab.L),
                         csv::format_double(s.image_region_lab.a), csv::format_double(s.image_region_lab.b), s.file});
  }
}

// Configuration files.

namespace {

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(InputError::Kind::missing, 0, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(InputError::Kind::malformed, 0, fmt::format("{}: {}", path.string(), e.what()));
  }
}

template <typename T>
void optional_field(const json& j, const char* key, T& into, const std::filesystem::path& path) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    into = it->get<T>();
  } catch (const json::exception&) {
    throw InputError(InputError::Kind::schema, 0, fmt::format("{}: field '{}' has the wrong type", path.string(), key));
  }
}

std::vector<Scale> load_scales(const json& j, const std::filesystem::path& path) {
  const auto it = j.find("scales");
  if (it == j.end() || !it->is_array())
    throw InputError(InputError::Kind::schema, 0, path.string() + ": 'scales' must list scale files");
  std::vector<Scale> out;
  for (const auto& p : *it) {
    if (!p.is_string()) throw InputError(InputError::Kind::schema, 0, path.string() + ": scale entries are paths");
    std::filesystem::path sp = p.get<std::string>();
    if (sp.is_relative()) sp = path.parent_path() / sp;
    out.push_back(load_scale(sp));
  }
  return out;
}

Site site_field(const json& j, const char* key, Site fallback, const std::filesystem::path& path) {
  std::string s(to_string(fallback));
  optional_field(j, key, s, path);
  const auto site = parse_site(s);
  if (!site) throw InputError(InputError::Kind::range, 0, fmt::format("{}: unknown site '{}'", path.string(), s));
  return *site;
}

ExclusionOptions exclusion_field(const json& j, const std::filesystem::path& path) {
  ExclusionOptions o;
  if (const auto it = j.find("exclusion"); it != j.end()) {
    optional_field(*it, "attentional_tolerance", o.attentional_tolerance, path);
    optional_field(*it, "mad_multiplier", o.mad_multiplier, path);
    optional_field(*it, "mad_floor", o.mad_floor, path);
  }
  return o;
}

RaceMapping mapping_field(const json& j, const std::filesystem::path& path) {
  auto m = RaceMapping::defaults();
  const auto it = j.find("race_mapping");
  if (it == j.end()) return m;
  if (const auto labels = it->find("labels"); labels != it->end()) {
    m.race_labels.clear();
    for (const auto& [raw, cat] : labels->items()) {
      const auto r = parse_race(cat.get<std::string>());
      if (!r) throw InputError(InputError::Kind::range, 0, fmt::format("{}: unknown category '{}'", path.string(), cat.dump()));
      m.race_labels[lower(raw)] = *r;
    }
  }
  optional_field(*it, "hispanic_ethnicities", m.hispanic_ethnicities, path);
  return m;
}

}  // namespace

Study1Config load_study1_config(const std::filesystem::path& path) {
  const auto j = load_json(path);
  Study1Config c;
  c.scales = load_scales(j, path);
  c.tone_site = site_field(j, "tone_site", Site::hand, path);
  if (const auto it = j.find("references"); it != j.end()) {
    optional_field(*it, "race", c.race_reference, path);
    optional_field(*it, "gender", c.gender_reference, path);
    optional_field(*it, "background", c.background_reference, path);
    std::string loc;
    optional_field(*it, "location", loc, path);
    if (!loc.empty()) c.location_reference = loc;
  }
  optional_field(j, "utilization_bins", c.utilization_bins, path);
  optional_field(j, "stepwise", c.stepwise, path);
  optional_field(j, "preferred_scale", c.preferred_scale, path);
  c.exclusion = exclusion_field(j, path);
  c.mapping = mapping_field(j, path);
  return c;
}

Study2Config load_study2_config(const std::filesystem::path& path) {
  const auto j = load_json(path);
  Study2Config c;
  c.scales = load_scales(j, path);
  c.tone_site = site_field(j, "tone_site", Site::face, path);
  if (const auto it = j.find("references"); it != j.end()) {
    optional_field(*it, "subject_race", c.subject_race_reference, path);
    optional_field(*it, "rater_race", c.rater_race_reference, path);
    optional_field(*it, "gender", c.gender_reference, path);
    optional_field(*it, "device", c.device_reference, path);
  }
  optional_field(j, "utilization_bins", c.utilization_bins, path);
  c.exclusion = exclusion_field(j, path);
  c.mapping = mapping_field(j, path);
  return c;
}

}  // namespace skintone
