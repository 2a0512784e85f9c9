#include "skintone/rating.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "skintone/errors.hpp"

namespace skintone {

using nlohmann::json;

namespace {

double median_of(std::vector<double> v) {
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

bool is_scored(const RatingRecord& r) {
  return (r.task == TaskKind::self || r.task == TaskKind::image) && std::holds_alternative<int>(r.response);
}

template <typename T>
T required(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw InputError(InputError::Kind::schema, 0, fmt::format("rating record lacks '{}'", key));
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw InputError(InputError::Kind::schema, 0, fmt::format("rating field '{}' has the wrong type", key));
  }
}

}  // namespace

std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::self: return "self";
    case TaskKind::image: return "image";
    case TaskKind::preference: return "preference";
    case TaskKind::attentional: return "attentional";
  }
  return "?";
}

std::string_view to_string(Background b) { return b == Background::white ? "white" : "gray"; }

std::optional<TaskKind> parse_task_kind(std::string_view s) {
  for (auto k : {TaskKind::self, TaskKind::image, TaskKind::preference, TaskKind::attentional})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

std::optional<Background> parse_background(std::string_view s) {
  if (s == "white") return Background::white;
  if (s == "gray") return Background::gray;
  return std::nullopt;
}

std::string_view to_string(ExclusionReason r) { return r == ExclusionReason::attentional ? "attentional" : "outlier"; }

int RatingRecord::index() const {
  if (const int* v = std::get_if<int>(&response)) return *v;
  throw std::logic_error("rating " + task_id + " holds a scale choice, not an index");
}

json to_json(const RatingRecord& r) {
  json j;
  j["rater_id"] = r.rater_id;
  j["session_id"] = r.session_id;
  j["task_id"] = r.task_id;
  j["scale_id"] = r.scale_id;
  j["task"] = to_string(r.task);
  j["stimulus_id"] = r.stimulus_id;
  std::visit([&](const auto& v) { j["response"] = v; }, r.response);
  j["background"] = r.background ? json(to_string(*r.background)) : json(nullptr);
  j["presentation_order"] = r.presentation_order;
  j["timestamp"] = r.timestamp;
  return j;
}

RatingRecord rating_from_json(const json& j) {
  if (!j.is_object()) throw InputError(InputError::Kind::schema, 0, "rating record must be an object");
  RatingRecord r;
  r.rater_id = required<std::string>(j, "rater_id");
  r.session_id = required<std::string>(j, "session_id");
  r.task_id = required<std::string>(j, "task_id");
  r.scale_id = required<std::string>(j, "scale_id");
  const auto task = parse_task_kind(required<std::string>(j, "task"));
  if (!task) throw InputError(InputError::Kind::schema, 0, "unknown task kind");
  r.task = *task;
  r.stimulus_id = required<std::string>(j, "stimulus_id");
  const json& resp = j.contains("response") ? j.at("response") : json();
  if (resp.is_number_integer()) {
    r.response = resp.get<int>();
  } else if (resp.is_string() && r.task == TaskKind::preference) {
    r.response = resp.get<std::string>();
  } else {
    throw InputError(InputError::Kind::schema, 0, "rating 'response' must be an integer (or a scale id for preference)");
  }
  if (const auto it = j.find("background"); it != j.end() && !it->is_null()) {
    const auto bg = it->is_string() ? parse_background(it->get<std::string>()) : std::nullopt;
    if (!bg) throw InputError(InputError::Kind::schema, 0, "rating 'background' must be white or gray");
    r.background = bg;
  }
  r.presentation_order = required<int>(j, "presentation_order");
  r.timestamp = j.value("timestamp", std::string());
  return r;
}

std::vector<RatingRecord> read_ratings(std::istream& in) {
  std::vector<RatingRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(rating_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw InputError(InputError::Kind::malformed, lineno, e.what());
    } catch (const InputError& e) {
      throw InputError(e.kind(), lineno, e.what());
    }
  }
  return out;
}

std::vector<RatingRecord> read_ratings_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(InputError::Kind::missing, 0, "cannot open " + path);
  return read_ratings(in);
}

void write_ratings(std::ostream& out, std::span<const RatingRecord> ratings) {
  for (const auto& r : ratings) out << to_json(r).dump() << '\n';
}

std::vector<SwatchAccuracy> swatch_accuracy(std::span<const RatingRecord> ratings, const ToneMap& tones,
                                            const Scale& scale) {
  if (scale.kind != ScaleKind::palette) throw std::invalid_argument("swatch accuracy needs a palette scale");
  const auto K = static_cast<std::size_t>(scale.size());
  std::vector<LabColor> sums(K, LabColor{0, 0, 0});
  std::vector<std::size_t> counts(K, 0);
  for (const auto& r : ratings) {
    if (r.scale_id != scale.scale_id || !is_scored(r)) continue;
    const int idx = r.index();
    if (idx < 1 || idx > scale.size()) {
      throw InputError(InputError::Kind::range, 0,
                       fmt::format("rating {} has response {} outside 1..{}", r.task_id, idx, scale.size()));
    }
    const auto it = tones.find(r.stimulus_id);
    if (it == tones.end()) {
      throw InputError(InputError::Kind::join, 0,
                       fmt::format("rating {} (rater {}) refers to stimulus '{}' with no measured tone", r.task_id,
                                   r.rater_id, r.stimulus_id));
    }
    auto& s = sums[static_cast<std::size_t>(idx - 1)];
    s.L += it->second.L;
    s.a += it->second.a;
    s.b += it->second.b;
    ++counts[static_cast<std::size_t>(idx - 1)];
  }
  std::vector<SwatchAccuracy> out;
  for (std::size_t i = 0; i < K; ++i) {
    SwatchAccuracy acc{static_cast<int>(i + 1), counts[i], std::nullopt, std::nullopt};
    if (counts[i]) {
      const double n = static_cast<double>(counts[i]);
      acc.mean_tone = LabColor{sums[i].L / n, sums[i].a / n, sums[i].b / n};
      acc.delta_e = delta_e(*acc.mean_tone, scale.swatches[i].lab);
    }
    out.push_back(acc);
  }
  return out;
}

Utilization scale_utilization(std::span<const RatingRecord> ratings, const ToneMap& tones, std::string_view scale_id,
                              int K, int n_bins) {
  if (K < 2) throw std::invalid_argument("a scale needs at least 2 options");
  if (n_bins < 2) throw std::invalid_argument("utilization needs at least 2 bins");
  std::vector<std::pair<double, int>> points;
  for (const auto& r : ratings) {
    if (r.scale_id != scale_id || !is_scored(r)) continue;
    const auto it = tones.find(r.stimulus_id);
    if (it == tones.end()) {
      throw InputError(InputError::Kind::join, 0,
                       fmt::format("rating {} refers to stimulus '{}' with no measured tone", r.task_id, r.stimulus_id));
    }
    points.emplace_back(it->second.L, r.index());
  }
  if (points.empty()) throw std::invalid_argument(fmt::format("no ratings on scale {}", scale_id));

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& [L, _] : points) {
    lo = std::min(lo, L);
    hi = std::max(hi, L);
  }
  const double width = (hi - lo) / n_bins;
  Utilization u;
  std::vector<double> sums(static_cast<std::size_t>(n_bins), 0.0);
  for (int b = 0; b < n_bins; ++b) u.bins.push_back({lo + width * b, b + 1 == n_bins ? hi : lo + width * (b + 1), 0, {}});
  for (const auto& [L, resp] : points) {
    int b = width > 0.0 ? static_cast<int>((L - lo) / width) : 0;
    b = std::clamp(b, 0, n_bins - 1);
    sums[static_cast<std::size_t>(b)] += resp;
    ++u.bins[static_cast<std::size_t>(b)].n;
  }
  double mn = std::numeric_limits<double>::infinity(), mx = -mn;
  int occupied = 0;
  for (std::size_t b = 0; b < u.bins.size(); ++b) {
    if (!u.bins[b].n) continue;
    const double m = sums[b] / static_cast<double>(u.bins[b].n);
    u.bins[b].mean_response = m;
    mn = std::min(mn, m);
    mx = std::max(mx, m);
    ++occupied;
  }
  if (occupied < 2) throw std::invalid_argument("utilization needs at least 2 occupied L* bins");
  u.fraction = (mx - mn) / (K - 1);
  return u;
}

IccResult icc_two_way(const std::vector<std::vector<double>>& table) {
  const std::size_t n = table.size();
  if (n < 2) throw std::invalid_argument("ICC needs at least 2 targets");
  const std::size_t k = table[0].size();
  if (k < 2) throw std::invalid_argument("ICC needs at least 2 raters");
  for (const auto& row : table) {
    if (row.size() != k) throw std::invalid_argument("ICC table is incomplete (ragged rows)");
    for (double v : row)
      if (!std::isfinite(v)) throw std::invalid_argument("ICC table is incomplete (missing cells)");
  }

  double grand = 0.0;
  std::vector<double> row_mean(n, 0.0), col_mean(k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      row_mean[i] += table[i][j] / static_cast<double>(k);
      col_mean[j] += table[i][j] / static_cast<double>(n);
      grand += table[i][j];
    }
  grand /= static_cast<double>(n * k);

  double ss_rows = 0.0, ss_cols = 0.0, ss_total = 0.0;
  for (double m : row_mean) ss_rows += (m - grand) * (m - grand);
  ss_rows *= static_cast<double>(k);
  for (double m : col_mean) ss_cols += (m - grand) * (m - grand);
  ss_cols *= static_cast<double>(n);
  for (const auto& row : table)
    for (double v : row) ss_total += (v - grand) * (v - grand);
  // Guard against tiny negative values from cancellation.
  const double ss_error = std::max(0.0, ss_total - ss_rows - ss_cols);

  const double dn = static_cast<double>(n), dk = static_cast<double>(k);
  IccResult r;
  r.n_targets = n;
  r.k_raters = k;
  r.ms_rows = ss_rows / (dn - 1.0);
  r.ms_cols = ss_cols / (dk - 1.0);
  r.ms_error = ss_error / ((dn - 1.0) * (dk - 1.0));
  const double num = r.ms_rows - r.ms_error;
  const double den_single = r.ms_rows + (dk - 1.0) * r.ms_error + dk * (r.ms_cols - r.ms_error) / dn;
  const double den_average = r.ms_rows + (r.ms_cols - r.ms_error) / dn;
  if (ss_total == 0.0 || den_single == 0.0 || den_average == 0.0)
    throw std::domain_error("ICC is undefined for a table without variance");
  r.icc_single = num / den_single;
  r.icc_average = num / den_average;
  return r;
}

std::map<std::string, std::vector<std::vector<double>>> device_tables(
    std::span<const RatingRecord> ratings, const std::map<std::string, StimulusInfo, std::less<>>& stimuli,
    std::string_view scale_id) {
  // device -> subject -> (rater_id, response)
  std::map<std::string, std::map<std::string, std::vector<std::pair<std::string, double>>>> cells;
  std::set<std::string> subjects;
  for (const auto& s : stimuli) subjects.insert(s.second.subject_id);
  for (const auto& r : ratings) {
    if (r.scale_id != scale_id || r.task != TaskKind::image || !std::holds_alternative<int>(r.response)) continue;
    const auto it = stimuli.find(r.stimulus_id);
    if (it == stimuli.end()) {
      throw InputError(InputError::Kind::join, 0,
                       fmt::format("rating {} refers to unknown image '{}'", r.task_id, r.stimulus_id));
    }
    cells[it->second.device][it->second.subject_id].emplace_back(r.rater_id, r.index());
  }

  std::map<std::string, std::vector<std::vector<double>>> out;
  for (auto& [device, by_subject] : cells) {
    std::size_t k = std::numeric_limits<std::size_t>::max();
    for (const auto& subject : subjects) {
      const auto it = by_subject.find(subject);
      k = std::min(k, it == by_subject.end() ? 0 : it->second.size());
    }
    auto& table = out[device];
    if (k == 0) continue;  // some subject was never shown through this device
    for (const auto& subject : subjects) {
      auto& v = by_subject[subject];
      std::stable_sort(v.begin(), v.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
      std::vector<double> row;
      for (std::size_t j = 0; j < k; ++j) row.push_back(v[j].second);
      table.push_back(std::move(row));
    }
  }
  return out;
}

ExclusionResult exclusion_filter(std::span<const RatingRecord> ratings, const ExclusionOptions& options) {
  ExclusionResult result;
  std::set<std::string> failed;
  std::map<std::string, std::string> why;
  for (const auto& r : ratings) {
    if (r.task != TaskKind::attentional) continue;
    const int truth = std::stoi(r.stimulus_id);
    const int resp = r.index();
    if (std::abs(resp - truth) > options.attentional_tolerance && failed.insert(r.rater_id).second) {
      why[r.rater_id] = fmt::format("attentional check {} on {}: answered {} for swatch {}", r.task_id, r.scale_id,
                                    resp, truth);
    }
  }
  result.excluded_raters.assign(failed.begin(), failed.end());

  std::vector<RatingRecord> pool;
  for (const auto& r : ratings) {
    if (failed.count(r.rater_id)) {
      result.excluded.push_back({r, ExclusionReason::attentional, why[r.rater_id]});
    } else {
      pool.push_back(r);
    }
  }

  for (;;) {
    std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
    for (const auto& r : pool)
      if (r.task == TaskKind::image) groups[{r.scale_id, r.stimulus_id}].push_back(r.index());
    std::map<std::pair<std::string, std::string>, std::pair<double, double>> centre;  // median, threshold
    for (const auto& [key, values] : groups) {
      const double med = median_of(values);
      std::vector<double> dev;
      for (double v : values) dev.push_back(std::abs(v - med));
      const double mad = std::max(median_of(dev), options.mad_floor);
      centre[key] = {med, options.mad_multiplier * mad};
    }
    std::vector<RatingRecord> next;
    bool changed = false;
    for (auto& r : pool) {
      if (r.task == TaskKind::image) {
        const auto [med, limit] = centre[{r.scale_id, r.stimulus_id}];
        if (std::abs(r.index() - med) > limit) {
          result.excluded.push_back({r, ExclusionReason::outlier,
                                     fmt::format("response {} to image {} on {}: median {}, limit {}", r.index(),
                                                 r.stimulus_id, r.scale_id, med, limit)});
          changed = true;
          continue;
        }
      }
      next.push_back(std::move(r));
    }
    pool = std::move(next);
    if (!changed) break;
  }
  result.kept = std::move(pool);
  return result;
}

PreferenceSummary preference_summary(std::span<const RatingRecord> ratings,
                                     const std::map<std::string, std::string, std::less<>>& race_of,
                                     const ToneMap& hand_tone, const std::vector<std::string>& races,
                                     std::string_view preferred_scale) {
  PreferenceSummary out;
  out.preferred_scale = std::string(preferred_scale);
  std::map<std::pair<Background, std::string>, std::pair<std::size_t, std::size_t>> tally;  // (yes, n)
  std::vector<double> prefers, L;
  std::vector<std::string> bg;
  bool any = false;
  for (const auto& r : ratings) {
    if (r.task != TaskKind::preference) continue;
    any = true;
    const auto* choice = std::get_if<std::string>(&r.response);
    if (!choice) throw InputError(InputError::Kind::schema, 0, "preference rating " + r.task_id + " has no scale choice");
    if (!r.background) throw InputError(InputError::Kind::schema, 0, "preference rating " + r.task_id + " has no background");
    const bool yes = *choice == preferred_scale;
    if (const auto it = race_of.find(r.rater_id); it != race_of.end()) {
      auto& t = tally[{*r.background, it->second}];
      t.first += yes;
      ++t.second;
    }
    if (const auto it = hand_tone.find(r.rater_id); it != hand_tone.end()) {
      prefers.push_back(yes ? 1.0 : 0.0);
      L.push_back(it->second.L);
      bg.emplace_back(to_string(*r.background));
    }
  }
  if (!any) throw std::invalid_argument("no preference ratings");

  for (Background b : {Background::white, Background::gray}) {
    for (const auto& race : races) {
      PreferenceCell cell{b, race, 0, std::nullopt};
      if (const auto it = tally.find({b, race}); it != tally.end() && it->second.second) {
        cell.n = it->second.second;
        cell.percent_preferring = 100.0 * static_cast<double>(it->second.first) / static_cast<double>(cell.n);
      }
      out.cells.push_back(std::move(cell));
    }
  }

  auto df = std::make_shared<stats::DataFrame>(prefers.size());
  df->add_numeric("prefers", std::move(prefers));
  df->add_numeric("hand_L", std::move(L));
  df->add_categorical("background", std::move(bg));
  out.design = {"prefers",
                {stats::Term::categorical("background", "gray"), stats::Term::continuous("hand_L")},
                std::move(df)};
  return out;
}

}  // namespace skintone
