#include "skintone/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

#include "skintone/errors.hpp"

namespace skintone {

using nlohmann::json;
using Rng = std::mt19937_64;

double typical_skin_hue(double L) { return 38.7147 + 0.920186 * L - 0.0117676 * L * L; }
double typical_skin_chroma(double L) { return -1.29121 + 1.08685 * L - 0.01366 * L * L; }

std::vector<PolarTone> synthetic_skin_corpus(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> lightness(20.0, 72.0);
  std::normal_distribution<double> hue_noise(0.0, 4.0), chroma_noise(0.0, 2.0);
  std::vector<PolarTone> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double L = lightness(rng);
    out.push_back({L, typical_skin_hue(L) + hue_noise(rng), std::max(0.5, typical_skin_chroma(L) + chroma_noise(rng))});
  }
  return out;
}

namespace {

// Covariates of one simulated response, as the analysis will see them.
struct Row {
  std::map<std::string, double> cont;
  std::map<std::string, std::string> cat;
  std::string group;  // subject, study 2 only
};

std::vector<double> linear_predictor(const std::vector<Row>& rows, const PlantedScale& p,
                                     const std::set<std::string>& known_terms) {
  std::map<std::string, double> means;
  for (const auto& [key, beta] : p.effects) {
    const auto colon = key.find(':');
    const auto term = key.substr(0, colon);
    if (!known_terms.count(term))
      throw std::invalid_argument(fmt::format("{}: planted effect '{}' names no simulated covariate", p.scale_id, key));
    if (colon == std::string::npos && !rows.empty()) {
      double s = 0.0;
      for (const auto& r : rows) s += r.cont.at(key);
      means[key] = s / static_cast<double>(rows.size());
    }
  }
  std::vector<double> eta(rows.size(), 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (const auto& [key, beta] : p.effects) {
      const auto colon = key.find(':');
      if (colon == std::string::npos) {
        eta[i] += beta * (rows[i].cont.at(key) - means.at(key));
      } else {
        const auto it = rows[i].cat.find(key.substr(0, colon));
        if (it != rows[i].cat.end() && it->second == key.substr(colon + 1)) eta[i] += beta;
      }
    }
  }
  return eta;
}

double sample_variance(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// Rounding to integer responses adds about 1/12 of variance, so it is taken
// off the Gaussian noise budget.
double tuned_noise_sd(const PlantedScale& p, double signal_variance) {
  if (p.noise_sd) return *p.noise_sd;
  if (!(p.target_r2 > 0.0 && p.target_r2 <= 1.0))
    throw std::invalid_argument(fmt::format("{}: target_r2 must be in (0, 1]", p.scale_id));
  const double v = signal_variance * (1.0 - p.target_r2) / p.target_r2 - 1.0 / 12.0;
  return v > 0.0 ? std::sqrt(v) : 0.0;
}

int to_response(double x, int K) { return std::clamp(static_cast<int>(std::lround(x)), 1, K); }

std::string timestamp(std::int64_t offset_seconds) {
  const std::time_t t = 1685610000 + offset_seconds;  // 2023-06-01 09:00:00 UTC
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Bilateral readings whose midpoint is exactly `tone` and whose distances
// average exactly `mean_distance` over the whole batch.
void bilateral_readings(std::vector<MeasurementRecord>& out, const std::vector<std::pair<std::string, LabColor>>& tones,
                        Site site, double mean_distance, Rng& rng) {
  if (tones.empty()) return;
  std::uniform_real_distribution<double> spread(0.5, 1.5);
  std::normal_distribution<double> g;
  std::vector<double> d(tones.size());
  std::vector<LabColor> u(tones.size());
  for (std::size_t i = 0; i < tones.size(); ++i) {
    d[i] = spread(rng);
    double x = 0, y = 0, z = 0, norm = 0;
    while (norm < 1e-6) {
      x = g(rng), y = g(rng), z = g(rng);
      norm = std::sqrt(x * x + y * y + z * z);
    }
    u[i] = {x / norm, y / norm, z / norm};
  }
  const double scale = mean_distance / (std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size()));
  for (std::size_t i = 0; i < tones.size(); ++i) {
    const double h = 0.5 * d[i] * scale;
    const auto& c = tones[i].second;
    out.push_back({tones[i].first, site, Side::left, LabColor{c.L + h * u[i].L, c.a + h * u[i].a, c.b + h * u[i].b}, {}});
    out.push_back({tones[i].first, site, Side::right, LabColor{c.L - h * u[i].L, c.a - h * u[i].a, c.b - h * u[i].b}, {}});
  }
}

Demographics person(std::string id, const std::string& race, const std::string& gender, std::string age_bin,
                    std::string location) {
  Demographics d;
  d.person_id = std::move(id);
  if (race == "Hispanic") {
    d.race_raw = "White";
    d.ethnicity_raw = "Hispanic or Latino";
  } else {
    d.race_raw = race == "Black" ? "Black or African American"
                 : race == "Other" ? "American Indian or Alaska Native"
                                   : race;
    d.ethnicity_raw = "Not Hispanic or Latino";
  }
  d.race = RaceMapping::defaults().map(d.race_raw, d.ethnicity_raw);
  d.gender = parse_gender(gender);
  d.age_bin = std::move(age_bin);
  d.location = std::move(location);
  return d;
}

template <typename Map>
std::string draw_key(const Map& weights, Rng& rng) {
  std::vector<std::string> keys;
  std::vector<double> w;
  for (const auto& [k, v] : weights) {
    keys.push_back(k);
    w.push_back(v);
  }
  if (keys.empty()) throw std::invalid_argument("empty category mix");
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  return keys[pick(rng)];
}

const PlantedScale* planted_for(const std::vector<PlantedScale>& planted, const std::string& id) {
  for (const auto& p : planted)
    if (p.scale_id == id) return &p;
  return nullptr;
}

json planted_json(const PlantedScale& p, double noise_sd, double signal_variance) {
  return {{"center", p.center}, {"noise_sd", noise_sd}, {"signal_variance", signal_variance},
          {"target_r2", p.target_r2}, {"sigma_b2", p.sigma_b2}, {"effects", p.effects}};
}

const std::vector<std::string> kAgeBins = {"18-29", "30-39", "40-49", "50-59", "60+"};

}  // namespace

SimulatedStudy simulate_study1(const Study1Simulation& sim) {
  SimulatedStudy out;
  Rng rng(sim.seed);
  std::normal_distribution<double> g;
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<std::size_t> age(0, kAgeBins.size() - 1);
  std::uniform_int_distribution<std::size_t> loc(0, sim.locations.empty() ? 0 : sim.locations.size() - 1);

  struct Rater {
    std::string id;
    PolarTone hand;
    Background background;
  };
  std::vector<Rater> raters;
  std::vector<Row> rows;
  const std::size_t total = sim.raters + sim.extra_other_race + sim.extra_unspecified_gender;
  for (std::size_t i = 0; i < total; ++i) {
    const bool other = i >= sim.raters && i < sim.raters + sim.extra_other_race;
    const bool unspecified = i >= sim.raters + sim.extra_other_race;
    const auto race = draw_key(sim.race_mix, rng);
    std::string gender = coin(rng) ? "Male" : "Female";
    if (unspecified) gender = "Unspecified";
    const auto location = sim.locations.empty() ? std::string("MD") : sim.locations[loc(rng)];
    const auto it = sim.race_lightness.find(race);
    const Normal l = it == sim.race_lightness.end() ? Normal{55.0, 6.0} : it->second;
    PolarTone hand{l.mean + l.sd * g(rng), sim.hue.mean + sim.hue.sd * g(rng),
                   std::max(0.5, sim.chroma.mean + sim.chroma.sd * g(rng))};
    hand.L = std::clamp(hand.L, 5.0, 95.0);
    const auto bg = coin(rng) ? Background::white : Background::gray;
    const auto id = fmt::format("R{:04d}", i + 1);
    out.demographics.push_back(person(id, other ? "Other" : race, gender, kAgeBins[age(rng)], location));
    raters.push_back({id, hand, bg});
    Row r;
    r.cont = {{"L", hand.L}, {"hue", hand.hue_deg}, {"chroma", hand.chroma}};
    r.cat = {{"race", std::string(to_string(out.demographics.back().race))},
             {"gender", std::string(to_string(out.demographics.back().gender))},
             {"location", location}};
    r.group = id;
    rows.push_back(std::move(r));
  }

  std::vector<std::pair<std::string, LabColor>> hand_tones, face_tones;
  for (const auto& r : raters) {
    const auto lab = from_polar(r.hand);
    hand_tones.emplace_back(r.id, lab);
    face_tones.emplace_back(r.id, LabColor{lab.L + sim.face_offset.L, lab.a + sim.face_offset.a, lab.b + sim.face_offset.b});
  }
  bilateral_readings(out.measurements, hand_tones, Site::hand, sim.hand_delta_e, rng);
  bilateral_readings(out.measurements, face_tones, Site::face, sim.face_delta_e, rng);

  // Responses per scale, then preference.
  const std::set<std::string> known = {"L", "hue", "chroma", "race", "gender", "background", "location"};
  std::map<std::string, std::vector<int>> responses;
  json truth_scales = json::object();
  for (const auto& scale : sim.scales) {
    const auto* p = planted_for(sim.planted, scale.scale_id);
    if (!p) throw std::invalid_argument(fmt::format("no planted model for scale {}", scale.scale_id));
    auto scale_rows = rows;
    if (scale.kind == ScaleKind::palette)
      for (std::size_t i = 0; i < rows.size(); ++i) scale_rows[i].cat["background"] = std::string(to_string(raters[i].background));
    auto eta = linear_predictor(scale_rows, *p, known);
    const double mean = eta.empty() ? 0.0 : std::accumulate(eta.begin(), eta.end(), 0.0) / static_cast<double>(eta.size());
    const double signal = sample_variance(eta);
    const double sd = tuned_noise_sd(*p, signal);
    auto& resp = responses[scale.scale_id];
    for (double e : eta) resp.push_back(to_response(p->center + e - mean + sd * g(rng), scale.size()));
    truth_scales[scale.scale_id] = planted_json(*p, sd, signal);
  }

  std::vector<int> prefers;
  if (sim.preference) {
    double mean_L = 0.0;
    for (const auto& r : raters) mean_L += r.hand.L;
    if (!raters.empty()) mean_L /= static_cast<double>(raters.size());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const auto& r : raters) {
      const double eta = sim.preference->intercept +
                         (r.background == Background::white ? sim.preference->background_white : 0.0) +
                         sim.preference->hand_L * (r.hand.L - mean_L);
      prefers.push_back(u(rng) < 1.0 / (1.0 + std::exp(-eta)));
    }
  }

  for (std::size_t i = 0; i < raters.size(); ++i) {
    const auto& r = raters[i];
    std::vector<const Scale*> palettes, texts;
    for (const auto& s : sim.scales) (s.kind == ScaleKind::palette ? palettes : texts).push_back(&s);
    std::shuffle(palettes.begin(), palettes.end(), rng);
    int order = 0;
    const auto record = [&](const Scale* s, TaskKind kind, std::variant<int, std::string> response,
                            std::optional<Background> bg) {
      ++order;
      RatingRecord rec;
      rec.rater_id = r.id;
      rec.session_id = "S1-" + r.id;
      rec.task_id = fmt::format("{}-t{:02d}", r.id, order);
      rec.scale_id = s ? s->scale_id : std::string();
      rec.task = kind;
      rec.stimulus_id = kind == TaskKind::self ? r.id : std::string();
      rec.response = std::move(response);
      rec.background = bg;
      rec.presentation_order = order;
      rec.timestamp = timestamp(static_cast<std::int64_t>(i) * 900 + order * 25);
      out.ratings.push_back(std::move(rec));
    };
    for (const auto* s : palettes) record(s, TaskKind::self, responses[s->scale_id][i], r.background);
    if (sim.preference)
      record(nullptr, TaskKind::preference, prefers[i] ? sim.preference_choice_a : sim.preference_choice_b,
             r.background);
    for (const auto* s : texts) record(s, TaskKind::self, responses[s->scale_id][i], std::nullopt);
  }

  out.truth = {{"study", 1},
               {"seed", sim.seed},
               {"raters", sim.raters},
               {"extra_other_race", sim.extra_other_race},
               {"extra_unspecified_gender", sim.extra_unspecified_gender},
               {"hand_delta_e", sim.hand_delta_e},
               {"face_delta_e", sim.face_delta_e},
               {"scales", truth_scales}};
  if (sim.preference)
    out.truth["preference"] = {{"intercept", sim.preference->intercept},
                               {"background_white", sim.preference->background_white},
                               {"hand_L", sim.preference->hand_L},
                               {"preferred", sim.preference_choice_a}};
  return out;
}

SimulatedStudy simulate_study2(const Study2Simulation& sim) {
  SimulatedStudy out;
  out.truth = {{"study", 2}, {"seed", sim.seed}, {"raters_per_scale", sim.raters_per_scale}};
  if (sim.raters_per_scale == 0) return out;
  if (sim.scales.empty()) throw std::invalid_argument("study 2 simulation needs at least one scale");
  if (sim.subjects.empty()) throw std::invalid_argument("study 2 simulation needs subjects");
  if (sim.device_L_offset.empty()) throw std::invalid_argument("study 2 simulation needs devices");

  Rng rng(sim.seed);
  std::normal_distribution<double> g;
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<std::size_t> age(0, kAgeBins.size() - 1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  std::vector<std::pair<std::string, LabColor>> face;
  for (const auto& s : sim.subjects) {
    out.demographics.push_back(person(s.id, s.race, s.gender, "30-39", sim.location));
    face.emplace_back(s.id, from_polar(s.face));
  }
  bilateral_readings(out.measurements, face, Site::face, sim.face_delta_e, rng);

  std::vector<std::string> devices;
  for (const auto& [dev, off] : sim.device_L_offset) devices.push_back(dev);
  std::map<std::string, const ImageStimulus*> image_of;  // subject|device
  for (std::size_t k = 0; k < sim.subjects.size(); ++k) {
    for (const auto& dev : devices) {
      auto lab = face[k].second;
      lab.L += sim.device_L_offset.at(dev);
      out.stimuli.push_back({fmt::format("{}-{}", sim.subjects[k].id, dev), sim.subjects[k].id, dev, lab,
                             fmt::format("images/{}_{}.png", sim.subjects[k].id, dev)});
    }
  }
  for (const auto& st : out.stimuli) image_of[st.subject_id + "|" + st.device] = &st;

  struct Shown {
    std::size_t rater;
    std::size_t subject;
    std::string device;
  };
  struct Rater {
    std::string id;
    const Scale* scale;
    std::vector<Shown> shown;
  };
  std::vector<Rater> raters;
  std::uniform_int_distribution<std::size_t> pick_device(0, devices.size() - 1);
  const std::size_t n = sim.raters_per_scale * sim.scales.size();
  for (std::size_t i = 0; i < n; ++i) {
    Rater r{fmt::format("R{:04d}", i + 1), &sim.scales[i % sim.scales.size()], {}};
    const auto race = draw_key(sim.race_mix, rng);
    out.demographics.push_back(person(r.id, race, coin(rng) ? "Male" : "Female", kAgeBins[age(rng)], sim.location));
    std::vector<std::size_t> order(sim.subjects.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (auto k : order) r.shown.push_back({i, k, devices[pick_device(rng)]});
    raters.push_back(std::move(r));
  }

  // Planted responses, scale by scale.
  const std::set<std::string> known = {"L",           "hue",          "chroma", "subject_race", "subject_gender",
                                       "rater_race", "rater_gender", "device"};
  std::map<std::pair<std::size_t, std::size_t>, int> response;  // (rater, subject)
  json truth_scales = json::object();
  for (const auto& scale : sim.scales) {
    const auto* p = planted_for(sim.planted, scale.scale_id);
    if (!p && !sim.oracle) throw std::invalid_argument(fmt::format("no planted model for scale {}", scale.scale_id));
    std::vector<const Shown*> shown;
    std::vector<Row> rows;
    for (const auto& r : raters) {
      if (r.scale != &scale) continue;
      const auto& rd = out.demographics[sim.subjects.size() + r.shown.front().rater];
      for (const auto& s : r.shown) {
        const auto& subj = sim.subjects[s.subject];
        Row row;
        row.cont = {{"L", subj.face.L}, {"hue", subj.face.hue_deg}, {"chroma", subj.face.chroma}};
        row.cat = {{"subject_race", subj.race},
                   {"subject_gender", subj.gender},
                   {"rater_race", std::string(to_string(rd.race))},
                   {"rater_gender", std::string(to_string(rd.gender))},
                   {"device", s.device}};
        row.group = subj.id;
        rows.push_back(std::move(row));
        shown.push_back(&s);
      }
    }
    const auto extra = [&](const std::string& dev) {
      const auto it = sim.device_noise_sd.find(dev);
      return it == sim.device_noise_sd.end() ? 0.0 : it->second * g(rng);
    };
    if (sim.oracle) {
      for (const auto* s : shown) {
        const auto* st = image_of.at(sim.subjects[s->subject].id + "|" + s->device);
        const int idx = nearest_swatch(st->image_region_lab, scale).index;
        response[{s->rater, s->subject}] = to_response(idx + extra(s->device), scale.size());
      }
      truth_scales[scale.scale_id] = {{"response_model", "oracle"}, {"device_noise_sd", sim.device_noise_sd}};
      continue;
    }
    auto eta = linear_predictor(rows, *p, known);
    std::map<std::string, double> bsub;
    for (const auto& s : sim.subjects) bsub[s.id] = std::sqrt(std::max(0.0, p->sigma_b2)) * g(rng);
    const double mean = eta.empty() ? 0.0 : std::accumulate(eta.begin(), eta.end(), 0.0) / static_cast<double>(eta.size());
    const double signal = sample_variance(eta) + p->sigma_b2;
    const double sd = tuned_noise_sd(*p, signal);
    for (std::size_t j = 0; j < shown.size(); ++j) {
      const auto* s = shown[j];
      double y = p->center + eta[j] - mean + bsub.at(rows[j].group) + sd * g(rng) + extra(s->device);
      if (sim.outlier_rate > 0.0 && u01(rng) < sim.outlier_rate) y = y > 0.5 * (scale.size() + 1) ? 1.0 : scale.size();
      response[{s->rater, s->subject}] = to_response(y, scale.size());
    }
    auto tj = planted_json(*p, sd, signal);
    tj["subject_intercepts"] = bsub;
    tj["device_noise_sd"] = sim.device_noise_sd;
    tj["outlier_rate"] = sim.outlier_rate;
    truth_scales[scale.scale_id] = std::move(tj);
  }

  std::vector<std::string> failed;
  for (std::size_t i = 0; i < raters.size(); ++i) {
    const auto& r = raters[i];
    const int K = r.scale->size();
    // Image tasks with the attentional checks dropped in at random positions.
    std::vector<int> slots(r.shown.size(), -1);
    for (int a : sim.attentional_swatches) {
      std::uniform_int_distribution<std::size_t> pos(0, slots.size());
      slots.insert(slots.begin() + static_cast<std::ptrdiff_t>(pos(rng)), a);
    }
    const bool fails = !sim.attentional_swatches.empty() && u01(rng) < sim.attentional_failure_rate;
    std::uniform_int_distribution<std::size_t> which(0, sim.attentional_swatches.size() ? sim.attentional_swatches.size() - 1 : 0);
    const std::size_t failing_check = which(rng);
    if (fails) failed.push_back(r.id);
    std::size_t next_image = 0, check = 0;
    int order = 0;
    for (int slot : slots) {
      ++order;
      RatingRecord rec;
      rec.rater_id = r.id;
      rec.session_id = "S2-" + r.id;
      rec.task_id = fmt::format("{}-t{:02d}", r.id, order);
      rec.scale_id = r.scale->scale_id;
      rec.background = Background::gray;
      rec.presentation_order = order;
      rec.timestamp = timestamp(static_cast<std::int64_t>(i) * 600 + order * 20);
      if (slot < 0) {
        const auto& s = r.shown[next_image++];
        rec.task = TaskKind::image;
        rec.stimulus_id = image_of.at(sim.subjects[s.subject].id + "|" + s.device)->image_id;
        rec.response = response.at({i, s.subject});
      } else {
        rec.task = TaskKind::attentional;
        rec.stimulus_id = std::to_string(slot);
        int answer = slot;
        if (fails && check == failing_check) {
          answer = slot + 2 <= K ? slot + 2 : slot - 2;
        } else if (u01(rng) < 0.1) {
          answer = std::clamp(slot + (coin(rng) ? 1 : -1), 1, K);
        }
        rec.response = answer;
        ++check;
      }
      out.ratings.push_back(std::move(rec));
    }
  }

  out.truth["scales"] = truth_scales;
  out.truth["attentional_failures"] = failed;
  out.truth["subjects"] = json::array();
  for (const auto& s : sim.subjects)
    out.truth["subjects"].push_back(
        {{"id", s.id}, {"race", s.race}, {"gender", s.gender}, {"L", s.face.L}, {"hue", s.face.hue_deg}, {"chroma", s.face.chroma}});
  return out;
}

// Configuration.

namespace {

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(InputError::Kind::missing, 0, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(InputError::Kind::malformed, 0, fmt::format("{}: {}", path.string(), e.what()));
  }
}

template <typename T>
void opt(const json& j, const char* key, T& into) {
  if (const auto it = j.find(key); it != j.end()) into = it->get<T>();
}

Normal normal_of(const json& j) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("expected [mean, sd]");
  return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<Scale> scales_of(const json& j, const std::filesystem::path& path) {
  std::vector<Scale> out;
  for (const auto& p : j.at("scales")) {
    std::filesystem::path sp = p.get<std::string>();
    if (sp.is_relative()) sp = path.parent_path() / sp;
    out.push_back(load_scale(sp));
  }
  return out;
}

std::vector<PlantedScale> planted_of(const json& j) {
  std::vector<PlantedScale> out;
  if (!j.contains("planted")) return out;
  for (const auto& [id, v] : j.at("planted").items()) {
    PlantedScale p;
    p.scale_id = id;
    opt(v, "center", p.center);
    opt(v, "target_r2", p.target_r2);
    opt(v, "sigma_b2", p.sigma_b2);
    if (v.contains("noise_sd")) p.noise_sd = v.at("noise_sd").get<double>();
    opt(v, "effects", p.effects);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

SimulationConfig load_simulation_config(const std::filesystem::path& path) {
  const auto j = read_json(path);
  try {
    const int study = j.at("study").get<int>();
    if (study == 1) {
      Study1Simulation s;
      opt(j, "seed", s.seed);
      opt(j, "raters", s.raters);
      s.scales = scales_of(j, path);
      s.planted = planted_of(j);
      opt(j, "race_mix", s.race_mix);
      if (j.contains("race_lightness"))
        for (const auto& [k, v] : j.at("race_lightness").items()) s.race_lightness[k] = normal_of(v);
      if (j.contains("hue")) s.hue = normal_of(j.at("hue"));
      if (j.contains("chroma")) s.chroma = normal_of(j.at("chroma"));
      if (j.contains("face_offset")) {
        const auto& f = j.at("face_offset");
        s.face_offset = {f.at(0).get<double>(), f.at(1).get<double>(), f.at(2).get<double>()};
      }
      if (j.contains("bilateral_delta_e")) {
        opt(j.at("bilateral_delta_e"), "hand", s.hand_delta_e);
        opt(j.at("bilateral_delta_e"), "face", s.face_delta_e);
      }
      opt(j, "locations", s.locations);
      if (j.contains("preference")) {
        const auto& p = j.at("preference");
        PlantedPreference pp;
        opt(p, "intercept", pp.intercept);
        opt(p, "background_white", pp.background_white);
        opt(p, "hand_L", pp.hand_L);
        s.preference = pp;
        if (p.contains("choices")) {
          s.preference_choice_a = p.at("choices").at(0).get<std::string>();
          s.preference_choice_b = p.at("choices").at(1).get<std::string>();
        }
      }
      opt(j, "extra_other_race", s.extra_other_race);
      opt(j, "extra_unspecified_gender", s.extra_unspecified_gender);
      return s;
    }
    if (study == 2) {
      Study2Simulation s;
      opt(j, "seed", s.seed);
      opt(j, "raters_per_scale", s.raters_per_scale);
      s.scales = scales_of(j, path);
      s.planted = planted_of(j);
      for (const auto& v : j.at("subjects")) {
        s.subjects.push_back({v.at("id").get<std::string>(), v.at("race").get<std::string>(),
                              v.at("gender").get<std::string>(),
                              {v.at("L").get<double>(), v.at("hue").get<double>(), v.at("chroma").get<double>()}});
      }
      opt(j, "device_L_offset", s.device_L_offset);
      opt(j, "device_noise_sd", s.device_noise_sd);
      opt(j, "race_mix", s.race_mix);
      opt(j, "face_delta_e", s.face_delta_e);
      opt(j, "attentional_swatches", s.attentional_swatches);
      opt(j, "attentional_failure_rate", s.attentional_failure_rate);
      opt(j, "outlier_rate", s.outlier_rate);
      opt(j, "location", s.location);
      std::string model = "linear";
      opt(j, "response_model", model);
      if (model != "linear" && model != "oracle")
        throw InputError(InputError::Kind::range, 0, "response_model must be 'linear' or 'oracle'");
      s.oracle = model == "oracle";
      return s;
    }
    throw InputError(InputError::Kind::range, 0, fmt::format("{}: study must be 1 or 2", path.string()));
  } catch (const json::exception& e) {
    throw InputError(InputError::Kind::schema, 0, fmt::format("{}: {}", path.string(), e.what()));
  }
}

SimulatedStudy simulate_study(SimulationConfig config, std::optional<std::size_t> n,
                              std::optional<std::uint64_t> seed) {
  return std::visit(
      [&](auto& c) -> SimulatedStudy {
        if (seed) c.seed = *seed;
        if constexpr (std::is_same_v<std::decay_t<decltype(c)>, Study1Simulation>) {
          if (n) c.raters = *n;
          if (n && *n == 0) c.extra_other_race = c.extra_unspecified_gender = 0;
          return simulate_study1(c);
        } else {
          if (n) c.raters_per_scale = *n;
          return simulate_study2(c);
        }
      },
      config);
}

std::vector<std::filesystem::path> write_simulation(const SimulatedStudy& study, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  const auto open = [&](const char* name) {
    files.push_back(dir / name);
    return std::ofstream(files.back(), std::ios::binary);
  };
  {
    auto out = open("measurements.csv");
    write_measurements(out, study.measurements);
  }
  {
    auto out = open("demographics.csv");
    write_demographics(out, study.demographics);
  }
  {
    auto out = open("ratings.jsonl");
    write_ratings(out, study.ratings);
  }
  if (study.truth.value("study", 1) == 2) {
    auto out = open("stimuli.csv");
    write_stimuli(out, study.stimuli);
  }
  {
    auto out = open("truth.json");
    out << study.truth.dump(2) << '\n';
  }
  return files;
}

}  // namespace skintone
