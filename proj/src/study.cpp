#include <algorithm>
#include <memory>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "skintone/errors.hpp"
#include "skintone/study.hpp"

namespace skintone {

namespace {

using DemoMap = std::map<std::string, const Demographics*, std::less<>>;

DemoMap index_people(const std::vector<Demographics>& people) {
  DemoMap m;
  for (const auto& d : people) m.emplace(d.person_id, &d);
  return m;
}

ExclusionCounts count_exclusions(const ExclusionResult& r) {
  ExclusionCounts c;
  c.raters_excluded = r.excluded_raters.size();
  for (const auto& e : r.excluded)
    (e.reason == ExclusionReason::attentional ? c.responses_excluded_attentional : c.responses_excluded_outlier) += 1;
  c.responses_kept = r.kept.size();
  return c;
}

struct TermPlan {
  std::vector<stats::Term> terms;
  std::vector<std::string> notes;
};

// A categorical term enters the model only with two or more observed levels.
// A configured reference that never occurs falls back to the first level.
void add_categorical(TermPlan& plan, const stats::DataFrame& df, const std::string& name, const std::string& reference,
                     std::string_view scale_id) {
  const auto levels = stats::levels_of(df.categorical(name));
  if (levels.size() < 2) {
    plan.notes.push_back(fmt::format("{}: '{}' has {} level(s) and is left out", scale_id, name, levels.size()));
    return;
  }
  if (std::find(levels.begin(), levels.end(), reference) == levels.end()) {
    plan.notes.push_back(
        fmt::format("{}: reference '{}' for '{}' not observed, using '{}'", scale_id, reference, name, levels.front()));
    plan.terms.push_back(stats::Term::categorical(name, levels.front()));
    return;
  }
  plan.terms.push_back(stats::Term::categorical(name, reference));
}

std::string first_level(const std::vector<std::string>& v) {
  const auto levels = stats::levels_of(v);
  return levels.empty() ? std::string() : levels.front();
}

void push_utilization(std::vector<UtilizationRow>& out, std::vector<std::string>& notes,
                      std::span<const RatingRecord> ratings, const ToneMap& tones, const Scale& scale,
                      const std::string& group, int bins) {
  try {
    out.push_back({scale.scale_id, group, scale_utilization(ratings, tones, scale.scale_id, scale.size(), bins)});
  } catch (const std::invalid_argument& e) {
    notes.push_back(fmt::format("{} utilization ({}): {}", scale.scale_id, group, e.what()));
  }
}

void push_accuracy(std::vector<AccuracyRow>& out, std::span<const RatingRecord> ratings, const ToneMap& tones,
                   const Scale& scale, const std::string& group) {
  for (auto& a : swatch_accuracy(ratings, tones, scale)) out.push_back({scale.scale_id, group, std::move(a)});
}

}  // namespace

Study1Report run_study1(std::span<const MeasurementRecord> measurements, std::span<const Demographics> demographics,
                        std::span<const RatingRecord> ratings, const Study1Config& config) {
  Study1Report rep;
  rep.raters_in = demographics.size();
  const auto filtered = filter_demographics(demographics);
  rep.removed_other_race = filtered.removed_other_race;
  rep.removed_unspecified_gender = filtered.removed_unspecified_gender;
  const auto people = index_people(filtered.kept);

  const auto excl = exclusion_filter(ratings, config.exclusion);
  rep.exclusions = count_exclusions(excl);

  for (Site s : {Site::hand, Site::face}) {
    try {
      auto& slot = s == Site::hand ? rep.delta_e_min_hand : rep.delta_e_min_face;
      slot = expected_min_error(measurements, s);
    } catch (const InputError& e) {
      rep.diagnostics.push_back(fmt::format("delta E min ({}): {}", to_string(s), e.what()));
    }
  }

  const auto bilateral = average_bilateral(measurements);
  ToneMap tone;
  std::map<std::string, PolarTone, std::less<>> polar;
  for (const auto& t : bilateral.tones) {
    if (const auto& c = t.at(config.tone_site)) {
      tone.emplace(t.subject_id, *c);
      polar.emplace(t.subject_id, *t.polar_at(config.tone_site));
    }
  }

  for (const auto& scale : config.scales) {
    std::vector<RatingRecord> rows;
    std::size_t no_person = 0, no_tone = 0;
    for (const auto& r : excl.kept) {
      if (r.task != TaskKind::self || r.scale_id != scale.scale_id) continue;
      if (!people.count(r.rater_id)) {
        ++no_person;
        continue;
      }
      if (!tone.count(r.rater_id)) {
        ++no_tone;
        continue;
      }
      rows.push_back(r);
    }
    if (no_person)
      rep.diagnostics.push_back(
          fmt::format("{}: {} rating(s) from raters without kept demographics skipped", scale.scale_id, no_person));
    if (no_tone)
      rep.diagnostics.push_back(fmt::format("{}: {} rating(s) from raters without a complete {} measurement skipped",
                                            scale.scale_id, no_tone, to_string(config.tone_site)));
    if (rows.empty()) {
      rep.diagnostics.push_back(fmt::format("{}: no usable ratings", scale.scale_id));
      continue;
    }

    const bool palette = scale.kind == ScaleKind::palette;
    auto df = std::make_shared<stats::DataFrame>(rows.size());
    std::vector<double> y, L, hue, chroma;
    std::vector<std::string> race, gender, background, location;
    for (const auto& r : rows) {
      const auto* d = people.at(r.rater_id);
      const auto& p = polar.at(r.rater_id);
      y.push_back(r.index());
      L.push_back(p.L);
      hue.push_back(p.hue_deg);
      chroma.push_back(p.chroma);
      race.emplace_back(to_string(d->race));
      gender.emplace_back(to_string(d->gender));
      background.emplace_back(r.background ? to_string(*r.background) : "none");
      location.push_back(d->location);
    }
    df->add_numeric("response", y);
    df->add_numeric("L", L);
    df->add_numeric("hue", hue);
    df->add_numeric("chroma", chroma);
    df->add_categorical("race", race);
    df->add_categorical("gender", gender);
    df->add_categorical("background", background);
    df->add_categorical("location", location);

    TermPlan plan;
    plan.terms = {stats::Term::continuous("L"), stats::Term::continuous("hue"), stats::Term::continuous("chroma")};
    add_categorical(plan, *df, "race", config.race_reference, scale.scale_id);
    add_categorical(plan, *df, "gender", config.gender_reference, scale.scale_id);
    if (palette) add_categorical(plan, *df, "background", config.background_reference, scale.scale_id);
    add_categorical(plan, *df, "location", config.location_reference.value_or(first_level(location)), scale.scale_id);
    rep.diagnostics.insert(rep.diagnostics.end(), plan.notes.begin(), plan.notes.end());

    ScaleModel m;
    m.scale_id = scale.scale_id;
    m.n = rows.size();
    const stats::DesignSpec full{"response", plan.terms, df};
    m.full_terms = full.term_names();
    try {
      if (config.stepwise) {
        auto sw = stats::stepwise_bic(full);
        m.fit = std::move(sw.fit);
        m.trace = std::move(sw.trace);
      } else {
        m.fit = stats::ols_fit(full);
      }
      if (m.fit.find("L")) m.l_star_ratios = stats::l_star_ratios(m.fit, "L");
      rep.models.push_back(std::move(m));
    } catch (const std::exception& e) {
      rep.diagnostics.push_back(fmt::format("{}: model not fitted: {}", scale.scale_id, e.what()));
    }

    if (palette) {
      push_accuracy(rep.accuracy, rows, tone, scale, "all");
      push_utilization(rep.utilization, rep.diagnostics, rows, tone, scale, "all", config.utilization_bins);
      for (Background b : {Background::white, Background::gray}) {
        std::vector<RatingRecord> sub;
        for (const auto& r : rows)
          if (r.background == b) sub.push_back(r);
        if (sub.empty()) {
          rep.diagnostics.push_back(fmt::format("{}: no ratings on the {} background", scale.scale_id, to_string(b)));
          continue;
        }
        push_accuracy(rep.accuracy, sub, tone, scale, std::string(to_string(b)));
        push_utilization(rep.utilization, rep.diagnostics, sub, tone, scale, std::string(to_string(b)),
                         config.utilization_bins);
      }
    } else {
      push_utilization(rep.utilization, rep.diagnostics, rows, tone, scale, "all", config.utilization_bins);
    }
  }

  std::vector<RatingRecord> prefs;
  for (const auto& r : excl.kept)
    if (r.task == TaskKind::preference && people.count(r.rater_id)) prefs.push_back(r);
  if (!prefs.empty()) {
    std::map<std::string, std::string, std::less<>> race_of;
    for (const auto& [id, d] : people) race_of.emplace(id, std::string(to_string(d->race)));
    const std::vector<std::string> races = {"Asian", "Black", "Hispanic", "White"};
    rep.preference = preference_summary(prefs, race_of, tone, races, config.preferred_scale);
    ScaleModel pm;
    pm.scale_id = "preference";
    pm.n = rep.preference->design.data->rows();
    pm.full_terms = rep.preference->design.term_names();
    try {
      auto sw = stats::stepwise_bic(rep.preference->design, [](const stats::DesignSpec& s) {
        return stats::logistic_fit(s);
      });
      pm.fit = std::move(sw.fit);
      pm.trace = std::move(sw.trace);
      rep.preference_model = std::move(pm);
    } catch (const std::exception& e) {
      rep.diagnostics.push_back(fmt::format("preference model not fitted: {}", e.what()));
    }
  }
  return rep;
}

Study2Report run_study2(std::span<const ImageStimulus> stimuli, std::span<const MeasurementRecord> subject_measurements,
                        std::span<const Demographics> demographics, std::span<const RatingRecord> ratings,
                        const Study2Config& config) {
  Study2Report rep;
  rep.raters_in = demographics.size();
  const auto filtered = filter_demographics(demographics);
  rep.removed_other_race = filtered.removed_other_race;
  rep.removed_unspecified_gender = filtered.removed_unspecified_gender;
  const auto people = index_people(filtered.kept);

  const auto excl = exclusion_filter(ratings, config.exclusion);
  rep.exclusions = count_exclusions(excl);

  const auto bilateral = average_bilateral(subject_measurements);
  std::map<std::string, std::pair<LabColor, PolarTone>, std::less<>> subject_tone;
  for (const auto& t : bilateral.tones)
    if (const auto& c = t.at(config.tone_site)) subject_tone.emplace(t.subject_id, std::pair{*c, *t.polar_at(config.tone_site)});

  std::map<std::string, const ImageStimulus*, std::less<>> image;
  std::map<std::string, StimulusInfo, std::less<>> info;
  ToneMap image_subject_tone, image_region;
  for (const auto& s : stimuli) {
    image.emplace(s.image_id, &s);
    info.emplace(s.image_id, StimulusInfo{s.subject_id, s.device});
    image_region.emplace(s.image_id, s.image_region_lab);
    if (const auto it = subject_tone.find(s.subject_id); it != subject_tone.end())
      image_subject_tone.emplace(s.image_id, it->second.first);
  }

  for (const auto& scale : config.scales) {
    std::vector<RatingRecord> rows;
    std::size_t no_image = 0, no_tone = 0, no_subject = 0, no_rater = 0;
    for (const auto& r : excl.kept) {
      if (r.task != TaskKind::image || r.scale_id != scale.scale_id) continue;
      const auto it = image.find(r.stimulus_id);
      if (it == image.end()) {
        ++no_image;
        continue;
      }
      const auto& sid = it->second->subject_id;
      if (!subject_tone.count(sid)) {
        ++no_tone;
        continue;
      }
      if (!people.count(sid)) {
        ++no_subject;
        continue;
      }
      if (!people.count(r.rater_id)) {
        ++no_rater;
        continue;
      }
      rows.push_back(r);
    }
    const auto note = [&](std::size_t n, std::string_view why) {
      if (n) rep.diagnostics.push_back(fmt::format("{}: {} rating(s) skipped: {}", scale.scale_id, n, why));
    };
    note(no_image, "unknown image");
    note(no_tone, "subject has no complete measurement");
    note(no_subject, "subject lacks kept demographics");
    note(no_rater, "rater lacks kept demographics");
    if (rows.empty()) {
      rep.diagnostics.push_back(fmt::format("{}: no usable ratings", scale.scale_id));
      continue;
    }

    auto df = std::make_shared<stats::DataFrame>(rows.size());
    std::vector<double> y, L, hue, chroma;
    std::vector<std::string> srace, sgender, rrace, rgender, device, subject;
    for (const auto& r : rows) {
      const auto* st = image.at(r.stimulus_id);
      const auto& p = subject_tone.at(st->subject_id).second;
      const auto* sd = people.at(st->subject_id);
      const auto* rd = people.at(r.rater_id);
      y.push_back(r.index());
      L.push_back(p.L);
      hue.push_back(p.hue_deg);
      chroma.push_back(p.chroma);
      srace.emplace_back(to_string(sd->race));
      sgender.emplace_back(to_string(sd->gender));
      rrace.emplace_back(to_string(rd->race));
      rgender.emplace_back(to_string(rd->gender));
      device.push_back(st->device);
      subject.push_back(st->subject_id);
    }
    df->add_numeric("response", y);
    df->add_numeric("L", L);
    df->add_numeric("hue", hue);
    df->add_numeric("chroma", chroma);
    df->add_categorical("subject_race", srace);
    df->add_categorical("subject_gender", sgender);
    df->add_categorical("rater_race", rrace);
    df->add_categorical("rater_gender", rgender);
    df->add_categorical("device", device);
    df->add_categorical("subject", subject);

    TermPlan plan;
    plan.terms = {stats::Term::continuous("L"), stats::Term::continuous("hue"), stats::Term::continuous("chroma")};
    add_categorical(plan, *df, "subject_race", config.subject_race_reference, scale.scale_id);
    add_categorical(plan, *df, "subject_gender", config.gender_reference, scale.scale_id);
    add_categorical(plan, *df, "rater_race", config.rater_race_reference, scale.scale_id);
    add_categorical(plan, *df, "rater_gender", config.gender_reference, scale.scale_id);
    add_categorical(plan, *df, "device", config.device_reference, scale.scale_id);
    rep.diagnostics.insert(rep.diagnostics.end(), plan.notes.begin(), plan.notes.end());

    try {
      MixedScaleModel m;
      m.scale_id = scale.scale_id;
      m.n = rows.size();
      m.fit = stats::lmm_fit({"response", plan.terms, df}, "subject", config.mixed);
      if (m.fit.fixed.find("L")) m.l_star_ratios = stats::l_star_ratios(m.fit.fixed, "L");
      for (const auto& d : m.fit.diagnostics) rep.diagnostics.push_back(fmt::format("{}: {}", scale.scale_id, d));
      rep.models.push_back(std::move(m));
    } catch (const std::exception& e) {
      rep.diagnostics.push_back(fmt::format("{}: mixed model not fitted: {}", scale.scale_id, e.what()));
    }

    for (const auto& [dev, table] : device_tables(rows, info, scale.scale_id)) {
      if (table.size() < 2 || table.front().size() < 2) {
        rep.diagnostics.push_back(fmt::format("{} device {}: too few complete ratings for an ICC", scale.scale_id, dev));
        continue;
      }
      try {
        auto icc = icc_two_way(table);
        icc.scale_id = scale.scale_id;
        icc.device = dev;
        rep.icc.push_back(std::move(icc));
      } catch (const std::exception& e) {
        rep.diagnostics.push_back(fmt::format("{} device {}: {}", scale.scale_id, dev, e.what()));
      }
    }

    push_accuracy(rep.accuracy, rows, image_subject_tone, scale, "all");
    push_utilization(rep.utilization, rep.diagnostics, rows, image_subject_tone, scale, "all", config.utilization_bins);
    std::set<std::string> devices(device.begin(), device.end());
    for (const auto& dev : devices) {
      std::vector<RatingRecord> sub;
      for (const auto& r : rows)
        if (image.at(r.stimulus_id)->device == dev) sub.push_back(r);
      push_accuracy(rep.device_accuracy, sub, image_region, scale, dev);
    }
  }
  return rep;
}

}  // namespace skintone
