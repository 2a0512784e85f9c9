#include "skintone/survey.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "skintone/errors.hpp"

namespace skintone {

using nlohmann::json;

namespace {

constexpr std::string_view kPromptSelf =
    "Hold your hand beside the screen and pick the number of the swatch closest to your skin color.";
constexpr std::string_view kPromptImage =
    "Pick the number of the swatch that best matches the skin of the person in the photo.";
constexpr std::string_view kPromptAttentional = "Pick the number of the swatch that matches the color patch shown.";
constexpr std::string_view kPromptPreference =
    "Which of the color scales you just used would you rather use to describe your own skin?";
constexpr std::string_view kPromptText = "Choose the statement that best describes how your skin reacts to the sun.";

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// SplitMix64, so a session's seed depends only on the service seed and the
// session's ordinal and survives restarts.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t ordinal) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (ordinal + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void insert_checks(std::vector<PlannedTask>& block, const std::vector<int>& swatches, const std::string& scale_id,
                   std::mt19937_64& rng) {
  for (int s : swatches) {
    std::uniform_int_distribution<std::size_t> pos(0, block.size());
    block.insert(block.begin() + static_cast<std::ptrdiff_t>(pos(rng)),
                 PlannedTask{{}, TaskKind::attentional, scale_id, std::to_string(s)});
  }
}

}  // namespace

std::string gray_background_hex() { return to_hex(lab_to_srgb({50.0, 0.0, 0.0}).rgb); }
std::string background_hex(Background b) { return b == Background::white ? "#FFFFFF" : gray_background_hex(); }

json to_json(const SessionPlan& p) {
  json tasks = json::array();
  for (const auto& t : p.tasks)
    tasks.push_back({{"task_id", t.task_id}, {"task", to_string(t.kind)}, {"scale_id", t.scale_id}, {"stimulus_id", t.stimulus_id}});
  return {{"session_id", p.session_id}, {"rater_id", p.rater_id},       {"study", p.study},
          {"background", to_string(p.background)}, {"scale_order", p.scale_order}, {"seed", p.seed},
          {"tasks", tasks}};
}

SessionPlan plan_from_json(const json& j) {
  try {
    SessionPlan p;
    p.session_id = j.at("session_id").get<std::string>();
    p.rater_id = j.at("rater_id").get<std::string>();
    p.study = j.at("study").get<int>();
    const auto bg = parse_background(j.at("background").get<std::string>());
    if (!bg) throw InputError(InputError::Kind::schema, 0, "session plan has an unknown background");
    p.background = *bg;
    p.scale_order = j.at("scale_order").get<std::vector<std::string>>();
    p.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& t : j.at("tasks")) {
      const auto kind = parse_task_kind(t.at("task").get<std::string>());
      if (!kind) throw InputError(InputError::Kind::schema, 0, "session plan has an unknown task kind");
      p.tasks.push_back({t.at("task_id").get<std::string>(), *kind, t.at("scale_id").get<std::string>(),
                         t.at("stimulus_id").get<std::string>()});
    }
    return p;
  } catch (const json::exception& e) {
    throw InputError(InputError::Kind::schema, 0, std::string("session plan: ") + e.what());
  }
}

SessionPlan make_plan(const SurveyAssets& assets, const SurveyOptions& options, const std::string& session_id,
                      const std::string& rater_id, int study, std::uint64_t seed) {
  if (study != 1 && study != 2) throw SurveyError(SurveyError::Kind::invalid, fmt::format("unknown study {}", study));
  if (assets.palette_scales.empty()) throw SurveyError(SurveyError::Kind::invalid, "no palette scales loaded");
  std::mt19937_64 rng(seed);
  SessionPlan p;
  p.session_id = session_id;
  p.rater_id = rater_id;
  p.study = study;
  p.seed = seed;
  for (const auto& s : assets.palette_scales) p.scale_order.push_back(s.scale_id);
  std::shuffle(p.scale_order.begin(), p.scale_order.end(), rng);

  if (study == 1) {
    p.background = std::bernoulli_distribution(0.5)(rng) ? Background::white : Background::gray;
    for (const auto& id : p.scale_order) {
      std::vector<PlannedTask> block{{{}, TaskKind::self, id, rater_id}};
      insert_checks(block, options.study1_attentional, id, rng);
      p.tasks.insert(p.tasks.end(), block.begin(), block.end());
    }
    if (p.scale_order.size() > 1) p.tasks.push_back({{}, TaskKind::preference, {}, {}});
    if (assets.text_scale) p.tasks.push_back({{}, TaskKind::self, assets.text_scale->scale_id, rater_id});
  } else {
    if (assets.stimuli.empty()) throw SurveyError(SurveyError::Kind::invalid, "no image stimuli loaded");
    p.background = options.study2_background;
    std::map<std::string, std::vector<std::string>> images;  // subject -> image ids, sorted
    for (const auto& s : assets.stimuli) images[s.subject_id].push_back(s.image_id);
    std::vector<std::string> subjects;
    for (auto& [subject, ids] : images) {
      std::sort(ids.begin(), ids.end());
      subjects.push_back(subject);
    }
    std::shuffle(subjects.begin(), subjects.end(), rng);
    const auto& scale = p.scale_order.front();
    std::vector<PlannedTask> block;
    for (const auto& subject : subjects) {
      const auto& ids = images.at(subject);
      std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
      block.push_back({{}, TaskKind::image, scale, ids[pick(rng)]});
    }
    insert_checks(block, options.study2_attentional, scale, rng);
    p.tasks = std::move(block);
  }
  for (std::size_t i = 0; i < p.tasks.size(); ++i) p.tasks[i].task_id = fmt::format("{}-t{:02d}", session_id, i + 1);
  return p;
}

SurveyService::SurveyService(SurveyAssets assets, SurveyOptions options, std::filesystem::path store_dir, Clock clock)
    : assets_(std::move(assets)),
      options_(std::move(options)),
      sessions_path_(store_dir / "sessions.jsonl"),
      ratings_path_(store_dir / "ratings.jsonl"),
      clock_(clock ? std::move(clock) : Clock(utc_now)) {
  std::filesystem::create_directories(store_dir);
  replay();
  sessions_out_.open(sessions_path_, std::ios::app | std::ios::binary);
  ratings_out_.open(ratings_path_, std::ios::app | std::ios::binary);
  if (!sessions_out_ || !ratings_out_) throw std::runtime_error("cannot open the survey store in " + store_dir.string());
}

void SurveyService::replay() {
  if (std::ifstream in(sessions_path_); in) {
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw InputError(InputError::Kind::malformed, n, std::string("session store: ") + e.what());
      }
      auto plan = plan_from_json(j);
      const auto id = plan.session_id;
      if (!sessions_.emplace(id, State{std::move(plan), {}}).second)
        throw InputError(InputError::Kind::duplicate, n, "session " + id + " stored twice");
    }
  }
  if (std::ifstream in(ratings_path_); in) {
    for (auto& r : read_ratings(in)) {
      const auto it = sessions_.find(r.session_id);
      if (it == sessions_.end())
        throw InputError(InputError::Kind::join, 0, "stored rating " + r.task_id + " has no session");
      auto& s = it->second;
      if (s.answers.size() >= s.plan.tasks.size() || s.plan.tasks[s.answers.size()].task_id != r.task_id)
        throw InputError(InputError::Kind::join, 0, "stored rating " + r.task_id + " is out of plan order");
      s.answers.push_back(std::move(r));
    }
  }
}

SessionPlan SurveyService::create_session(const std::string& rater_id, int study, std::optional<std::uint64_t> seed) {
  if (rater_id.empty()) throw SurveyError(SurveyError::Kind::invalid, "rater_id is empty");
  std::lock_guard lock(mutex_);
  const auto ordinal = sessions_.size();
  const auto id = fmt::format("s{:06d}", ordinal + 1);
  auto plan = make_plan(assets_, options_, id, rater_id, study, seed ? *seed : derive_seed(options_.seed, ordinal));
  sessions_out_ << to_json(plan).dump() << '\n' << std::flush;
  sessions_.emplace(id, State{plan, {}});
  return plan;
}

const Scale* SurveyService::find_scale(std::string_view id) const {
  for (const auto& s : assets_.palette_scales)
    if (s.scale_id == id) return &s;
  if (assets_.text_scale && assets_.text_scale->scale_id == id) return &*assets_.text_scale;
  return nullptr;
}

json SurveyService::task_view(const State& s, std::size_t i) const {
  const auto& t = s.plan.tasks[i];
  json v = {{"task_id", t.task_id}, {"kind", to_string(t.kind)}, {"scale_id", t.scale_id},
            {"position", i + 1},    {"total", s.plan.tasks.size()}};
  const Scale* scale = find_scale(t.scale_id);
  const bool palette = t.kind == TaskKind::preference || (scale && scale->kind == ScaleKind::palette);
  if (palette) {
    v["background"] = to_string(s.plan.background);
    v["background_hex"] = background_hex(s.plan.background);
  }
  if (scale && scale->kind == ScaleKind::palette) {
    json sw = json::array();
    for (const auto& x : scale->swatches) sw.push_back({{"index", x.index}, {"hex", x.srgb_hex}});
    v["swatches"] = sw;
  } else if (scale) {
    json items = json::array();
    for (const auto& x : scale->items) items.push_back({{"index", x.index}, {"text", x.text}});
    v["items"] = items;
  }
  switch (t.kind) {
    case TaskKind::self: v["prompt"] = scale && scale->kind == ScaleKind::text ? kPromptText : kPromptSelf; break;
    case TaskKind::image:
      v["prompt"] = kPromptImage;
      v["image"] = "/images/" + t.stimulus_id;
      break;
    case TaskKind::attentional:
      v["prompt"] = kPromptAttentional;
      v["target_hex"] = scale->swatch(std::stoi(t.stimulus_id)).srgb_hex;
      break;
    case TaskKind::preference:
      v["prompt"] = kPromptPreference;
      v["choices"] = s.plan.scale_order;
      break;
  }
  return v;
}

json SurveyService::next_task(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw SurveyError(SurveyError::Kind::not_found, "unknown session " + session_id);
  const auto& s = it->second;
  if (s.answers.size() == s.plan.tasks.size()) return {{"session_id", session_id}, {"complete", true}};
  return {{"session_id", session_id}, {"complete", false}, {"task", task_view(s, s.answers.size())}};
}

RatingRecord SurveyService::submit_response(const std::string& session_id, const std::string& task_id,
                                            const json& response) {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw SurveyError(SurveyError::Kind::not_found, "unknown session " + session_id);
  auto& s = it->second;
  const auto pos = std::find_if(s.plan.tasks.begin(), s.plan.tasks.end(),
                                [&](const PlannedTask& t) { return t.task_id == task_id; });
  if (pos == s.plan.tasks.end()) throw SurveyError(SurveyError::Kind::not_found, "unknown task " + task_id);
  const auto idx = static_cast<std::size_t>(pos - s.plan.tasks.begin());
  if (idx < s.answers.size()) throw SurveyError(SurveyError::Kind::conflict, "task " + task_id + " already answered");
  if (idx > s.answers.size()) throw SurveyError(SurveyError::Kind::conflict, "task " + task_id + " is not the current task");

  const auto& t = *pos;
  RatingRecord r;
  r.rater_id = s.plan.rater_id;
  r.session_id = session_id;
  r.task_id = task_id;
  r.scale_id = t.scale_id;
  r.task = t.kind;
  r.presentation_order = static_cast<int>(idx + 1);
  if (t.kind == TaskKind::preference) {
    if (!response.is_string()) throw SurveyError(SurveyError::Kind::invalid, "preference answer must be a scale id");
    const auto choice = response.get<std::string>();
    if (std::find(s.plan.scale_order.begin(), s.plan.scale_order.end(), choice) == s.plan.scale_order.end())
      throw SurveyError(SurveyError::Kind::invalid, "'" + choice + "' is not one of the offered scales");
    r.response = choice;
    r.background = s.plan.background;
  } else {
    const Scale* scale = find_scale(t.scale_id);
    if (!response.is_number_integer()) throw SurveyError(SurveyError::Kind::invalid, "answer must be an integer");
    const auto v = response.get<long long>();
    if (v < 1 || v > scale->size())
      throw SurveyError(SurveyError::Kind::invalid, fmt::format("answer {} is outside 1..{}", v, scale->size()));
    r.response = static_cast<int>(v);
    r.stimulus_id = t.stimulus_id;
    if (scale->kind == ScaleKind::palette) r.background = s.plan.background;
  }
  r.timestamp = clock_();
  ratings_out_ << to_json(r).dump() << '\n' << std::flush;
  if (!ratings_out_) throw std::runtime_error("rating store write failed");
  s.answers.push_back(r);
  return r;
}

SessionPlan SurveyService::plan(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw SurveyError(SurveyError::Kind::not_found, "unknown session " + session_id);
  return it->second.plan;
}

std::vector<RatingRecord> SurveyService::answers(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw SurveyError(SurveyError::Kind::not_found, "unknown session " + session_id);
  return it->second.answers;
}

std::size_t SurveyService::session_count() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

json SurveyService::scales_json() const {
  json scales = json::array();
  const auto add = [&](const Scale& s) {
    std::ostringstream os;
    write_scale(os, s);
    scales.push_back(json::parse(os.str()));
  };
  for (const auto& s : assets_.palette_scales) add(s);
  if (assets_.text_scale) add(*assets_.text_scale);
  return {{"scales", scales},
          {"backgrounds", {{"white", background_hex(Background::white)}, {"gray", background_hex(Background::gray)}}}};
}

std::optional<std::filesystem::path> SurveyService::image_path(const std::string& image_id) const {
  for (const auto& s : assets_.stimuli)
    if (s.image_id == image_id) return assets_.image_dir / s.file;
  return std::nullopt;
}

SurveyConfig load_survey_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(InputError::Kind::missing, 0, "cannot open " + path.string());
  const auto base = path.parent_path();
  const auto resolve = [&](const std::string& p) {
    std::filesystem::path x = p;
    return x.is_relative() ? base / x : x;
  };
  try {
    const auto j = json::parse(in);
    SurveyConfig c;
    for (const auto& p : j.at("palette_scales")) c.assets.palette_scales.push_back(load_scale(resolve(p.get<std::string>())));
    if (j.contains("text_scale")) c.assets.text_scale = load_scale(resolve(j.at("text_scale").get<std::string>()));
    if (j.contains("stimuli")) c.assets.stimuli = read_stimuli(resolve(j.at("stimuli").get<std::string>()));
    c.assets.image_dir = j.contains("image_dir") ? resolve(j.at("image_dir").get<std::string>()) : base;
    if (j.contains("seed")) c.options.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("study1_attentional")) c.options.study1_attentional = j.at("study1_attentional").get<std::vector<int>>();
    if (j.contains("study2_attentional")) c.options.study2_attentional = j.at("study2_attentional").get<std::vector<int>>();
    for (const auto& [name, list] : {std::pair{"study1_attentional", &c.options.study1_attentional},
                                     std::pair{"study2_attentional", &c.options.study2_attentional}}) {
      for (int s : *list)
        for (const auto& scale : c.assets.palette_scales)
          if (s < 1 || s > scale.size())
            throw InputError(InputError::Kind::range, 0, fmt::format("{} swatch {} is not on {}", name, s, scale.scale_id));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(InputError::Kind::schema, 0, fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace skintone
