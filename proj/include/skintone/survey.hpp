#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "skintone/rating.hpp"
#include "skintone/scale.hpp"
#include "skintone/study.hpp"

namespace httplib {
class Server;
}

namespace skintone {

struct PlannedTask {
  std::string task_id;
  TaskKind kind = TaskKind::self;
  std::string scale_id;     // empty for the preference question
  std::string stimulus_id;  // image id, or the true swatch for attentional checks
};

struct SessionPlan {
  std::string session_id;
  std::string rater_id;
  int study = 1;
  Background background = Background::gray;
  std::vector<std::string> scale_order;  // palette scales; study 2 rates on the first only
  std::vector<PlannedTask> tasks;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const SessionPlan& p);
SessionPlan plan_from_json(const nlohmann::json& j);

struct SurveyAssets {
  std::vector<Scale> palette_scales;
  std::optional<Scale> text_scale;     // shown last in study 1
  std::vector<ImageStimulus> stimuli;  // study 2
  std::filesystem::path image_dir;     // base for ImageStimulus::file
};

struct SurveyOptions {
  std::uint64_t seed = 1;  // sessions created without a seed derive one from this
  std::vector<int> study1_attentional{4};
  std::vector<int> study2_attentional{4, 7};
  Background study2_background = Background::gray;
};

/// Lab L* = 50 neutral, rendered to sRGB.
std::string gray_background_hex();
std::string background_hex(Background b);

/// Seeded plan. Study 1: each palette scale (random order) is a block of the
/// self rating plus the attentional checks in random positions, then the
/// preference question, then the text scale. Study 2: one image per subject
/// through a random device, in random order, on the first scale of the
/// order, with the attentional checks dropped in at random positions.
SessionPlan make_plan(const SurveyAssets& assets, const SurveyOptions& options, const std::string& session_id,
                      const std::string& rater_id, int study, std::uint64_t seed);

class SurveyError : public std::runtime_error {
 public:
  enum class Kind { not_found, invalid, conflict };
  SurveyError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Serves tasks in plan order and records answers. Sessions and ratings are
/// appended to `sessions.jsonl` and `ratings.jsonl` in the store directory;
/// constructing a service over an existing store replays both files.
class SurveyService {
 public:
  using Clock = std::function<std::string()>;

  SurveyService(SurveyAssets assets, SurveyOptions options, std::filesystem::path store_dir, Clock clock = {});

  SessionPlan create_session(const std::string& rater_id, int study, std::optional<std::uint64_t> seed = std::nullopt);

  /// Task view for the first unanswered task, or {"complete": true}.
  nlohmann::json next_task(const std::string& session_id) const;

  /// Validates and appends the answer to the current task.
  RatingRecord submit_response(const std::string& session_id, const std::string& task_id,
                               const nlohmann::json& response);

  SessionPlan plan(const std::string& session_id) const;
  std::vector<RatingRecord> answers(const std::string& session_id) const;
  std::size_t session_count() const;

  nlohmann::json scales_json() const;
  std::optional<std::filesystem::path> image_path(const std::string& image_id) const;

  const std::filesystem::path& ratings_path() const { return ratings_path_; }
  const std::filesystem::path& sessions_path() const { return sessions_path_; }

 private:
  struct State {
    SessionPlan plan;
    std::vector<RatingRecord> answers;
  };

  const Scale* find_scale(std::string_view id) const;
  nlohmann::json task_view(const State& s, std::size_t i) const;
  void replay();

  SurveyAssets assets_;
  SurveyOptions options_;
  std::filesystem::path sessions_path_;
  std::filesystem::path ratings_path_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::map<std::string, State, std::less<>> sessions_;
  std::ofstream sessions_out_;
  std::ofstream ratings_out_;
};

/// Routes: POST /sessions, GET /sessions/{id}/next, POST /sessions/{id}/responses,
/// GET /scales, GET /images/{id}.
void register_routes(httplib::Server& server, SurveyService& service);

/// Loads survey assets from a JSON config (scale and stimuli paths relative to it).
struct SurveyConfig {
  SurveyAssets assets;
  SurveyOptions options;
};
SurveyConfig load_survey_config(const std::filesystem::path& path);

}  // namespace skintone
