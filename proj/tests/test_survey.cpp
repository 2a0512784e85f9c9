#include "skintone/survey.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include "skintone/errors.hpp"

// After project headers; see survey_http.cpp.
#include <httplib.h>

namespace skintone {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string data_path(const std::string& rel) { return std::string(SKINTONE_DATA_DIR) + "/" + rel; }

const SurveyConfig& shipped() {
  static const SurveyConfig c = load_survey_config(data_path("config/survey.json"));
  return c;
}

fs::path fresh_store(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("skintone_survey_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

SurveyService::Clock fixed_clock() {
  return [] { return std::string("2024-01-01T00:00:00Z"); };
}

// A plausible answer for whatever the task view asks.
json answer_for(const json& view) {
  if (view.at("kind") == "preference") return view.at("choices")[0];
  if (view.at("kind") == "attentional") return 4;
  return 3;
}

TEST(Plan, SameSeedSamePlan) {
  const auto& c = shipped();
  for (int study : {1, 2}) {
    const auto a = make_plan(c.assets, c.options, "s1", "r1", study, 42);
    const auto b = make_plan(c.assets, c.options, "s1", "r1", study, 42);
    EXPECT_EQ(to_json(a), to_json(b));
    EXPECT_EQ(to_json(plan_from_json(to_json(a))), to_json(a));
  }
}

TEST(Plan, Study2ShowsEverySubjectOnce) {
  const auto& c = shipped();
  std::set<std::string> subjects_in_stimuli;
  for (const auto& s : c.assets.stimuli) subjects_in_stimuli.insert(s.subject_id);
  ASSERT_EQ(subjects_in_stimuli.size(), 8u);
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto p = make_plan(c.assets, c.options, "s", "r", 2, seed);
    EXPECT_EQ(p.background, Background::gray);
    std::set<std::string> seen;
    std::size_t images = 0, checks = 0;
    for (const auto& t : p.tasks) {
      EXPECT_EQ(t.scale_id, p.scale_order[0]);
      if (t.kind == TaskKind::image) {
        ++images;
        for (const auto& s : c.assets.stimuli)
          if (s.image_id == t.stimulus_id) seen.insert(s.subject_id);
      } else {
        ASSERT_EQ(t.kind, TaskKind::attentional);
        ++checks;
      }
    }
    EXPECT_EQ(images, 8u);
    EXPECT_EQ(seen, subjects_in_stimuli);
    EXPECT_EQ(checks, 2u);
  }
}

TEST(Plan, Study1OrderingRules) {
  const auto& c = shipped();
  std::set<std::string> first_scales;
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    const auto p = make_plan(c.assets, c.options, "s", "r", 1, seed);
    ASSERT_GE(p.tasks.size(), 3u);
    const auto& last = p.tasks.back();
    EXPECT_EQ(last.kind, TaskKind::self);
    EXPECT_EQ(last.scale_id, "FST");
    EXPECT_EQ(p.tasks[p.tasks.size() - 2].kind, TaskKind::preference);
    std::size_t self = 0, checks = 0;
    for (const auto& t : p.tasks) {
      self += t.kind == TaskKind::self;
      checks += t.kind == TaskKind::attentional;
    }
    EXPECT_EQ(self, 3u);
    EXPECT_EQ(checks, 2u);
    // Blocks follow scale_order.
    EXPECT_EQ(p.tasks.front().scale_id, p.scale_order[0]);
    first_scales.insert(p.scale_order[0]);
  }
  EXPECT_EQ(first_scales.size(), 2u);
}

TEST(Plan, BackgroundsSplitEvenly) {
  const auto& c = shipped();
  int white = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i)
    white += make_plan(c.assets, c.options, "s", "r", 1, static_cast<std::uint64_t>(i) * 7919 + 3).background ==
             Background::white;
  EXPECT_NEAR(static_cast<double>(white) / n, 0.5, 0.02);
}

TEST(Plan, RejectsUnknownStudyAndMissingAssets) {
  const auto& c = shipped();
  EXPECT_THROW(make_plan(c.assets, c.options, "s", "r", 3, 1), SurveyError);
  SurveyAssets no_images = c.assets;
  no_images.stimuli.clear();
  EXPECT_THROW(make_plan(no_images, c.options, "s", "r", 2, 1), SurveyError);
}

TEST(Survey, GrayBackgroundIsMidLightness) {
  const auto hex = gray_background_hex();
  const auto rgb = parse_hex(hex);
  ASSERT_TRUE(rgb);
  EXPECT_NEAR(srgb_to_lab(*rgb).L, 50.0, 0.5);
  EXPECT_EQ(background_hex(Background::white), "#FFFFFF");
}

TEST(Service, NextTaskIsIdempotentAndAnswersAppend) {
  const auto store = fresh_store("append");
  SurveyService svc(shipped().assets, shipped().options, store, fixed_clock());
  const auto plan = svc.create_session("rater-1", 1, 11);
  const auto v1 = svc.next_task(plan.session_id);
  EXPECT_EQ(v1, svc.next_task(plan.session_id));
  const auto& task = v1.at("task");
  EXPECT_EQ(task.at("task_id"), plan.tasks[0].task_id);
  EXPECT_EQ(task.at("swatches").size(), 10u);
  EXPECT_FALSE(task.at("prompt").get<std::string>().empty());

  const auto rec = svc.submit_response(plan.session_id, plan.tasks[0].task_id, answer_for(task));
  EXPECT_EQ(rec.rater_id, "rater-1");
  EXPECT_EQ(rec.timestamp, "2024-01-01T00:00:00Z");
  EXPECT_EQ(read_ratings_file(svc.ratings_path().string()).size(), 1u);
  EXPECT_NE(svc.next_task(plan.session_id).at("task").at("task_id"), plan.tasks[0].task_id);
}

TEST(Service, RejectsBadSubmissionsWithoutWriting) {
  const auto store = fresh_store("reject");
  SurveyService svc(shipped().assets, shipped().options, store, fixed_clock());
  const auto plan = svc.create_session("rater-2", 1, 5);
  const auto first = plan.tasks[0].task_id;
  svc.submit_response(plan.session_id, first, 2);
  const auto before = slurp(svc.ratings_path());

  const auto expect_kind = [&](SurveyError::Kind kind, const std::string& session, const std::string& task, json r) {
    try {
      svc.submit_response(session, task, r);
      ADD_FAILURE() << "accepted " << task << " " << r;
    } catch (const SurveyError& e) {
      EXPECT_EQ(e.kind(), kind) << e.what();
    }
  };
  const auto current = plan.tasks[1].task_id;
  expect_kind(SurveyError::Kind::conflict, plan.session_id, first, 2);  // duplicate
  expect_kind(SurveyError::Kind::invalid, plan.session_id, current, 11);
  expect_kind(SurveyError::Kind::invalid, plan.session_id, current, 0);
  expect_kind(SurveyError::Kind::invalid, plan.session_id, current, "three");
  expect_kind(SurveyError::Kind::invalid, plan.session_id, current, 2.5);
  expect_kind(SurveyError::Kind::conflict, plan.session_id, plan.tasks[2].task_id, 2);  // skipping ahead
  expect_kind(SurveyError::Kind::not_found, plan.session_id, "nope", 2);
  expect_kind(SurveyError::Kind::not_found, "s999999", current, 2);
  EXPECT_THROW(svc.next_task("s999999"), SurveyError);
  EXPECT_EQ(slurp(svc.ratings_path()), before);
}

TEST(Service, CompletesAndReplaysFromTheStore) {
  const auto store = fresh_store("replay");
  std::vector<RatingRecord> answered;
  std::string done_id, partial_id;
  {
    SurveyService svc(shipped().assets, shipped().options, store, fixed_clock());
    for (int study : {1, 2}) {
      const auto plan = svc.create_session("r" + std::to_string(study), study);
      for (;;) {
        const auto v = svc.next_task(plan.session_id);
        if (v.at("complete")) break;
        answered.push_back(svc.submit_response(plan.session_id, v.at("task").at("task_id"), answer_for(v.at("task"))));
      }
      done_id = plan.session_id;
    }
    const auto partial = svc.create_session("r3", 1);
    partial_id = partial.session_id;
    svc.submit_response(partial_id, partial.tasks[0].task_id, 5);
  }
  SurveyService again(shipped().assets, shipped().options, store, fixed_clock());
  EXPECT_EQ(again.session_count(), 3u);
  EXPECT_TRUE(again.next_task(done_id).at("complete").get<bool>());
  EXPECT_EQ(again.answers(partial_id).size(), 1u);
  const auto plan = again.plan(partial_id);
  EXPECT_EQ(again.next_task(partial_id).at("task").at("task_id"), plan.tasks[1].task_id);
  // New sessions continue the id sequence rather than reusing one.
  EXPECT_NE(again.create_session("r4", 2).session_id, partial_id);

  // Every stored rating belongs to a stored session.
  std::set<std::string> sessions;
  std::ifstream in(again.sessions_path());
  for (std::string line; std::getline(in, line);) sessions.insert(json::parse(line).at("session_id"));
  const auto stored = read_ratings_file(again.ratings_path().string());
  EXPECT_EQ(stored.size(), answered.size() + 1);
  for (const auto& r : stored) EXPECT_TRUE(sessions.count(r.session_id)) << r.task_id;
}

TEST(Service, ConcurrentSessionsKeepTheStoreConsistent) {
  const auto store = fresh_store("concurrent");
  SurveyService svc(shipped().assets, shipped().options, store);
  std::atomic<int> submitted{0};
  std::vector<std::thread> workers;
  for (int w = 0; w < 8; ++w) {
    workers.emplace_back([&, w] {
      const auto plan = svc.create_session("w" + std::to_string(w), 1 + w % 2);
      for (;;) {
        const auto v = svc.next_task(plan.session_id);
        if (v.at("complete")) break;
        svc.submit_response(plan.session_id, v.at("task").at("task_id"), answer_for(v.at("task")));
        ++submitted;
      }
    });
  }
  for (auto& t : workers) t.join();
  const auto stored = read_ratings_file(svc.ratings_path().string());
  EXPECT_EQ(static_cast<int>(stored.size()), submitted.load());
  std::set<std::string> ids;
  for (const auto& r : stored) ids.insert(r.session_id + "/" + r.task_id);
  EXPECT_EQ(ids.size(), stored.size());
  EXPECT_EQ(svc.session_count(), 8u);
}

class Http : public ::testing::Test {
 protected:
  void SetUp() override {
    image_dir_ = fresh_store("http_images");
    fs::create_directories(image_dir_ / "images");
    std::ofstream(image_dir_ / "images/ID1_B.png", std::ios::binary) << "PNGDATA";
    auto assets = shipped().assets;
    assets.image_dir = image_dir_;
    svc_ = std::make_unique<SurveyService>(assets, shipped().options, fresh_store("http"), fixed_clock());
    register_routes(server_, *svc_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  httplib::Result post(const std::string& path, const std::string& body) {
    return client_->Post(path, body, "application/json");
  }

  fs::path image_dir_;
  std::unique_ptr<SurveyService> svc_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

TEST_F(Http, SessionLifecycle) {
  auto res = post("/sessions", R"({"rater_id": "h1", "study": 1, "seed": 3})");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 201);
  const auto plan = json::parse(res->body);
  const std::string sid = plan.at("session_id");
  EXPECT_EQ(plan.at("tasks").size(), 6u);

  res = client_->Get("/sessions/" + sid + "/next");
  ASSERT_EQ(res->status, 200);
  const auto view = json::parse(res->body).at("task");
  const std::string tid = view.at("task_id");

  res = post("/sessions/" + sid + "/responses", json{{"task_id", tid}, {"response", 11}}.dump());
  EXPECT_EQ(res->status, 422);
  res = post("/sessions/" + sid + "/responses", json{{"task_id", tid}, {"response", 4}}.dump());
  EXPECT_EQ(res->status, 201);
  EXPECT_EQ(json::parse(res->body).at("stored").at("response"), 4);
  res = post("/sessions/" + sid + "/responses", json{{"task_id", tid}, {"response", 4}}.dump());
  EXPECT_EQ(res->status, 409);
  res = post("/sessions/" + sid + "/responses", "{not json");
  EXPECT_EQ(res->status, 400);
  res = post("/sessions/" + sid + "/responses", R"({"response": 4})");
  EXPECT_EQ(res->status, 400);
  res = client_->Get("/sessions/s424242/next");
  EXPECT_EQ(res->status, 404);
  res = post("/sessions", R"({"rater_id": "h1", "study": 9})");
  EXPECT_EQ(res->status, 422);
}

TEST_F(Http, ScalesAndImages) {
  auto res = client_->Get("/scales");
  ASSERT_EQ(res->status, 200);
  const auto j = json::parse(res->body);
  EXPECT_EQ(j.at("scales").size(), 3u);
  EXPECT_EQ(j.at("backgrounds").at("gray"), gray_background_hex());

  res = client_->Get("/images/ID1-B");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->body, "PNGDATA");
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(client_->Get("/images/ID1-D")->status, 404);  // listed, file absent
  EXPECT_EQ(client_->Get("/images/unknown")->status, 404);
}

TEST(SurveyConfig, RejectsCheckSwatchOffTheScale) {
  const auto dir = fresh_store("cfg");
  fs::create_directories(dir);
  std::ofstream(dir / "survey.json") << json{{"palette_scales", {data_path("scales/cst.json")}},
                                             {"study1_attentional", {12}}}
                                            .dump();
  EXPECT_THROW(load_survey_config(dir / "survey.json"), InputError);
}

}  // namespace
}  // namespace skintone
