#include <fstream>
#include <sstream>

// Project headers first: httplib pulls in <resolv.h>, whose _res macro
// collides with Eigen internals.
#include "skintone/errors.hpp"
#include "skintone/survey.hpp"

#include <httplib.h>

namespace skintone {

using nlohmann::json;

namespace {

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const SurveyError& e) {
  const int status = e.kind() == SurveyError::Kind::not_found ? 404
                     : e.kind() == SurveyError::Kind::conflict ? 409
                                                               : 422;
  send(res, status, {{"error", e.what()}});
}

// Runs a handler, turning service and parse errors into JSON error replies.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const SurveyError& e) {
    send_error(res, e);
  } catch (const json::exception& e) {
    send(res, 400, {{"error", std::string("bad request body: ") + e.what()}});
  } catch (const std::exception& e) {
    send(res, 500, {{"error", e.what()}});
  }
}

std::string content_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

}  // namespace

void register_routes(httplib::Server& server, SurveyService& service) {
  server.Post("/sessions", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = json::parse(req.body);
      std::optional<std::uint64_t> seed;
      if (body.contains("seed")) seed = body.at("seed").get<std::uint64_t>();
      const auto plan = service.create_session(body.at("rater_id").get<std::string>(), body.at("study").get<int>(), seed);
      send(res, 201, to_json(plan));
    });
  });

  server.Get(R"(/sessions/([^/]+)/next)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, service.next_task(req.matches[1])); });
  });

  server.Post(R"(/sessions/([^/]+)/responses)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = json::parse(req.body);
      const auto rec = service.submit_response(req.matches[1], body.at("task_id").get<std::string>(), body.at("response"));
      send(res, 201, {{"stored", to_json(rec)}});
    });
  });

  server.Get("/scales", [&](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, service.scales_json()); });
  });

  server.Get(R"(/images/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto path = service.image_path(req.matches[1]);
      if (!path) throw SurveyError(SurveyError::Kind::not_found, "unknown image " + std::string(req.matches[1]));
      std::ifstream in(*path, std::ios::binary);
      if (!in) throw SurveyError(SurveyError::Kind::not_found, "image file missing for " + std::string(req.matches[1]));
      std::ostringstream os;
      os << in.rdbuf();
      res.status = 200;
      res.set_content(os.str(), content_type(*path));
    });
  });
}

}  // namespace skintone
