#include "dsq/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "dsq/error.hpp"

namespace dsq {

namespace {

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::InvalidArgument:
    case ErrorCode::EmptyContext:
      return 400;
    case ErrorCode::TransportError:
    case ErrorCode::ReplayMiss:
    case ErrorCode::EmptyResponse:
      return 502;
    default:
      return 500;
  }
}

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace),
                  "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code,
                const std::string& message) {
  send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    send_error(res, status_for(e.code()), to_string(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, "InvalidArgument", std::string("bad request body: ") + e.what());
  } catch (const std::exception& e) {
    spdlog::error("request failed: {}", e.what());
    send_error(res, 500, "Internal", e.what());
  }
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::InvalidArgument, "request body must be a JSON object");
  }
  return j;
}

}  // namespace

ChatService::ChatService(std::shared_ptr<SessionManager> sessions)
    : sessions_(std::move(sessions)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

ChatService::~ChatService() { stop(); }

void ChatService::install_routes() {
  auto& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Headers", "Content-Type"},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  s.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  s.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  });

  s.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      std::optional<PipelineMode> mode;
      if (body.contains("mode") && !body["mode"].is_null()) {
        mode = pipeline_mode_from_string(body["mode"].get<std::string>());
      }
      const auto state = sessions_->create(mode);
      send_json(res, 201, {{"id", state.id}, {"config", state.config}});
    });
  });

  s.Post(R"(/sessions/([^/]+)/turns)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      if (!body.contains("text") || !body["text"].is_string()) {
        throw Error(ErrorCode::InvalidArgument, "body needs a string field 'text'");
      }
      const auto turn = sessions_->step(req.matches[1], body["text"].get<std::string>());
      send_json(res, 200, {{"response", turn.trace.response}, {"trace", turn.trace}});
    });
  });

  s.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, sessions_->get(req.matches[1]).history_json()); });
  });

  s.Get(R"(/sessions/([^/]+)/traces)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto state = sessions_->get(req.matches[1]);
      auto traces = nlohmann::json::array();
      for (const auto& t : state.turns) traces.push_back(t.trace);
      send_json(res, 200, {{"id", state.id}, {"traces", traces}});
    });
  });
}

bool ChatService::listen(const std::string& host, int port) {
  spdlog::info("serving on {}:{}", host, port);
  return server_->listen(host, port);
}

int ChatService::start_background(const std::string& host) {
  const int port = server_->bind_to_any_port(host);
  if (port < 0) throw Error(ErrorCode::TransportError, "cannot bind " + host);
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void ChatService::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace dsq
