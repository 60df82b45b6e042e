// Eigen must precede httplib: <resolv.h> defines a `_res` macro.
#include "lad/serving.hpp"

#include <httplib.h>
#include <json.hpp>

namespace lad::serving {

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = message;
  j["code"] = code;
  send_json(res, status, j);
}

std::string required_string(const nlohmann::json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || !it->is_string()) throw RequestError(std::string("missing string field \"") + key + "\"");
  return it->get<std::string>();
}

nlohmann::json parse_body(const httplib::Request& req) {
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw RequestError("request body must be a JSON object");
  return j;
}

}  // namespace

struct HttpServer::Impl {
  Service* service;
  std::optional<std::filesystem::path> behavior_log;
  httplib::Server server;

  // Maps library exceptions onto status codes.
  template <typename F>
  void guarded(httplib::Response& res, F&& body) {
    try {
      if (service == nullptr) {
        send_error(res, 503, "unavailable", "no model loaded");
        return;
      }
      body();
    } catch (const RequestError& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const ShapeError& e) {
      send_error(res, 422, "input_too_long", e.what());
    } catch (const ParseError& e) {
      send_error(res, 500, "behavior_log", e.what());
    } catch (const IoError& e) {
      send_error(res, 500, "io", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  }

  void routes() {
    server.Post("/v1/complete", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = parse_body(req);
        const CompletionResponse r = service->complete(required_string(body, "user_id"), required_string(body, "prefix"));
        nlohmann::ordered_json j;
        nlohmann::ordered_json list = nlohmann::ordered_json::array();
        for (const auto& c : r.completions) list.push_back({{"text", c.text}, {"score", c.score}});
        j["completions"] = std::move(list);
        j["rejected_count"] = r.rejected_count;
        j["latency_ms"] = r.latency_ms;
        j["generation"] = r.generation;
        j["short_term"] = r.short_term;
        send_json(res, 200, j);
      });
    });
    server.Post("/v1/event", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = parse_body(req);
        service->record_event(required_string(body, "user_id"), required_string(body, "query"));
        send_json(res, 200, {{"ok", true}});
      });
    });
    server.Post("/v1/memory/refresh", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        if (!behavior_log) throw RequestError("server was started without a behavior log");
        const auto gen = service->refresh_from(*behavior_log);
        nlohmann::ordered_json j;
        j["generation"] = gen;
        j["users"] = service->bank_users();
        send_json(res, 200, j);
      });
    });
    server.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::ordered_json j;
      j["status"] = service ? "ok" : "unavailable";
      j["checkpoint"] = service ? service->options().checkpoint_label : "";
      send_json(res, service ? 200 : 503, j);
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) {
        send_error(res, res.status, res.status == 404 ? "not_found" : "error",
                   res.status == 404 ? "no such endpoint" : "request failed");
      }
    });
  }
};

HttpServer::HttpServer(Service* service, std::optional<std::filesystem::path> behavior_log)
    : impl_(std::make_unique<Impl>()) {
  impl_->service = service;
  impl_->behavior_log = std::move(behavior_log);
  impl_->routes();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

void HttpServer::serve() { impl_->server.listen_after_bind(); }

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace lad::serving
