#ifndef USAMP_HTTP_SERVICE_HPP
#define USAMP_HTTP_SERVICE_HPP

// JSON-over-HTTP front end for SessionManager. All routes live under /v1;
// failures come back as {"code", "message"}.

#include <filesystem>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "usamp/session.hpp"

namespace usamp {

inline nlohmann::json to_json(const BatchItem& b) {
  return {{"doc_id", b.doc_id}, {"title", b.title}, {"posterior", b.posterior}};
}

class HttpService {
 public:
  // An empty token disables authentication.
  HttpService(SessionManager& sessions, std::string token = {})
      : sessions_(sessions), token_(std::move(token)) {
    routes();
  }

  /// Serves files under `dir` at "/" (the browser client).
  bool mount_static(const std::filesystem::path& dir) {
    return server_.set_mount_point("/", dir.string());
  }

  int bind_any_port(const std::string& host = "127.0.0.1") {
    return server_.bind_to_any_port(host);
  }
  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void wait_until_ready() const { server_.wait_until_ready(); }
  void stop() { server_.stop(); }
  bool is_running() const { return server_.is_running(); }

 private:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  static void send(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& code,
                         const std::string& message) {
    send(res, status, {{"code", code}, {"message", message}});
  }

  bool authorized(const httplib::Request& req) const {
    if (token_.empty()) return true;
    if (req.get_header_value("Authorization") == "Bearer " + token_) return true;
    return req.get_header_value("X-Auth-Token") == token_;
  }

  Handler guarded(Handler h) {
    return [this, h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req)) {
        send_error(res, 401, "unauthorized", "missing or wrong access token");
        return;
      }
      try {
        h(req, res);
      } catch (const ServiceError& e) {
        send_error(res, e.http_status(), e.code(), e.what());
      } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, "bad_request", e.what());
      } catch (const Error& e) {
        send_error(res, e.kind() == ErrorKind::runtime ? 500 : 400,
                   e.kind() == ErrorKind::runtime ? "internal" : "bad_request", e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
  }

  void routes() {
    server_.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
      send(res, 200, {{"status", "ok"}});
    });

    server_.Post("/v1/sessions", guarded([this](const httplib::Request& req,
                                                httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      const auto id = sessions_.create_session(session_request_from_json(body));
      send(res, 201, {{"session_id", id}});
    }));

    server_.Post(R"(/v1/sessions/([^/]+)/batch)",
                 guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto batch = sessions_.next_batch(req.matches[1]);
                   nlohmann::json items = nlohmann::json::array();
                   for (const auto& b : batch.items) items.push_back(to_json(b));
                   res.set_header("X-Pool-Exhausted", batch.exhausted ? "true" : "false");
                   send(res, 200, items);
                 }));

    server_.Post(R"(/v1/sessions/([^/]+)/labels)",
                 guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto body = nlohmann::json::parse(req.body);
                   if (!body.is_object()) throw bad_request("labels body must be an object");
                   LabelMap labels;
                   for (const auto& [doc, v] : body.items()) labels[doc] = label_from_json(v);
                   send(res, 200, to_json(sessions_.submit_labels(req.matches[1], labels)));
                 }));

    server_.Get(R"(/v1/sessions/([^/]+)/metrics)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  send(res, 200, to_json(sessions_.metrics(req.matches[1])));
                }));

    server_.Get(R"(/v1/sessions/([^/]+)/classifier)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  send(res, 200, sessions_.export_classifier(req.matches[1]));
                }));
  }

  SessionManager& sessions_;
  std::string token_;
  httplib::Server server_;
};

}  // namespace usamp

#endif  // USAMP_HTTP_SERVICE_HPP
