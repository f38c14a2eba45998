#include "ideaeval/humaneval_service.hpp"

#include <httplib.h>

#include <thread>

#include "ideaeval/error.hpp"

namespace ideaeval::humaneval {

namespace {

using io::Json;

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

const char* status_label(SessionStatus s) { return s == SessionStatus::Complete ? "complete" : "open"; }

}  // namespace

struct HumanEvalService::Impl {
  HumanEvalStore& store;
  ServiceConfig config;
  httplib::Server server;
  std::thread worker;
  int bound_port = -1;

  Impl(HumanEvalStore& s, ServiceConfig c) : store(s), config(std::move(c)) { routes(); }

  // Translates store exceptions into status codes.
  template <class Fn>
  void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.what());
    } catch (const ValidationError& e) {
      send_error(res, 400, e.what());
    } catch (const ConflictError& e) {
      send_error(res, 409, e.what());
    } catch (const Json::exception& e) {
      send_error(res, 400, std::string("malformed JSON: ") + e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  }

  void routes() {
    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}});
    });

    server.Get(R"(/api/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, to_public_json(store.session(req.matches[1]))); });
    });

    server.Post(R"(/api/sessions/([^/]+)/ratings)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string session_id = req.matches[1];
        const auto body = Json::parse(req.body);
        if (body.contains("session_id") && body["session_id"] != session_id) {
          throw ValidationError("session_id in body does not match the URL");
        }
        auto rating = rating_from_json(body);
        rating.session_id = session_id;
        const auto ack = store.record_rating(std::move(rating));
        send_json(res, 201,
                  {{"session_id", ack.session_id},
                   {"idea_key", ack.idea_key},
                   {"session_status", status_label(ack.session_status)}});
      });
    });

    server.Get(R"(/api/runs/([^/]+)/report)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        if (req.matches[1] != store.run_id()) throw NotFoundError("unknown run '" + std::string(req.matches[1]) + "'");
        send_json(res, 200, to_json(store.report()));
      });
    });

    if (config.static_dir && !server.set_mount_point("/", config.static_dir->string())) {
      throw ValidationError("static directory " + config.static_dir->string() + " does not exist");
    }
  }

  void bind() {
    if (config.port == 0) {
      bound_port = server.bind_to_any_port(config.host);
    } else {
      bound_port = server.bind_to_port(config.host, config.port) ? config.port : -1;
    }
    if (bound_port < 0) {
      throw ValidationError("cannot bind " + config.host + ":" + std::to_string(config.port));
    }
  }
};

HumanEvalService::HumanEvalService(HumanEvalStore& store, ServiceConfig config)
    : impl_(std::make_unique<Impl>(store, std::move(config))) {}

HumanEvalService::~HumanEvalService() { stop(); }

int HumanEvalService::start() {
  impl_->bind();
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->bound_port;
}

void HumanEvalService::serve_forever() {
  impl_->bind();
  impl_->server.listen_after_bind();
}

void HumanEvalService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace ideaeval::humaneval
