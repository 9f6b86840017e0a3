#include "carpet/service/http_server.hpp"

#include "httplib.h"

namespace carpet::service {

using nlohmann::json;

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::TooLarge: return 413;
    case ErrorCode::UnsupportedFormat: return 415;
    case ErrorCode::CorruptImage:
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidDimensions:
    case ErrorCode::EmptyText:
    case ErrorCode::TextTooLong: return 400;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const std::exception& ex) {
  if (const auto* v = dynamic_cast<const ValidationError*>(&ex)) {
    json fields = json::array();
    for (const auto& f : v->fields()) fields.push_back({{"field", f.field}, {"message", f.message}});
    return send_json(res, 400, {{"error", "ValidationError"}, {"message", v->what()}, {"fields", fields}});
  }
  if (const auto* a = dynamic_cast<const AssetNotFound*>(&ex)) {
    return send_json(res, 404, {{"error", "AssetNotFound"}, {"message", a->what()}, {"field", a->field()}});
  }
  if (const auto* e = dynamic_cast<const Error*>(&ex)) {
    return send_json(res, http_status(e->code()), {{"error", to_string(e->code())}, {"message", e->what()}});
  }
  send_json(res, 500, {{"error", "Internal"}, {"message", ex.what()}});
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const json::exception& ex) {
      send_json(res, 400, {{"error", "BadRequest"}, {"message", ex.what()}});
    } catch (const std::exception& ex) {
      send_error(res, ex);
    }
  };
}

std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

std::string as_string(const std::vector<std::uint8_t>& v) { return {v.begin(), v.end()}; }

}  // namespace

HttpServer::HttpServer(JobService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  // Leave room for multipart framing around a maximum-size file.
  server_->set_payload_max_length(service_.options().upload_limit + (1u << 20));
  install_routes();
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::install_routes() {
  auto& s = *server_;

  s.Get("/api/health", guarded([this](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, {{"status", "ok"}, {"workers", service_.worker_count()}});
        }));

  s.Get("/api/defaults", guarded([](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, pipeline_defaults());
        }));

  s.Post("/api/assets", guarded([this](const httplib::Request& req, httplib::Response& res) {
           if (!req.is_multipart_form_data() || !req.has_file("file")) {
             return send_json(res, 400, {{"error", "BadRequest"}, {"message", "expected multipart field 'file'"}});
           }
           const auto file = req.get_file_value("file");
           std::string kind = req.has_file("kind") ? req.get_file_value("kind").content : "content";
           if (kind.empty()) kind = "content";
           const auto rec = service_.upload_asset(as_bytes(file.content), kind);
           send_json(res, 201, rec.to_json());
         }));

  s.Get(R"(/api/assets/([0-9a-f-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto rec = service_.asset(req.matches[1]);
          res.status = 200;
          res.set_header("X-Checksum-Sha256", rec.checksum);
          res.set_content(as_string(service_.asset_bytes(rec.id)), rec.media_type);
        }));

  s.Get(R"(/api/assets/([0-9a-f-]+)/info)", guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, service_.asset(req.matches[1]).to_json());
        }));

  s.Post("/api/jobs", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const auto body = json::parse(req.body);
           send_json(res, 201, service_.submit(body).to_json());
         }));

  s.Get("/api/jobs", guarded([this](const httplib::Request& req, httplib::Response& res) {
          std::optional<JobStatus> status;
          if (req.has_param("status") && !req.get_param_value("status").empty()) {
            status = parse_status(req.get_param_value("status"));
            if (!status) {
              return send_json(res, 400,
                               {{"error", "BadRequest"}, {"message", "status must be queued, running, succeeded or failed"}});
            }
          }
          json out = json::array();
          for (const auto& j : service_.list(status)) out.push_back(j.to_json());
          send_json(res, 200, out);
        }));

  s.Get(R"(/api/jobs/([0-9a-f-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, service_.get(req.matches[1]).to_json());
        }));

  s.Post(R"(/api/jobs/([0-9a-f-]+)/cancel)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 200, service_.cancel(req.matches[1]).to_json());
         }));

  s.Get(R"(/api/jobs/([0-9a-f-]+)/frames/(\d+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const int k = std::stoi(req.matches[2]);
          res.status = 200;
          res.set_content(as_string(service_.frame(req.matches[1], k)), "image/png");
        }));

  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& ex) {
      send_error(res, ex);
    }
  });
}

bool HttpServer::listen(const std::string& host, int port) { return server_->listen(host, port); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool HttpServer::serve_bound() { return server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

}  // namespace carpet::service
