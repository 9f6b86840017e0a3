#pragma once

#include <memory>
#include <string>

#include "carpet/service/job_service.hpp"

namespace httplib {
class Server;
}

namespace carpet::service {

/// JSON HTTP API over a JobService:
///   POST /api/assets (multipart: file, kind)   GET /api/assets/{id}   GET /api/assets/{id}/info
///   POST /api/jobs   GET /api/jobs/{id}   GET /api/jobs?status=   POST /api/jobs/{id}/cancel
///   GET /api/jobs/{id}/frames/{k}   GET /api/defaults   GET /api/health
class HttpServer {
 public:
  explicit HttpServer(JobService& service);
  ~HttpServer();

  /// Binds and serves until stop(); port 0 picks a free port.
  bool listen(const std::string& host, int port);
  /// Binds without serving; returns the bound port or -1.
  int bind(const std::string& host, int port);
  bool serve_bound();
  void stop();

 private:
  void install_routes();

  JobService& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace carpet::service
