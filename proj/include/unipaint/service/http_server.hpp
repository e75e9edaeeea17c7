#pragma once

#include <memory>
#include <string>

#include "unipaint/service/engine.hpp"

namespace httplib {
class Server;
}

namespace unipaint::service {

/// HTTP status for an error kind: 400 for bad input, 404, 409, else 500.
int http_status(ErrorKind kind);

/// {"error": kind, "message": ..., "field": ...}
std::string error_body(const Error& e);

/// Routes of the session API bound to an Engine.
///   POST /sessions                      multipart: image, mask, [exemplar]
///   GET  /sessions/{id}
///   POST /sessions/{id}/finetune        JSON FinetuneConfig fields
///   POST /sessions/{id}/jobs            JSON spec, or multipart: spec, [stroke]
///   GET  /jobs/{id}
///   GET  /jobs/{id}/artifacts/{n}       image/png
///   GET  /jobs/{id}/events?from=k       chunked line-delimited JSON
class HttpServer {
 public:
  explicit HttpServer(Engine& engine);
  ~HttpServer();

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind.
  void serve();
  void stop();

 private:
  Engine& engine_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace unipaint::service
