#include "unipaint/service/http_server.hpp"

#include <httplib.h>

namespace unipaint::service {

namespace {

constexpr auto kEventPoll = std::chrono::milliseconds(250);

Bytes body_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

void send_json(httplib::Response& res, const Json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

Json parse_json_body(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return Json();
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("body is not valid JSON: ") + e.what(), "body");
  }
}

std::optional<Bytes> file_part(const httplib::Request& req, const char* name) {
  if (!req.has_file(name)) return std::nullopt;
  return body_bytes(req.get_file_value(name).content);
}

template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const Error& e) {
      res.status = http_status(e.kind());
      res.set_content(error_body(e), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(error_body(Error(ErrorKind::Io, e.what())), "application/json");
    }
  };
}

}  // namespace

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::OutOfRange:
    case ErrorKind::Validation: return 400;
    case ErrorKind::NotFound: return 404;
    case ErrorKind::Conflict: return 409;
    default: return 500;
  }
}

std::string error_body(const Error& e) {
  Json j{{"error", to_string(e.kind())}, {"message", e.what()}};
  j["field"] = e.field().empty() ? Json() : Json(e.field());
  return j.dump();
}

HttpServer::HttpServer(Engine& engine) : engine_(engine), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;

  s.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto image = file_part(req, "image");
    const auto mask = file_part(req, "mask");
    if (!image) throw Error(ErrorKind::Validation, "multipart part 'image' is required", "image");
    if (!mask) throw Error(ErrorKind::Validation, "multipart part 'mask' is required", "mask");
    send_json(res, engine_.create_session(*image, *mask, file_part(req, "exemplar")), 201);
  }));

  s.Get(R"(/sessions/([A-Za-z0-9]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, engine_.session(req.matches[1]));
  }));

  s.Post(R"(/sessions/([A-Za-z0-9]+)/finetune)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, engine_.start_finetune(req.matches[1], parse_json_body(req.body)), 202);
  }));

  s.Post(R"(/sessions/([A-Za-z0-9]+)/jobs)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    Json spec;
    std::optional<Bytes> stroke;
    if (req.is_multipart_form_data()) {
      if (req.has_file("spec")) spec = parse_json_body(req.get_file_value("spec").content);
      stroke = file_part(req, "stroke");
    } else {
      spec = parse_json_body(req.body);
    }
    send_json(res, engine_.submit_inpaint(req.matches[1], spec, stroke), 202);
  }));

  s.Get(R"(/jobs/([A-Za-z0-9]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, engine_.job(req.matches[1]));
  }));

  s.Get(R"(/jobs/([A-Za-z0-9]+)/artifacts/(\d+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const Bytes png = engine_.artifact(req.matches[1], std::stoi(req.matches[2]));
    res.set_content(std::string(png.begin(), png.end()), "image/png");
  }));

  s.Get(R"(/jobs/([A-Za-z0-9]+)/events)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string job_id = req.matches[1];
    std::size_t from = 0;
    if (req.has_param("from")) {
      try {
        from = std::stoul(req.get_param_value("from"));
      } catch (const std::exception&) {
        throw Error(ErrorKind::Validation, "from must be a non-negative integer", "from");
      }
    }
    engine_.job(job_id);  // 404 before the stream starts
    auto cursor = std::make_shared<std::size_t>(from);
    res.set_chunked_content_provider(
        "application/x-ndjson", [this, job_id, cursor](std::size_t, httplib::DataSink& sink) {
          const auto batch = engine_.events(job_id, *cursor, kEventPoll);
          for (const auto& e : batch.events) {
            const std::string line = e.dump() + "\n";
            if (!sink.write(line.data(), line.size())) return false;
          }
          *cursor += batch.events.size();
          if (batch.finished && batch.events.empty()) sink.done();
          return true;
        });
  }));
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorKind::Io, "cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) {
    throw Error(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::serve() { server_->listen_after_bind(); }

void HttpServer::stop() { server_->stop(); }

}  // namespace unipaint::service
