#include <CLI11.hpp>

#include <csignal>
#include <iostream>

#include "unipaint/service/http_server.hpp"

namespace {

unipaint::service::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace unipaint;
  CLI::App app{"Inpainting session service", "unipaint_server"};
  std::optional<std::string> config_path;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const service::ServiceConfig config = service::load_config(config_path);
    service::Engine engine(config);
    service::HttpServer server(engine);
    const int port = server.bind(config.host, config.port);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "{\"listen\":\"" << config.host << ':' << port << "\",\"artifact_root\":\"" << config.artifact_root
              << "\",\"workers\":" << config.workers << ",\"preset\":\"" << config.preset << "\"}" << std::endl;
    server.serve();
    g_server = nullptr;
    return 0;
  } catch (const Error& e) {
    std::cerr << "error";
    if (!e.field().empty()) std::cerr << " [" << e.field() << "]";
    std::cerr << ": " << e.what() << '\n';
    return e.kind() == ErrorKind::Validation ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
