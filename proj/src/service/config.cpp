#include "unipaint/service/config.hpp"

#include <json.hpp>

#include <cstdlib>

#include "unipaint/backbone.hpp"
#include "unipaint/error.hpp"
#include "unipaint/image_io.hpp"

namespace unipaint::service {

namespace {

void set_listen(ServiceConfig& config, const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorKind::Validation, "listen must be host:port", "listen");
  config.host = listen.substr(0, colon);
  try {
    std::size_t used = 0;
    config.port = std::stoi(listen.substr(colon + 1), &used);
    if (used != listen.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw Error(ErrorKind::Validation, "listen port is not a number", "listen");
  }
}

int parse_int(const std::string& text, const char* field) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::Validation, std::string(field) + " is not an integer", field);
}

}  // namespace

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

ServiceConfig parse_config(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidInput, std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorKind::InvalidInput, "config must be a JSON object");
  ServiceConfig config;
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "listen") set_listen(config, value.get<std::string>());
      else if (key == "artifact_root") config.artifact_root = value.get<std::string>();
      else if (key == "workers") config.workers = value.get<int>();
      else if (key == "preset") config.preset = value.get<std::string>();
      else if (key == "init_seed") config.init_seed = value.get<std::uint64_t>();
      else if (key == "max_queued_jobs") config.max_queued_jobs = value.get<int>();
      else throw Error(ErrorKind::Validation, "unknown config key '" + key + "'", key);
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorKind::Validation, "config key '" + key + "' has the wrong type", key);
    }
  }
  return config;
}

ServiceConfig apply_env_overrides(ServiceConfig config, const EnvLookup& env) {
  if (auto v = env("UNIPAINT_LISTEN")) set_listen(config, *v);
  if (auto v = env("UNIPAINT_ARTIFACT_ROOT")) config.artifact_root = *v;
  if (auto v = env("UNIPAINT_WORKERS")) config.workers = parse_int(*v, "workers");
  if (auto v = env("UNIPAINT_PRESET")) config.preset = *v;
  return config;
}

ServiceConfig load_config(const std::optional<std::string>& path, const EnvLookup& env) {
  ServiceConfig config;
  if (path) {
    const auto bytes = read_file(*path);
    config = parse_config(std::string(bytes.begin(), bytes.end()));
  }
  config = apply_env_overrides(std::move(config), env);
  validate_config(config);
  return config;
}

void validate_config(const ServiceConfig& config) {
  if (config.port < 0 || config.port > 65535) throw Error(ErrorKind::Validation, "port out of range", "listen");
  if (config.workers < 1) throw Error(ErrorKind::Validation, "workers must be >= 1", "workers");
  if (config.max_queued_jobs < 1) throw Error(ErrorKind::Validation, "max_queued_jobs must be >= 1", "max_queued_jobs");
  if (config.artifact_root.empty()) throw Error(ErrorKind::Validation, "artifact_root is empty", "artifact_root");
  try {
    backbone_preset(config.preset);
  } catch (const Error&) {
    throw Error(ErrorKind::Validation, "unknown preset '" + config.preset + "'", "preset");
  }
}

}  // namespace unipaint::service
