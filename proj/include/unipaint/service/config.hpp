#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

namespace unipaint::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string artifact_root = "unipaint-data";
  int workers = 2;
  std::string preset = "small";
  std::uint64_t init_seed = 0;  // base parameters every session finetunes from
  int max_queued_jobs = 64;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Process environment.
std::optional<std::string> process_env(const std::string& name);

/// JSON object with any of: listen ("host:port"), artifact_root, workers,
/// preset, init_seed, max_queued_jobs.
ServiceConfig parse_config(const std::string& json_text);

/// UNIPAINT_LISTEN, UNIPAINT_ARTIFACT_ROOT, UNIPAINT_WORKERS, UNIPAINT_PRESET.
ServiceConfig apply_env_overrides(ServiceConfig config, const EnvLookup& env = process_env);

/// Defaults, then the file (if given), then the environment.
ServiceConfig load_config(const std::optional<std::string>& path, const EnvLookup& env = process_env);

void validate_config(const ServiceConfig& config);

}  // namespace unipaint::service
