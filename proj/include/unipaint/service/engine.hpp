#pragma once

#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "unipaint/pipeline.hpp"
#include "unipaint/service/artifact_store.hpp"
#include "unipaint/service/config.hpp"

namespace unipaint::service {

using Json = nlohmann::json;
using Bytes = std::vector<std::uint8_t>;

enum class FinetuneStatus { Idle, Running, Done, Failed };
enum class JobStatus { Queued, Running, Done, Failed };
enum class JobKind { Finetune, Inpaint };

std::string to_string(FinetuneStatus s);
std::string to_string(JobStatus s);
std::string to_string(JobKind k);

/// Finetune request body: {"iters", "lr", "seed", "use_exemplar"}; absent
/// keys keep the defaults.
FinetuneConfig parse_finetune_request(const Json& body);

/// Inpaint request body: {"prompt", "subject_token", "use_exemplar_token",
/// "tau", "scale", "steps", "seed", "num_outputs", "attn_mask"}. The stroke is
/// attached separately. `session_token` resolves "use_exemplar_token".
struct InpaintRequest {
  GuidanceSpec spec;
  SamplerConfig sampler;
};
InpaintRequest parse_inpaint_request(const Json& body, std::optional<int> session_token);

/// Session and job state machine over a bounded worker pool, persisted
/// through an ArtifactStore. All public members are thread-safe.
class Engine {
 public:
  explicit Engine(ServiceConfig config);
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  Json create_session(const Bytes& image_png, const Bytes& mask_png, const std::optional<Bytes>& exemplar_png);
  Json session(const std::string& session_id) const;

  /// Returns the job record of the queued finetune.
  Json start_finetune(const std::string& session_id, const Json& request);

  Json submit_inpaint(const std::string& session_id, const Json& request, const std::optional<Bytes>& stroke_png);

  Json job(const std::string& job_id) const;
  Bytes artifact(const std::string& job_id, int index) const;

  struct EventBatch {
    std::vector<Json> events;
    bool finished = false;
  };
  /// Events at positions >= `from`; waits up to `wait` if none are available
  /// yet and the job is still live.
  EventBatch events(const std::string& job_id, std::size_t from, std::chrono::milliseconds wait) const;

  /// Blocks until the job is done or failed (or the timeout elapses) and
  /// returns its record.
  Json wait_job(const std::string& job_id, std::chrono::milliseconds timeout) const;

  const ServiceConfig& config() const { return config_; }
  const ToyUNet& network() const { return net_; }
  const ParameterSet& base_parameters() const { return base_; }

 private:
  struct Session {
    std::string id;
    ImageBuffer image;
    RegionMask mask;
    std::optional<ImageBuffer> exemplar;
    std::optional<int> subject_token;
    std::string image_artifact, mask_artifact;
    std::optional<std::string> exemplar_artifact;
    FinetuneStatus finetune = FinetuneStatus::Idle;
    std::optional<std::string> finetune_job;
    std::optional<std::string> checkpoint_artifact;
    std::uint64_t finetune_iterations = 0;
    std::shared_ptr<const ParameterSet> params;
    std::vector<std::string> jobs;
    std::string error;
  };

  struct Job {
    std::string id;
    std::string session_id;
    JobKind kind = JobKind::Inpaint;
    JobStatus status = JobStatus::Queued;
    Json request;
    std::optional<std::string> stroke_artifact;
    std::vector<std::string> outputs;
    Json metrics = Json::object();
    std::vector<Json> events;
    int progress = 0;
    int progress_total = 0;
    std::string error;
  };

  Json session_json(const Session& s) const;
  Json job_json(const Job& j) const;
  void persist_session(const Session& s);
  void persist_job(const Job& j);
  void restore();
  std::string new_id(const char* prefix);
  Session& find_session(const std::string& id);
  const Session& find_session(const std::string& id) const;
  Job& find_job(const std::string& id);
  const Job& find_job(const std::string& id) const;
  void enqueue(std::function<void()> task);
  void worker_loop();
  void push_event(Job& job, Json event);
  void run_finetune_job(const std::string& job_id);
  void run_inpaint_job(const std::string& job_id);
  void finish_job(const std::string& job_id, const std::function<void(Job&)>& update, bool ok,
                  const std::string& error);

  ServiceConfig config_;
  ArtifactStore store_;
  ToyUNet net_;
  ParameterSet base_;
  NoiseSchedule sched_;

  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  std::map<std::string, std::unique_ptr<Job>> jobs_;
  std::uint64_t id_counter_ = 0;
  std::uint64_t id_salt_ = 0;

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<std::function<void()>> queue_;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace unipaint::service
