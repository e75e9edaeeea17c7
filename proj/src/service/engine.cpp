#include "unipaint/service/engine.hpp"

#include <cstdio>
#include <random>

#include "unipaint/image_io.hpp"

namespace unipaint::service {

namespace {

template <typename E>
E parse_enum(const std::string& text, std::initializer_list<E> values) {
  for (E v : values) {
    if (to_string(v) == text) return v;
  }
  throw Error(ErrorKind::Corrupt, "unknown state '" + text + "' in index");
}

bool is_terminal(JobStatus s) { return s == JobStatus::Done || s == JobStatus::Failed; }

template <typename T>
T field_as(const Json& body, const char* key) {
  try {
    return body.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::Validation, std::string(key) + " has the wrong type", key);
  }
}

Json metric_json(const MetricReport& report) { return Json::parse(report.to_json()); }

Bytes to_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

std::string to_string(FinetuneStatus s) {
  switch (s) {
    case FinetuneStatus::Idle: return "idle";
    case FinetuneStatus::Running: return "running";
    case FinetuneStatus::Done: return "done";
    case FinetuneStatus::Failed: return "failed";
  }
  return "?";
}

std::string to_string(JobStatus s) {
  switch (s) {
    case JobStatus::Queued: return "queued";
    case JobStatus::Running: return "running";
    case JobStatus::Done: return "done";
    case JobStatus::Failed: return "failed";
  }
  return "?";
}

std::string to_string(JobKind k) { return k == JobKind::Finetune ? "finetune" : "inpaint"; }

FinetuneConfig parse_finetune_request(const Json& body) {
  FinetuneConfig config;
  if (body.is_null()) return config;
  if (!body.is_object()) throw Error(ErrorKind::Validation, "finetune request must be a JSON object", "body");
  for (const auto& [key, value] : body.items()) {
    if (key == "iters") config.total_iters = field_as<int>(body, "iters");
    else if (key == "lr") config.learning_rate = field_as<double>(body, "lr");
    else if (key == "seed") config.seed = field_as<std::uint64_t>(body, "seed");
    else if (key == "use_exemplar") config.use_exemplar = field_as<bool>(body, "use_exemplar");
    else throw Error(ErrorKind::Validation, "unknown field '" + key + "'", key);
  }
  try {
    config.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Validation, e.what(), e.field().empty() ? "body" : e.field());
  }
  return config;
}

InpaintRequest parse_inpaint_request(const Json& body, std::optional<int> session_token) {
  InpaintRequest req;
  if (body.is_null()) return req;
  if (!body.is_object()) throw Error(ErrorKind::Validation, "job request must be a JSON object", "body");
  bool use_exemplar = false;
  for (const auto& [key, value] : body.items()) {
    if (value.is_null()) continue;
    if (key == "prompt") req.spec.prompt = field_as<std::string>(body, "prompt");
    else if (key == "subject_token") req.spec.subject_token = field_as<int>(body, "subject_token");
    else if (key == "use_exemplar_token") use_exemplar = field_as<bool>(body, "use_exemplar_token");
    else if (key == "tau") req.spec.tau = field_as<double>(body, "tau");
    else if (key == "scale") req.spec.scale = field_as<double>(body, "scale");
    else if (key == "steps") req.spec.steps = field_as<int>(body, "steps");
    else if (key == "seed") req.spec.seed = field_as<std::uint64_t>(body, "seed");
    else if (key == "num_outputs") req.spec.num_outputs = field_as<int>(body, "num_outputs");
    else if (key == "attn_mask") req.sampler.attn_mask_enabled = field_as<bool>(body, "attn_mask");
    else throw Error(ErrorKind::Validation, "unknown field '" + key + "'", key);
  }
  if (use_exemplar) {
    if (req.spec.subject_token) {
      throw Error(ErrorKind::Validation, "give either subject_token or use_exemplar_token", "use_exemplar_token");
    }
    if (!session_token) {
      throw Error(ErrorKind::Validation, "session has no exemplar token", "use_exemplar_token");
    }
    req.spec.subject_token = session_token;
  }
  return req;
}

Engine::Engine(ServiceConfig config)
    : config_(std::move(config)),
      store_(config_.artifact_root),
      net_(backbone_preset(config_.preset)),
      base_(net_.init_parameters(config_.init_seed)),
      sched_(make_schedule<double>(kDefaultTrainTimesteps)) {
  validate_config(config_);
  id_salt_ = (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}();
  restore();
  for (int i = 0; i < config_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

Engine::~Engine() {
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  for (auto& w : workers_) w.join();
}

std::string Engine::new_id(const char* prefix) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%016llx", prefix,
                static_cast<unsigned long long>(splitmix64(id_salt_ + ++id_counter_)));
  return buf;
}

Engine::Session& Engine::find_session(const std::string& id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorKind::NotFound, "session " + id + " not found");
  return *it->second;
}

const Engine::Session& Engine::find_session(const std::string& id) const {
  return const_cast<Engine*>(this)->find_session(id);
}

Engine::Job& Engine::find_job(const std::string& id) {
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw Error(ErrorKind::NotFound, "job " + id + " not found");
  return *it->second;
}

const Engine::Job& Engine::find_job(const std::string& id) const { return const_cast<Engine*>(this)->find_job(id); }

Json Engine::session_json(const Session& s) const {
  Json j{{"id", s.id},
         {"height", s.image.height()},
         {"width", s.image.width()},
         {"image", s.image_artifact},
         {"mask", s.mask_artifact},
         {"exemplar", s.exemplar_artifact ? Json(*s.exemplar_artifact) : Json()},
         {"subject_token", s.subject_token ? Json(*s.subject_token) : Json()},
         {"finetune",
          {{"status", to_string(s.finetune)},
           {"job", s.finetune_job ? Json(*s.finetune_job) : Json()},
           {"checkpoint", s.checkpoint_artifact ? Json(*s.checkpoint_artifact) : Json()},
           {"iterations", s.finetune_iterations},
           {"error", s.error}}},
         {"jobs", s.jobs}};
  if (s.subject_token) j["subject_word"] = default_tokenizer().word(*s.subject_token);
  return j;
}

Json Engine::job_json(const Job& j) const {
  return Json{{"id", j.id},
              {"session", j.session_id},
              {"kind", to_string(j.kind)},
              {"status", to_string(j.status)},
              {"request", j.request},
              {"stroke", j.stroke_artifact ? Json(*j.stroke_artifact) : Json()},
              {"outputs", j.outputs},
              {"metrics", j.metrics},
              {"progress", {{"done", j.progress}, {"total", j.progress_total}, {"events", j.events.size()}}},
              {"error", j.error}};
}

void Engine::persist_session(const Session& s) { store_.write_index("sessions", s.id, session_json(s).dump()); }

void Engine::persist_job(const Job& j) {
  Json doc = job_json(j);
  doc["events"] = j.events;
  store_.write_index("jobs", j.id, doc.dump());
}

void Engine::restore() {
  for (const auto& id : store_.list_index("sessions")) {
    const Json doc = Json::parse(*store_.read_index("sessions", id));
    auto s = std::make_unique<Session>();
    s->id = doc.at("id").get<std::string>();
    s->image_artifact = doc.at("image").get<std::string>();
    s->mask_artifact = doc.at("mask").get<std::string>();
    s->image = decode_png(store_.get(s->image_artifact), PixelFormat::Rgb);
    s->mask = decode_mask_png(store_.get(s->mask_artifact));
    if (!doc.at("exemplar").is_null()) {
      s->exemplar_artifact = doc.at("exemplar").get<std::string>();
      s->exemplar = decode_png(store_.get(*s->exemplar_artifact), PixelFormat::Rgb);
    }
    if (!doc.at("subject_token").is_null()) s->subject_token = doc.at("subject_token").get<int>();
    const Json& ft = doc.at("finetune");
    s->finetune = parse_enum(ft.at("status").get<std::string>(),
                             {FinetuneStatus::Idle, FinetuneStatus::Running, FinetuneStatus::Done, FinetuneStatus::Failed});
    if (!ft.at("job").is_null()) s->finetune_job = ft.at("job").get<std::string>();
    if (!ft.at("checkpoint").is_null()) s->checkpoint_artifact = ft.at("checkpoint").get<std::string>();
    s->finetune_iterations = ft.at("iterations").get<std::uint64_t>();
    s->error = ft.at("error").get<std::string>();
    s->jobs = doc.at("jobs").get<std::vector<std::string>>();
    if (s->finetune == FinetuneStatus::Running) {
      s->finetune = FinetuneStatus::Failed;
      s->error = "interrupted by restart";
      persist_session(*s);
    }
    if (s->finetune == FinetuneStatus::Done && s->checkpoint_artifact) {
      const Bytes bytes = store_.get(*s->checkpoint_artifact);
      s->params = std::make_shared<const ParameterSet>(
          deserialize_checkpoint(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
    }
    sessions_.emplace(s->id, std::move(s));
  }
  for (const auto& id : store_.list_index("jobs")) {
    const Json doc = Json::parse(*store_.read_index("jobs", id));
    auto j = std::make_unique<Job>();
    j->id = doc.at("id").get<std::string>();
    j->session_id = doc.at("session").get<std::string>();
    j->kind = parse_enum(doc.at("kind").get<std::string>(), {JobKind::Finetune, JobKind::Inpaint});
    j->status = parse_enum(doc.at("status").get<std::string>(),
                           {JobStatus::Queued, JobStatus::Running, JobStatus::Done, JobStatus::Failed});
    j->request = doc.at("request");
    if (!doc.at("stroke").is_null()) j->stroke_artifact = doc.at("stroke").get<std::string>();
    j->outputs = doc.at("outputs").get<std::vector<std::string>>();
    j->metrics = doc.at("metrics");
    j->progress = doc.at("progress").at("done").get<int>();
    j->progress_total = doc.at("progress").at("total").get<int>();
    j->events = doc.at("events").get<std::vector<Json>>();
    j->error = doc.at("error").get<std::string>();
    if (!is_terminal(j->status)) {
      j->status = JobStatus::Failed;
      j->error = "interrupted by restart";
      j->events.push_back(Json{{"type", "status"}, {"status", "failed"}, {"error", j->error}});
      persist_job(*j);
    }
    jobs_.emplace(j->id, std::move(j));
  }
}

Json Engine::create_session(const Bytes& image_png, const Bytes& mask_png, const std::optional<Bytes>& exemplar_png) {
  ImageBuffer image;
  RegionMask mask;
  try {
    image = decode_png(image_png, PixelFormat::Rgb);
  } catch (const Error& e) {
    throw Error(ErrorKind::Validation, e.what(), "image");
  }
  try {
    mask = decode_mask_png(mask_png);
  } catch (const Error& e) {
    throw Error(ErrorKind::Validation, e.what(), "mask");
  }
  validate_session_inputs(image, mask, net_.config());

  auto s = std::make_unique<Session>();
  if (exemplar_png) {
    try {
      s->exemplar = decode_png(*exemplar_png, PixelFormat::Rgb);
      require_factor(s->exemplar->height(), s->exemplar->width(), net_.config().codec_factor, "exemplar");
    } catch (const Error& e) {
      throw Error(ErrorKind::Validation, e.what(), "exemplar");
    }
    s->subject_token = resolve_subject_token(*s->exemplar);
    s->exemplar_artifact = store_.put(*exemplar_png, "png");
  }
  s->image = std::move(image);
  s->mask = std::move(mask);
  s->image_artifact = store_.put(image_png, "png");
  s->mask_artifact = store_.put(mask_png, "png");

  std::lock_guard lock(mutex_);
  s->id = new_id("s");
  persist_session(*s);
  Json out = session_json(*s);
  sessions_.emplace(s->id, std::move(s));
  return out;
}

Json Engine::session(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  return session_json(find_session(session_id));
}

Json Engine::start_finetune(const std::string& session_id, const Json& request) {
  const FinetuneConfig config = parse_finetune_request(request);
  std::unique_lock lock(mutex_);
  Session& s = find_session(session_id);
  if (s.finetune == FinetuneStatus::Running) {
    throw Error(ErrorKind::Conflict, "finetune already running for session " + session_id, "finetune");
  }
  if (s.finetune == FinetuneStatus::Done) {
    throw Error(ErrorKind::Conflict, "session " + session_id + " is already finetuned", "finetune");
  }
  auto job = std::make_unique<Job>();
  job->id = new_id("j");
  job->session_id = session_id;
  job->kind = JobKind::Finetune;
  job->request = Json{{"iters", config.total_iters},
                      {"lr", config.learning_rate},
                      {"seed", config.seed},
                      {"use_exemplar", config.use_exemplar}};
  job->progress_total = config.total_iters;
  const std::string id = job->id;
  enqueue([this, id] { run_finetune_job(id); });
  s.finetune = FinetuneStatus::Running;
  s.finetune_job = id;
  s.error.clear();
  s.jobs.push_back(id);
  persist_job(*job);
  persist_session(s);
  Json out = job_json(*job);
  jobs_.emplace(id, std::move(job));
  return out;
}

Json Engine::submit_inpaint(const std::string& session_id, const Json& request, const std::optional<Bytes>& stroke_png) {
  std::optional<int> token;
  RegionMask mask;
  {
    std::lock_guard lock(mutex_);
    const Session& s = find_session(session_id);
    if (s.finetune != FinetuneStatus::Done) {
      throw Error(ErrorKind::Conflict, "finetune for session " + session_id + " is " + to_string(s.finetune) +
                                           "; inpainting needs a finished finetune",
                  "finetune");
    }
    token = s.subject_token;
    mask = s.mask;
  }
  InpaintRequest req = parse_inpaint_request(request, token);
  if (stroke_png) {
    try {
      req.spec.stroke = make_stroke_map(decode_png(*stroke_png, PixelFormat::Rgba), net_.config().codec_factor);
    } catch (const Error& e) {
      throw Error(ErrorKind::Validation, e.what(), "stroke");
    }
  }
  validate_spec(req.spec, ValidationContext{mask, net_.config().vocab_size, sched_.T()});

  auto job = std::make_unique<Job>();
  job->kind = JobKind::Inpaint;
  job->session_id = session_id;
  job->request = request.is_null() ? Json::object() : request;
  if (stroke_png) job->stroke_artifact = store_.put(*stroke_png, "png");
  job->progress_total = req.spec.num_outputs * req.spec.steps.value_or(req.sampler.num_steps);

  std::lock_guard lock(mutex_);
  Session& s = find_session(session_id);
  job->id = new_id("j");
  const std::string id = job->id;
  enqueue([this, id] { run_inpaint_job(id); });
  s.jobs.push_back(id);
  persist_job(*job);
  persist_session(s);
  Json out = job_json(*job);
  jobs_.emplace(id, std::move(job));
  return out;
}

Json Engine::job(const std::string& job_id) const {
  std::lock_guard lock(mutex_);
  return job_json(find_job(job_id));
}

Bytes Engine::artifact(const std::string& job_id, int index) const {
  std::string name;
  {
    std::lock_guard lock(mutex_);
    const Job& j = find_job(job_id);
    if (index < 0 || index >= static_cast<int>(j.outputs.size())) {
      throw Error(ErrorKind::NotFound, "job " + job_id + " has no artifact " + std::to_string(index));
    }
    name = j.outputs[static_cast<std::size_t>(index)];
  }
  return store_.get(name);
}

Engine::EventBatch Engine::events(const std::string& job_id, std::size_t from, std::chrono::milliseconds wait) const {
  std::unique_lock lock(mutex_);
  const Job& j = find_job(job_id);
  changed_.wait_for(lock, wait, [&] { return j.events.size() > from || is_terminal(j.status); });
  EventBatch batch;
  for (std::size_t i = from; i < j.events.size(); ++i) batch.events.push_back(j.events[i]);
  batch.finished = is_terminal(j.status);
  return batch;
}

Json Engine::wait_job(const std::string& job_id, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  const Job& j = find_job(job_id);
  changed_.wait_for(lock, timeout, [&] { return is_terminal(j.status); });
  return job_json(j);
}

void Engine::enqueue(std::function<void()> task) {
  {
    std::lock_guard lock(queue_mutex_);
    if (static_cast<int>(queue_.size()) >= config_.max_queued_jobs) {
      throw Error(ErrorKind::Conflict, "job queue is full", "queue");
    }
    queue_.push_back(std::move(task));
  }
  queue_cv_.notify_one();
}

void Engine::worker_loop() {
  for (;;) {
    std::function<void()> task;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      task = std::move(queue_.front());
      queue_.pop_front();
    }
    task();
  }
}

void Engine::push_event(Job& job, Json event) {
  job.events.push_back(std::move(event));
  changed_.notify_all();
}

void Engine::finish_job(const std::string& job_id, const std::function<void(Job&)>& update, bool ok,
                        const std::string& error) {
  std::lock_guard lock(mutex_);
  Job& j = find_job(job_id);
  update(j);
  j.status = ok ? JobStatus::Done : JobStatus::Failed;
  j.error = error;
  Json event{{"type", "status"}, {"status", to_string(j.status)}};
  if (!ok) event["error"] = error;
  push_event(j, std::move(event));
  persist_job(j);
}

void Engine::run_finetune_job(const std::string& job_id) {
  FinetuneConfig config;
  ImageBuffer image;
  RegionMask mask;
  std::optional<ImageBuffer> exemplar;
  std::optional<int> token;
  std::string session_id;
  {
    std::lock_guard lock(mutex_);
    Job& j = find_job(job_id);
    j.status = JobStatus::Running;
    push_event(j, Json{{"type", "status"}, {"status", "running"}});
    persist_job(j);
    config = parse_finetune_request(j.request);
    session_id = j.session_id;
    const Session& s = find_session(session_id);
    image = s.image;
    mask = s.mask;
    exemplar = s.exemplar;
    token = s.subject_token;
  }
  try {
    const ParameterSet params = finetune_on_image(
        net_, base_, image, mask, exemplar, token, config, sched_, [&](const FinetuneTelemetry& t) {
          std::lock_guard lock(mutex_);
          Job& j = find_job(job_id);
          j.progress = t.iteration + 1;
          push_event(j, Json{{"type", "finetune"},
                             {"iteration", t.iteration},
                             {"bg_loss", t.bg_loss},
                             {"ref_loss", t.ref_loss},
                             {"loss", t.total_loss},
                             {"seconds", t.wall_seconds}});
        });
    const std::string ckpt = store_.put(to_bytes(serialize_checkpoint(params)), "ckpt");
    {
      std::lock_guard lock(mutex_);
      Session& s = find_session(session_id);
      s.params = std::make_shared<const ParameterSet>(params);
      s.checkpoint_artifact = ckpt;
      s.finetune_iterations = params.finetune_iterations();
      s.finetune = FinetuneStatus::Done;
      persist_session(s);
    }
    finish_job(job_id, [&](Job& j) { j.outputs = {ckpt}; }, true, "");
  } catch (const std::exception& e) {
    {
      std::lock_guard lock(mutex_);
      Session& s = find_session(session_id);
      s.finetune = FinetuneStatus::Failed;
      s.error = e.what();
      persist_session(s);
    }
    finish_job(job_id, [](Job&) {}, false, e.what());
  }
}

void Engine::run_inpaint_job(const std::string& job_id) {
  Json request;
  std::optional<std::string> stroke_artifact;
  ImageBuffer image;
  RegionMask mask;
  std::optional<int> token;
  std::shared_ptr<const ParameterSet> params;
  {
    std::lock_guard lock(mutex_);
    Job& j = find_job(job_id);
    j.status = JobStatus::Running;
    push_event(j, Json{{"type", "status"}, {"status", "running"}});
    persist_job(j);
    request = j.request;
    stroke_artifact = j.stroke_artifact;
    const Session& s = find_session(j.session_id);
    image = s.image;
    mask = s.mask;
    token = s.subject_token;
    params = s.params;
  }
  try {
    if (!params) throw Error(ErrorKind::NotFound, "session has no finetuned parameters");
    InpaintRequest req = parse_inpaint_request(request, token);
    if (stroke_artifact) {
      req.spec.stroke = make_stroke_map(decode_png(store_.get(*stroke_artifact), PixelFormat::Rgba),
                                        net_.config().codec_factor);
    }
    const InpaintResult result =
        inpaint_image(net_, *params, image, mask, req.spec, req.sampler, sched_, [&](const StepEvent& e) {
          std::lock_guard lock(mutex_);
          Job& j = find_job(job_id);
          j.progress = e.output_index * e.total_steps + e.step_index + 1;
          push_event(j, Json{{"type", "step"},
                             {"output", e.output_index},
                             {"step", e.step_index},
                             {"total", e.total_steps},
                             {"t", e.t},
                             {"t_prev", e.t_prev},
                             {"conditional", e.conditional},
                             {"stroke_injected", e.stroke_injected},
                             {"predictions", e.predictions}});
        });
    std::vector<std::string> outputs;
    for (const auto& img : result.images) outputs.push_back(store_.put(encode_png(img), "png"));
    Json metrics{{"known_region_error", metric_json(result.known_error)}};
    if (result.stroke_rmse) metrics["stroke_rmse"] = metric_json(*result.stroke_rmse);
    finish_job(job_id, [&](Job& j) {
      j.outputs = outputs;
      j.metrics = metrics;
    }, true, "");
  } catch (const std::exception& e) {
    finish_job(job_id, [](Job&) {}, false, e.what());
  }
}

}  // namespace unipaint::service
