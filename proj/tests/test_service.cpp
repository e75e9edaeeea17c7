#include <doctest.h>

#include <filesystem>
#include <thread>

#include "fixtures.hpp"
#include "unipaint/image_io.hpp"
#include "unipaint/metrics.hpp"
#include "unipaint/service/http_server.hpp"

#include <httplib.h>

using namespace unipaint;
using namespace unipaint::service;
using namespace std::chrono_literals;

namespace {

struct Uploads {
  Bytes image = encode_png(fixtures::image(32, 32, 3));
  Bytes mask = encode_mask_png(fixtures::hole_mask(32, 32, 8, 8, 16, 16));
  Bytes exemplar = encode_png(fixtures::image(16, 16, 4));
  Bytes stroke = encode_png(fixtures::stroke_rgba(32, 32, 12, 12, 8, 8, {0.9, 0.1, 0.1}));
};

ServiceConfig test_config(const fixtures::TempDir& dir, int workers = 2) {
  ServiceConfig c;
  c.artifact_root = dir.str("store");
  c.workers = workers;
  c.preset = "tiny";
  c.init_seed = 3;
  return c;
}

EnvLookup env_of(std::map<std::string, std::string> vars) {
  return [vars](const std::string& name) -> std::optional<std::string> {
    auto it = vars.find(name);
    if (it == vars.end()) return std::nullopt;
    return it->second;
  };
}

std::string field_of(const std::function<void()>& f, ErrorKind expected) {
  try {
    f();
  } catch (const Error& e) {
    CHECK(e.kind() == expected);
    return e.field();
  }
  return "no error";
}

std::string finetuned_session(Engine& engine, const Uploads& up, int iters = 2) {
  const Json s = engine.create_session(up.image, up.mask, up.exemplar);
  const std::string id = s["id"];
  const Json job = engine.start_finetune(id, Json{{"iters", iters}, {"lr", 1e-3}});
  const Json done = engine.wait_job(job["id"], 120s);
  REQUIRE(done["status"] == "done");
  return id;
}

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("config file and environment overrides") {
    const ServiceConfig d;
    CHECK(d.host == "127.0.0.1");
    CHECK(d.port == 8080);
    const ServiceConfig c = parse_config(R"({"listen":"0.0.0.0:9001","workers":3,"preset":"tiny","artifact_root":"x"})");
    CHECK(c.host == "0.0.0.0");
    CHECK(c.port == 9001);
    CHECK(c.workers == 3);
    CHECK(c.preset == "tiny");
    const ServiceConfig o = apply_env_overrides(c, env_of({{"UNIPAINT_LISTEN", "127.0.0.1:7000"},
                                                           {"UNIPAINT_WORKERS", "5"},
                                                           {"UNIPAINT_ARTIFACT_ROOT", "/tmp/y"},
                                                           {"UNIPAINT_PRESET", "small"}}));
    CHECK(o.port == 7000);
    CHECK(o.workers == 5);
    CHECK(o.artifact_root == "/tmp/y");
    CHECK(o.preset == "small");
    CHECK(field_of([] { parse_config(R"({"colour":1})"); }, ErrorKind::Validation) == "colour");
    CHECK(field_of([] { parse_config(R"({"workers":"two"})"); }, ErrorKind::Validation) == "workers");
    CHECK(field_of([] { apply_env_overrides({}, env_of({{"UNIPAINT_LISTEN", "nope"}})); }, ErrorKind::Validation) == "listen");
    ServiceConfig bad;
    bad.workers = 0;
    CHECK_THROWS_AS(validate_config(bad), Error);

    fixtures::TempDir dir("svc-config");
    write_file_atomic(dir.str("c.json"), std::string(R"({"workers":4})"));
    const ServiceConfig loaded = load_config(dir.str("c.json"), env_of({{"UNIPAINT_WORKERS", "6"}}));
    CHECK(loaded.workers == 6);
    CHECK(load_config(std::nullopt, env_of({})).workers == 2);
  }

  TEST_CASE("artifact store") {
    fixtures::TempDir dir("svc-store");
    ArtifactStore store(dir.path());
    CHECK(sha256_hex({}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex({'a', 'b', 'c'}) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const std::string name = store.put({'a', 'b', 'c'}, "bin");
    CHECK(name == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad.bin");
    CHECK(store.put({'a', 'b', 'c'}, "bin") == name);
    CHECK(store.contains(name));
    CHECK(store.get(name) == Bytes{'a', 'b', 'c'});
    CHECK_FALSE(store.contains("0000.bin"));
    CHECK_THROWS_AS(store.get("../etc/passwd"), Error);
    CHECK_THROWS_AS(store.get("0000.bin"), Error);

    store.write_index("sessions", "s1", R"({"a":1})");
    store.write_index("sessions", "s2", R"({"a":2})");
    store.write_index("sessions", "s1", R"({"a":3})");
    CHECK(*store.read_index("sessions", "s1") == R"({"a":3})");
    CHECK_FALSE(store.read_index("sessions", "nope").has_value());
    CHECK(store.list_index("sessions") == std::vector<std::string>{"s1", "s2"});
    CHECK(store.list_index("jobs").empty());
  }

  TEST_CASE("request parsing") {
    const FinetuneConfig f = parse_finetune_request(Json{{"iters", 7}, {"lr", 0.01}});
    CHECK(f.total_iters == 7);
    CHECK(f.learning_rate == 0.01);
    CHECK(parse_finetune_request(Json()).total_iters == 100);
    CHECK(field_of([] { parse_finetune_request(Json{{"iters", "x"}}); }, ErrorKind::Validation) == "iters");
    CHECK(field_of([] { parse_finetune_request(Json{{"epochs", 1}}); }, ErrorKind::Validation) == "epochs");

    const InpaintRequest r = parse_inpaint_request(
        Json{{"prompt", "cat"}, {"use_exemplar_token", true}, {"steps", 3}, {"attn_mask", false}}, 12);
    CHECK(*r.spec.prompt == "cat");
    CHECK(*r.spec.subject_token == 12);
    CHECK(*r.spec.steps == 3);
    CHECK_FALSE(r.sampler.attn_mask_enabled);
    CHECK(field_of([] { parse_inpaint_request(Json{{"use_exemplar_token", true}}, std::nullopt); },
                   ErrorKind::Validation) == "use_exemplar_token");
    CHECK(field_of([] { parse_inpaint_request(Json{{"scale", "big"}}, std::nullopt); }, ErrorKind::Validation) == "scale");
  }

  TEST_CASE("session validation") {
    fixtures::TempDir dir("svc-sessions");
    Engine engine(test_config(dir));
    const Uploads up;
    const Json s = engine.create_session(up.image, up.mask, std::nullopt);
    CHECK(s["finetune"]["status"] == "idle");
    CHECK(s["subject_token"].is_null());
    CHECK(engine.session(s["id"])["id"] == s["id"]);

    const Json with_ex = engine.create_session(up.image, up.mask, up.exemplar);
    CHECK(with_ex["subject_token"].is_number_integer());
    CHECK(with_ex["subject_token"].get<int>() >= 2);

    const Bytes all_known = encode_mask_png(RegionMask::ones(32, 32));
    CHECK(field_of([&] { engine.create_session(up.image, all_known, std::nullopt); }, ErrorKind::Validation) == "mask");
    const Bytes small_mask = encode_mask_png(RegionMask::zeros(16, 16));
    CHECK(field_of([&] { engine.create_session(up.image, small_mask, std::nullopt); }, ErrorKind::Validation) == "mask");
    CHECK(field_of([&] { engine.create_session(Bytes{1, 2}, up.mask, std::nullopt); }, ErrorKind::Validation) == "image");
    CHECK_THROWS_AS(engine.session("nope"), Error);
  }

  TEST_CASE("finetune and inpaint state machine") {
    fixtures::TempDir dir("svc-engine");
    Engine engine(test_config(dir));
    const Uploads up;
    const Json s = engine.create_session(up.image, up.mask, up.exemplar);
    const std::string sid = s["id"];

    CHECK(field_of([&] { engine.submit_inpaint(sid, Json::object(), std::nullopt); }, ErrorKind::Conflict) == "finetune");

    const Json job = engine.start_finetune(sid, Json{{"iters", 3}, {"lr", 1e-3}});
    CHECK(job["kind"] == "finetune");
    const std::string running_status = engine.session(sid)["finetune"]["status"];
    if (running_status == "running") {
      CHECK(field_of([&] { engine.start_finetune(sid, Json::object()); }, ErrorKind::Conflict) == "finetune");
    }
    const Json done = engine.wait_job(job["id"], 120s);
    REQUIRE(done["status"] == "done");
    CHECK(done["progress"]["done"] == 3);
    const Json session = engine.session(sid);
    CHECK(session["finetune"]["status"] == "done");
    CHECK(session["finetune"]["iterations"] == 3);
    CHECK(field_of([&] { engine.start_finetune(sid, Json::object()); }, ErrorKind::Conflict) == "finetune");

    const auto events = engine.events(job["id"], 0, 0ms);
    CHECK(events.finished);
    int finetune_events = 0;
    for (const auto& e : events.events) finetune_events += e["type"] == "finetune" ? 1 : 0;
    CHECK(finetune_events == 3);
    CHECK(events.events.back()["status"] == "done");

    CHECK(field_of([&] { engine.submit_inpaint(sid, Json{{"steps", 0}}, std::nullopt); }, ErrorKind::Validation) == "steps");
    CHECK(field_of([&] { engine.submit_inpaint(sid, Json{{"tau", 0.5}}, std::nullopt); }, ErrorKind::Validation) == "tau");
    const Bytes bad_stroke = encode_png(fixtures::stroke_rgba(32, 32, 0, 0, 4, 4, {1, 0, 0}));
    CHECK(field_of([&] { engine.submit_inpaint(sid, Json::object(), bad_stroke); }, ErrorKind::Validation) == "stroke");

    const Json ij = engine.submit_inpaint(sid, Json{{"prompt", "red"}, {"steps", 4}, {"num_outputs", 2}, {"seed", 5}}, up.stroke);
    const Json result = engine.wait_job(ij["id"], 120s);
    REQUIRE(result["status"] == "done");
    CHECK(result["outputs"].size() == 2);
    CHECK(result["metrics"]["stroke_rmse"]["count"] == 2);
    CHECK(result["metrics"]["known_region_error"]["mean"] == 0.0);
    CHECK(result["progress"]["done"] == 8);
    CHECK(engine.session(sid)["finetune"]["status"] == "done");

    const ImageBuffer out = decode_png(engine.artifact(ij["id"], 0), PixelFormat::Rgb);
    CHECK(known_region_error(out, fixtures::image(32, 32, 3), fixtures::hole_mask(32, 32, 8, 8, 16, 16)) == 0.0);
    CHECK_THROWS_AS(engine.artifact(ij["id"], 2), Error);
    CHECK_THROWS_AS(engine.job("missing"), Error);

    int steps = 0;
    for (const auto& e : engine.events(ij["id"], 0, 0ms).events) {
      if (e["type"] == "step") {
        ++steps;
        CHECK(e["predictions"] == (e["conditional"].get<bool>() ? 2 : 1));
      }
    }
    CHECK(steps == 8);
    CHECK(engine.events(ij["id"], 1000, 0ms).events.empty());
  }

  TEST_CASE("restart reloads sessions and fails interrupted jobs") {
    fixtures::TempDir dir("svc-restart");
    const Uploads up;
    std::string sid, job_id, idle_sid;
    Bytes first_output;
    {
      Engine engine(test_config(dir));
      sid = finetuned_session(engine, up);
      const Json ij = engine.submit_inpaint(sid, Json{{"steps", 3}, {"seed", 1}}, std::nullopt);
      REQUIRE(engine.wait_job(ij["id"], 120s)["status"] == "done");
      job_id = ij["id"];
      first_output = engine.artifact(job_id, 0);
      idle_sid = engine.create_session(up.image, up.mask, std::nullopt)["id"];
    }
    {
      ArtifactStore store(dir.str("store"));
      Json doc = Json::parse(*store.read_index("sessions", idle_sid));
      doc["finetune"]["status"] = "running";
      store.write_index("sessions", idle_sid, doc.dump());
      Json jdoc = Json::parse(*store.read_index("jobs", job_id));
      jdoc["id"] = "jzombie";
      jdoc["status"] = "running";
      store.write_index("jobs", "jzombie", jdoc.dump());
    }
    Engine engine(test_config(dir));
    CHECK(engine.session(sid)["finetune"]["status"] == "done");
    CHECK(engine.job(job_id)["status"] == "done");
    CHECK(engine.artifact(job_id, 0) == first_output);
    CHECK(engine.session(idle_sid)["finetune"]["status"] == "failed");
    CHECK(engine.job("jzombie")["status"] == "failed");

    const Json again = engine.submit_inpaint(sid, Json{{"steps", 3}, {"seed", 1}}, std::nullopt);
    REQUIRE(engine.wait_job(again["id"], 120s)["status"] == "done");
    CHECK(engine.artifact(again["id"], 0) == first_output);

    const Json retry = engine.start_finetune(idle_sid, Json{{"iters", 1}});
    CHECK(engine.wait_job(retry["id"], 120s)["status"] == "done");
  }

  TEST_CASE("bounded queue rejects overflow") {
    fixtures::TempDir dir("svc-queue");
    ServiceConfig config = test_config(dir, 1);
    config.max_queued_jobs = 1;
    Engine engine(config);
    const Uploads up;
    std::vector<std::string> sessions;
    for (int i = 0; i < 4; ++i) sessions.push_back(engine.create_session(up.image, up.mask, std::nullopt)["id"]);
    int rejected = 0;
    std::vector<std::string> jobs;
    for (const auto& sid : sessions) {
      try {
        jobs.push_back(engine.start_finetune(sid, Json{{"iters", 30}})["id"]);
      } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Conflict);
        CHECK(e.field() == "queue");
        ++rejected;
      }
    }
    CHECK(rejected >= 1);
    for (const auto& j : jobs) CHECK(engine.wait_job(j, 120s)["status"] == "done");
  }

  TEST_CASE("http end to end") {
    fixtures::TempDir dir("svc-http");
    Engine engine(test_config(dir));
    HttpServer server(engine);
    const int port = server.bind("127.0.0.1", 0);
    std::thread thread([&] { server.serve(); });

    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(120, 0);
    const Uploads up;
    auto part = [](const char* name, const Bytes& b, const char* type) {
      return httplib::MultipartFormData{name, std::string(b.begin(), b.end()), std::string(name) + ".png", type};
    };

    auto created = client.Post("/sessions", httplib::MultipartFormDataItems{part("image", up.image, "image/png"),
                                                                            part("mask", up.mask, "image/png")});
    REQUIRE(created);
    CHECK(created->status == 201);
    const std::string sid = Json::parse(created->body)["id"];

    auto missing = client.Post("/sessions", httplib::MultipartFormDataItems{part("image", up.image, "image/png")});
    REQUIRE(missing);
    CHECK(missing->status == 400);
    CHECK(Json::parse(missing->body)["field"] == "mask");

    auto early = client.Post("/sessions/" + sid + "/jobs", "{}", "application/json");
    REQUIRE(early);
    CHECK(early->status == 409);

    auto ft = client.Post("/sessions/" + sid + "/finetune", R"({"iters":2,"lr":0.001})", "application/json");
    REQUIRE(ft);
    CHECK(ft->status == 202);
    const std::string ft_id = Json::parse(ft->body)["id"];
    REQUIRE(engine.wait_job(ft_id, 120s)["status"] == "done");

    auto bad = client.Post("/sessions/" + sid + "/jobs", R"({"scale":-2})", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    CHECK(Json::parse(bad->body)["field"] == "scale");
    auto garbled = client.Post("/sessions/" + sid + "/jobs", "{not json", "application/json");
    REQUIRE(garbled);
    CHECK(garbled->status == 400);

    const std::string spec = R"({"prompt":"red","steps":3,"seed":2})";
    auto submitted = client.Post("/sessions/" + sid + "/jobs",
                                 httplib::MultipartFormDataItems{{"spec", spec, "", "application/json"},
                                                                 part("stroke", up.stroke, "image/png")});
    REQUIRE(submitted);
    CHECK(submitted->status == 202);
    const std::string jid = Json::parse(submitted->body)["id"];

    auto stream = client.Get("/jobs/" + jid + "/events");
    REQUIRE(stream);
    CHECK(stream->status == 200);
    std::vector<Json> lines;
    std::istringstream in(stream->body);
    for (std::string line; std::getline(in, line);) lines.push_back(Json::parse(line));
    REQUIRE_FALSE(lines.empty());
    CHECK(lines.front()["status"] == "running");
    CHECK(lines.back()["status"] == "done");
    int steps = 0;
    for (const auto& l : lines) steps += l["type"] == "step" ? 1 : 0;
    CHECK(steps == 3);

    auto tail = client.Get("/jobs/" + jid + "/events?from=" + std::to_string(lines.size() - 1));
    REQUIRE(tail);
    CHECK(Json::parse(tail->body.substr(0, tail->body.find('\n')))["status"] == "done");

    auto record = client.Get("/jobs/" + jid);
    REQUIRE(record);
    CHECK(Json::parse(record->body)["status"] == "done");
    CHECK(Json::parse(record->body)["metrics"].contains("stroke_rmse"));

    auto png = client.Get("/jobs/" + jid + "/artifacts/0");
    REQUIRE(png);
    CHECK(png->status == 200);
    CHECK(png->get_header_value("Content-Type") == "image/png");
    CHECK(Bytes(png->body.begin(), png->body.end()) == engine.artifact(jid, 0));

    auto session = client.Get("/sessions/" + sid);
    REQUIRE(session);
    CHECK(Json::parse(session->body)["jobs"].size() == 2);

    auto nf = client.Get("/jobs/nope");
    REQUIRE(nf);
    CHECK(nf->status == 404);
    CHECK(Json::parse(nf->body)["error"] == "not_found");
    auto nf_events = client.Get("/jobs/nope/events");
    REQUIRE(nf_events);
    CHECK(nf_events->status == 404);
    auto nf_art = client.Get("/jobs/" + jid + "/artifacts/9");
    REQUIRE(nf_art);
    CHECK(nf_art->status == 404);

    server.stop();
    thread.join();
  }
}
