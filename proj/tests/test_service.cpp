#include <doctest.h>

#include <thread>

#include "shapex/error.hpp"
#include "shapex/io.hpp"
#include "shapex/metrics.hpp"
#include "shapex/service.hpp"
#include "support.hpp"

// After Eigen: resolv.h defines _res.
#include <httplib.h>

using namespace shapex;
using nlohmann::json;
using shapex::test::TinyPipeline;

namespace {

std::string pgm64(const SketchImage& s) { return io::base64_encode(encode_pgm(s)); }

const ShapeRecord& chair_without(const Dataset& d, Attribute a) {
  for (const auto& r : d.records)
    if (r.category == Category::chair && !r.spec.attributes.contains(a)) return r;
  throw std::runtime_error("no chair");
}

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::io;
}

}  // namespace

TEST_CASE("status mapping, error bodies and alpha parsing") {
  CHECK(http_status(ErrorKind::data) == 400);
  CHECK(http_status(ErrorKind::not_found) == 404);
  CHECK(http_status(ErrorKind::state) == 409);
  CHECK(http_status(ErrorKind::numeric) == 500);
  const auto body = error_body(StateError("boom"), "/x");
  CHECK(body["code"] == "state");
  CHECK(body["message"] == "boom");
  CHECK(body["detail"] == "/x");
  CHECK(parse_alpha_list("0,1.5,3") == std::vector<double>{0.0, 1.5, 3.0});
  CHECK_THROWS_AS(parse_alpha_list("1,,2"), DataError);
  CHECK_THROWS_AS(parse_alpha_list("a"), DataError);
  CHECK_THROWS_AS(parse_alpha_list(""), DataError);
  CHECK(alpha_key(-0.0) == alpha_key(0.0));
  CHECK(alpha_key(0.1) != alpha_key(0.1 + 1e-16 * 8));
}

TEST_CASE("sessions from shapes and uploads") {
  auto& p = TinyPipeline::get();
  ExplorationService svc(*p.explorer);
  const auto& rec = p.dataset.records[0];
  const auto st = svc.create_session({{"shape", rec.id}});
  CHECK(st["source"] == rec.id);
  CHECK(st["coopt"]["final_loss"].get<double>() <= st["coopt"]["initial_loss"].get<double>());
  CHECK(st["direction"].is_null());
  CHECK(st["history"].empty());
  CHECK_FALSE(st.contains("code"));
  CHECK(svc.get_session(st["id"]) == st);

  const auto up = svc.create_session({{"sketch", pgm64(rec.sketch)}, {"category", "chair"}});
  CHECK(up["source"] == "upload");
  CHECK(up["id"] != st["id"]);
  CHECK(svc.session_count() == 2);

  CHECK(kind_of([&] { svc.create_session({{"shape", "chair_99999"}}); }) == ErrorKind::not_found);
  CHECK(kind_of([&] { svc.create_session({{"sketch", pgm64(SketchImage(32))}, {"category", "chair"}}); }) ==
        ErrorKind::data);
  CHECK(kind_of([&] { svc.create_session({{"sketch", "!!!!"}, {"category", "chair"}}); }) == ErrorKind::data);
  CHECK(kind_of([&] { svc.create_session(json::object()); }) == ErrorKind::data);
  CHECK(kind_of([&] { svc.get_session("s999"); }) == ErrorKind::not_found);
}

TEST_CASE("conditions, cached trajectories and renders") {
  auto& p = TinyPipeline::get();
  ExplorationService svc(*p.explorer);
  const auto& rec = chair_without(p.dataset, Attribute::armrest);
  const std::string id = svc.create_session({{"shape", rec.id}})["id"];

  CHECK(kind_of([&] { svc.get_trajectory(id, {0.0}); }) == ErrorKind::state);
  CHECK(kind_of([&] { svc.set_condition(id, {{"mode", "text"}, {"source", "a plain chair"}, {"target", "a chair with wings"}}); }) ==
        ErrorKind::data);

  const auto bin = svc.set_condition(id, {{"mode", "binary"}, {"attribute", "armrest"}});
  CHECK(bin["unit"] == true);
  CHECK(bin["norm"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(bin.contains("separation"));

  const auto text = svc.set_condition(id, {{"mode", "text"}, {"source", "a plain chair"}, {"target", "a chair with armrests"}});
  CHECK(text["mode"] == "text");
  CHECK(text["degenerate"] == false);

  const auto t1 = svc.get_trajectory(id, {3.0, 0.0, 2.0, 1.0});
  REQUIRE(t1["candidates"].size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(t1["candidates"][i]["alpha"].get<double>() == static_cast<double>(i));
  CHECK_FALSE(t1.contains("selected_alpha"));
  const auto t2 = svc.get_trajectory(id, {0.0, 1.0, 2.0, 3.0});
  CHECK(t2.dump() == t1.dump());
  CHECK(svc.get_session(id)["cached_alphas"].size() == 4);

  const auto bytes = svc.render(id, 2.0);
  CHECK(io::base64_encode(bytes) == t1["candidates"][2]["sketch"].get<std::string>());
  CHECK(kind_of([&] { svc.render(id, 2.5); }) == ErrorKind::state);

  const auto same = svc.set_condition(id, {{"mode", "sketch"}, {"sketch", pgm64(rec.sketch)}});
  CHECK(same["degenerate"] == true);
  CHECK(same.contains("warning"));
  const auto ts = svc.get_trajectory(id, {0.0, 1.0});
  for (const auto& c : ts["candidates"]) CHECK(c.contains("similarity"));
  CHECK(ts["selected_alpha"].get<double>() == 0.0);
}

TEST_CASE("accepting a candidate replaces the shape and clears the direction") {
  auto& p = TinyPipeline::get();
  ExplorationService svc(*p.explorer);
  const auto& rec = chair_without(p.dataset, Attribute::armrest);
  const std::string id = svc.create_session({{"shape", rec.id}})["id"];
  const std::string other = svc.create_session({{"shape", rec.id}})["id"];
  const auto other_before = svc.get_session(other).dump();

  svc.set_condition(id, {{"mode", "binary"}, {"attribute", "armrest"}});
  CHECK(kind_of([&] { svc.accept(id, 3.0); }) == ErrorKind::state);
  svc.get_trajectory(id, {0.0, 3.0});
  const auto after = svc.accept(id, 3.0);
  CHECK(after["history"].size() == 1);
  CHECK(after["direction"].is_null());
  CHECK(after["cached_alphas"].empty());
  CHECK(kind_of([&] { svc.get_trajectory(id, {1.0}); }) == ErrorKind::state);
  CHECK(svc.get_session(other).dump() == other_before);
}

TEST_CASE("accepting alpha zero adopts the co-optimized start") {
  auto& p = TinyPipeline::get();
  ExplorationService svc(*p.explorer);
  int checked = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    const auto& rec = p.dataset.records[i * 7];
    const std::string id = svc.create_session({{"shape", rec.id}})["id"];
    svc.set_condition(id, {{"mode", "text"}, {"source", "a plain chair"}, {"target", "a chair with stretchers"}});
    svc.get_trajectory(id, {0.0});
    const auto old_start = p.explorer->start_from_shape(rec).start.binarized();
    svc.accept(id, 0.0);
    // The alpha 0 candidate is decode(F(c~)) of the old start.
    const auto now = svc.get_session(id);
    CHECK(now["history"].size() == 1);
    CHECK(now["occupied"].get<std::size_t>() == old_start.occupied_count());
    ++checked;
  }
  CHECK(checked == 8);
}

TEST_CASE("concurrent sessions stay isolated") {
  auto& p = TinyPipeline::get();
  ExplorationService svc(*p.explorer);
  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i) ids.push_back(svc.create_session({{"shape", p.dataset.records[i].id}})["id"]);
  std::vector<std::string> solo(4);
  for (int i = 0; i < 4; ++i) {
    ExplorationService one(*p.explorer);
    const std::string sid = one.create_session({{"shape", p.dataset.records[i].id}})["id"];
    one.set_condition(sid, {{"mode", "text"}, {"source", "a plain chair"}, {"target", "a chair with armrests"}});
    solo[i] = one.get_trajectory(sid, {0.0, 1.5, 3.0}).dump();
  }
  std::vector<std::string> got(4);
  std::vector<std::thread> threads;
  for (int i = 0; i < 4; ++i)
    threads.emplace_back([&, i] {
      svc.set_condition(ids[i], {{"mode", "text"}, {"source", "a plain chair"}, {"target", "a chair with armrests"}});
      got[i] = svc.get_trajectory(ids[i], {0.0, 1.5, 3.0}).dump();
    });
  for (auto& t : threads) t.join();
  CHECK(got == solo);
}

TEST_CASE("HTTP routes and status codes") {
  auto& p = TinyPipeline::get();
  ExplorationService svc(*p.explorer);
  HttpServer server(svc);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread runner([&] { server.run(); });

  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(120, 0);
  auto health = cli.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  const auto h = json::parse(health->body);
  CHECK(h["status"] == "ok");
  CHECK(h["hashes"].size() == 6);

  auto created = cli.Post("/sessions", json{{"shape", p.dataset.records[0].id}}.dump(), "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const std::string id = json::parse(created->body)["id"];

  auto missing = cli.Get("/sessions/nope");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(json::parse(missing->body)["code"] == "not_found");

  auto early = cli.Get(("/sessions/" + id + "/trajectory?alphas=0,1").c_str());
  REQUIRE(early);
  CHECK(early->status == 409);

  auto bad = cli.Post(("/sessions/" + id + "/condition").c_str(), "{oops", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);

  auto cond = cli.Post(("/sessions/" + id + "/condition").c_str(),
                       json{{"mode", "binary"}, {"attribute", "armrest"}}.dump(), "application/json");
  REQUIRE(cond);
  CHECK(cond->status == 200);

  auto traj = cli.Get(("/sessions/" + id + "/trajectory?alphas=0,1,2,3").c_str());
  REQUIRE(traj);
  CHECK(traj->status == 200);
  CHECK(json::parse(traj->body)["candidates"].size() == 4);

  auto render = cli.Get(("/sessions/" + id + "/render/2").c_str());
  REQUIRE(render);
  CHECK(render->status == 200);
  CHECK(decode_pgm(render->body).width() == 64);

  auto accepted = cli.Post(("/sessions/" + id + "/accept").c_str(), json{{"alpha", 3.0}}.dump(), "application/json");
  REQUIRE(accepted);
  CHECK(accepted->status == 200);
  CHECK(json::parse(accepted->body)["history"].size() == 1);

  auto none = cli.Post(("/sessions/" + id + "/accept").c_str(), json{{"alpha", "x"}}.dump(), "application/json");
  REQUIRE(none);
  CHECK(none->status == 400);

  // A second server on the same port fails to start.
  HttpServer clash(svc);
  CHECK_THROWS_AS(clash.bind("127.0.0.1", port), IoError);

  server.stop();
  runner.join();
}
