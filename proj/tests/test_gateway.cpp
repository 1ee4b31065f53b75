#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "qsim/gateway.hpp"
#include "test_support.hpp"

using namespace qsim;
using json = nlohmann::json;

namespace {

struct Server {
  Gateway gw;
  int port;
  explicit Server(SessionMode mode, double scale = 10.0)
      : gw([&] {
          GatewayConfig c;
          c.port = 0;
          c.mode = mode;
          c.time_scale = scale;
          c.data_dir = test::data_dir();
          return c;
        }()),
        port(gw.start()) {}
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c;
  }
};

json body(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

void register_islands(httplib::Client& c) {
  const char* ns[] = {"", "ran-core", "edge-app", "mec", "dc-gw"};
  for (int i = 1; i <= 4; ++i) {
    json reg{{"certificate_id", "cert-" + std::to_string(i)},
             {"proxy_endpoint", "https://island-" + std::to_string(i)},
             {"catalogue", {{{"ns_id", ns[i]}, {"vnfs", {"x"}}}}}};
    auto r = c.Post("/v1/islands", reg.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 201);
    CHECK(body(r).at("island_id") == i);
  }
}

json compose(httplib::Client& c, const std::string& id, int a, const char* na, int b, const char* nb, bool secured) {
  json req{{"ins_id", id}, {"members", {{{"island", a}, {"ns", na}}, {{"island", b}, {"ns", nb}}}}, {"secured", secured}};
  auto r = c.Post("/v1/ins", req.dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == 201);
  return body(r);
}

}  // namespace

TEST_CASE("compose then read returns the new service") {
  Server s(SessionMode::Step);
  auto c = s.client();
  register_islands(c);
  compose(c, "A", 1, "ran-core", 2, "edge-app", true);
  auto got = c.Get("/v1/ins/A");
  REQUIRE(got);
  CHECK(got->status == 200);
  CHECK(body(got).at("lifecycle") == "COMPOSED");
  CHECK(body(c.Get("/v1/catalogue")).size() == 4);
  CHECK(body(c.Get("/v1/islands")).size() == 4);
  CHECK(body(c.Get("/v1/topology")).contains("state"));
}

TEST_CASE("errors carry code and message") {
  Server s(SessionMode::Step);
  auto c = s.client();
  auto r = c.Get("/v1/ins/none");
  REQUIRE(r);
  CHECK(r->status == 404);
  CHECK(body(r).at("code") == "not_found");
  CHECK(body(r).contains("message"));
  auto bad = c.Post("/v1/ins", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(body(bad).at("code") == "schema_error");
  register_islands(c);
  compose(c, "A", 1, "ran-core", 3, "mec", false);
  compose(c, "B", 1, "ran-core", 2, "edge-app", false);
  // A takes the first slot on island 1; C is pinned onto it
  REQUIRE(c.Post("/v1/ins/A/deploy", "", "application/json")->status == 202);
  auto step = c.Post("/v1/session/step", json{{"until", 1000}}.dump(), "application/json");
  REQUIRE(step);
  CHECK(body(c.Get("/v1/ins/A")).at("lifecycle") == "OPERATIONAL");
  json composed{{"ins_id", "C"},
                {"members", {{{"island", 1}, {"ns", "ran-core"}}, {{"island", 4}, {"ns", "dc-gw"}}}},
                {"pinned_wavelength_thz", 195.0}};
  REQUIRE(c.Post("/v1/ins", composed.dump(), "application/json")->status == 201);
  auto inf = c.Post("/v1/ins/C/deploy", "", "application/json");
  REQUIRE(inf);
  CHECK(inf->status == 422);
  CHECK(body(inf).at("code") == "infeasible");
  CHECK(body(inf).contains("violated_constraint"));
}

TEST_CASE("concurrent deploys of one service: one accepted, one invalid-state") {
  Server s(SessionMode::Step);
  auto c0 = s.client();
  register_islands(c0);
  compose(c0, "D", 1, "ran-core", 2, "edge-app", false);
  std::atomic<int> accepted{0};
  std::atomic<int> conflict{0};
  auto hit = [&] {
    auto c = s.client();
    auto r = c.Post("/v1/ins/D/deploy", "", "application/json");
    if (!r) return;
    if (r->status == 202) ++accepted;
    if (r->status == 409 && json::parse(r->body).at("code") == "invalid_state") ++conflict;
  };
  std::thread t1(hit);
  std::thread t2(hit);
  t1.join();
  t2.join();
  CHECK(accepted == 1);
  CHECK(conflict == 1);
}

TEST_CASE("fast mode runs a service to OPERATIONAL") {
  Server s(SessionMode::Fast);
  auto c = s.client();
  register_islands(c);
  compose(c, "F", 2, "edge-app", 4, "dc-gw", true);
  auto r = c.Post("/v1/ins/F/deploy", "", "application/json");
  REQUIRE(r);
  CHECK(r->status == 202);
  json state;
  for (int i = 0; i < 200; ++i) {
    state = body(c.Get("/v1/ins/F"));
    if (state.at("lifecycle") == "OPERATIONAL") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  CHECK(state.at("lifecycle") == "OPERATIONAL");
  CHECK(state.at("telemetry").at("qkd") == "KEYS_FLOWING");
  auto del = c.Delete("/v1/ins/F");
  REQUIRE(del);
  CHECK(body(del).at("lifecycle") == "TERMINATED");
}

TEST_CASE("stream delivers the scenario log in order without gaps") {
  Server s(SessionMode::Realtime, 2000.0);
  auto c = s.client();
  auto launched = c.Post("/v1/run/scenario1to2to3", "", "application/json");
  REQUIRE(launched);
  REQUIRE(launched->status == 202);
  const auto run_id = body(launched).at("run_id").get<std::uint64_t>();
  std::vector<std::uint64_t> seqs;
  std::uint64_t next = 0;
  for (int polls = 0; polls < 2000; ++polls) {
    auto r = c.Get(("/v1/stream?since=" + std::to_string(next) + "&timeout_ms=500").c_str());
    REQUIRE(r);
    const auto j = json::parse(r->body);
    REQUIRE(j.at("run_id") == run_id);
    for (const auto& e : j.at("events")) seqs.push_back(e.at("seq").get<std::uint64_t>());
    next = j.at("next").get<std::uint64_t>();
    const auto sess = body(c.Get("/v1/session"));
    if (sess.at("sim_time").get<double>() > 2400.0 && j.at("events").empty()) break;
  }
  REQUIRE_FALSE(seqs.empty());
  for (std::size_t i = 0; i < seqs.size(); ++i) REQUIRE(seqs[i] == i);
  // the streamed prefix equals the log tail endpoint
  const auto tail = body(c.Get("/v1/events?since=0&limit=100000"));
  REQUIRE(tail.at("events").size() >= seqs.size());
  bool swapped = false;
  for (const auto& e : tail.at("events")) {
    if (e.at("kind") == "step" && e.at("payload").value("label", "") == "scenario-3") swapped = true;
  }
  CHECK(swapped);
  CHECK(body(c.Get("/v1/ins/NS4")).at("lifecycle") == "OPERATIONAL");
}

TEST_CASE("session controls") {
  Server s(SessionMode::Fast);
  auto c = s.client();
  auto step = c.Post("/v1/session/step", "{}", "application/json");
  REQUIRE(step);
  CHECK(step->status == 409);
  auto reset = c.Post("/v1/session/reset", json{{"mode", "step"}, {"seed", 4}}.dump(), "application/json");
  REQUIRE(reset);
  CHECK(body(reset).at("mode") == "step");
  CHECK(body(reset).at("run_id") == 2);
  auto bad = c.Post("/v1/session/reset", json{{"time_scale", -1}}.dump(), "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  auto missing = c.Post("/v1/run/nope", "", "application/json");
  REQUIRE(missing);
  CHECK(missing->status == 404);
}
