#include <doctest.h>

#include <sstream>

#include "qsim/scenario.hpp"
#include "test_support.hpp"

using namespace qsim;

namespace {

ScenarioScript shipped(const std::string& name) {
  return ScenarioScript::load(test::data_dir() / "scenarios" / (name + ".json"));
}

RunResult run(const std::string& name, std::uint64_t seed = 1, std::vector<std::string> overrides = {}) {
  RunOptions o;
  o.seed = seed;
  o.overrides = std::move(overrides);
  return run_scenario(shipped(name), test::shipped_topology(), test::shipped_table(), o);
}

int schema_line(const std::string& text) {
  try {
    ScenarioScript::parse(text, "s.json");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SchemaError);
    const std::string m = e.what();
    const auto a = m.find(':');
    const auto b = m.find(':', a + 1);
    return std::stoi(m.substr(a + 1, b - a - 1));
  }
  FAIL("script accepted");
  return -1;
}

const char* kIslands = R"("islands": [
    {"island": 1, "catalogue": [{"ns_id": "a"}]},
    {"island": 2, "catalogue": [{"ns_id": "b"}]}
  ])";

std::string script(const std::string& steps) {
  return std::string("{\"name\": \"t\",\n  ") + kIslands + ",\n  \"steps\": [\n" + steps + "\n  ]\n}";
}

SimEvent ev(double t, std::uint64_t seq, const std::string& kind, Payload p = Payload::object()) {
  SimEvent e;
  e.time = t;
  e.seq = seq;
  e.kind = kind;
  e.source = "t";
  e.payload = std::move(p);
  return e;
}

EventLog log_of(std::vector<SimEvent> evs) {
  EventLog l;
  for (auto& e : evs) l.append(e.time, e.source, e.kind, e.payload);
  return l;
}

nlohmann::json one(nlohmann::json a) { return nlohmann::json::array({std::move(a)}); }

}  // namespace

TEST_CASE("shipped scripts parse") {
  for (const auto* n : {"scenario1", "scenario1to2to3", "unsecured", "empty"}) {
    CAPTURE(n);
    CHECK_NOTHROW(shipped(n));
  }
  const auto s = shipped("scenario1to2to3");
  CHECK(s.steps.size() == 7);
  CHECK(s.steps.front().label == "scenario-1");
  // inferred pins are marked in the file
  int inferred = 0;
  for (const auto& st : s.steps) inferred += st.args.value("inferred", false) ? 1 : 0;
  CHECK(inferred == 2);
}

TEST_CASE("script validation reports the offending line") {
  const auto bad_order = script(R"(    {"at": 5, "action": "compose", "args": {"ins": "X", "members": [{"island": 1, "ns": "a"}, {"island": 2, "ns": "b"}]}},
    {"at": 1, "action": "deploy", "args": {"ins": "X"}})");
  CHECK(schema_line(bad_order) == 8);
  const auto undefined = script(R"(    {"at": 0, "action": "deploy", "args": {"ins": "nope"}})");
  CHECK(schema_line(undefined) == 7);
  const auto unknown_ns = script(
      R"(    {"at": 0, "action": "compose", "args": {"ins": "X", "members": [{"island": 1, "ns": "zz"}, {"island": 2, "ns": "b"}]}})");
  CHECK(schema_line(unknown_ns) == 7);
  const auto bad_action = script(R"(    {"at": 0, "action": "explode"})");
  CHECK(schema_line(bad_action) == 7);
  CHECK_THROWS_AS(ScenarioScript::parse("{\"name\": \"x\",", "s.json"), Error);
  CHECK_THROWS_AS(ScenarioScript::parse("{\"steps\": []}", "s.json"), Error);
  CHECK_THROWS_AS(ScenarioScript::parse(R"({"name": "x", "config": {"nope.key": 1}})", "s.json"), Error);
  CHECK_THROWS_AS(ScenarioScript::parse(R"({"name": "x", "expected": [{"type": "before", "a": "x["}]})", "s.json"),
                  Error);
}

TEST_CASE("settings and overrides") {
  OrchestratorConfig c;
  apply_setting(c, "latency.ofs_s", "4");
  CHECK(c.latency.ofs_s == 4.0);
  apply_setting(c, "keys.rekey_interval_s", "30");
  CHECK(c.keys.rekey_interval_s == 30.0);
  apply_setting(c, "faults.qkd_fail", "NS1,NS3");
  CHECK(c.faults.qkd_fail == std::set<std::string>{"NS1", "NS3"});
  apply_setting(c, "planner.single_wavelength_per_ns", "true");
  CHECK(c.planner.single_wavelength_per_ns);
  CHECK_THROWS_AS(apply_setting(c, "latency.ofs_s", "fast"), Error);
  CHECK_THROWS_AS(apply_setting(c, "keys.key_size", "0"), Error);
  CHECK_THROWS_AS(split_setting("novalue"), Error);
  CHECK(split_setting("a.b=c=d") == std::pair<std::string, std::string>{"a.b", "c=d"});
}

TEST_CASE("selectors") {
  const auto e = ev(1, 0, "config-start", {{"device", "wss"}, {"ins", {"NS1", "NS2"}}, {"flag", true}});
  CHECK(Selector::parse("config-start").matches(e));
  CHECK(Selector::parse("*").matches(e));
  CHECK(Selector::parse("config-start[device=ofs|wss]").matches(e));
  CHECK_FALSE(Selector::parse("config-start[device=ofs]").matches(e));
  CHECK(Selector::parse("config-start[ins=NS2]").matches(e));
  CHECK_FALSE(Selector::parse("config-start[ins=NS3]").matches(e));
  CHECK(Selector::parse("config-start[flag=true, device=wss]").matches(e));
  CHECK_THROWS_AS(Selector::parse("a[b]"), Error);
  CHECK_THROWS_AS(Selector::parse("[x=1]"), Error);
  CHECK_THROWS_AS(Selector::parse("a[x=1"), Error);
}

TEST_CASE("before, overlaps, absent, count and bound") {
  const auto log = log_of({ev(0, 0, "step", {{"label", "s1"}}), ev(1, 1, "a", {{"ins", "X"}}),
                           ev(2, 2, "b", {{"ins", "X"}, {"v", 5}}), ev(2, 3, "a", {{"ins", "Y"}}),
                           ev(2, 4, "b", {{"ins", "Y"}, {"v", 7}}), ev(10, 5, "step", {{"label", "s2"}}),
                           ev(11, 6, "c", {{"ins", "X"}})});
  auto pass = [&](nlohmann::json a) { return verify(log, one(std::move(a))).at(0).pass; };
  CHECK(pass({{"type", "before"}, {"a", "a"}, {"b", "b"}}));
  CHECK_FALSE(pass({{"type", "before"}, {"a", "b"}, {"b", "a"}}));
  CHECK(pass({{"type", "before"}, {"a", "a"}, {"b", "b"}, {"per", "ins"}}));
  // Y's a and b share a timestamp: ordered by sequence, not strictly earlier
  CHECK_FALSE(pass({{"type", "before"}, {"a", "a"}, {"b", "b"}, {"per", "ins"}, {"strict", true}}));
  CHECK_FALSE(pass({{"type", "before"}, {"a", "a"}, {"b", "b"}, {"mode", "all"}}));
  CHECK_FALSE(pass({{"type", "before"}, {"a", "a"}, {"b", "missing"}}));
  CHECK(pass({{"type", "overlaps"}, {"a_start", "a[ins=X]"}, {"a_end", "c"}, {"b_start", "a[ins=Y]"}, {"b_end", "b[ins=Y]"}}));
  // touching intervals do not overlap
  CHECK_FALSE(pass({{"type", "overlaps"}, {"a_start", "a[ins=X]"}, {"a_end", "b[ins=X]"}, {"b_start", "a[ins=Y]"}, {"b_end", "c"}}));
  CHECK_FALSE(pass({{"type", "overlaps"}, {"a_start", "a[ins=X]"}, {"a_end", "a[ins=X]"}, {"b_start", "c"}, {"b_end", "c"}}));
  CHECK(pass({{"type", "absent"}, {"a", "c"}, {"to", "step:s2"}}));
  CHECK_FALSE(pass({{"type", "absent"}, {"a", "c"}, {"from", "step:s2"}}));
  CHECK(pass({{"type", "absent"}, {"a", "a"}, {"from", 3}, {"to", 9}}));
  CHECK(pass({{"type", "count"}, {"a", "a"}, {"min", 2}, {"max", 2}}));
  CHECK_FALSE(pass({{"type", "count"}, {"a", "a"}, {"max", 1}}));
  CHECK(pass({{"type", "bound"}, {"a", "b"}, {"field", "v"}, {"min", 5}, {"max", 7}}));
  CHECK_FALSE(pass({{"type", "bound"}, {"a", "b"}, {"field", "v"}, {"max", 6}}));
  CHECK_FALSE(pass({{"type", "bound"}, {"a", "c"}, {"field", "v"}, {"max", 6}}));
  // an unknown step label selects nothing
  CHECK(pass({{"type", "absent"}, {"a", "a"}, {"from", "step:nope"}}));

  auto malformed = [&](nlohmann::json a) {
    try {
      verify(log, one(std::move(a)));
    } catch (const Error& e) {
      return e.code() == ErrorCode::SchemaError;
    }
    return false;
  };
  CHECK(malformed({{"type", "sometimes"}, {"a", "a"}}));
  CHECK(malformed({{"type", "before"}, {"a", "a"}}));
  CHECK(malformed({{"type", "count"}, {"a", "a"}}));
  CHECK(malformed({{"type", "count"}, {"a", "a"}, {"min", "two"}}));
  CHECK(malformed({{"type", "absent"}, {"a", "a"}, {"from", true}}));
  CHECK(malformed({{"type", "bound"}, {"a", "a"}, {"field", "v"}}));
  CHECK(malformed(nlohmann::json::object({{"not", "a list"}})));
}

TEST_CASE("shipped scenario 1 run") {
  const auto r = run("scenario1");
  CHECK(r.ok());
  int operational = 0;
  int with_quantum = 0;
  for (const auto& ns : r.final_state) {
    operational += ns.at("lifecycle") == "OPERATIONAL";
    with_quantum += ns.at("telemetry").at("qkd") != "IDLE";
  }
  CHECK(operational == 3);
  CHECK(with_quantum == 1);
  CHECK(r.keys.conserved());
  CHECK(r.keys.accrued > 0);
  const auto ordering = verify(r.log, one({{"type", "before"}, {"a", "qkd-start"}, {"b", "config-start[device=transceiver]"}}));
  CHECK(ordering.at(0).pass);
}

TEST_CASE("no vnf-deploy holds for 2 to 3 and fails for 1 to 2") {
  const auto r = run("scenario1to2to3");
  REQUIRE(r.ok());
  const auto in_3 = verify(r.log, one({{"type", "absent"}, {"a", "vnf-deploy"}, {"from", "step:scenario-3"}}));
  CHECK(in_3.at(0).pass);
  const auto in_2 = verify(r.log, one({{"type", "absent"}, {"a", "vnf-deploy"}, {"from", "step:scenario-2"}, {"to", "step:scenario-3"}}));
  CHECK_FALSE(in_2.at(0).pass);
}

TEST_CASE("physical report shows the swap and the re-pointed quantum links") {
  const auto r = run("scenario1to2to3");
  const auto rows = physical_report(r.log);
  auto find = [&](const std::string& seg, const std::string& id) {
    for (const auto& x : rows) {
      if (x.segment == seg && x.ins == id) return x;
    }
    FAIL("missing row " << seg << " " << id);
    return PhysicalRow{};
  };
  CHECK(rows.size() == 3 + 4 + 4);
  CHECK(find("scenario-1", "NS1").modulation == "PM-16QAM");
  CHECK(find("scenario-2", "NS1").modulation == "PM-QPSK");
  CHECK(find("scenario-2", "NS1").launch_power_dbm == doctest::Approx(-25.0));
  CHECK(find("scenario-2", "NS3").forward_thz == doctest::Approx(195.3));
  CHECK(find("scenario-3", "NS3").forward_thz == doctest::Approx(195.2));
  CHECK(find("scenario-3", "NS4").forward_thz == doctest::Approx(195.3));
  CHECK(find("scenario-2", "NS3").alice == 2);
  CHECK(find("scenario-3", "NS4").path_class == "BYPASS_DROP");
  CHECK(find("scenario-3", "NS2").path_class == "BYPASS_BYPASS");
  CHECK(find("scenario-3", "NS3").path_class.empty());
  CHECK(find("scenario-2", "NS4").inferred);

  std::ostringstream csv;
  write_physical_csv(csv, rows);
  CHECK(csv.str().rfind("segment,ins,inferred,", 0) == 0);
  const auto j = report_json(r.log);
  CHECK(j.at("physical").size() == rows.size());
}

TEST_CASE("timing report phases") {
  const auto r = run("scenario1to2to3");
  const auto rows = timing_report(r.log);
  auto find = [&](const std::string& seg, const std::string& id, const std::string& phase) -> const TimingRow* {
    for (const auto& x : rows) {
      if (x.segment == seg && x.ins == id && x.phase == phase) return &x;
    }
    return nullptr;
  };
  // BB init is about 90 s longer than BD
  const auto* bd = find("scenario-1", "NS3", "qkd_init");
  const auto* bb = find("scenario-2", "NS1", "qkd_init");
  REQUIRE(bd);
  REQUIRE(bb);
  CHECK(bb->duration() - bd->duration() == doctest::Approx(90.0).epsilon(0.05));
  const auto* retune = find("scenario-2", "NS1", "transceiver");
  REQUIRE(retune);
  CHECK(retune->duration() >= 80.0);
  CHECK(find("scenario-3", "NS3", "vnf_deploy") == nullptr);
  CHECK(find("scenario-1", "NS1", "total") != nullptr);
}

TEST_CASE("runs are reproducible and seeds only move latencies") {
  const auto a = run("scenario1to2to3", 7);
  const auto b = run("scenario1to2to3", 7);
  CHECK(a.log.to_jsonl() == b.log.to_jsonl());
  const auto c = run("scenario1to2to3", 8);
  CHECK(a.log.to_jsonl() != c.log.to_jsonl());
  CHECK(c.ok());
}

TEST_CASE("empty script gives an empty log") {
  const auto r = run("empty");
  CHECK(r.log.empty());
  CHECK(r.ok());
  CHECK(physical_report(r.log).empty());
  CHECK(timing_report(r.log).empty());
}

TEST_CASE("step errors are recorded and expect_error is honoured") {
  const auto text = script(R"(    {"at": 0, "action": "compose", "args": {"ins": "X", "members": [{"island": 1, "ns": "a"}, {"island": 2, "ns": "b"}]}},
    {"at": 0, "action": "terminate", "args": {"ins": "X"}},
    {"at": 1, "action": "deploy", "args": {"ins": "X"}, "expect_error": "invalid_state"},
    {"at": 2, "action": "deploy", "args": {"ins": "X"}})");
  const auto s = ScenarioScript::parse(text, "t.json");
  const auto r = run_scenario(s, test::shipped_topology(), test::shipped_table());
  REQUIRE(r.steps.size() == 4);
  CHECK(r.steps[2].ok);
  CHECK(r.steps[2].error_code == "invalid_state");
  CHECK_FALSE(r.steps[3].ok);
  CHECK_FALSE(r.ok());
  int errors = 0;
  for (const auto& e : r.log.events()) errors += e.kind == "step-error";
  CHECK(errors == 2);
}

TEST_CASE("overrides change the run") {
  const auto base = run("scenario1");
  const auto slow = run("scenario1", 1, {"latency.ofs_s=9"});
  double ofs_base = 0;
  double ofs_slow = 0;
  for (const auto& e : base.log.events()) {
    if (e.kind == "config-done" && e.field("device") == "ofs") ofs_base = e.time;
  }
  for (const auto& e : slow.log.events()) {
    if (e.kind == "config-done" && e.field("device") == "ofs") ofs_slow = e.time;
  }
  CHECK(ofs_slow - ofs_base == doctest::Approx(4.0));
  const auto failed = run("scenario1", 1, {"faults.qkd_fail=NS3"});
  CHECK_FALSE(failed.ok());  // the script expects three services to come up
}
