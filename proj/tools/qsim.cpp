// qsim: run scenario scripts, check logs against assertions, print reports,
// serve the HTTP gateway.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "qsim/gateway.hpp"
#include "qsim/scenario.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kAssertionFailure = 2;
constexpr int kSchemaError = 3;
constexpr int kOtherError = 1;

qsim::EventLog read_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) qsim::fail(qsim::ErrorCode::SchemaError, "cannot open log " + path);
  return qsim::EventLog::read_jsonl(in, path);
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) qsim::fail(qsim::ErrorCode::SchemaError, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    qsim::fail(qsim::ErrorCode::SchemaError, path + ": " + e.what());
  }
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) qsim::fail(qsim::ErrorCode::InvalidArgument, "cannot write " + p.string());
  out << text;
}

int print_assertions(const std::vector<qsim::AssertionResult>& results) {
  int failed = 0;
  for (const auto& r : results) {
    std::printf("%s  %s  (%s)\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    if (!r.pass) ++failed;
  }
  return failed;
}

int cmd_run(const std::string& script_path, std::uint64_t seed, const std::vector<std::string>& overrides,
            const std::string& out_dir, const std::string& data_dir) {
  const auto script = qsim::ScenarioScript::load(script_path);
  const std::filesystem::path data = data_dir.empty() ? qsim::default_data_dir() : std::filesystem::path(data_dir);
  const auto topo = qsim::Topology::load(data / "topology.json");
  const auto table = qsim::CalibrationTable::load(data / "calibration.json");
  qsim::RunOptions opt;
  opt.seed = seed;
  opt.overrides = overrides;
  const auto r = qsim::run_scenario(script, topo, table, opt);

  const std::filesystem::path out = out_dir;
  std::filesystem::create_directories(out);
  write_file(out / "events.jsonl", r.log.to_jsonl());
  {
    std::ostringstream os;
    r.log.write_csv(os);
    write_file(out / "events.csv", os.str());
  }
  {
    std::ostringstream os;
    qsim::write_physical_csv(os, qsim::physical_report(r.log));
    write_file(out / "physical.csv", os.str());
  }
  {
    std::ostringstream os;
    qsim::write_timing_csv(os, qsim::timing_report(r.log));
    write_file(out / "timing.csv", os.str());
  }
  write_file(out / "summary.json", r.summary().dump(2) + "\n");

  std::printf("%s: %zu events, seed %llu -> %s\n", script.name.c_str(), r.log.size(),
              static_cast<unsigned long long>(seed), out.string().c_str());
  int failed = 0;
  for (const auto& s : r.steps) {
    if (!s.ok) {
      std::printf("FAIL  step %zu (%s at %s): %s\n", s.index, s.action.c_str(), qsim::format_time(s.at).c_str(),
                  s.message.c_str());
      ++failed;
    }
  }
  failed += print_assertions(r.assertions);
  std::printf("keys: accrued %llu = delivered %llu + remaining %llu%s\n",
              static_cast<unsigned long long>(r.keys.accrued), static_cast<unsigned long long>(r.keys.delivered),
              static_cast<unsigned long long>(r.keys.remaining), r.keys.conserved() ? "" : "  (NOT CONSERVED)");
  return failed == 0 && r.keys.conserved() ? kOk : kAssertionFailure;
}

int cmd_verify(const std::string& log_path, const std::string& assertions_path) {
  const auto log = read_log(log_path);
  const auto results = qsim::verify(log, read_json(assertions_path));
  return print_assertions(results) == 0 ? kOk : kAssertionFailure;
}

int cmd_report(const std::string& log_path, const std::string& format, const std::string& table) {
  const auto log = read_log(log_path);
  if (format == "json") {
    auto j = qsim::report_json(log);
    if (table != "all") j = j.at(table);
    std::cout << j.dump(2) << "\n";
    return kOk;
  }
  if (table == "physical" || table == "all") qsim::write_physical_csv(std::cout, qsim::physical_report(log));
  if (table == "all") std::cout << "\n";
  if (table == "timing" || table == "all") qsim::write_timing_csv(std::cout, qsim::timing_report(log));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum-secured multi-domain network service simulator"};
  app.require_subcommand(1);

  std::string script_path;
  std::uint64_t seed = 1;
  std::vector<std::string> overrides;
  std::string out_dir = "out";
  std::string data_dir;
  auto* run = app.add_subcommand("run", "Run a scenario script");
  run->add_option("script", script_path, "Scenario JSON file")->required();
  run->add_option("--seed", seed, "Simulation seed");
  run->add_option("--override", overrides, "Setting override key=value (repeatable)");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--data", data_dir, "Directory with topology.json and calibration.json");

  std::string log_path;
  std::string assertions_path;
  auto* ver = app.add_subcommand("verify", "Check an event log against assertions");
  ver->add_option("log", log_path, "events.jsonl")->required();
  ver->add_option("assertions", assertions_path, "Assertion JSON file")->required();

  std::string format = "csv";
  std::string table = "all";
  auto* rep = app.add_subcommand("report", "Physical and timing report from an event log");
  rep->add_option("log", log_path, "events.jsonl")->required();
  rep->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  rep->add_option("--table", table, "physical, timing or all")->check(CLI::IsMember({"physical", "timing", "all"}));

  qsim::GatewayConfig gw;
  std::string mode = "realtime";
  auto* serve = app.add_subcommand("serve", "Serve the /v1 HTTP API");
  serve->add_option("--host", gw.host, "Bind address");
  serve->add_option("--port", gw.port, "Port");
  serve->add_option("--mode", mode, "fast, step or realtime")->check(CLI::IsMember({"fast", "step", "realtime"}));
  serve->add_option("--scale", gw.time_scale, "Simulated seconds per wall-clock second (realtime)")
      ->check(CLI::PositiveNumber);
  serve->add_option("--seed", gw.seed, "Simulation seed");
  serve->add_option("--data", data_dir, "Directory with topology.json, calibration.json and scenarios/");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) return cmd_run(script_path, seed, overrides, out_dir, data_dir);
    if (*ver) return cmd_verify(log_path, assertions_path);
    if (*rep) return cmd_report(log_path, format, table);
    if (*serve) {
      gw.mode = qsim::session_mode_from_string(mode);
      if (!data_dir.empty()) gw.data_dir = data_dir;
      qsim::Gateway g(gw);
      std::printf("listening on %s:%d (%s)\n", gw.host.c_str(), gw.port, mode.c_str());
      std::fflush(stdout);
      g.listen();
      return kOk;
    }
  } catch (const qsim::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == qsim::ErrorCode::SchemaError ? kSchemaError : kOtherError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOtherError;
  }
  return kOtherError;
}
