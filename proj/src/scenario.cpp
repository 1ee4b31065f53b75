#include "qsim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json_source.hpp"

namespace qsim {

namespace {

using ojson = nlohmann::ordered_json;

std::optional<ErrorCode> error_code_from_string(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::Timeout); ++i) {
    const auto c = static_cast<ErrorCode>(i);
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

// Pre-order object numbering, matching detail::ObjectLines.
void number_objects(const ojson& j, std::map<const ojson*, std::size_t>& out, std::size_t& next) {
  if (j.is_object()) {
    out[&j] = next++;
    for (const auto& [k, v] : j.items()) number_objects(v, out, next);
  } else if (j.is_array()) {
    for (const auto& v : j) number_objects(v, out, next);
  }
}

class Parser {
 public:
  Parser(std::string_view text, std::string source) : lines_(text), source_(std::move(source)) {
    doc_ = detail::parse_json_or_throw(text, source_);
    std::size_t n = 0;
    number_objects(doc_, ordinals_, n);
  }

  const ojson& doc() const { return doc_; }

  int line(const ojson& j) const {
    auto it = ordinals_.find(&j);
    return it == ordinals_.end() ? 0 : lines_.line_of(it->second);
  }

  [[noreturn]] void error(const ojson& at, const std::string& msg) const {
    fail(ErrorCode::SchemaError, source_ + ":" + std::to_string(line(at)) + ": " + msg);
  }

 private:
  detail::ObjectLines lines_;
  std::string source_;
  ojson doc_;
  std::map<const ojson*, std::size_t> ordinals_;
};

const std::set<std::string> kActions{"compose", "deploy", "reconfigure", "terminate"};

std::vector<std::string> id_list(const Parser& p, const ojson& step, const ojson& v, const char* what) {
  std::vector<std::string> out;
  if (v.is_string()) {
    out.push_back(v.get<std::string>());
  } else if (v.is_array()) {
    for (const auto& x : v) {
      if (!x.is_string()) p.error(step, std::string(what) + " must list iNS ids as strings");
      out.push_back(x.get<std::string>());
    }
  } else {
    p.error(step, std::string(what) + " must be an iNS id or a list of ids");
  }
  return out;
}

std::string setting_text(const ojson& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string s;
    for (const auto& x : v) {
      if (!s.empty()) s += ",";
      s += x.is_string() ? x.get<std::string>() : x.dump();
    }
    return s;
  }
  return v.dump();
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(ErrorCode::SchemaError, "setting " + key + " expects true or false, got '" + v + "'");
}

double parse_number(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size() && std::isfinite(d)) return d;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::SchemaError, "setting " + key + " expects a number, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

std::pair<std::string, std::string> split_setting(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) fail(ErrorCode::SchemaError, "override '" + text + "' must be key=value");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

void apply_setting(OrchestratorConfig& c, const std::string& key, const std::string& value) {
  auto starts = [&](const char* prefix) { return key.rfind(prefix, 0) == 0; };
  if (starts("latency.")) {
    try {
      c.latency.apply_override(key.substr(8), parse_number(key, value));
    } catch (const Error& e) {
      fail(ErrorCode::SchemaError, e.what());
    }
  } else if (key == "keys.key_size") {
    c.keys.key_size = static_cast<int>(parse_number(key, value));
    if (c.keys.key_size <= 0) fail(ErrorCode::SchemaError, "keys.key_size must be positive");
  } else if (key == "keys.rekey_interval_s") {
    c.keys.rekey_interval_s = parse_number(key, value);
    if (!(c.keys.rekey_interval_s > 0.0)) fail(ErrorCode::SchemaError, "keys.rekey_interval_s must be positive");
  } else if (key == "keys.real_cipher") {
    c.keys.real_cipher = parse_bool(key, value);
  } else if (key == "planner.single_wavelength_per_ns") {
    c.planner.single_wavelength_per_ns = parse_bool(key, value);
  } else if (key == "planner.nominal_launch_power_dbm") {
    c.planner.nominal_launch_power_dbm = parse_number(key, value);
  } else if (key == "planner.launch_budget.min_dbm") {
    c.planner.launch_budget.min_dbm = parse_number(key, value);
  } else if (key == "planner.launch_budget.max_dbm") {
    c.planner.launch_budget.max_dbm = parse_number(key, value);
  } else if (key == "ber.fec_threshold") {
    c.ber.fec_threshold = parse_number(key, value);
  } else if (key == "ber.slope_decades_per_db") {
    c.ber.slope_decades_per_db = parse_number(key, value);
  } else if (key == "faults.qkd_fail") {
    for (const auto& id : split_list(value)) c.faults.qkd_fail.insert(id);
  } else if (key == "faults.proxy_timeout") {
    for (const auto& s : split_list(value)) c.faults.proxy_timeout.insert(static_cast<int>(parse_number(key, s)));
  } else if (key == "faults.proxy_timeout_s") {
    c.faults.proxy_timeout_s = parse_number(key, value);
    if (!(c.faults.proxy_timeout_s > 0.0)) fail(ErrorCode::SchemaError, "faults.proxy_timeout_s must be positive");
  } else {
    fail(ErrorCode::SchemaError, "unknown setting '" + key + "'");
  }
}

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("QSIM_DATA_DIR")) return env;
  return QSIM_DEFAULT_DATA_DIR;
}

ScenarioScript ScenarioScript::parse(std::string_view text, const std::string& source_name) {
  Parser p(text, source_name);
  const ojson& d = p.doc();
  if (!d.is_object()) fail(ErrorCode::SchemaError, source_name + ":1: scenario must be a JSON object");
  ScenarioScript s;
  try {
    s.name = d.value("name", "");
    s.description = d.value("description", "");
  } catch (const nlohmann::json::exception&) {
    p.error(d, "name and description must be strings");
  }
  if (s.name.empty()) p.error(d, "scenario needs a name");

  if (d.contains("config")) {
    const auto& c = d.at("config");
    if (!c.is_object()) p.error(d, "config must be an object of key: value settings");
    OrchestratorConfig probe;
    for (const auto& [k, v] : c.items()) {
      try {
        apply_setting(probe, k, setting_text(v));
      } catch (const Error& e) {
        p.error(c, e.what());
      }
      s.config.emplace_back(k, setting_text(v));
    }
  }

  std::set<int> islands;
  if (d.contains("islands")) {
    if (!d.at("islands").is_array()) p.error(d, "islands must be an array");
    for (const auto& i : d.at("islands")) {
      if (!i.is_object()) p.error(d, "island entries must be objects");
      ScenarioIsland isl;
      try {
        isl.island = i.at("island").get<int>();
        isl.registration.island_hint = isl.island;
        isl.registration.certificate_id = i.value("certificate_id", "cert-island-" + std::to_string(isl.island));
        isl.registration.proxy_endpoint = i.value("proxy_endpoint", "proxy://island-" + std::to_string(isl.island));
        for (const auto& n : i.at("catalogue")) {
          NsDescriptor nd;
          nd.ns_id = n.at("ns_id").get<std::string>();
          nd.name = n.value("name", nd.ns_id);
          if (n.contains("vnfs")) nd.vnfs = n.at("vnfs").get<std::vector<std::string>>();
          isl.registration.catalogue.push_back(std::move(nd));
        }
      } catch (const nlohmann::json::exception& e) {
        p.error(i, std::string("bad island entry: ") + e.what());
      }
      if (isl.island <= 0) p.error(i, "island ids are positive");
      if (isl.registration.catalogue.empty()) p.error(i, "island catalogue is empty");
      if (!islands.insert(isl.island).second) p.error(i, "island " + std::to_string(isl.island) + " listed twice");
      s.islands.push_back(std::move(isl));
    }
  }
  auto has_ns = [&](int island, const std::string& ns) {
    for (const auto& i : s.islands) {
      if (i.island != island) continue;
      for (const auto& d2 : i.registration.catalogue) {
        if (d2.ns_id == ns) return true;
      }
    }
    return false;
  };

  if (d.contains("steps") && !d.at("steps").is_array()) p.error(d, "steps must be an array");
  std::set<std::string> composed;
  double last_at = 0.0;
  if (d.contains("steps")) {
    for (const auto& st : d.at("steps")) {
      if (!st.is_object()) p.error(d, "steps must be objects");
      ScenarioStep step;
      step.line = p.line(st);
      if (!st.contains("at") || !st.at("at").is_number()) p.error(st, "step needs a numeric 'at'");
      step.at = st.at("at").get<double>();
      if (step.at < 0.0 || !std::isfinite(step.at)) p.error(st, "step time must be finite and non-negative");
      if (step.at < last_at) p.error(st, "steps are not time-ordered");
      last_at = step.at;
      if (!st.contains("action") || !st.at("action").is_string()) p.error(st, "step needs an 'action'");
      step.action = st.at("action").get<std::string>();
      if (!kActions.count(step.action)) p.error(st, "unknown action '" + step.action + "'");
      step.args = st.value("args", nlohmann::json::object());
      if (!step.args.is_object()) p.error(st, "args must be an object");
      if (st.contains("label")) {
        if (!st.at("label").is_string()) p.error(st, "label must be a string");
        step.label = st.at("label").get<std::string>();
      }
      if (st.contains("expect_error")) {
        const auto code = st.at("expect_error").is_string()
                              ? error_code_from_string(st.at("expect_error").get<std::string>())
                              : std::nullopt;
        if (!code) p.error(st, "expect_error must name an error code");
        step.expect_error = code;
      }
      const auto& a = step.args;
      auto known = [&](const std::string& id) {
        if (!composed.count(id)) p.error(st, "action " + step.action + " references undefined iNS '" + id + "'");
      };
      try {
        if (step.action == "compose") {
          const auto id = a.at("ins").get<std::string>();
          if (id.empty()) p.error(st, "compose needs a non-empty 'ins' id");
          if (!composed.insert(id).second) p.error(st, "iNS '" + id + "' composed twice");
          const auto& mem = a.at("members");
          if (!mem.is_array() || mem.size() != 2) p.error(st, "compose needs exactly two members");
          for (const auto& m : mem) {
            const int island = m.at("island").get<int>();
            const auto ns = m.at("ns").get<std::string>();
            if (!has_ns(island, ns)) {
              p.error(st, "member " + std::to_string(island) + "/" + ns + " is not in any island catalogue");
            }
          }
          if (a.contains("pinned_wavelength_thz")) (void)a.at("pinned_wavelength_thz").get<double>();
          (void)a.value("secured", false);
          (void)a.value("inferred", false);
          (void)a.value("ttl_s", 0.0);
          const auto bw = a.value("bandwidth", std::string("standard"));
          if (bw != "standard" && bw != "high") p.error(st, "bandwidth must be 'standard' or 'high'");
        } else if (step.action == "deploy") {
          for (const auto& id : id_list(p, st, a.at("ins"), "deploy.ins")) known(id);
        } else if (step.action == "terminate") {
          for (const auto& id : id_list(p, st, a.at("ins"), "terminate.ins")) known(id);
        } else if (step.action == "reconfigure") {
          if (a.contains("changes")) {
            if (!a.at("changes").is_array()) p.error(st, "reconfigure.changes must be an array");
            for (const auto& c : a.at("changes")) {
              known(c.at("ins").get<std::string>());
              if (c.contains("secured")) (void)c.at("secured").get<bool>();
              if (c.contains("pinned_wavelength_thz")) (void)c.at("pinned_wavelength_thz").get<double>();
              (void)c.value("clear_pin", false);
            }
          }
          if (a.contains("deploy")) {
            for (const auto& id : id_list(p, st, a.at("deploy"), "reconfigure.deploy")) known(id);
          }
        }
      } catch (const nlohmann::json::exception& e) {
        p.error(st, "bad args for " + step.action + ": " + e.what());
      }
      s.steps.push_back(std::move(step));
    }
  }

  if (d.contains("end_s")) {
    if (!d.at("end_s").is_number() || d.at("end_s").get<double>() < 0.0) p.error(d, "end_s must be a non-negative number");
    s.end_s = d.at("end_s").get<double>();
  }

  if (d.contains("expected")) {
    s.expected = d.at("expected");
    if (!s.expected.is_array()) p.error(d, "expected must be an array of assertions");
    // malformed patterns surface now rather than after a run
    verify(EventLog{}, s.expected);
  }
  return s;
}

ScenarioScript ScenarioScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::SchemaError, "cannot open scenario " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void ScriptDriver::schedule(const ScenarioScript& script, double origin) {
  for (const auto& i : script.islands) {
    orch_.register_island(i.registration);
  }
  for (std::size_t n = 0; n < script.steps.size(); ++n) {
    const ScenarioStep step = script.steps[n];
    kernel_.schedule_at(origin + step.at, [this, step, n] { execute(step, n); });
  }
}

void ScriptDriver::execute(const ScenarioStep& step, std::size_t index) {
  StepOutcome o;
  o.index = index;
  o.at = kernel_.now();
  o.action = step.action;
  o.label = step.label;
  Payload ev{{"index", index}, {"action", step.action}};
  if (!step.label.empty()) ev["label"] = step.label;
  kernel_.emit("runner", "step", std::move(ev));
  const auto& a = step.args;
  auto ids = [](const nlohmann::json& v) {
    std::vector<std::string> out;
    if (v.is_string()) {
      out.push_back(v.get<std::string>());
    } else {
      for (const auto& x : v) out.push_back(x.get<std::string>());
    }
    return out;
  };
  try {
    if (step.action == "compose") {
      const auto& mem = a.at("members");
      Member m1{mem[0].at("island").get<int>(), mem[0].at("ns").get<std::string>()};
      Member m2{mem[1].at("island").get<int>(), mem[1].at("ns").get<std::string>()};
      ComposeOptions opt;
      opt.ins_id = a.at("ins").get<std::string>();
      opt.bandwidth = a.value("bandwidth", std::string("standard")) == "high" ? BandwidthClass::High
                                                                              : BandwidthClass::Standard;
      opt.ttl_s = a.value("ttl_s", 0.0);
      if (a.contains("pinned_wavelength_thz")) {
        opt.pinned_wavelength = Frequency::from_thz(a.at("pinned_wavelength_thz").get<double>());
      }
      opt.inferred_pin = a.value("inferred", false);
      orch_.compose(m1, m2, a.value("secured", false), opt);
    } else if (step.action == "deploy") {
      orch_.deploy(ids(a.at("ins")));
    } else if (step.action == "terminate") {
      for (const auto& id : ids(a.at("ins"))) orch_.terminate(id);
    } else if (step.action == "reconfigure") {
      std::vector<ReconfigureChange> changes;
      if (a.contains("changes")) {
        for (const auto& c : a.at("changes")) {
          ReconfigureChange rc;
          rc.ins_id = c.at("ins").get<std::string>();
          if (c.contains("secured")) rc.secured = c.at("secured").get<bool>();
          if (c.contains("pinned_wavelength_thz")) {
            rc.pinned_wavelength = Frequency::from_thz(c.at("pinned_wavelength_thz").get<double>());
          }
          rc.clear_pin = c.value("clear_pin", false);
          changes.push_back(std::move(rc));
        }
      }
      std::vector<std::string> dep;
      if (a.contains("deploy")) dep = ids(a.at("deploy"));
      orch_.reconfigure(changes, dep);
    }
    if (step.expect_error) {
      o.ok = false;
      o.message = "expected " + std::string(to_string(*step.expect_error)) + " but the call succeeded";
    }
  } catch (const Error& e) {
    o.error_code = std::string(to_string(e.code()));
    o.message = e.what();
    Payload err{{"index", index}, {"action", step.action}, {"code", o.error_code}, {"message", o.message}};
    if (const auto* api = dynamic_cast<const ApiError*>(&e); api && !api->violated_constraint.empty()) {
      err["violated_constraint"] = api->violated_constraint;
    }
    kernel_.emit("runner", "step-error", std::move(err));
    o.ok = step.expect_error && *step.expect_error == e.code();
  }
  outcomes_.push_back(std::move(o));
}

bool RunResult::ok() const {
  return std::all_of(steps.begin(), steps.end(), [](const StepOutcome& s) { return s.ok; }) &&
         std::all_of(assertions.begin(), assertions.end(), [](const AssertionResult& a) { return a.pass; });
}

nlohmann::json RunResult::summary() const {
  nlohmann::json j;
  j["ok"] = ok();
  j["events"] = log.size();
  j["steps"] = nlohmann::json::array();
  for (const auto& s : steps) {
    nlohmann::json o{{"index", s.index}, {"at", s.at}, {"action", s.action}, {"ok", s.ok}};
    if (!s.label.empty()) o["label"] = s.label;
    if (!s.error_code.empty()) o["error_code"] = s.error_code;
    if (!s.message.empty()) o["message"] = s.message;
    j["steps"].push_back(o);
  }
  j["assertions"] = nlohmann::json::array();
  for (const auto& a : assertions) j["assertions"].push_back({{"name", a.name}, {"pass", a.pass}, {"detail", a.detail}});
  j["keys"] = {{"accrued_bits", keys.accrued},
               {"delivered_bits", keys.delivered},
               {"remaining_bits", keys.remaining},
               {"conserved", keys.conserved()}};
  j["final_state"] = final_state;
  return j;
}

RunResult run_scenario(const ScenarioScript& script, const Topology& topology, const CalibrationTable& table,
                       const RunOptions& options) {
  OrchestratorConfig cfg;
  for (const auto& [k, v] : script.config) apply_setting(cfg, k, v);
  for (const auto& o : options.overrides) {
    const auto [k, v] = split_setting(o);
    apply_setting(cfg, k, v);
  }
  Kernel kernel(options.seed);
  RunResult r;
  {
    Orchestrator orch(kernel, topology, table, cfg);
    ScriptDriver driver(kernel, orch);
    driver.schedule(script, 0.0);
    kernel.run();
    if (script.end_s > kernel.now()) kernel.run_until(script.end_s);
    orch.settle_keys();
    r.steps = driver.outcomes();
    for (const auto& [id, pool] : orch.keystore().pools()) {
      r.keys.accrued += pool.accrued_total();
      r.keys.delivered += pool.consumed_total();
      r.keys.remaining += pool.bits_available();
    }
    for (const auto& id : orch.ins_ids()) r.final_state.push_back(orch.ins_json(id));
  }
  r.log = kernel.log();
  r.assertions = verify(r.log, script.expected);
  return r;
}

// ---- reports ----

namespace {

std::vector<std::string> ins_of(const SimEvent& e) {
  std::vector<std::string> out;
  auto it = e.payload.find("ins");
  if (it == e.payload.end()) return out;
  if (it->is_array()) {
    for (const auto& v : *it) out.push_back(v.get<std::string>());
  } else if (it->is_string()) {
    out.push_back(it->get<std::string>());
  }
  return out;
}

PhysicalRow row_from(const std::string& segment, const std::string& ins, const ojson& a, bool inferred) {
  PhysicalRow r;
  r.segment = segment;
  r.ins = ins;
  r.inferred = inferred;
  r.src = a.at("src").get<int>();
  r.dst = a.at("dst").get<int>();
  r.secured = a.at("secured").get<bool>();
  r.forward_thz = a.at("wavelength_pair_thz").at(0).get<double>();
  r.reverse_thz = a.at("wavelength_pair_thz").at(1).get<double>();
  r.modulation = a.at("modulation").get<std::string>();
  r.launch_power_dbm = a.at("launch_power_dbm").get<double>();
  r.ber = a.at("predicted").at("ber").get<double>();
  r.skr_bps = a.at("predicted").at("skr_bps").get<double>();
  r.qber = a.at("predicted").at("qber").get<double>();
  const auto& q = a.at("quantum_route");
  if (!q.is_null()) {
    r.path_class = q.at("path_class").get<std::string>();
    r.alice = q.at("alice").get<int>();
    r.bob = q.at("bob").get<int>();
    r.quantum_loss_db = q.at("path_loss_db").get<double>();
    r.n_coexisting = q.at("n_coexisting").get<int>();
  }
  return r;
}

std::string fmt(double v, const char* f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::vector<PhysicalRow> physical_report(const EventLog& log) {
  std::vector<PhysicalRow> out;
  std::map<std::string, std::pair<ojson, bool>> live;  // ins -> (assignment, inferred)
  std::string segment = "run";
  bool dirty = false;
  auto flush = [&] {
    if (!dirty) return;
    for (const auto& [id, v] : live) out.push_back(row_from(segment, id, v.first, v.second));
    dirty = false;
  };
  for (const auto& e : log.events()) {
    if (e.kind == "step") {
      const auto label = e.field("label");
      if (!label.empty() && label != segment) {
        flush();
        segment = label;
      }
      dirty = true;
    } else if (e.kind == "assignment") {
      live[e.field("ins")] = {e.payload.at("assignment"), e.payload.value("inferred", false)};
      dirty = true;
    } else if (e.kind == "lifecycle") {
      const auto to = e.field("to");
      if (to == "TERMINATED" || to == "FAILED") {
        live.erase(e.field("ins"));
        dirty = true;
      }
    }
  }
  flush();
  return out;
}

std::vector<TimingRow> timing_report(const EventLog& log) {
  static const std::vector<std::string> kPhases{"roadm", "qkd_init", "transceiver", "vnf_deploy", "l2_flow", "total"};
  struct Span {
    double start = 0.0;
    double end = 0.0;
    bool has_start = false;
    bool has_end = false;
  };
  std::vector<std::string> segments;
  std::map<std::string, double> segment_start;
  std::map<std::tuple<std::string, std::string, std::string>, Span> spans;
  std::vector<std::pair<std::string, std::string>> order;  // (segment, ins) first-seen order
  std::string segment = "run";
  auto touch = [&](const std::string& ins, const std::string& phase, double t, bool start) {
    auto key = std::make_tuple(segment, ins, phase);
    if (!spans.count(key) &&
        std::find(order.begin(), order.end(), std::make_pair(segment, ins)) == order.end()) {
      order.emplace_back(segment, ins);
    }
    auto& s = spans[key];
    if (start && !s.has_start) {
      s.start = t;
      s.has_start = true;
    }
    if (!start) {
      s.end = std::max(s.end, t);
      s.has_end = true;
    }
  };
  for (const auto& e : log.events()) {
    if (e.kind == "step") {
      const auto label = e.field("label");
      if (!label.empty() && label != segment) segment = label;
      if (!segment_start.count(segment)) segment_start[segment] = e.time;
      continue;
    }
    std::string phase;
    bool start = false;
    if (e.kind == "config-start" || e.kind == "config-done") {
      const auto dev = e.field("device");
      phase = dev == "transceiver" ? "transceiver" : "roadm";
      start = e.kind == "config-start";
    } else if (e.kind == "qkd-start" || e.kind == "qkd-ack") {
      phase = "qkd_init";
      start = e.kind == "qkd-start";
    } else if (e.kind == "vnf-deploy" || e.kind == "l2-flow") {
      const auto ph = e.field("phase");
      if (ph != "start" && ph != "done") continue;
      phase = e.kind == "vnf-deploy" ? "vnf_deploy" : "l2_flow";
      start = ph == "start";
    } else {
      continue;
    }
    for (const auto& id : ins_of(e)) touch(id, phase, e.time, start);
  }
  std::vector<TimingRow> out;
  for (const auto& [seg, ins] : order) {
    double total_end = 0.0;
    bool any = false;
    for (const auto& ph : kPhases) {
      if (ph == "total") continue;
      auto it = spans.find(std::make_tuple(seg, ins, ph));
      if (it == spans.end() || !it->second.has_start || !it->second.has_end) continue;
      out.push_back({seg, ins, ph, it->second.start, it->second.end});
      total_end = std::max(total_end, it->second.end);
      any = true;
    }
    if (any) {
      const double t0 = segment_start.count(seg) ? segment_start.at(seg) : 0.0;
      out.push_back({seg, ins, "total", t0, total_end});
    }
  }
  return out;
}

void write_physical_csv(std::ostream& os, const std::vector<PhysicalRow>& rows) {
  os << "segment,ins,inferred,src,dst,secured,forward_thz,reverse_thz,modulation,launch_power_dbm,ber,skr_bps,qber,"
        "quantum_path_class,alice,bob,quantum_loss_db,n_coexisting\n";
  for (const auto& r : rows) {
    os << csv_quote(r.segment) << ',' << csv_quote(r.ins) << ',' << (r.inferred ? "true" : "false") << ',' << r.src
       << ',' << r.dst << ',' << (r.secured ? "true" : "false") << ',' << fmt(r.forward_thz, "%.2f") << ','
       << fmt(r.reverse_thz, "%.2f") << ',' << r.modulation << ',' << fmt(r.launch_power_dbm, "%.2f") << ','
       << fmt(r.ber, "%.4e") << ',' << fmt(r.skr_bps, "%.2f") << ',' << fmt(r.qber, "%.4f") << ',' << r.path_class
       << ',';
    if (r.path_class.empty()) {
      os << ",,,\n";
    } else {
      os << r.alice << ',' << r.bob << ',' << fmt(r.quantum_loss_db, "%.2f") << ',' << r.n_coexisting << '\n';
    }
  }
}

void write_timing_csv(std::ostream& os, const std::vector<TimingRow>& rows) {
  os << "segment,ins,phase,start_s,end_s,duration_s\n";
  for (const auto& r : rows) {
    os << csv_quote(r.segment) << ',' << csv_quote(r.ins) << ',' << r.phase << ',' << format_time(r.start) << ','
       << format_time(r.end) << ',' << format_time(r.duration()) << '\n';
  }
}

nlohmann::json report_json(const EventLog& log) {
  nlohmann::json j;
  j["physical"] = nlohmann::json::array();
  for (const auto& r : physical_report(log)) {
    nlohmann::json o{{"segment", r.segment},
                     {"ins", r.ins},
                     {"inferred", r.inferred},
                     {"src", r.src},
                     {"dst", r.dst},
                     {"secured", r.secured},
                     {"wavelength_pair_thz", {r.forward_thz, r.reverse_thz}},
                     {"modulation", r.modulation},
                     {"launch_power_dbm", r.launch_power_dbm},
                     {"ber", r.ber},
                     {"skr_bps", r.skr_bps},
                     {"qber", r.qber}};
    if (!r.path_class.empty()) {
      o["quantum"] = {{"path_class", r.path_class},
                      {"alice", r.alice},
                      {"bob", r.bob},
                      {"path_loss_db", r.quantum_loss_db},
                      {"n_coexisting", r.n_coexisting}};
    }
    j["physical"].push_back(o);
  }
  j["timing"] = nlohmann::json::array();
  for (const auto& r : timing_report(log)) {
    j["timing"].push_back({{"segment", r.segment},
                           {"ins", r.ins},
                           {"phase", r.phase},
                           {"start_s", r.start},
                           {"end_s", r.end},
                           {"duration_s", r.duration()}});
  }
  return j;
}

}  // namespace qsim
