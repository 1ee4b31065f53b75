#include "qsim/sim_kernel.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json_source.hpp"

namespace qsim {

std::string SimEvent::field(const std::string& key) const {
  auto it = payload.find(key);
  if (it == payload.end() || it->is_null()) return "";
  if (it->is_string()) return it->get<std::string>();
  return it->dump();
}

Payload SimEvent::to_json() const {
  Payload j;
  j["time"] = time;
  j["seq"] = seq;
  j["source"] = source;
  j["kind"] = kind;
  j["payload"] = payload;
  return j;
}

SimEvent SimEvent::from_json(const nlohmann::json& j) {
  SimEvent e;
  e.time = j.at("time").get<double>();
  e.seq = j.at("seq").get<std::uint64_t>();
  e.source = j.at("source").get<std::string>();
  e.kind = j.at("kind").get<std::string>();
  if (j.contains("payload")) e.payload = Payload(j.at("payload"));
  return e;
}

const SimEvent& EventLog::append(double time, std::string source, std::string kind, Payload payload) {
  if (!events_.empty() && time < events_.back().time) {
    fail(ErrorCode::InvalidArgument, "event log time regression");
  }
  SimEvent e;
  e.time = time;
  e.seq = events_.size();
  e.source = std::move(source);
  e.kind = std::move(kind);
  e.payload = std::move(payload);
  events_.push_back(std::move(e));
  return events_.back();
}

std::vector<SimEvent> EventLog::since(std::uint64_t seq) const {
  if (seq >= events_.size()) return {};
  return {events_.begin() + static_cast<long>(seq), events_.end()};
}

std::vector<SimEvent> EventLog::until(double time) const {
  std::vector<SimEvent> out;
  for (const auto& e : events_) {
    if (e.time > time) break;
    out.push_back(e);
  }
  return out;
}

void EventLog::write_jsonl(std::ostream& os) const {
  for (const auto& e : events_) os << e.to_json().dump() << '\n';
}

std::string EventLog::to_jsonl() const {
  std::ostringstream os;
  write_jsonl(os);
  return os.str();
}

std::string format_time(double t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", t);
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

void EventLog::write_csv(std::ostream& os) const {
  os << "time,seq,source,kind,payload\n";
  for (const auto& e : events_) {
    os << format_time(e.time) << ',' << e.seq << ',' << csv_quote(e.source) << ',' << csv_quote(e.kind) << ','
       << csv_quote(e.payload.dump()) << '\n';
  }
}

EventLog EventLog::read_jsonl(std::istream& is, const std::string& source_name) {
  EventLog log;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    SimEvent e;
    try {
      e = SimEvent::from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& ex) {
      fail(ErrorCode::SchemaError, source_name + ":" + std::to_string(lineno) + ": " + ex.what());
    }
    if (e.seq != log.events_.size()) {
      fail(ErrorCode::SchemaError, source_name + ":" + std::to_string(lineno) + ": sequence gap (expected " +
                                       std::to_string(log.events_.size()) + ")");
    }
    if (!log.events_.empty() && e.time < log.events_.back().time) {
      fail(ErrorCode::SchemaError, source_name + ":" + std::to_string(lineno) + ": time goes backwards");
    }
    log.events_.push_back(std::move(e));
  }
  return log;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

std::mt19937_64& RngStreams::stream(const std::string& agent) {
  auto it = streams_.find(agent);
  if (it == streams_.end()) {
    it = streams_.emplace(agent, std::mt19937_64(splitmix64(seed_ ^ splitmix64(fnv1a64(agent))))).first;
  }
  return it->second;
}

double RngStreams::uniform(const std::string& agent, double lo, double hi) {
  // std::uniform_real_distribution is implementation-defined; this is not.
  const double u = static_cast<double>(stream(agent)() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

EventId Kernel::schedule(double delay, Action action, bool background) {
  if (!(delay >= 0.0)) fail(ErrorCode::InvalidArgument, "cannot schedule in the past");
  return schedule_at(now_ + delay, std::move(action), background);
}

EventId Kernel::schedule_at(double time, Action action, bool background) {
  if (!(time >= now_)) fail(ErrorCode::InvalidArgument, "cannot schedule in the past");
  const EventId id = next_id_++;
  queue_.push(Entry{time, next_order_++, id});
  live_.emplace(id, Scheduled{std::move(action), background});
  if (!background) ++foreground_;
  return id;
}

bool Kernel::cancel(EventId id) {
  auto it = live_.find(id);
  if (it == live_.end()) return false;
  if (!it->second.background) --foreground_;
  live_.erase(it);
  return true;
}

void Kernel::fire(const Entry& e) {
  auto it = live_.find(e.id);
  if (it == live_.end()) return;  // cancelled
  Scheduled s = std::move(it->second);
  live_.erase(it);
  if (!s.background) --foreground_;
  now_ = e.time;
  s.action();
}

bool Kernel::step() {
  while (!queue_.empty()) {
    const Entry e = queue_.top();
    queue_.pop();
    if (live_.count(e.id) == 0) continue;
    fire(e);
    return true;
  }
  return false;
}

std::optional<double> Kernel::next_time() const {
  auto copy = queue_;
  while (!copy.empty()) {
    if (live_.count(copy.top().id)) return copy.top().time;
    copy.pop();
  }
  return std::nullopt;
}

void Kernel::run_until(double t) {
  if (t < now_) fail(ErrorCode::InvalidArgument, "run_until into the past");
  while (!queue_.empty()) {
    const Entry e = queue_.top();
    if (live_.count(e.id) == 0) {
      queue_.pop();
      continue;
    }
    if (e.time > t) break;
    queue_.pop();
    fire(e);
  }
  now_ = t;
}

void Kernel::run() {
  while (foreground_ > 0 && step()) {
  }
}

const SimEvent& Kernel::emit(const std::string& source, const std::string& kind, Payload payload) {
  const auto& e = log_.append(now_, source, kind, std::move(payload));
  for (const auto& l : listeners_) l(e);
  return e;
}

const char* to_string(DeviceKind k) {
  switch (k) {
    case DeviceKind::Transceiver: return "transceiver";
    case DeviceKind::Ofs: return "ofs";
    case DeviceKind::Wss: return "wss";
    case DeviceKind::NsDeploy: return "ns_deploy";
    case DeviceKind::L2Flow: return "l2_flow";
    case DeviceKind::ControlHop: return "control_hop";
  }
  return "?";
}

double LatencyModel::sample(DeviceKind kind, const LatencyContext& ctx, RngStreams& rng,
                            const std::string& agent) const {
  auto draw = [&](const LatencyRange& r) { return rng.uniform(agent, r.lo, r.hi); };
  switch (kind) {
    case DeviceKind::Transceiver:
      return draw(ctx.modulation_change ? transceiver_modulation_change : transceiver_basic);
    case DeviceKind::Ofs: return ofs_s;
    case DeviceKind::Wss: return wss_base_s + wss_per_passband_s * ctx.passband_changes;
    case DeviceKind::NsDeploy: return draw(ns_deploy);
    case DeviceKind::L2Flow: return draw(l2_flow);
    case DeviceKind::ControlHop: return draw(control_hop);
  }
  return 0.0;
}

double LatencyModel::qkd_init_time(double path_loss_db) const {
  if (!(path_loss_db > 0.0)) fail(ErrorCode::InvalidArgument, "qkd_init_time needs a positive loss");
  return std::max(qkd_floor_s, qkd_intercept_s + qkd_slope_s_per_db * path_loss_db);
}

namespace {

std::map<std::string, double*> fields(LatencyModel& m) {
  return {{"transceiver_basic.lo", &m.transceiver_basic.lo},
          {"transceiver_basic.hi", &m.transceiver_basic.hi},
          {"transceiver_modulation_change.lo", &m.transceiver_modulation_change.lo},
          {"transceiver_modulation_change.hi", &m.transceiver_modulation_change.hi},
          {"ofs_s", &m.ofs_s},
          {"wss_base_s", &m.wss_base_s},
          {"wss_per_passband_s", &m.wss_per_passband_s},
          {"ns_deploy.lo", &m.ns_deploy.lo},
          {"ns_deploy.hi", &m.ns_deploy.hi},
          {"l2_flow.lo", &m.l2_flow.lo},
          {"l2_flow.hi", &m.l2_flow.hi},
          {"control_hop.lo", &m.control_hop.lo},
          {"control_hop.hi", &m.control_hop.hi},
          {"qkd_intercept_s", &m.qkd_intercept_s},
          {"qkd_slope_s_per_db", &m.qkd_slope_s_per_db},
          {"qkd_floor_s", &m.qkd_floor_s}};
}

}  // namespace

void LatencyModel::apply_override(const std::string& key, double value) {
  auto f = fields(*this);
  auto it = f.find(key);
  if (it == f.end()) fail(ErrorCode::InvalidArgument, "unknown latency parameter '" + key + "'");
  *it->second = value;
}

void LatencyModel::validate() const {
  auto check = [](const LatencyRange& r, const char* name) {
    if (!(r.lo > 0.0) || r.hi < r.lo) {
      fail(ErrorCode::InvalidArgument, std::string("latency range ") + name + " must satisfy 0 < lo <= hi");
    }
  };
  check(transceiver_basic, "transceiver_basic");
  check(transceiver_modulation_change, "transceiver_modulation_change");
  check(ns_deploy, "ns_deploy");
  check(l2_flow, "l2_flow");
  check(control_hop, "control_hop");
  if (transceiver_modulation_change.lo < transceiver_basic.lo || transceiver_modulation_change.hi < transceiver_basic.hi) {
    fail(ErrorCode::InvalidArgument, "modulation-change transceiver range must dominate the basic range");
  }
  if (!(ofs_s > 0.0) || !(wss_base_s > 0.0) || wss_per_passband_s < 0.0) {
    fail(ErrorCode::InvalidArgument, "OFS and WSS latencies must be positive");
  }
  if (!(qkd_floor_s > 0.0) || !(qkd_slope_s_per_db > 0.0)) {
    fail(ErrorCode::InvalidArgument, "QKD init model needs a positive floor and slope");
  }
}

nlohmann::json LatencyModel::to_json() const {
  nlohmann::json j;
  for (const auto& [k, v] : fields(const_cast<LatencyModel&>(*this))) j[k] = *v;
  return j;
}

}  // namespace qsim
