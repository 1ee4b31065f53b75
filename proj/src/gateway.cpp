#include "qsim/gateway.hpp"

#include <atomic>
#include <chrono>
#include <deque>
#include <fstream>
#include <functional>
#include <future>
#include <regex>
#include <thread>

#include <httplib.h>

#include "qsim/orchestrator.hpp"
#include "qsim/scenario.hpp"

namespace qsim {

const char* to_string(SessionMode m) {
  switch (m) {
    case SessionMode::Fast: return "fast";
    case SessionMode::Step: return "step";
    case SessionMode::Realtime: return "realtime";
  }
  return "?";
}

SessionMode session_mode_from_string(const std::string& s) {
  if (s == "fast") return SessionMode::Fast;
  if (s == "step") return SessionMode::Step;
  if (s == "realtime") return SessionMode::Realtime;
  fail(ErrorCode::InvalidArgument, "unknown session mode '" + s + "'");
}

void EventStore::append(const SimEvent& e) {
  {
    std::lock_guard<std::mutex> lk(mu_);
    events_.push_back(e);
  }
  cv_.notify_all();
}

void EventStore::reset(std::uint64_t run_id) {
  {
    std::lock_guard<std::mutex> lk(mu_);
    events_.clear();
    run_id_ = run_id;
  }
  cv_.notify_all();
}

std::uint64_t EventStore::run_id() const {
  std::lock_guard<std::mutex> lk(mu_);
  return run_id_;
}

std::size_t EventStore::size() const {
  std::lock_guard<std::mutex> lk(mu_);
  return events_.size();
}

std::vector<SimEvent> EventStore::since(std::uint64_t since, std::size_t limit) const {
  std::lock_guard<std::mutex> lk(mu_);
  std::vector<SimEvent> out;
  for (std::size_t i = since; i < events_.size() && out.size() < limit; ++i) out.push_back(events_[i]);
  return out;
}

std::vector<SimEvent> EventStore::wait_since(std::uint64_t since, std::size_t limit, int timeout_ms,
                                             std::uint64_t& run_id_out) const {
  std::unique_lock<std::mutex> lk(mu_);
  const std::uint64_t run = run_id_;
  cv_.wait_for(lk, std::chrono::milliseconds(timeout_ms),
               [&] { return run_id_ != run || events_.size() > since; });
  run_id_out = run_id_;
  std::vector<SimEvent> out;
  if (run_id_ != run) return out;
  for (std::size_t i = since; i < events_.size() && out.size() < limit; ++i) out.push_back(events_[i]);
  return out;
}

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Snapshot {
  std::uint64_t run_id = 0;
  double sim_time = 0.0;
  json islands = json::array();
  json catalogue = json::array();
  std::map<std::string, json> ins;
  json topology;
};

int status_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::InvalidState: return 409;
    case ErrorCode::Infeasible:
    case ErrorCode::QuantumCollision:
    case ErrorCode::WavelengthCollision:
    case ErrorCode::DisconnectedPath:
    case ErrorCode::DegreeInUse:
    case ErrorCode::UnsupportedConfiguration:
    case ErrorCode::UnknownPort: return 422;
    case ErrorCode::Timeout: return 504;
    case ErrorCode::InvalidArgument:
    case ErrorCode::SchemaError: return 400;
  }
  return 500;
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, const Error& e) {
  json body{{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
  if (const auto* api = dynamic_cast<const ApiError*>(&e); api && !api->violated_constraint.empty()) {
    body["violated_constraint"] = api->violated_constraint;
  }
  reply(res, status_for(e.code()), body);
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    auto j = json::parse(req.body);
    if (!j.is_object()) fail(ErrorCode::SchemaError, "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    fail(ErrorCode::SchemaError, std::string("malformed JSON body: ") + e.what());
  }
}

std::uint64_t query_u64(const httplib::Request& req, const char* key, std::uint64_t fallback) {
  if (!req.has_param(key)) return fallback;
  try {
    return std::stoull(req.get_param_value(key));
  } catch (const std::exception&) {
    fail(ErrorCode::InvalidArgument, std::string("query parameter '") + key + "' must be a non-negative integer");
  }
}

json events_json(const std::vector<SimEvent>& evs) {
  json out = json::array();
  for (const auto& e : evs) out.push_back(json::parse(e.to_json().dump()));
  return out;
}

}  // namespace

struct Gateway::Impl {
  GatewayConfig cfg;
  std::filesystem::path data_dir;
  Topology topo;
  CalibrationTable table;
  OrchestratorConfig ocfg;

  // owned by the worker thread
  std::unique_ptr<Kernel> kernel;
  std::unique_ptr<Orchestrator> orch;
  std::vector<std::unique_ptr<ScriptDriver>> drivers;
  std::uint64_t run_id = 0;
  SessionMode mode = SessionMode::Fast;
  double time_scale = 10.0;
  std::uint64_t seed = 1;
  Clock::time_point wall_base;
  double sim_base = 0.0;

  std::mutex qmu;
  std::condition_variable qcv;
  std::deque<std::function<void()>> queue;
  bool stopping = false;
  std::thread worker;

  mutable std::mutex snap_mu;
  std::shared_ptr<const Snapshot> snap = std::make_shared<Snapshot>();
  std::atomic<int> stream_clients{0};
  std::atomic<int> session_mode{0};
  std::atomic<double> session_scale{10.0};

  EventStore store;
  httplib::Server server;
  std::thread server_thread;

  explicit Impl(GatewayConfig c)
      : cfg(std::move(c)),
        data_dir(cfg.data_dir.empty() ? default_data_dir() : cfg.data_dir),
        topo(Topology::load(data_dir / "topology.json")),
        table(CalibrationTable::load(data_dir / "calibration.json")) {
    if (!(cfg.time_scale > 0.0)) fail(ErrorCode::InvalidArgument, "time scale must be positive");
    for (const auto& o : cfg.overrides) {
      const auto [k, v] = split_setting(o);
      apply_setting(ocfg, k, v);
    }
    mode = cfg.mode;
    time_scale = cfg.time_scale;
    seed = cfg.seed;
    reset_session();
    worker = std::thread([this] { work(); });
    routes();
  }

  ~Impl() { shutdown(); }

  void shutdown() {
    server.stop();
    if (server_thread.joinable()) server_thread.join();
    {
      std::lock_guard<std::mutex> lk(qmu);
      if (stopping) return;
      stopping = true;
    }
    qcv.notify_all();
    if (worker.joinable()) worker.join();
  }

  // ---- worker side ----

  void reset_session(const OrchestratorConfig* config = nullptr) {
    drivers.clear();
    orch.reset();
    ++run_id;
    store.reset(run_id);
    kernel = std::make_unique<Kernel>(seed);
    kernel->on_emit([this](const SimEvent& e) { store.append(e); });
    orch = std::make_unique<Orchestrator>(*kernel, topo, table, config ? *config : ocfg);
    wall_base = Clock::now();
    sim_base = 0.0;
    session_mode = static_cast<int>(mode);
    session_scale = time_scale;
    publish();
  }

  void publish() {
    auto s = std::make_shared<Snapshot>();
    s->run_id = run_id;
    s->sim_time = kernel->now();
    for (const auto& [id, isl] : orch->islands()) {
      s->islands.push_back({{"island_id", id},
                            {"certificate_id", isl.registration.certificate_id},
                            {"proxy_endpoint", isl.registration.proxy_endpoint},
                            {"connected", isl.connected}});
    }
    s->catalogue = orch->catalogue_json();
    for (const auto& id : orch->ins_ids()) s->ins[id] = orch->ins_json(id);
    s->topology = orch->topology_json();
    std::lock_guard<std::mutex> lk(snap_mu);
    snap = std::move(s);
  }

  void advance_realtime() {
    const double elapsed = std::chrono::duration<double>(Clock::now() - wall_base).count();
    const double target = sim_base + elapsed * time_scale;
    if (target <= kernel->now()) return;
    const auto before = kernel->log().size();
    kernel->run_until(target);
    if (kernel->log().size() != before) publish();
  }

  void work() {
    int idle_ticks = 0;
    for (;;) {
      std::function<void()> job;
      {
        std::unique_lock<std::mutex> lk(qmu);
        if (mode == SessionMode::Realtime) {
          qcv.wait_for(lk, std::chrono::milliseconds(20), [&] { return stopping || !queue.empty(); });
        } else {
          qcv.wait(lk, [&] { return stopping || !queue.empty(); });
        }
        if (stopping && queue.empty()) return;
        if (!queue.empty()) {
          job = std::move(queue.front());
          queue.pop_front();
        }
      }
      if (mode == SessionMode::Realtime) {
        advance_realtime();
        // keep sim_time in snapshots moving even when nothing fires
        if (++idle_ticks >= 10) {
          idle_ticks = 0;
          publish();
        }
      }
      if (job) job();
    }
  }

  /// Runs fn on the worker, publishes, answers, then lets fast mode catch up.
  template <typename F>
  auto submit(F fn) -> decltype(fn()) {
    using R = decltype(fn());
    auto prom = std::make_shared<std::promise<R>>();
    auto fut = prom->get_future();
    {
      std::lock_guard<std::mutex> lk(qmu);
      if (stopping) fail(ErrorCode::InvalidState, "gateway is shutting down");
      queue.push_back([this, fn = std::move(fn), prom]() mutable {
        try {
          if constexpr (std::is_void_v<R>) {
            fn();
            publish();
            prom->set_value();
          } else {
            R r = fn();
            publish();
            prom->set_value(std::move(r));
          }
        } catch (...) {
          publish();
          prom->set_exception(std::current_exception());
        }
        if (mode == SessionMode::Fast && kernel->has_foreground()) {
          kernel->run();
          publish();
        }
      });
    }
    qcv.notify_all();
    return fut.get();
  }

  std::shared_ptr<const Snapshot> snapshot() const {
    std::lock_guard<std::mutex> lk(snap_mu);
    return snap;
  }

  json session_json() const {
    auto s = snapshot();
    return {{"run_id", s->run_id},
            {"mode", to_string(static_cast<SessionMode>(session_mode.load()))},
            {"time_scale", session_scale.load()},
            {"sim_time", s->sim_time},
            {"events", store.size()},
            {"stream_clients", stream_clients.load()}};
  }

  // ---- HTTP ----

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  Handler guarded(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const Error& e) {
        reply_error(res, e);
      } catch (const json::exception& e) {
        reply_error(res, Error(ErrorCode::SchemaError, std::string("bad request body: ") + e.what()));
      } catch (const std::exception& e) {
        reply(res, 500, {{"code", "internal"}, {"message", e.what()}});
      }
    };
  }

  static IslandRegistration registration_from(const json& b) {
    IslandRegistration r;
    r.certificate_id = b.value("certificate_id", "");
    r.proxy_endpoint = b.value("proxy_endpoint", "");
    r.island_hint = b.value("island_hint", 0);
    if (b.contains("catalogue")) {
      for (const auto& n : b.at("catalogue")) {
        NsDescriptor d;
        d.ns_id = n.at("ns_id").get<std::string>();
        d.name = n.value("name", d.ns_id);
        if (n.contains("vnfs")) d.vnfs = n.at("vnfs").get<std::vector<std::string>>();
        r.catalogue.push_back(std::move(d));
      }
    }
    return r;
  }

  static ReconfigureChange change_from(const std::string& id, const json& b) {
    ReconfigureChange c;
    c.ins_id = id;
    if (b.contains("secured")) c.secured = b.at("secured").get<bool>();
    if (b.contains("pinned_wavelength_thz")) {
      c.pinned_wavelength = Frequency::from_thz(b.at("pinned_wavelength_thz").get<double>());
    }
    c.clear_pin = b.value("clear_pin", false);
    return c;
  }

  void routes() {
    server.Get("/v1/session", guarded([this](const httplib::Request&, httplib::Response& res) { reply(res, 200, session_json()); }));

    server.Post("/v1/session/reset", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto b = parse_body(req);
      std::optional<SessionMode> m;
      if (b.contains("mode")) m = session_mode_from_string(b.at("mode").get<std::string>());
      const double scale = b.value("time_scale", 0.0);
      if (b.contains("time_scale") && !(scale > 0.0)) fail(ErrorCode::InvalidArgument, "time_scale must be positive");
      const std::uint64_t new_seed = b.value("seed", std::uint64_t{0});
      const bool has_seed = b.contains("seed");
      submit([&, m, scale, new_seed, has_seed] {
        if (m) mode = *m;
        if (scale > 0.0) time_scale = scale;
        if (has_seed) seed = new_seed;
        reset_session();
        return 0;
      });
      reply(res, 200, session_json());
    }));

    server.Post("/v1/session/step", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto b = parse_body(req);
      submit([&] {
        if (mode != SessionMode::Step) fail(ErrorCode::InvalidState, "session is not in step mode");
        if (b.contains("until")) {
          kernel->run_until(b.at("until").get<double>());
        } else if (b.contains("seconds")) {
          kernel->run_until(kernel->now() + b.at("seconds").get<double>());
        } else {
          const int n = b.value("events", 1);
          for (int i = 0; i < n && kernel->step();) ++i;
        }
        return 0;
      });
      reply(res, 200, session_json());
    }));

    server.Post("/v1/islands", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto reg = registration_from(parse_body(req));
      const int id = submit([&] { return orch->register_island(reg); });
      reply(res, 201, {{"island_id", id}});
    }));

    server.Post(R"(/v1/islands/(\d+)/reconnect)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const int id = std::stoi(req.matches[1]);
      const auto cert = parse_body(req).value("certificate_id", "");
      submit([&] { return orch->reconnect_island(id, cert); });
      reply(res, 200, {{"island_id", id}});
    }));

    server.Get("/v1/islands", guarded([this](const httplib::Request&, httplib::Response& res) { reply(res, 200, snapshot()->islands); }));
    server.Get("/v1/catalogue", guarded([this](const httplib::Request&, httplib::Response& res) { reply(res, 200, snapshot()->catalogue); }));
    server.Get("/v1/topology", guarded([this](const httplib::Request&, httplib::Response& res) { reply(res, 200, snapshot()->topology); }));

    server.Post("/v1/ins", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto b = parse_body(req);
      const auto& mem = b.at("members");
      if (!mem.is_array() || mem.size() != 2) fail(ErrorCode::InvalidArgument, "an iNS has exactly two members");
      auto member = [](const json& m) {
        return Member{m.at("island").get<int>(), m.contains("ns") ? m.at("ns").get<std::string>()
                                                                  : m.at("local_ns").get<std::string>()};
      };
      const Member a = member(mem[0]);
      const Member c = member(mem[1]);
      ComposeOptions opt;
      opt.ins_id = b.value("ins_id", "");
      const auto bw = b.value("bandwidth", std::string("standard"));
      if (bw != "standard" && bw != "high") fail(ErrorCode::InvalidArgument, "bandwidth must be standard or high");
      opt.bandwidth = bw == "high" ? BandwidthClass::High : BandwidthClass::Standard;
      opt.ttl_s = b.value("ttl_s", 0.0);
      if (b.contains("pinned_wavelength_thz")) {
        opt.pinned_wavelength = Frequency::from_thz(b.at("pinned_wavelength_thz").get<double>());
      }
      opt.inferred_pin = b.value("inferred", false);
      const bool secured = b.value("secured", false);
      const json body = submit([&] {
        const auto& ns = orch->compose(a, c, secured, opt);
        return orch->ins_json(ns.id);
      });
      reply(res, 201, body);
    }));

    server.Get("/v1/ins", guarded([this](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (const auto& [id, j] : snapshot()->ins) out.push_back(j);
      reply(res, 200, out);
    }));

    server.Get(R"(/v1/ins/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto s = snapshot();
      auto it = s->ins.find(req.matches[1]);
      if (it == s->ins.end()) throw ApiError(ErrorCode::NotFound, "unknown iNS " + std::string(req.matches[1]));
      reply(res, 200, it->second);
    }));

    server.Post(R"(/v1/ins/([^/]+)/deploy)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const json body = submit([&] {
        orch->deploy({id});
        return orch->ins_json(id);
      });
      reply(res, 202, body);
    }));

    server.Post(R"(/v1/ins/([^/]+)/reconfigure)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const auto change = change_from(id, parse_body(req));
      const json body = submit([&] {
        orch->reconfigure({change});
        return orch->ins_json(id);
      });
      reply(res, 202, body);
    }));

    // several changes and deployments under one plan
    server.Post("/v1/reconfigure", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto b = parse_body(req);
      std::vector<ReconfigureChange> changes;
      for (const auto& c : b.value("changes", json::array())) changes.push_back(change_from(c.at("ins").get<std::string>(), c));
      const auto dep = b.value("deploy", std::vector<std::string>{});
      submit([&] {
        orch->reconfigure(changes, dep);
        return 0;
      });
      reply(res, 202, {{"accepted", true}});
    }));

    server.Delete(R"(/v1/ins/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const json body = submit([&] {
        orch->terminate(id);
        return orch->ins_json(id);
      });
      reply(res, 200, body);
    }));

    server.Get("/v1/events", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto since = query_u64(req, "since", 0);
      const auto limit = query_u64(req, "limit", 10000);
      const auto evs = store.since(since, limit);
      reply(res, 200, {{"run_id", store.run_id()}, {"events", events_json(evs)}, {"next", since + evs.size()}});
    }));

    // long-poll tail: returns as soon as anything at or after `since` exists
    server.Get("/v1/stream", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto since = query_u64(req, "since", 0);
      const auto limit = query_u64(req, "limit", 1000);
      const int timeout = static_cast<int>(std::min<std::uint64_t>(query_u64(req, "timeout_ms", 25000), 60000));
      ++stream_clients;
      std::uint64_t run = 0;
      const auto evs = store.wait_since(since, limit, timeout, run);
      --stream_clients;
      reply(res, 200, {{"run_id", run}, {"events", events_json(evs)}, {"next", since + evs.size()}});
    }));

    server.Post(R"(/v1/run/([A-Za-z0-9_\-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string name = req.matches[1];
      const auto path = data_dir / "scenarios" / (name + ".json");
      if (!std::filesystem::exists(path)) throw ApiError(ErrorCode::NotFound, "no shipped scenario '" + name + "'");
      const auto script = ScenarioScript::load(path);
      const json body = submit([&] {
        OrchestratorConfig c = ocfg;
        for (const auto& [k, v] : script.config) apply_setting(c, k, v);
        reset_session(&c);
        auto d = std::make_unique<ScriptDriver>(*kernel, *orch);
        d->schedule(script, kernel->now());
        drivers.push_back(std::move(d));
        return json{{"run_id", run_id}, {"scenario", script.name}, {"steps", script.steps.size()}};
      });
      reply(res, 202, body);
    }));
  }
};

Gateway::Gateway(GatewayConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Gateway::~Gateway() = default;

bool Gateway::listen() { return impl_->server.listen(impl_->cfg.host, impl_->cfg.port); }

int Gateway::start() {
  auto& s = impl_->server;
  int port = impl_->cfg.port;
  if (port == 0) {
    port = s.bind_to_any_port(impl_->cfg.host);
  } else if (!s.bind_to_port(impl_->cfg.host, port)) {
    port = -1;
  }
  if (port < 0) fail(ErrorCode::InvalidArgument, "cannot bind " + impl_->cfg.host);
  impl_->server_thread = std::thread([&s] { s.listen_after_bind(); });
  s.wait_until_ready();
  return port;
}

void Gateway::stop() { impl_->shutdown(); }

const EventStore& Gateway::events() const { return impl_->store; }

}  // namespace qsim
