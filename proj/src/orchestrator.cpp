#include "qsim/orchestrator.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

namespace qsim {

const char* to_string(Lifecycle s) {
  switch (s) {
    case Lifecycle::Composed: return "COMPOSED";
    case Lifecycle::Planning: return "PLANNING";
    case Lifecycle::OpticsConfiguring: return "OPTICS_CONFIGURING";
    case Lifecycle::QkdInitializing: return "QKD_INITIALIZING";
    case Lifecycle::NsDeploying: return "NS_DEPLOYING";
    case Lifecycle::L2Wiring: return "L2_WIRING";
    case Lifecycle::AwaitingKeys: return "AWAITING_KEYS";
    case Lifecycle::Operational: return "OPERATIONAL";
    case Lifecycle::Terminated: return "TERMINATED";
    case Lifecycle::Failed: return "FAILED";
  }
  return "?";
}

std::optional<Lifecycle> lifecycle_from_string(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(Lifecycle::Failed); ++i) {
    if (s == to_string(static_cast<Lifecycle>(i))) return static_cast<Lifecycle>(i);
  }
  return std::nullopt;
}

bool lifecycle_edge_allowed(Lifecycle from, Lifecycle to, bool secured) {
  using L = Lifecycle;
  if (from == L::Terminated) return false;
  if (to == L::Terminated) return true;
  if (to == L::Failed) return from != L::Composed && from != L::Failed;
  if (!secured && (to == L::QkdInitializing || to == L::AwaitingKeys)) return false;
  switch (from) {
    case L::Composed: return to == L::Planning;
    case L::Planning: return to == L::OpticsConfiguring;
    case L::OpticsConfiguring: return secured ? to == L::QkdInitializing : to == L::NsDeploying;
    case L::QkdInitializing: return to == L::NsDeploying;
    case L::NsDeploying: return to == L::L2Wiring;
    case L::L2Wiring: return to == L::AwaitingKeys || (to == L::Operational);
    case L::AwaitingKeys: return to == L::Operational;
    case L::Operational: return to == L::AwaitingKeys;
    default: return false;
  }
}

nlohmann::json InterIslandNS::to_json() const {
  nlohmann::json j{{"ins_id", id},
                   {"members",
                    {{{"island_id", members[0].island}, {"ns_id", members[0].local_ns}},
                     {{"island_id", members[1].island}, {"ns_id", members[1].local_ns}}}},
                   {"secured", secured},
                   {"lifecycle", to_string(lifecycle)},
                   {"ttl_s", options.ttl_s},
                   {"bandwidth", options.bandwidth == BandwidthClass::High ? "high" : "standard"}};
  j["pinned_wavelength_thz"] = options.pinned_wavelength ? nlohmann::json(options.pinned_wavelength->thz()) : nullptr;
  j["inferred"] = options.inferred_pin;
  j["assignment"] = assignment ? assignment->to_json() : nlohmann::json(nullptr);
  nlohmann::json v = nlohmann::json::object();
  for (const auto& [island, tag] : vlan) v[std::to_string(island)] = tag;
  j["vlan"] = v;
  if (!failure_cause.empty()) j["failure_cause"] = failure_cause;
  return j;
}

namespace {

bool active_state(Lifecycle s) {
  return s != Lifecycle::Composed && s != Lifecycle::Terminated && s != Lifecycle::Failed;
}

std::optional<QuantumRoute> route_of(const Assignment& a) {
  if (!a.quantum) return std::nullopt;
  return a.quantum->route;
}

nlohmann::json ids_json(const std::vector<std::string>& ids) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& id : ids) j.push_back(id);
  return j;
}

}  // namespace

struct Orchestrator::Impl {
  // Work still outstanding for one iNS within a batch.
  struct Flight {
    std::uint64_t batch = 0;
    bool full_deploy = false;
    bool qkd_pending = false;
    bool key_acked = false;
    bool datapath_ready = false;
    std::set<int> proxies_pending;
    std::set<int> transceivers_pending;
    std::vector<EventId> timers;
    std::optional<EventId> timeout;
  };

  struct Batch {
    std::vector<std::string> ins;
    std::set<std::string> full_deploy;
    std::set<std::string> reconfigure_transceivers;
    std::set<std::string> start_qkd;
    std::map<std::string, Modulation> old_modulation;
  };

  struct Progress {
    bool vnf = false;
    bool l2 = false;
  };

  Kernel& k;
  const Topology& topo;
  const CalibrationTable& table;
  OrchestratorConfig cfg;
  PlanContext ctx;

  std::map<int, RegisteredIsland> islands;
  std::map<std::string, int> by_certificate;

  std::map<std::string, InterIslandNS> store;
  std::map<std::string, Flight> flights;
  std::map<std::uint64_t, Batch> batches;
  std::map<std::pair<std::string, int>, Progress> progress;
  std::map<std::string, EventId> ttl_timers;
  std::map<int, int> next_vlan;
  std::uint64_t batch_counter = 0;
  int ins_counter = 0;

  std::vector<Assignment> active;
  QRoadmState state;
  std::unique_ptr<KeyStore> keys;

  Impl(Kernel& kernel, const Topology& t, const CalibrationTable& tab, OrchestratorConfig c)
      : k(kernel), topo(t), table(tab), cfg(std::move(c)), ctx{t, tab, cfg.ber, cfg.planner}, state(t) {
    cfg.latency.validate();
    keys = std::make_unique<KeyStore>(
        k, cfg.keys,
        KeyStore::Hooks{[this](const std::string& id) { on_key_ack(id); },
                        [this](const std::string& id, const std::string& cause) { fail_ins(id, cause); }});
  }

  // ---- messaging -------------------------------------------------------

  void send(const std::string& from, const std::string& to, std::function<void()> fn, const std::string& ins = "") {
    const double d = cfg.latency.sample(DeviceKind::ControlHop, {}, k.rng(), "hop:" + from + "->" + to);
    const EventId id = k.schedule(d, std::move(fn));
    if (!ins.empty()) {
      auto f = flights.find(ins);
      if (f != flights.end()) f->second.timers.push_back(id);
    }
  }

  EventId after(double delay, const std::string& ins, std::function<void()> fn) {
    const EventId id = k.schedule(delay, std::move(fn));
    auto f = flights.find(ins);
    if (f != flights.end()) f->second.timers.push_back(id);
    return id;
  }

  static std::string proxy_name(int island) { return "island-" + std::to_string(island); }

  // ---- NSM -------------------------------------------------------------

  InterIslandNS& get(const std::string& id) {
    auto it = store.find(id);
    if (it == store.end()) throw ApiError(ErrorCode::NotFound, "unknown iNS '" + id + "'");
    return it->second;
  }

  void set_lifecycle(InterIslandNS& ns, Lifecycle to, const std::string& cause = "") {
    if (ns.lifecycle == to) return;
    if (!lifecycle_edge_allowed(ns.lifecycle, to, ns.secured)) {
      fail(ErrorCode::InvalidState, std::string("illegal lifecycle edge ") + to_string(ns.lifecycle) + " -> " +
                                        to_string(to) + " for " + ns.id);
    }
    Payload p{{"ins", ns.id}, {"from", to_string(ns.lifecycle)}, {"to", to_string(to)}};
    if (!cause.empty()) p["cause"] = cause;
    ns.lifecycle = to;
    k.emit("nsm", "lifecycle", std::move(p));
    if (to == Lifecycle::Operational) k.emit("nsm", "ns-operational", {{"ins", ns.id}, {"secured", ns.secured}});
  }

  NSRequest request_of(const InterIslandNS& ns) const {
    NSRequest r;
    r.id = ns.id;
    r.src = IslandId{ns.members[0].island};
    r.dst = IslandId{ns.members[1].island};
    r.secured = ns.secured;
    r.bandwidth = ns.options.bandwidth;
    r.ttl_s = ns.options.ttl_s;
    r.pinned_wavelength = ns.options.pinned_wavelength;
    return r;
  }

  void transition(const std::vector<ReconfigureChange>& changes, const std::vector<std::string>& deploy_ids) {
    std::set<std::string> deploying;
    for (const auto& id : deploy_ids) {
      auto& ns = get(id);
      if (ns.lifecycle != Lifecycle::Composed) {
        throw ApiError(ErrorCode::InvalidState,
                       "iNS " + id + " is " + to_string(ns.lifecycle) + "; only COMPOSED services can be deployed");
      }
      if (!deploying.insert(id).second) throw ApiError(ErrorCode::InvalidArgument, "iNS " + id + " listed twice");
    }
    std::map<std::string, InterIslandNS> next;
    for (const auto& [id, ns] : store) {
      if (active_state(ns.lifecycle) || deploying.count(id)) next.emplace(id, ns);
    }
    std::set<std::string> changed;
    for (const auto& c : changes) {
      auto& ns = get(c.ins_id);
      if (ns.lifecycle != Lifecycle::Operational || flights.count(c.ins_id)) {
        throw ApiError(ErrorCode::InvalidState,
                       "iNS " + c.ins_id + " is " + to_string(ns.lifecycle) + "; reconfigure needs OPERATIONAL");
      }
      auto& n = next.at(c.ins_id);
      if (c.secured) n.secured = *c.secured;
      if (c.clear_pin) n.options.pinned_wavelength.reset();
      if (c.pinned_wavelength) n.options.pinned_wavelength = c.pinned_wavelength;
      changed.insert(c.ins_id);
    }

    std::vector<NSRequest> requests;
    for (const auto& [id, ns] : next) requests.push_back(request_of(ns));
    auto rr = replan_delta(active, requests, ctx);

    if (!rr.plan.feasible()) {
      std::ostringstream msg;
      std::string violated;
      for (const auto& v : rr.plan.violations) {
        if (!msg.str().empty()) msg << "; ";
        msg << v.ns_id << ": " << v.constraint;
        if (violated.empty()) violated = v.constraint;
      }
      const ErrorCode code = rr.plan.violations.front().code;
      if (changes.empty()) {
        for (const auto& id : deploy_ids) {
          auto& ns = store.at(id);
          set_lifecycle(ns, Lifecycle::Planning);
          ns.failure_cause = "infeasible: " + msg.str();
          set_lifecycle(ns, Lifecycle::Failed, ns.failure_cause);
        }
      }
      throw ApiError(ErrorCode::Infeasible, "infeasible (" + std::string(qsim::to_string(code)) + "): " + msg.str(),
                     violated);
    }

    std::map<std::string, const Assignment*> old_by;
    for (const auto& a : active) old_by[a.ns_id] = &a;
    std::map<std::string, const Assignment*> new_by;
    for (const auto& a : rr.plan.assignments) new_by[a.ns_id] = &a;

    Batch batch;
    std::vector<std::string> stop_qkd;
    std::vector<std::string> rate_updates;
    for (const auto& [id, na] : new_by) {
      if (deploying.count(id)) {
        batch.full_deploy.insert(id);
        if (na->quantum) batch.start_qkd.insert(id);
        continue;
      }
      const Assignment& oa = *old_by.at(id);
      const bool trx = rr.touched.count(id) != 0;
      const auto oq = route_of(oa);
      const auto nq = route_of(*na);
      const bool qkd_change = oq != nq;
      if (flights.count(id) && (trx || qkd_change)) {
        throw ApiError(ErrorCode::InvalidState, "iNS " + id + " is still being deployed and would be reconfigured");
      }
      if (trx) {
        batch.reconfigure_transceivers.insert(id);
        batch.old_modulation[id] = oa.modulation;
      }
      if (qkd_change && oq) stop_qkd.push_back(id);
      if (qkd_change && nq) batch.start_qkd.insert(id);
      if (!qkd_change && nq && oa.predicted.skr_bps != na->predicted.skr_bps) rate_updates.push_back(id);
    }

    const bool nothing = batch.full_deploy.empty() && batch.reconfigure_transceivers.empty() &&
                         batch.start_qkd.empty() && stop_qkd.empty() && rr.plan.delta.empty();

    // Commit.
    for (const auto& [id, ns] : next) {
      auto& s = store.at(id);
      s.secured = ns.secured;
      s.options = ns.options;
    }
    active = rr.plan.assignments;
    state = rr.plan.state;
    if (nothing) {
      for (const auto& [id, na] : new_by) store.at(id).assignment = *na;
      return;
    }

    for (const auto& id : stop_qkd) keys->stop(id, "re-pointed");
    for (const auto& [id, na] : new_by) {
      auto& ns = store.at(id);
      const bool differs = !ns.assignment || ns.assignment->to_json() != na->to_json();
      ns.assignment = *na;
      if (differs) {
        Payload p{{"ins", id}, {"inferred", ns.options.inferred_pin}};
        p["assignment"] = Payload(na->to_json());
        k.emit("qidcm", "assignment", std::move(p));
      }
    }
    // coexistence changed under a running link: the pool follows the new SKR
    for (const auto& id : rate_updates) {
      keys->update_rate(id, new_by.at(id)->predicted.skr_bps, new_by.at(id)->predicted.qber);
    }

    const std::uint64_t b = ++batch_counter;
    for (const auto& id : deploy_ids) {
      auto& ns = store.at(id);
      set_lifecycle(ns, Lifecycle::Planning);
      set_lifecycle(ns, Lifecycle::OpticsConfiguring);
      for (const auto& m : ns.members) ns.vlan[m.island] = 100 + next_vlan[m.island]++;
      if (ns.options.ttl_s > 0.0) {
        ttl_timers[id] = k.schedule(ns.options.ttl_s, [this, id] {
          ttl_timers.erase(id);
          auto it = store.find(id);
          if (it != store.end() && it->second.lifecycle != Lifecycle::Terminated) {
            k.emit("nsm", "ttl-expired", {{"ins", id}});
            terminate(id);
          }
        });
      }
    }
    std::set<std::string> members;
    members.insert(batch.full_deploy.begin(), batch.full_deploy.end());
    members.insert(batch.reconfigure_transceivers.begin(), batch.reconfigure_transceivers.end());
    members.insert(batch.start_qkd.begin(), batch.start_qkd.end());
    batch.ins.assign(members.begin(), members.end());
    for (const auto& id : batch.ins) {
      Flight f;
      f.batch = b;
      f.full_deploy = batch.full_deploy.count(id) != 0;
      f.datapath_ready = !f.full_deploy;
      flights[id] = f;
    }
    batches[b] = batch;
    const ConfigDelta delta = rr.plan.delta;
    const std::vector<std::string> ins_list = batch.ins;
    send("nsm", "qidcm", [this, delta, ins_list, b] {
      configure_optics(delta, ins_list, false, [this, b] { send("qidcm", "nsm", [this, b] { on_optics_ready(b); }); });
    });
  }

  void on_optics_ready(std::uint64_t b) {
    auto bit = batches.find(b);
    if (bit == batches.end()) return;
    const Batch batch = bit->second;
    batches.erase(bit);
    for (const auto& id : batch.ins) {
      auto fit = flights.find(id);
      if (fit == flights.end() || fit->second.batch != b) continue;  // terminated or failed meanwhile
      auto& ns = store.at(id);
      auto& f = fit->second;
      const Assignment& a = *ns.assignment;
      if (batch.start_qkd.count(id)) {
        // QKD first so it starts before any transceiver is touched.
        QkdLinkSpec spec;
        spec.ins_id = id;
        spec.alice = a.quantum->alice.value;
        spec.bob = a.quantum->bob.value;
        spec.path_loss_db = a.quantum->path_loss_db;
        spec.init_time_s = cfg.latency.qkd_init_time(a.quantum->path_loss_db);
        spec.skr_bps = a.predicted.skr_bps;
        spec.qber = a.predicted.qber;
        spec.fail_during_init = cfg.faults.qkd_fail.count(id) != 0;
        f.qkd_pending = true;
        keys->start(spec);
        if (f.full_deploy) {
          set_lifecycle(ns, Lifecycle::QkdInitializing);
        } else {
          set_lifecycle(ns, Lifecycle::AwaitingKeys);
        }
      }
    }
    for (const auto& id : batch.ins) {
      auto fit = flights.find(id);
      if (fit == flights.end() || fit->second.batch != b) continue;
      auto& ns = store.at(id);
      auto& f = fit->second;
      if (f.full_deploy) {
        for (const auto& m : ns.members) {
          f.proxies_pending.insert(m.island);
          f.transceivers_pending.insert(m.island);
          const int island = m.island;
          send("nsm", proxy_name(island), [this, id, island] { proxy_deploy(id, island); }, id);
        }
        f.timeout = after(cfg.faults.proxy_timeout_s, id, [this, id] {
          fail_ins(id, "island proxy timeout after " + std::to_string(static_cast<int>(cfg.faults.proxy_timeout_s)) +
                           " s");
        });
      } else if (batch.reconfigure_transceivers.count(id)) {
        const bool mod_change = batch.old_modulation.at(id) != ns.assignment->modulation;
        for (const auto& m : ns.members) {
          f.transceivers_pending.insert(m.island);
          const int island = m.island;
          send("nsm", proxy_name(island), [this, id, island, mod_change] { proxy_retune(id, island, mod_change); },
               id);
        }
      }
      maybe_finish(id);
    }
  }

  void maybe_finish(const std::string& id) {
    auto fit = flights.find(id);
    if (fit == flights.end()) return;
    auto& f = fit->second;
    auto& ns = store.at(id);
    if (f.full_deploy && f.datapath_ready && !f.qkd_pending && ns.lifecycle == Lifecycle::L2Wiring) {
      set_lifecycle(ns, Lifecycle::Operational);
    }
    const bool done = f.datapath_ready && !f.qkd_pending && f.transceivers_pending.empty() &&
                      f.proxies_pending.empty() && batches.count(f.batch) == 0;
    if (done) {
      if (ns.lifecycle == Lifecycle::AwaitingKeys) set_lifecycle(ns, Lifecycle::Operational);
      if (f.timeout) k.cancel(*f.timeout);
      flights.erase(fit);
    }
  }

  void on_key_ack(const std::string& id) {
    auto fit = flights.find(id);
    if (fit == flights.end()) return;  // rekeyed link of a settled service
    auto& f = fit->second;
    if (!f.qkd_pending) return;
    f.qkd_pending = false;
    f.key_acked = true;
    auto& ns = store.at(id);
    if (ns.lifecycle == Lifecycle::AwaitingKeys) set_lifecycle(ns, Lifecycle::Operational);
    maybe_finish(id);
  }

  void on_transceiver_ready(const std::string& id, int island) {
    auto fit = flights.find(id);
    if (fit == flights.end()) return;
    fit->second.transceivers_pending.erase(island);
    auto& ns = store.at(id);
    if (fit->second.full_deploy &&
        (ns.lifecycle == Lifecycle::OpticsConfiguring || ns.lifecycle == Lifecycle::QkdInitializing)) {
      set_lifecycle(ns, Lifecycle::NsDeploying);
    }
    maybe_finish(id);
  }

  void on_vnf_ready(const std::string& id) {
    if (!flights.count(id)) return;
    auto& ns = store.at(id);
    if (ns.lifecycle == Lifecycle::NsDeploying) set_lifecycle(ns, Lifecycle::L2Wiring);
  }

  void on_datapath_ready(const std::string& id, int island) {
    auto fit = flights.find(id);
    if (fit == flights.end()) return;
    auto& f = fit->second;
    f.proxies_pending.erase(island);
    if (!f.proxies_pending.empty()) return;
    f.datapath_ready = true;
    if (f.timeout) {
      k.cancel(*f.timeout);
      f.timeout.reset();
    }
    auto& ns = store.at(id);
    if (f.qkd_pending && ns.lifecycle == Lifecycle::L2Wiring) set_lifecycle(ns, Lifecycle::AwaitingKeys);
    maybe_finish(id);
  }

  void release_resources(const std::string& id, bool rollback) {
    auto& ns = store.at(id);
    if (auto fit = flights.find(id); fit != flights.end()) {
      for (EventId t : fit->second.timers) k.cancel(t);
      if (fit->second.timeout) k.cancel(*fit->second.timeout);
      flights.erase(fit);
    }
    keys->stop(id, rollback ? "rollback" : "terminated");
    auto it = std::find_if(active.begin(), active.end(), [&](const Assignment& a) { return a.ns_id == id; });
    if (it != active.end()) {
      const Assignment gone = *it;
      active.erase(it);
      const ConfigDelta delta = delta_between(std::vector<Assignment>{gone}, {});
      state = apply_config(state, delta);
      send("nsm", "qidcm", [this, delta, id, rollback] { configure_optics(delta, {id}, rollback, nullptr); });
    }
    for (const auto& m : ns.members) {
      const int island = m.island;
      send("nsm", proxy_name(island), [this, id, island] { proxy_release(id, island); });
    }
  }

  void fail_ins(const std::string& id, const std::string& cause) {
    auto it = store.find(id);
    if (it == store.end() || !active_state(it->second.lifecycle)) return;
    auto& ns = it->second;
    // Other services in the batch stay up; this one's sibling branch is cancelled.
    release_resources(id, true);
    ns.failure_cause = cause;
    set_lifecycle(ns, Lifecycle::Failed, cause);
  }

  void terminate(const std::string& id) {
    auto& ns = get(id);
    if (ns.lifecycle == Lifecycle::Terminated) return;
    if (auto t = ttl_timers.find(id); t != ttl_timers.end()) {
      k.cancel(t->second);
      ttl_timers.erase(t);
    }
    if (active_state(ns.lifecycle)) release_resources(id, false);
    set_lifecycle(ns, Lifecycle::Terminated);
  }

  // ---- QIDCM -----------------------------------------------------------

  void configure_optics(const ConfigDelta& delta, const std::vector<std::string>& ins, bool rollback,
                        std::function<void()> done) {
    auto wss = [this, delta, ins, rollback, done] {
      if (delta.passband_changes() == 0) {
        if (done) done();
        return;
      }
      Payload p{{"device", "wss"}, {"ins", ids_json(ins)}, {"changes", delta.passband_changes()}};
      if (rollback) p["rollback"] = true;
      k.emit("qidcm/wss", "config-start", p);
      const double d = cfg.latency.sample(DeviceKind::Wss, {false, delta.passband_changes()}, k.rng(), "qidcm/wss");
      k.schedule(d, [this, p, done] {
        k.emit("qidcm/wss", "config-done", p);
        if (done) done();
      });
    };
    if (delta.crossconnect_changes() == 0) {
      wss();
      return;
    }
    Payload p{{"device", "ofs"}, {"ins", ids_json(ins)}, {"changes", delta.crossconnect_changes()}};
    nlohmann::json add = nlohmann::json::array();
    for (const auto& q : delta.add_quantum) add.push_back({q.in.value, q.out.value});
    nlohmann::json rem = nlohmann::json::array();
    for (const auto& q : delta.remove_quantum) rem.push_back({q.in.value, q.out.value});
    p["add"] = Payload(add);
    p["remove"] = Payload(rem);
    if (rollback) p["rollback"] = true;
    k.emit("qidcm/ofs", "config-start", p);
    const double d = cfg.latency.sample(DeviceKind::Ofs, {}, k.rng(), "qidcm/ofs");
    k.schedule(d, [this, p, wss] {
      k.emit("qidcm/ofs", "config-done", p);
      wss();
    });
  }

  // ---- island proxies --------------------------------------------------

  Payload transceiver_payload(const InterIslandNS& ns, int island, bool mod_change) const {
    const Assignment& a = *ns.assignment;
    const bool is_src = island == a.src.value;
    return Payload{{"device", "transceiver"},
                   {"ins", ns.id},
                   {"island", island},
                   {"tx_thz", (is_src ? a.forward : a.reverse).thz()},
                   {"rx_thz", (is_src ? a.reverse : a.forward).thz()},
                   {"modulation", std::string(to_string(a.modulation))},
                   {"launch_power_dbm", a.launch_power_dbm},
                   {"modulation_change", mod_change}};
  }

  void proxy_deploy(const std::string& id, int island) {
    if (cfg.faults.proxy_timeout.count(island)) return;  // unresponsive proxy
    const std::string src = proxy_name(island);
    const auto& ns = store.at(id);
    const Payload trx = transceiver_payload(ns, island, false);
    k.emit(src + "/transceiver", "config-start", trx);
    const double t_trx =
        cfg.latency.sample(DeviceKind::Transceiver, {false, 0}, k.rng(), src + "/transceiver");
    after(t_trx, id, [this, id, island, src, trx] {
      k.emit(src + "/transceiver", "config-done", trx);
      send(src, "nsm", [this, id, island] { on_transceiver_ready(id, island); }, id);
      const int vlan = store.at(id).vlan.at(island);
      k.emit(src + "/nfvo", "vnf-deploy", {{"ins", id}, {"island", island}, {"phase", "start"}});
      const double t_vnf = cfg.latency.sample(DeviceKind::NsDeploy, {}, k.rng(), src + "/nfvo");
      after(t_vnf, id, [this, id, island, src, vlan] {
        k.emit(src + "/nfvo", "vnf-deploy", {{"ins", id}, {"island", island}, {"phase", "done"}});
        progress[{id, island}].vnf = true;
        send(src, "nsm", [this, id] { on_vnf_ready(id); }, id);
        k.emit(src + "/sdn", "l2-flow", {{"ins", id}, {"island", island}, {"phase", "start"}, {"vlan", vlan}});
        const double t_l2 = cfg.latency.sample(DeviceKind::L2Flow, {}, k.rng(), src + "/sdn");
        after(t_l2, id, [this, id, island, src, vlan] {
          k.emit(src + "/sdn", "l2-flow", {{"ins", id}, {"island", island}, {"phase", "done"}, {"vlan", vlan}});
          progress[{id, island}].l2 = true;
          send(src, "nsm", [this, id, island] { on_datapath_ready(id, island); }, id);
        });
      });
    });
  }

  void proxy_retune(const std::string& id, int island, bool mod_change) {
    const std::string src = proxy_name(island);
    const Payload trx = transceiver_payload(store.at(id), island, mod_change);
    k.emit(src + "/transceiver", "config-start", trx);
    const double t = cfg.latency.sample(DeviceKind::Transceiver, {mod_change, 0}, k.rng(), src + "/transceiver");
    after(t, id, [this, id, island, src, trx] {
      k.emit(src + "/transceiver", "config-done", trx);
      send(src, "nsm", [this, id, island] { on_transceiver_ready(id, island); }, id);
    });
  }

  void proxy_release(const std::string& id, int island) {
    const std::string src = proxy_name(island);
    auto it = progress.find({id, island});
    if (it == progress.end()) return;
    if (it->second.l2) k.emit(src + "/sdn", "l2-flow", {{"ins", id}, {"island", island}, {"phase", "remove"}});
    if (it->second.vnf) k.emit(src + "/nfvo", "vnf-deploy", {{"ins", id}, {"island", island}, {"phase", "release"}});
    progress.erase(it);
  }
};

Orchestrator::Orchestrator(Kernel& kernel, const Topology& topology, const CalibrationTable& table,
                           OrchestratorConfig config)
    : impl_(std::make_unique<Impl>(kernel, topology, table, std::move(config))) {}

Orchestrator::~Orchestrator() = default;

int Orchestrator::register_island(const IslandRegistration& reg) {
  auto& m = *impl_;
  if (reg.certificate_id.empty()) throw ApiError(ErrorCode::InvalidArgument, "registration needs a certificate id");
  if (reg.catalogue.empty()) throw ApiError(ErrorCode::InvalidArgument, "registration with an empty NS catalogue");
  std::set<std::string> ids;
  for (const auto& d : reg.catalogue) {
    if (d.ns_id.empty() || !ids.insert(d.ns_id).second) {
      throw ApiError(ErrorCode::InvalidArgument, "catalogue entries need unique, non-empty ns_id");
    }
  }
  if (auto it = m.by_certificate.find(reg.certificate_id); it != m.by_certificate.end()) {
    auto& isl = m.islands.at(it->second);
    isl.registration.catalogue = reg.catalogue;
    isl.registration.proxy_endpoint = reg.proxy_endpoint;
    isl.connected = true;
    m.k.emit("qnsb", "island-registered", {{"island", isl.island_id}, {"re_register", true}});
    return isl.island_id;
  }
  int id = reg.island_hint;
  if (id != 0 && m.islands.count(id)) {
    throw ApiError(ErrorCode::InvalidArgument, "island id " + std::to_string(id) + " already issued");
  }
  if (id == 0) id = m.islands.empty() ? 1 : m.islands.rbegin()->first + 1;
  if (id < 1) throw ApiError(ErrorCode::InvalidArgument, "island ids start at 1");
  m.islands[id] = RegisteredIsland{id, reg, true};
  m.by_certificate[reg.certificate_id] = id;
  m.k.emit("qnsb", "island-registered", {{"island", id}, {"re_register", false}});
  return id;
}

int Orchestrator::reconnect_island(int island_id, const std::string& certificate_id) {
  auto& m = *impl_;
  auto it = m.islands.find(island_id);
  if (it == m.islands.end()) throw ApiError(ErrorCode::NotFound, "unknown island " + std::to_string(island_id));
  if (it->second.registration.certificate_id != certificate_id) {
    throw ApiError(ErrorCode::InvalidArgument, "certificate does not match island " + std::to_string(island_id));
  }
  it->second.connected = true;
  m.k.emit("qnsb", "island-reconnected", {{"island", island_id}});
  return island_id;
}

const InterIslandNS& Orchestrator::compose(const Member& a, const Member& b, bool secured,
                                           const ComposeOptions& options) {
  auto& m = *impl_;
  for (const auto* mem : {&a, &b}) {
    auto it = m.islands.find(mem->island);
    if (it == m.islands.end()) {
      throw ApiError(ErrorCode::NotFound, "island " + std::to_string(mem->island) + " is not registered");
    }
    const auto& cat = it->second.registration.catalogue;
    if (std::none_of(cat.begin(), cat.end(), [&](const NsDescriptor& d) { return d.ns_id == mem->local_ns; })) {
      throw ApiError(ErrorCode::NotFound,
                     "NS '" + mem->local_ns + "' not in the catalogue of island " + std::to_string(mem->island));
    }
    if (!m.topo.has_island(IslandId{mem->island})) {
      throw ApiError(ErrorCode::NotFound,
                     "island " + std::to_string(mem->island) + " has no port on the q-ROADM topology");
    }
  }
  if (a.island == b.island) throw ApiError(ErrorCode::InvalidArgument, "an inter-island NS needs two islands");
  if (options.ttl_s < 0.0) throw ApiError(ErrorCode::InvalidArgument, "ttl must be non-negative");
  std::string id = options.ins_id;
  if (id.empty()) {
    do {
      id = "ins-" + std::to_string(++m.ins_counter);
    } while (m.store.count(id));
  } else if (m.store.count(id)) {
    throw ApiError(ErrorCode::InvalidArgument, "iNS id '" + id + "' already exists");
  }
  InterIslandNS ns;
  ns.id = id;
  ns.members = {a, b};
  ns.secured = secured;
  ns.options = options;
  ns.options.ins_id = id;
  ns.composed_at = m.k.now();
  auto& stored = m.store.emplace(id, std::move(ns)).first->second;
  m.k.emit("nsm", "lifecycle", {{"ins", id}, {"from", nullptr}, {"to", "COMPOSED"}, {"secured", secured}});
  return stored;
}

void Orchestrator::deploy(const std::vector<std::string>& ins_ids) {
  if (ins_ids.empty()) throw ApiError(ErrorCode::InvalidArgument, "nothing to deploy");
  impl_->transition({}, ins_ids);
}

void Orchestrator::reconfigure(const std::vector<ReconfigureChange>& changes, const std::vector<std::string>& deploy_ids) {
  impl_->transition(changes, deploy_ids);
}

void Orchestrator::terminate(const std::string& ins_id) { impl_->terminate(ins_id); }

const std::map<int, RegisteredIsland>& Orchestrator::islands() const { return impl_->islands; }

const InterIslandNS& Orchestrator::ins(const std::string& id) const { return impl_->get(id); }

std::vector<std::string> Orchestrator::ins_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, ns] : impl_->store) out.push_back(id);
  return out;
}

const QRoadmState& Orchestrator::roadm_state() const { return impl_->state; }
const KeyStore& Orchestrator::keystore() const { return *impl_->keys; }
void Orchestrator::settle_keys() { impl_->keys->settle(); }
const Topology& Orchestrator::topology() const { return impl_->topo; }

nlohmann::json Orchestrator::catalogue_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [id, isl] : impl_->islands) {
    nlohmann::json cat = nlohmann::json::array();
    for (const auto& d : isl.registration.catalogue) cat.push_back({{"ns_id", d.ns_id}, {"name", d.name}, {"vnfs", d.vnfs}});
    out.push_back({{"island_id", id},
                   {"proxy_endpoint", isl.registration.proxy_endpoint},
                   {"connected", isl.connected},
                   {"catalogue", cat}});
  }
  return out;
}

nlohmann::json Orchestrator::ins_json(const std::string& id) const {
  const auto& ns = impl_->get(id);
  auto j = ns.to_json();
  nlohmann::json tel = impl_->keys->telemetry(id);
  if (ns.assignment) {
    tel["predicted_skr_bps"] = ns.assignment->predicted.skr_bps;
    tel["predicted_qber"] = ns.assignment->predicted.qber;
    tel["predicted_ber"] = ns.assignment->predicted.ber;
  }
  j["telemetry"] = tel;
  return j;
}

nlohmann::json Orchestrator::topology_json() const {
  return {{"topology", impl_->topo.to_json()}, {"state", impl_->state.to_json()}};
}

}  // namespace qsim
