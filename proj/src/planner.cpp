#include "qsim/planner.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

namespace qsim {

namespace {

struct PlanItem {
  NSRequest request;
  std::optional<Frequency> pin_forward;
  std::optional<Frequency> pin_reverse;
};

std::pair<IslandId, IslandId> orient_quantum(const Topology& topo, IslandId a, IslandId b) {
  const bool a_drop = topo.island(a).port == IslandPort::Drop;
  const bool b_drop = topo.island(b).port == IslandPort::Drop;
  if (a_drop && !b_drop) return {b, a};
  if (b_drop && !a_drop) return {a, b};
  return a < b ? std::pair{a, b} : std::pair{b, a};
}

// Fibre span that sets the coexistence power of a quantum route: the Bob-side
// downlink for bypass receivers, the Alice-side uplink when Bob sits on a drop
// port (quantum and data leave the node on separate fibres there).
struct SpanKey {
  bool downlink = true;
  DegreeId degree;
  friend auto operator<=>(const SpanKey&, const SpanKey&) = default;
};

SpanKey coexistence_span(const QuantumRoute& r, PathClass c) {
  return c == PathClass::BypassBypass ? SpanKey{true, r.out} : SpanKey{false, r.in};
}

bool on_span(const Lightpath& l, const SpanKey& s) {
  return s.downlink ? l.out == s.degree : l.in == s.degree;
}

PathClass data_class(const Topology& topo, IslandId dst) {
  return topo.island(dst).port == IslandPort::Drop ? PathClass::BypassDrop : PathClass::BypassBypass;
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

PlanResult plan_items(const std::vector<PlanItem>& items, const PlanContext& ctx, const QRoadmState& current) {
  const auto& topo = ctx.topology;
  PlanResult result;
  result.state = current;
  std::map<std::size_t, Violation> violations;
  auto violate = [&](std::size_t i, ErrorCode code, std::string what) {
    violations.try_emplace(i, Violation{items[i].request.id, code, std::move(what)});
  };

  std::vector<Assignment> work(items.size());
  std::vector<bool> placed(items.size(), false);

  std::set<std::string> ids;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& r = items[i].request;
    work[i].ns_id = r.id;
    work[i].src = r.src;
    work[i].dst = r.dst;
    work[i].secured = r.secured;
    if (!ids.insert(r.id).second) violate(i, ErrorCode::InvalidArgument, "duplicate request id " + r.id);
    if (!topo.has_island(r.src) || !topo.has_island(r.dst)) {
      violate(i, ErrorCode::NotFound, "unknown island in request " + r.id);
    } else if (r.src == r.dst) {
      violate(i, ErrorCode::InvalidArgument, "src and dst island are identical");
    }
  }

  // Occupied passbands per island fibre.
  std::map<DegreeId, std::vector<Passband>> up;
  std::map<DegreeId, std::vector<Passband>> down;
  for (const auto& l : current.lightpaths()) {
    up[l.in].push_back(l.band);
    down[l.out].push_back(l.band);
  }
  std::set<DegreeId> q_in;
  std::set<DegreeId> q_out;
  for (const auto& q : current.quantum_routes()) {
    q_in.insert(q.in);
    q_out.insert(q.out);
  }
  const Passband reserved{topo.quantum_frequency, 1};

  auto is_free = [&](Frequency f, DegreeId in, DegreeId out) {
    const Passband band{f, topo.slots_per_channel};
    if (passbands_overlap(band, reserved, topo.slot_ghz)) return false;
    for (const auto& b : up[in]) {
      if (passbands_overlap(band, b, topo.slot_ghz)) return false;
    }
    for (const auto& b : down[out]) {
      if (passbands_overlap(band, b, topo.slot_ghz)) return false;
    }
    return true;
  };

  // Pinned requests claim their wavelengths first, then first-fit in
  // ascending frequency, ordered by island pair.
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const bool pa = items[a].pin_forward || items[a].pin_reverse;
    const bool pb = items[b].pin_forward || items[b].pin_reverse;
    if (pa != pb) return pa;
    if (pa) return false;
    const auto& ra = items[a].request;
    const auto& rb = items[b].request;
    auto key = [](const NSRequest& r) { return std::pair{std::min(r.src, r.dst), std::max(r.src, r.dst)}; };
    return key(ra) < key(rb);
  });

  for (std::size_t i : order) {
    if (violations.count(i)) continue;
    const auto& item = items[i];
    const auto& r = item.request;
    const DegreeId ds = topo.island(r.src).degree;
    const DegreeId dd = topo.island(r.dst).degree;

    auto pick = [&](const std::optional<Frequency>& pin, DegreeId in, DegreeId out,
                    const std::optional<std::pair<DegreeId, DegreeId>>& also) -> std::optional<Frequency> {
      std::vector<Frequency> candidates = pin ? std::vector<Frequency>{*pin} : topo.grid;
      for (auto f : candidates) {
        if (!is_free(f, in, out)) continue;
        if (also && !is_free(f, also->first, also->second)) continue;
        return f;
      }
      return std::nullopt;
    };

    std::optional<Frequency> fwd;
    std::optional<Frequency> rev;
    if (ctx.options.single_wavelength_per_ns) {
      fwd = pick(item.pin_forward ? item.pin_forward : item.pin_reverse, ds, dd, std::pair{dd, ds});
      rev = fwd;
    } else {
      fwd = pick(item.pin_forward, ds, dd, std::nullopt);
      if (fwd) {
        up[ds].push_back({*fwd, topo.slots_per_channel});
        down[dd].push_back({*fwd, topo.slots_per_channel});
        rev = pick(item.pin_reverse, dd, ds, std::nullopt);
        up[ds].pop_back();
        down[dd].pop_back();
      }
    }
    if (!fwd || !rev) {
      std::string what = item.pin_forward || item.pin_reverse
                             ? "pinned wavelength unavailable between D" + std::to_string(ds.value) + " and D" +
                                   std::to_string(dd.value)
                             : "wavelength grid exhausted between D" + std::to_string(ds.value) + " and D" +
                                   std::to_string(dd.value);
      violate(i, ErrorCode::WavelengthCollision, what);
      continue;
    }

    std::optional<QuantumAssignment> quantum;
    if (r.secured) {
      auto [alice, bob] = orient_quantum(topo, r.src, r.dst);
      QuantumAssignment qa;
      qa.alice = alice;
      qa.bob = bob;
      qa.path_class = topo.quantum_path_class(alice, bob);
      qa.route = {topo.island(alice).degree, topo.island(bob).degree};
      if (q_out.count(qa.route.out)) {
        violate(i, ErrorCode::QuantumCollision,
                "two quantum channels cannot share output port D" + std::to_string(qa.route.out.value));
        continue;
      }
      if (q_in.count(qa.route.in)) {
        violate(i, ErrorCode::QuantumCollision,
                "two quantum channels cannot share input port D" + std::to_string(qa.route.in.value));
        continue;
      }
      q_in.insert(qa.route.in);
      q_out.insert(qa.route.out);
      quantum = qa;
    }

    auto& a = work[i];
    a.forward = *fwd;
    a.reverse = *rev;
    a.forward_path = {ds, dd, {*fwd, topo.slots_per_channel}};
    a.reverse_path = {dd, ds, {*rev, topo.slots_per_channel}};
    a.quantum = quantum;
    up[ds].push_back(a.forward_path.band);
    down[dd].push_back(a.forward_path.band);
    up[dd].push_back(a.reverse_path.band);
    down[ds].push_back(a.reverse_path.band);
    placed[i] = true;
  }

  // Quantum spans: existing routes in `current` plus the new ones.
  struct QSpan {
    SpanKey key;
    PathClass path_class;
  };
  std::vector<QSpan> spans;
  for (const auto& q : current.quantum_routes()) {
    const auto* bob = topo.island_at(q.out);
    const PathClass c = bob != nullptr && bob->port == IslandPort::Drop ? PathClass::BypassDrop : PathClass::BypassBypass;
    spans.push_back({coexistence_span(q, c), c});
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (placed[i] && work[i].quantum) {
      spans.push_back({coexistence_span(work[i].quantum->route, work[i].quantum->path_class),
                       work[i].quantum->path_class});
    }
  }
  auto channels_on = [&](const SpanKey& key) {
    int n = 0;
    for (const auto& l : current.lightpaths()) n += on_span(l, key) ? 1 : 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (!placed[i]) continue;
      n += on_span(work[i].forward_path, key) ? 1 : 0;
      n += on_span(work[i].reverse_path, key) ? 1 : 0;
    }
    return n;
  };
  auto touches = [&](std::size_t i, const SpanKey& key) {
    return on_span(work[i].forward_path, key) || on_span(work[i].reverse_path, key);
  };

  UnionFind uf(items.size());
  for (const auto& s : spans) {
    std::optional<std::size_t> first;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (!placed[i] || !touches(i, s.key)) continue;
      if (first) uf.unite(*first, i);
      else first = i;
    }
  }

  std::map<std::size_t, std::vector<std::size_t>> components;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (placed[i]) components[uf.find(i)].push_back(i);
  }
  for (const auto& [root, members] : components) {
    std::vector<CoexistenceConstraint> constraints;
    for (const auto& s : spans) {
      const bool hit = std::any_of(members.begin(), members.end(), [&](std::size_t i) { return touches(i, s.key); });
      if (hit) constraints.push_back({channels_on(s.key), s.path_class});
    }
    PathClass dclass = PathClass::BypassDrop;
    for (std::size_t i : members) {
      if (data_class(topo, work[i].dst) == PathClass::BypassBypass ||
          data_class(topo, work[i].src) == PathClass::BypassBypass) {
        dclass = PathClass::BypassBypass;
      }
    }
    auto choice = select_modulation(ctx.options.launch_budget, constraints, dclass, ctx.table, ctx.ber, ctx.options);
    if (!choice) {
      std::ostringstream os;
      os << "no modulation satisfies SKR > 0 and pre-FEC BER < threshold for";
      for (const auto& c : constraints) os << ' ' << c.n_channels << "ch/" << to_string(c.path_class);
      for (std::size_t i : members) violate(i, ErrorCode::Infeasible, os.str());
      continue;
    }
    for (std::size_t i : members) {
      work[i].modulation = choice->modulation;
      work[i].launch_power_dbm = choice->launch_power_dbm;
    }
  }

  if (!violations.empty()) {
    for (auto& [i, v] : violations) result.violations.push_back(std::move(v));
    return result;
  }

  for (const auto& a : work) {
    result.delta.add_lightpaths.push_back(a.forward_path);
    result.delta.add_lightpaths.push_back(a.reverse_path);
    if (a.quantum) result.delta.add_quantum.push_back(a.quantum->route);
  }
  result.state = apply_config(current, result.delta);

  for (std::size_t i = 0; i < work.size(); ++i) {
    auto& a = work[i];
    OpticalChannel ch{a.forward, a.modulation, 25.0, a.launch_power_dbm};
    const double ber_fwd = estimate_prefec_ber(ch, data_class(topo, a.dst), a.launch_power_dbm, ctx.ber);
    const double ber_rev = estimate_prefec_ber(ch, data_class(topo, a.src), a.launch_power_dbm, ctx.ber);
    a.predicted.ber = std::max(ber_fwd, ber_rev);
    if (a.quantum) {
      auto& q = *a.quantum;
      q.path_loss_db = path_loss(result.state, topo, quantum_path(topo, q.alice, q.bob), SignalKind::Quantum);
      q.n_coexisting = channels_on(coexistence_span(q.route, q.path_class));
      auto sq = estimate_skr_qber(q.path_class, q.n_coexisting, a.modulation, a.launch_power_dbm, ctx.table);
      a.predicted.skr_bps = sq.skr_bps;
      a.predicted.qber = sq.qber;
      if (!(sq.skr_bps > 0.0)) violate(i, ErrorCode::Infeasible, "predicted SKR is zero");
    }
    if (!(a.predicted.ber < ctx.ber.fec_threshold)) {
      violate(i, ErrorCode::Infeasible, "predicted pre-FEC BER above threshold");
    }
  }
  if (!violations.empty()) {
    for (auto& [i, v] : violations) result.violations.push_back(std::move(v));
    result.delta = {};
    result.state = current;
    return result;
  }
  result.assignments = std::move(work);
  return result;
}

}  // namespace

bool Assignment::same_transceiver_config(const Assignment& other) const {
  return forward == other.forward && reverse == other.reverse && modulation == other.modulation &&
         launch_power_dbm == other.launch_power_dbm;
}

nlohmann::json Assignment::to_json() const {
  nlohmann::json j{{"ns_id", ns_id},
                   {"src", src.value},
                   {"dst", dst.value},
                   {"secured", secured},
                   {"wavelength_pair_thz", {forward.thz(), reverse.thz()}},
                   {"modulation", to_string(modulation)},
                   {"launch_power_dbm", launch_power_dbm},
                   {"route", {{"in", forward_path.in.value}, {"out", forward_path.out.value}}},
                   {"predicted", {{"skr_bps", predicted.skr_bps}, {"qber", predicted.qber}, {"ber", predicted.ber}}}};
  if (quantum) {
    j["quantum_route"] = {{"alice", quantum->alice.value},
                          {"bob", quantum->bob.value},
                          {"path_class", to_string(quantum->path_class)},
                          {"in", quantum->route.in.value},
                          {"out", quantum->route.out.value},
                          {"path_loss_db", quantum->path_loss_db},
                          {"n_coexisting", quantum->n_coexisting}};
  } else {
    j["quantum_route"] = nullptr;
  }
  return j;
}

std::optional<ModulationChoice> select_modulation(const PowerWindow& budget,
                                                  std::span<const CoexistenceConstraint> coexistence,
                                                  PathClass data_path_class, const CalibrationTable& table,
                                                  const BerModel& ber, const PlannerOptions& options) {
  if (budget.min_dbm > budget.max_dbm) return std::nullopt;
  for (Modulation m : kModulationsDensestFirst) {
    if (coexistence.empty()) {
      const double p = std::clamp(options.nominal_launch_power_dbm, budget.min_dbm, budget.max_dbm);
      OpticalChannel ch;
      ch.modulation = m;
      if (estimate_prefec_ber(ch, data_path_class, p, ber) < ber.fec_threshold) return ModulationChoice{m, p};
      continue;
    }
    std::optional<PowerWindow> w = budget;
    for (const auto& c : coexistence) {
      auto cw = coexistence_window(m, c.n_channels, c.path_class, table, ber);
      if (!cw) {
        w.reset();
        break;
      }
      w = intersect(*w, *cw);
      if (!w) break;
    }
    if (!w) continue;
    const double p = w->center();
    OpticalChannel ch;
    ch.modulation = m;
    if (estimate_prefec_ber(ch, data_path_class, p, ber) < ber.fec_threshold) return ModulationChoice{m, p};
  }
  return std::nullopt;
}

PlanResult plan(std::span<const NSRequest> requests, const PlanContext& ctx, const QRoadmState& current) {
  std::vector<PlanItem> items;
  items.reserve(requests.size());
  for (const auto& r : requests) items.push_back({r, r.pinned_wavelength, r.pinned_wavelength});
  return plan_items(items, ctx, current);
}

ConfigDelta delta_between(std::span<const Assignment> from, std::span<const Assignment> to) {
  std::set<Lightpath> lp_from;
  std::set<Lightpath> lp_to;
  std::set<QuantumRoute> q_from;
  std::set<QuantumRoute> q_to;
  for (const auto& a : from) {
    lp_from.insert(a.forward_path);
    lp_from.insert(a.reverse_path);
    if (a.quantum) q_from.insert(a.quantum->route);
  }
  for (const auto& a : to) {
    lp_to.insert(a.forward_path);
    lp_to.insert(a.reverse_path);
    if (a.quantum) q_to.insert(a.quantum->route);
  }
  ConfigDelta d;
  std::set_difference(q_from.begin(), q_from.end(), q_to.begin(), q_to.end(), std::back_inserter(d.remove_quantum));
  std::set_difference(q_to.begin(), q_to.end(), q_from.begin(), q_from.end(), std::back_inserter(d.add_quantum));
  std::set_difference(lp_from.begin(), lp_from.end(), lp_to.begin(), lp_to.end(),
                      std::back_inserter(d.remove_lightpaths));
  std::set_difference(lp_to.begin(), lp_to.end(), lp_from.begin(), lp_from.end(), std::back_inserter(d.add_lightpaths));
  return d;
}

ReplanResult replan_delta(std::span<const Assignment> old, std::span<const NSRequest> new_requests,
                          const PlanContext& ctx) {
  std::vector<PlanItem> items;
  for (const auto& r : new_requests) {
    PlanItem item{r, r.pinned_wavelength, r.pinned_wavelength};
    if (!r.pinned_wavelength) {
      for (const auto& a : old) {
        if (a.ns_id == r.id && a.src == r.src && a.dst == r.dst) {
          item.pin_forward = a.forward;
          item.pin_reverse = a.reverse;
        }
      }
    }
    items.push_back(std::move(item));
  }
  ReplanResult out;
  const QRoadmState empty(ctx.topology);
  out.plan = plan_items(items, ctx, empty);
  if (!out.plan.feasible()) {
    out.plan.state = apply_config(empty, delta_between({}, old));
    return out;
  }
  out.plan.delta = delta_between(old, out.plan.assignments);
  for (const auto& n : out.plan.assignments) {
    for (const auto& o : old) {
      if (o.ns_id == n.ns_id && !o.same_transceiver_config(n)) out.touched.insert(n.ns_id);
    }
  }
  return out;
}

}  // namespace qsim
