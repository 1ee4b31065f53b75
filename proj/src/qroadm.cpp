#include "qsim/qroadm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json_source.hpp"

namespace qsim {

namespace {

std::string degree_name(DegreeId d) { return "D" + std::to_string(d.value); }

std::string freq_name(Frequency f) {
  std::ostringstream os;
  os.precision(2);
  os << std::fixed << f.thz() << " THz";
  return os.str();
}

IslandPort port_from_string(const std::string& s, const std::string& where) {
  if (s == "bypass") return IslandPort::Bypass;
  if (s == "drop") return IslandPort::Drop;
  fail(ErrorCode::SchemaError, where + ": unknown island port '" + s + "' (expected bypass|drop)");
}

}  // namespace

void LossTable::validate() const {
  const double all[] = {quantum_bypass_db, quantum_drop_db, quantum_add_db, data_bypass_db,
                        data_add_db,       data_drop_db,    coupler_95_5_quantum_db, fibre_loss_per_km_db};
  for (double v : all) {
    if (!(v >= 0.0)) fail(ErrorCode::SchemaError, "loss table entries must be >= 0");
  }
  const double worst_quantum = std::max({quantum_bypass_db, quantum_drop_db, quantum_add_db});
  if (!(worst_quantum < std::min(data_bypass_db, data_add_db))) {
    fail(ErrorCode::SchemaError, "quantum losses must stay below data bypass/add losses");
  }
}

Topology Topology::parse(std::string_view json_text, const std::string& source_name) {
  auto doc = detail::parse_json_or_throw(json_text, source_name);
  detail::ObjectLines lines(json_text);
  if (!doc.is_object()) fail(ErrorCode::SchemaError, source_name + ":1: topology must be an object");
  Topology t;
  t.grid.clear();
  try {
    t.degrees = doc.value("degrees", 4);
    std::size_t ordinal = 1;
    for (const auto& js : doc.at("islands")) {
      const std::string where = source_name + ":" + std::to_string(lines.line_of(ordinal++));
      IslandSite s;
      s.id = IslandId{js.at("id").get<int>()};
      s.degree = DegreeId{js.value("degree", s.id.value)};
      s.fibre_km = js.at("fibre_km").get<double>();
      s.port = port_from_string(js.at("port").get<std::string>(), where);
      s.awg_temperature = js.value("awg_temperature", t.awg.optimal_temperature);
      if (s.degree.value < 1 || s.degree.value > t.degrees) {
        fail(ErrorCode::SchemaError, where + ": island degree outside 1.." + std::to_string(t.degrees));
      }
      if (s.fibre_km < 0) fail(ErrorCode::SchemaError, where + ": negative fibre_km");
      for (const auto& other : t.islands) {
        if (other.id == s.id || other.degree == s.degree) {
          fail(ErrorCode::SchemaError, where + ": duplicate island id or degree");
        }
      }
      t.islands.push_back(s);
    }
    if (auto it = doc.find("loss_table"); it != doc.end()) {
      const auto& lt = *it;
      t.losses.quantum_bypass_db = lt.value("quantum_bypass", t.losses.quantum_bypass_db);
      t.losses.quantum_drop_db = lt.value("quantum_drop", t.losses.quantum_drop_db);
      t.losses.quantum_add_db = lt.value("quantum_add", t.losses.quantum_add_db);
      t.losses.data_bypass_db = lt.value("data_bypass", t.losses.data_bypass_db);
      t.losses.data_add_db = lt.value("data_add", t.losses.data_add_db);
      t.losses.data_drop_db = lt.value("data_drop", t.losses.data_drop_db);
      t.losses.coupler_95_5_quantum_db = lt.value("coupler_95_5_quantum", t.losses.coupler_95_5_quantum_db);
      t.losses.fibre_loss_per_km_db = lt.value("fibre_loss_per_km", t.losses.fibre_loss_per_km_db);
    }
    if (auto it = doc.find("awg"); it != doc.end()) {
      t.awg.center_frequency_thz = it->value("center_frequency_thz", t.awg.center_frequency_thz);
      t.awg.optimal_temperature = it->value("optimal_temperature", t.awg.optimal_temperature);
      t.awg.insertion_loss_at_optimum_db = it->value("insertion_loss_at_optimum", t.awg.insertion_loss_at_optimum_db);
      t.awg.detuning_coefficient_db = it->value("detuning_coefficient", t.awg.detuning_coefficient_db);
    }
    if (auto it = doc.find("grid_thz"); it != doc.end()) {
      for (const auto& f : *it) t.grid.push_back(Frequency::from_thz(f.get<double>()));
    }
    if (auto it = doc.find("quantum_frequency_thz"); it != doc.end()) {
      t.quantum_frequency = Frequency::from_thz(it->get<double>());
    }
    t.slots_per_channel = doc.value("slots_per_channel", t.slots_per_channel);
    t.slot_ghz = doc.value("slot_ghz", t.slot_ghz);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SchemaError, source_name + ": " + e.what());
  }
  if (t.grid.empty()) {
    for (double f : {195.00, 195.10, 195.20, 195.30}) t.grid.push_back(Frequency::from_thz(f));
  }
  std::sort(t.grid.begin(), t.grid.end());
  t.losses.validate();
  return t;
}

Topology Topology::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::NotFound, "cannot open topology " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.filename().string());
}

const IslandSite& Topology::island(IslandId id) const {
  for (const auto& s : islands) {
    if (s.id == id) return s;
  }
  fail(ErrorCode::NotFound, "unknown island " + std::to_string(id.value));
}

const IslandSite* Topology::island_at(DegreeId degree) const {
  for (const auto& s : islands) {
    if (s.degree == degree) return &s;
  }
  return nullptr;
}

bool Topology::has_island(IslandId id) const {
  return std::any_of(islands.begin(), islands.end(), [&](const IslandSite& s) { return s.id == id; });
}

PathClass Topology::quantum_path_class(IslandId, IslandId bob) const {
  return island(bob).port == IslandPort::Drop ? PathClass::BypassDrop : PathClass::BypassBypass;
}

nlohmann::json Topology::to_json() const {
  nlohmann::json j;
  j["degrees"] = degrees;
  j["islands"] = nlohmann::json::array();
  for (const auto& s : islands) {
    j["islands"].push_back({{"id", s.id.value},
                            {"degree", s.degree.value},
                            {"fibre_km", s.fibre_km},
                            {"port", s.port == IslandPort::Bypass ? "bypass" : "drop"},
                            {"awg_temperature", s.awg_temperature}});
  }
  j["loss_table"] = {{"quantum_bypass", losses.quantum_bypass_db},
                     {"quantum_drop", losses.quantum_drop_db},
                     {"quantum_add", losses.quantum_add_db},
                     {"data_bypass", losses.data_bypass_db},
                     {"data_add", losses.data_add_db},
                     {"data_drop", losses.data_drop_db},
                     {"coupler_95_5_quantum", losses.coupler_95_5_quantum_db},
                     {"fibre_loss_per_km", losses.fibre_loss_per_km_db}};
  j["grid_thz"] = nlohmann::json::array();
  for (auto f : grid) j["grid_thz"].push_back(f.thz());
  j["quantum_frequency_thz"] = quantum_frequency.thz();
  return j;
}

nlohmann::json ConfigDelta::to_json() const {
  auto routes = [](const std::vector<QuantumRoute>& v) {
    auto a = nlohmann::json::array();
    for (const auto& r : v) a.push_back({r.in.value, r.out.value});
    return a;
  };
  auto paths = [](const std::vector<Lightpath>& v) {
    auto a = nlohmann::json::array();
    for (const auto& l : v) {
      a.push_back({{"in", l.in.value}, {"out", l.out.value}, {"thz", l.band.center.thz()}, {"slots", l.band.slots}});
    }
    return a;
  };
  return {{"remove_quantum", routes(remove_quantum)},
          {"add_quantum", routes(add_quantum)},
          {"remove_lightpaths", paths(remove_lightpaths)},
          {"add_lightpaths", paths(add_lightpaths)}};
}

QRoadmState::QRoadmState(const Topology& topology)
    : reserved_quantum_(topology.quantum_frequency), slot_ghz_(topology.slot_ghz) {
  for (int d = 1; d <= topology.degrees; ++d) {
    const auto* site = topology.island_at(DegreeId{d});
    degrees_[DegreeId{d}] =
        site != nullptr && site->port == IslandPort::Drop ? DegreeKind::AddDrop : DegreeKind::Bypass;
  }
}

std::set<std::pair<std::string, std::string>> QRoadmState::ofs_crossconnects() const {
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& r : quantum_routes_) {
    out.emplace(degree_name(r.in) + ".in", degree_name(r.out) + ".out");
  }
  return out;
}

std::map<DegreeId, std::vector<Passband>> QRoadmState::wss_passbands() const {
  std::map<DegreeId, std::vector<Passband>> out;
  for (const auto& [d, kind] : degrees_) out[d];
  for (const auto& l : lightpaths_) out[l.out].push_back(l.band);
  return out;
}

std::map<DegreeId, QRoadmState::AddDrop> QRoadmState::drop_assignments() const {
  std::map<DegreeId, AddDrop> out;
  for (const auto& [d, kind] : degrees_) {
    if (kind == DegreeKind::AddDrop) out[d];
  }
  for (const auto& l : lightpaths_) {
    if (auto it = out.find(l.in); it != out.end()) it->second.add.push_back(l.band.center);
    if (auto it = out.find(l.out); it != out.end()) it->second.drop.push_back(l.band.center);
  }
  return out;
}

bool QRoadmState::degree_in_use(DegreeId d) const {
  for (const auto& r : quantum_routes_) {
    if (r.in == d || r.out == d) return true;
  }
  for (const auto& l : lightpaths_) {
    if (l.in == d || l.out == d) return true;
  }
  return false;
}

bool passbands_overlap(const Passband& a, const Passband& b, double slot_ghz) {
  const double half_widths_mhz = 0.5 * (a.slots + b.slots) * slot_ghz * 1000.0;
  return std::abs(static_cast<double>(a.center.mhz - b.center.mhz)) < half_widths_mhz;
}

void QRoadmState::validate() const {
  auto known = [&](DegreeId d) { return degrees_.count(d) != 0; };
  std::set<DegreeId> q_in;
  std::set<DegreeId> q_out;
  for (const auto& r : quantum_routes_) {
    if (!known(r.in) || !known(r.out)) {
      fail(ErrorCode::UnknownPort, "quantum route references unknown degree " + degree_name(known(r.in) ? r.out : r.in));
    }
    if (r.in == r.out) fail(ErrorCode::InvalidArgument, "quantum route loops back to " + degree_name(r.in));
    if (!q_out.insert(r.out).second) {
      fail(ErrorCode::QuantumCollision, "two quantum channels routed to output port " + degree_name(r.out) + ".out");
    }
    if (!q_in.insert(r.in).second) {
      fail(ErrorCode::QuantumCollision, "two quantum channels share input port " + degree_name(r.in) + ".in");
    }
  }
  const Passband reserved{reserved_quantum_, 1};
  std::vector<Lightpath> seen;
  for (const auto& l : lightpaths_) {
    if (!known(l.in) || !known(l.out)) {
      fail(ErrorCode::UnknownPort, "lightpath references unknown degree " + degree_name(known(l.in) ? l.out : l.in));
    }
    if (l.in == l.out) fail(ErrorCode::InvalidArgument, "lightpath loops back to " + degree_name(l.in));
    if (l.band.slots < 1) fail(ErrorCode::InvalidArgument, "passband needs at least one slot");
    if (passbands_overlap(l.band, reserved, slot_ghz_)) {
      fail(ErrorCode::WavelengthCollision, freq_name(l.band.center) + " overlaps the reserved quantum wavelength");
    }
    for (const auto& o : seen) {
      if (!passbands_overlap(l.band, o.band, slot_ghz_)) continue;
      if (o.out == l.out) {
        fail(ErrorCode::WavelengthCollision,
             freq_name(l.band.center) + " collides on output port " + degree_name(l.out) + ".out");
      }
      if (o.in == l.in) {
        fail(ErrorCode::WavelengthCollision,
             freq_name(l.band.center) + " collides on input port " + degree_name(l.in) + ".in");
      }
    }
    seen.push_back(l);
  }
}

nlohmann::json QRoadmState::to_json() const {
  nlohmann::json j;
  j["degrees"] = nlohmann::json::array();
  for (const auto& [d, kind] : degrees_) {
    j["degrees"].push_back({{"id", d.value}, {"kind", kind == DegreeKind::Bypass ? "bypass" : "add_drop"}});
  }
  j["ofs_crossconnects"] = nlohmann::json::array();
  for (const auto& [in, out] : ofs_crossconnects()) j["ofs_crossconnects"].push_back({in, out});
  j["quantum_routes"] = nlohmann::json::array();
  for (const auto& r : quantum_routes_) j["quantum_routes"].push_back({r.in.value, r.out.value});
  j["wss_passbands"] = nlohmann::json::object();
  for (const auto& [d, bands] : wss_passbands()) {
    auto arr = nlohmann::json::array();
    for (const auto& b : bands) {
      arr.push_back({{"center_thz", b.center.thz()}, {"width_ghz", b.slots * slot_ghz_}});
    }
    j["wss_passbands"][degree_name(d)] = arr;
  }
  j["drop_assignments"] = nlohmann::json::object();
  for (const auto& [d, ad] : drop_assignments()) {
    auto add = nlohmann::json::array();
    auto drop = nlohmann::json::array();
    for (auto f : ad.add) add.push_back(f.thz());
    for (auto f : ad.drop) drop.push_back(f.thz());
    j["drop_assignments"][degree_name(d)] = {{"add", add}, {"drop", drop}};
  }
  j["reserved_quantum_thz"] = reserved_quantum_.thz();
  return j;
}

QRoadmState apply_config(const QRoadmState& state, const ConfigDelta& delta) {
  QRoadmState next = state;
  for (const auto& r : delta.remove_quantum) {
    if (next.quantum_routes_.erase(r) == 0) {
      fail(ErrorCode::InvalidArgument,
           "no quantum route " + degree_name(r.in) + "->" + degree_name(r.out) + " to remove");
    }
  }
  for (const auto& l : delta.remove_lightpaths) {
    if (next.lightpaths_.erase(l) == 0) {
      fail(ErrorCode::InvalidArgument, "no lightpath " + degree_name(l.in) + "->" + degree_name(l.out) + " at " +
                                           freq_name(l.band.center) + " to remove");
    }
  }
  for (const auto& r : delta.add_quantum) {
    if (!next.quantum_routes_.insert(r).second) {
      fail(ErrorCode::QuantumCollision, "quantum route " + degree_name(r.in) + "->" + degree_name(r.out) + " already present");
    }
  }
  for (const auto& l : delta.add_lightpaths) {
    if (!next.lightpaths_.insert(l).second) {
      fail(ErrorCode::WavelengthCollision, "duplicate lightpath at " + freq_name(l.band.center));
    }
  }
  next.validate();
  return next;
}

QRoadmState reconfigure_degree(const QRoadmState& state, bool add, DegreeId degree, DegreeKind kind) {
  QRoadmState next = state;
  if (add) {
    if (degree.value < 1 || next.degrees_.count(degree) != 0) {
      fail(ErrorCode::InvalidArgument, "degree " + degree_name(degree) + " already exists or is invalid");
    }
    next.degrees_[degree] = kind;
    return next;
  }
  if (next.degrees_.count(degree) == 0) {
    fail(ErrorCode::UnknownPort, "unknown degree " + degree_name(degree));
  }
  if (state.degree_in_use(degree)) {
    fail(ErrorCode::DegreeInUse, "degree " + degree_name(degree) + " carries active routes");
  }
  next.degrees_.erase(degree);
  return next;
}

std::vector<Span> quantum_path(const Topology& topology, IslandId alice, IslandId bob) {
  const auto& a = topology.island(alice);
  const auto& b = topology.island(bob);
  std::vector<Span> path{FibreSpan{alice}, NodeSpan{a.degree, b.degree}, FibreSpan{bob}};
  if (b.port == IslandPort::Bypass) path.emplace_back(AwgSpan{bob});
  return path;
}

std::vector<Span> data_path(const Topology& topology, IslandId src, IslandId dst) {
  return {FibreSpan{src}, NodeSpan{topology.island(src).degree, topology.island(dst).degree}, FibreSpan{dst}};
}

double node_traversal_loss(const Topology& topology, DegreeId in, DegreeId out, SignalKind kind) {
  const auto* src = topology.island_at(in);
  const auto* dst = topology.island_at(out);
  const bool from_add = src != nullptr && src->port == IslandPort::Drop;
  const bool to_drop = dst != nullptr && dst->port == IslandPort::Drop;
  const auto& lt = topology.losses;
  if (kind == SignalKind::Quantum) {
    if (from_add) return lt.quantum_add_db;
    if (to_drop) return lt.quantum_drop_db;
    return lt.quantum_bypass_db + lt.coupler_95_5_quantum_db;
  }
  if (from_add) return lt.data_add_db;
  if (to_drop) return lt.data_drop_db;
  return lt.data_bypass_db;
}

double path_loss(const QRoadmState& state, const Topology& topology, const std::vector<Span>& path,
                 SignalKind kind) {
  double total = 0.0;
  const Span* prev = nullptr;
  for (const auto& span : path) {
    if (const auto* f = std::get_if<FibreSpan>(&span)) {
      const auto& site = topology.island(f->island);
      if (prev != nullptr) {
        const auto* n = std::get_if<NodeSpan>(prev);
        if (n == nullptr || n->out != site.degree) {
          fail(ErrorCode::DisconnectedPath, "fibre of island " + std::to_string(f->island.value) +
                                                " does not follow its node output");
        }
      }
      total += site.fibre_km * topology.losses.fibre_loss_per_km_db;
    } else if (const auto* n = std::get_if<NodeSpan>(&span)) {
      if (state.degrees().count(n->in) == 0 || state.degrees().count(n->out) == 0) {
        fail(ErrorCode::UnknownPort, "node traversal on unknown degree");
      }
      if (prev != nullptr) {
        const auto* f = std::get_if<FibreSpan>(prev);
        if (f == nullptr || topology.island(f->island).degree != n->in) {
          fail(ErrorCode::DisconnectedPath, "node input " + degree_name(n->in) + " not fed by preceding fibre");
        }
      }
      bool connected = false;
      if (kind == SignalKind::Quantum) {
        connected = state.quantum_routes().count(QuantumRoute{n->in, n->out}) != 0;
      } else {
        connected = std::any_of(state.lightpaths().begin(), state.lightpaths().end(),
                                [&](const Lightpath& l) { return l.in == n->in && l.out == n->out; });
      }
      if (!connected) {
        fail(ErrorCode::DisconnectedPath,
             "no " + std::string(kind == SignalKind::Quantum ? "quantum route" : "lightpath") + " " +
                 degree_name(n->in) + "->" + degree_name(n->out) + " in current state");
      }
      total += node_traversal_loss(topology, n->in, n->out, kind);
    } else {
      const auto& a = std::get<AwgSpan>(span);
      const auto& site = topology.island(a.island);
      const auto* f = prev != nullptr ? std::get_if<FibreSpan>(prev) : nullptr;
      if (prev != nullptr && (f == nullptr || f->island != a.island)) {
        fail(ErrorCode::DisconnectedPath, "AWG must follow the receiving island's fibre");
      }
      if (site.port != IslandPort::Bypass) {
        fail(ErrorCode::DisconnectedPath, "island " + std::to_string(a.island.value) + " has no AWG on a drop port");
      }
      total += awg_quantum_loss(site.awg_temperature, topology.awg);
    }
    prev = &span;
  }
  return total;
}

}  // namespace qsim
