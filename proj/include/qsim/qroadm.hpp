#pragma once

// State model of the 4-degree Architecture-on-Demand q-ROADM hub: which
// quantum channels the fibre switch routes, which data lightpaths the WSSes
// pass, and what each traversal costs in dB.

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qsim/common.hpp"
#include "qsim/optical_model.hpp"

namespace qsim {

/// How an island's fibre pair lands on the node. Drop islands receive on a
/// drop port and transmit through the matching add port.
enum class IslandPort { Bypass, Drop };

struct IslandSite {
  IslandId id;
  DegreeId degree;
  double fibre_km = 5.0;
  IslandPort port = IslandPort::Bypass;
  double awg_temperature = 25.0;
};

struct LossTable {
  double quantum_bypass_db = 5.3;
  double quantum_drop_db = 5.9;
  double quantum_add_db = 1.2;
  double data_bypass_db = 23.0;
  double data_add_db = 21.5;
  double data_drop_db = 8.5;
  double coupler_95_5_quantum_db = 0.0;  // already inside the node figures above
  double fibre_loss_per_km_db = 0.25;

  void validate() const;
};

struct Topology {
  int degrees = 4;
  std::vector<IslandSite> islands;
  LossTable losses;
  AwgModel awg;
  std::vector<Frequency> grid;  // ascending
  Frequency quantum_frequency = Frequency::from_thz(193.3);
  int slots_per_channel = 4;
  double slot_ghz = 12.5;

  static Topology parse(std::string_view json_text, const std::string& source_name = "<memory>");
  static Topology load(const std::filesystem::path& path);

  const IslandSite& island(IslandId id) const;
  const IslandSite* island_at(DegreeId degree) const;
  bool has_island(IslandId id) const;
  PathClass quantum_path_class(IslandId alice, IslandId bob) const;

  nlohmann::json to_json() const;
};

struct QuantumRoute {
  DegreeId in;
  DegreeId out;
  friend auto operator<=>(const QuantumRoute&, const QuantumRoute&) = default;
};

struct Passband {
  Frequency center;
  int slots = 4;
  friend auto operator<=>(const Passband&, const Passband&) = default;
};

struct Lightpath {
  DegreeId in;
  DegreeId out;
  Passband band;
  friend auto operator<=>(const Lightpath&, const Lightpath&) = default;
};

enum class DegreeKind { Bypass, AddDrop };

/// Atomic change set. Removals are applied before additions.
struct ConfigDelta {
  std::vector<QuantumRoute> remove_quantum;
  std::vector<QuantumRoute> add_quantum;
  std::vector<Lightpath> remove_lightpaths;
  std::vector<Lightpath> add_lightpaths;

  bool empty() const {
    return remove_quantum.empty() && add_quantum.empty() && remove_lightpaths.empty() &&
           add_lightpaths.empty();
  }
  int crossconnect_changes() const { return static_cast<int>(remove_quantum.size() + add_quantum.size()); }
  int passband_changes() const { return static_cast<int>(remove_lightpaths.size() + add_lightpaths.size()); }

  nlohmann::json to_json() const;
};

/// Immutable value. Every mutation goes through apply_config or
/// reconfigure_degree, which return a new validated state.
class QRoadmState {
 public:
  QRoadmState() = default;
  explicit QRoadmState(const Topology& topology);

  const std::map<DegreeId, DegreeKind>& degrees() const { return degrees_; }
  int degree_count() const { return static_cast<int>(degrees_.size()); }
  const std::set<QuantumRoute>& quantum_routes() const { return quantum_routes_; }
  const std::set<Lightpath>& lightpaths() const { return lightpaths_; }
  Frequency reserved_quantum_frequency() const { return reserved_quantum_; }
  double slot_ghz() const { return slot_ghz_; }

  /// Port-level view of the fibre switch: ("D<in>.in", "D<out>.out").
  std::set<std::pair<std::string, std::string>> ofs_crossconnects() const;
  std::map<DegreeId, std::vector<Passband>> wss_passbands() const;
  struct AddDrop {
    std::vector<Frequency> add;
    std::vector<Frequency> drop;
  };
  std::map<DegreeId, AddDrop> drop_assignments() const;

  bool degree_in_use(DegreeId d) const;

  /// Throws the first violated invariant.
  void validate() const;

  nlohmann::json to_json() const;

  friend bool operator==(const QRoadmState&, const QRoadmState&) = default;

 private:
  friend QRoadmState apply_config(const QRoadmState&, const ConfigDelta&);
  friend QRoadmState reconfigure_degree(const QRoadmState&, bool, DegreeId, DegreeKind);

  std::map<DegreeId, DegreeKind> degrees_;
  std::set<QuantumRoute> quantum_routes_;
  std::set<Lightpath> lightpaths_;
  Frequency reserved_quantum_ = Frequency::from_thz(193.3);
  double slot_ghz_ = 12.5;
};

QRoadmState apply_config(const QRoadmState& state, const ConfigDelta& delta);

/// add == true inserts `degree` (which must be new); otherwise removes it,
/// refusing while any route still uses it.
QRoadmState reconfigure_degree(const QRoadmState& state, bool add, DegreeId degree,
                               DegreeKind kind = DegreeKind::Bypass);

bool passbands_overlap(const Passband& a, const Passband& b, double slot_ghz);

struct FibreSpan {
  IslandId island;
};
struct NodeSpan {
  DegreeId in;
  DegreeId out;
};
struct AwgSpan {
  IslandId island;
};
using Span = std::variant<FibreSpan, NodeSpan, AwgSpan>;

/// Island-to-island spans for the quantum channel, AWG included when the
/// receiver sits on a bypass port.
std::vector<Span> quantum_path(const Topology& topology, IslandId alice, IslandId bob);
std::vector<Span> data_path(const Topology& topology, IslandId src, IslandId dst);

double node_traversal_loss(const Topology& topology, DegreeId in, DegreeId out, SignalKind kind);

/// Sum of per-span losses; a sub-path's loss is the sum over its own spans,
/// so splitting a path splits its loss.
double path_loss(const QRoadmState& state, const Topology& topology, const std::vector<Span>& path,
                 SignalKind kind);

}  // namespace qsim
