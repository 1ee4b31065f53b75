#pragma once

// Quantum-aware routing, wavelength and modulation assignment for
// inter-island network service requests over the single q-ROADM hub.

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsim/common.hpp"
#include "qsim/optical_model.hpp"
#include "qsim/qroadm.hpp"

namespace qsim {

enum class BandwidthClass { Standard, High };

struct NSRequest {
  std::string id;
  IslandId src;
  IslandId dst;
  bool secured = false;
  BandwidthClass bandwidth = BandwidthClass::Standard;
  double ttl_s = 0.0;  // 0 = no expiry
  double start_time_s = 0.0;
  std::optional<Frequency> pinned_wavelength;  // both directions
};

struct Prediction {
  double skr_bps = 0.0;
  double qber = 0.0;
  double ber = 0.0;
};

struct QuantumAssignment {
  IslandId alice;
  IslandId bob;
  PathClass path_class = PathClass::BypassBypass;
  QuantumRoute route;
  double path_loss_db = 0.0;
  int n_coexisting = 0;
};

struct Assignment {
  std::string ns_id;
  IslandId src;
  IslandId dst;
  bool secured = false;
  Frequency forward;  // src -> dst
  Frequency reverse;  // dst -> src
  Modulation modulation = Modulation::PmQpsk;
  double launch_power_dbm = 0.0;
  Lightpath forward_path;
  Lightpath reverse_path;
  std::optional<QuantumAssignment> quantum;
  Prediction predicted;

  /// Same optical operating point (what a transceiver is configured with).
  bool same_transceiver_config(const Assignment& other) const;

  nlohmann::json to_json() const;
};

struct Violation {
  std::string ns_id;
  ErrorCode code = ErrorCode::Infeasible;
  std::string constraint;
};

struct PlannerOptions {
  bool single_wavelength_per_ns = false;
  double nominal_launch_power_dbm = -15.0;
  PowerWindow launch_budget{-35.0, 5.0};
};

struct PlanContext {
  const Topology& topology;
  const CalibrationTable& table;
  BerModel ber;
  PlannerOptions options;
};

struct PlanResult {
  std::vector<Assignment> assignments;  // request order
  std::vector<Violation> violations;    // first violation per request
  ConfigDelta delta;                    // from the input state
  QRoadmState state;                    // input state with delta applied

  bool feasible() const { return violations.empty(); }
};

/// All-or-nothing: when any request is infeasible the assignment list is
/// empty and the delta is not applied.
PlanResult plan(std::span<const NSRequest> requests, const PlanContext& ctx, const QRoadmState& current);

struct CoexistenceConstraint {
  int n_channels = 1;
  PathClass path_class = PathClass::BypassBypass;
};

struct ModulationChoice {
  Modulation modulation = Modulation::PmQpsk;
  double launch_power_dbm = 0.0;
};

/// Densest modulation whose coexistence windows (or, with no coexistence,
/// BER threshold at the nominal power) are satisfiable inside `budget`.
/// Coexisting channels are placed at the centre of the feasible interval.
std::optional<ModulationChoice> select_modulation(const PowerWindow& budget,
                                                  std::span<const CoexistenceConstraint> coexistence,
                                                  PathClass data_path_class, const CalibrationTable& table,
                                                  const BerModel& ber, const PlannerOptions& options);

struct ReplanResult {
  PlanResult plan;                 // delta is relative to the old assignments
  std::set<std::string> touched;   // surviving NSes whose transceivers change
};

/// Minimal-change replanning: surviving NSes keep their wavelengths unless
/// the new request pins a different one.
ReplanResult replan_delta(std::span<const Assignment> old, std::span<const NSRequest> new_requests,
                          const PlanContext& ctx);

/// Lightpaths and quantum routes implied by a set of assignments.
ConfigDelta delta_between(std::span<const Assignment> from, std::span<const Assignment> to);

}  // namespace qsim
