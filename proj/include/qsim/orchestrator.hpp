#pragma once

// Exchange control plane: island broker (QNSB), NS manager (NSM), the
// quantum-aware controller (QIDCM) and one proxy per island, all driven by
// messages on the simulation kernel.

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsim/keystore.hpp"
#include "qsim/planner.hpp"
#include "qsim/qroadm.hpp"
#include "qsim/sim_kernel.hpp"

namespace qsim {

enum class Lifecycle {
  Composed,
  Planning,
  OpticsConfiguring,
  QkdInitializing,
  NsDeploying,
  L2Wiring,
  AwaitingKeys,
  Operational,
  Terminated,
  Failed,
};

const char* to_string(Lifecycle s);
std::optional<Lifecycle> lifecycle_from_string(std::string_view s);
/// The enumerated lifecycle edges; `secured` restricts the QKD-only states.
bool lifecycle_edge_allowed(Lifecycle from, Lifecycle to, bool secured);

struct NsDescriptor {
  std::string ns_id;
  std::string name;
  std::vector<std::string> vnfs;
};

struct IslandRegistration {
  std::vector<NsDescriptor> catalogue;
  std::string proxy_endpoint;
  std::string certificate_id;
  /// Island the proxy sits behind on the q-ROADM; 0 = next free id.
  int island_hint = 0;
};

struct RegisteredIsland {
  int island_id = 0;
  IslandRegistration registration;
  bool connected = true;
};

struct Member {
  int island = 0;
  std::string local_ns;
};

struct ComposeOptions {
  std::string ins_id;  // empty = generated
  BandwidthClass bandwidth = BandwidthClass::Standard;
  double ttl_s = 0.0;
  std::optional<Frequency> pinned_wavelength;
  bool inferred_pin = false;
};

struct InterIslandNS {
  std::string id;
  std::array<Member, 2> members;
  bool secured = false;
  ComposeOptions options;
  std::optional<Assignment> assignment;
  Lifecycle lifecycle = Lifecycle::Composed;
  std::map<int, int> vlan;
  std::string failure_cause;
  double composed_at = 0.0;

  nlohmann::json to_json() const;
};

struct ReconfigureChange {
  std::string ins_id;
  std::optional<bool> secured;
  std::optional<Frequency> pinned_wavelength;
  bool clear_pin = false;
};

struct FaultPlan {
  std::set<std::string> qkd_fail;    // iNS ids whose QKD link fails during init
  std::set<int> proxy_timeout;       // islands whose proxy never answers
  double proxy_timeout_s = 300.0;
};

struct OrchestratorConfig {
  LatencyModel latency;
  KeyStoreOptions keys;
  PlannerOptions planner;
  BerModel ber;
  FaultPlan faults;
};

/// Failure of a synchronous API call; maps onto the gateway error body.
struct ApiError : Error {
  ApiError(ErrorCode code, const std::string& message, std::string violated = "")
      : Error(code, message), violated_constraint(std::move(violated)) {}
  std::string violated_constraint;
};

class Orchestrator {
 public:
  Orchestrator(Kernel& kernel, const Topology& topology, const CalibrationTable& table,
               OrchestratorConfig config = {});
  ~Orchestrator();
  Orchestrator(const Orchestrator&) = delete;
  Orchestrator& operator=(const Orchestrator&) = delete;

  int register_island(const IslandRegistration& reg);
  /// Reconnect without a catalogue: id and catalogue preserved.
  int reconnect_island(int island_id, const std::string& certificate_id);

  const InterIslandNS& compose(const Member& a, const Member& b, bool secured, const ComposeOptions& options = {});

  /// Deploys a batch of COMPOSED services under one plan.
  void deploy(const std::vector<std::string>& ins_ids);
  /// Applies changes to OPERATIONAL services, optionally deploying COMPOSED
  /// ones under the same plan. No change at all when infeasible.
  void reconfigure(const std::vector<ReconfigureChange>& changes, const std::vector<std::string>& deploy_ids = {});
  void terminate(const std::string& ins_id);

  const std::map<int, RegisteredIsland>& islands() const;
  const InterIslandNS& ins(const std::string& id) const;
  std::vector<std::string> ins_ids() const;
  const QRoadmState& roadm_state() const;
  const KeyStore& keystore() const;
  /// Brings every key pool up to the current simulation time.
  void settle_keys();
  const Topology& topology() const;

  nlohmann::json catalogue_json() const;
  nlohmann::json ins_json(const std::string& id) const;
  nlohmann::json topology_json() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace qsim
