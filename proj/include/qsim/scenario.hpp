#pragma once

// Scenario scripts: a timed list of orchestrator calls, run against a fresh
// simulation, plus the reports derived from the resulting event log.

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsim/optical_model.hpp"
#include "qsim/orchestrator.hpp"
#include "qsim/qroadm.hpp"
#include "qsim/sim_kernel.hpp"
#include "qsim/verify.hpp"

namespace qsim {

struct ScenarioStep {
  double at = 0.0;
  std::string action;  // compose | deploy | reconfigure | terminate
  nlohmann::json args;
  std::string label;   // starts a report segment when set
  std::optional<ErrorCode> expect_error;
  int line = 0;
};

struct ScenarioIsland {
  int island = 0;
  IslandRegistration registration;
};

struct ScenarioScript {
  std::string name;
  std::string description;
  std::vector<std::pair<std::string, std::string>> config;  // applied before CLI overrides
  std::vector<ScenarioIsland> islands;
  std::vector<ScenarioStep> steps;
  nlohmann::json expected = nlohmann::json::array();
  /// Keep simulating (key accrual, rekeying) until at least this time.
  double end_s = 0.0;

  /// Validates structure, step ordering and entity references.
  static ScenarioScript parse(std::string_view text, const std::string& source_name = "<memory>");
  static ScenarioScript load(const std::filesystem::path& path);
};

/// Applies one `key=value` setting ("latency.ofs_s", "keys.rekey_interval_s",
/// "planner.single_wavelength_per_ns", "faults.qkd_fail", ...).
void apply_setting(OrchestratorConfig& config, const std::string& key, const std::string& value);
std::pair<std::string, std::string> split_setting(const std::string& text);

std::filesystem::path default_data_dir();

struct RunOptions {
  std::uint64_t seed = 1;
  std::vector<std::string> overrides;  // "key=value"
};

struct StepOutcome {
  std::size_t index = 0;
  double at = 0.0;
  std::string action;
  std::string label;
  bool ok = true;
  std::string error_code;  // empty when the call succeeded
  std::string message;
};

struct KeyLedger {
  std::uint64_t accrued = 0;
  std::uint64_t delivered = 0;
  std::uint64_t remaining = 0;
  bool conserved() const { return delivered + remaining == accrued; }
};

struct RunResult {
  EventLog log;
  std::vector<StepOutcome> steps;
  std::vector<AssertionResult> assertions;
  KeyLedger keys;
  nlohmann::json final_state = nlohmann::json::array();  // one entry per iNS

  bool ok() const;
  nlohmann::json summary() const;
};

RunResult run_scenario(const ScenarioScript& script, const Topology& topology, const CalibrationTable& table,
                       const RunOptions& options = {});

/// Drives an orchestrator through the script's islands and steps on an
/// existing kernel. Used by run_scenario and by the gateway.
class ScriptDriver {
 public:
  ScriptDriver(Kernel& kernel, Orchestrator& orchestrator) : kernel_(kernel), orch_(orchestrator) {}
  /// Registers islands now and schedules every step relative to `origin`.
  void schedule(const ScenarioScript& script, double origin);
  const std::vector<StepOutcome>& outcomes() const { return outcomes_; }

 private:
  void execute(const ScenarioStep& step, std::size_t index);

  Kernel& kernel_;
  Orchestrator& orch_;
  std::vector<StepOutcome> outcomes_;
};

// Reports derived from an event log alone.

struct PhysicalRow {
  std::string segment;
  std::string ins;
  bool inferred = false;
  int src = 0;
  int dst = 0;
  bool secured = false;
  double forward_thz = 0.0;
  double reverse_thz = 0.0;
  std::string modulation;
  double launch_power_dbm = 0.0;
  double ber = 0.0;
  double skr_bps = 0.0;
  double qber = 0.0;
  std::string path_class;  // quantum path, empty when unsecured
  int alice = 0;
  int bob = 0;
  double quantum_loss_db = 0.0;
  int n_coexisting = 0;
};

struct TimingRow {
  std::string segment;
  std::string ins;
  std::string phase;  // roadm | qkd_init | transceiver | vnf_deploy | l2_flow | total
  double start = 0.0;
  double end = 0.0;
  double duration() const { return end - start; }
};

/// State of every live iNS at the end of each segment.
std::vector<PhysicalRow> physical_report(const EventLog& log);
std::vector<TimingRow> timing_report(const EventLog& log);

void write_physical_csv(std::ostream& os, const std::vector<PhysicalRow>& rows);
void write_timing_csv(std::ostream& os, const std::vector<TimingRow>& rows);
nlohmann::json report_json(const EventLog& log);

}  // namespace qsim
