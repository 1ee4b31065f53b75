#pragma once

// Discrete-event clock, event log and the device latency model.

#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsim/common.hpp"

namespace qsim {

using Payload = nlohmann::ordered_json;

struct SimEvent {
  double time = 0.0;
  std::uint64_t seq = 0;
  std::string source;
  std::string kind;
  Payload payload = Payload::object();

  /// Payload field as text ("" when absent); numbers print like the JSON.
  std::string field(const std::string& key) const;

  Payload to_json() const;
  static SimEvent from_json(const nlohmann::json& j);
};

class EventLog {
 public:
  const SimEvent& append(double time, std::string source, std::string kind, Payload payload);

  const std::vector<SimEvent>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

  /// Events with seq >= since.
  std::vector<SimEvent> since(std::uint64_t seq) const;
  std::vector<SimEvent> until(double time) const;

  void write_jsonl(std::ostream& os) const;
  /// time,seq,source,kind,payload (payload as compact JSON, CSV-quoted).
  void write_csv(std::ostream& os) const;
  std::string to_jsonl() const;

  static EventLog read_jsonl(std::istream& is, const std::string& source_name = "<log>");

 private:
  std::vector<SimEvent> events_;
};

std::string format_time(double t);
std::string csv_quote(const std::string& s);

/// Per-agent generators derived from one run seed. A stream depends only on
/// (seed, agent id), so adding agents leaves other streams untouched.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& stream(const std::string& agent);
  /// Uniform in [lo, hi], 53-bit resolution, platform independent.
  double uniform(const std::string& agent, double lo, double hi);

 private:
  std::uint64_t seed_;
  std::map<std::string, std::mt19937_64> streams_;
};

std::uint64_t fnv1a64(const std::string& s);

using EventId = std::uint64_t;

class Kernel {
 public:
  using Action = std::function<void()>;

  explicit Kernel(std::uint64_t seed = 0) : rng_(seed) {}
  Kernel(const Kernel&) = delete;
  Kernel& operator=(const Kernel&) = delete;

  double now() const { return now_; }

  /// Background events (telemetry, rekey timers) never keep a run alive.
  EventId schedule(double delay, Action action, bool background = false);
  EventId schedule_at(double time, Action action, bool background = false);
  bool cancel(EventId id);
  bool pending(EventId id) const { return live_.count(id) != 0; }

  /// Fires every event with time <= t, then advances the clock to t.
  void run_until(double t);
  /// Fires events until no foreground event is left.
  void run();
  /// Fires the next event; false when the queue is empty.
  bool step();
  std::optional<double> next_time() const;
  bool has_foreground() const { return foreground_ > 0; }

  const SimEvent& emit(const std::string& source, const std::string& kind, Payload payload = Payload::object());

  EventLog& log() { return log_; }
  const EventLog& log() const { return log_; }
  RngStreams& rng() { return rng_; }

  using Listener = std::function<void(const SimEvent&)>;
  void on_emit(Listener l) { listeners_.push_back(std::move(l)); }

 private:
  struct Entry {
    double time;
    std::uint64_t order;
    EventId id;
    bool operator>(const Entry& o) const { return time != o.time ? time > o.time : order > o.order; }
  };
  struct Scheduled {
    Action action;
    bool background;
  };

  void fire(const Entry& e);

  double now_ = 0.0;
  std::uint64_t next_order_ = 0;
  EventId next_id_ = 1;
  std::size_t foreground_ = 0;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue_;
  std::map<EventId, Scheduled> live_;
  EventLog log_;
  RngStreams rng_;
  std::vector<Listener> listeners_;
};

enum class DeviceKind { Transceiver, Ofs, Wss, NsDeploy, L2Flow, ControlHop };

const char* to_string(DeviceKind k);

struct LatencyRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct LatencyContext {
  bool modulation_change = false;
  int passband_changes = 0;
};

struct LatencyModel {
  LatencyRange transceiver_basic{45.0, 55.0};
  LatencyRange transceiver_modulation_change{80.0, 90.0};
  double ofs_s = 5.0;
  double wss_base_s = 8.0;
  double wss_per_passband_s = 2.0;
  LatencyRange ns_deploy{25.0, 35.0};
  LatencyRange l2_flow{2.0, 4.0};
  LatencyRange control_hop{0.05, 0.2};
  // T(loss) = max(floor, intercept + slope * loss)
  double qkd_intercept_s = -125.6;
  double qkd_slope_s_per_db = 29.5;
  double qkd_floor_s = 10.0;

  double sample(DeviceKind kind, const LatencyContext& ctx, RngStreams& rng, const std::string& agent) const;
  double qkd_init_time(double path_loss_db) const;

  /// Dotted overrides such as "transceiver_basic.lo=40" or "ofs_s=4".
  void apply_override(const std::string& key, double value);
  void validate() const;
  nlohmann::json to_json() const;
};

}  // namespace qsim
