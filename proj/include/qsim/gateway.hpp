#pragma once

// HTTP front end under /v1. Every mutation runs on one worker thread that
// owns the kernel; handlers read published snapshots and the event store.

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsim/sim_kernel.hpp"

namespace qsim {

enum class SessionMode { Fast, Step, Realtime };

const char* to_string(SessionMode m);
SessionMode session_mode_from_string(const std::string& s);

struct GatewayConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 = any free port
  SessionMode mode = SessionMode::Realtime;
  double time_scale = 10.0;  // simulated seconds per wall-clock second
  std::uint64_t seed = 1;
  std::filesystem::path data_dir;  // empty = default data dir
  std::vector<std::string> overrides;
};

/// Append-only event tail shared by the worker and stream clients.
class EventStore {
 public:
  void append(const SimEvent& e);
  void reset(std::uint64_t run_id);
  std::uint64_t run_id() const;
  std::size_t size() const;
  /// Events with seq >= since, at most `limit`.
  std::vector<SimEvent> since(std::uint64_t since, std::size_t limit) const;
  /// Blocks until an event with seq >= since exists, the run changes or the
  /// timeout passes.
  std::vector<SimEvent> wait_since(std::uint64_t since, std::size_t limit, int timeout_ms,
                                   std::uint64_t& run_id_out) const;

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::vector<SimEvent> events_;
  std::uint64_t run_id_ = 1;
};

class Gateway {
 public:
  explicit Gateway(GatewayConfig config);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Binds and serves until stop(); returns false on bind failure.
  bool listen();
  /// Binds and serves on a background thread; returns the bound port.
  int start();
  void stop();

  const EventStore& events() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace qsim
