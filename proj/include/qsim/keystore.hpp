#pragma once

// Key pools fed by simulated QKD links and the per-iNS encryptor sessions
// that draw from them.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsim/sim_kernel.hpp"

namespace qsim {

struct KeyHandle {
  std::uint64_t id = 0;
  int bits = 0;
  double issued_at = 0.0;
};

class KeyPool {
 public:
  KeyPool() = default;
  KeyPool(std::string link_id, double now) : link_id_(std::move(link_id)), last_update_(now) {}

  const std::string& link_id() const { return link_id_; }
  std::uint64_t bits_available() const { return bits_available_; }
  std::uint64_t consumed_total() const { return consumed_total_; }
  std::uint64_t accrued_total() const { return accrued_total_; }
  double accrual_rate() const { return flowing_ ? rate_ : 0.0; }
  bool flowing() const { return flowing_; }
  double last_update() const { return last_update_; }

  /// Adds floor(rate * elapsed) while keys flow; the fractional remainder is
  /// carried so piecewise accrual equals one accrual over the whole interval.
  void accrue(double until);
  /// Accrues to `now` first, then switches rate.
  void set_flowing(double now, bool flowing, double rate_bps);

  /// Removes key_bits on success; leaves the pool untouched otherwise.
  std::optional<KeyHandle> draw_key(int key_bits, double now);

  /// Seconds of flow needed from last_update until `bits` are available.
  std::optional<double> time_to(std::uint64_t bits) const;

 private:
  std::string link_id_;
  std::uint64_t bits_available_ = 0;
  std::uint64_t consumed_total_ = 0;
  std::uint64_t accrued_total_ = 0;
  double rate_ = 0.0;
  double carry_ = 0.0;
  bool flowing_ = false;
  double last_update_ = 0.0;
  std::uint64_t next_key_ = 1;
};

enum class SessionState { WaitingFirstKey, Active, Starved };

const char* to_string(SessionState s);

struct EncryptorSession {
  std::string ins_id;
  std::string cipher = "chacha20";
  int key_size = 256;
  double rekey_interval_s = 60.0;
  SessionState state = SessionState::WaitingFirstKey;
  std::optional<KeyHandle> current_key;
  std::uint64_t keys_delivered = 0;
  double next_rekey_at = 0.0;
};

struct KeyStoreOptions {
  int key_size = 256;
  double rekey_interval_s = 60.0;
  /// Encrypt a sample payload with each delivered key (OpenSSL ChaCha20).
  bool real_cipher = false;
};

struct QkdLinkSpec {
  std::string ins_id;
  int alice = 0;
  int bob = 0;
  double path_loss_db = 0.0;
  double init_time_s = 0.0;
  double skr_bps = 0.0;
  double qber = 0.0;
  bool fail_during_init = false;
};

/// Runs QKD pairs on the kernel timeline: initialization, key accrual, the
/// first-key acknowledgment and periodic rekeying.
class KeyStore {
 public:
  struct Hooks {
    std::function<void(const std::string& ins_id)> on_first_key;
    std::function<void(const std::string& ins_id, const std::string& cause)> on_failure;
  };

  KeyStore(Kernel& kernel, KeyStoreOptions options, Hooks hooks);

  /// Emits qkd-start now; keys start flowing after init_time_s.
  void start(const QkdLinkSpec& spec);
  /// Emits qkd-stop; the pool stops accruing. No-op without an active link.
  void stop(const std::string& ins_id, const std::string& reason);
  /// New SKR for a running link (coexisting traffic changed).
  void update_rate(const std::string& ins_id, double skr_bps, double qber);
  bool active(const std::string& ins_id) const { return links_.count(ins_id) != 0; }

  /// Brings every flowing pool up to the current time.
  void settle();

  const EncryptorSession* session(const std::string& ins_id) const;
  const KeyPool* pool(const std::string& ins_id) const;
  const std::map<std::string, KeyPool>& pools() const { return pools_; }
  std::uint64_t delivered_bits() const { return delivered_bits_; }

  nlohmann::json telemetry(const std::string& ins_id) const;

 private:
  struct Link {
    QkdLinkSpec spec;
    std::string pool_id;
    std::string source;
    bool initialized = false;
    std::vector<EventId> timers;
  };

  void on_init_done(const std::string& ins_id);
  void try_first_key(const std::string& ins_id);
  void rekey(const std::string& ins_id);
  void deliver(Link& link, EncryptorSession& s, const KeyHandle& key);

  Kernel& kernel_;
  KeyStoreOptions options_;
  Hooks hooks_;
  std::map<std::string, Link> links_;
  std::map<std::string, KeyPool> pools_;
  std::map<std::string, EncryptorSession> sessions_;
  std::uint64_t delivered_bits_ = 0;
  std::uint64_t link_counter_ = 0;
};

/// ChaCha20 (RFC 8439 block function, 32-bit counter) via OpenSSL.
std::vector<std::uint8_t> chacha20(const std::vector<std::uint8_t>& key, const std::vector<std::uint8_t>& nonce,
                                   std::uint32_t counter, const std::vector<std::uint8_t>& data);

}  // namespace qsim
