#include "qsim/keystore.hpp"

#include <cmath>
#include <cstdio>

#include <openssl/evp.h>

namespace qsim {

void KeyPool::accrue(double until) {
  if (until < last_update_) fail(ErrorCode::InvalidArgument, "key pool accrual into the past");
  if (flowing_ && rate_ > 0.0) {
    const double exact = rate_ * (until - last_update_) + carry_;
    const double whole = std::floor(exact);
    carry_ = exact - whole;
    const auto bits = static_cast<std::uint64_t>(whole);
    bits_available_ += bits;
    accrued_total_ += bits;
  }
  last_update_ = until;
}

void KeyPool::set_flowing(double now, bool flowing, double rate_bps) {
  accrue(now);
  flowing_ = flowing;
  rate_ = std::max(0.0, rate_bps);
}

std::optional<KeyHandle> KeyPool::draw_key(int key_bits, double now) {
  if (key_bits <= 0) fail(ErrorCode::InvalidArgument, "key size must be positive");
  const auto need = static_cast<std::uint64_t>(key_bits);
  if (bits_available_ < need) return std::nullopt;
  bits_available_ -= need;
  consumed_total_ += need;
  return KeyHandle{next_key_++, key_bits, now};
}

std::optional<double> KeyPool::time_to(std::uint64_t bits) const {
  if (bits_available_ >= bits) return 0.0;
  if (!flowing_ || rate_ <= 0.0) return std::nullopt;
  const double missing = static_cast<double>(bits - bits_available_) - carry_;
  return std::max(0.0, missing / rate_);
}

const char* to_string(SessionState s) {
  switch (s) {
    case SessionState::WaitingFirstKey: return "WAITING_FIRST_KEY";
    case SessionState::Active: return "ACTIVE";
    case SessionState::Starved: return "STARVED";
  }
  return "?";
}

KeyStore::KeyStore(Kernel& kernel, KeyStoreOptions options, Hooks hooks)
    : kernel_(kernel), options_(options), hooks_(std::move(hooks)) {}

void KeyStore::start(const QkdLinkSpec& spec) {
  stop(spec.ins_id, "re-pointed");
  Link link;
  link.spec = spec;
  link.pool_id = "pool-" + std::to_string(++link_counter_);
  link.source = "qkd:" + std::to_string(spec.alice) + "-" + std::to_string(spec.bob);
  pools_.emplace(link.pool_id, KeyPool(link.pool_id, kernel_.now()));

  EncryptorSession s;
  s.ins_id = spec.ins_id;
  s.key_size = options_.key_size;
  s.rekey_interval_s = options_.rekey_interval_s;
  sessions_[spec.ins_id] = s;

  kernel_.emit(link.source, "qkd-start",
               {{"ins", spec.ins_id},
                {"alice", spec.alice},
                {"bob", spec.bob},
                {"path_loss_db", spec.path_loss_db},
                {"init_s", spec.init_time_s},
                {"pool", link.pool_id}});
  const std::string id = spec.ins_id;
  if (spec.fail_during_init) {
    link.timers.push_back(kernel_.schedule(spec.init_time_s / 2.0, [this, id] {
      auto it = links_.find(id);
      if (it == links_.end()) return;
      const std::string source = it->second.source;
      links_.erase(it);
      kernel_.emit(source, "qkd-fail", {{"ins", id}, {"cause", "injected"}});
      if (hooks_.on_failure) hooks_.on_failure(id, "qkd link failed during initialization");
    }));
  } else {
    link.timers.push_back(kernel_.schedule(spec.init_time_s, [this, id] { on_init_done(id); }));
  }
  links_[id] = std::move(link);
}

void KeyStore::on_init_done(const std::string& ins_id) {
  auto& link = links_.at(ins_id);
  link.initialized = true;
  pools_.at(link.pool_id).set_flowing(kernel_.now(), true, link.spec.skr_bps);
  try_first_key(ins_id);
}

void KeyStore::try_first_key(const std::string& ins_id) {
  auto& link = links_.at(ins_id);
  auto& pool = pools_.at(link.pool_id);
  pool.accrue(kernel_.now());
  auto& s = sessions_.at(ins_id);
  if (auto key = pool.draw_key(s.key_size, kernel_.now())) {
    deliver(link, s, *key);
    kernel_.emit(link.source, "qkd-ack", {{"ins", ins_id}, {"key_id", key->id}});
    s.next_rekey_at = kernel_.now() + s.rekey_interval_s;
    link.timers.push_back(kernel_.schedule(s.rekey_interval_s, [this, ins_id] { rekey(ins_id); }, true));
    if (hooks_.on_first_key) hooks_.on_first_key(ins_id);
    return;
  }
  auto wait = pool.time_to(static_cast<std::uint64_t>(s.key_size));
  if (!wait) {
    kernel_.emit(link.source, "key-starved", {{"ins", ins_id}, {"pool_bits", pool.bits_available()}});
    return;
  }
  // floor() can leave the pool one bit short at the exact instant
  link.timers.push_back(kernel_.schedule(std::max(*wait, 1e-6), [this, ins_id] { try_first_key(ins_id); }));
}

void KeyStore::rekey(const std::string& ins_id) {
  auto it = links_.find(ins_id);
  if (it == links_.end()) return;
  auto& link = it->second;
  auto& pool = pools_.at(link.pool_id);
  pool.accrue(kernel_.now());
  auto& s = sessions_.at(ins_id);
  if (auto key = pool.draw_key(s.key_size, kernel_.now())) {
    deliver(link, s, *key);
  } else {
    s.state = SessionState::Starved;  // last key stays in use
    kernel_.emit(link.source, "key-starved", {{"ins", ins_id}, {"pool_bits", pool.bits_available()}});
  }
  s.next_rekey_at = kernel_.now() + s.rekey_interval_s;
  kernel_.emit(link.source, "telemetry-sample", telemetry(ins_id));
  link.timers.push_back(kernel_.schedule(s.rekey_interval_s, [this, ins_id] { rekey(ins_id); }, true));
}

void KeyStore::deliver(Link& link, EncryptorSession& s, const KeyHandle& key) {
  s.current_key = key;
  s.state = SessionState::Active;
  ++s.keys_delivered;
  delivered_bits_ += static_cast<std::uint64_t>(key.bits);
  Payload p{{"ins", s.ins_id},
            {"key_id", key.id},
            {"bits", key.bits},
            {"pool", link.pool_id},
            {"pool_bits", pools_.at(link.pool_id).bits_available()}};
  if (options_.real_cipher) {
    // Stand-in key bytes from the link's own stream; a real deployment reads them from the QKD device.
    std::vector<std::uint8_t> k(static_cast<std::size_t>(key.bits / 8));
    auto& g = kernel_.rng().stream(link.source + "/keys");
    for (auto& b : k) b = static_cast<std::uint8_t>(g() & 0xff);
    const std::vector<std::uint8_t> nonce(12, 0);
    const std::string sample = "ins " + s.ins_id + " sample frame";
    const auto ct = chacha20(k, nonce, 1, {sample.begin(), sample.end()});
    std::string hex;
    char buf[3];
    for (auto b : ct) {
      std::snprintf(buf, sizeof buf, "%02x", b);
      hex += buf;
    }
    p["sample_ciphertext"] = hex;
  }
  kernel_.emit(link.source, "key-delivered", std::move(p));
}

void KeyStore::stop(const std::string& ins_id, const std::string& reason) {
  auto it = links_.find(ins_id);
  if (it == links_.end()) return;
  for (EventId t : it->second.timers) kernel_.cancel(t);
  pools_.at(it->second.pool_id).set_flowing(kernel_.now(), false, 0.0);
  kernel_.emit(it->second.source, "qkd-stop", {{"ins", ins_id}, {"reason", reason}});
  links_.erase(it);
}

void KeyStore::update_rate(const std::string& ins_id, double skr_bps, double qber) {
  auto it = links_.find(ins_id);
  if (it == links_.end()) return;
  it->second.spec.skr_bps = skr_bps;
  it->second.spec.qber = qber;
  if (it->second.initialized) pools_.at(it->second.pool_id).set_flowing(kernel_.now(), true, skr_bps);
}

void KeyStore::settle() {
  for (auto& [id, pool] : pools_) pool.accrue(kernel_.now());
}

const EncryptorSession* KeyStore::session(const std::string& ins_id) const {
  auto it = sessions_.find(ins_id);
  return it == sessions_.end() ? nullptr : &it->second;
}

const KeyPool* KeyStore::pool(const std::string& ins_id) const {
  auto it = links_.find(ins_id);
  if (it == links_.end()) return nullptr;
  return &pools_.at(it->second.pool_id);
}

nlohmann::json KeyStore::telemetry(const std::string& ins_id) const {
  nlohmann::json j{{"ins", ins_id}};
  auto lit = links_.find(ins_id);
  const auto* s = session(ins_id);
  if (lit == links_.end() || s == nullptr) {
    j["qkd"] = "IDLE";
    return j;
  }
  const auto& link = lit->second;
  const auto& pool = pools_.at(link.pool_id);
  j["qkd"] = link.initialized ? "KEYS_FLOWING" : "INITIALIZING";
  j["skr_bps"] = link.initialized ? link.spec.skr_bps : 0.0;
  j["qber"] = link.spec.qber;
  j["pool_bits"] = pool.bits_available();
  j["session"] = to_string(s->state);
  j["keys_delivered"] = s->keys_delivered;
  j["rekey_in_s"] = s->current_key ? std::max(0.0, s->next_rekey_at - kernel_.now()) : s->rekey_interval_s;
  return j;
}

std::vector<std::uint8_t> chacha20(const std::vector<std::uint8_t>& key, const std::vector<std::uint8_t>& nonce,
                                   std::uint32_t counter, const std::vector<std::uint8_t>& data) {
  if (key.size() != 32 || nonce.size() != 12) fail(ErrorCode::InvalidArgument, "chacha20 needs a 256-bit key and 96-bit nonce");
  // OpenSSL takes a 16-byte IV: little-endian block counter, then the nonce.
  std::uint8_t iv[16];
  for (int i = 0; i < 4; ++i) iv[i] = static_cast<std::uint8_t>((counter >> (8 * i)) & 0xff);
  std::copy(nonce.begin(), nonce.end(), iv + 4);
  std::vector<std::uint8_t> out(data.size());
  EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
  int len = 0;
  const bool ok = ctx != nullptr && EVP_EncryptInit_ex(ctx, EVP_chacha20(), nullptr, key.data(), iv) == 1 &&
                  EVP_EncryptUpdate(ctx, out.data(), &len, data.data(), static_cast<int>(data.size())) == 1;
  EVP_CIPHER_CTX_free(ctx);
  if (!ok) fail(ErrorCode::InvalidArgument, "chacha20 encryption failed");
  return out;
}

}  // namespace qsim
