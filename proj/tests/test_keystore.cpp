#include <doctest.h>

#include "qsim/keystore.hpp"

using namespace qsim;

TEST_CASE("accrual") {
  KeyPool p("l", 0.0);
  p.set_flowing(0.0, true, 178.0);
  p.accrue(10.0);
  CHECK(p.bits_available() == 1780);
  p.accrue(10.0);
  CHECK(p.bits_available() == 1780);
  CHECK_THROWS_AS(p.accrue(9.0), Error);

  KeyPool idle("i", 0.0);
  idle.set_flowing(0.0, false, 0.0);
  idle.accrue(1000.0);
  CHECK(idle.bits_available() == 0);
  KeyPool dead("d", 0.0);
  dead.set_flowing(0.0, true, 0.0);
  dead.accrue(1000.0);
  CHECK(dead.bits_available() == 0);
}

TEST_CASE("piecewise accrual equals one-shot accrual") {
  KeyPool a("a", 0.0);
  KeyPool b("b", 0.0);
  a.set_flowing(0.0, true, 117.3);
  b.set_flowing(0.0, true, 117.3);
  for (double t : {0.3, 1.1, 1.15, 7.0, 7.01, 33.3, 60.0}) a.accrue(t);
  b.accrue(60.0);
  CHECK(a.bits_available() == b.bits_available());
  CHECK(b.bits_available() == 7038);  // floor(117.3 * 60)
}

TEST_CASE("drawing keys") {
  KeyPool p("l", 0.0);
  p.set_flowing(0.0, true, 178.0);
  p.accrue(10.0);
  auto k = p.draw_key(256, 10.0);
  REQUIRE(k);
  CHECK(p.bits_available() == 1524);
  CHECK(p.consumed_total() == 256);

  KeyPool q("q", 0.0);
  q.set_flowing(0.0, true, 10.0);
  q.accrue(10.0);
  CHECK(q.bits_available() == 100);
  CHECK_FALSE(q.draw_key(256, 10.0));
  CHECK(q.bits_available() == 100);
  CHECK(q.time_to(256) == doctest::Approx(15.6));
}

namespace {

struct Harness {
  Kernel kernel{1};
  std::vector<std::pair<std::string, double>> acks;
  std::vector<std::string> failures;
  KeyStore store{kernel, KeyStoreOptions{},
                 KeyStore::Hooks{[this](const std::string& id) { acks.push_back({id, kernel.now()}); },
                                 [this](const std::string& id, const std::string&) { failures.push_back(id); }}};

  std::size_t count(const std::string& kind) const {
    std::size_t n = 0;
    for (const auto& e : kernel.log().events()) n += e.kind == kind ? 1 : 0;
    return n;
  }
};

}  // namespace

TEST_CASE("first key acknowledgment after initialization") {
  Harness h;
  h.store.start({"NS3", 2, 4, 7.65, 100.0, 950.0, 0.03});
  CHECK(h.count("qkd-start") == 1);
  h.kernel.run();
  REQUIRE(h.acks.size() == 1);
  // 256 bits at 950 bps after a 100 s init
  CHECK(h.acks[0].second == doctest::Approx(100.0 + 256.0 / 950.0).epsilon(1e-6));
  CHECK(h.count("qkd-ack") == 1);
  CHECK(h.count("key-delivered") == 1);
  const auto* s = h.store.session("NS3");
  REQUIRE(s);
  CHECK(s->state == SessionState::Active);

  h.kernel.run_until(1000.0);
  CHECK(h.count("qkd-ack") == 1);
  CHECK(h.count("key-delivered") > 10);
  h.store.settle();
  const auto* pool = h.store.pool("NS3");
  REQUIRE(pool);
  CHECK(pool->consumed_total() + pool->bits_available() == pool->accrued_total());
  CHECK(h.store.delivered_bits() == pool->consumed_total());
  // floor(950 * (1000 - 100))
  CHECK(pool->accrued_total() == 855000);
  CHECK(h.store.telemetry("NS3")["qkd"] == "KEYS_FLOWING");
}

TEST_CASE("slow link starves but stays up") {
  Harness h;
  h.store.start({"X", 1, 3, 10.7, 10.0, 3.0, 0.08});
  h.kernel.run();
  REQUIRE(h.acks.size() == 1);
  h.kernel.run_until(600.0);
  CHECK(h.count("key-starved") > 0);
  CHECK(h.store.session("X")->state != SessionState::WaitingFirstKey);
  CHECK(h.store.session("X")->current_key.has_value());
  CHECK(h.store.active("X"));
}

TEST_CASE("stop and failure") {
  Harness h;
  h.store.start({"A", 1, 3, 10.7, 190.0, 138.0, 0.03});
  h.kernel.run_until(50.0);
  h.store.stop("A", "terminated");
  h.store.stop("A", "terminated");
  h.kernel.run();
  CHECK(h.acks.empty());
  CHECK(h.count("qkd-stop") == 1);

  QkdLinkSpec bad{"B", 2, 4, 7.65, 100.0, 950.0, 0.02, true};
  h.store.start(bad);
  h.kernel.run();
  CHECK(h.failures == std::vector<std::string>{"B"});
  CHECK(h.count("qkd-fail") == 1);
  CHECK_FALSE(h.store.active("B"));
}

TEST_CASE("chacha20 reference vector") {
  std::vector<std::uint8_t> key(32);
  for (int i = 0; i < 32; ++i) key[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i);
  const std::vector<std::uint8_t> nonce{0, 0, 0, 0, 0, 0, 0, 0x4a, 0, 0, 0, 0};
  const std::string pt =
      "Ladies and Gentlemen of the class of '99: If I could offer you only one tip for the future, sunscreen would "
      "be it.";
  const auto ct = chacha20(key, nonce, 1, {pt.begin(), pt.end()});
  // independently computed with Python's cryptography package
  const std::vector<std::uint8_t> head{0x6e, 0x2e, 0x35, 0x9a, 0x25, 0x68, 0xf9, 0x80,
                                       0x41, 0xba, 0x07, 0x28, 0xdd, 0x0d, 0x69, 0x81};
  CHECK(std::vector<std::uint8_t>(ct.begin(), ct.begin() + 16) == head);
  CHECK(ct.back() == 0x4d);
  const auto back = chacha20(key, nonce, 1, ct);
  CHECK(std::string(back.begin(), back.end()) == pt);
}

TEST_CASE("real cipher mode attaches a sample ciphertext") {
  Kernel k(9);
  KeyStoreOptions opt;
  opt.real_cipher = true;
  KeyStore store(k, opt, {});
  store.start({"S", 2, 4, 7.65, 10.0, 1000.0, 0.02});
  k.run();
  bool found = false;
  for (const auto& e : k.log().events()) {
    if (e.kind == "key-delivered") found = e.payload.contains("sample_ciphertext");
  }
  CHECK(found);
}
