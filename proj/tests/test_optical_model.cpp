#include <doctest.h>

#include <cmath>
#include <random>

#include "qsim/optical_model.hpp"
#include "test_support.hpp"

using namespace qsim;
using qsim::test::shipped_table;

TEST_CASE("aggregate coexistence power uses 10*log10(n)") {
  CHECK(aggregate_coexistence_power(-27.5, 1) == doctest::Approx(-27.5));
  CHECK(std::abs(aggregate_coexistence_power(-27.5, 2) - -24.49) <= 0.01);
  CHECK(std::abs(aggregate_coexistence_power(-27.5, 3) - -22.73) <= 0.01);
  CHECK_THROWS_AS(aggregate_coexistence_power(-27.5, 0), Error);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> p(-40.0, 5.0);
  for (int i = 0; i < 200; ++i) {
    const double v = p(rng);
    CHECK(aggregate_coexistence_power(v, 1) == v);
  }
}

TEST_CASE("AWG loss is quadratic around the optimal temperature") {
  AwgModel awg;
  CHECK(awg_quantum_loss(awg.optimal_temperature, awg) == doctest::Approx(2.9));
  // 2.9 + 1.5 * 2^2
  CHECK(awg_quantum_loss(awg.optimal_temperature + 2.0, awg) == doctest::Approx(8.9));
  for (double d : {0.1, 0.7, 3.0, 11.0}) {
    CHECK(awg_quantum_loss(awg.optimal_temperature + d, awg) ==
          doctest::Approx(awg_quantum_loss(awg.optimal_temperature - d, awg)));
  }
  // Dense grid: the minimum sits exactly at the optimum and loss grows with |dT|.
  double best_t = 0.0;
  double best = 1e9;
  for (int k = -2000; k <= 2000; ++k) {
    const double t = awg.optimal_temperature + k * 0.005;
    const double l = awg_quantum_loss(t, awg);
    if (l < best) {
      best = l;
      best_t = t;
    }
  }
  CHECK(best_t == awg.optimal_temperature);
  CHECK(best == awg.insertion_loss_at_optimum_db);
  for (int k = 1; k <= 100; ++k) {
    CHECK(awg_quantum_loss(awg.optimal_temperature + k * 0.1, awg) >
          awg_quantum_loss(awg.optimal_temperature + (k - 1) * 0.1, awg));
  }
}

TEST_CASE("SKR anchors reproduce the measured values") {
  const auto& t = shipped_table();
  using enum PathClass;
  CHECK(estimate_skr_qber(BypassBypass, 1, Modulation::PmQpsk, -28.0, t).skr_bps == 178.0);
  CHECK(estimate_skr_qber(BypassBypass, 1, Modulation::PmQpsk, -25.0, t).skr_bps == doctest::Approx(178.0 * 0.73));
  CHECK(estimate_skr_qber(BypassBypass, 2, Modulation::PmQpsk, -27.5, t).skr_bps == 138.0);
  CHECK(estimate_skr_qber(BypassBypass, 3, Modulation::PmQpsk, -27.5, t).skr_bps == 110.0);
  CHECK(estimate_skr_qber(BypassBypass, 2, Modulation::PmQpsk, -26.0, t).skr_bps == doctest::Approx(117.0).epsilon(0.01));
  CHECK(estimate_skr_qber(BypassBypass, 3, Modulation::PmQpsk, -26.0, t).skr_bps == doctest::Approx(70.0).epsilon(0.01));

  double max_drop = 0.0;
  for (const auto& s : t.series()) {
    if (s.path_class != BypassDrop) continue;
    for (const auto& p : s.points) max_drop = std::max(max_drop, p.skr_bps);
  }
  CHECK(max_drop == 1100.0);
}

TEST_CASE("interpolation is linear between knots and clamped outside") {
  const auto& t = shipped_table();
  // Midpoint between -28 (178) and -25 (129.94).
  auto mid = estimate_skr_qber(PathClass::BypassBypass, 1, Modulation::PmQpsk, -26.5, t);
  CHECK(mid.skr_bps == doctest::Approx(0.5 * (178.0 + 129.94)));
  CHECK(estimate_skr_qber(PathClass::BypassBypass, 1, Modulation::PmQpsk, -28.01, t).skr_bps == 0.0);
  CHECK(estimate_skr_qber(PathClass::BypassBypass, 1, Modulation::PmQpsk, -22.99, t).skr_bps == 0.0);
  CHECK_THROWS_AS(estimate_skr_qber(PathClass::BypassBypass, 3, Modulation::Pm16Qam, -21.0, t), Error);
  try {
    estimate_skr_qber(PathClass::BypassBypass, 4, Modulation::PmQpsk, -25.0, t);
    FAIL("expected unsupported configuration");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnsupportedConfiguration);
  }
}

TEST_CASE("QuantumLink overload reads the coexistence fields") {
  QuantumLink link;
  link.path_class = PathClass::BypassBypass;
  link.n_coexisting = 1;
  link.coexisting_modulation = Modulation::PmQpsk;
  link.per_channel_power_dbm = -28.0;
  CHECK(estimate_skr_qber(link, shipped_table()).skr_bps == 178.0);
}

TEST_CASE("published calibration points match their anchors") {
  struct Anchor {
    PathClass c;
    int n;
    double power;
    double skr;
  };
  const Anchor anchors[] = {
      {PathClass::BypassBypass, 1, -28.0, 178.0},  {PathClass::BypassBypass, 1, -25.0, 129.94},
      {PathClass::BypassBypass, 2, -27.5, 138.0},  {PathClass::BypassBypass, 2, -26.0, 117.3},
      {PathClass::BypassBypass, 3, -27.5, 110.0},  {PathClass::BypassBypass, 3, -26.0, 70.4},
      {PathClass::BypassDrop, 1, -30.0, 1100.0},
  };
  int paper_points = 0;
  for (const auto& s : shipped_table().series()) {
    for (const auto& p : s.points) {
      CHECK(p.qber_provenance == Provenance::Synthetic);
      if (p.provenance != Provenance::Paper) continue;
      ++paper_points;
      bool matched = false;
      for (const auto& a : anchors) {
        matched |= a.c == s.path_class && a.n == s.n_channels && s.modulation == Modulation::PmQpsk &&
                   a.power == p.power_dbm && a.skr == p.skr_bps;
      }
      CHECK_MESSAGE(matched, "unexpected PAPER point at line ", p.line);
    }
  }
  CHECK(paper_points == 7);
}

TEST_CASE("every series is monotone in power (sampled)") {
  std::mt19937_64 rng(2024);
  for (const auto& s : shipped_table().series()) {
    const double lo = s.points.front().power_dbm - 1.0;
    const double hi = s.points.back().power_dbm + 1.0;
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> ps(1000);
    for (auto& p : ps) p = u(rng);
    std::sort(ps.begin(), ps.end());
    SkrQber prev = estimate_skr_qber(s.path_class, s.n_channels, s.modulation, s.points.front().power_dbm, shipped_table());
    for (double p : ps) {
      if (p < s.points.front().power_dbm) continue;
      auto cur = estimate_skr_qber(s.path_class, s.n_channels, s.modulation, p, shipped_table());
      CHECK(cur.skr_bps <= prev.skr_bps);
      CHECK(cur.qber >= prev.qber);
      prev = cur;
    }
  }
}

TEST_CASE("drop-port SKR dominates bypass-bypass at identical configuration") {
  const auto& t = shipped_table();
  for (const auto& s : t.series()) {
    if (s.path_class != PathClass::BypassBypass) continue;
    for (double p = s.points.front().power_dbm - 0.5; p <= s.points.back().power_dbm + 0.5; p += 0.05) {
      const auto bb = estimate_skr_qber(PathClass::BypassBypass, s.n_channels, s.modulation, p, t);
      const auto bd = estimate_skr_qber(PathClass::BypassDrop, s.n_channels, s.modulation, p, t);
      CHECK(bd.skr_bps >= bb.skr_bps);
    }
  }
}

TEST_CASE("coexistence windows") {
  const auto& t = shipped_table();
  BerModel ber;
  auto qpsk = coexistence_window(Modulation::PmQpsk, 1, PathClass::BypassBypass, t, ber);
  REQUIRE(qpsk);
  CHECK(qpsk->min_dbm == -28.0);
  CHECK(qpsk->max_dbm == -23.0);
  CHECK(std::abs(qpsk->width() - 5.0) <= 0.5);

  auto qam16 = coexistence_window(Modulation::Pm16Qam, 1, PathClass::BypassBypass, t, ber);
  REQUIRE(qam16);
  CHECK(qam16->min_dbm == doctest::Approx(-21.4));
  CHECK(std::abs(qam16->width() - 1.0) <= 0.3);

  CHECK_FALSE(coexistence_window(Modulation::Pm16Qam, 3, PathClass::BypassBypass, t, ber));

  // window/estimator consistency on every shipped series
  for (const auto& s : t.series()) {
    auto w = coexistence_window(s.modulation, s.n_channels, s.path_class, t, ber);
    REQUIRE(w);
    CHECK(estimate_skr_qber(s.path_class, s.n_channels, s.modulation, w->min_dbm - 1e-6, t).skr_bps == 0.0);
    CHECK(estimate_skr_qber(s.path_class, s.n_channels, s.modulation, w->min_dbm, t).skr_bps > 0.0);
    CHECK(estimate_skr_qber(s.path_class, s.n_channels, s.modulation, w->max_dbm, t).skr_bps > 0.0);
    OpticalChannel ch;
    ch.modulation = s.modulation;
    CHECK(estimate_prefec_ber(ch, s.path_class, w->min_dbm, ber) < ber.fec_threshold);
  }
}

TEST_CASE("pre-FEC BER model ordering") {
  BerModel ber;
  OpticalChannel qpsk{Frequency::from_thz(195.0), Modulation::PmQpsk, 25.0, -25.0};
  OpticalChannel qam16 = qpsk;
  qam16.modulation = Modulation::Pm16Qam;
  for (double p = -34.0; p < 0.0; p += 0.25) {
    CHECK(estimate_prefec_ber(qpsk, PathClass::BypassBypass, p + 0.25, ber) <=
          estimate_prefec_ber(qpsk, PathClass::BypassBypass, p, ber));
    // denser formats are worse until both saturate at the cap
    CHECK(estimate_prefec_ber(qam16, PathClass::BypassBypass, p, ber) >=
          estimate_prefec_ber(qpsk, PathClass::BypassBypass, p, ber));
    if (estimate_prefec_ber(qpsk, PathClass::BypassBypass, p, ber) < ber.max_ber) {
      CHECK(estimate_prefec_ber(qam16, PathClass::BypassBypass, p, ber) >
            estimate_prefec_ber(qpsk, PathClass::BypassBypass, p, ber));
    }
    CHECK(estimate_prefec_ber(qpsk, PathClass::BypassDrop, p, ber) <=
          estimate_prefec_ber(qpsk, PathClass::BypassBypass, p, ber));
  }
  // 0.04 * 10^(-0.25 * (-25 - -28.5)) = 0.04 * 10^-0.875, evaluated by hand: 5.334086e-3
  const double v = estimate_prefec_ber(qpsk, PathClass::BypassBypass, -25.0, ber);
  CHECK(v == doctest::Approx(5.334086e-3).epsilon(1e-6));
  CHECK(v < ber.fec_threshold);
}

TEST_CASE("loader rejects non-monotone series with the offending line") {
  const char* bad = R"([
  {"path_class": "BYPASS_BYPASS", "n_channels": 1, "modulation": "PM-QPSK", "points": [
    {"power_dbm": -28.0, "skr_bps": 178.0, "qber": 0.03, "provenance": "PAPER"},
    {"power_dbm": -25.0, "skr_bps": 190.0, "qber": 0.06, "provenance": "SYNTHETIC"}
  ]}
])";
  try {
    CalibrationTable::parse(bad, "bad.json");
    FAIL("expected a schema error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SchemaError);
    CHECK(std::string(e.what()).find("bad.json:4:") != std::string::npos);
  }

  const char* qber_bad = R"([
  {"path_class": "BYPASS_DROP", "n_channels": 1, "modulation": "PM-QPSK", "points": [
    {"power_dbm": -28.0, "skr_bps": 178.0, "qber": 0.05, "provenance": "SYNTHETIC"},
    {"power_dbm": -27.0, "skr_bps": 170.0, "qber": 0.06, "provenance": "SYNTHETIC"},
    {"power_dbm": -25.0, "skr_bps": 160.0, "qber": 0.04, "provenance": "SYNTHETIC"}
  ]}
])";
  try {
    CalibrationTable::parse(qber_bad, "q.json");
    FAIL("expected a schema error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("q.json:5:") != std::string::npos);
  }

  CHECK_THROWS_AS(CalibrationTable::parse("[{\"path_class\": \"X\"}]"), Error);
  CHECK_THROWS_AS(CalibrationTable::parse("[1, 2"), Error);
}
